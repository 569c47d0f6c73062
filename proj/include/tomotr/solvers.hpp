#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tomotr/cp.hpp"
#include "tomotr/geometry.hpp"

namespace tomotr {

/// Thrown when a solver produces a non-finite objective or an iteration
/// breaks down; the CLI maps it to exit code 2.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Mixed L1/L2 penalty weights. `lambda` in [1,2] blends pure lasso
/// (lambda=1) into pure ridge (lambda=2); `rho` scales the whole term.
struct ElasticNetConfig {
    double rho = 0.0;
    double lambda = 2.0;

    void validate() const;
};

enum class FactorInit { backprojection, provided, random };

/// Alternating solver settings; defaults follow the reference setup
/// (at most 100 sweeps, absolute objective-change tolerance 1e-4).
struct TRConfig {
    int rank = 1;
    ElasticNetConfig penalty;
    int max_iters = 100;
    double tol = 1e-4;
    FactorInit init = FactorInit::backprojection;
    std::uint64_t seed = 0;                      // used by FactorInit::random
    std::optional<CPFactorPair> init_factors;    // used by FactorInit::provided
    // Backprojection init: the raw adjoint image is refined by this many
    // least-squares iterations before the truncated-SVD split. The raw
    // adjoint's leading subspace is blur-dominated and strands the
    // alternating solver in poor stationary points (measured); a short
    // refinement fixes that. 0 = split the raw adjoint image.
    int init_refine_iters = 20;
    // Per-half-step sweep budget for the subsolver. Well below the
    // subsolver's own 1e4 cap: cheaper and, measured across phantoms,
    // never worse at the run level.
    int subsolver_max_sweeps = 300;
};

/// One convergence-log row. `objective` always equals datafit + penalty;
/// rmse is NaN when no ground truth was supplied.
struct ReconRecord {
    int iteration = 0;
    double objective = 0.0;
    double datafit = 0.0;
    double penalty = 0.0;
    double rmse = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
};

/// rho * ((lambda-1)/2 * ||w||_2^2 + (2-lambda) * ||w||_1).
double elastic_net_penalty(const Eigen::VectorXd& w, const ElasticNetConfig& cfg);

struct ObjectiveParts {
    double total = 0.0;
    double datafit = 0.0;
    double penalty = 0.0;
};

/// datafit = ||forward_project(L, cp_compose(f)) - s||^2, penalty summed
/// over every factor column.
ObjectiveParts evaluate_objective(const SparseSystemTensor& tensor, const Sinogram& sinogram,
                                  const CPFactorPair& factors, const ElasticNetConfig& cfg);

/// Minimize ||A w - s||^2 + rho((lambda-1)/2 ||w||^2 + (2-lambda)||w||_1)
/// by cyclic coordinate descent with soft-threshold updates, warm-started
/// at w_init. Stops when the largest coordinate change in a sweep falls
/// below 1e-10, capped at max_sweeps (1e4 by default).
Eigen::VectorXd solve_elastic_net(const Eigen::MatrixXd& A, const Eigen::VectorXd& s,
                                  const ElasticNetConfig& cfg, Eigen::VectorXd w_init,
                                  int max_sweeps = 10000);

struct TRResult {
    CPFactorPair factors;
    Image image;
    std::vector<ReconRecord> history;
    bool converged = false;   // stopped via the objective-change test
    bool diverged = false;    // objective rose by >1e-6 relative at some sweep
    int iterations = 0;
};

/// Alternating elastic-net reconstruction of a rank-R factor pair:
/// initialize (backprojection by default: truncated SVD of L^T s), then
/// alternately re-solve each factor against the design matrix of the
/// other until the objective change drops below cfg.tol or cfg.max_iters
/// is reached. Throws NumericalError if the objective turns non-finite.
TRResult tr_reconstruct(const SparseSystemTensor& tensor, const Sinogram& sinogram,
                        const TRConfig& cfg, const Image* ground_truth = nullptr);

/// Matrix-free linear map with explicit adjoint.
struct LinearOperator {
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply_adjoint;

    static LinearOperator from_dense(const Eigen::MatrixXd& A);
    /// Forward/back projection acting on column-major vectorized images.
    static LinearOperator from_system(const SparseSystemTensor& tensor);
};

struct LsqrResult {
    Eigen::VectorXd x;
    std::vector<ReconRecord> history;
    bool converged = false;
    int iterations = 0;
};

/// Golub-Kahan bidiagonalization least-squares solver. Starts from zero;
/// a warm start x0 is honored by solving for the residual system and
/// adding x0 back. Records ||Ax-s||^2 per iteration (and RMSE against
/// `ground_truth` interpreted as a same-length vector, over sqrt(n)).
LsqrResult lsqr_solve(const LinearOperator& A, const Eigen::VectorXd& s, int max_iters,
                      double atol, const Eigen::VectorXd* x0 = nullptr,
                      const Eigen::VectorXd* ground_truth = nullptr);

/// CSV stream "iter,objective,datafit,penalty,rmse,seconds". Wall-clock
/// seconds are nondeterministic, so they serialize as 0 unless
/// include_timing is set; see README on reproducible outputs.
void save_history_csv(const std::vector<ReconRecord>& records, const std::filesystem::path& path,
                      bool include_timing = false);

/// Flat "key=value" file, one pair per line, '#' comments allowed.
std::map<std::string, std::string> load_key_value_file(const std::filesystem::path& path);

/// Builds a TRConfig from keys rank, lambda, rho, eps, max-iters, seed,
/// init (subset allowed; missing keys keep defaults).
TRConfig tr_config_from_map(const std::map<std::string, std::string>& kv);

}  // namespace tomotr
