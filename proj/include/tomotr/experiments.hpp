#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tomotr/phantom.hpp"
#include "tomotr/solvers.hpp"

namespace tomotr {

/// Baseline solver settings (bidiagonalization least squares, warm-started
/// at the backprojection image).
struct LsqrConfig {
    int max_iters = 200;
    double atol = 1e-8;
};

enum class SolverKind { tr, lsqr };

/// One fully-specified reconstruction problem: phantom, scan, noise and
/// solver. This is the unit the CLI subcommands and the studies run.
struct RunConfig {
    std::string phantom = "circle-triangle";
    int grid_size = 64;
    int num_angles = 30;
    int num_beamlets = 91;
    SolverKind solver = SolverKind::tr;
    TRConfig tr;
    LsqrConfig lsqr;
    double noise_percent = 0.0;
    std::uint64_t seed = 0;
};

/// Everything a single run produces. `rmse_reported` is measured on the
/// reconstruction after clamping to the PGM output range, so it matches
/// what a consumer recovers from the written file; `rmse_raw` is the
/// unclamped value. clamp_max = 1.5 * max(ground truth).
struct RunOutcome {
    Image reconstruction;
    Image ground_truth;
    std::vector<ReconRecord> history;
    double rmse_raw = 0.0;
    double rmse_reported = 0.0;
    double clamp_max = 0.0;
    int iterations = 0;
    bool converged = false;
    bool diverged = false;
};

/// Builds geometry + phantom + (optionally noisy) sinogram and runs the
/// configured solver. The sinogram realization depends only on
/// (geometry, phantom, noise_percent, seed).
RunOutcome run_reconstruction(const RunConfig& cfg);

/// Same, but reuses an already-built system tensor and sinogram (shared
/// realizations across solvers in the studies).
RunOutcome run_solver(const SparseSystemTensor& tensor, const Sinogram& sinogram,
                      const Image& ground_truth, const RunConfig& cfg);

struct SweepCell {
    int num_angles = 0;
    std::string solver;      // "tr" or "lsqr"
    int rank = 0;            // 0 for lsqr rows
    double rmse = 0.0;
    int iterations = 0;
    std::string status;      // "ok" or "error:<reason>"
};

struct SweepOptions {
    std::string phantom = "circle-triangle";
    int grid_size = 64;
    int num_beamlets = 91;
    std::vector<int> angle_counts = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    std::vector<int> ranks = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    ElasticNetConfig penalty;        // default rho = 0: unregularized sweep
    double tr_tol = 1e-4;
    int tr_max_iters = 100;
    int tr_subsolver_max_sweeps = 300;
    LsqrConfig lsqr;
    int threads = 0;                 // 0 = hardware concurrency
};

/// One reconstruction per (angle count, rank) plus one LSQR run per angle
/// count. Cells are independent and run on a small work pool; rows come
/// back in grid order regardless of completion order. Failed cells carry
/// an error status instead of aborting the sweep.
std::vector<SweepCell> run_angle_sweep(const SweepOptions& opts);

struct NoiseStudyOptions {
    std::string phantom = "circle-triangle";
    int grid_size = 64;
    int num_angles = 30;
    int num_beamlets = 91;
    std::vector<double> noise_levels = {0.0, 0.01, 0.02};
    TRConfig tr;
    LsqrConfig lsqr;
    std::uint64_t seed = 0;
};

struct NoiseStudyRow {
    double noise_percent = 0.0;
    RunOutcome tr;
    RunOutcome lsqr;
};

/// For each noise level, draws one sinogram realization (seed + level
/// index) and reconstructs it with both solvers.
std::vector<NoiseStudyRow> run_noise_study(const NoiseStudyOptions& opts);

/// Deterministic 16-bit PGM of a reconstruction clamped to
/// [0, clamp_max], plus a JSON sidecar recording the clamp bounds.
void write_reconstruction_pgm(const Image& reconstruction, double clamp_max,
                              const std::filesystem::path& path);

void write_sweep_csv(const std::vector<SweepCell>& rows, const std::filesystem::path& path);

}  // namespace tomotr
