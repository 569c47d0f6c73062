#include "tomotr/solvers.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "tomotr/io_util.hpp"
#include "tomotr/phantom.hpp"

namespace tomotr {

void ElasticNetConfig::validate() const {
    if (!(rho >= 0.0)) {
        throw std::invalid_argument("ElasticNetConfig: rho must be nonnegative");
    }
    if (!(lambda >= 1.0 && lambda <= 2.0)) {
        throw std::invalid_argument("ElasticNetConfig: lambda must lie in [1,2]");
    }
}

double elastic_net_penalty(const Eigen::VectorXd& w, const ElasticNetConfig& cfg) {
    cfg.validate();
    if (!w.allFinite()) {
        throw std::invalid_argument("elastic_net_penalty: non-finite input");
    }
    return cfg.rho * (0.5 * (cfg.lambda - 1.0) * w.squaredNorm() +
                      (2.0 - cfg.lambda) * w.lpNorm<1>());
}

ObjectiveParts evaluate_objective(const SparseSystemTensor& tensor, const Sinogram& sinogram,
                                  const CPFactorPair& factors, const ElasticNetConfig& cfg) {
    factors.validate();
    const Sinogram predicted = forward_project(tensor, cp_compose(factors));
    if (predicted.size() != sinogram.size()) {
        throw std::invalid_argument("evaluate_objective: sinogram length mismatch");
    }
    ObjectiveParts parts;
    parts.datafit = (predicted.values - sinogram.values).squaredNorm();
    for (int r = 0; r < factors.rank(); ++r) {
        parts.penalty += elastic_net_penalty(factors.W1.col(r), cfg);
        parts.penalty += elastic_net_penalty(factors.W2.col(r), cfg);
    }
    parts.total = parts.datafit + parts.penalty;
    return parts;
}

Eigen::VectorXd solve_elastic_net(const Eigen::MatrixXd& A, const Eigen::VectorXd& s,
                                  const ElasticNetConfig& cfg, Eigen::VectorXd w,
                                  int max_sweeps) {
    cfg.validate();
    if (A.cols() != w.size()) {
        throw std::invalid_argument("solve_elastic_net: w_init length must equal A columns");
    }
    if (A.rows() != s.size()) {
        throw std::invalid_argument("solve_elastic_net: rhs length must equal A rows");
    }
    if (!A.allFinite() || !s.allFinite() || !w.allFinite()) {
        throw std::invalid_argument("solve_elastic_net: non-finite input");
    }

    constexpr double kCoordTol = 1e-10;
    if (max_sweeps < 1) {
        throw std::invalid_argument("solve_elastic_net: max_sweeps must be >= 1");
    }
    const Eigen::Index P = A.cols();
    const double threshold = 0.5 * cfg.rho * (2.0 - cfg.lambda);
    const double ridge = 0.5 * cfg.rho * (cfg.lambda - 1.0);

    auto shrink = [threshold, ridge](double g, double col_sq) {
        const double denom = col_sq + ridge;
        if (denom <= 0.0 || std::abs(g) <= threshold) return 0.0;
        return (g > 0.0 ? g - threshold : g + threshold) / denom;
    };

    if (A.rows() >= P / 2) {
        // normal-equation form: O(P) per coordinate once AtA is built
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(P, P);
        gram.selfadjointView<Eigen::Lower>().rankUpdate(A.transpose());
        gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
        const Eigen::VectorXd ats = A.transpose() * s;
        Eigen::VectorXd gram_w = gram * w;

        for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
            double max_change = 0.0;
            for (Eigen::Index p = 0; p < P; ++p) {
                const double g = ats[p] - gram_w[p] + gram(p, p) * w[p];
                const double w_new = shrink(g, gram(p, p));
                const double delta = w_new - w[p];
                if (delta != 0.0) {
                    gram_w.noalias() += delta * gram.col(p);
                    w[p] = w_new;
                    max_change = std::max(max_change, std::abs(delta));
                }
            }
            if (max_change < kCoordTol) break;
            if (sweep % 64 == 0) {
                gram_w.noalias() = gram * w;  // shed accumulated roundoff
            }
        }
        return w;
    }

    // wide problems: track the residual instead of the normal equations
    const Eigen::VectorXd col_sq = A.colwise().squaredNorm();
    Eigen::VectorXd residual = s - A * w;
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index p = 0; p < P; ++p) {
            // correlation with the residual that excludes coordinate p
            const double g = A.col(p).dot(residual) + col_sq[p] * w[p];
            const double w_new = shrink(g, col_sq[p]);
            const double delta = w_new - w[p];
            if (delta != 0.0) {
                residual.noalias() -= delta * A.col(p);
                w[p] = w_new;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        if (max_change < kCoordTol) break;
        if (sweep % 64 == 0) {
            residual = s - A * w;  // shed accumulated roundoff
        }
    }
    return w;
}

namespace {

CPFactorPair initial_factors(const SparseSystemTensor& tensor, const Sinogram& sinogram,
                             const TRConfig& cfg) {
    const int K = tensor.grid_size();
    const int R = cfg.rank;
    CPFactorPair f;
    switch (cfg.init) {
        case FactorInit::provided: {
            if (!cfg.init_factors) {
                throw std::invalid_argument("tr_reconstruct: init=provided but no factors given");
            }
            f = *cfg.init_factors;
            break;
        }
        case FactorInit::random: {
            GaussianSampler noise(cfg.seed);
            f.W1.resize(K, R);
            f.W2.resize(K, R);
            for (int r = 0; r < R; ++r) {
                for (int i = 0; i < K; ++i) f.W1(i, r) = 0.1 * noise.next();
            }
            for (int r = 0; r < R; ++r) {
                for (int i = 0; i < K; ++i) f.W2(i, r) = 0.1 * noise.next();
            }
            break;
        }
        case FactorInit::backprojection: {
            // closest factorized form of the (optionally refined) adjoint
            // image: split its leading R singular triplets evenly between
            // the two factors
            Image start = back_project(tensor, sinogram);
            if (cfg.init_refine_iters > 0) {
                const auto op = LinearOperator::from_system(tensor);
                const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(start.data(),
                                                                             start.size());
                LsqrResult refined =
                    lsqr_solve(op, sinogram.values, cfg.init_refine_iters, 1e-8, &x0);
                start = Eigen::Map<const Image>(refined.x.data(), K, K);
            }
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(start,
                                                  Eigen::ComputeThinU | Eigen::ComputeThinV);
            const Eigen::VectorXd scale = svd.singularValues().head(R).cwiseSqrt();
            f.W1 = svd.matrixU().leftCols(R) * scale.asDiagonal();
            f.W2 = svd.matrixV().leftCols(R) * scale.asDiagonal();
            break;
        }
    }
    if (f.W1.rows() != K || f.W1.cols() != R) {
        throw std::invalid_argument("tr_reconstruct: initial factors have wrong shape");
    }
    f.validate();
    return f;
}

double image_rmse_or_nan(const CPFactorPair& f, const Image* ground_truth) {
    if (ground_truth == nullptr) return std::numeric_limits<double>::quiet_NaN();
    return rmse(cp_compose(f), *ground_truth);
}

}  // namespace

TRResult tr_reconstruct(const SparseSystemTensor& tensor, const Sinogram& sinogram,
                        const TRConfig& cfg, const Image* ground_truth) {
    cfg.penalty.validate();
    if (cfg.rank < 1 || cfg.rank > tensor.grid_size()) {
        throw std::invalid_argument("tr_reconstruct: rank must lie in [1, K]");
    }
    if (cfg.max_iters < 1) {
        throw std::invalid_argument("tr_reconstruct: max_iters must be >= 1");
    }
    if (!(cfg.tol > 0.0)) {
        throw std::invalid_argument("tr_reconstruct: tol must be positive");
    }
    if (sinogram.size() != tensor.num_rays()) {
        throw std::invalid_argument("tr_reconstruct: sinogram length does not match tensor");
    }

    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&t0]() {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    TRResult result;
    result.factors = initial_factors(tensor, sinogram, cfg);

    ObjectiveParts parts = evaluate_objective(tensor, sinogram, result.factors, cfg.penalty);
    result.history.push_back({0, parts.total, parts.datafit, parts.penalty,
                              image_rmse_or_nan(result.factors, ground_truth), elapsed()});

    double previous = parts.total;
    for (int k = 1; k <= cfg.max_iters; ++k) {
        {
            Eigen::MatrixXd A = assemble_design(tensor, result.factors.W2, 1);
            Eigen::Map<Eigen::VectorXd> w1(result.factors.W1.data(), result.factors.W1.size());
            w1 = solve_elastic_net(A, sinogram.values, cfg.penalty, w1, cfg.subsolver_max_sweeps);
        }
        {
            Eigen::MatrixXd A = assemble_design(tensor, result.factors.W1, 2);
            Eigen::Map<Eigen::VectorXd> w2(result.factors.W2.data(), result.factors.W2.size());
            w2 = solve_elastic_net(A, sinogram.values, cfg.penalty, w2, cfg.subsolver_max_sweeps);
        }

        parts = evaluate_objective(tensor, sinogram, result.factors, cfg.penalty);
        if (!std::isfinite(parts.total)) {
            throw NumericalError("tr_reconstruct: objective became non-finite at iteration " +
                                 std::to_string(k));
        }
        result.history.push_back({k, parts.total, parts.datafit, parts.penalty,
                                  image_rmse_or_nan(result.factors, ground_truth), elapsed()});
        result.iterations = k;

        if (parts.total - previous > 1e-6 * std::max(1.0, std::abs(previous))) {
            result.diverged = true;  // subsolver tolerance too loose; keep going
        }
        if (std::abs(parts.total - previous) < cfg.tol) {
            result.converged = true;
            break;
        }
        previous = parts.total;
    }

    result.image = cp_compose(result.factors);
    return result;
}

LinearOperator LinearOperator::from_dense(const Eigen::MatrixXd& A) {
    LinearOperator op;
    op.rows = A.rows();
    op.cols = A.cols();
    op.apply = [A](const Eigen::VectorXd& x) -> Eigen::VectorXd { return A * x; };
    op.apply_adjoint = [A](const Eigen::VectorXd& y) -> Eigen::VectorXd {
        return A.transpose() * y;
    };
    return op;
}

LinearOperator LinearOperator::from_system(const SparseSystemTensor& tensor) {
    const int K = tensor.grid_size();
    LinearOperator op;
    op.rows = tensor.num_rays();
    op.cols = static_cast<Eigen::Index>(K) * K;
    op.apply = [&tensor, K](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        Eigen::VectorXd y = Eigen::VectorXd::Zero(tensor.num_rays());
        for (const auto& e : tensor.entries) {
            y[e.ray] += e.length * x[static_cast<Eigen::Index>(e.col) * K + e.row];
        }
        return y;
    };
    op.apply_adjoint = [&tensor, K](const Eigen::VectorXd& y) -> Eigen::VectorXd {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K) * K);
        for (const auto& e : tensor.entries) {
            x[static_cast<Eigen::Index>(e.col) * K + e.row] += e.length * y[e.ray];
        }
        return x;
    };
    return op;
}

LsqrResult lsqr_solve(const LinearOperator& A, const Eigen::VectorXd& s, int max_iters,
                      double atol, const Eigen::VectorXd* x0,
                      const Eigen::VectorXd* ground_truth) {
    if (s.size() != A.rows) {
        throw std::invalid_argument("lsqr_solve: rhs length does not match operator");
    }
    if (x0 != nullptr && x0->size() != A.cols) {
        throw std::invalid_argument("lsqr_solve: warm start length does not match operator");
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&t0]() {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    LsqrResult result;
    // warm start: run the recurrence from zero on the shifted system
    const Eigen::VectorXd b = (x0 != nullptr) ? (s - A.apply(*x0)).eval() : s;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(A.cols);

    auto current_rmse = [&](const Eigen::VectorXd& xk) {
        if (ground_truth == nullptr) return std::numeric_limits<double>::quiet_NaN();
        Eigen::VectorXd full = (x0 != nullptr) ? (xk + *x0).eval() : xk;
        return std::sqrt((full - *ground_truth).squaredNorm() /
                         static_cast<double>(full.size()));
    };

    Eigen::VectorXd u = b;
    double beta = u.norm();
    if (beta > 0.0) u /= beta;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(A.cols);
    double alpha = 0.0;
    if (beta > 0.0) {
        v = A.apply_adjoint(u);
        alpha = v.norm();
        if (alpha > 0.0) v /= alpha;
    }
    Eigen::VectorXd w = v;
    double phibar = beta;
    double rhobar = alpha;
    const double bnorm = beta;
    double anorm2 = alpha * alpha;

    result.history.push_back(
        {0, phibar * phibar, phibar * phibar, 0.0, current_rmse(x), elapsed()});

    if (alpha == 0.0 || beta == 0.0) {
        result.converged = true;  // rhs already orthogonal to the range
        result.x = (x0 != nullptr) ? (x + *x0).eval() : x;
        return result;
    }

    for (int k = 1; k <= max_iters; ++k) {
        u = A.apply(v) - alpha * u;
        beta = u.norm();
        if (beta > 0.0) u /= beta;
        Eigen::VectorXd v_next = A.apply_adjoint(u) - beta * v;
        alpha = v_next.norm();
        if (alpha > 0.0) v_next /= alpha;
        v = v_next;

        const double rho = std::hypot(rhobar, beta);
        const double c = rhobar / rho;
        const double sn = beta / rho;
        const double theta = sn * alpha;
        rhobar = -c * alpha;
        const double phi = c * phibar;
        phibar = sn * phibar;

        x += (phi / rho) * w;
        w = v - (theta / rho) * w;

        anorm2 += alpha * alpha + beta * beta;
        const double anorm = std::sqrt(anorm2);
        const double rnorm = phibar;
        const double arnorm = alpha * std::abs(sn * phi);  // ||A^T r|| estimate

        if (!std::isfinite(rnorm) || !x.allFinite()) {
            throw NumericalError("lsqr_solve: non-finite iterate at iteration " +
                                 std::to_string(k));
        }

        result.history.push_back(
            {k, rnorm * rnorm, rnorm * rnorm, 0.0, current_rmse(x), elapsed()});
        result.iterations = k;

        if (rnorm <= atol * bnorm + atol * anorm * x.norm()) {
            result.converged = true;
            break;
        }
        if (rnorm > 0.0 && arnorm <= atol * anorm * rnorm) {
            result.converged = true;
            break;
        }
        if (alpha == 0.0 || beta == 0.0) {
            result.converged = true;  // exact breakdown: solution reached
            break;
        }
    }

    result.x = (x0 != nullptr) ? (x + *x0).eval() : x;
    return result;
}

void save_history_csv(const std::vector<ReconRecord>& records, const std::filesystem::path& path,
                      bool include_timing) {
    auto out = open_output(path);
    out << "iter,objective,datafit,penalty,rmse,seconds\n";
    for (const auto& r : records) {
        out << r.iteration << "," << format_double(r.objective) << ","
            << format_double(r.datafit) << "," << format_double(r.penalty) << ","
            << format_double(r.rmse) << "," << format_double(include_timing ? r.seconds : 0.0)
            << "\n";
    }
}

std::map<std::string, std::string> load_key_value_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto strip = [](std::string v) {
            const auto first = v.find_first_not_of(" \t\r");
            if (first == std::string::npos) return std::string();
            const auto last = v.find_last_not_of(" \t\r");
            return v.substr(first, last - first + 1);
        };
        line = strip(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config file: expected key=value, got: " + line);
        }
        kv[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
    }
    return kv;
}

TRConfig tr_config_from_map(const std::map<std::string, std::string>& kv) {
    TRConfig cfg;
    auto get = [&kv](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto* v = get("rank")) cfg.rank = std::stoi(*v);
    if (auto* v = get("lambda")) cfg.penalty.lambda = std::stod(*v);
    if (auto* v = get("rho")) cfg.penalty.rho = std::stod(*v);
    if (auto* v = get("eps")) cfg.tol = std::stod(*v);
    if (auto* v = get("max-iters")) cfg.max_iters = std::stoi(*v);
    if (auto* v = get("seed")) cfg.seed = std::stoull(*v);
    if (auto* v = get("init-refine")) cfg.init_refine_iters = std::stoi(*v);
    if (auto* v = get("subsolver-sweeps")) cfg.subsolver_max_sweeps = std::stoi(*v);
    if (auto* v = get("init")) {
        if (*v == "backprojection") {
            cfg.init = FactorInit::backprojection;
        } else if (*v == "random") {
            cfg.init = FactorInit::random;
        } else {
            throw std::runtime_error("config file: unknown init mode: " + *v);
        }
    }
    cfg.penalty.validate();
    return cfg;
}

}  // namespace tomotr
