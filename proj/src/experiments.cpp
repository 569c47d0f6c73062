#include "tomotr/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <json.hpp>

#include "tomotr/io_util.hpp"

namespace tomotr {

namespace {

Image clamp_image(const Image& image, double clamp_max) {
    return image.cwiseMax(0.0).cwiseMin(clamp_max);
}

RunOutcome finish_outcome(const Image& reconstruction, const Image& ground_truth,
                          std::vector<ReconRecord> history, int iterations, bool converged,
                          bool diverged) {
    RunOutcome out;
    out.reconstruction = reconstruction;
    out.ground_truth = ground_truth;
    out.history = std::move(history);
    out.iterations = iterations;
    out.converged = converged;
    out.diverged = diverged;
    out.clamp_max = 1.5 * ground_truth.maxCoeff();
    out.rmse_raw = rmse(reconstruction, ground_truth);
    out.rmse_reported = rmse(clamp_image(reconstruction, out.clamp_max), ground_truth);
    return out;
}

}  // namespace

RunOutcome run_solver(const SparseSystemTensor& tensor, const Sinogram& sinogram,
                      const Image& ground_truth, const RunConfig& cfg) {
    if (cfg.solver == SolverKind::tr) {
        TRResult r = tr_reconstruct(tensor, sinogram, cfg.tr, &ground_truth);
        return finish_outcome(r.image, ground_truth, std::move(r.history), r.iterations,
                              r.converged, r.diverged);
    }
    const auto op = LinearOperator::from_system(tensor);
    const int K = tensor.grid_size();
    const Eigen::VectorXd gt_vec =
        Eigen::Map<const Eigen::VectorXd>(ground_truth.data(), ground_truth.size());
    const Image bp = back_project(tensor, sinogram);
    const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(bp.data(), bp.size());
    LsqrResult r = lsqr_solve(op, sinogram.values, cfg.lsqr.max_iters, cfg.lsqr.atol, &x0, &gt_vec);
    const Image recon = Eigen::Map<const Image>(r.x.data(), K, K);
    return finish_outcome(recon, ground_truth, std::move(r.history), r.iterations, r.converged,
                          false);
}

RunOutcome run_reconstruction(const RunConfig& cfg) {
    const ScanGeometry geometry =
        ScanGeometry::uniform(cfg.grid_size, cfg.num_angles, cfg.num_beamlets);
    const SparseSystemTensor tensor = build_system_tensor(geometry);
    const Phantom phantom = phantom_by_name(cfg.phantom, cfg.grid_size);
    Sinogram sinogram = forward_project(tensor, phantom.image);
    if (cfg.noise_percent > 0.0) {
        sinogram = add_gaussian_noise(sinogram, {cfg.noise_percent, cfg.seed});
    }
    return run_solver(tensor, sinogram, phantom.image, cfg);
}

std::vector<SweepCell> run_angle_sweep(const SweepOptions& opts) {
    struct Cell {
        int num_angles;
        int rank;  // 0 = lsqr
    };
    std::vector<Cell> grid;
    for (int angles : opts.angle_counts) {
        for (int rank : opts.ranks) grid.push_back({angles, rank});
        grid.push_back({angles, 0});
    }
    std::vector<SweepCell> rows(grid.size());

    // one shared tensor + sinogram per angle count (cells only read them)
    for (std::size_t base = 0; base < grid.size();) {
        const int angles = grid[base].num_angles;
        std::size_t end = base;
        while (end < grid.size() && grid[end].num_angles == angles) ++end;

        SparseSystemTensor tensor;
        Phantom phantom;
        Sinogram sinogram;
        std::string build_error;
        try {
            tensor = build_system_tensor(
                ScanGeometry::uniform(opts.grid_size, angles, opts.num_beamlets));
            phantom = phantom_by_name(opts.phantom, opts.grid_size);
            sinogram = forward_project(tensor, phantom.image);
        } catch (const std::exception& e) {
            build_error = e.what();
        }

        std::atomic<std::size_t> next{base};
        auto worker = [&]() {
            while (true) {
                const std::size_t idx = next.fetch_add(1);
                if (idx >= end) break;
                const Cell cell = grid[idx];
                SweepCell& row = rows[idx];
                row.num_angles = cell.num_angles;
                row.rank = cell.rank;
                row.solver = cell.rank == 0 ? "lsqr" : "tr";
                if (!build_error.empty()) {
                    row.status = "error:" + build_error;
                    continue;
                }
                try {
                    RunConfig rc;
                    rc.phantom = opts.phantom;
                    rc.grid_size = opts.grid_size;
                    rc.num_angles = cell.num_angles;
                    rc.num_beamlets = opts.num_beamlets;
                    rc.lsqr = opts.lsqr;
                    if (cell.rank == 0) {
                        rc.solver = SolverKind::lsqr;
                    } else {
                        rc.solver = SolverKind::tr;
                        rc.tr.rank = cell.rank;
                        rc.tr.penalty = opts.penalty;
                        rc.tr.tol = opts.tr_tol;
                        rc.tr.max_iters = opts.tr_max_iters;
                        rc.tr.subsolver_max_sweeps = opts.tr_subsolver_max_sweeps;
                    }
                    const RunOutcome outcome = run_solver(tensor, sinogram, phantom.image, rc);
                    row.rmse = outcome.rmse_reported;
                    row.iterations = outcome.iterations;
                    row.status = "ok";
                } catch (const std::exception& e) {
                    row.status = std::string("error:") + e.what();
                }
            }
        };

        unsigned n_threads = opts.threads > 0 ? static_cast<unsigned>(opts.threads)
                                              : std::thread::hardware_concurrency();
        n_threads = std::max(1u, std::min<unsigned>(n_threads, static_cast<unsigned>(end - base)));
        std::vector<std::thread> pool;
        for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();

        base = end;
    }
    return rows;
}

std::vector<NoiseStudyRow> run_noise_study(const NoiseStudyOptions& opts) {
    const ScanGeometry geometry =
        ScanGeometry::uniform(opts.grid_size, opts.num_angles, opts.num_beamlets);
    const SparseSystemTensor tensor = build_system_tensor(geometry);
    const Phantom phantom = phantom_by_name(opts.phantom, opts.grid_size);
    const Sinogram clean = forward_project(tensor, phantom.image);

    std::vector<NoiseStudyRow> rows;
    for (std::size_t level = 0; level < opts.noise_levels.size(); ++level) {
        const double percent = opts.noise_levels[level];
        // both solvers see the same realization; seed shifts by level index
        Sinogram data = clean;
        if (percent > 0.0) {
            data = add_gaussian_noise(clean,
                                      {percent, opts.seed + static_cast<std::uint64_t>(level)});
        }
        NoiseStudyRow row;
        row.noise_percent = percent;
        RunConfig rc;
        rc.phantom = opts.phantom;
        rc.grid_size = opts.grid_size;
        rc.num_angles = opts.num_angles;
        rc.num_beamlets = opts.num_beamlets;
        rc.tr = opts.tr;
        rc.lsqr = opts.lsqr;
        rc.solver = SolverKind::tr;
        row.tr = run_solver(tensor, data, phantom.image, rc);
        rc.solver = SolverKind::lsqr;
        row.lsqr = run_solver(tensor, data, phantom.image, rc);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_reconstruction_pgm(const Image& reconstruction, double clamp_max,
                              const std::filesystem::path& path) {
    Image scaled;
    if (clamp_max > 0.0) {
        scaled = clamp_image(reconstruction, clamp_max) / clamp_max;
    } else {
        scaled = Image::Zero(reconstruction.rows(), reconstruction.cols());
    }
    save_image_pgm(scaled, path, 65535, true);

    nlohmann::json meta;
    meta["clamp_min"] = 0.0;
    meta["clamp_max"] = clamp_max;
    meta["maxval"] = 65535;
    auto out = open_output(path.string() + ".json");
    out << meta.dump(2) << "\n";
}

void write_sweep_csv(const std::vector<SweepCell>& rows, const std::filesystem::path& path) {
    auto out = open_output(path);
    out << "angles,solver,rank,rmse,iters,status\n";
    for (const auto& r : rows) {
        out << r.num_angles << "," << r.solver << "," << r.rank << ","
            << (r.status == "ok" ? format_double(r.rmse) : "nan") << "," << r.iterations << ","
            << r.status << "\n";
    }
}

}  // namespace tomotr
