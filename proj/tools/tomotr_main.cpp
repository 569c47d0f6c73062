// Command-line front end: phantom generation, projection, single
// reconstructions and the angle/noise studies. All outputs are
// deterministic for a fixed configuration and seed (see README).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tomotr/experiments.hpp"
#include "tomotr/io_util.hpp"

namespace fs = std::filesystem;
using namespace tomotr;

namespace {

struct CommonFlags {
    std::string phantom = "circle-triangle";
    int grid_size = 64;
    int beamlets = 91;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    bool timing = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, std::string& config_path) {
    cmd->add_option("--phantom", f.phantom, "phantom id: circle-triangle or brain");
    cmd->add_option("--K", f.grid_size, "image resolution (pixels per side)");
    cmd->add_option("--beamlets", f.beamlets, "number of detector beamlets");
    cmd->add_option("--seed", f.seed, "random seed for noise realizations");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_flag("--timing", f.timing,
                  "write measured wall-clock seconds into CSVs (breaks bit-reproducibility)");
    cmd->add_option("--config", config_path, "flat key=value config file; explicit flags win");
}

struct SolverFlags {
    std::string solver = "tr";
    int rank = 5;
    double lambda = 1.5;
    double rho = 1e-5;
    double eps = 1e-4;
    int max_iters = 100;
    int init_refine = 20;
    int subsolver_sweeps = 300;
    int lsqr_iters = 200;
    double lsqr_atol = 1e-8;
};

void add_solver(CLI::App* cmd, SolverFlags& f) {
    cmd->add_option("--solver", f.solver, "solver: tr or lsqr")
        ->check(CLI::IsMember({"tr", "lsqr"}));
    cmd->add_option("--rank", f.rank, "factor rank for the tr solver");
    cmd->add_option("--lambda", f.lambda, "elastic-net mix in [1,2] (1=lasso, 2=ridge)");
    cmd->add_option("--rho", f.rho, "elastic-net weight");
    cmd->add_option("--eps", f.eps, "tr stopping tolerance on the objective change");
    cmd->add_option("--max-iters", f.max_iters, "tr iteration cap");
    cmd->add_option("--init-refine", f.init_refine,
                    "least-squares refinement iterations for the tr initial factors");
    cmd->add_option("--subsolver-sweeps", f.subsolver_sweeps,
                    "coordinate-descent sweep budget per tr half-step");
    cmd->add_option("--lsqr-iters", f.lsqr_iters, "lsqr iteration cap");
    cmd->add_option("--lsqr-atol", f.lsqr_atol, "lsqr stopping tolerance");
}

std::vector<int> split_ints(const std::string& value) {
    std::vector<int> out;
    std::size_t start = 0;
    while (start <= value.size()) {
        std::size_t end = value.find(',', start);
        if (end == std::string::npos) end = value.size();
        out.push_back(std::stoi(value.substr(start, end - start)));
        start = end + 1;
    }
    return out;
}

std::vector<double> split_doubles(const std::string& value) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= value.size()) {
        std::size_t end = value.find(',', start);
        if (end == std::string::npos) end = value.size();
        out.push_back(std::stod(value.substr(start, end - start)));
        start = end + 1;
    }
    return out;
}

// Applies a flat key=value config file to whichever options the active
// subcommand defines. Values for options given explicitly on the command
// line are left alone: defaults < config file < flags.
void apply_config(CLI::App* cmd, const std::string& path, CommonFlags& c, SolverFlags& s,
                  int& angles, double& noise, std::vector<int>& angle_counts,
                  std::vector<int>& ranks, std::vector<double>& noise_levels, int& threads) {
    const bool sweep = cmd->get_name() == "sweep-angles";
    const bool study = cmd->get_name() == "noise-study";
    for (const auto& [key, value] : load_key_value_file(path)) {
        if (key == "config") continue;
        const CLI::Option* opt = cmd->get_option_no_throw("--" + key);
        if (opt == nullptr) {
            throw std::runtime_error("config file: key '" + key + "' is not a flag of '" +
                                     cmd->get_name() + "'");
        }
        if (opt->count() > 0) continue;
        if (key == "phantom") {
            c.phantom = value;
        } else if (key == "K") {
            c.grid_size = std::stoi(value);
        } else if (key == "beamlets") {
            c.beamlets = std::stoi(value);
        } else if (key == "seed") {
            c.seed = std::stoull(value);
        } else if (key == "out") {
            c.out_dir = value;
        } else if (key == "timing") {
            c.timing = value == "1" || value == "true";
        } else if (key == "solver") {
            s.solver = value;
        } else if (key == "rank") {
            s.rank = std::stoi(value);
        } else if (key == "lambda") {
            s.lambda = std::stod(value);
        } else if (key == "rho") {
            s.rho = std::stod(value);
        } else if (key == "eps") {
            s.eps = std::stod(value);
        } else if (key == "max-iters") {
            s.max_iters = std::stoi(value);
        } else if (key == "init-refine") {
            s.init_refine = std::stoi(value);
        } else if (key == "subsolver-sweeps") {
            s.subsolver_sweeps = std::stoi(value);
        } else if (key == "lsqr-iters") {
            s.lsqr_iters = std::stoi(value);
        } else if (key == "lsqr-atol") {
            s.lsqr_atol = std::stod(value);
        } else if (key == "angles") {
            if (sweep) {
                angle_counts = split_ints(value);
            } else {
                angles = std::stoi(value);
            }
        } else if (key == "noise") {
            if (study) {
                noise_levels = split_doubles(value);
            } else {
                noise = std::stod(value);
            }
        } else if (key == "ranks") {
            ranks = split_ints(value);
        } else if (key == "threads") {
            threads = std::stoi(value);
        } else {
            throw std::runtime_error("config file: unhandled key: " + key);
        }
    }
}

RunConfig make_run_config(const CommonFlags& c, const SolverFlags& s, int angles, double noise) {
    RunConfig rc;
    rc.phantom = c.phantom;
    rc.grid_size = c.grid_size;
    rc.num_angles = angles;
    rc.num_beamlets = c.beamlets;
    rc.seed = c.seed;
    rc.noise_percent = noise;
    rc.solver = s.solver == "lsqr" ? SolverKind::lsqr : SolverKind::tr;
    rc.tr.rank = s.rank;
    rc.tr.penalty.lambda = s.lambda;
    rc.tr.penalty.rho = s.rho;
    rc.tr.tol = s.eps;
    rc.tr.max_iters = s.max_iters;
    rc.tr.init_refine_iters = s.init_refine;
    rc.tr.subsolver_max_sweeps = s.subsolver_sweeps;
    rc.lsqr.max_iters = s.lsqr_iters;
    rc.lsqr.atol = s.lsqr_atol;
    return rc;
}

void write_outcome(const RunOutcome& outcome, const fs::path& dir, const std::string& stem,
                   bool timing) {
    write_reconstruction_pgm(outcome.reconstruction, outcome.clamp_max, dir / (stem + ".pgm"));
    save_history_csv(outcome.history, dir / (stem + "_history.csv"), timing);
}

std::string format_metrics(const RunOutcome& o) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "rmse=%.12g iters=%d converged=%s", o.rmse_reported,
                  o.iterations, o.converged ? "true" : "false");
    return buf;
}

int cmd_phantom(const CommonFlags& c) {
    const Phantom p = phantom_by_name(c.phantom, c.grid_size);
    const fs::path dir(c.out_dir);
    save_image_pgm(p.image, dir / (p.name + ".pgm"), 65535, true);
    nlohmann::json meta;
    meta["name"] = p.name;
    meta["K"] = c.grid_size;
    meta["measured_rank"] = p.measured_rank;
    auto out = open_output(dir / (p.name + ".json"));
    out << meta.dump(2) << "\n";
    std::cout << "phantom=" << p.name << " K=" << c.grid_size
              << " measured_rank=" << p.measured_rank << "\n";
    return 0;
}

int cmd_project(const CommonFlags& c, int angles, double noise) {
    const auto geometry = ScanGeometry::uniform(c.grid_size, angles, c.beamlets);
    const auto tensor = build_system_tensor(geometry);
    const Phantom p = phantom_by_name(c.phantom, c.grid_size);
    Sinogram s = forward_project(tensor, p.image);
    if (noise > 0.0) s = add_gaussian_noise(s, {noise, c.seed});
    save_sinogram_csv(s, fs::path(c.out_dir) / "sinogram.csv");
    std::cout << "rays=" << s.size() << " max=" << format_double(s.values.maxCoeff()) << "\n";
    return 0;
}

int cmd_reconstruct(const CommonFlags& c, const SolverFlags& s, int angles, double noise) {
    const RunConfig rc = make_run_config(c, s, angles, noise);
    const RunOutcome outcome = run_reconstruction(rc);
    const fs::path dir(c.out_dir);
    write_outcome(outcome, dir, "recon", c.timing);

    nlohmann::json meta;
    meta["phantom"] = c.phantom;
    meta["K"] = c.grid_size;
    meta["angles"] = angles;
    meta["beamlets"] = c.beamlets;
    meta["solver"] = s.solver;
    meta["noise"] = noise;
    meta["seed"] = c.seed;
    meta["rmse"] = outcome.rmse_reported;
    meta["iters"] = outcome.iterations;
    meta["converged"] = outcome.converged;
    if (s.solver == "tr") {
        meta["rank"] = s.rank;
        meta["lambda"] = s.lambda;
        meta["rho"] = s.rho;
        meta["diverged"] = outcome.diverged;
    }
    auto out = open_output(dir / "recon_meta.json");
    out << meta.dump(2) << "\n";

    std::cout << format_metrics(outcome) << "\n";
    return 0;
}

int cmd_sweep_angles(const CommonFlags& c, const SolverFlags& s, std::vector<int> angle_counts,
                     std::vector<int> ranks, int threads) {
    SweepOptions opts;
    opts.phantom = c.phantom;
    opts.grid_size = c.grid_size;
    opts.num_beamlets = c.beamlets;
    if (!angle_counts.empty()) opts.angle_counts = std::move(angle_counts);
    if (!ranks.empty()) opts.ranks = std::move(ranks);
    opts.penalty.rho = s.rho;
    opts.penalty.lambda = s.lambda;
    opts.tr_tol = s.eps;
    opts.tr_max_iters = s.max_iters;
    opts.tr_subsolver_max_sweeps = s.subsolver_sweeps;
    opts.lsqr.max_iters = s.lsqr_iters;
    opts.lsqr.atol = s.lsqr_atol;
    opts.threads = threads;

    const auto rows = run_angle_sweep(opts);
    write_sweep_csv(rows, fs::path(c.out_dir) / "sweep.csv");
    std::size_t ok = 0;
    for (const auto& r : rows) {
        if (r.status == "ok") ++ok;
    }
    std::cout << "cells=" << rows.size() << " ok=" << ok << "\n";
    return ok > 0 ? 0 : 2;
}

std::string noise_tag(double percent) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", percent * 100.0);
    std::string tag(buf);
    for (auto& ch : tag) {
        if (ch == '.') ch = 'p';
    }
    return "noise" + tag;
}

int cmd_noise_study(const CommonFlags& c, const SolverFlags& s, int angles,
                    std::vector<double> levels) {
    NoiseStudyOptions opts;
    opts.phantom = c.phantom;
    opts.grid_size = c.grid_size;
    opts.num_angles = angles;
    opts.num_beamlets = c.beamlets;
    if (!levels.empty()) opts.noise_levels = std::move(levels);
    opts.seed = c.seed;
    opts.tr.rank = s.rank;
    opts.tr.penalty.lambda = s.lambda;
    opts.tr.penalty.rho = s.rho;
    opts.tr.tol = s.eps;
    opts.tr.max_iters = s.max_iters;
    opts.tr.init_refine_iters = s.init_refine;
    opts.tr.subsolver_max_sweeps = s.subsolver_sweeps;
    opts.lsqr.max_iters = s.lsqr_iters;
    opts.lsqr.atol = s.lsqr_atol;

    const auto rows = run_noise_study(opts);
    const fs::path dir(c.out_dir);
    auto summary = open_output(dir / "noise_summary.csv");
    summary << "noise,solver,rmse,iters,converged\n";
    for (const auto& row : rows) {
        const std::string tag = noise_tag(row.noise_percent);
        write_outcome(row.tr, dir, tag + "_tr", c.timing);
        write_outcome(row.lsqr, dir, tag + "_lsqr", c.timing);
        summary << format_double(row.noise_percent) << ",tr,"
                << format_double(row.tr.rmse_reported) << "," << row.tr.iterations << ","
                << (row.tr.converged ? "true" : "false") << "\n";
        summary << format_double(row.noise_percent) << ",lsqr,"
                << format_double(row.lsqr.rmse_reported) << "," << row.lsqr.iterations << ","
                << (row.lsqr.converged ? "true" : "false") << "\n";
        std::cout << tag << " tr " << format_metrics(row.tr) << "\n";
        std::cout << tag << " lsqr " << format_metrics(row.lsqr) << "\n";
    }
    return 0;
}

int cmd_rank_report(const CommonFlags& c, const SolverFlags& s, int angles,
                    std::vector<int> ranks) {
    if (ranks.empty()) ranks = {1, 2, 3, 4, 5, 6};
    const Phantom p = phantom_by_name(c.phantom, c.grid_size);
    std::cout << "phantom=" << p.name << " measured_rank=" << p.measured_rank << "\n";

    const auto geometry = ScanGeometry::uniform(c.grid_size, angles, c.beamlets);
    const auto tensor = build_system_tensor(geometry);
    const Sinogram sinogram = forward_project(tensor, p.image);

    const fs::path dir(c.out_dir);
    auto csv = open_output(dir / "rank_report.csv");
    csv << "rank,rmse,iters,status\n";
    for (int rank : ranks) {
        try {
            RunConfig rc = make_run_config(c, s, angles, 0.0);
            rc.solver = SolverKind::tr;
            rc.tr.rank = rank;
            const RunOutcome outcome = run_solver(tensor, sinogram, p.image, rc);
            write_outcome(outcome, dir, "rank" + std::to_string(rank), c.timing);
            csv << rank << "," << format_double(outcome.rmse_reported) << ","
                << outcome.iterations << ",ok\n";
        } catch (const std::exception& e) {
            csv << rank << ",nan,0,error:" << e.what() << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low-rank tensor regression tomography toolkit"};
    app.require_subcommand(1);

    CommonFlags common;
    SolverFlags solver;
    std::string config_path;
    int angles = 30;
    double noise = 0.0;
    std::vector<int> angle_counts;
    std::vector<int> ranks;
    std::vector<double> noise_levels;
    int threads = 0;

    auto* phantom_cmd = app.add_subcommand("phantom", "rasterize a phantom to PGM");
    add_common(phantom_cmd, common, config_path);

    auto* project_cmd = app.add_subcommand("project", "forward-project a phantom to CSV");
    add_common(project_cmd, common, config_path);
    project_cmd->add_option("--angles", angles, "number of projection angles");
    project_cmd->add_option("--noise", noise, "gaussian noise fraction of the sinogram peak");

    auto* recon_cmd = app.add_subcommand("reconstruct", "run one reconstruction");
    add_common(recon_cmd, common, config_path);
    add_solver(recon_cmd, solver);
    recon_cmd->add_option("--angles", angles, "number of projection angles");
    recon_cmd->add_option("--noise", noise, "gaussian noise fraction of the sinogram peak");

    auto* sweep_cmd = app.add_subcommand("sweep-angles", "rmse grid over angle counts and ranks");
    add_common(sweep_cmd, common, config_path);
    add_solver(sweep_cmd, solver);
    sweep_cmd->add_option("--angles", angle_counts, "angle counts (default 10..100 step 10)")
        ->delimiter(',');
    sweep_cmd->add_option("--ranks", ranks, "ranks to sweep (default 1..12)")->delimiter(',');
    sweep_cmd->add_option("--threads", threads, "worker threads (0 = auto)");

    auto* noise_cmd = app.add_subcommand("noise-study", "tr vs lsqr across noise levels");
    add_common(noise_cmd, common, config_path);
    add_solver(noise_cmd, solver);
    noise_cmd->add_option("--angles", angles, "number of projection angles");
    noise_cmd->add_option("--noise", noise_levels, "noise levels (default 0,0.01,0.02)")
        ->delimiter(',');

    auto* rank_cmd = app.add_subcommand("rank-report", "phantom rank and per-rank rmse");
    add_common(rank_cmd, common, config_path);
    add_solver(rank_cmd, solver);
    rank_cmd->add_option("--angles", angles, "number of projection angles");
    rank_cmd->add_option("--ranks", ranks, "rank list (default 1..6)")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            return app.exit(e);
        }
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        CLI::App* active = app.get_subcommands().front();
        if (sweep_cmd->parsed() && sweep_cmd->count("--rho") == 0) {
            solver.rho = 0.0;  // sweep default: unregularized; config may still override
        }
        if (!config_path.empty()) {
            apply_config(active, config_path, common, solver, angles, noise, angle_counts,
                         ranks, noise_levels, threads);
        }
        if (phantom_cmd->parsed()) return cmd_phantom(common);
        if (project_cmd->parsed()) return cmd_project(common, angles, noise);
        if (recon_cmd->parsed()) return cmd_reconstruct(common, solver, angles, noise);
        if (sweep_cmd->parsed()) {
            return cmd_sweep_angles(common, solver, angle_counts, ranks, threads);
        }
        if (noise_cmd->parsed()) return cmd_noise_study(common, solver, angles, noise_levels);
        if (rank_cmd->parsed()) return cmd_rank_report(common, solver, angles, ranks);
    } catch (const NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
