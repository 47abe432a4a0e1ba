// tilq: solver and verification harness for two-player time-inconsistent
// stochastic LQ differential games (scalar state, deterministic
// coefficients).
//
// Exit codes: 0 ok, 2 validation failure, 3 solver failure, 4 verification
// failure. CSV outputs carry 17 significant digits; diagnostics go to stderr.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "tilq/csv.hpp"
#include "tilq/errors.hpp"
#include "tilq/fbsde.hpp"
#include "tilq/manifest.hpp"
#include "tilq/mc.hpp"
#include "tilq/problem.hpp"
#include "tilq/threads.hpp"
#include "tilq/version.hpp"

namespace fs = std::filesystem;
using namespace tilq;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;
constexpr int kExitVerify = 4;

struct CommonOpts {
    std::string config;
    std::string out_dir;
    uint64_t seed = 42;
    int64_t paths = 100000;
    int steps = -1;  // -1: use config grid
    std::vector<double> eps_list{0.1, 0.05, 0.025};
    std::vector<double> t_list{0.0};
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_out = true) {
    cmd->add_option("--config", o.config, "problem configuration (JSON)")->required();
    auto* out = cmd->add_option("--out", o.out_dir, "output directory");
    if (needs_out) out->required();
    cmd->add_option("--seed", o.seed, "base seed for the counter RNG");
    cmd->add_option("--paths", o.paths, "Monte-Carlo path count");
    cmd->add_option("--steps", o.steps, "override n_steps (resamples coefficients)");
    cmd->add_option("--eps", o.eps_list, "spike window lengths");
    cmd->add_option("--t", o.t_list, "evaluation times");
}

ProblemSpec load_and_validate(const CommonOpts& o) {
    ProblemSpec spec = load_spec(o.config);
    if (o.steps > 0) spec = resample(spec, o.steps);
    auto violations = validate(spec);
    if (!violations.empty()) {
        for (const auto& v : violations)
            std::cerr << "validation: " << v.field << " [index " << v.index
                      << "] value=" << v.value << ": " << v.message << "\n";
        throw SpecError("spec validation failed (" + std::to_string(violations.size()) +
                        " violations)");
    }
    return spec;
}

RunManifest make_manifest(const std::string& command, const CommonOpts& o,
                          const ProblemSpec& spec) {
    RunManifest m;
    m.command = command;
    m.config_path = o.config;
    m.n_steps = spec.grid.n_steps;
    m.n_paths = o.paths;
    m.base_seed = o.seed;
    m.eps_list = o.eps_list;
    m.t_list = o.t_list;
    m.threads = worker_count();
    m.tool_version = kVersion;
    return m;
}

void write_riccati_csv(const ProblemSpec& spec, const RiccatiSolution& sol,
                       const std::string& path) {
    CsvWriter w({"s", "M1", "M2", "N1", "N2", "Gam1", "Gam2", "Phi1", "Phi2", "Mtilde",
                 "J1", "P1", "P2"});
    for (int k = 0; k < spec.grid.n_points(); ++k)
        w.add_row({spec.grid.point(k), sol.M1[k], sol.M2[k], sol.N1[k], sol.N2[k],
                   sol.Gam1[k], sol.Gam2[k], sol.Phi1[k], sol.Phi2[k], sol.Mtilde[k],
                   sol.J1[k], sol.P1[k], sol.P2[k]});
    w.write(path);
}

void write_strategy_csv(const ProblemSpec& spec, const FeedbackStrategy& strat,
                        const std::string& path) {
    std::vector<std::string> header{"s"};
    for (int i = 1; i <= 2 * spec.l; ++i) header.push_back("alpha_" + std::to_string(i));
    for (int i = 1; i <= 2 * spec.l; ++i) header.push_back("beta_" + std::to_string(i));
    CsvWriter w(header);
    for (int k = 0; k < spec.grid.n_points(); ++k) {
        std::vector<double> row{spec.grid.point(k)};
        for (int i = 0; i < 2 * spec.l; ++i) row.push_back(strat.alpha(k, i));
        for (int i = 0; i < 2 * spec.l; ++i) row.push_back(strat.beta(k, i));
        w.add_row(row);
    }
    w.write(path);
}

void write_conditions_csv(const ConditionReport& rep, const std::string& path) {
    CsvWriter w({"name", "pass", "witness"});
    w.add_row_mixed({"lambda_fit", "1", fmt17(rep.lambda)});
    w.add_row_mixed({"case_tag:" + to_string(rep.case_tag), "1", "0"});
    for (const auto& c : rep.checks)
        w.add_row_mixed({c.name, c.pass ? "1" : "0", fmt17(c.witness)});
    w.add_row_mixed({"overall", rep.overall ? "1" : "0", "0"});
    w.write(path);
}

FeedbackStrategy load_strategy_csv(const ProblemSpec& spec, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open strategy file: " + path);
    FeedbackStrategy fs;
    fs.grid = spec.grid;
    fs.l = spec.l;
    const int np = spec.grid.n_points();
    const int l2 = 2 * spec.l;
    fs.alpha.resize(np, l2);
    fs.beta.resize(np, l2);
    std::string line;
    std::getline(in, line);  // header
    for (int k = 0; k < np; ++k) {
        if (!std::getline(in, line))
            throw SpecError("strategy file: expected " + std::to_string(np) + " rows");
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
        if (static_cast<int>(cells.size()) != 1 + 2 * l2)
            throw SpecError("strategy file: wrong column count");
        if (std::abs(cells[0] - spec.grid.point(k)) > 1e-9 * spec.grid.T)
            throw SpecError("strategy file: grid mismatch at row " + std::to_string(k));
        for (int i = 0; i < l2; ++i) fs.alpha(k, i) = cells[1 + i];
        for (int i = 0; i < l2; ++i) fs.beta(k, i) = cells[1 + l2 + i];
    }
    return fs;
}

int cmd_solve(const CommonOpts& o) {
    auto t0 = std::chrono::steady_clock::now();
    ProblemSpec spec = load_and_validate(o);
    ConditionReport rep = check_conditions(spec);
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy strat = feedback(spec, sol);

    fs::create_directories(o.out_dir);
    write_riccati_csv(spec, sol, o.out_dir + "/riccati.csv");
    write_strategy_csv(spec, strat, o.out_dir + "/strategy.csv");
    write_conditions_csv(rep, o.out_dir + "/conditions.csv");

    RunManifest m = make_manifest("solve", o, spec);
    m.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.write(o.out_dir + "/manifest.json");
    return kExitOk;
}

int cmd_strategy(const CommonOpts& o) {
    auto t0 = std::chrono::steady_clock::now();
    ProblemSpec spec = load_and_validate(o);
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy strat = feedback(spec, sol);
    fs::create_directories(o.out_dir);
    write_strategy_csv(spec, strat, o.out_dir + "/strategy.csv");
    RunManifest m = make_manifest("strategy", o, spec);
    m.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.write(o.out_dir + "/manifest.json");
    return kExitOk;
}

int cmd_check_conditions(const CommonOpts& o) {
    ProblemSpec spec = load_and_validate(o);
    ConditionReport rep = check_conditions(spec);
    fs::create_directories(o.out_dir);
    write_conditions_csv(rep, o.out_dir + "/conditions.csv");
    RunManifest m = make_manifest("check-conditions", o, spec);
    m.write(o.out_dir + "/manifest.json");
    return rep.overall ? kExitOk : kExitOk;  // reporting command: exit 0 either way
}

int cmd_simulate(const CommonOpts& o, bool dump_paths) {
    auto t0 = std::chrono::steady_clock::now();
    ProblemSpec spec = load_and_validate(o);
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy strat = feedback(spec, sol);
    fs::create_directories(o.out_dir);

    Eigen::ArrayXd mean, var;
    simulate_moments(spec, strat, o.paths, o.seed, mean, var);
    CsvWriter mw({"s", "mean_X", "var_X"});
    for (int k = 0; k < spec.grid.n_points(); ++k)
        mw.add_row({spec.grid.point(k), mean[k], var[k]});
    mw.write(o.out_dir + "/moments.csv");

    if (dump_paths) {
        if (o.paths > 20000)
            throw SpecError("simulate --dump-paths: use --paths <= 20000");
        PathBatch batch = simulate(spec, strat, o.paths, o.seed);
        std::vector<std::string> header{"path", "s", "X"};
        for (int i = 1; i <= 2 * spec.l; ++i) header.push_back("u_" + std::to_string(i));
        CsvWriter w(header);
        for (int64_t p = 0; p < batch.n_paths; ++p)
            for (int k = 0; k < spec.grid.n_points(); ++k) {
                std::vector<double> row{static_cast<double>(p), spec.grid.point(k),
                                        batch.x(p, k)};
                auto u = batch.control(p, k);
                for (int i = 0; i < u.size(); ++i) row.push_back(u[i]);
                w.add_row(row);
            }
        w.write(o.out_dir + "/paths.csv");
    }

    RunManifest m = make_manifest("simulate", o, spec);
    m.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.write(o.out_dir + "/manifest.json");
    return kExitOk;
}

int cmd_verify(const CommonOpts& o, const std::string& strategy_file) {
    auto t0 = std::chrono::steady_clock::now();
    ProblemSpec spec = load_and_validate(o);
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy strat = strategy_file.empty() ? feedback(spec, sol)
                                                   : load_strategy_csv(spec, strategy_file);
    fs::create_directories(o.out_dir);

    bool all_pass = true;

    CsvWriter vw({"player", "t", "eps", "v_index", "mc_gap", "std_err",
                  "first_order_pred", "pass"});
    for (double t : o.t_list) {
        auto rows = verify_suite(spec, strat, sol, t, o.eps_list, o.paths, o.seed);
        for (const auto& r : rows) {
            vw.add_row({static_cast<double>(r.player), r.t, r.eps,
                        static_cast<double>(r.v_index), r.gap, r.std_err, r.pred,
                        r.pass ? 1.0 : 0.0});
            all_pass = all_pass && r.pass;
        }
    }
    vw.write(o.out_dir + "/verify.csv");

    CsvWriter fw({"t", "residual_p1", "residual_p2", "std_err_p1", "std_err_p2",
                  "lambda_diag_inf_norm"});
    const double lambda_tol = 1e-9;
    for (double t : o.t_list) {
        BsdeReport rep = bsde_residual(spec, sol, strat, t, o.paths, o.seed);
        fw.add_row({rep.t, rep.residual_p1, rep.residual_p2, rep.std_err_p1,
                    rep.std_err_p2, rep.lambda_diag_inf});
        double dt = spec.grid.dt();
        double bound1 = std::max(4.0 * rep.std_err_p1, 5.0 * dt);
        double bound2 = std::max(4.0 * rep.std_err_p2, 5.0 * dt);
        all_pass = all_pass && rep.residual_p1 <= bound1 && rep.residual_p2 <= bound2;
        all_pass = all_pass && rep.lambda_diag_inf <= lambda_tol * (1.0 + std::abs(spec.x0));
    }
    fw.write(o.out_dir + "/fbsde.csv");

    RunManifest m = make_manifest("verify", o, spec);
    m.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.write(o.out_dir + "/manifest.json");
    return all_pass ? kExitOk : kExitVerify;
}

int cmd_fbsde_check(const CommonOpts& o) {
    ProblemSpec spec = load_and_validate(o);
    RiccatiSolution sol = solve_all(spec);
    FeedbackStrategy strat = feedback(spec, sol);
    fs::create_directories(o.out_dir);
    CsvWriter fw({"t", "residual_p1", "residual_p2", "std_err_p1", "std_err_p2",
                  "lambda_diag_inf_norm"});
    for (double t : o.t_list) {
        BsdeReport rep = bsde_residual(spec, sol, strat, t, o.paths, o.seed);
        fw.add_row({rep.t, rep.residual_p1, rep.residual_p2, rep.std_err_p1,
                    rep.std_err_p2, rep.lambda_diag_inf});
    }
    fw.write(o.out_dir + "/fbsde.csv");
    RunManifest m = make_manifest("fbsde-check", o, spec);
    m.write(o.out_dir + "/manifest.json");
    return kExitOk;
}

int cmd_sweep(const CommonOpts& o, const std::string& param, const std::string& range) {
    ProblemSpec base = load_and_validate(o);

    double lo, hi;
    int count;
    {
        std::stringstream ss(range);
        std::string a, b, c;
        if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') ||
            !std::getline(ss, c, ':'))
            throw SpecError("sweep: --range must be lo:hi:count");
        lo = std::stod(a);
        hi = std::stod(b);
        count = std::stoi(c);
        if (count < 1) throw SpecError("sweep: count must be >= 1");
    }

    auto apply = [&](ProblemSpec& s, double v) {
        if (param == "G1") s.G1 = v;
        else if (param == "G2") s.G2 = v;
        else if (param == "h1") s.h1 = v;
        else if (param == "h2") s.h2 = v;
        else if (param == "lam1") s.lam1 = v;
        else if (param == "lam2") s.lam2 = v;
        else if (param == "mu1") s.mu1 = v;
        else if (param == "mu2") s.mu2 = v;
        else if (param == "x0") s.x0 = v;
        else if (param == "R_scale") {
            for (auto& m : s.R1.v) m *= v;
            for (auto& m : s.R2.v) m *= v;
        } else {
            throw SpecError("sweep: unknown parameter " + param);
        }
    };

    fs::create_directories(o.out_dir);
    CsvWriter w({"value", "conditions_pass", "solver_ok", "M1_0", "mtilde_in_bounds"});
    for (int i = 0; i < count; ++i) {
        double v = (count == 1) ? lo : lo + (hi - lo) * i / (count - 1);
        ProblemSpec s = base;
        apply(s, v);
        double conditions_pass = 0.0, solver_ok = 0.0;
        double m1_0 = std::numeric_limits<double>::quiet_NaN();
        double in_bounds = std::numeric_limits<double>::quiet_NaN();
        if (validate(s).empty()) {
            conditions_pass = check_conditions(s).overall ? 1.0 : 0.0;
            try {
                RiccatiSolution sol = solve_all(s);
                solver_ok = 1.0;
                m1_0 = sol.M1[0];
                in_bounds = 1.0;
                for (int k = 0; k < s.grid.n_points(); ++k) {
                    double slack = 1e-9 * (1.0 + std::abs(sol.L2));
                    if (sol.Mtilde[k] < sol.L1 - slack || sol.Mtilde[k] > sol.L2 + slack)
                        in_bounds = 0.0;
                }
            } catch (const SolverError& e) {
                std::cerr << "sweep value " << v << ": " << e.what() << "\n";
            } catch (const SpecError& e) {
                std::cerr << "sweep value " << v << ": " << e.what() << "\n";
            }
        }
        w.add_row({v, conditions_pass, solver_ok, m1_0, in_bounds});
    }
    w.write(o.out_dir + "/sweep.csv");

    RunManifest m = make_manifest("sweep", o, base);
    m.write(o.out_dir + "/manifest.json");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"time-inconsistent stochastic LQ differential game solver"};
    app.require_subcommand(1);

    CommonOpts o;
    bool dump_paths = false;
    std::string strategy_file, sweep_param, sweep_range;

    auto* solve = app.add_subcommand("solve", "integrate the backward system");
    add_common(solve, o);
    auto* strat = app.add_subcommand("strategy", "emit the feedback strategy");
    add_common(strat, o);
    auto* sim = app.add_subcommand("simulate", "Euler-Maruyama ensemble");
    add_common(sim, o);
    sim->add_flag("--dump-paths", dump_paths, "emit per-path CSV");
    auto* verify = app.add_subcommand("verify", "spike-variation equilibrium tests");
    add_common(verify, o);
    verify->add_option("--strategy", strategy_file, "strategy CSV override");
    auto* fbsde = app.add_subcommand("fbsde-check", "adjoint BSDE residual");
    add_common(fbsde, o);
    auto* cond = app.add_subcommand("check-conditions", "existence hypotheses");
    add_common(cond, o);
    auto* sweep = app.add_subcommand("sweep", "one-parameter hypothesis sweep");
    add_common(sweep, o);
    sweep->add_option("--param", sweep_param, "scalar field to sweep")->required();
    sweep->add_option("--range", sweep_range, "lo:hi:count")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) return cmd_solve(o);
        if (strat->parsed()) return cmd_strategy(o);
        if (sim->parsed()) return cmd_simulate(o, dump_paths);
        if (verify->parsed()) return cmd_verify(o, strategy_file);
        if (fbsde->parsed()) return cmd_fbsde_check(o);
        if (cond->parsed()) return cmd_check_conditions(o);
        if (sweep->parsed()) return cmd_sweep(o, sweep_param, sweep_range);
    } catch (const SingularLinearSystem& e) {
        std::cerr << "solver: " << e.what() << "\n";
        return kExitSolver;
    } catch (const SolverError& e) {
        std::cerr << "solver: " << e.what() << "\n";
        return kExitSolver;
    } catch (const SpecError& e) {
        std::cerr << "config: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
