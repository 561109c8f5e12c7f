// Command-line front end: scenario runs, parameter sweeps, stability and
// frequency-domain checks, and the convex-program reference solver.
//
// Exit codes: 0 = pass, 1 = a requested verdict failed, 2 = usage or
// runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "mpdual/sim.hpp"

namespace fs = std::filesystem;
using namespace mpdual;

namespace {

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << content;
}

Scenario load_with_overrides(const std::string& file, double dt, double duration) {
    Scenario sc = load_scenario(file);
    if (dt > 0) {
        sc.sim.dt = dt;
        if (sc.sim.delayed) DelaySchedule schedule(*sc.model, dt);  // revalidate grid
    }
    if (duration > 0) sc.sim.duration = duration;
    return sc;
}

void print_solution(const NetworkModel& m, const AlgorithmParams& params,
                    const PrimalSolution& sol, const char* label) {
    std::cout << label << ": objective " << sol.objective << ", kkt residual "
              << sol.kkt_residual << ", iterations " << sol.iterations << "\n";
    for (int r = 0; r < m.route_count(); ++r)
        std::cout << "  x." << m.route(r).name << " = " << sol.x[r] << "\n";
    for (int s = 0; s < m.source_count(); ++s)
        std::cout << "  y." << m.source(s).name << " = " << sol.y[s]
                  << "  ybar = " << std::pow(sol.u[s], params.q()) << "\n";
    for (int j = 0; j < m.link_count(); ++j)
        std::cout << "  mu." << m.link(j).name << " = " << sol.mu[j] << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-path dual congestion control simulator and analysis toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // accept the global flags after the subcommand too

    std::string scenario_file, out_dir = ".";
    double dt_override = 0, duration_override = 0;
    unsigned seed = 1;
    app.add_option("--out-dir", out_dir, "directory for emitted files");
    app.add_option("--dt", dt_override, "override scenario step size (s)");
    app.add_option("--duration", duration_override, "override scenario duration (s)");
    app.add_option("--seed", seed, "seed for randomized sweeps");

    auto* cmd_run = app.add_subcommand("run", "integrate a scenario and write its trace");
    cmd_run->add_option("--scenario", scenario_file, "scenario file")->required();

    auto* cmd_gamma = app.add_subcommand("sweep-gamma", "equilibrium gap across gamma values");
    std::string gamma_list = "0.2,0.4,0.6,0.8";
    cmd_gamma->add_option("--scenario", scenario_file, "scenario file")->required();
    cmd_gamma->add_option("--gammas", gamma_list, "comma separated gamma values");

    auto* cmd_gains = app.add_subcommand("sweep-gains", "convergence/oscillation across gains");
    std::string gain_list = "1e-5,1e-4,1e-3";
    std::string gain_axis = "link";
    cmd_gains->add_option("--scenario", scenario_file, "scenario file")->required();
    cmd_gains->add_option("--values", gain_list, "comma separated gain values");
    cmd_gains->add_option("--axis", gain_axis, "link or source");

    auto* cmd_check = app.add_subcommand("check", "stability margins + Nyquist verdict");
    cmd_check->add_option("--scenario", scenario_file, "scenario file")->required();

    auto* cmd_solve = app.add_subcommand("solve", "convex reference solver only");
    int random_instances = 0;
    cmd_solve->add_option("--scenario", scenario_file, "scenario file");
    cmd_solve->add_option("--random", random_instances,
                          "verify the approximation sandwich on N random instances");

    auto* cmd_nyquist = app.add_subcommand("nyquist", "dump eigenvalue loci as CSV");
    cmd_nyquist->add_option("--scenario", scenario_file, "scenario file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            const Scenario sc = load_with_overrides(scenario_file, dt_override, duration_override);
            const RunResult res = run(sc);
            const fs::path out = fs::path(out_dir) / (sc.name + "_trace.csv");
            write_file(out, res.trace.to_csv());
            std::cout << "trace: " << out.string() << " (" << res.trace.rows.size()
                      << " rows)\n";
            std::cout << "convergence time: " << res.summary.convergence_time << " s\n";
            std::cout << "clamp events: " << res.summary.clamp_events << "\n";
            if (!sc.sim.delayed) {
                std::cout << "lyapunov violations: " << res.summary.lyapunov_violations
                          << "\nfinal W: " << res.summary.final_w << "\n";
            }
            std::cout << "final rates:";
            for (int r = 0; r < sc.model->route_count(); ++r)
                std::cout << " " << sc.model->route(r).name << "=" << res.summary.final_x[r];
            std::cout << "\n";
            if (res.summary.oscillating) std::cout << "oscillation detected\n";
            if (res.summary.nonfinite) {
                std::cout << "run truncated: non-finite state at t=" << res.summary.nonfinite_t
                          << "\n";
                return 1;
            }
            return 0;
        }
        if (cmd_gamma->parsed()) {
            const Scenario sc = load_with_overrides(scenario_file, dt_override, duration_override);
            const GammaSweepReport rep = sweep_gamma(sc, parse_list(gamma_list));
            const fs::path out = fs::path(out_dir) / (sc.name + "_gamma_sweep.csv");
            write_file(out, rep.to_csv());
            std::cout << rep.to_csv();
            for (const auto& row : rep.rows)
                if (!row.ok) return 1;
            return 0;
        }
        if (cmd_gains->parsed()) {
            const Scenario sc = load_with_overrides(scenario_file, dt_override, duration_override);
            const GainAxis axis = gain_axis == "source" ? GainAxis::source : GainAxis::link;
            const GainSweepReport rep = sweep_gains(sc, axis, parse_list(gain_list));
            const fs::path out = fs::path(out_dir) / (sc.name + "_gain_sweep.csv");
            write_file(out, rep.to_csv());
            std::cout << rep.to_csv();
            return 0;
        }
        if (cmd_check->parsed()) {
            const Scenario sc = load_with_overrides(scenario_file, dt_override, duration_override);
            const CheckReport rep = check(sc);
            std::cout << rep.render(sc);
            return rep.pass ? 0 : 1;
        }
        if (cmd_solve->parsed()) {
            if (random_instances > 0) {
                std::mt19937 rng(seed);
                int failures = 0;
                for (int i = 0; i < random_instances; ++i) {
                    const NetworkModel m = random_instance(rng);
                    AlgorithmParams params;  // p = 2, gamma = 0.5
                    const SandwichReport rep = verify_sandwich(m, params, 1e-6);
                    std::cout << "instance " << i << " (seed " << seed << "): links "
                              << m.link_count() << ", routes " << m.route_count()
                              << ", sandwich " << (rep.pass() ? "holds" : "VIOLATED")
                              << " (slack " << rep.lower_slack << ", " << rep.upper_slack
                              << ")\n";
                    if (!rep.pass()) ++failures;
                }
                return failures ? 1 : 0;
            }
            if (scenario_file.empty())
                throw std::runtime_error("solve needs --scenario or --random N");
            const Scenario sc = load_with_overrides(scenario_file, 0, 0);
            const PrimalSolution gen = solve_generalized_primal(*sc.model, sc.params, 1e-8);
            print_solution(*sc.model, sc.params, gen, "blended program");
            const PrimalSolution kelly = solve_kelly_primal(*sc.model, sc.params, 1e-8);
            std::cout << "aggregate program: objective " << kelly.objective << "\n";
            const SandwichReport rep = verify_sandwich(*sc.model, sc.params, 1e-6);
            std::cout << "approximation sandwich: " << (rep.pass() ? "holds" : "VIOLATED")
                      << " (lower slack " << rep.lower_slack << ", upper slack "
                      << rep.upper_slack << ")\n";
            return rep.pass() ? 0 : 1;
        }
        if (cmd_nyquist->parsed()) {
            const Scenario sc = load_with_overrides(scenario_file, 0, 0);
            const CheckReport rep = check(sc);
            const fs::path out = fs::path(out_dir) / (sc.name + "_nyquist.csv");
            write_file(out, nyquist_csv(rep.nyquist));
            std::cout << "loci: " << out.string() << "\n";
            std::cout << "min real-axis crossing: " << rep.nyquist.min_real_crossing << "\n";
            std::cout << "K bound: " << rep.nyquist.k_bound << "\n";
            return rep.nyquist.verdict == NyquistVerdict::pass ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
