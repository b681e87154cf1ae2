// bloatline_main.cpp
// Command-line front end: equilibrium | sweep | validate | converge | timeplot.
// Exit codes: 0 success, 2 config error, 3 model-existence failure.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bloatline/config.hpp"
#include "bloatline/csv.hpp"
#include "bloatline/equilibrium.hpp"
#include "bloatline/fluid.hpp"
#include "bloatline/packet_sim.hpp"
#include "bloatline/sweep.hpp"

namespace bl = bloatline;

namespace {

struct ExistenceFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_given = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "scenario file (flat key=value lines)");
    cmd->add_option("--set", args.sets, "override a config key, e.g. --set ledbat.target_s=0.2")
        ->type_name("KEY=VALUE");
    cmd->add_option("--out", args.out_dir, "output directory for CSV files");
    cmd->add_option("--seed", args.seed, "override rng_seed")->each([&](const std::string&) {
        args.seed_given = true;
    });
}

bl::ScenarioConfig resolve_config(const CommonArgs& args) {
    bl::ScenarioConfig cfg =
        args.config_path.empty() ? bl::ScenarioConfig::defaults() : bl::load_config_file(args.config_path);
    for (const std::string& kv : args.sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw bl::ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
        bl::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.seed_given) cfg.rng_seed = args.seed;
    cfg.validate();
    return cfg;
}

std::string out_path(const CommonArgs& args, const std::string& name) {
    std::filesystem::create_directories(args.out_dir);
    return (std::filesystem::path(args.out_dir) / name).string();
}

void note_written(const std::string& path) {
    std::cerr << "wrote " << path << "\n";
}

std::vector<double> parse_value_list(const std::string& csv) {
    std::vector<double> values;
    std::string item;
    std::istringstream in(csv);
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        values.push_back(bl::detail::parse_real("--values", item));
    }
    if (values.empty()) throw bl::ConfigError("--values: empty list");
    return values;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    std::string item;
    std::istringstream in(csv);
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        seeds.push_back(static_cast<std::uint64_t>(bl::detail::parse_int("--seeds", item)));
    }
    return seeds;
}

int cmd_equilibrium(const CommonArgs& args) {
    bl::ScenarioConfig cfg = resolve_config(args);
    bl::equilibrium::EquilibriumPoint pt = bl::equilibrium::solve(cfg);
    double refined = bl::equilibrium::refined_rho(cfg, pt);
    std::fputs(bl::sweep::equilibrium_csv(pt, refined, bl::config_hash(cfg)).c_str(), stdout);
    if (!pt.exists) {
        std::cerr << "equilibrium: existence condition fails for this profile\n";
        return 3;
    }
    return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& axis, const std::string& values_csv) {
    bl::sweep::SweepSpec spec;
    spec.base = resolve_config(args);
    spec.axis = axis;
    if (!bl::valid_config_key(axis)) throw bl::ConfigError("sweep: unknown axis '" + axis + "'");
    spec.values = values_csv.empty() ? bl::sweep::default_tau_values(spec.base) : parse_value_list(values_csv);
    bl::sweep::SweepResult result = bl::sweep::sweep_equilibrium(spec);
    std::string path = out_path(args, "sweep.csv");
    bl::write_text_file(path, bl::sweep::sweep_csv(result));
    note_written(path);
    return 0;
}

int cmd_validate(const CommonArgs& args, const std::string& axis, const std::string& values_csv,
                 int reps, const std::string& seeds_csv) {
    bl::sweep::SweepSpec spec;
    spec.base = resolve_config(args);
    spec.axis = axis;
    if (!bl::valid_config_key(axis)) throw bl::ConfigError("validate: unknown axis '" + axis + "'");
    if (values_csv.empty()) {
        double d = spec.base.red ? bl::queue_delay_s(spec.base.red->min_th_packets, spec.base.link) : 0.1;
        spec.values = {0.5 * d, 1.0 * d, 1.5 * d, 2.0 * d, 3.0 * d, 5.0 * d};
    } else {
        spec.values = parse_value_list(values_csv);
    }
    spec.replications = reps;
    spec.seeds = parse_seed_list(seeds_csv);
    bl::sweep::SweepResult result = bl::sweep::sweep_validation(spec);

    std::string path = out_path(args, "validation.csv");
    bl::write_text_file(path, bl::sweep::sweep_csv(result));
    note_written(path);

    std::string runs = bl::sweep::hash_comment(result.base_hash) + bl::sweep::sim_summary_header();
    for (size_t i = 0; i < result.rows.size(); ++i) {
        bl::ScenarioConfig cfg = bl::sweep::apply_axis(spec.base, spec.axis, spec.values[i]);
        for (size_t r = 0; r < result.rows[i].runs.size(); ++r) {
            std::uint64_t seed = spec.seeds.empty() ? spec.base.rng_seed + r : spec.seeds[r];
            runs += bl::sweep::sim_summary_row(result.rows[i].runs[r], bl::config_hash(cfg), seed);
        }
    }
    std::string runs_path = out_path(args, "validation_runs.csv");
    bl::write_text_file(runs_path, runs);
    note_written(runs_path);
    return 0;
}

int cmd_converge(const CommonArgs& args, int starts, double tol, double t_max, bool clamped) {
    bl::ScenarioConfig cfg = resolve_config(args);
    if (!bl::equilibrium::solve(cfg).exists)
        throw ExistenceFailure("converge: existence condition fails for this profile");
    bl::fluid::FluidOptions opts;
    opts.clamp_ledbat_drift = clamped;
    bl::sweep::ConvergenceStudy study =
        bl::sweep::run_convergence_study(cfg, starts, cfg.rng_seed, tol, t_max, opts);
    std::string hash = bl::config_hash(cfg);
    std::string tpath = out_path(args, "convergence_trajectories.csv");
    bl::write_text_file(tpath, bl::sweep::convergence_trajectories_csv(study, hash));
    note_written(tpath);
    std::string spath = out_path(args, "convergence_summary.csv");
    bl::write_text_file(spath, bl::sweep::convergence_summary_csv(study, hash));
    note_written(spath);
    return 0;
}

int cmd_timeplot(const CommonArgs& args, double step, bool clamped, int stride) {
    bl::ScenarioConfig cfg = resolve_config(args);
    bl::fluid::FluidOptions opts;
    opts.step_s = step;
    opts.clamp_ledbat_drift = clamped;
    bl::sweep::TimePlot plot = bl::sweep::run_timeplot(cfg, opts);
    std::string hash = bl::config_hash(cfg);

    std::string fpath = out_path(args, "fluid.csv");
    bl::write_text_file(fpath, bl::sweep::trajectory_csv(plot.trajectory, hash,
                                                         static_cast<size_t>(std::max(1, stride))));
    note_written(fpath);

    std::string tpath = out_path(args, "sim_trace.csv");
    bl::write_text_file(tpath, bl::sweep::sim_trace_csv(plot.trace, hash));
    note_written(tpath);

    std::string spath = out_path(args, "sim_summary.csv");
    bl::write_text_file(spath, bl::sweep::hash_comment(hash) + bl::sweep::sim_summary_header() +
                                   bl::sweep::sim_summary_row(plot.trace, hash, cfg.rng_seed));
    note_written(spath);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bloatline: fluid-model and packet-level analysis of TCP/LEDBAT under RED and DropTail"};
    app.require_subcommand(1);

    CommonArgs eq_args, sweep_args, val_args, conv_args, plot_args;
    std::string sweep_axis = "ledbat.target_s", val_axis = "ledbat.target_s";
    std::string sweep_values, val_values, val_seeds;
    int val_reps = 10;
    int conv_starts = 100;
    double conv_tol = 1e-3, conv_tmax = 0.0;
    bool conv_clamped = false, plot_clamped = false;
    double plot_step = 0.0;
    int plot_stride = 1;

    CLI::App* eq = app.add_subcommand("equilibrium", "solve the fixed point, print one CSV row");
    add_common(eq, eq_args);

    CLI::App* sw = app.add_subcommand("sweep", "equilibrium sweep over one config axis");
    add_common(sw, sweep_args);
    sw->add_option("--axis", sweep_axis, "dotted config path to sweep");
    sw->add_option("--values", sweep_values, "comma-separated axis values (default: tau grid)");

    CLI::App* va = app.add_subcommand("validate", "equilibrium sweep cross-checked against packet-sim runs");
    add_common(va, val_args);
    va->add_option("--axis", val_axis, "dotted config path to sweep");
    va->add_option("--values", val_values, "comma-separated axis values");
    va->add_option("--reps", val_reps, "packet-sim replications per point (>= 2)");
    va->add_option("--seeds", val_seeds, "explicit comma-separated seed list");

    CLI::App* cv = app.add_subcommand("converge", "multi-start fluid convergence study");
    add_common(cv, conv_args);
    cv->add_option("--starts", conv_starts, "number of random initial states");
    cv->add_option("--tol", conv_tol, "relative settle tolerance");
    cv->add_option("--tmax", conv_tmax, "integration horizon per start (default: config horizon)");
    cv->add_flag("--clamped-drift", conv_clamped, "floor the LEDBAT delay drift at zero");

    CLI::App* tp = app.add_subcommand("timeplot", "aligned fluid trajectory and packet-sim trace");
    add_common(tp, plot_args);
    tp->add_option("--step", plot_step, "integrator step in seconds (default: min(1 ms, Tp/10))");
    tp->add_option("--stride", plot_stride, "emit every n-th fluid sample");
    tp->add_flag("--clamped-drift", plot_clamped, "floor the LEDBAT delay drift at zero");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (eq->parsed()) return cmd_equilibrium(eq_args);
        if (sw->parsed()) return cmd_sweep(sweep_args, sweep_axis, sweep_values);
        if (va->parsed()) return cmd_validate(val_args, val_axis, val_values, val_reps, val_seeds);
        if (cv->parsed()) return cmd_converge(conv_args, conv_starts, conv_tol, conv_tmax, conv_clamped);
        if (tp->parsed()) return cmd_timeplot(plot_args, plot_step, plot_clamped, plot_stride);
    } catch (const ExistenceFailure& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const bl::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
