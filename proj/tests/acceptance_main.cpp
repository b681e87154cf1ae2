// acceptance_main.cpp
// End-to-end acceptance suite. Each criterion prints exactly one PASS/FAIL
// line; the process exits nonzero if any criterion fails.
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bloatline/config.hpp"
#include "bloatline/equilibrium.hpp"
#include "bloatline/fluid.hpp"
#include "bloatline/packet_sim.hpp"
#include "bloatline/sweep.hpp"
#include "test_util.hpp"

using namespace bloatline;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s criterion %2d: %s%s%s%s\n", ok ? "PASS" : "FAIL", id, name.c_str(),
                detail.empty() ? "" : " [", detail.c_str(), detail.empty() ? "" : "]");
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

template <class Fn>
void criterion(int id, const std::string& name, Fn&& fn) {
    try {
        auto [ok, detail] = fn();
        report(id, name, ok, detail);
    } catch (const std::exception& e) {
        report(id, name, false, std::string("exception: ") + e.what());
    }
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// Re-solves with tau pinned to factor * delay(q*) until self-consistent.
ScenarioConfig tau_fixed_point(ScenarioConfig cfg, double factor) {
    for (int i = 0; i < 500; ++i) {
        auto pt = equilibrium::solve(cfg);
        double target = factor * queue_delay_s(pt.q_star_packets, cfg.link);
        bool done = std::abs(target - cfg.ledbat.target_s) <= 1e-12 * target;
        cfg.ledbat.target_s = target;
        if (done) return cfg;
    }
    throw std::runtime_error("tau fixed point did not converge");
}

std::vector<ScenarioConfig> anchor_scenarios() {
    std::vector<ScenarioConfig> out;
    out.push_back(ScenarioConfig::defaults());
    ScenarioConfig c = ScenarioConfig::defaults();
    c.flows.n_tcp = c.flows.n_ledbat = 5;
    out.push_back(c);
    c = ScenarioConfig::defaults();
    c.red->min_th_packets = 30.0;
    out.push_back(c);
    c = ScenarioConfig::defaults();
    c.red->max_p = 0.5;
    out.push_back(c);
    c = ScenarioConfig::defaults();
    c.link.capacity_bits_per_s = 2e6;
    c.red->sample_period_s = c.link.packet_time_s();
    out.push_back(c);
    return out;
}

double mean_rho(const ScenarioConfig& cfg, int reps) {
    double sum = 0.0;
    for (int r = 0; r < reps; ++r) sum += sim::run_with_seed(cfg, cfg.rng_seed + r).rho_emp;
    return sum / reps;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(BLOATLINE_BIN) + " " + args;
    return std::system(cmd.c_str());
}

std::pair<bool, std::string> check_fair_share_anchor() {
    const double expected = 0.585786437626905;  // 1 / (1 + sqrt(1/2))
    double worst = 0.0;
    for (const auto& base : anchor_scenarios()) {
        auto cfg = tau_fixed_point(base, 2.0);
        auto pt = equilibrium::solve(cfg);
        worst = std::max(worst, std::abs(pt.rho_star - expected));
    }
    return {worst <= 1e-6, "max |rho*-0.585786| = " + fmt(worst)};
}

std::pair<bool, std::string> check_monopoly_limit() {
    double worst = 1.0;
    for (const auto& base : anchor_scenarios()) {
        auto cfg = tau_fixed_point(base, 1.01);
        auto pt = equilibrium::solve(cfg);
        worst = std::min(worst, pt.rho_star);
    }
    return {worst > 0.90, "min rho* at tau=1.01 delay(q*) = " + fmt(worst)};
}

std::pair<bool, std::string> check_dynamics_consistency() {
    std::mt19937_64 rng(20260809);
    double worst = 0.0;
    int unsettled = 0;
    for (int i = 0; i < 20; ++i) {
        ScenarioConfig cfg = testutil::random_red_scenario(rng);
        auto pt = equilibrium::solve(cfg);
        auto res = fluid::converge(cfg, fluid::FluidState{}, 1e-3, 1500.0);
        if (!res.settled) {
            ++unsettled;
            continue;
        }
        double err = 0.0;
        err = std::max(err, std::abs(res.final_state.w_packets - pt.w_star_packets) /
                                std::max(pt.w_star_packets, 1.0));
        err = std::max(err, std::abs(res.final_state.z_packets - pt.z_star_packets) /
                                std::max(pt.z_star_packets, 1.0));
        err = std::max(err, std::abs(res.final_state.q_packets - pt.q_star_packets) /
                                std::max(pt.q_star_packets, 1.0));
        worst = std::max(worst, err);
    }
    bool ok = unsettled == 0 && worst < 0.01;
    return {ok, "unsettled=" + std::to_string(unsettled) + " max rel err=" + fmt(worst)};
}

std::pair<bool, std::string> check_uniqueness() {
    std::mt19937_64 rng(424242);
    for (int c = 0; c < 100; ++c) {
        ScenarioConfig cfg = testutil::random_red_scenario(rng);
        const int n = 10000;
        double max_th = cfg.red->max_th_packets;
        int sign_changes = 0;
        int prev_sign = 0;
        for (int i = 0; i <= n; ++i) {
            double q = max_th * i / n;
            double r = equilibrium::fixed_point_residual(q, cfg);
            int sign = r > 0.0 ? 1 : (r < 0.0 ? -1 : 0);
            if (sign != 0) {
                if (prev_sign != 0 && sign != prev_sign) ++sign_changes;
                prev_sign = sign;
            }
        }
        if (sign_changes != 1)
            return {false, "config " + std::to_string(c) + " has " + std::to_string(sign_changes) +
                               " sign changes"};
    }
    return {true, "100/100 configs with exactly one sign change"};
}

std::pair<bool, std::string> check_droptail_yield() {
    ScenarioConfig cfg = ScenarioConfig::defaults();
    cfg.red.reset();
    cfg.ledbat.target_s = 0.1;
    double rho = mean_rho(cfg, 10);
    return {rho > 0.9, "mean empirical rho = " + fmt(rho)};
}

std::pair<bool, std::string> check_red_reprioritization() {
    ScenarioConfig cfg = ScenarioConfig::defaults();
    cfg.ledbat.target_s = 0.5;
    double rho = mean_rho(cfg, 10);
    return {rho < 0.7, "mean empirical rho = " + fmt(rho)};
}

std::pair<bool, std::string> check_validation_reconstruction() {
    double agg_refined = 0.0, agg_literal = 0.0, worst_point = 0.0;
    int points = 0;
    for (int n : {1, 5}) {
        sweep::SweepSpec spec;
        spec.base = ScenarioConfig::defaults();
        spec.base.flows.n_tcp = n;
        spec.base.flows.n_ledbat = n;
        spec.axis = "ledbat.target_s";
        spec.values = {0.05, 0.1, 0.15, 0.2, 0.3, 0.5};
        spec.replications = 10;
        auto result = sweep::sweep_validation(spec);
        for (const auto& row : result.rows) {
            double err_ref = std::abs(row.rho_refined - row.rho_emp_mean);
            double err_lit = std::abs(row.point.rho_star - row.rho_emp_mean);
            agg_refined += err_ref;
            agg_literal += err_lit;
            worst_point = std::max(worst_point, err_ref);
            ++points;
        }
    }
    double mean_err = agg_refined / points;
    bool ok = mean_err <= 0.1 && agg_refined < agg_literal;
    return {ok, "mean per-point |refined-emp| = " + fmt(mean_err) + " (max " + fmt(worst_point) +
                    " at the regime switch), sum refined = " + fmt(agg_refined) +
                    " vs literal = " + fmt(agg_literal)};
}

std::pair<bool, std::string> check_sharp_transition() {
    ScenarioConfig cfg = ScenarioConfig::defaults();
    double d = queue_delay_s(cfg.red->min_th_packets, cfg.link);
    double min_below = 1.0;
    for (double x : {0.2, 0.5, 0.8, 1.0}) {
        cfg.ledbat.target_s = x * d;
        min_below = std::min(min_below, equilibrium::solve(cfg).rho_star);
    }
    cfg.ledbat.target_s = 3.0 * d;
    double at_3x = equilibrium::solve(cfg).rho_star;
    bool ok = min_below >= 0.99 && at_3x <= 0.75;
    return {ok, "min rho*(tau<=d_minth) = " + fmt(min_below) + ", rho*(3 d_minth) = " + fmt(at_3x)};
}

std::pair<bool, std::string> check_numerical_hygiene() {
    // (a) step halving on a smooth loss-free segment
    ScenarioConfig cfg = ScenarioConfig::defaults();
    cfg.red->min_th_packets = 30.0;
    cfg.horizon_s = 2.0;
    fluid::FluidState start;
    start.w_packets = 1.0;
    start.z_packets = 1.0;
    auto end_state = [&](double h) {
        fluid::FluidOptions opts;
        opts.step_s = h;
        return fluid::integrate(cfg, start, opts).states.back();
    };
    auto dist = [](const fluid::FluidState& a, const fluid::FluidState& b) {
        return std::sqrt(std::pow(a.w_packets - b.w_packets, 2) +
                         std::pow(a.z_packets - b.z_packets, 2) +
                         std::pow(a.q_packets - b.q_packets, 2) +
                         std::pow(a.q_avg_packets - b.q_avg_packets, 2));
    };
    auto s1 = end_state(4e-3), s2 = end_state(2e-3), s3 = end_state(1e-3);
    double ratio = dist(s1, s2) / dist(s2, s3);

    // (b) derivative residual at the solved equilibrium
    double worst_rate = 0.0;
    std::mt19937_64 rng(17);
    for (int i = 0; i < 5; ++i) {
        ScenarioConfig scen = i == 0 ? ScenarioConfig::defaults() : testutil::random_red_scenario(rng);
        auto pt = equilibrium::solve(scen);
        fluid::FluidState star;
        star.w_packets = pt.w_star_packets;
        star.z_packets = pt.z_star_packets;
        star.q_packets = pt.q_star_packets;
        star.q_avg_packets = pt.q_avg_star_packets;
        fluid::StateHistory hist(0.0, star);
        auto rate = fluid::derivatives(10.0, star, hist, scen);
        worst_rate = std::max({worst_rate, std::abs(rate.w_packets), std::abs(rate.z_packets),
                               std::abs(rate.q_packets), std::abs(rate.q_avg_packets)});
    }

    // (c) EWMA relaxation against the closed form
    ScenarioConfig ew = ScenarioConfig::defaults();
    const double alpha = ew.red->ewma_weight;
    const double delta = ew.red->sample_period_s;
    const double rate_const = -std::log1p(-alpha) / delta;
    const double q_held = 42.0;
    double q_avg = 3.0;
    const double h = 1e-3, t_end = 10.0;
    auto f = [&](double value) {
        fluid::FluidState s;
        s.w_packets = 5.0;
        s.z_packets = 5.0;
        s.q_packets = q_held;
        s.q_avg_packets = value;
        fluid::StateHistory hist(0.0, s);
        return fluid::derivatives(0.0, s, hist, ew).q_avg_packets;
    };
    for (double t = 0.0; t < t_end - h / 2; t += h) {
        double k1 = f(q_avg), k2 = f(q_avg + h / 2 * k1), k3 = f(q_avg + h / 2 * k2),
               k4 = f(q_avg + h * k3);
        q_avg += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    double ewma_err = std::abs(q_avg - (q_held + (3.0 - q_held) * std::exp(-rate_const * t_end)));

    bool ok = ratio >= 8.0 && worst_rate <= 1e-9 && ewma_err <= 1e-6;
    return {ok, "halving ratio = " + fmt(ratio) + ", eq residual = " + fmt(worst_rate) +
                    ", ewma err = " + fmt(ewma_err)};
}

std::pair<bool, std::string> check_determinism() {
    namespace fs = std::filesystem;
    fs::path work = fs::path("acceptance_tmp");
    fs::remove_all(work);
    fs::create_directories(work);
    std::string w = work.string();

    struct Step {
        std::string args;
        std::vector<std::string> outputs;
    };
    std::vector<Step> steps = {
        {"equilibrium --set ledbat.target_s=0.2 --seed 7 > {OUT}/eq.csv", {"eq.csv"}},
        {"sweep --values 0.05,0.1,0.2,0.4 --seed 7 --out {OUT}", {"sweep.csv"}},
        {"validate --values 0.1,0.5 --reps 2 --seed 7 --set horizon_s=40 --out {OUT}",
         {"validation.csv", "validation_runs.csv"}},
        {"converge --starts 3 --seed 7 --tmax 400 --out {OUT}",
         {"convergence_summary.csv", "convergence_trajectories.csv"}},
        {"timeplot --set horizon_s=20 --seed 7 --stride 10 --out {OUT}",
         {"fluid.csv", "sim_trace.csv", "sim_summary.csv"}},
    };

    for (const auto& step : steps) {
        for (const char* pass : {"a", "b"}) {
            fs::path dir = work / (step.args.substr(0, step.args.find(' ')) + "_" + pass);
            fs::create_directories(dir);
            std::string args = step.args;
            for (std::string::size_type pos; (pos = args.find("{OUT}")) != std::string::npos;)
                args.replace(pos, 5, dir.string());
            if (run_cli(args + " 2> /dev/null") != 0)
                return {false, "CLI failed: " + step.args};
        }
        for (const auto& name : step.outputs) {
            std::string sub = step.args.substr(0, step.args.find(' '));
            std::string a = read_file((work / (sub + "_a") / name).string());
            std::string b = read_file((work / (sub + "_b") / name).string());
            if (a.empty() || a != b) return {false, "mismatch or empty: " + sub + "/" + name};
        }
    }
    return {true, "5 subcommands, byte-identical reruns"};
}

}  // namespace

int main() {
    criterion(1, "fair-share anchor rho*(tau = 2 delay(q*)) = 1/(1+sqrt(1/2))", check_fair_share_anchor);
    criterion(2, "monopoly limit rho* -> 1 as tau falls to delay(q*)", check_monopoly_limit);
    criterion(3, "fluid dynamics converge onto the solved equilibrium", check_dynamics_consistency);
    criterion(4, "fixed-point residual has exactly one sign change", check_uniqueness);
    criterion(5, "DropTail: delay-based class yields (empirical rho > 0.9)", check_droptail_yield);
    criterion(6, "RED reprioritizes (empirical rho < 0.7 at tau = 500 ms)", check_red_reprioritization);
    criterion(7, "refined model tracks packet-sim share within 0.1 and beats the plain one",
              check_validation_reconstruction);
    criterion(8, "share curve transitions sharply past the min-threshold delay", check_sharp_transition);
    criterion(9, "numerical hygiene: RK4 order, equilibrium residual, EWMA relaxation",
              check_numerical_hygiene);
    criterion(10, "byte-identical CSVs for identical config and seed", check_determinism);

    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
