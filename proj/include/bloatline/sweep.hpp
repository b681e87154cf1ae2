// sweep.hpp
// Experiment drivers: equilibrium sweeps over one config axis, packet-sim
// validation sweeps with replications, the multi-start convergence study,
// and the aligned fluid/packet time plot. All outputs are CSV with a
// leading comment line carrying the resolved base-config hash; row order
// is deterministic regardless of worker scheduling.
#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bloatline/config.hpp"
#include "bloatline/core.hpp"
#include "bloatline/csv.hpp"
#include "bloatline/equilibrium.hpp"
#include "bloatline/fluid.hpp"
#include "bloatline/packet_sim.hpp"
#include "bloatline/parallel.hpp"

namespace bloatline::sweep {

struct SweepSpec {
    ScenarioConfig base;
    std::string axis = "ledbat.target_s";  // dotted config path
    std::vector<double> values;
    int replications = 1;                  // packet-sim validation only
    std::vector<std::uint64_t> seeds;      // optional explicit seed list; else base seed + rep
};

struct SweepRow {
    double value = 0.0;
    double tau_norm = 0.0;  // ledbat target / queuing delay of min_th
    equilibrium::EquilibriumPoint point;
    double rho_refined = 1.0;
    bool have_empirical = false;
    double rho_emp_mean = 0.0;
    double rho_emp_std = 0.0;
    std::vector<sim::SimTrace> runs;  // one per replication (validation only)
};

struct SweepResult {
    std::string axis;
    std::string base_hash;
    std::vector<SweepRow> rows;
};

inline ScenarioConfig apply_axis(const ScenarioConfig& base, const std::string& axis, double value) {
    ScenarioConfig cfg = base;
    apply_override(cfg, axis, g17(value));
    cfg.validate();
    return cfg;
}

namespace detail {

inline double tau_norm_of(const ScenarioConfig& cfg) {
    if (!cfg.red) return 0.0;
    double d = queue_delay_s(cfg.red->min_th_packets, cfg.link);
    return d > 0 ? cfg.ledbat.target_s / d : 0.0;
}

}  // namespace detail

// Default grid mirroring the share-curve figures: 50 log-spaced targets
// over [0.1, 5] x queuing-delay(min_th).
inline std::vector<double> default_tau_values(const ScenarioConfig& base) {
    if (!base.red) throw ConfigError("sweep: default tau grid needs a RED profile");
    double d = queue_delay_s(base.red->min_th_packets, base.link);
    std::vector<double> values;
    const int n = 50;
    for (int i = 0; i < n; ++i) {
        double x = 0.1 * std::pow(5.0 / 0.1, static_cast<double>(i) / (n - 1));
        values.push_back(x * d);
    }
    return values;
}

// One equilibrium solve per axis value; rows keep the axis order. Points
// whose existence inequality fails are emitted flagged, not dropped.
inline SweepResult sweep_equilibrium(const SweepSpec& spec) {
    SweepResult result;
    result.axis = spec.axis;
    result.base_hash = config_hash(spec.base);
    result.rows.resize(spec.values.size());
    parallel_for(spec.values.size(), [&](size_t i) {
        ScenarioConfig cfg = apply_axis(spec.base, spec.axis, spec.values[i]);
        SweepRow& row = result.rows[i];
        row.value = spec.values[i];
        row.tau_norm = detail::tau_norm_of(cfg);
        row.point = equilibrium::solve(cfg);
        row.rho_refined = equilibrium::refined_rho(cfg, row.point);
    });
    return result;
}

// Equilibrium plus `replications` packet-sim runs per axis value.
inline SweepResult sweep_validation(const SweepSpec& spec) {
    if (spec.replications < 2) throw std::invalid_argument("sweep_validation: replications must be >= 2");
    SweepResult result = sweep_equilibrium(spec);
    size_t reps = static_cast<size_t>(spec.replications);
    std::vector<std::uint64_t> seeds = spec.seeds;
    if (seeds.empty())
        for (size_t r = 0; r < reps; ++r) seeds.push_back(spec.base.rng_seed + r);
    if (seeds.size() != reps)
        throw std::invalid_argument("sweep_validation: seed list must match replication count");

    for (auto& row : result.rows) row.runs.resize(reps);
    parallel_for(spec.values.size() * reps, [&](size_t task) {
        size_t i = task / reps, r = task % reps;
        ScenarioConfig cfg = apply_axis(spec.base, spec.axis, spec.values[i]);
        result.rows[i].runs[r] = sim::run_with_seed(cfg, seeds[r]);
    });

    for (auto& row : result.rows) {
        row.have_empirical = true;
        double sum = 0.0;
        for (const auto& t : row.runs) sum += t.rho_emp;
        row.rho_emp_mean = sum / static_cast<double>(reps);
        double ss = 0.0;
        for (const auto& t : row.runs) ss += (t.rho_emp - row.rho_emp_mean) * (t.rho_emp - row.rho_emp_mean);
        row.rho_emp_std = reps > 1 ? std::sqrt(ss / static_cast<double>(reps - 1)) : 0.0;
    }
    return result;
}

struct ConvergenceStudy {
    equilibrium::EquilibriumPoint target;
    struct Start {
        fluid::FluidState initial;
        bool settled = false;
        double t_final = 0.0;
        fluid::FluidState final_state;
        std::vector<double> t;        // sampled every 0.1 s
        std::vector<double> err_w;    // |W - W*| / max(W*, 1)
        std::vector<double> err_q;    // |q - q*| / max(q*, 1)
        std::vector<double> err_rho;  // rho - rho*
    };
    std::vector<Start> starts;
};

// Integrates n_starts random initial states drawn uniformly from
// [0, 2W*] x [0, 2Z*] x [0, B] (EWMA seeded at the drawn queue) and
// records relative-error trajectories toward the solved equilibrium.
// Non-settling starts are reported flagged rather than failing the study.
inline ConvergenceStudy run_convergence_study(const ScenarioConfig& cfg, int n_starts,
                                              std::uint64_t seed, double tol = 1e-3,
                                              double t_max = 0.0, const fluid::FluidOptions& opts = {}) {
    if (n_starts < 1) throw std::invalid_argument("convergence study: n_starts must be >= 1");
    ConvergenceStudy study;
    study.target = equilibrium::solve(cfg);
    if (!study.target.exists)
        throw std::invalid_argument("convergence study: no equilibrium for this scenario");
    if (t_max <= 0.0) t_max = cfg.horizon_s;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    study.starts.resize(static_cast<size_t>(n_starts));
    for (auto& s : study.starts) {
        s.initial.w_packets = uni(rng) * 2.0 * study.target.w_star_packets;
        s.initial.z_packets = uni(rng) * 2.0 * study.target.z_star_packets;
        s.initial.q_packets = uni(rng) * cfg.link.buffer_packets;
        s.initial.q_avg_packets = s.initial.q_packets;
    }

    const double w_star = study.target.w_star_packets;
    const double q_star = study.target.q_star_packets;
    const double rho_star = study.target.rho_star;
    parallel_for(study.starts.size(), [&](size_t i) {
        ConvergenceStudy::Start& s = study.starts[i];
        fluid::SettleDetector detector(cfg, tol);
        double next_sample = 0.0;
        fluid::integrate_observe(cfg, s.initial, t_max, opts,
                                 [&](double t, const fluid::FluidState& x, double) {
            if (t >= next_sample) {
                next_sample = t + 0.1;
                s.t.push_back(t);
                s.err_w.push_back(std::abs(x.w_packets - w_star) / std::max(w_star, 1.0));
                s.err_q.push_back(std::abs(x.q_packets - q_star) / std::max(q_star, 1.0));
                s.err_rho.push_back(fluid::share_ratio(x) - rho_star);
            }
            s.final_state = x;
            s.t_final = t;
            if (detector.feed(t, x)) {
                s.settled = true;
                return false;
            }
            return true;
        });
    });
    return study;
}

struct TimePlot {
    fluid::Trajectory trajectory;
    sim::SimTrace trace;
};

// Aligned fluid trajectory and packet-sim trace for one scenario, both
// starting cold, suitable for overlay plotting.
inline TimePlot run_timeplot(const ScenarioConfig& cfg, const fluid::FluidOptions& opts = {}) {
    TimePlot plot;
    plot.trajectory = fluid::integrate(cfg, fluid::FluidState{}, opts);
    plot.trace = sim::run(cfg);
    return plot;
}

// ---- CSV rendering ------------------------------------------------------

inline std::string hash_comment(const std::string& hash) {
    return "# config_hash=" + hash + "\n";
}

inline std::string trajectory_csv(const fluid::Trajectory& traj, const std::string& hash,
                                  size_t stride = 1) {
    std::string out = hash_comment(hash) + "t,W,Z,q,Q,p,rho\n";
    for (size_t i = 0; i < traj.times.size(); i += stride) {
        const auto& s = traj.states[i];
        out += g9(traj.times[i]) + "," + g9(s.w_packets) + "," + g9(s.z_packets) + "," +
               g9(s.q_packets) + "," + g9(s.q_avg_packets) + "," + g9(traj.p[i]) + "," +
               g9(traj.rho[i]) + "\n";
    }
    return out;
}

inline std::string sim_trace_csv(const sim::SimTrace& trace, const std::string& hash) {
    std::string out = hash_comment(hash) + "t,flow_id,kind,cwnd,queue_pkts,ewma_pkts\n";
    for (size_t k = 0; k < trace.sample_times.size(); ++k) {
        for (size_t i = 0; i < trace.kinds.size(); ++i) {
            out += g9(trace.sample_times[k]) + "," + std::to_string(i) + "," +
                   (trace.kinds[i] == sim::FlowKind::tcp ? "tcp" : "ledbat") + "," +
                   g9(trace.cwnd_series[i][k]) + "," + g9(trace.queue_series[k]) + "," +
                   g9(trace.ewma_series[k]) + "\n";
        }
    }
    return out;
}

inline std::string sim_summary_header() {
    return "scenario_hash,seed,rho_emp,goodput_tcp_pps,goodput_ledbat_pps,drop_rate\n";
}

inline std::string sim_summary_row(const sim::SimTrace& trace, const std::string& scenario_hash,
                                   std::uint64_t seed) {
    return scenario_hash + "," + std::to_string(seed) + "," + g9(trace.rho_emp) + "," +
           g9(trace.goodput_tcp_pps) + "," + g9(trace.goodput_ledbat_pps) + "," +
           g9(trace.drop_rate) + "\n";
}

inline std::string equilibrium_csv(const equilibrium::EquilibriumPoint& pt, double rho_refined,
                                   const std::string& hash) {
    std::string out = hash_comment(hash);
    out += "q_star,p_star,W_star,Z_star,rho_star,regime,exists,rho_refined\n";
    out += g9(pt.q_star_packets) + "," + g9(pt.p_star) + "," + g9(pt.w_star_packets) + "," +
           g9(pt.z_star_packets) + "," + g9(pt.rho_star) + "," + equilibrium::regime_name(pt.regime) +
           "," + (pt.exists ? "1" : "0") + "," + g9(rho_refined) + "\n";
    return out;
}

inline std::string sweep_csv(const SweepResult& result) {
    bool empirical = false;
    for (const auto& r : result.rows) empirical = empirical || r.have_empirical;
    std::string out = hash_comment(result.base_hash);
    out += "axis,value,tau_norm,q_star,p_star,W_star,Z_star,rho_star,regime,exists,rho_refined";
    if (empirical) out += ",rho_emp_mean,rho_emp_std";
    out += "\n";
    for (const auto& r : result.rows) {
        out += result.axis + "," + g9(r.value) + "," + g9(r.tau_norm) + "," +
               g9(r.point.q_star_packets) + "," + g9(r.point.p_star) + "," +
               g9(r.point.w_star_packets) + "," + g9(r.point.z_star_packets) + "," +
               g9(r.point.rho_star) + "," + equilibrium::regime_name(r.point.regime) + "," +
               (r.point.exists ? "1" : "0") + "," + g9(r.rho_refined);
        if (empirical) {
            out += ",";
            if (r.have_empirical) {
                out += g9(r.rho_emp_mean);
                out += ",";
                if (r.runs.size() > 1) out += g9(r.rho_emp_std);
            } else {
                out += ",";
            }
        }
        out += "\n";
    }
    return out;
}

inline std::string convergence_trajectories_csv(const ConvergenceStudy& study, const std::string& hash) {
    std::string out = hash_comment(hash) + "start_id,t,err_W,err_q,err_rho\n";
    for (size_t i = 0; i < study.starts.size(); ++i) {
        const auto& s = study.starts[i];
        for (size_t k = 0; k < s.t.size(); ++k) {
            out += std::to_string(i) + "," + g9(s.t[k]) + "," + g9(s.err_w[k]) + "," +
                   g9(s.err_q[k]) + "," + g9(s.err_rho[k]) + "\n";
        }
    }
    return out;
}

inline std::string convergence_summary_csv(const ConvergenceStudy& study, const std::string& hash) {
    std::string out = hash_comment(hash);
    out += "start_id,W0,Z0,q0,settled,t_final,W_final,Z_final,q_final\n";
    for (size_t i = 0; i < study.starts.size(); ++i) {
        const auto& s = study.starts[i];
        out += std::to_string(i) + "," + g9(s.initial.w_packets) + "," + g9(s.initial.z_packets) +
               "," + g9(s.initial.q_packets) + "," + (s.settled ? "1" : "0") + "," + g9(s.t_final) +
               "," + g9(s.final_state.w_packets) + "," + g9(s.final_state.z_packets) + "," +
               g9(s.final_state.q_packets) + "\n";
    }
    return out;
}

}  // namespace bloatline::sweep
