// fluid.hpp
// Deterministic fluid dynamics of N_W loss-based (TCP) and N_Z delay-based
// (LEDBAT) windows sharing one bottleneck, with either an early-drop (RED)
// or overflow (DropTail) loss law. Homogeneous flows are collapsed to one
// representative window per class, scaled by the class population in the
// queue equation.
//
// State x = (W, Z, q, Q), all in packets. With R(t) = Tp + q(t)/C,
// d(t) = q(t)/C, and p the drop probability:
//
//   dW/dt = 1/R(t) - W(t) W(t-R) / (2 R(t-R)) * p(t-R)
//   dZ/dt = g (tau - d(t))/tau / R(t) - Z(t) Z(t-R) / (2 R(t-R)) * p(t-R)
//   dq/dt = (N_W W + N_Z Z)/R * (1-p(t)) - C * 1{q>0 or inflow >= C}
//   dQ/dt = -ln(1-alpha)/delta * (q - Q)
//
// Under RED, p(t) = f(Q(t)). Under DropTail, p(t) = 0 below the buffer
// limit and equals the excess fraction of the offered load once q = B.
// Delayed arguments are resolved by linear interpolation over the stored
// step history; times before the start of integration evaluate to the
// initial state.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bloatline/core.hpp"

namespace bloatline::fluid {

struct FluidState {
    double w_packets = 0.0;      // per-flow TCP window W
    double z_packets = 0.0;      // per-flow LEDBAT window Z
    double q_packets = 0.0;      // instantaneous queue q
    double q_avg_packets = 0.0;  // EWMA-averaged queue Q

    bool finite() const {
        return std::isfinite(w_packets) && std::isfinite(z_packets) &&
               std::isfinite(q_packets) && std::isfinite(q_avg_packets);
    }
};

inline FluidState operator+(FluidState a, const FluidState& b) {
    a.w_packets += b.w_packets;
    a.z_packets += b.z_packets;
    a.q_packets += b.q_packets;
    a.q_avg_packets += b.q_avg_packets;
    return a;
}

inline FluidState operator*(double s, FluidState x) {
    x.w_packets *= s;
    x.z_packets *= s;
    x.q_packets *= s;
    x.q_avg_packets *= s;
    return x;
}

struct HistoryUnderflow : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Time-indexed record of past states. lookup() interpolates linearly
// between stored samples; t <= t0 returns the constant pre-history.
// prune() discards samples older than a cutoff to bound memory; a lookup
// behind the pruned front signals integrator misconfiguration.
class StateHistory {
  public:
    StateHistory(double t0, FluidState t0_state)
        : t0_(t0), t0_state_(t0_state) {
        times_.push_back(t0);
        states_.push_back(t0_state);
    }

    void push(double t, const FluidState& s) {
        if (!times_.empty() && !(t > times_.back()))
            throw std::invalid_argument("StateHistory: sample times must be strictly increasing");
        times_.push_back(t);
        states_.push_back(s);
    }

    FluidState lookup(double t) const {
        if (t <= t0_) {
            if (front_ > 0)
                throw HistoryUnderflow("StateHistory: pre-history pruned away");
            return t0_state_;
        }
        if (front_ > 0 && t < times_[front_])
            throw HistoryUnderflow("StateHistory: lookup at t=" + std::to_string(t) +
                                   " behind pruned front t=" + std::to_string(times_[front_]));
        if (t >= times_.back()) return states_.back();
        auto it = std::upper_bound(times_.begin() + static_cast<long>(front_), times_.end(), t);
        size_t hi = static_cast<size_t>(it - times_.begin());
        size_t lo = hi - 1;
        double span = times_[hi] - times_[lo];
        double a = (t - times_[lo]) / span;
        return (1.0 - a) * states_[lo] + a * states_[hi];
    }

    void prune(double keep_after_t) {
        while (front_ + 1 < times_.size() && times_[front_ + 1] <= keep_after_t) ++front_;
    }

    double start_time() const { return t0_; }
    double last_time() const { return times_.back(); }
    size_t size() const { return times_.size() - front_; }

  private:
    double t0_;
    FluidState t0_state_;
    std::vector<double> times_;
    std::vector<FluidState> states_;
    size_t front_ = 0;
};

struct FluidOptions {
    double step_s = 0.0;             // 0 -> min(1 ms, Tp/10)
    bool clamp_ledbat_drift = false; // floor the delay drift at zero instead of letting it push Z down
};

inline double resolve_step(const ScenarioConfig& cfg, const FluidOptions& opts) {
    double h = opts.step_s > 0 ? opts.step_s : std::min(1e-3, cfg.link.prop_delay_s / 10.0);
    if (!(h > 0)) throw std::invalid_argument("fluid: step_s must be > 0");
    if (h > cfg.link.prop_delay_s / 10.0 + 1e-15)
        throw std::invalid_argument("fluid: step_s must be <= prop_delay_s/10");
    return h;
}

// Instantaneous drop probability seen by arrivals in a given state.
inline double drop_prob_of(const ScenarioConfig& cfg, const FluidState& s) {
    if (cfg.red) return red_drop_prob(s.q_avg_packets, *cfg.red);
    // DropTail: lossless until the buffer fills; at the limit the excess
    // share of the offered load is shed so the queue stays pinned at B.
    double buffer = cfg.link.buffer_packets;
    if (s.q_packets < buffer - 1e-9) return 0.0;
    double rtt = cfg.link.prop_delay_s + queue_delay_s(s.q_packets, cfg.link);
    double offered = (cfg.flows.n_tcp * s.w_packets + cfg.flows.n_ledbat * s.z_packets) / rtt;
    double capacity = cfg.link.capacity_pkts_per_s();
    return offered > capacity ? 1.0 - capacity / offered : 0.0;
}

// Right-hand side of the delay-differential system at time t.
inline FluidState derivatives(double t, const FluidState& state, const StateHistory& history,
                              const ScenarioConfig& cfg, const FluidOptions& opts = {}) {
    const double capacity = cfg.link.capacity_pkts_per_s();
    const double tau = cfg.ledbat.target_s;
    const double rtt = cfg.link.prop_delay_s + queue_delay_s(state.q_packets, cfg.link);

    const FluidState past = history.lookup(t - rtt);
    const double rtt_past = cfg.link.prop_delay_s + queue_delay_s(past.q_packets, cfg.link);
    const double p_past = drop_prob_of(cfg, past);

    const double delay_now = queue_delay_s(state.q_packets, cfg.link);
    double drift = (tau - delay_now) / tau;
    if (opts.clamp_ledbat_drift) drift = std::max(0.0, drift);

    FluidState rate;
    rate.w_packets = 1.0 / rtt - state.w_packets * past.w_packets / (2.0 * rtt_past) * p_past;
    rate.z_packets = cfg.ledbat.gain * drift / rtt -
                     state.z_packets * past.z_packets / (2.0 * rtt_past) * p_past;
    // the windows live on [0, inf); at the floor the outward component is
    // projected away, which is what makes the starved fixed point (Z* = 0
    // with negative drift) stationary
    if (state.w_packets <= 0.0 && rate.w_packets < 0.0) rate.w_packets = 0.0;
    if (state.z_packets <= 0.0 && rate.z_packets < 0.0) rate.z_packets = 0.0;

    const double p_now = drop_prob_of(cfg, state);
    const double inflow = (cfg.flows.n_tcp * state.w_packets + cfg.flows.n_ledbat * state.z_packets) /
                          rtt * (1.0 - p_now);
    const bool serving = state.q_packets > 0.0 || inflow >= capacity;
    rate.q_packets = inflow - (serving ? capacity : 0.0);

    if (cfg.red) {
        const double w = -std::log1p(-cfg.red->ewma_weight);  // -ln(1-alpha) > 0
        rate.q_avg_packets = w / cfg.red->sample_period_s * (state.q_packets - state.q_avg_packets);
    } else {
        rate.q_avg_packets = 0.0;
    }
    return rate;
}

struct Trajectory {
    std::vector<double> times;
    std::vector<FluidState> states;
    std::vector<double> rho;  // W/(W+Z), 1 when Z = 0
    std::vector<double> p;    // drop probability along the path
};

inline double share_ratio(const FluidState& s) {
    if (s.z_packets <= 0.0) return 1.0;
    double sum = s.w_packets + s.z_packets;
    return sum > 0.0 ? s.w_packets / sum : 1.0;
}

struct DivergenceError : std::runtime_error {
    double t_last;
    FluidState last_state;
    DivergenceError(double t, const FluidState& s)
        : std::runtime_error("fluid: state diverged (non-finite) at t=" + std::to_string(t) +
                             "; last finite state W=" + std::to_string(s.w_packets) +
                             " Z=" + std::to_string(s.z_packets) +
                             " q=" + std::to_string(s.q_packets) +
                             " Q=" + std::to_string(s.q_avg_packets)),
          t_last(t), last_state(s) {}
};

namespace detail {

inline FluidState sanitize(FluidState s, const ScenarioConfig& cfg) {
    s.w_packets = std::max(0.0, s.w_packets);
    s.z_packets = std::max(0.0, s.z_packets);
    s.q_packets = std::clamp(s.q_packets, 0.0, static_cast<double>(cfg.link.buffer_packets));
    s.q_avg_packets = std::max(0.0, s.q_avg_packets);
    return s;
}

}  // namespace detail

// Classical fixed-step RK4 with the step history as interpolation table.
// The observer is called at t0 and after every accepted step with
// (t, state, drop probability); returning false stops the run early.
template <class Observer>
inline void integrate_observe(const ScenarioConfig& cfg, const FluidState& initial, double t_end,
                              const FluidOptions& opts, Observer&& observe) {
    cfg.validate();
    const double h = resolve_step(cfg, opts);
    FluidState y = detail::sanitize(initial, cfg);
    StateHistory history(0.0, y);

    if (!observe(0.0, y, drop_prob_of(cfg, y))) return;

    auto eval = [&](double t, const FluidState& s) {
        return derivatives(t, detail::sanitize(s, cfg), history, cfg, opts);
    };

    const auto n_steps = static_cast<size_t>(std::ceil(t_end / h - 1e-9));
    for (size_t k = 0; k < n_steps; ++k) {
        const double t = static_cast<double>(k) * h;
        const FluidState k1 = eval(t, y);
        const FluidState k2 = eval(t + h / 2, y + (h / 2) * k1);
        const FluidState k3 = eval(t + h / 2, y + (h / 2) * k2);
        const FluidState k4 = eval(t + h, y + h * k3);
        FluidState next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!next.finite()) throw DivergenceError(t, y);
        next = detail::sanitize(next, cfg);
        const double t_next = static_cast<double>(k + 1) * h;
        history.push(t_next, next);
        y = next;
        if (!observe(t_next, y, drop_prob_of(cfg, y))) return;
    }
}

// Integrates over [0, cfg.horizon_s] and returns the sampled trajectory.
inline Trajectory integrate(const ScenarioConfig& cfg, const FluidState& initial,
                            const FluidOptions& opts = {}) {
    Trajectory traj;
    integrate_observe(cfg, initial, cfg.horizon_s, opts, [&](double t, const FluidState& s, double p) {
        traj.times.push_back(t);
        traj.states.push_back(s);
        traj.rho.push_back(share_ratio(s));
        traj.p.push_back(p);
        return true;
    });
    return traj;
}

struct ConvergeResult {
    FluidState final_state;
    double t_final = 0.0;
    bool settled = false;
};

// Declares (W, Z, q) settled once the worst deviation from the trailing
// 10-RTT window mean falls below tol in relative terms for all three
// variables; an oscillation only counts as settled once its amplitude has
// decayed below the band, not when the state crosses its own mean.
class SettleDetector {
  public:
    SettleDetector(const ScenarioConfig& cfg, double tol, double check_period_s = 0.1)
        : cfg_(cfg), tol_(tol), check_period_(check_period_s) {
        if (!(tol > 0)) throw std::invalid_argument("SettleDetector: tol must be > 0");
    }

    // Feed each accepted step; returns true the first time the state settles.
    bool feed(double t, const FluidState& s) {
        ts_.push_back(t);
        ws_.push_back(s.w_packets);
        zs_.push_back(s.z_packets);
        qs_.push_back(s.q_packets);
        const double rtt = cfg_.link.prop_delay_s + queue_delay_s(s.q_packets, cfg_.link);
        if (t < rtt || t < next_check_) return false;
        next_check_ = t + check_period_;
        return window_settled(t, rtt);
    }

  private:
    bool window_settled(double t, double rtt) const {
        auto begin = std::lower_bound(ts_.begin(), ts_.end(), t - 10.0 * rtt);
        size_t i0 = static_cast<size_t>(begin - ts_.begin());
        size_t n = ts_.size() - i0;
        if (n < 2) return false;
        for (const auto* v : {&ws_, &zs_, &qs_}) {
            double lo = (*v)[i0], hi = lo, sum = 0.0;
            for (size_t i = i0; i < v->size(); ++i) {
                double x = (*v)[i];
                lo = std::min(lo, x);
                hi = std::max(hi, x);
                sum += x;
            }
            double mean = sum / static_cast<double>(n);
            double dev = std::max(hi - mean, mean - lo);
            if (dev / std::max(std::abs(mean), 1.0) >= tol_) return false;
        }
        return true;
    }

    const ScenarioConfig& cfg_;
    double tol_;
    double check_period_;
    double next_check_ = 0.0;
    std::vector<double> ts_, ws_, zs_, qs_;
};

// Runs until the settle detector fires or t_max is reached; returns the
// final state either way plus whether it settled.
inline ConvergeResult converge(const ScenarioConfig& cfg, const FluidState& initial, double tol,
                               double t_max, const FluidOptions& opts = {}) {
    ConvergeResult result;
    SettleDetector detector(cfg, tol);
    integrate_observe(cfg, initial, t_max, opts, [&](double t, const FluidState& s, double) {
        result.final_state = s;
        result.t_final = t;
        if (detector.feed(t, s)) {
            result.settled = true;
            return false;
        }
        return true;
    });
    return result;
}

}  // namespace bloatline::fluid
