// equilibrium.hpp
// Stationary point of the fluid system under an early-drop (RED) profile.
//
// With p* = f(q*) and kappa = 1/(1 - 1/beta) the per-loss decrease factor
// beta turns into the average-window constant:
//   W* = sqrt(kappa / p*)
//   Z* = sqrt(kappa / p* * (tau - d*)/tau)   if d* < tau, else 0
// and q* is the unique root on [0, max_th] of
//   (Tp + q/C) sqrt(f(q)) / (1 - f(q))
//     = (sqrt(kappa) N_W + sqrt(kappa (tau - d)/tau) N_Z) / C   if d < tau
//     = sqrt(kappa) N_W / C                                     otherwise
// where d = q/C is the queuing delay of q. The left side grows from 0,
// the right side is non-increasing, which makes the root unique whenever
// the boundary inequality at q = max_th (existence_check) holds.
//
// beta = 2 is the plain halving model; beta = 1.5 (kappa = 3) is the
// refined variant that compensates the halving model's underestimate of
// the average window. In the starved regime the refined TCP share is
// additionally capped by the one-packet-per-RTT floor that delay-based
// flows keep even when fully yielded:
//   rho* <= 1 - N_Z / (C Tp / P + q*)
#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "bloatline/core.hpp"

namespace bloatline::equilibrium {

enum class Regime { ledbat_active, ledbat_starved };

inline const char* regime_name(Regime r) {
    return r == Regime::ledbat_active ? "ledbat_active" : "ledbat_starved";
}

struct EquilibriumPoint {
    double q_star_packets = 0.0;
    double q_avg_star_packets = 0.0;  // equals q_star
    double p_star = 0.0;
    double w_star_packets = 0.0;
    double z_star_packets = 0.0;
    double rho_star = 1.0;
    Regime regime = Regime::ledbat_starved;
    bool exists = false;
};

namespace detail {

inline double kappa_of(double beta) {
    if (!(beta > 1.0)) throw std::invalid_argument("equilibrium: decrease factor beta must be > 1");
    return 1.0 / (1.0 - 1.0 / beta);
}

inline const RedProfile& require_red(const ScenarioConfig& cfg) {
    if (!cfg.red) throw std::invalid_argument("equilibrium: scenario has no RED profile (DropTail)");
    return *cfg.red;
}

inline double lhs(double q_packets, const ScenarioConfig& cfg) {
    const RedProfile& red = *cfg.red;
    double f = red_drop_prob(q_packets, red);
    if (f >= 1.0 - 1e-15) return std::numeric_limits<double>::infinity();
    double delay = cfg.link.prop_delay_s + queue_delay_s(q_packets, cfg.link);
    return delay * std::sqrt(f) / (1.0 - f);
}

inline double rhs(double q_packets, const ScenarioConfig& cfg, double kappa) {
    double c = cfg.link.capacity_pkts_per_s();
    double tau = cfg.ledbat.target_s;
    double d = queue_delay_s(q_packets, cfg.link);
    double tcp_term = std::sqrt(kappa) * cfg.flows.n_tcp;
    if (d < tau) return (tcp_term + std::sqrt(kappa * (tau - d) / tau) * cfg.flows.n_ledbat) / c;
    return tcp_term / c;
}

}  // namespace detail

// Signed residual of the fixed-point equation at queue size q (packets).
// Negative below the root, positive above; +inf where f(q) = 1.
inline double fixed_point_residual(double q_packets, const ScenarioConfig& cfg, double beta = 2.0) {
    detail::require_red(cfg);
    double kappa = detail::kappa_of(beta);
    double l = detail::lhs(q_packets, cfg);
    if (std::isinf(l)) return l;
    return l - detail::rhs(q_packets, cfg, kappa);
}

// Boundary inequality at q = max_th: a root exists iff the left side of
// the fixed-point equation has overtaken the right side by the end of the
// ramp. max_p = 1 sends the left side to infinity, so it always passes.
inline bool existence_check(const ScenarioConfig& cfg, double beta = 2.0) {
    const RedProfile& red = detail::require_red(cfg);
    double kappa = detail::kappa_of(beta);
    if (red.max_p >= 1.0 - 1e-15) return true;
    double l = detail::lhs(red.max_th_packets, cfg);
    return l > detail::rhs(red.max_th_packets, cfg, kappa);
}

// Locates the root by a 1024-interval scan followed by bisection down to
// a 1e-9 packet bracket, then fills in the closed-form fields. When the
// existence inequality fails, the returned point carries the boundary
// evaluation at q = max_th with exists = false.
inline EquilibriumPoint solve(const ScenarioConfig& cfg, double beta = 2.0) {
    const RedProfile& red = detail::require_red(cfg);
    const double kappa = detail::kappa_of(beta);
    const double tau = cfg.ledbat.target_s;

    auto fill = [&](double q, bool exists) {
        EquilibriumPoint pt;
        pt.q_star_packets = q;
        pt.q_avg_star_packets = q;
        pt.p_star = red_drop_prob(q, red);
        pt.exists = exists;
        double d = queue_delay_s(q, cfg.link);
        pt.regime = d < tau ? Regime::ledbat_active : Regime::ledbat_starved;
        if (pt.p_star > 0.0) {
            pt.w_star_packets = std::sqrt(kappa / pt.p_star);
            pt.z_star_packets = pt.regime == Regime::ledbat_active
                                    ? std::sqrt(kappa / pt.p_star * (tau - d) / tau)
                                    : 0.0;
        }
        pt.rho_star = pt.regime == Regime::ledbat_active
                          ? 1.0 / (1.0 + std::sqrt((tau - d) / tau))
                          : 1.0;
        return pt;
    };

    if (!existence_check(cfg, beta)) return fill(red.max_th_packets, false);

    const int n = 1024;
    const double hi = red.max_th_packets;
    double prev_q = 0.0;
    double prev_r = fixed_point_residual(0.0, cfg, beta);
    if (prev_r == 0.0) return fill(0.0, true);
    double lo_q = -1.0, hi_q = -1.0;
    for (int i = 1; i <= n; ++i) {
        double q = hi * i / n;
        double r = fixed_point_residual(q, cfg, beta);
        if (r == 0.0) return fill(q, true);
        if ((prev_r < 0.0) != (r < 0.0)) {
            lo_q = prev_q;
            hi_q = q;
            break;
        }
        prev_q = q;
        prev_r = r;
    }
    if (lo_q < 0.0)
        throw std::logic_error(
            "equilibrium: existence holds but no sign change on [0, max_th]; residual(0)=" +
            std::to_string(fixed_point_residual(0.0, cfg, beta)) + " residual(max_th)=" +
            std::to_string(fixed_point_residual(hi, cfg, beta)));

    // tighter than the 1e-9 contract so closed-form fields built from the
    // root keep the dynamics residual below 1e-9 too
    bool lo_neg = fixed_point_residual(lo_q, cfg, beta) < 0.0;
    while (hi_q - lo_q > 1e-12) {
        double mid = 0.5 * (lo_q + hi_q);
        double r = fixed_point_residual(mid, cfg, beta);
        if (r == 0.0) return fill(mid, true);
        if ((r < 0.0) == lo_neg)
            lo_q = mid;
        else
            hi_q = mid;
    }
    return fill(0.5 * (lo_q + hi_q), true);
}

// Upper bound on the TCP share when delay-based flows are reduced to their
// one-packet-per-RTT floor: each of the N_Z flows still occupies one slot
// of the C*Tp/P + q* packets the pipe holds at the equilibrium.
inline double starved_share_cap(const ScenarioConfig& cfg, double q_star_packets) {
    double pipe = cfg.link.bdp_packets() + q_star_packets;
    double cap = 1.0 - cfg.flows.n_ledbat / pipe;
    return std::clamp(cap, 0.0, 1.0);
}

// TCP share under the refined model: the fixed point is re-solved with the
// decrease factor set to `beta` (1.5 by default), and in the starved
// regime the share is capped by the one-packet-per-RTT floor.
inline double refined_rho(const ScenarioConfig& cfg, const EquilibriumPoint& base, double beta = 1.5) {
    if (!base.exists) return base.rho_star;
    EquilibriumPoint refined = solve(cfg, beta);
    if (refined.regime == Regime::ledbat_starved && cfg.flows.n_ledbat > 0)
        return std::min(refined.rho_star, starved_share_cap(cfg, refined.q_star_packets));
    return refined.rho_star;
}

}  // namespace bloatline::equilibrium
