// core.hpp
// Shared parameter model and unit conventions for the bottleneck scenario.
//
// Canonical internal units used at every module boundary:
//   windows and queues  -> packets
//   time                -> seconds
//   link capacity       -> packets per second (derived from bits/s and MTU)
// The LEDBAT target tau is stored as a delay in seconds; its value in
// packets is derived through the link rate when needed.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace bloatline {

struct LinkParams {
    double capacity_bits_per_s = 1e6;  // C
    int packet_size_bytes = 1250;      // P, full-size data packets
    int buffer_packets = 100;          // B
    double prop_delay_s = 0.05;        // Tp, round-trip propagation component
    double jitter_s = 0.001;           // per-flow extra propagation, drawn once in [0, jitter_s]

    double capacity_pkts_per_s() const { return capacity_bits_per_s / (8.0 * packet_size_bytes); }
    double packet_time_s() const { return 1.0 / capacity_pkts_per_s(); }
    double max_queue_delay_s() const { return buffer_packets * packet_time_s(); }
    // bandwidth-delay product of the propagation path, in packets
    double bdp_packets() const { return capacity_pkts_per_s() * prop_delay_s; }

    void validate() const {
        if (!(capacity_bits_per_s > 0)) throw std::invalid_argument("link: capacity_bits_per_s must be > 0");
        if (packet_size_bytes <= 0) throw std::invalid_argument("link: packet_size_bytes must be > 0");
        if (buffer_packets <= 0) throw std::invalid_argument("link: buffer_packets must be > 0");
        if (!(prop_delay_s >= 0)) throw std::invalid_argument("link: prop_delay_s must be >= 0");
        if (!(jitter_s >= 0)) throw std::invalid_argument("link: jitter_s must be >= 0");
    }
};

// Early-drop profile of the queue estimator. The drop law is
//   f(Q) = 0                                   for Q < min_th
//          max_p (Q - min_th)/(max_th - min_th) for min_th <= Q <= max_th
//          1                                   for Q > max_th
// applied to the EWMA-averaged queue Q, never to the instantaneous one.
struct RedProfile {
    double min_th_packets = 10.0;
    double max_th_packets = 100.0;
    double max_p = 0.1;
    double ewma_weight = 0.002;     // alpha
    double sample_period_s = 0.01;  // delta, EWMA sampling interval of the fluid estimator

    void validate(const LinkParams& link) const {
        if (!(min_th_packets >= 0)) throw std::invalid_argument("red: min_th_packets must be >= 0");
        if (!(max_th_packets > min_th_packets)) throw std::invalid_argument("red: max_th_packets must be > min_th_packets");
        if (!(max_th_packets <= link.buffer_packets)) throw std::invalid_argument("red: max_th_packets must be <= buffer_packets");
        if (!(max_p > 0 && max_p <= 1)) throw std::invalid_argument("red: max_p must be in (0,1]");
        if (!(ewma_weight > 0 && ewma_weight < 1)) throw std::invalid_argument("red: ewma_weight must be in (0,1)");
        if (!(sample_period_s > 0)) throw std::invalid_argument("red: sample_period_s must be > 0");
    }
};

struct LedbatParams {
    double target_s = 0.1;  // tau, queuing-delay target
    double gain = 1.0;      // window ramp gain, unit by default

    void validate() const {
        if (!(target_s > 0)) throw std::invalid_argument("ledbat: target_s must be > 0");
        if (!(gain > 0)) throw std::invalid_argument("ledbat: gain must be > 0");
    }
};

struct FlowPopulation {
    int n_tcp = 1;     // N_W
    int n_ledbat = 1;  // N_Z

    void validate() const {
        if (n_tcp < 0 || n_ledbat < 0) throw std::invalid_argument("flows: counts must be >= 0");
        if (n_tcp + n_ledbat < 1) throw std::invalid_argument("flows: need at least one flow");
    }
};

struct ScenarioConfig {
    LinkParams link;
    std::optional<RedProfile> red;  // absent -> DropTail bottleneck
    LedbatParams ledbat;
    FlowPopulation flows;
    double horizon_s = 300.0;
    std::uint64_t rng_seed = 1;

    bool droptail() const { return !red.has_value(); }

    void validate() const {
        link.validate();
        if (red) red->validate(link);
        ledbat.validate();
        flows.validate();
        if (!(horizon_s > 0)) throw std::invalid_argument("horizon_s must be > 0");
        if (!(horizon_s > 10.0 * link.prop_delay_s))
            throw std::invalid_argument("horizon_s must exceed 10x prop_delay_s");
    }

    // 1 Mbps / 1250 B / B=100 / Tp=50 ms access-link scenario with the
    // moderate early-drop profile; one flow per class.
    static ScenarioConfig defaults() {
        ScenarioConfig cfg;
        cfg.red = RedProfile{};
        cfg.red->sample_period_s = cfg.link.packet_time_s();
        return cfg;
    }
};

// Drop probability of the early-drop law at averaged queue size Q (packets).
inline double red_drop_prob(double avg_queue_packets, const RedProfile& red) {
    if (avg_queue_packets < red.min_th_packets) return 0.0;
    if (avg_queue_packets > red.max_th_packets) return 1.0;
    return red.max_p * (avg_queue_packets - red.min_th_packets) /
           (red.max_th_packets - red.min_th_packets);
}

// Queuing delay of a backlog of q packets in front of this link.
inline double queue_delay_s(double queue_packets, const LinkParams& link) {
    return queue_packets / link.capacity_pkts_per_s();
}

inline double seconds_to_packets(double delay_s, const LinkParams& link) {
    return delay_s * link.capacity_pkts_per_s();
}

inline double packets_to_seconds(double packets, const LinkParams& link) {
    return packets / link.capacity_pkts_per_s();
}

}  // namespace bloatline
