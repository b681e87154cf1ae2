// packet_sim.hpp
// Per-packet discrete-event simulator of window-based sources through one
// FIFO bottleneck, used to validate the fluid model. Deliberately minimal
// transport machinery: congestion avoidance only (no slow start, timeouts
// or SACK), explicit drop notifications after one reverse propagation
// delay instead of duplicate-ack detection, and at most one multiplicative
// decrease per RTT. Identical (config, seed) pairs replay bit-identically.
#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <queue>
#include <random>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "bloatline/core.hpp"

namespace bloatline::sim {

enum class FlowKind { tcp, ledbat };

struct FlowState {
    FlowKind kind = FlowKind::tcp;
    double cwnd_packets = 1.0;   // floored at 1: even a fully yielded flow probes the queue
    int in_flight = 0;
    double base_owd_s = std::numeric_limits<double>::infinity();  // running min OWD
    double last_decrease_t = -std::numeric_limits<double>::infinity();
    double prop_delay_s = 0.0;   // this flow's round-trip propagation (Tp + jitter draw)
    double srtt_s = 0.0;         // latest RTT sample, gates the once-per-RTT decrease
};

// Congestion avoidance: one packet per RTT, spread over the window.
inline FlowState on_ack_tcp(FlowState flow) {
    flow.cwnd_packets += 1.0 / flow.cwnd_packets;
    return flow;
}

// Delay-based ramp: the increment shrinks linearly with the estimated
// queuing delay (OWD minus base OWD) and turns negative past the target.
inline FlowState on_ack_ledbat(FlowState flow, double owd_sample_s, double tau_s, double gain = 1.0) {
    flow.base_owd_s = std::min(flow.base_owd_s, owd_sample_s);
    double queuing_delay = owd_sample_s - flow.base_owd_s;
    flow.cwnd_packets += gain * (1.0 / flow.cwnd_packets) * (tau_s - queuing_delay) / tau_s;
    flow.cwnd_packets = std::max(1.0, flow.cwnd_packets);
    return flow;
}

// Multiplicative decrease, at most once per RTT estimate.
inline FlowState on_loss(FlowState flow, double t) {
    if (t - flow.last_decrease_t > flow.srtt_s) {
        flow.cwnd_packets = std::max(1.0, flow.cwnd_packets / 2.0);
        flow.last_decrease_t = t;
    }
    return flow;
}

struct Packet {
    int flow = 0;
    double send_t = 0.0;
};

enum class Discipline { droptail, red };

struct BottleneckQueue {
    std::deque<Packet> backlog;
    double capacity_pkts_per_s = 100.0;
    int limit_packets = 100;
    Discipline discipline = Discipline::droptail;
    double ewma_avg = 0.0;                 // RED averaged queue, updated per arrival
    std::optional<RedProfile> red;

    double service_time_s() const { return 1.0 / capacity_pkts_per_s; }
};

// Admission decision. DropTail rejects only a full buffer. RED first
// advances the arrival-sampled EWMA, then drops with probability
// f(ewma); drops are i.i.d. per arrival (no drop-count spreading), which
// is what the fluid loss law assumes.
inline bool enqueue(BottleneckQueue& queue, const Packet& pkt, std::mt19937_64& rng) {
    if (queue.discipline == Discipline::red) {
        const RedProfile& red = *queue.red;
        queue.ewma_avg = (1.0 - red.ewma_weight) * queue.ewma_avg +
                         red.ewma_weight * static_cast<double>(queue.backlog.size());
        if (static_cast<int>(queue.backlog.size()) >= queue.limit_packets) return false;
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        if (uni(rng) < red_drop_prob(queue.ewma_avg, red)) return false;
        queue.backlog.push_back(pkt);
        return true;
    }
    if (static_cast<int>(queue.backlog.size()) >= queue.limit_packets) return false;
    queue.backlog.push_back(pkt);
    return true;
}

struct SimTrace {
    struct Counters {
        std::int64_t sent = 0;
        std::int64_t delivered = 0;          // acked at the sender
        std::int64_t dropped = 0;            // drop notices processed at the sender
        std::int64_t in_flight = 0;
        std::int64_t delivered_window = 0;   // acked inside the measurement window
    };

    std::vector<FlowKind> kinds;
    std::vector<double> sample_times;                // every 10 ms
    std::vector<std::vector<double>> cwnd_series;    // [flow][sample]
    std::vector<double> queue_series;                // backlog in packets
    std::vector<double> ewma_series;                 // RED average (0 under DropTail)
    std::vector<Counters> counters;

    double meas_start_s = 0.0;
    double meas_len_s = 0.0;

    // summary over the measurement window
    double rho_emp = 1.0;             // per-flow TCP goodput share
    double goodput_tcp_pps = 0.0;     // mean per-flow
    double goodput_ledbat_pps = 0.0;  // mean per-flow
    double drop_rate = 0.0;           // whole-run dropped/sent
    double mean_queue_pkts = 0.0;
    double utilization = 0.0;
};

namespace detail {

enum class EventKind { departure, ack, drop_notice, sample };

struct Event {
    double t = 0.0;
    std::uint64_t seq = 0;  // insertion order breaks time ties deterministically
    EventKind kind = EventKind::sample;
    int flow = -1;
    double owd_s = 0.0;
    double send_t = 0.0;
};

struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
        return std::tie(a.t, a.seq) > std::tie(b.t, b.seq);
    }
};

}  // namespace detail

// Event-driven run over [0, horizon]. Deterministic service at one packet
// per P*8/C seconds; acks return one propagation delay after the packet
// leaves the queue; the trace is sampled every 10 ms and summary
// statistics cover the second half of the horizon.
inline SimTrace run(const ScenarioConfig& cfg) {
    using detail::Event;
    using detail::EventKind;
    cfg.validate();

    const int n_flows = cfg.flows.n_tcp + cfg.flows.n_ledbat;
    const double horizon = cfg.horizon_s;
    const double sample_period = 0.01;

    std::mt19937_64 rng(cfg.rng_seed);
    std::uniform_real_distribution<double> jitter_draw(0.0, cfg.link.jitter_s);

    BottleneckQueue queue;
    queue.capacity_pkts_per_s = cfg.link.capacity_pkts_per_s();
    queue.limit_packets = cfg.link.buffer_packets;
    queue.discipline = cfg.red ? Discipline::red : Discipline::droptail;
    queue.red = cfg.red;

    std::vector<FlowState> flows(static_cast<size_t>(n_flows));
    for (int i = 0; i < n_flows; ++i) {
        FlowState& f = flows[static_cast<size_t>(i)];
        f.kind = i < cfg.flows.n_tcp ? FlowKind::tcp : FlowKind::ledbat;
        f.prop_delay_s = cfg.link.prop_delay_s + (cfg.link.jitter_s > 0 ? jitter_draw(rng) : 0.0);
        f.srtt_s = f.prop_delay_s;
    }

    SimTrace trace;
    trace.meas_start_s = horizon / 2.0;
    trace.meas_len_s = horizon - trace.meas_start_s;
    trace.counters.resize(static_cast<size_t>(n_flows));
    trace.cwnd_series.resize(static_cast<size_t>(n_flows));
    for (const FlowState& f : flows) trace.kinds.push_back(f.kind);

    std::priority_queue<Event, std::vector<Event>, detail::EventAfter> events;
    std::uint64_t next_seq = 0;
    auto schedule = [&](double t, EventKind kind, int flow = -1, double owd = 0.0, double send_t = 0.0) {
        events.push(Event{t, next_seq++, kind, flow, owd, send_t});
    };

    bool server_busy = false;
    double now = 0.0;
    const double service = queue.service_time_s();

    auto try_send = [&](int i) {
        FlowState& f = flows[static_cast<size_t>(i)];
        SimTrace::Counters& c = trace.counters[static_cast<size_t>(i)];
        while (f.in_flight < static_cast<int>(std::floor(f.cwnd_packets + 1e-9))) {
            ++c.sent;
            ++f.in_flight;
            c.in_flight = f.in_flight;
            Packet pkt{i, now};
            if (enqueue(queue, pkt, rng)) {
                if (!server_busy) {
                    server_busy = true;
                    schedule(now + service, EventKind::departure);
                }
            } else {
                schedule(now + f.prop_delay_s / 2.0, EventKind::drop_notice, i, 0.0, now);
            }
        }
    };

    schedule(0.0, EventKind::sample);
    for (int i = 0; i < n_flows; ++i) try_send(i);

    while (!events.empty()) {
        Event ev = events.top();
        if (ev.t > horizon + 1e-12) break;
        events.pop();
        if (ev.t < now - 1e-9) throw std::logic_error("packet_sim: event time went backwards");
        now = std::max(now, ev.t);

        switch (ev.kind) {
            case EventKind::departure: {
                Packet pkt = queue.backlog.front();
                queue.backlog.pop_front();
                const FlowState& f = flows[static_cast<size_t>(pkt.flow)];
                double owd = (now - pkt.send_t) + f.prop_delay_s / 2.0;
                schedule(now + f.prop_delay_s, EventKind::ack, pkt.flow, owd, pkt.send_t);
                if (!queue.backlog.empty())
                    schedule(now + service, EventKind::departure);
                else
                    server_busy = false;
                break;
            }
            case EventKind::ack: {
                FlowState& f = flows[static_cast<size_t>(ev.flow)];
                SimTrace::Counters& c = trace.counters[static_cast<size_t>(ev.flow)];
                --f.in_flight;
                c.in_flight = f.in_flight;
                ++c.delivered;
                if (now >= trace.meas_start_s) ++c.delivered_window;
                f.srtt_s = now - ev.send_t;
                f = f.kind == FlowKind::tcp
                        ? on_ack_tcp(f)
                        : on_ack_ledbat(f, ev.owd_s, cfg.ledbat.target_s, cfg.ledbat.gain);
                try_send(ev.flow);
                break;
            }
            case EventKind::drop_notice: {
                FlowState& f = flows[static_cast<size_t>(ev.flow)];
                SimTrace::Counters& c = trace.counters[static_cast<size_t>(ev.flow)];
                --f.in_flight;
                c.in_flight = f.in_flight;
                ++c.dropped;
                f = on_loss(f, now);
                try_send(ev.flow);
                break;
            }
            case EventKind::sample: {
                if (!queue.backlog.empty() && !server_busy)
                    throw std::logic_error("packet_sim: server idle with backlog");
                trace.sample_times.push_back(now);
                trace.queue_series.push_back(static_cast<double>(queue.backlog.size()));
                trace.ewma_series.push_back(queue.discipline == Discipline::red ? queue.ewma_avg : 0.0);
                for (int i = 0; i < n_flows; ++i) {
                    const SimTrace::Counters& c = trace.counters[static_cast<size_t>(i)];
                    if (c.sent != c.delivered + c.dropped + c.in_flight)
                        throw std::logic_error("packet_sim: per-flow packet conservation violated");
                    trace.cwnd_series[static_cast<size_t>(i)].push_back(flows[static_cast<size_t>(i)].cwnd_packets);
                }
                if (now + sample_period <= horizon + 1e-12)
                    schedule(now + sample_period, EventKind::sample);
                break;
            }
        }
    }

    // summary over the measurement window
    double tcp_gp = 0.0, ledbat_gp = 0.0;
    std::int64_t sent_total = 0, dropped_total = 0, delivered_window_total = 0;
    for (int i = 0; i < n_flows; ++i) {
        const SimTrace::Counters& c = trace.counters[static_cast<size_t>(i)];
        double gp = static_cast<double>(c.delivered_window) / trace.meas_len_s;
        (flows[static_cast<size_t>(i)].kind == FlowKind::tcp ? tcp_gp : ledbat_gp) += gp;
        sent_total += c.sent;
        dropped_total += c.dropped;
        delivered_window_total += c.delivered_window;
    }
    if (cfg.flows.n_tcp > 0) trace.goodput_tcp_pps = tcp_gp / cfg.flows.n_tcp;
    if (cfg.flows.n_ledbat > 0) trace.goodput_ledbat_pps = ledbat_gp / cfg.flows.n_ledbat;
    double denom = trace.goodput_tcp_pps + trace.goodput_ledbat_pps;
    trace.rho_emp = denom > 0.0 ? trace.goodput_tcp_pps / denom : (cfg.flows.n_tcp > 0 ? 1.0 : 0.0);
    trace.drop_rate = sent_total > 0 ? static_cast<double>(dropped_total) / static_cast<double>(sent_total) : 0.0;
    trace.utilization = delivered_window_total /
                        (cfg.link.capacity_pkts_per_s() * trace.meas_len_s);

    double qsum = 0.0;
    std::int64_t qn = 0;
    for (size_t k = 0; k < trace.sample_times.size(); ++k) {
        if (trace.sample_times[k] >= trace.meas_start_s) {
            qsum += trace.queue_series[k];
            ++qn;
        }
    }
    trace.mean_queue_pkts = qn > 0 ? qsum / static_cast<double>(qn) : 0.0;
    return trace;
}

inline SimTrace run_with_seed(ScenarioConfig cfg, std::uint64_t seed) {
    cfg.rng_seed = seed;
    return run(cfg);
}

}  // namespace bloatline::sim
