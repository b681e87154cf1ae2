// config.hpp
// Flat key=value scenario files, per-key overrides, and the canonical
// config serialization used to stamp every CSV with a reproducibility hash.
//
// Keys are the field names of the parameter structs (all distinct), and a
// dotted form is accepted too: "red.min_th_packets" == "min_th_packets".
// A file that carries no red.* keys describes a DropTail bottleneck;
// setting any red key on a DropTail base instantiates the default profile
// first and then applies the override.
#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bloatline/core.hpp"

namespace bloatline {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline double parse_real(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value '" + value + "' for key '" + key + "'");
    }
}

inline long long parse_int(const std::string& key, const std::string& value) {
    double v = parse_real(key, value);
    long long r = std::llround(v);
    if (std::abs(v - static_cast<double>(r)) > 1e-9)
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + value + "'");
    return r;
}

inline RedProfile default_red_for(const LinkParams& link) {
    RedProfile red;
    red.sample_period_s = link.packet_time_s();
    if (red.max_th_packets > link.buffer_packets) red.max_th_packets = link.buffer_packets;
    return red;
}

}  // namespace detail

// Applies one key=value entry. The key may be bare ("target_s") or dotted
// ("ledbat.target_s"); unknown keys are a hard error so typos cannot
// silently fall through a sweep.
inline void apply_override(ScenarioConfig& cfg, const std::string& raw_key, const std::string& value) {
    using namespace detail;
    std::string key = raw_key;
    if (auto dot = key.rfind('.'); dot != std::string::npos) key = key.substr(dot + 1);

    auto red = [&]() -> RedProfile& {
        if (!cfg.red) cfg.red = default_red_for(cfg.link);
        return *cfg.red;
    };

    if (key == "red") {  // explicit discipline switch: red=0 forces DropTail
        if (parse_int(raw_key, value) != 0)
            red();
        else
            cfg.red.reset();
    }
    else if (key == "capacity_bits_per_s") cfg.link.capacity_bits_per_s = parse_real(raw_key, value);
    else if (key == "packet_size_bytes") cfg.link.packet_size_bytes = static_cast<int>(parse_int(raw_key, value));
    else if (key == "buffer_packets") cfg.link.buffer_packets = static_cast<int>(parse_int(raw_key, value));
    else if (key == "prop_delay_s") cfg.link.prop_delay_s = parse_real(raw_key, value);
    else if (key == "jitter_s") cfg.link.jitter_s = parse_real(raw_key, value);
    else if (key == "min_th_packets") red().min_th_packets = parse_real(raw_key, value);
    else if (key == "max_th_packets") red().max_th_packets = parse_real(raw_key, value);
    else if (key == "max_p") red().max_p = parse_real(raw_key, value);
    else if (key == "ewma_weight") red().ewma_weight = parse_real(raw_key, value);
    else if (key == "sample_period_s") red().sample_period_s = parse_real(raw_key, value);
    else if (key == "target_s") cfg.ledbat.target_s = parse_real(raw_key, value);
    else if (key == "gain") cfg.ledbat.gain = parse_real(raw_key, value);
    else if (key == "n_tcp") cfg.flows.n_tcp = static_cast<int>(parse_int(raw_key, value));
    else if (key == "n_ledbat") cfg.flows.n_ledbat = static_cast<int>(parse_int(raw_key, value));
    else if (key == "horizon_s") cfg.horizon_s = parse_real(raw_key, value);
    else if (key == "rng_seed") cfg.rng_seed = static_cast<std::uint64_t>(parse_int(raw_key, value));
    else throw ConfigError("config: unknown key '" + raw_key + "'");
}

// True if the dotted path or bare name addresses exactly one config field.
inline bool valid_config_key(const std::string& raw_key) {
    ScenarioConfig probe = ScenarioConfig::defaults();
    try {
        apply_override(probe, raw_key, "1");
        return true;
    } catch (const ConfigError&) {
        return false;
    }
}

// Parses a flat key=value file. Blank lines and '#' comments are skipped.
// The scenario starts from DropTail-with-default-link and becomes RED only
// if the file names a red key.
inline ScenarioConfig parse_config_text(const std::string& text, const std::string& origin = "<string>") {
    ScenarioConfig cfg;
    cfg.red.reset();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool delta_given = false;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = detail::trim(line);
        if (s.empty() || s[0] == '#') continue;
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + origin + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = detail::trim(s.substr(0, eq));
        std::string value = detail::trim(s.substr(eq + 1));
        std::string bare = key.substr(key.rfind('.') == std::string::npos ? 0 : key.rfind('.') + 1);
        if (bare == "sample_period_s") delta_given = true;
        apply_override(cfg, key, value);
    }
    // delta defaults to one packet service time unless the file pinned it
    if (cfg.red && !delta_given) cfg.red->sample_period_s = cfg.link.packet_time_s();
    return cfg;
}

inline ScenarioConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

// Canonical text form: fixed key order, full-precision values. Two configs
// serialize identically iff every field matches bit for bit.
inline std::string canonical_text(const ScenarioConfig& cfg) {
    char buf[64];
    std::string out;
    auto put = [&](const char* key, double v) {
        std::snprintf(buf, sizeof(buf), "%s=%.17g\n", key, v);
        out += buf;
    };
    put("capacity_bits_per_s", cfg.link.capacity_bits_per_s);
    put("packet_size_bytes", cfg.link.packet_size_bytes);
    put("buffer_packets", cfg.link.buffer_packets);
    put("prop_delay_s", cfg.link.prop_delay_s);
    put("jitter_s", cfg.link.jitter_s);
    out += cfg.red ? "red=1\n" : "red=0\n";
    if (cfg.red) {
        put("min_th_packets", cfg.red->min_th_packets);
        put("max_th_packets", cfg.red->max_th_packets);
        put("max_p", cfg.red->max_p);
        put("ewma_weight", cfg.red->ewma_weight);
        put("sample_period_s", cfg.red->sample_period_s);
    }
    put("target_s", cfg.ledbat.target_s);
    put("gain", cfg.ledbat.gain);
    put("n_tcp", cfg.flows.n_tcp);
    put("n_ledbat", cfg.flows.n_ledbat);
    put("horizon_s", cfg.horizon_s);
    std::snprintf(buf, sizeof(buf), "rng_seed=%llu\n", static_cast<unsigned long long>(cfg.rng_seed));
    out += buf;
    return out;
}

inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string config_hash(const ScenarioConfig& cfg) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_text(cfg))));
    return buf;
}

}  // namespace bloatline
