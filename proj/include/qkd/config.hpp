// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkd/core.hpp"

namespace qkd {

enum class PulseClass : std::uint8_t { Signal = 0, Decoy = 1, Entrapped = 2 };

inline const char* pulse_class_name(PulseClass c) {
    switch (c) {
        case PulseClass::Signal: return "signal";
        case PulseClass::Decoy: return "decoy";
        default: return "entrapped";
    }
}

enum class SampleMode : std::uint8_t { BlockPrefix = 0, Random = 1 };

inline const char* sample_mode_name(SampleMode m) {
    return m == SampleMode::BlockPrefix ? "block_prefix" : "random";
}

struct SourceParams {
    double rep_rate_hz = 5e6;
    double mu_signal = 0.14;
    double mu_decoy = 0.10;
    double nu_entrapped = 0.10;
    // Fractions of slots carrying each pulse class; must sum to 1. The
    // Table-1 operating point is a plain BB84 run, so the default is
    // all-signal; EPCD runs reassign these.
    std::array<double, 3> class_probabilities{1.0, 0.0, 0.0};
    double intrinsic_error = 0.025;
    std::array<TimePs, 4> per_laser_timing_offset_ps{0, 0, 0, 0};

    TimePs pulse_period_ps() const {
        return static_cast<TimePs>(std::llround(1e12 / rep_rate_hz));
    }

    double mu_of(PulseClass c) const {
        switch (c) {
            case PulseClass::Signal: return mu_signal;
            case PulseClass::Decoy: return mu_decoy;
            default: return nu_entrapped;
        }
    }
};

struct ChannelParams {
    double scaling = 1.0;
    double extinction_per_m = 1.1157e-3;
    double length_m = 200.0;
    TimePs path_delay_ps = 666'000;
    double background_rate_cps = 2500.0;

    double transmission() const {
        return scaling * std::exp(-extinction_per_m * length_m);
    }
};

struct DetectorParams {
    double efficiency = 0.62;
    double dark_rate_cps = 65.0;
    TimePs jitter_sigma_ps = 350;
    TimePs dead_time_ps = 0;
    double coupling = 0.79;
    TimePs clock_tick_ps = 10'000;
};

struct ProtocolParams {
    TimePs window_ps = 10'000;        // temporal filter, full width
    double sample_fraction = 0.10;
    SampleMode sample_mode = SampleMode::Random;
    double abort_threshold = 0.11;
    std::uint32_t security_parameter = 10;
    double ec_inefficiency = 1.16;
    std::uint64_t ldpc_seed = 7;
    std::string pa_seed_source = "alice";
};

struct RunParams {
    std::uint64_t n_slots = 10'000'000;
    std::uint64_t seed = 42;
};

struct EpcdParams {
    double z_threshold = 4.5;
    TimePs slot_window_ps = 100'000;  // half-width used by the coincidence tally
};

struct AdversaryParams {
    bool suppress_multiphoton = false;
};

struct SessionConfig {
    SourceParams source;
    ChannelParams channel;
    DetectorParams detector;
    ProtocolParams protocol;
    RunParams run;
    EpcdParams epcd;
    AdversaryParams adversary;

    double session_duration_s() const {
        return static_cast<double>(run.n_slots) *
               static_cast<double>(source.pulse_period_ps()) * 1e-12;
    }
};

/// Collects every offending field instead of stopping at the first.
inline std::vector<std::string> validate(const SessionConfig& c) {
    std::vector<std::string> errs;
    auto bad = [&](const std::string& field, const std::string& why) {
        errs.push_back(field + ": " + why);
    };
    const auto& s = c.source;
    if (!(s.rep_rate_hz > 0)) bad("source.rep_rate_hz", "must be positive");
    if (!(s.mu_signal >= 0)) bad("source.mu_signal", "must be non-negative");
    if (!(s.mu_decoy >= 0)) bad("source.mu_decoy", "must be non-negative");
    if (!(s.nu_entrapped >= 0)) bad("source.nu_entrapped", "must be non-negative");
    double psum = 0;
    for (double p : s.class_probabilities) {
        psum += p;
        if (!(p >= 0.0 && p <= 1.0)) {
            bad("source.class_probabilities", "entries must be in [0,1]");
            break;
        }
    }
    if (std::abs(psum - 1.0) > 1e-9)
        bad("source.class_probabilities", "must sum to 1");
    if (!(s.intrinsic_error >= 0.0 && s.intrinsic_error <= 1.0))
        bad("source.intrinsic_error", "must be in [0,1]");
    if (s.rep_rate_hz > 0 &&
        std::abs(1e12 / s.rep_rate_hz - static_cast<double>(s.pulse_period_ps())) > 1.0)
        bad("source.rep_rate_hz", "pulse period not representable within 1 ps");

    const auto& ch = c.channel;
    if (!(ch.scaling > 0.0 && ch.scaling <= 1.0)) bad("channel.scaling", "must be in (0,1]");
    if (!(ch.extinction_per_m >= 0)) bad("channel.extinction_per_m", "must be non-negative");
    if (!(ch.length_m >= 0)) bad("channel.length_m", "must be non-negative");
    if (ch.path_delay_ps < 0) bad("channel.path_delay_ps", "must be non-negative");
    if (!(ch.background_rate_cps >= 0)) bad("channel.background_rate_cps", "must be non-negative");

    const auto& d = c.detector;
    if (!(d.efficiency >= 0.0 && d.efficiency <= 1.0)) bad("detector.efficiency", "must be in [0,1]");
    if (!(d.coupling >= 0.0 && d.coupling <= 1.0)) bad("detector.coupling", "must be in [0,1]");
    if (!(d.dark_rate_cps >= 0)) bad("detector.dark_rate_cps", "must be non-negative");
    if (d.jitter_sigma_ps < 0) bad("detector.jitter_sigma_ps", "must be non-negative");
    if (d.dead_time_ps < 0) bad("detector.dead_time_ps", "must be non-negative");
    if (d.clock_tick_ps <= 0) bad("detector.clock_tick_ps", "must be positive");

    const auto& p = c.protocol;
    if (s.rep_rate_hz > 0 && (p.window_ps <= 0 || p.window_ps > s.pulse_period_ps()))
        bad("protocol.window_ps", "must be in (0, pulse period]");
    if (!(p.sample_fraction > 0.0 && p.sample_fraction <= 1.0))
        bad("protocol.sample_fraction", "must be in (0,1]");
    if (!(p.abort_threshold > 0.0 && p.abort_threshold < 0.5))
        bad("protocol.abort_threshold", "must be in (0,0.5)");
    if (!(p.ec_inefficiency >= 1.0)) bad("protocol.ec_inefficiency", "must be >= 1");

    if (c.run.n_slots == 0) bad("run.n_slots", "must be at least 1");
    if (!(c.epcd.z_threshold > 0)) bad("epcd.z_threshold", "must be positive");
    if (s.rep_rate_hz > 0 && c.epcd.slot_window_ps > s.pulse_period_ps() / 2)
        bad("epcd.slot_window_ps", "must be at most half the pulse period");
    return errs;
}

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::vector<std::string> fields)
        : std::runtime_error(join(fields)), fields_(std::move(fields)) {}
    const std::vector<std::string>& fields() const { return fields_; }

private:
    static std::string join(const std::vector<std::string>& fields) {
        std::string msg = "invalid configuration:";
        for (const auto& f : fields) msg += "\n  " + f;
        return msg;
    }
    std::vector<std::string> fields_;
};

inline void validate_or_throw(const SessionConfig& c) {
    auto errs = validate(c);
    if (!errs.empty()) throw ConfigError(std::move(errs));
}

// ---- JSON (de)serialisation -------------------------------------------

inline void to_json(nlohmann::json& j, const SourceParams& s) {
    j = nlohmann::json{{"rep_rate_hz", s.rep_rate_hz},
                       {"mu_signal", s.mu_signal},
                       {"mu_decoy", s.mu_decoy},
                       {"nu_entrapped", s.nu_entrapped},
                       {"class_probabilities",
                        {{"signal", s.class_probabilities[0]},
                         {"decoy", s.class_probabilities[1]},
                         {"entrapped", s.class_probabilities[2]}}},
                       {"intrinsic_error", s.intrinsic_error},
                       {"per_laser_timing_offset_ps", s.per_laser_timing_offset_ps}};
}

inline void from_json(const nlohmann::json& j, SourceParams& s) {
    SourceParams d;
    s.rep_rate_hz = j.value("rep_rate_hz", d.rep_rate_hz);
    s.mu_signal = j.value("mu_signal", d.mu_signal);
    s.mu_decoy = j.value("mu_decoy", d.mu_decoy);
    s.nu_entrapped = j.value("nu_entrapped", d.nu_entrapped);
    if (j.contains("class_probabilities")) {
        const auto& cp = j.at("class_probabilities");
        s.class_probabilities[0] = cp.value("signal", d.class_probabilities[0]);
        s.class_probabilities[1] = cp.value("decoy", d.class_probabilities[1]);
        s.class_probabilities[2] = cp.value("entrapped", d.class_probabilities[2]);
    } else {
        s.class_probabilities = d.class_probabilities;
    }
    s.intrinsic_error = j.value("intrinsic_error", d.intrinsic_error);
    s.per_laser_timing_offset_ps =
        j.value("per_laser_timing_offset_ps", d.per_laser_timing_offset_ps);
}

inline void to_json(nlohmann::json& j, const ChannelParams& c) {
    j = nlohmann::json{{"scaling", c.scaling},
                       {"extinction_per_m", c.extinction_per_m},
                       {"length_m", c.length_m},
                       {"path_delay_ps", c.path_delay_ps},
                       {"background_rate_cps", c.background_rate_cps}};
}

inline void from_json(const nlohmann::json& j, ChannelParams& c) {
    ChannelParams d;
    c.scaling = j.value("scaling", d.scaling);
    c.extinction_per_m = j.value("extinction_per_m", d.extinction_per_m);
    c.length_m = j.value("length_m", d.length_m);
    c.path_delay_ps = j.value("path_delay_ps", d.path_delay_ps);
    c.background_rate_cps = j.value("background_rate_cps", d.background_rate_cps);
}

inline void to_json(nlohmann::json& j, const DetectorParams& p) {
    j = nlohmann::json{{"efficiency", p.efficiency},
                       {"dark_rate_cps", p.dark_rate_cps},
                       {"jitter_sigma_ps", p.jitter_sigma_ps},
                       {"dead_time_ps", p.dead_time_ps},
                       {"coupling", p.coupling},
                       {"clock_tick_ps", p.clock_tick_ps}};
}

inline void from_json(const nlohmann::json& j, DetectorParams& p) {
    DetectorParams d;
    p.efficiency = j.value("efficiency", d.efficiency);
    p.dark_rate_cps = j.value("dark_rate_cps", d.dark_rate_cps);
    p.jitter_sigma_ps = j.value("jitter_sigma_ps", d.jitter_sigma_ps);
    p.dead_time_ps = j.value("dead_time_ps", d.dead_time_ps);
    p.coupling = j.value("coupling", d.coupling);
    p.clock_tick_ps = j.value("clock_tick_ps", d.clock_tick_ps);
}

inline void to_json(nlohmann::json& j, const ProtocolParams& p) {
    j = nlohmann::json{{"window_ps", p.window_ps},
                       {"sample_fraction", p.sample_fraction},
                       {"sample_mode", sample_mode_name(p.sample_mode)},
                       {"abort_threshold", p.abort_threshold},
                       {"security_parameter", p.security_parameter},
                       {"ec_inefficiency", p.ec_inefficiency},
                       {"ldpc_seed", p.ldpc_seed},
                       {"pa_seed_source", p.pa_seed_source}};
}

inline void from_json(const nlohmann::json& j, ProtocolParams& p) {
    ProtocolParams d;
    p.window_ps = j.value("window_ps", d.window_ps);
    p.sample_fraction = j.value("sample_fraction", d.sample_fraction);
    std::string mode = j.value("sample_mode", std::string(sample_mode_name(d.sample_mode)));
    if (mode == "block_prefix")
        p.sample_mode = SampleMode::BlockPrefix;
    else if (mode == "random")
        p.sample_mode = SampleMode::Random;
    else
        throw std::invalid_argument("protocol.sample_mode: unknown mode '" + mode + "'");
    p.abort_threshold = j.value("abort_threshold", d.abort_threshold);
    p.security_parameter = j.value("security_parameter", d.security_parameter);
    p.ec_inefficiency = j.value("ec_inefficiency", d.ec_inefficiency);
    p.ldpc_seed = j.value("ldpc_seed", d.ldpc_seed);
    p.pa_seed_source = j.value("pa_seed_source", d.pa_seed_source);
}

inline void to_json(nlohmann::json& j, const RunParams& r) {
    j = nlohmann::json{{"n_slots", r.n_slots}, {"seed", r.seed}};
}

inline void from_json(const nlohmann::json& j, RunParams& r) {
    RunParams d;
    r.n_slots = j.value("n_slots", d.n_slots);
    r.seed = j.value("seed", d.seed);
}

inline void to_json(nlohmann::json& j, const EpcdParams& e) {
    j = nlohmann::json{{"z_threshold", e.z_threshold},
                       {"slot_window_ps", e.slot_window_ps}};
}

inline void from_json(const nlohmann::json& j, EpcdParams& e) {
    EpcdParams d;
    e.z_threshold = j.value("z_threshold", d.z_threshold);
    e.slot_window_ps = j.value("slot_window_ps", d.slot_window_ps);
}

inline void to_json(nlohmann::json& j, const AdversaryParams& a) {
    j = nlohmann::json{{"suppress_multiphoton", a.suppress_multiphoton}};
}

inline void from_json(const nlohmann::json& j, AdversaryParams& a) {
    AdversaryParams d;
    a.suppress_multiphoton = j.value("suppress_multiphoton", d.suppress_multiphoton);
}

inline void to_json(nlohmann::json& j, const SessionConfig& c) {
    j = nlohmann::json{{"source", c.source},     {"channel", c.channel},
                       {"detector", c.detector}, {"protocol", c.protocol},
                       {"run", c.run},           {"epcd", c.epcd},
                       {"adversary", c.adversary}};
}

inline void from_json(const nlohmann::json& j, SessionConfig& c) {
    if (j.contains("source")) j.at("source").get_to(c.source);
    if (j.contains("channel")) j.at("channel").get_to(c.channel);
    if (j.contains("detector")) j.at("detector").get_to(c.detector);
    if (j.contains("protocol")) j.at("protocol").get_to(c.protocol);
    if (j.contains("run")) j.at("run").get_to(c.run);
    if (j.contains("epcd")) j.at("epcd").get_to(c.epcd);
    if (j.contains("adversary")) j.at("adversary").get_to(c.adversary);
}

inline SessionConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;
    SessionConfig c = j.get<SessionConfig>();
    validate_or_throw(c);
    return c;
}

inline void save_config(const SessionConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file: " + path);
    nlohmann::json j = c;
    out << j.dump(2) << '\n';
}

}  // namespace qkd
