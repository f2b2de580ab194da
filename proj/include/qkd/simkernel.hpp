// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qkd/config.hpp"
#include "qkd/core.hpp"
#include "qkd/random.hpp"

namespace qkd {

/// Mean photon number per pulse from average power, wavelength, filter
/// optical density and repetition rate (SI units, CODATA h and c).
inline double mean_photon_number(double p_avg_w, double lambda_m, double od,
                                 double rep_rate_hz) {
    if (!(p_avg_w > 0) || !(lambda_m > 0) || !(rep_rate_hz > 0) || !(od >= 0))
        throw std::domain_error("mean_photon_number: non-positive physical input");
    constexpr double planck = 6.62607015e-34;
    constexpr double light_speed = 299'792'458.0;
    return p_avg_w * lambda_m * std::pow(10.0, -od) / (rep_rate_hz * planck * light_speed);
}

/// Atmospheric transmission: scaling * exp(-extinction * length).
inline double channel_transmission(double scaling, double extinction_per_m,
                                   double length_m) {
    if (!(scaling > 0.0 && scaling <= 1.0))
        throw std::domain_error("channel_transmission: scaling outside (0,1]");
    if (!(extinction_per_m >= 0))
        throw std::domain_error("channel_transmission: negative extinction");
    if (!(length_m >= 0))
        throw std::domain_error("channel_transmission: negative length");
    return scaling * std::exp(-extinction_per_m * length_m);
}

/// Alice's per-slot emission record. The slot index is the record's
/// position in the log.
struct PulseRecord {
    State state = State::H;
    PulseClass cls = PulseClass::Signal;
    std::uint16_t emitted_photons = 0;

    Basis basis() const { return basis_of(state); }
    int bit() const { return bit_of(state); }
};

/// Bob's timestamped click, quantized to the detector clock tick.
struct DetectionEvent {
    TimePs timestamp_ps = 0;
    State detector = State::H;
};

enum class DetectionOrigin : std::uint8_t { Signal = 0, Decoy = 1, Entrapped = 2, Noise = 3 };

struct GroundTruth {
    std::vector<std::uint16_t> detected_photons;   // per slot
    std::vector<DetectionOrigin> detection_origin; // parallel to the Bob log
    std::uint64_t session_id = 0;
};

struct SessionLogs {
    std::vector<PulseRecord> alice;
    std::vector<DetectionEvent> bob;
    GroundTruth truth;
    std::uint64_t session_id = 0;
};

namespace detail {

inline TimePs floor_to_tick(TimePs t, TimePs tick) {
    TimePs q = t / tick;
    if (t % tick != 0 && t < 0) --q;
    return q * tick;
}

struct RawClick {
    TimePs time;
    State detector;
    DetectionOrigin origin;
};

}  // namespace detail

/// Generates Alice's emission log and Bob's detection log for one session.
/// Per slot: pulse class and encoded state are drawn, the photon number is
/// Poissonian, each photon independently survives the channel and optics,
/// and surviving photons are routed through Bob's passive basis choice.
/// Dark and background counts are injected as Poisson processes per
/// detector. Deterministic in (config, seed).
inline SessionLogs simulate_session(const SessionConfig& cfg, std::uint64_t seed,
                                    std::uint64_t n_slots) {
    validate_or_throw(cfg);
    if (n_slots == 0) throw std::invalid_argument("simulate_session: n_slots must be >= 1");

    const TimePs period = cfg.source.pulse_period_ps();
    const TimePs tick = cfg.detector.clock_tick_ps;
    const TimePs t_a0 = 0;
    const TimePs t_d = cfg.channel.path_delay_ps;
    const double p_survive =
        cfg.channel.transmission() * cfg.detector.coupling * cfg.detector.efficiency;
    const double e_opt = cfg.source.intrinsic_error;

    SplitMix64 class_rng(derive_seed(seed, 1));
    SplitMix64 photon_rng(derive_seed(seed, 2));
    SplitMix64 route_rng(derive_seed(seed, 3));
    SplitMix64 jitter_rng(derive_seed(seed, 4));
    SplitMix64 noise_rng(derive_seed(seed, 5));
    XorPrng state_prng = XorPrng::for_seed(derive_seed(seed, 6));
    GaussianSampler jitter(jitter_rng);

    const double p_signal = cfg.source.class_probabilities[0];
    const double p_decoy = cfg.source.class_probabilities[1];

    SessionLogs logs;
    logs.alice.resize(n_slots);
    logs.truth.detected_photons.assign(n_slots, 0);

    std::vector<detail::RawClick> clicks;
    clicks.reserve(static_cast<std::size_t>(
        static_cast<double>(n_slots) * (cfg.source.mu_signal * p_survive + 0.01) + 1024));

    for (std::uint64_t slot = 0; slot < n_slots; ++slot) {
        double u = class_rng.next_double();
        PulseClass cls = u < p_signal ? PulseClass::Signal
                        : u < p_signal + p_decoy ? PulseClass::Decoy
                                                 : PulseClass::Entrapped;
        int b1 = state_prng.next_bit();
        int b0 = state_prng.next_bit();
        State state = demux_select(b1, b0);

        unsigned emitted = poisson_sample(photon_rng, cfg.source.mu_of(cls));
        auto& rec = logs.alice[slot];
        rec.state = state;
        rec.cls = cls;
        rec.emitted_photons = static_cast<std::uint16_t>(std::min(emitted, 65535u));

        unsigned transmitted = emitted;
        if (cfg.adversary.suppress_multiphoton && emitted > 1) transmitted = 1;

        const Basis alice_basis = basis_of(state);
        const int alice_bit = bit_of(state);
        const TimePs nominal = t_a0 + t_d + static_cast<TimePs>(slot) * period +
                               cfg.source.per_laser_timing_offset_ps[static_cast<int>(state)];

        for (unsigned ph = 0; ph < transmitted; ++ph) {
            if (route_rng.next_double() >= p_survive) continue;
            Basis bob_basis = route_rng.next_bit() ? Basis::Diag : Basis::Rect;
            int outcome;
            if (bob_basis == alice_basis)
                outcome = (route_rng.next_double() < e_opt) ? alice_bit ^ 1 : alice_bit;
            else
                outcome = route_rng.next_bit();
            State det = state_from(bob_basis, outcome);
            TimePs t = nominal + static_cast<TimePs>(std::llround(
                                     jitter() * static_cast<double>(cfg.detector.jitter_sigma_ps)));
            clicks.push_back({t, det, static_cast<DetectionOrigin>(cls)});
            ++logs.truth.detected_photons[slot];
        }
    }

    // Dark and background counts: one Poisson point process per detector
    // across the whole detection window.
    const double noise_rate = cfg.detector.dark_rate_cps + cfg.channel.background_rate_cps;
    if (noise_rate > 0) {
        const double t_start = static_cast<double>(t_a0 + t_d);
        const double t_end = t_start + static_cast<double>(n_slots) * static_cast<double>(period);
        const double rate_per_ps = noise_rate * 1e-12;
        for (int d = 0; d < 4; ++d) {
            double t = t_start;
            for (;;) {
                t += exponential_gap(noise_rng, rate_per_ps);
                if (t >= t_end) break;
                clicks.push_back({static_cast<TimePs>(t), static_cast<State>(d),
                                  DetectionOrigin::Noise});
            }
        }
    }

    std::sort(clicks.begin(), clicks.end(), [](const auto& a, const auto& b) {
        if (a.time != b.time) return a.time < b.time;
        return a.detector < b.detector;
    });

    // Quantize, merge same-tick clicks on one detector, apply dead time.
    std::array<TimePs, 4> last_click{-1, -1, -1, -1};
    std::array<bool, 4> seen{false, false, false, false};
    std::vector<detail::RawClick> quantized;
    quantized.reserve(clicks.size());
    for (const auto& c : clicks) {
        TimePs tq = detail::floor_to_tick(std::max<TimePs>(c.time, 0), tick);
        int d = static_cast<int>(c.detector);
        if (seen[d]) {
            if (tq == last_click[d]) continue;  // one avalanche per tick
            if (cfg.detector.dead_time_ps > 0 &&
                tq - last_click[d] < cfg.detector.dead_time_ps)
                continue;
        }
        seen[d] = true;
        last_click[d] = tq;
        quantized.push_back({tq, c.detector, c.origin});
    }

    std::stable_sort(quantized.begin(), quantized.end(), [](const auto& a, const auto& b) {
        if (a.time != b.time) return a.time < b.time;
        return a.detector < b.detector;
    });

    logs.bob.reserve(quantized.size());
    logs.truth.detection_origin.reserve(quantized.size());
    for (const auto& c : quantized) {
        logs.bob.push_back({c.time, c.detector});
        logs.truth.detection_origin.push_back(c.origin);
    }

    logs.session_id = derive_seed(seed, n_slots ^ 0x5E55'1011ull);
    logs.truth.session_id = logs.session_id;
    return logs;
}

struct CoincidenceReport {
    double signal_rate = 0;
    double entrapped_rate = 0;
    double signal_expected = 0;
    double entrapped_expected = 0;
    double z_signal = 0;
    double z_entrapped = 0;
    bool anomalous = false;
    std::uint64_t signal_slots = 0;
    std::uint64_t entrapped_slots = 0;
    std::uint64_t signal_coincidences = 0;
    std::uint64_t entrapped_coincidences = 0;
};

namespace detail {

/// Probability that a slot of mean photon number mu shows clicks on two
/// or more distinct detectors. Detector loads are independent Poisson
/// thinnings, plus the uniform noise load inside the tally window.
inline double coincidence_probability(double mu, double p_survive, double e_opt,
                                      double noise_per_detector) {
    const double routing[4] = {(1.0 - e_opt) / 2.0, e_opt / 2.0, 0.25, 0.25};
    double lam[4];
    double total = 0;
    for (int d = 0; d < 4; ++d) {
        lam[d] = mu * p_survive * routing[d] + noise_per_detector;
        total += lam[d];
    }
    double p_at_most_one = std::exp(-total);
    for (int d = 0; d < 4; ++d)
        p_at_most_one += (1.0 - std::exp(-lam[d])) * std::exp(-(total - lam[d]));
    return 1.0 - p_at_most_one;
}

}  // namespace detail

/// Counts slots where two or more distinct detectors clicked inside the
/// slot window, per pulse class, and compares against the Poisson-model
/// expectation. Classes come from the simulator's ground truth (they are
/// announced post hoc, as with decoy pulses).
inline CoincidenceReport epcd_coincidence_tally(const SessionLogs& logs,
                                                const SessionConfig& cfg,
                                                TimePs slot_window) {
    const TimePs period = cfg.source.pulse_period_ps();
    if (slot_window > period / 2)
        throw std::invalid_argument("epcd_coincidence_tally: window exceeds half period");
    const TimePs tick = cfg.detector.clock_tick_ps;
    const TimePs t_d = detail::floor_to_tick(cfg.channel.path_delay_ps, tick);

    const std::uint64_t n_slots = logs.alice.size();
    std::uint64_t class_slots[3] = {0, 0, 0};
    for (const auto& rec : logs.alice) ++class_slots[static_cast<int>(rec.cls)];

    std::uint64_t coincidences[3] = {0, 0, 0};
    std::uint64_t current_slot = ~std::uint64_t{0};
    unsigned det_mask = 0;
    auto flush = [&]() {
        if (current_slot < n_slots && std::popcount(det_mask) >= 2)
            ++coincidences[static_cast<int>(logs.alice[current_slot].cls)];
    };
    for (const auto& ev : logs.bob) {
        TimePs delta = ev.timestamp_ps - t_d;
        TimePs n = (delta + period / 2) / period;
        if (delta < -period / 2) n = 0;
        TimePs residual = delta - n * period;
        if (std::abs(residual) > slot_window) continue;
        auto slot = static_cast<std::uint64_t>(n);
        if (slot != current_slot) {
            flush();
            current_slot = slot;
            det_mask = 0;
        }
        det_mask |= 1u << static_cast<int>(ev.detector);
    }
    flush();

    // Discretized noise load: ticks whose residual falls inside the window.
    double bins = std::min<double>(2.0 * static_cast<double>(slot_window / tick) + 1.0,
                                   static_cast<double>(period / tick));
    double noise_per_det =
        (cfg.detector.dark_rate_cps + cfg.channel.background_rate_cps) * 1e-12 *
        bins * static_cast<double>(tick);
    const double p_survive =
        cfg.channel.transmission() * cfg.detector.coupling * cfg.detector.efficiency;

    CoincidenceReport rep;
    rep.signal_slots = class_slots[0];
    rep.entrapped_slots = class_slots[2];
    rep.signal_coincidences = coincidences[0];
    rep.entrapped_coincidences = coincidences[2];
    rep.signal_expected = detail::coincidence_probability(
        cfg.source.mu_signal, p_survive, cfg.source.intrinsic_error, noise_per_det);
    rep.entrapped_expected = detail::coincidence_probability(
        cfg.source.nu_entrapped, p_survive, cfg.source.intrinsic_error, noise_per_det);

    auto zscore = [](std::uint64_t obs, std::uint64_t n, double p) {
        if (n == 0) return 0.0;
        double var = static_cast<double>(n) * p * (1.0 - p);
        if (var <= 0) return obs == 0 ? 0.0 : 1e9;
        return (static_cast<double>(obs) - static_cast<double>(n) * p) / std::sqrt(var);
    };
    rep.signal_rate = rep.signal_slots
                          ? static_cast<double>(rep.signal_coincidences) /
                                static_cast<double>(rep.signal_slots)
                          : 0.0;
    rep.entrapped_rate = rep.entrapped_slots
                             ? static_cast<double>(rep.entrapped_coincidences) /
                                   static_cast<double>(rep.entrapped_slots)
                             : 0.0;
    rep.z_signal = zscore(rep.signal_coincidences, rep.signal_slots, rep.signal_expected);
    rep.z_entrapped =
        zscore(rep.entrapped_coincidences, rep.entrapped_slots, rep.entrapped_expected);
    rep.anomalous = std::abs(rep.z_signal) > cfg.epcd.z_threshold ||
                    std::abs(rep.z_entrapped) > cfg.epcd.z_threshold;
    return rep;
}

}  // namespace qkd
