// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>

#include "qkd/core.hpp"
#include "qkd/sifting.hpp"
#include "qkd/simkernel.hpp"

namespace qkd {

/// Gains and error rates feeding the closed-form calculators. Gains are
/// per emitted pulse of the signal class; Q_1 and Q_2 are the portions of
/// the gain from one- and two-photon emissions, so Q_1 + Q_2 <= Q_mu.
struct YieldStats {
    double q_mu = 0;
    double e_mu = 0;
    double q_1 = 0;
    double e_1 = 0;
    double q_2 = 0;
    double e_2 = 0;
    double f = 1.16;  // error-correction inefficiency
};

namespace detail {

inline void check_yields(const YieldStats& y) {
    auto gain_ok = [](double q) { return q >= 0.0 && q <= 1.0; };
    auto err_ok = [](double e) { return e >= 0.0 && e <= 0.5; };
    if (!gain_ok(y.q_mu) || !gain_ok(y.q_1) || !gain_ok(y.q_2))
        throw std::domain_error("YieldStats: gains outside [0,1]");
    if (!err_ok(y.e_mu) || !err_ok(y.e_1) || !err_ok(y.e_2))
        throw std::domain_error("YieldStats: error rates outside [0,0.5]");
    if (y.q_1 + y.q_2 > y.q_mu + 1e-9)
        throw std::domain_error("YieldStats: Q_1 + Q_2 exceeds Q_mu");
    if (!(y.f >= 1.0)) throw std::domain_error("YieldStats: f below 1");
}

}  // namespace detail

/// Ideal-device BB84: max(0, 1 - 2 H(e)). Zero means no secure key.
inline double ideal_bb84_rate(double e) {
    if (!(e >= 0.0 && e <= 0.5))
        throw std::domain_error("ideal_bb84_rate: QBER outside [0, 0.5]");
    return std::max(0.0, 1.0 - 2.0 * binary_entropy(e));
}

/// Decoy-state rate: max(0, 1/2 (-Q_mu H(E_mu) f + Q_1 (1 - H(e_1)))).
inline double decoy_rate(const YieldStats& y) {
    detail::check_yields(y);
    double r = 0.5 * (-y.q_mu * binary_entropy(y.e_mu) * y.f +
                      y.q_1 * (1.0 - binary_entropy(y.e_1)));
    return std::max(0.0, r);
}

/// EPCD rate: the decoy expression plus the two-photon term
/// Q_2 (1 - Phi((2 e_2 - 1)^2)). The single-photon term Phi(2 e_1 - 1)
/// is evaluated through the identity Phi(2e-1) = H(e), which keeps the
/// Q_2 = 0 reduction to decoy_rate exact in floating point.
inline double epcd_rate(const YieldStats& y) {
    detail::check_yields(y);
    double x2 = 2.0 * y.e_2 - 1.0;
    double r = 0.5 * (-y.q_mu * binary_entropy(y.e_mu) * y.f +
                      y.q_1 * (1.0 - binary_entropy(y.e_1)) +
                      y.q_2 * (1.0 - phi(x2 * x2)));
    return std::max(0.0, r);
}

/// Expected sift rate in bits per second: 0.5 rep mu eta_ch eta_c eta_d.
inline double expected_sift_rate(double rep_rate_hz, double mu, double eta_ch,
                                 double eta_c, double eta_d) {
    if (!(rep_rate_hz > 0) || !(mu >= 0))
        throw std::domain_error("expected_sift_rate: bad source parameters");
    auto eff_ok = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!eff_ok(eta_ch) || !eff_ok(eta_c) || !eff_ok(eta_d))
        throw std::domain_error("expected_sift_rate: efficiency outside [0,1]");
    return 0.5 * rep_rate_hz * mu * eta_ch * eta_c * eta_d;
}

/// Tallies gains and error rates from simulator ground truth (stands in
/// for the out-of-scope bound optimisation; yields are honest counts).
inline YieldStats tally_yields(const SessionLogs& logs, const SiftResult& sift,
                               double f) {
    if (logs.session_id != sift.session_id)
        throw std::invalid_argument("tally_yields: mismatched session identifiers");

    std::uint64_t signal_pulses = 0;
    for (const auto& rec : logs.alice)
        if (rec.cls == PulseClass::Signal) ++signal_pulses;

    std::uint64_t sifted = 0, errors = 0;
    std::uint64_t sifted_k[3] = {0, 0, 0};  // photon number 1, 2 buckets
    std::uint64_t errors_k[3] = {0, 0, 0};
    for (std::size_t i = 0; i < sift.slots.size(); ++i) {
        const PulseRecord& rec = logs.alice[sift.slots[i]];
        int err = sift.alice_key.get(i) != sift.bob_key.get(i);
        ++sifted;
        errors += err;
        if (rec.emitted_photons == 1 || rec.emitted_photons == 2) {
            ++sifted_k[rec.emitted_photons];
            errors_k[rec.emitted_photons] += err;
        }
    }

    YieldStats y;
    y.f = f;
    if (signal_pulses == 0) return y;
    auto ratio = [](std::uint64_t a, std::uint64_t b) {
        return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0;
    };
    y.q_mu = ratio(sifted, signal_pulses);
    y.e_mu = ratio(errors, sifted);
    y.q_1 = ratio(sifted_k[1], signal_pulses);
    y.e_1 = ratio(errors_k[1], sifted_k[1]);
    y.q_2 = ratio(sifted_k[2], signal_pulses);
    y.e_2 = ratio(errors_k[2], sifted_k[2]);
    return y;
}

}  // namespace qkd
