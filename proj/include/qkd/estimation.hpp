// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qkd/config.hpp"
#include "qkd/core.hpp"
#include "qkd/random.hpp"

namespace qkd {

struct SamplePlan {
    SampleMode mode = SampleMode::Random;
    double fraction = 0;
    std::vector<std::uint64_t> indices;  // distinct, ascending
};

/// Chooses which key positions to disclose. Block-prefix discloses the
/// leading round(fraction*n) positions; random draws that many distinct
/// uniform positions (Floyd's sampling), reproducibly from the seed.
inline SamplePlan select_sample(std::uint64_t n, double fraction, SampleMode mode,
                                std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::domain_error("select_sample: fraction outside (0,1]");
    if (n == 0) throw std::invalid_argument("select_sample: empty key");
    auto k = static_cast<std::uint64_t>(
        std::llround(fraction * static_cast<double>(n)));
    k = std::clamp<std::uint64_t>(k, 1, n);

    SamplePlan plan;
    plan.mode = mode;
    plan.fraction = fraction;
    plan.indices.reserve(k);
    if (mode == SampleMode::BlockPrefix) {
        for (std::uint64_t i = 0; i < k; ++i) plan.indices.push_back(i);
        return plan;
    }
    SplitMix64 rng(derive_seed(seed, 0x5A3Eu));
    std::vector<bool> chosen(n, false);
    for (std::uint64_t j = n - k; j < n; ++j) {
        std::uint64_t t = rng.next_below(j + 1);
        if (chosen[t]) t = j;
        chosen[t] = true;
    }
    for (std::uint64_t i = 0; i < n; ++i)
        if (chosen[i]) plan.indices.push_back(i);
    return plan;
}

struct QberEstimate {
    double e_hat = 0;
    std::uint64_t disclosed = 0;
    double ci_low = 0;
    double ci_high = 0;
};

/// Error fraction over the disclosed bits with a Wilson 95% interval
/// (valid at low counts, unlike the normal approximation).
inline QberEstimate estimate_qber(const BitString& a_bits, const BitString& b_bits) {
    if (a_bits.size() != b_bits.size())
        throw std::length_error("estimate_qber: length mismatch");
    if (a_bits.empty()) throw std::invalid_argument("estimate_qber: empty disclosure");
    const double n = static_cast<double>(a_bits.size());
    const double k = static_cast<double>(hamming_distance(a_bits, b_bits));
    const double p = k / n;
    constexpr double z = 1.959963984540054;  // 95%
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    QberEstimate est;
    est.e_hat = p;
    est.disclosed = a_bits.size();
    est.ci_low = std::min(std::max(0.0, centre - half), p);
    est.ci_high = std::max(std::min(1.0, centre + half), p);
    return est;
}

struct LeakageResult {
    double bits = 0;  // clamped to [0,1]
    double raw = 0;   // pre-clamp value
};

/// Mutual information between the source parameter and an eavesdropper's
/// measurement: I = 1 + sum_b sum_a p(a|b)/|B| * log2(p(a|b)/(|B| p(a))).
/// The printed two-outcome form has |B| = 2; other outcome counts
/// generalise the 1/2 factor to 1/|B| (experimental).
inline LeakageResult leakage_mutual_information(
    const std::vector<double>& p_a,
    const std::vector<std::vector<double>>& p_a_given_b) {
    if (p_a.empty() || p_a_given_b.empty())
        throw std::invalid_argument("leakage_mutual_information: empty distribution");
    auto check_norm = [](const std::vector<double>& d, const char* what) {
        double sum = 0;
        for (double v : d) {
            if (v < 0) throw std::domain_error(std::string(what) + ": negative probability");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::domain_error(std::string(what) + ": not normalized");
    };
    check_norm(p_a, "p(a)");
    const double nb = static_cast<double>(p_a_given_b.size());
    double acc = 0;
    for (const auto& cond : p_a_given_b) {
        if (cond.size() != p_a.size())
            throw std::invalid_argument("leakage_mutual_information: size mismatch");
        check_norm(cond, "p(a|b)");
        for (std::size_t a = 0; a < cond.size(); ++a) {
            if (cond[a] == 0.0) continue;  // 0 log 0 = 0
            if (p_a[a] == 0.0)
                throw std::domain_error("leakage_mutual_information: conditional mass on zero marginal");
            acc += cond[a] / nb * std::log2(cond[a] / (nb * p_a[a]));
        }
    }
    LeakageResult r;
    r.raw = 1.0 + acc;
    r.bits = std::clamp(r.raw, 0.0, 1.0);
    return r;
}

/// Largest integer s with I <= 2^-s / ln 2. The epsilon absorbs the
/// binary representation error of boundary inputs.
inline std::uint32_t security_parameter(double mutual_info_bits) {
    constexpr double ln2 = 0.6931471805599453;
    if (!(mutual_info_bits > 0.0 && mutual_info_bits <= 1.0 / ln2))
        throw std::domain_error("security_parameter: I outside (0, 1/ln2]");
    double s = std::floor(-std::log2(mutual_info_bits * ln2) + 1e-9);
    return s < 0 ? 0u : static_cast<std::uint32_t>(s);
}

}  // namespace qkd
