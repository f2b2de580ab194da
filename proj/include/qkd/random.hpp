// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkd/bitstring.hpp"
#include "qkd/core.hpp"

namespace qkd {

/// Counter-based 64-bit generator (splitmix64 mixing function). Used for
/// all simulation noise so that protocol state choices (LFSR pair) and
/// physics randomness stay separately reproducible. Copyable; a copy is a
/// state snapshot yielding an identical independent stream.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0,1).
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    int next_bit() { return static_cast<int>(next() >> 63); }

    /// Uniform integer in [0, bound) by rejection.
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound == 0) throw std::invalid_argument("next_below: zero bound");
        std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

private:
    std::uint64_t state_;
};

/// Derives an independent sub-stream seed; tag picks the purpose.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    SplitMix64 g(seed ^ (tag * 0xD1B54A32D192ED03ull));
    g.next();
    return g.next();
}

/// Fibonacci linear feedback shift register. Bit (width - t) of the
/// register holds stage t, so the output stage is bit 0 and feedback
/// enters at bit (width - 1). Tap positions are the exponents of the
/// feedback polynomial x^w + x^t + ... + 1 (1-indexed, including w).
class Lfsr {
public:
    Lfsr(unsigned width, std::initializer_list<unsigned> taps, std::uint64_t seed)
        : Lfsr(width, std::vector<unsigned>(taps), seed) {}

    Lfsr(unsigned width, const std::vector<unsigned>& taps, std::uint64_t seed)
        : width_(width) {
        if (width < 4 || width > 64)
            throw std::invalid_argument("Lfsr: width must be in [4,64]");
        for (unsigned t : taps) {
            if (t == 0 || t > width)
                throw std::invalid_argument("Lfsr: tap position outside register");
            tap_mask_ |= std::uint64_t{1} << (width - t);
        }
        std::uint64_t mask = width == 64 ? ~std::uint64_t{0}
                                         : (std::uint64_t{1} << width) - 1;
        reg_ = seed & mask;
        if (reg_ == 0)
            throw std::invalid_argument("Lfsr: all-zero register is a fixed point");
    }

    /// Advances one step and returns the shifted-out bit. One-way: there
    /// is no public inverse.
    int step() {
        int out = static_cast<int>(reg_ & 1u);
        std::uint64_t fb = static_cast<std::uint64_t>(std::popcount(reg_ & tap_mask_)) & 1u;
        reg_ = (reg_ >> 1) | (fb << (width_ - 1));
        return out;
    }

    unsigned width() const { return width_; }
    std::uint64_t state() const { return reg_; }

private:
    unsigned width_;
    std::uint64_t tap_mask_ = 0;
    std::uint64_t reg_ = 0;
};

/// Standard maximal-length taps for the widths this project uses.
inline Lfsr maximal_lfsr(unsigned width, std::uint64_t seed) {
    switch (width) {
        case 4: return Lfsr(4, {4, 3}, seed);
        case 3: throw std::invalid_argument("maximal_lfsr: width below minimum");
        case 29: return Lfsr(29, {29, 27}, seed);
        case 31: return Lfsr(31, {31, 28}, seed);
        default: throw std::invalid_argument("maximal_lfsr: no tap entry for width " +
                                             std::to_string(width));
    }
}

/// Two LFSRs of different widths combined by XOR; with coprime periods the
/// combined sequence period is their product.
class XorPrng {
public:
    XorPrng(Lfsr a, Lfsr b) : a_(std::move(a)), b_(std::move(b)) {
        if (a_.width() == b_.width())
            throw std::invalid_argument("XorPrng: registers must differ in width");
    }

    /// Default construction used by the simulator: widths 31 and 29
    /// (coprime maximal periods), register seeds derived from one seed.
    static XorPrng for_seed(std::uint64_t seed) {
        std::uint64_t sa = derive_seed(seed, 0xA5F1) & ((1u << 31) - 1);
        std::uint64_t sb = derive_seed(seed, 0xB7E3) & ((1u << 29) - 1);
        if (sa == 0) sa = 1;
        if (sb == 0) sb = 1;
        return XorPrng(maximal_lfsr(31, sa), maximal_lfsr(29, sb));
    }

    int next_bit() { return a_.step() ^ b_.step(); }

    BitString bits(std::size_t n) {
        BitString out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) out.push_back(next_bit());
        return out;
    }

private:
    Lfsr a_;
    Lfsr b_;
};

/// Select line of the 1x4 laser demultiplexer: (b1,b0) -> 00 H, 01 V,
/// 10 D, 11 A. Bijective, so uniform input bits give uniform states.
inline State demux_select(int b1, int b0) {
    return static_cast<State>(((b1 & 1) << 1) | (b0 & 1));
}

struct SanityReport {
    bool monobit_pass = false;
    bool runs_pass = false;
    std::size_t ones = 0;
    std::size_t runs = 0;
    std::size_t length = 0;
};

/// Monobit and runs checks against an i.i.d. fair-bit source at 3 sigma.
/// Reduced stand-in for a full statistical battery.
inline SanityReport sanity_tests(const BitString& bits) {
    const std::size_t n = bits.size();
    if (n < 10'000)
        throw std::length_error("sanity_tests: need at least 10^4 bits");
    SanityReport rep;
    rep.length = n;
    rep.ones = bits.count_ones();
    std::size_t runs = 1;
    int prev = bits.get(0);
    for (std::size_t i = 1; i < n; ++i) {
        int b = bits.get(i);
        if (b != prev) ++runs;
        prev = b;
    }
    rep.runs = runs;
    double nd = static_cast<double>(n);
    double ones_dev = std::abs(static_cast<double>(rep.ones) - nd / 2.0);
    rep.monobit_pass = ones_dev <= 3.0 * std::sqrt(nd / 4.0);
    // For iid fair bits: E[runs] = 1 + (n-1)/2, Var[runs] = (n-1)/4.
    double mean_runs = 1.0 + (nd - 1.0) / 2.0;
    double sd_runs = std::sqrt((nd - 1.0) / 4.0);
    rep.runs_pass = std::abs(static_cast<double>(runs) - mean_runs) <= 3.0 * sd_runs;
    return rep;
}

/// Standard normal via Box-Muller (cached second deviate).
class GaussianSampler {
public:
    explicit GaussianSampler(SplitMix64& rng) : rng_(&rng) {}

    double operator()() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do {
            u1 = rng_->next_double();
        } while (u1 <= 0.0);
        u2 = rng_->next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

private:
    SplitMix64* rng_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

/// Knuth's product method; adequate for the photon-number means used here.
inline unsigned poisson_sample(SplitMix64& rng, double mean) {
    if (mean < 0.0) throw std::domain_error("poisson_sample: negative mean");
    if (mean == 0.0) return 0;
    if (mean < 30.0) {
        double limit = std::exp(-mean);
        unsigned k = 0;
        double p = rng.next_double();
        while (p > limit) {
            ++k;
            p *= rng.next_double();
        }
        return k;
    }
    // Gaussian approximation for large means (noise count totals only).
    GaussianSampler g(rng);
    double v = mean + std::sqrt(mean) * g();
    return v <= 0.0 ? 0u : static_cast<unsigned>(v + 0.5);
}

/// Exponential inter-arrival gap for a Poisson point process of the given
/// rate (events per unit time).
inline double exponential_gap(SplitMix64& rng, double rate) {
    double u;
    do {
        u = rng.next_double();
    } while (u <= 0.0);
    return -std::log(u) / rate;
}

}  // namespace qkd
