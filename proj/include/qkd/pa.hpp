// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "qkd/bitstring.hpp"
#include "qkd/random.hpp"

namespace qkd {

/// What the eavesdropper could know about the reconciled key: the QBER
/// channel term, the parity bits disclosed during reconciliation, and the
/// security parameter.
struct LeakageLedger {
    std::uint64_t n = 0;   // reconciled key bits
    double e = 0;          // estimated QBER
    std::uint64_t p = 0;   // parity bits disclosed
    std::uint32_t s = 0;   // security parameter
};

/// r = max(0, n - t - s) with t = ceil(2ne) + p (rounded up, conservative).
/// r = 0 signals abort; it is a legal outcome, not an error.
inline std::uint64_t secret_length(const LeakageLedger& ledger) {
    if (!(ledger.e >= 0.0 && ledger.e < 0.5))
        throw std::domain_error("secret_length: QBER outside [0, 0.5)");
    // The 1e-6 guard keeps decimal rates like 0.025 from ceiling one bit
    // past their exact product.
    double qber_term = 2.0 * static_cast<double>(ledger.n) * ledger.e;
    auto t_qber = static_cast<std::uint64_t>(std::ceil(qber_term - 1e-6));
    std::uint64_t t = t_qber + ledger.p;
    std::uint64_t drop = t + ledger.s;
    return drop >= ledger.n ? 0 : ledger.n - drop;
}

/// Toeplitz matrix T_ij = b_{r-1+j-i} described by its seed diagonal of
/// n + r - 1 bits. The matrix is never materialised; hashing slides the
/// seed window across the key.
struct ToeplitzSpec {
    BitString seed_bits;
    std::uint64_t r = 0;
    std::uint64_t n = 0;
};

inline ToeplitzSpec make_toeplitz_spec(std::uint64_t n, std::uint64_t r,
                                       const BitString& seed_bits) {
    if (seed_bits.size() != n + r - 1)
        throw std::length_error("ToeplitzSpec: seed must have n + r - 1 bits");
    return ToeplitzSpec{seed_bits, r, n};
}

inline ToeplitzSpec make_toeplitz_spec(std::uint64_t n, std::uint64_t r,
                                       SplitMix64& rng) {
    BitString seed;
    seed.reserve(n + r - 1);
    for (std::uint64_t i = 0; i < n + r - 1; ++i) seed.push_back(rng.next_bit());
    return ToeplitzSpec{std::move(seed), r, n};
}

/// output_i = XOR_j T_ij key_j over GF(2). Row i of the matrix is the seed
/// slice starting at r-1-i, so each output bit is the parity of (key AND
/// shifted seed window), evaluated wordwise.
inline BitString toeplitz_hash(const ToeplitzSpec& spec, const BitString& key) {
    if (key.size() != spec.n)
        throw std::length_error("toeplitz_hash: key length mismatch");
    if (spec.seed_bits.size() != spec.n + spec.r - 1)
        throw std::length_error("toeplitz_hash: seed length mismatch");

    const auto key_words = key.words();
    const auto seed_words = spec.seed_bits.words();
    const std::size_t n_words = key_words.size();

    BitString out;
    out.reserve(spec.r);
    for (std::uint64_t i = 0; i < spec.r; ++i) {
        const std::uint64_t start = spec.r - 1 - i;
        const std::uint64_t word0 = start >> 6;
        const unsigned shift = static_cast<unsigned>(start & 63);
        std::uint64_t parity = 0;
        for (std::size_t w = 0; w < n_words; ++w) {
            std::uint64_t seg = seed_words[word0 + w] >> shift;
            if (shift && word0 + w + 1 < seed_words.size())
                seg |= seed_words[word0 + w + 1] << (64 - shift);
            parity ^= seg & key_words[w];
        }
        out.push_back(std::popcount(parity) & 1);
    }
    return out;
}

/// 64-bit FNV-1a over the packed key bytes plus the bit length; used as
/// the end-of-session key checksum.
inline std::uint64_t key_checksum(const BitString& key) {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&](std::uint8_t byte) {
        h ^= byte;
        h *= 1099511628211ull;
    };
    for (std::uint8_t b : key.to_bytes()) mix(b);
    std::uint64_t len = key.size();
    for (int i = 0; i < 8; ++i) mix(static_cast<std::uint8_t>(len >> (8 * i)));
    return h;
}

}  // namespace qkd
