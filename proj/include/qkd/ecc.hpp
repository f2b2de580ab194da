// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qkd/bitstring.hpp"
#include "qkd/random.hpp"

namespace qkd {

/// Regular (3,6) Gallager-style parity-check structure, block length 1024,
/// rate 1/2. Construction is seeded so both endpoints can rebuild the same
/// code from a shared seed; 4-cycles are removed by edge swaps.
struct LdpcCode {
    static constexpr std::uint32_t block_length = 1024;
    static constexpr std::uint32_t syndrome_length = 512;
    static constexpr std::uint32_t column_weight = 3;
    static constexpr std::uint32_t row_weight = 6;

    std::vector<std::array<std::uint16_t, column_weight>> var_checks;  // per variable
    std::vector<std::array<std::uint16_t, row_weight>> check_vars;     // per check
    std::uint64_t seed = 0;
};

namespace detail {

inline bool column_has_row(const std::array<std::uint16_t, 3>& col, std::uint16_t row,
                           int upto) {
    for (int i = 0; i < upto; ++i)
        if (col[i] == row) return true;
    return false;
}

}  // namespace detail

inline LdpcCode build_code(std::uint64_t seed) {
    constexpr std::uint32_t n = LdpcCode::block_length;
    constexpr std::uint32_t m = LdpcCode::syndrome_length;
    SplitMix64 rng(derive_seed(seed, 0x1D9Cu));

    LdpcCode code;
    code.seed = seed;
    code.var_checks.resize(n);

    // Socket permutation: each check appears row_weight times; deal three
    // sockets per variable, swapping away duplicates within a column.
    std::vector<std::uint16_t> sockets;
    sockets.reserve(n * LdpcCode::column_weight);
    for (std::uint32_t r = 0; r < m; ++r)
        for (std::uint32_t k = 0; k < LdpcCode::row_weight; ++k)
            sockets.push_back(static_cast<std::uint16_t>(r));
    for (std::size_t i = sockets.size(); i > 1; --i)
        std::swap(sockets[i - 1], sockets[rng.next_below(i)]);

    const std::uint64_t max_fix_attempts = 2'000'000;
    std::uint64_t attempts = 0;
    for (std::uint32_t v = 0; v < n; ++v) {
        auto& col = code.var_checks[v];
        for (int k = 0; k < 3; ++k) {
            std::size_t pos = static_cast<std::size_t>(v) * 3 + k;
            while (detail::column_has_row(col, sockets[pos], k)) {
                if (++attempts > max_fix_attempts)
                    throw std::runtime_error("build_code: construction retries exhausted for seed " +
                                             std::to_string(seed));
                std::swap(sockets[pos], sockets[pos + 1 + rng.next_below(sockets.size() - pos - 1)]);
            }
            col[k] = sockets[pos];
        }
        std::sort(col.begin(), col.end());
    }

    // 4-cycle removal: two variables sharing two checks. Swap one edge of
    // the later variable with an edge of a random other variable until the
    // pair map is collision free.
    const std::uint64_t max_rounds = 4000;
    for (std::uint64_t round = 0; round < max_rounds; ++round) {
        std::map<std::uint32_t, std::uint32_t> pair_owner;
        bool clean = true;
        for (std::uint32_t v = 0; v < n && clean; ++v) {
            const auto& col = code.var_checks[v];
            for (int i = 0; i < 3 && clean; ++i)
                for (int j = i + 1; j < 3; ++j) {
                    std::uint32_t key = (static_cast<std::uint32_t>(col[i]) << 16) | col[j];
                    auto [it, inserted] = pair_owner.emplace(key, v);
                    if (inserted) continue;
                    // Conflict: swap col[j] of v with a random edge elsewhere.
                    for (std::uint64_t t = 0; t < 200; ++t) {
                        auto w = static_cast<std::uint32_t>(rng.next_below(n));
                        if (w == v) continue;
                        int e = static_cast<int>(rng.next_below(3));
                        std::uint16_t rv = code.var_checks[v][j];
                        std::uint16_t rw = code.var_checks[w][e];
                        if (rv == rw) continue;
                        if (detail::column_has_row(code.var_checks[v], rw, 3)) continue;
                        if (detail::column_has_row(code.var_checks[w], rv, 3)) continue;
                        code.var_checks[v][j] = rw;
                        code.var_checks[w][e] = rv;
                        std::sort(code.var_checks[v].begin(), code.var_checks[v].end());
                        std::sort(code.var_checks[w].begin(), code.var_checks[w].end());
                        break;
                    }
                    clean = false;
                    break;
                }
        }
        if (clean) {
            // Fill the check-side adjacency and finish.
            std::vector<std::uint8_t> fill(m, 0);
            code.check_vars.resize(m);
            for (std::uint32_t v = 0; v < n; ++v)
                for (std::uint16_t r : code.var_checks[v])
                    code.check_vars[r][fill[r]++] = static_cast<std::uint16_t>(v);
            for (std::uint32_t r = 0; r < m; ++r)
                if (fill[r] != LdpcCode::row_weight)
                    throw std::runtime_error("build_code: row weight broken for seed " +
                                             std::to_string(seed));
            return code;
        }
    }
    throw std::runtime_error("build_code: construction retries exhausted for seed " +
                             std::to_string(seed));
}

/// Mod-2 product of the parity-check relation with the block.
inline BitString syndrome(const LdpcCode& code, const BitString& block) {
    if (block.size() != LdpcCode::block_length)
        throw std::length_error("syndrome: block length must be 1024");
    BitString s(LdpcCode::syndrome_length, 0);
    for (std::uint32_t r = 0; r < LdpcCode::syndrome_length; ++r) {
        int acc = 0;
        for (std::uint16_t v : code.check_vars[r]) acc ^= block.get(v);
        if (acc) s.set(r, 1);
    }
    return s;
}

struct BlockVerdict {
    enum class Status : std::uint8_t { Corrected = 1, Discarded = 0 };
    Status status = Status::Discarded;
    std::uint32_t iterations = 0;
    std::uint32_t corrected_bits = 0;
};

/// Syndrome-domain sum-product decoding. The error pattern to find has
/// syndrome syndrome(local) xor remote; the channel prior comes from the
/// estimated QBER. Non-convergence within max_iter yields a discarded
/// verdict, not an error.
inline std::pair<BitString, BlockVerdict> decode_block(const LdpcCode& code,
                                                       const BitString& local_block,
                                                       const BitString& remote_syndrome,
                                                       double e_hat,
                                                       std::uint32_t max_iter = 25) {
    if (local_block.size() != LdpcCode::block_length)
        throw std::length_error("decode_block: block length must be 1024");
    if (remote_syndrome.size() != LdpcCode::syndrome_length)
        throw std::length_error("decode_block: syndrome length must be 512");
    if (!(e_hat > 0.0 && e_hat < 0.5))
        throw std::domain_error("decode_block: e_hat outside (0, 0.5)");

    constexpr std::uint32_t n = LdpcCode::block_length;
    constexpr std::uint32_t m = LdpcCode::syndrome_length;

    BitString target = syndrome(code, local_block);
    target ^= remote_syndrome;

    BlockVerdict verdict;
    if (target.count_ones() == 0) {
        verdict.status = BlockVerdict::Status::Corrected;
        return {local_block, verdict};
    }

    const double prior = std::log((1.0 - e_hat) / e_hat);
    auto clamp_msg = [](double x) { return std::clamp(x, -50.0, 50.0); };

    // Messages indexed by (check, edge) and (var, edge).
    std::array<std::array<double, LdpcCode::row_weight>, m> var_to_check;
    std::array<std::array<double, LdpcCode::column_weight>, n> check_to_var;
    for (std::uint32_t r = 0; r < m; ++r) var_to_check[r].fill(prior);

    BitString guess(n, 0);
    std::array<double, n> total;

    for (std::uint32_t iter = 1; iter <= max_iter; ++iter) {
        // Check update with exclude-one tanh products (forward/backward,
        // avoids division blowups).
        std::array<std::uint8_t, n> edge_fill{};
        for (std::uint32_t r = 0; r < m; ++r) {
            double t[LdpcCode::row_weight];
            for (std::uint32_t k = 0; k < LdpcCode::row_weight; ++k)
                t[k] = std::tanh(var_to_check[r][k] / 2.0);
            double fwd[LdpcCode::row_weight];
            double bwd[LdpcCode::row_weight];
            fwd[0] = 1.0;
            for (std::uint32_t k = 1; k < LdpcCode::row_weight; ++k)
                fwd[k] = fwd[k - 1] * t[k - 1];
            bwd[LdpcCode::row_weight - 1] = 1.0;
            for (int k = LdpcCode::row_weight - 2; k >= 0; --k)
                bwd[k] = bwd[k + 1] * t[k + 1];
            double sign = target.get(r) ? -1.0 : 1.0;
            for (std::uint32_t k = 0; k < LdpcCode::row_weight; ++k) {
                double prod = std::clamp(sign * fwd[k] * bwd[k], -0.999999999999, 0.999999999999);
                std::uint16_t v = code.check_vars[r][k];
                check_to_var[v][edge_fill[v]++] = clamp_msg(2.0 * std::atanh(prod));
            }
        }

        for (std::uint32_t v = 0; v < n; ++v) {
            total[v] = prior + check_to_var[v][0] + check_to_var[v][1] + check_to_var[v][2];
            guess.set(v, total[v] <= 0.0 ? 1 : 0);
        }

        if (syndrome(code, guess) == target) {
            verdict.status = BlockVerdict::Status::Corrected;
            verdict.iterations = iter;
            verdict.corrected_bits = static_cast<std::uint32_t>(guess.count_ones());
            BitString corrected = local_block;
            corrected ^= guess;
            return {corrected, verdict};
        }

        // Variable update: total minus the incoming edge.
        std::array<std::uint8_t, n> out_fill{};
        for (std::uint32_t r = 0; r < m; ++r)
            for (std::uint32_t k = 0; k < LdpcCode::row_weight; ++k) {
                std::uint16_t v = code.check_vars[r][k];
                double ext = total[v] - check_to_var[v][out_fill[v]];
                ++out_fill[v];
                var_to_check[r][k] = clamp_msg(ext);
            }
    }

    verdict.status = BlockVerdict::Status::Discarded;
    verdict.iterations = max_iter;
    return {local_block, verdict};
}

/// Syndrome bits disclosed over the classical channel; discarded blocks
/// still leaked theirs.
inline std::uint64_t parity_leakage(std::uint64_t blocks_processed) {
    return blocks_processed * LdpcCode::syndrome_length;
}

}  // namespace qkd
