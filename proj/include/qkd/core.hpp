// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "qkd/bitstring.hpp"

namespace qkd {

/// Integer picoseconds. Absolute timestamps are non-negative; residuals
/// and offsets may be signed.
using TimePs = std::int64_t;

/// Real value constrained to [0,1], enforced at construction.
class Probability {
public:
    Probability() = default;
    explicit Probability(double v) : v_(v) {
        if (!(v >= 0.0 && v <= 1.0))
            throw std::domain_error("Probability: value outside [0,1]");
    }
    double value() const { return v_; }
    operator double() const { return v_; }

private:
    double v_ = 0.0;
};

/// Polarisation states used for encoding; the (basis, bit) pairing is the
/// project-wide convention: rect H=0 V=1, diag D=0 A=1.
enum class State : std::uint8_t { H = 0, V = 1, D = 2, A = 3 };
enum class Basis : std::uint8_t { Rect = 0, Diag = 1 };

inline Basis basis_of(State s) {
    return (s == State::H || s == State::V) ? Basis::Rect : Basis::Diag;
}

inline int bit_of(State s) { return (s == State::V || s == State::A) ? 1 : 0; }

inline State state_from(Basis b, int bit) {
    if (b == Basis::Rect) return bit ? State::V : State::H;
    return bit ? State::A : State::D;
}

inline char state_name(State s) {
    switch (s) {
        case State::H: return 'H';
        case State::V: return 'V';
        case State::D: return 'D';
        default: return 'A';
    }
}

/// Binary entropy in bits, with the 0*log2(0) = 0 convention. Boundary
/// inputs are legal.
inline double binary_entropy(double x) {
    if (!(x >= 0.0 && x <= 1.0))
        throw std::domain_error("binary_entropy: argument outside [0,1]");
    if (x == 0.0 || x == 1.0) return 0.0;
    return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

inline double binary_entropy(Probability x) { return binary_entropy(x.value()); }

/// Phi(x) = H_bin(1/2 + x/2) on [-1,1]; symmetric in x.
inline double phi(double x) {
    if (!(x >= -1.0 && x <= 1.0))
        throw std::domain_error("phi: argument outside [-1,1]");
    return binary_entropy(0.5 + 0.5 * x);
}

inline std::size_t hamming_distance(const BitString& a, const BitString& b) {
    if (a.size() != b.size())
        throw std::length_error("hamming_distance: length mismatch");
    std::size_t d = 0;
    auto wa = a.words();
    auto wb = b.words();
    for (std::size_t i = 0; i < wa.size(); ++i)
        d += static_cast<std::size_t>(std::popcount(wa[i] ^ wb[i]));
    return d;
}

}  // namespace qkd
