// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qkd {

/// Ordered sequence of bits with positional semantics. Storage is packed
/// 64-bit words (LSB-first within a word); the packing is not observable
/// except through to_bytes(), which uses the wire convention of
/// big-endian bit order within each byte.
class BitString {
public:
    BitString() = default;

    explicit BitString(std::size_t n, int fill = 0)
        : words_((n + 63) / 64, fill ? ~std::uint64_t{0} : 0), size_(n) {
        if (fill) trim_tail();
    }

    static BitString from_string(std::string_view s) {
        BitString out;
        out.reserve(s.size());
        for (char c : s) {
            if (c != '0' && c != '1')
                throw std::invalid_argument("BitString: expected only '0'/'1' characters");
            out.push_back(c == '1');
        }
        return out;
    }

    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    int get(std::size_t i) const {
        check_index(i);
        return static_cast<int>((words_[i >> 6] >> (i & 63)) & 1u);
    }

    void set(std::size_t i, int v) {
        check_index(i);
        std::uint64_t mask = std::uint64_t{1} << (i & 63);
        if (v)
            words_[i >> 6] |= mask;
        else
            words_[i >> 6] &= ~mask;
    }

    void push_back(int v) {
        if ((size_ & 63) == 0) words_.push_back(0);
        if (v) words_.back() |= std::uint64_t{1} << (size_ & 63);
        ++size_;
    }

    void reserve(std::size_t n) { words_.reserve((n + 63) / 64); }

    void append(const BitString& other) {
        for (std::size_t i = 0; i < other.size_; ++i) push_back(other.get(i));
    }

    BitString slice(std::size_t pos, std::size_t len) const {
        if (pos + len > size_)
            throw std::out_of_range("BitString::slice: range exceeds length");
        BitString out;
        out.reserve(len);
        for (std::size_t i = 0; i < len; ++i) out.push_back(get(pos + i));
        return out;
    }

    BitString& operator^=(const BitString& rhs) {
        if (rhs.size_ != size_)
            throw std::length_error("BitString: xor of unequal lengths");
        for (std::size_t w = 0; w < words_.size(); ++w) words_[w] ^= rhs.words_[w];
        return *this;
    }

    friend BitString operator^(BitString a, const BitString& b) {
        a ^= b;
        return a;
    }

    std::size_t count_ones() const {
        std::size_t c = 0;
        for (std::uint64_t w : words_) c += static_cast<std::size_t>(std::popcount(w));
        return c;
    }

    /// Packed bytes, big-endian bit order within each byte, zero-padded tail.
    std::vector<std::uint8_t> to_bytes() const {
        std::vector<std::uint8_t> out((size_ + 7) / 8, 0);
        for (std::size_t i = 0; i < size_; ++i)
            if (get(i)) out[i >> 3] |= static_cast<std::uint8_t>(0x80u >> (i & 7));
        return out;
    }

    static BitString from_bytes(std::span<const std::uint8_t> bytes, std::size_t n_bits) {
        if (bytes.size() < (n_bits + 7) / 8)
            throw std::length_error("BitString::from_bytes: too few bytes");
        BitString out;
        out.reserve(n_bits);
        for (std::size_t i = 0; i < n_bits; ++i)
            out.push_back((bytes[i >> 3] >> (7 - (i & 7))) & 1u);
        return out;
    }

    std::string to_string() const {
        std::string s(size_, '0');
        for (std::size_t i = 0; i < size_; ++i)
            if (get(i)) s[i] = '1';
        return s;
    }

    bool operator==(const BitString& rhs) const {
        return size_ == rhs.size_ && words_ == rhs.words_;
    }

    std::span<const std::uint64_t> words() const { return words_; }

private:
    void check_index(std::size_t i) const {
        if (i >= size_) throw std::out_of_range("BitString: index out of range");
    }

    void trim_tail() {
        if (size_ & 63) words_.back() &= (std::uint64_t{1} << (size_ & 63)) - 1;
    }

    std::vector<std::uint64_t> words_;
    std::size_t size_ = 0;
};

}  // namespace qkd
