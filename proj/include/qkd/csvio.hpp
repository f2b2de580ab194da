// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkd/estimation.hpp"
#include "qkd/netproto.hpp"
#include "qkd/sifting.hpp"
#include "qkd/simkernel.hpp"

namespace qkd::csv {

/// Shortest round-trip decimal form; keeps CSV artifacts byte-reproducible.
inline void append_number(std::string& out, double v) {
    char tmp[32];
    auto res = std::to_chars(tmp, tmp + sizeof(tmp), v);
    out.append(tmp, res.ptr);
}

inline void append_number(std::string& out, std::uint64_t v) {
    char tmp[24];
    auto res = std::to_chars(tmp, tmp + sizeof(tmp), v);
    out.append(tmp, res.ptr);
}

inline void append_number(std::string& out, std::int64_t v) {
    char tmp[24];
    auto res = std::to_chars(tmp, tmp + sizeof(tmp), v);
    out.append(tmp, res.ptr);
}

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open for writing: " + path);
        buf_.reserve(1 << 20);
    }
    ~Writer() { flush(); }

    void raw(const char* s) { buf_.append(s); }
    void raw(const std::string& s) { buf_.append(s); }
    template <typename T>
    void num(T v) {
        append_number(buf_, v);
    }
    void ch(char c) { buf_.push_back(c); }
    void maybe_flush() {
        if (buf_.size() > (1 << 20)) flush();
    }
    void flush() {
        if (!buf_.empty()) {
            out_.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
            buf_.clear();
        }
    }

private:
    std::ofstream out_;
    std::string buf_;
};

inline void write_alice_log(const std::string& path,
                            const std::vector<PulseRecord>& log) {
    Writer w(path);
    w.raw("slot,state,basis,bit,class,emitted_photons\n");
    for (std::size_t slot = 0; slot < log.size(); ++slot) {
        const auto& r = log[slot];
        w.num(static_cast<std::uint64_t>(slot));
        w.ch(',');
        w.ch(state_name(r.state));
        w.ch(',');
        w.raw(r.basis() == Basis::Rect ? "rect" : "diag");
        w.ch(',');
        w.ch(r.bit() ? '1' : '0');
        w.ch(',');
        w.raw(pulse_class_name(r.cls));
        w.ch(',');
        w.num(static_cast<std::uint64_t>(r.emitted_photons));
        w.ch('\n');
        w.maybe_flush();
    }
}

inline void write_bob_log(const std::string& path,
                          const std::vector<DetectionEvent>& log) {
    Writer w(path);
    w.raw("timestamp_ps,detector\n");
    for (const auto& ev : log) {
        w.num(static_cast<std::int64_t>(ev.timestamp_ps));
        w.ch(',');
        w.ch(state_name(ev.detector));
        w.ch('\n');
        w.maybe_flush();
    }
}

inline void write_truth(const std::string& path, const SessionLogs& logs) {
    Writer w(path);
    w.raw("slot,class,emitted_photons,detected_photons\n");
    for (std::size_t slot = 0; slot < logs.alice.size(); ++slot) {
        w.num(static_cast<std::uint64_t>(slot));
        w.ch(',');
        w.raw(pulse_class_name(logs.alice[slot].cls));
        w.ch(',');
        w.num(static_cast<std::uint64_t>(logs.alice[slot].emitted_photons));
        w.ch(',');
        w.num(static_cast<std::uint64_t>(logs.truth.detected_photons[slot]));
        w.ch('\n');
        w.maybe_flush();
    }
}

inline void write_sift(const std::string& path, const SiftResult& sift, bool alice_side) {
    Writer w(path);
    w.raw("slot,basis,bit\n");
    const BitString& key = alice_side ? sift.alice_key : sift.bob_key;
    for (std::size_t i = 0; i < sift.slots.size(); ++i) {
        w.num(sift.slots[i]);
        w.ch(',');
        w.raw(sift.bases[i] == Basis::Rect ? "rect" : "diag");
        w.ch(',');
        w.ch(key.get(i) ? '1' : '0');
        w.ch('\n');
        w.maybe_flush();
    }
}

inline void write_window_table(const std::string& path,
                               const std::vector<WindowRow>& rows) {
    Writer w(path);
    w.raw("window_ps,qber,sift_rate_bps\n");
    for (const auto& r : rows) {
        w.num(static_cast<std::int64_t>(r.window_ps));
        w.ch(',');
        w.num(r.qber);
        w.ch(',');
        w.num(r.sift_rate_bps);
        w.ch('\n');
    }
}

struct MuRow {
    double mu = 0;
    double bb84_rate = 0;
    double decoy_rate = 0;
    double epcd_rate = 0;
};

inline void write_mu_table(const std::string& path, const std::vector<MuRow>& rows) {
    Writer w(path);
    w.raw("mu,bb84_rate,decoy_rate,epcd_rate\n");
    for (const auto& r : rows) {
        w.num(r.mu);
        w.ch(',');
        w.num(r.bb84_rate);
        w.ch(',');
        w.num(r.decoy_rate);
        w.ch(',');
        w.num(r.epcd_rate);
        w.ch('\n');
    }
}

inline void write_estimation(const std::string& path, double fraction, SampleMode mode,
                             const QberEstimate& est) {
    Writer w(path);
    w.raw("fraction,mode,e_hat,ci_low,ci_high\n");
    w.num(fraction);
    w.ch(',');
    w.raw(sample_mode_name(mode));
    w.ch(',');
    w.num(est.e_hat);
    w.ch(',');
    w.num(est.ci_low);
    w.ch(',');
    w.num(est.ci_high);
    w.ch('\n');
}

inline void write_transcript(const std::string& path, const net::Transcript& transcript) {
    static const char* hex = "0123456789abcdef";
    Writer w(path);
    w.raw("index,sender,msg_type,payload_len,payload_hex\n");
    for (std::size_t i = 0; i < transcript.size(); ++i) {
        const auto& entry = transcript[i];
        w.num(static_cast<std::uint64_t>(i));
        w.ch(',');
        w.raw(entry.sender == net::Role::Alice ? "alice" : "bob");
        w.ch(',');
        w.num(static_cast<std::uint64_t>(entry.bytes[3]));
        w.ch(',');
        w.num(static_cast<std::uint64_t>(entry.bytes.size() - 8));
        w.ch(',');
        for (std::size_t b = 8; b < entry.bytes.size(); ++b) {
            w.ch(hex[entry.bytes[b] >> 4]);
            w.ch(hex[entry.bytes[b] & 0xF]);
        }
        w.ch('\n');
        w.maybe_flush();
    }
}

/// Characterisation table for the leakage calculator: header
/// p_a,p_a_b1,...,p_a_bK, one row per source-parameter value.
struct LeakageTable {
    std::vector<double> p_a;
    std::vector<std::vector<double>> p_a_given_b;
};

inline LeakageTable read_leakage_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open leakage input: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("leakage input: missing header");
    std::size_t n_cols = 1;
    for (char c : line)
        if (c == ',') ++n_cols;
    if (n_cols < 2)
        throw std::runtime_error("leakage input: need p_a plus at least one conditional column");

    LeakageTable table;
    table.p_a_given_b.resize(n_cols - 1);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != n_cols)
            throw std::runtime_error("leakage input: wrong column count at line " +
                                     std::to_string(line_no));
        table.p_a.push_back(row[0]);
        for (std::size_t b = 1; b < n_cols; ++b)
            table.p_a_given_b[b - 1].push_back(row[b]);
    }
    if (table.p_a.empty()) throw std::runtime_error("leakage input: no data rows");
    return table;
}

}  // namespace qkd::csv
