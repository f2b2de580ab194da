// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qkd/core.hpp"
#include "qkd/simkernel.hpp"

namespace qkd {

struct SyncParams {
    TimePs t_a0 = 0;
    TimePs t_d = 0;
    TimePs period = 0;
};

/// The receiver's slot grid lives on its clock ticks; a mid-tick physical
/// path delay is calibrated down to the grid so that quantized arrivals of
/// on-time photons carry zero residual.
inline TimePs calibrated_path_delay(TimePs physical_delay, TimePs clock_tick) {
    return detail::floor_to_tick(physical_delay, clock_tick);
}

struct SlotAssignment {
    std::uint64_t slot = 0;
    TimePs residual = 0;
    bool accepted = false;
};

/// Maps a detection timestamp to the nearest pulse slot. `window` is the
/// full width of the temporal filter: accepted iff 2|residual| <= window.
/// Slots clamp at zero; rounding is nearest (half away from zero).
inline SlotAssignment assign_slot(TimePs t_b, TimePs t_a0, TimePs t_d, TimePs period,
                                  TimePs window) {
    if (period <= 0) throw std::invalid_argument("assign_slot: period must be positive");
    if (window < 0 || window > period)
        throw std::invalid_argument("assign_slot: window must be in [0, period]");
    TimePs delta = t_b - t_a0 - t_d;
    TimePs n = 0;
    if (delta > 0) n = (delta + period / 2) / period;
    SlotAssignment a;
    a.slot = static_cast<std::uint64_t>(n);
    a.residual = delta - n * period;
    a.accepted = 2 * std::abs(a.residual) <= window;
    return a;
}

struct SiftStats {
    std::uint64_t raw_detections = 0;
    std::uint64_t slot_matched = 0;
    std::uint64_t basis_matched = 0;
    std::uint64_t double_discarded = 0;
    std::uint64_t decoy_matched = 0;
    std::uint64_t entrapped_matched = 0;
};

struct SiftResult {
    BitString alice_key;
    BitString bob_key;
    std::vector<std::uint64_t> slots;
    std::vector<Basis> bases;
    SiftStats stats;
    std::uint64_t session_id = 0;
};

/// Basis reconciliation over both logs. Detections map to slots through
/// assign_slot; slots with multiple accepted detections are discarded;
/// only basis matches on signal-class slots contribute key bits. Decoy
/// and entrapped matches are counted separately.
inline SiftResult sift_session(const std::vector<PulseRecord>& alice_log,
                               const std::vector<DetectionEvent>& bob_log,
                               const SyncParams& sync, TimePs window) {
    for (std::size_t i = 1; i < bob_log.size(); ++i)
        if (bob_log[i].timestamp_ps < bob_log[i - 1].timestamp_ps)
            throw std::invalid_argument("sift_session: detection log not sorted");

    SiftResult result;
    result.stats.raw_detections = bob_log.size();

    const std::uint64_t n_slots = alice_log.size();
    std::uint64_t current_slot = ~std::uint64_t{0};
    State current_det = State::H;
    unsigned count_in_slot = 0;

    auto flush = [&]() {
        if (count_in_slot == 0) return;
        if (count_in_slot > 1) {
            ++result.stats.double_discarded;
            return;
        }
        ++result.stats.slot_matched;
        if (current_slot >= n_slots) return;
        const PulseRecord& rec = alice_log[current_slot];
        Basis bob_basis = basis_of(current_det);
        if (bob_basis != rec.basis()) return;
        ++result.stats.basis_matched;
        switch (rec.cls) {
            case PulseClass::Decoy: ++result.stats.decoy_matched; return;
            case PulseClass::Entrapped: ++result.stats.entrapped_matched; return;
            case PulseClass::Signal: break;
        }
        result.alice_key.push_back(rec.bit());
        result.bob_key.push_back(bit_of(current_det));
        result.slots.push_back(current_slot);
        result.bases.push_back(bob_basis);
    };

    for (const auto& ev : bob_log) {
        SlotAssignment a = assign_slot(ev.timestamp_ps, sync.t_a0, sync.t_d, sync.period, window);
        if (!a.accepted) continue;
        if (a.slot != current_slot) {
            flush();
            current_slot = a.slot;
            current_det = ev.detector;
            count_in_slot = 1;
        } else {
            ++count_in_slot;
        }
    }
    flush();
    return result;
}

inline SiftResult sift_session(const SessionLogs& logs, const SyncParams& sync,
                               TimePs window) {
    SiftResult r = sift_session(logs.alice, logs.bob, sync, window);
    r.session_id = logs.session_id;
    return r;
}

struct WindowRow {
    TimePs window_ps = 0;
    double qber = 0;
    double sift_rate_bps = 0;
};

/// One sift per window over the same logs; rows in window order.
inline std::vector<WindowRow> sweep_window(const std::vector<PulseRecord>& alice_log,
                                           const std::vector<DetectionEvent>& bob_log,
                                           const SyncParams& sync,
                                           const std::vector<TimePs>& windows) {
    for (std::size_t i = 1; i < windows.size(); ++i)
        if (windows[i] < windows[i - 1])
            throw std::invalid_argument("sweep_window: windows must be ascending");
    const double duration_s = static_cast<double>(alice_log.size()) *
                              static_cast<double>(sync.period) * 1e-12;
    std::vector<WindowRow> rows;
    rows.reserve(windows.size());
    for (TimePs w : windows) {
        SiftResult r = sift_session(alice_log, bob_log, sync, w);
        WindowRow row;
        row.window_ps = w;
        std::size_t len = r.alice_key.size();
        row.qber = len ? static_cast<double>(hamming_distance(r.alice_key, r.bob_key)) /
                             static_cast<double>(len)
                       : 0.0;
        row.sift_rate_bps = duration_s > 0 ? static_cast<double>(len) / duration_s : 0.0;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace qkd
