// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <future>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkd/config.hpp"
#include "qkd/csvio.hpp"
#include "qkd/estimation.hpp"
#include "qkd/keyrate.hpp"
#include "qkd/netproto.hpp"
#include "qkd/pa.hpp"
#include "qkd/sifting.hpp"
#include "qkd/simkernel.hpp"

namespace qkd {

struct PipelineSummary {
    bool verified = false;
    std::string abort_reason;  // empty when verified
    std::uint64_t n_slots = 0;
    double duration_s = 0;
    std::uint64_t sift_bits = 0;
    double sift_rate_bps = 0;
    double qber_estimate = 0;
    std::uint64_t reconciled_bits = 0;
    std::uint64_t parity_bits = 0;
    std::uint64_t secret_bits = 0;
    double secure_rate_bps = 0;
    std::uint32_t blocks_total = 0;
    std::uint32_t blocks_corrected = 0;
};

struct PipelineResult {
    PipelineSummary summary;
    net::SessionResult alice;
    net::SessionResult bob;
    SessionLogs logs;
};

/// Simulates one session and runs both protocol roles over an in-memory
/// loopback. Endpoints run concurrently and talk only through the stream.
inline PipelineResult run_pipeline(const SessionConfig& cfg) {
    validate_or_throw(cfg);

    PipelineResult result;
    result.logs = simulate_session(cfg, cfg.run.seed, cfg.run.n_slots);

    auto [alice_stream, bob_stream] = net::make_loopback();
    net::SessionInputs alice_in;
    alice_in.alice_log = &result.logs.alice;
    net::SessionInputs bob_in;
    bob_in.bob_log = &result.logs.bob;

    auto alice_future = std::async(std::launch::async, [&] {
        return net::run_session(net::Role::Alice, *alice_stream, alice_in, cfg);
    });
    result.bob = net::run_session(net::Role::Bob, *bob_stream, bob_in, cfg);
    result.alice = alice_future.get();

    auto& s = result.summary;
    s.n_slots = cfg.run.n_slots;
    s.duration_s = cfg.session_duration_s();
    s.verified = result.alice.phase == net::SessionPhase::Verified &&
                 result.bob.phase == net::SessionPhase::Verified;
    if (!s.verified)
        s.abort_reason = result.alice.aborted() ? result.alice.abort_reason_str()
                                                : result.bob.abort_reason_str();
    s.sift_bits = result.bob.sifted_bits;
    s.sift_rate_bps = s.duration_s > 0 ? static_cast<double>(s.sift_bits) / s.duration_s : 0;
    s.qber_estimate = result.bob.qber_estimate;
    s.reconciled_bits = result.bob.reconciled_bits;
    s.parity_bits = result.bob.parity_bits;
    s.secret_bits = result.bob.secret_bits;
    s.secure_rate_bps =
        s.duration_s > 0 ? static_cast<double>(s.secret_bits) / s.duration_s : 0;
    s.blocks_total = result.bob.blocks_total;
    s.blocks_corrected = result.bob.blocks_corrected;
    return result;
}

inline void write_summary_csv(const std::string& path, const PipelineSummary& s) {
    csv::Writer w(path);
    w.raw(
        "verified,abort_reason,n_slots,duration_s,sift_bits,sift_rate_bps,"
        "qber_estimate,reconciled_bits,parity_bits,secret_bits,secure_rate_bps,"
        "blocks_total,blocks_corrected\n");
    w.raw(s.verified ? "1" : "0");
    w.ch(',');
    w.raw(s.abort_reason);
    w.ch(',');
    w.num(s.n_slots);
    w.ch(',');
    w.num(s.duration_s);
    w.ch(',');
    w.num(s.sift_bits);
    w.ch(',');
    w.num(s.sift_rate_bps);
    w.ch(',');
    w.num(s.qber_estimate);
    w.ch(',');
    w.num(s.reconciled_bits);
    w.ch(',');
    w.num(s.parity_bits);
    w.ch(',');
    w.num(s.secret_bits);
    w.ch(',');
    w.num(s.secure_rate_bps);
    w.ch(',');
    w.num(static_cast<std::uint64_t>(s.blocks_total));
    w.ch(',');
    w.num(static_cast<std::uint64_t>(s.blocks_corrected));
    w.ch('\n');
}

/// Writes the standard artifact set for one pipeline run into out_dir.
inline void write_pipeline_artifacts(const PipelineResult& result,
                                     const SessionConfig& cfg,
                                     const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto at = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

    save_config(cfg, at("config.json"));
    csv::write_alice_log(at("alice_log.csv"), result.logs.alice);
    csv::write_bob_log(at("bob_log.csv"), result.logs.bob);
    csv::write_truth(at("truth.csv"), result.logs);
    csv::write_transcript(at("transcript.csv"), result.bob.transcript);
    write_summary_csv(at("summary.csv"), result.summary);

    SyncParams sync;
    sync.t_a0 = 0;
    sync.t_d = calibrated_path_delay(cfg.channel.path_delay_ps, cfg.detector.clock_tick_ps);
    sync.period = cfg.source.pulse_period_ps();
    SiftResult sift = sift_session(result.logs, sync, cfg.protocol.window_ps);
    csv::write_sift(at("alice_sift.csv"), sift, true);
    csv::write_sift(at("bob_sift.csv"), sift, false);
    if (!sift.alice_key.empty()) {
        QberEstimate est;
        est.e_hat = result.summary.qber_estimate;
        SamplePlan plan = select_sample(sift.alice_key.size(), cfg.protocol.sample_fraction,
                                        cfg.protocol.sample_mode,
                                        derive_seed(cfg.run.seed, 0x5A11u));
        BitString a = net::detail::gather_bits(sift.alice_key, plan.indices);
        BitString b = net::detail::gather_bits(sift.bob_key, plan.indices);
        csv::write_estimation(at("estimation.csv"), cfg.protocol.sample_fraction,
                              cfg.protocol.sample_mode, estimate_qber(a, b));
    }
}

/// One simulation, one sift per window; rows in window order.
inline std::vector<WindowRow> pipeline_sweep_window(const SessionConfig& cfg,
                                                    const std::vector<TimePs>& windows) {
    validate_or_throw(cfg);
    SessionLogs logs = simulate_session(cfg, cfg.run.seed, cfg.run.n_slots);
    SyncParams sync;
    sync.t_a0 = 0;
    sync.t_d = calibrated_path_delay(cfg.channel.path_delay_ps, cfg.detector.clock_tick_ps);
    sync.period = cfg.source.pulse_period_ps();
    return sweep_window(logs.alice, logs.bob, sync, windows);
}

/// Per mean photon number: simulate, tally yields from ground truth, and
/// evaluate the three closed-form calculators. Points use seeds derived
/// per index so a --jobs split cannot change the numbers.
inline std::vector<csv::MuRow> pipeline_sweep_mu(const SessionConfig& cfg,
                                                 const std::vector<double>& mu_list,
                                                 unsigned jobs = 1) {
    validate_or_throw(cfg);
    if (mu_list.empty()) throw std::invalid_argument("sweep_mu: empty mu list");
    for (double mu : mu_list)
        if (!(mu > 0)) throw std::invalid_argument("sweep_mu: mu values must be positive");

    auto eval_point = [&cfg](double mu, std::uint64_t point_seed) {
        SessionConfig point_cfg = cfg;
        point_cfg.source.mu_signal = mu;
        SessionLogs logs = simulate_session(point_cfg, point_seed, point_cfg.run.n_slots);
        SyncParams sync;
        sync.t_a0 = 0;
        sync.t_d = calibrated_path_delay(point_cfg.channel.path_delay_ps,
                                         point_cfg.detector.clock_tick_ps);
        sync.period = point_cfg.source.pulse_period_ps();
        SiftResult sift = sift_session(logs, sync, point_cfg.protocol.window_ps);
        YieldStats y = tally_yields(logs, sift, point_cfg.protocol.ec_inefficiency);
        csv::MuRow row;
        row.mu = mu;
        row.bb84_rate = ideal_bb84_rate(y.e_mu);
        row.decoy_rate = decoy_rate(y);
        row.epcd_rate = epcd_rate(y);
        return row;
    };

    std::vector<csv::MuRow> rows(mu_list.size());
    if (jobs <= 1) {
        for (std::size_t i = 0; i < mu_list.size(); ++i)
            rows[i] = eval_point(mu_list[i], derive_seed(cfg.run.seed, 0xA100 + i));
        return rows;
    }
    std::vector<std::future<void>> futures;
    std::size_t next = 0;
    for (unsigned j = 0; j < jobs; ++j)
        futures.push_back(std::async(std::launch::async, [&, j] {
            for (std::size_t i = j; i < mu_list.size(); i += jobs)
                rows[i] = eval_point(mu_list[i], derive_seed(cfg.run.seed, 0xA100 + i));
        }));
    for (auto& f : futures) f.get();
    return rows;
}

}  // namespace qkd
