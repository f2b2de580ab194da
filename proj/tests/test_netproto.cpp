// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <future>
#include <set>
#include <vector>

#include "qkd/netproto.hpp"
#include "qkd/pa.hpp"
#include "qkd/simkernel.hpp"

using namespace qkd;
using namespace qkd::net;

namespace {

Message roundtrip(const Message& m) { return decode_message(decode_frame(encode_frame(encode_message(m)))); }

BitString random_bits(SplitMix64& rng, std::size_t n) {
    BitString b;
    b.reserve(n);
    for (std::size_t i = 0; i < n; ++i) b.push_back(rng.next_bit());
    return b;
}

void send_msg(Stream& s, const Message& m) { write_frame(s, encode_message(m)); }

Message read_msg(Stream& s) {
    return decode_message(read_frame(s, std::chrono::milliseconds(5000)));
}

/// Byte-identical transcripts, direction labels included.
bool transcripts_equal(const Transcript& a, const Transcript& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].sender != b[i].sender || a[i].bytes != b[i].bytes) return false;
    return true;
}

struct SessionPair {
    SessionResult alice;
    SessionResult bob;
};

SessionPair run_pair(const SessionConfig& cfg, const SessionInputs& alice_in,
                     const SessionInputs& bob_in,
                     std::chrono::milliseconds timeout = std::chrono::milliseconds(30'000)) {
    auto [alice_stream, bob_stream] = make_loopback();
    auto fut = std::async(std::launch::async, [&] {
        return run_session(Role::Alice, *alice_stream, alice_in, cfg, timeout);
    });
    SessionPair pair;
    pair.bob = run_session(Role::Bob, *bob_stream, bob_in, cfg, timeout);
    pair.alice = fut.get();
    return pair;
}

}  // namespace

TEST_CASE("hello frame has the documented byte layout") {
    auto bytes = encode_frame(encode_message(HelloMsg{}));
    REQUIRE(bytes.size() == 8);
    const std::uint8_t expected[8] = {0x51, 0x4B, 0x01, 0x01, 0x00, 0x00, 0x00, 0x00};
    for (int i = 0; i < 8; ++i) CHECK(bytes[i] == expected[i]);
}

TEST_CASE("codec round-trips every message type") {
    SplitMix64 rng(1);
    std::vector<Message> messages = {
        HelloMsg{},
        SyncMsg{0, 666'000, 200'000, 10'000},
        BasisAnnounceMsg{{3, 17, 44, 901}, BitString::from_string("0110")},
        KeepListMsg{{0, 2, 3}},
        SampleIdxMsg{{1, 5, 9, 12, 77}},
        SampleBitsMsg{random_bits(rng, 37)},
        QberReportMsg{0.024999999999
        },
        SyndromeMsg{42, random_bits(rng, 512)},
        BlockVerdictMsg{42, 1, 7, 25},
        PaParamsMsg{1000, 450, 10, random_bits(rng, 1449)},
        KeyHashMsg{0xDEADBEEFCAFEF00Dull},
        VerifyOkMsg{},
        AbortMsg{AbortReason::QberExceedsThreshold},
    };
    for (const auto& m : messages) CHECK(roundtrip(m) == m);
}

TEST_CASE("frame decoding rejects malformed input with distinct errors") {
    auto good = encode_frame(encode_message(SyncMsg{0, 1, 2, 3}));

    auto bad_magic = good;
    bad_magic[0] = 0x00;
    bad_magic[1] = 0x00;
    CHECK_THROWS_AS(decode_frame(bad_magic), BadMagicError);

    auto bad_version = good;
    bad_version[2] = 0x02;
    CHECK_THROWS_AS(decode_frame(bad_version), BadVersionError);

    auto truncated = good;
    truncated.resize(good.size() - 4);
    CHECK_THROWS_AS(decode_frame(truncated), TruncatedFrameError);

    auto unknown = good;
    unknown[3] = 0x7F;
    CHECK_THROWS_AS(decode_frame(unknown), UnknownTypeError);

    // Payload shorter or longer than the message demands.
    Frame shorted{MsgType::Sync, std::vector<std::uint8_t>(12, 0)};
    CHECK_THROWS_AS(decode_message(shorted), TruncatedFrameError);
    Frame extra{MsgType::Hello, std::vector<std::uint8_t>(1, 0)};
    CHECK_THROWS_AS(decode_message(extra), TruncatedFrameError);
}

TEST_CASE("loopback stream delivers in order and times out") {
    auto [a, b] = make_loopback();
    std::vector<std::uint8_t> payload = {1, 2, 3, 4, 5};
    a->write(payload);
    std::uint8_t buf[5];
    b->read_exact(buf, std::chrono::milliseconds(100));
    for (int i = 0; i < 5; ++i) CHECK(buf[i] == payload[i]);
    CHECK_THROWS_AS(b->read_exact(buf, std::chrono::milliseconds(50)), StreamTimeout);
}

TEST_CASE("noiseless pre-sifted keys verify with r = n - p - s") {
    SessionConfig cfg;
    cfg.run.seed = 99;
    SplitMix64 rng(8);
    BitString key = random_bits(rng, 4096);

    SessionInputs alice_in, bob_in;
    alice_in.key = &key;
    bob_in.key = &key;
    auto pair = run_pair(cfg, alice_in, bob_in);

    REQUIRE(pair.alice.phase == SessionPhase::Verified);
    REQUIRE(pair.bob.phase == SessionPhase::Verified);
    CHECK(pair.alice.final_key == pair.bob.final_key);
    CHECK(pair.alice.qber_estimate == 0.0);

    // e_hat = 0 path: the ledger drops exactly p + s bits.
    std::uint64_t n = pair.alice.reconciled_bits;
    std::uint64_t p = pair.alice.parity_bits;
    CHECK(pair.alice.secret_bits == n - p - cfg.protocol.security_parameter);
    CHECK(pair.alice.final_key.size() == pair.alice.secret_bits);
    CHECK(transcripts_equal(pair.alice.transcript, pair.bob.transcript));
}

TEST_CASE("simulated session verifies end to end with matching books") {
    SessionConfig cfg;
    cfg.run.n_slots = 1'000'000;
    cfg.run.seed = 20'24;
    auto logs = simulate_session(cfg, cfg.run.seed, cfg.run.n_slots);

    SessionInputs alice_in, bob_in;
    alice_in.alice_log = &logs.alice;
    bob_in.bob_log = &logs.bob;
    auto pair = run_pair(cfg, alice_in, bob_in);

    REQUIRE(pair.alice.phase == SessionPhase::Verified);
    REQUIRE(pair.bob.phase == SessionPhase::Verified);
    REQUIRE(pair.alice.final_key == pair.bob.final_key);
    CHECK(pair.alice.sifted_bits == pair.bob.sifted_bits);
    CHECK(pair.alice.sifted_bits > 20'000);
    CHECK(pair.alice.qber_estimate == pair.bob.qber_estimate);
    CHECK(pair.alice.parity_bits == pair.bob.parity_bits);
    CHECK(pair.alice.blocks_total == pair.bob.blocks_total);

    // Length accounting: the final key is exactly the ledger's r.
    LeakageLedger ledger{pair.alice.reconciled_bits, pair.alice.qber_estimate,
                         pair.alice.parity_bits, cfg.protocol.security_parameter};
    CHECK(pair.alice.final_key.size() == secret_length(ledger));
    CHECK(transcripts_equal(pair.alice.transcript, pair.bob.transcript));

    // Determinism: an identical rerun reproduces identical transcripts.
    auto again = run_pair(cfg, alice_in, bob_in);
    CHECK(transcripts_equal(pair.alice.transcript, again.alice.transcript));
    CHECK(pair.alice.final_key == again.alice.final_key);
}

TEST_CASE("final key bits never appear on the wire") {
    SessionConfig cfg;
    cfg.run.n_slots = 400'000;
    cfg.run.seed = 7;
    auto logs = simulate_session(cfg, cfg.run.seed, cfg.run.n_slots);
    SessionInputs alice_in, bob_in;
    alice_in.alice_log = &logs.alice;
    bob_in.bob_log = &logs.bob;
    auto pair = run_pair(cfg, alice_in, bob_in);
    REQUIRE(pair.alice.phase == SessionPhase::Verified);

    // Every 8-byte window of the packed final key, checked against every
    // frame in the transcript. 64-bit windows make chance hits
    // negligible; 32 bits would see noise at these transcript sizes.
    auto key_bytes = pair.alice.final_key.to_bytes();
    REQUIRE(key_bytes.size() > 400);
    std::set<std::uint64_t> windows;
    for (std::size_t i = 0; i + 8 <= key_bytes.size(); ++i) {
        std::uint64_t w = 0;
        for (int b = 0; b < 8; ++b) w = (w << 8) | key_bytes[i + b];
        windows.insert(w);
    }
    auto scan = [&](const std::vector<std::uint8_t>& bytes) {
        if (bytes.size() < 8) return 0;
        int hits = 0;
        std::uint64_t w = 0;
        for (std::size_t i = 0; i < bytes.size(); ++i) {
            w = (w << 8) | bytes[i];
            if (i >= 7 && windows.count(w)) ++hits;
        }
        return hits;
    };
    int total_hits = 0;
    for (const auto& entry : pair.alice.transcript) total_hits += scan(entry.bytes);
    CHECK(total_hits == 0);

    // Scanner self-check: a frame that does carry the key is caught.
    Frame leaky{MsgType::SampleBits, key_bytes};
    CHECK(scan(encode_frame(leaky)) > 0);
}

TEST_CASE("error rate above threshold aborts both sides at the report") {
    SessionConfig cfg;
    cfg.run.seed = 50;
    SplitMix64 rng(50);
    BitString alice_key = random_bits(rng, 20'000);
    BitString bob_key = alice_key;
    for (std::size_t i = 0; i < bob_key.size(); ++i)
        if (rng.next_double() < 0.15) bob_key.set(i, bob_key.get(i) ^ 1);

    SessionInputs alice_in, bob_in;
    alice_in.key = &alice_key;
    bob_in.key = &bob_key;
    auto pair = run_pair(cfg, alice_in, bob_in);

    REQUIRE(pair.alice.phase == SessionPhase::Aborted);
    REQUIRE(pair.bob.phase == SessionPhase::Aborted);
    CHECK(pair.alice.abort_reason == AbortReason::QberExceedsThreshold);
    CHECK(pair.bob.abort_reason == AbortReason::QberExceedsThreshold);
    CHECK(std::string(pair.alice.abort_reason_str()) == "qber_exceeds_threshold");
    CHECK(pair.alice.qber_estimate > 0.11);
}

TEST_CASE("a dark session aborts with no_detections") {
    SessionConfig cfg;
    cfg.source.mu_signal = 0;
    cfg.detector.dark_rate_cps = 0;
    cfg.channel.background_rate_cps = 0;
    cfg.run.n_slots = 50'000;
    auto logs = simulate_session(cfg, 3, cfg.run.n_slots);
    SessionInputs alice_in, bob_in;
    alice_in.alice_log = &logs.alice;
    bob_in.bob_log = &logs.bob;
    auto pair = run_pair(cfg, alice_in, bob_in);
    CHECK(pair.alice.phase == SessionPhase::Aborted);
    CHECK(pair.bob.phase == SessionPhase::Aborted);
    CHECK(pair.alice.abort_reason == AbortReason::NoDetections);
    CHECK(pair.bob.abort_reason == AbortReason::NoDetections);
}

TEST_CASE("out-of-order frames abort both sides within one round trip") {
    SessionConfig cfg;
    auto [script_stream, bob_stream] = make_loopback();
    BitString key = BitString::from_string("1010");
    SessionInputs bob_in;
    bob_in.key = &key;
    auto fut = std::async(std::launch::async, [&] {
        return run_session(Role::Bob, *bob_stream, bob_in, cfg,
                           std::chrono::milliseconds(5000));
    });

    send_msg(*script_stream, HelloMsg{});
    Message reply = read_msg(*script_stream);
    CHECK(std::holds_alternative<HelloMsg>(reply));
    send_msg(*script_stream, QberReportMsg{0.01});  // expected: SYNC

    Message answer = read_msg(*script_stream);
    REQUIRE(std::holds_alternative<AbortMsg>(answer));
    CHECK(std::get<AbortMsg>(answer).reason == AbortReason::ProtocolOrder);

    SessionResult bob = fut.get();
    CHECK(bob.phase == SessionPhase::Aborted);
    CHECK(bob.abort_reason == AbortReason::ProtocolOrder);
}

TEST_CASE("a wrong key checksum draws a hash-mismatch abort") {
    SessionConfig cfg;
    cfg.run.seed = 71;
    SplitMix64 rng(71);
    BitString key = random_bits(rng, 2048);

    auto [script_stream, bob_stream] = make_loopback();
    SessionInputs bob_in;
    bob_in.key = &key;
    auto fut = std::async(std::launch::async, [&] {
        return run_session(Role::Bob, *bob_stream, bob_in, cfg,
                           std::chrono::milliseconds(10'000));
    });

    // Scripted Alice follows the honest flow until the checksum.
    Stream& s = *script_stream;
    send_msg(s, HelloMsg{});
    REQUIRE(std::holds_alternative<HelloMsg>(read_msg(s)));
    send_msg(s, SyncMsg{0, 660'000, 200'000, 10'000});
    auto announce = std::get<BasisAnnounceMsg>(read_msg(s));
    KeepListMsg keep;
    for (std::uint64_t i = 0; i < announce.slots.size(); ++i) keep.positions.push_back(i);
    send_msg(s, keep);

    auto idx = std::get<SampleIdxMsg>(read_msg(s));
    auto bob_bits = std::get<SampleBitsMsg>(read_msg(s));
    BitString mine = net::detail::gather_bits(key, idx.positions);
    send_msg(s, SampleBitsMsg{mine});
    REQUIRE(mine == bob_bits.bits);  // same key, zero errors
    send_msg(s, QberReportMsg{0.0});

    BitString remaining = net::detail::remove_bits(key, idx.positions);
    LdpcCode code = build_code(cfg.protocol.ldpc_seed);
    std::uint32_t blocks = net::detail::block_count(remaining.size());
    for (std::uint32_t b = 0; b < blocks; ++b) {
        send_msg(s, SyndromeMsg{b, syndrome(code, net::detail::block_of(remaining, b))});
        auto verdict = std::get<BlockVerdictMsg>(read_msg(s));
        REQUIRE(verdict.corrected == 1);
    }

    LeakageLedger ledger{remaining.size(), 0.0, parity_leakage(blocks),
                         cfg.protocol.security_parameter};
    std::uint64_t r = secret_length(ledger);
    SplitMix64 pa_rng(derive_seed(cfg.run.seed, 0x9A5Eu));
    ToeplitzSpec spec = make_toeplitz_spec(remaining.size(), r, pa_rng);
    send_msg(s, PaParamsMsg{spec.n, spec.r, ledger.s, spec.seed_bits});
    send_msg(s, KeyHashMsg{0x1234567890ABCDEFull});  // wrong on purpose

    Message answer = read_msg(s);
    REQUIRE(std::holds_alternative<AbortMsg>(answer));
    CHECK(std::get<AbortMsg>(answer).reason == AbortReason::HashMismatch);

    SessionResult bob = fut.get();
    CHECK(bob.phase == SessionPhase::Aborted);
    CHECK(bob.abort_reason == AbortReason::HashMismatch);
}

TEST_CASE("silence on the wire times out to an abort") {
    SessionConfig cfg;
    auto [a, b] = make_loopback();
    BitString key = BitString::from_string("1111");
    SessionInputs bob_in;
    bob_in.key = &key;
    SessionResult bob =
        run_session(Role::Bob, *b, bob_in, cfg, std::chrono::milliseconds(100));
    CHECK(bob.phase == SessionPhase::Aborted);
    CHECK(bob.abort_reason == AbortReason::Timeout);
}
