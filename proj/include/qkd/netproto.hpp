// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "qkd/config.hpp"
#include "qkd/core.hpp"
#include "qkd/ecc.hpp"
#include "qkd/estimation.hpp"
#include "qkd/pa.hpp"
#include "qkd/sifting.hpp"
#include "qkd/simkernel.hpp"

namespace qkd::net {

// ---- Frame layout -------------------------------------------------------
// magic 0x51 0x4B | version 0x01 | msg_type u8 | payload_len u32 LE | payload
// Multi-byte integers are little-endian. Bitstrings travel as a 32-bit bit
// count followed by packed bytes, big-endian within each byte, zero-padded.

constexpr std::uint8_t kMagic0 = 0x51;
constexpr std::uint8_t kMagic1 = 0x4B;
constexpr std::uint8_t kVersion = 0x01;

enum class MsgType : std::uint8_t {
    Hello = 0x01,
    Sync = 0x02,
    BasisAnnounce = 0x03,
    KeepList = 0x04,
    SampleIdx = 0x05,
    SampleBits = 0x06,
    QberReport = 0x07,
    Syndrome = 0x08,
    BlockVerdict = 0x09,
    PaParams = 0x0A,
    KeyHash = 0x0B,
    VerifyOk = 0x0C,
    Abort = 0x0D,
};

enum class AbortReason : std::uint8_t {
    QberExceedsThreshold = 0x01,
    NoDetections = 0x02,
    HashMismatch = 0x03,
    ProtocolOrder = 0x04,
    NoSecretBits = 0x05,
    Timeout = 0x06,
    InternalError = 0x07,
};

inline const char* abort_reason_name(AbortReason r) {
    switch (r) {
        case AbortReason::QberExceedsThreshold: return "qber_exceeds_threshold";
        case AbortReason::NoDetections: return "no_detections";
        case AbortReason::HashMismatch: return "hash_mismatch";
        case AbortReason::ProtocolOrder: return "protocol_order";
        case AbortReason::NoSecretBits: return "no_secret_bits";
        case AbortReason::Timeout: return "timeout";
        default: return "internal_error";
    }
}

class ProtocolError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class BadMagicError : public ProtocolError {
public:
    BadMagicError() : ProtocolError("frame: bad magic") {}
};
class BadVersionError : public ProtocolError {
public:
    BadVersionError() : ProtocolError("frame: unsupported version") {}
};
class TruncatedFrameError : public ProtocolError {
public:
    TruncatedFrameError() : ProtocolError("frame: truncated payload") {}
};
class UnknownTypeError : public ProtocolError {
public:
    UnknownTypeError() : ProtocolError("frame: unknown message type") {}
};

struct Frame {
    MsgType type;
    std::vector<std::uint8_t> payload;
};

inline bool known_type(std::uint8_t t) {
    return t >= static_cast<std::uint8_t>(MsgType::Hello) &&
           t <= static_cast<std::uint8_t>(MsgType::Abort);
}

inline std::vector<std::uint8_t> encode_frame(const Frame& f) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + f.payload.size());
    out.push_back(kMagic0);
    out.push_back(kMagic1);
    out.push_back(kVersion);
    out.push_back(static_cast<std::uint8_t>(f.type));
    auto len = static_cast<std::uint32_t>(f.payload.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
    out.insert(out.end(), f.payload.begin(), f.payload.end());
    return out;
}

inline Frame decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) throw TruncatedFrameError();
    if (bytes[0] != kMagic0 || bytes[1] != kMagic1) throw BadMagicError();
    if (bytes[2] != kVersion) throw BadVersionError();
    if (!known_type(bytes[3])) throw UnknownTypeError();
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
    if (bytes.size() < 8 + static_cast<std::size_t>(len)) throw TruncatedFrameError();
    Frame f;
    f.type = static_cast<MsgType>(bytes[3]);
    f.payload.assign(bytes.begin() + 8, bytes.begin() + 8 + len);
    return f;
}

// ---- Payload primitives -------------------------------------------------

namespace wire {

struct Writer {
    std::vector<std::uint8_t> buf;
    void u8(std::uint8_t v) { buf.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bits(const BitString& b) {
        u32(static_cast<std::uint32_t>(b.size()));
        auto bytes = b.to_bytes();
        buf.insert(buf.end(), bytes.begin(), bytes.end());
    }
};

struct Reader {
    std::span<const std::uint8_t> buf;
    std::size_t pos = 0;
    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw TruncatedFrameError();
    }
    std::uint8_t u8() {
        need(1);
        return buf[pos++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(buf[pos++]) << (8 * i);
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    BitString bits() {
        std::uint32_t n = u32();
        std::size_t nbytes = (static_cast<std::size_t>(n) + 7) / 8;
        need(nbytes);
        BitString b = BitString::from_bytes(buf.subspan(pos, nbytes), n);
        pos += nbytes;
        return b;
    }
    void done() const {
        if (pos != buf.size()) throw TruncatedFrameError();
    }
};

}  // namespace wire

// ---- Messages -----------------------------------------------------------

struct HelloMsg {
    bool operator==(const HelloMsg&) const = default;
};
struct SyncMsg {
    TimePs t_a0 = 0, t_d = 0, period = 0, window = 0;
    bool operator==(const SyncMsg&) const = default;
};
struct BasisAnnounceMsg {
    std::vector<std::uint64_t> slots;
    BitString bases;  // 0 rect, 1 diag, parallel to slots
    bool operator==(const BasisAnnounceMsg&) const = default;
};
struct KeepListMsg {
    std::vector<std::uint64_t> positions;  // indices into the announce list
    bool operator==(const KeepListMsg&) const = default;
};
struct SampleIdxMsg {
    std::vector<std::uint64_t> positions;  // indices into the sifted key
    bool operator==(const SampleIdxMsg&) const = default;
};
struct SampleBitsMsg {
    BitString bits;
    bool operator==(const SampleBitsMsg&) const = default;
};
struct QberReportMsg {
    double e_hat = 0;
    bool operator==(const QberReportMsg&) const = default;
};
struct SyndromeMsg {
    std::uint32_t block_id = 0;
    BitString syndrome;
    bool operator==(const SyndromeMsg&) const = default;
};
struct BlockVerdictMsg {
    std::uint32_t block_id = 0;
    std::uint8_t corrected = 0;
    std::uint8_t iterations = 0;
    std::uint16_t corrected_bits = 0;
    bool operator==(const BlockVerdictMsg&) const = default;
};
struct PaParamsMsg {
    std::uint64_t n = 0, r = 0, s = 0;
    BitString seed;
    bool operator==(const PaParamsMsg&) const = default;
};
struct KeyHashMsg {
    std::uint64_t hash = 0;
    bool operator==(const KeyHashMsg&) const = default;
};
struct VerifyOkMsg {
    bool operator==(const VerifyOkMsg&) const = default;
};
struct AbortMsg {
    AbortReason reason = AbortReason::InternalError;
    bool operator==(const AbortMsg&) const = default;
};

using Message = std::variant<HelloMsg, SyncMsg, BasisAnnounceMsg, KeepListMsg,
                             SampleIdxMsg, SampleBitsMsg, QberReportMsg, SyndromeMsg,
                             BlockVerdictMsg, PaParamsMsg, KeyHashMsg, VerifyOkMsg,
                             AbortMsg>;

inline Frame encode_message(const Message& msg) {
    Frame f;
    wire::Writer w;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, HelloMsg>) {
                f.type = MsgType::Hello;
            } else if constexpr (std::is_same_v<T, SyncMsg>) {
                f.type = MsgType::Sync;
                w.u64(static_cast<std::uint64_t>(m.t_a0));
                w.u64(static_cast<std::uint64_t>(m.t_d));
                w.u64(static_cast<std::uint64_t>(m.period));
                w.u64(static_cast<std::uint64_t>(m.window));
            } else if constexpr (std::is_same_v<T, BasisAnnounceMsg>) {
                f.type = MsgType::BasisAnnounce;
                w.u32(static_cast<std::uint32_t>(m.slots.size()));
                for (auto s : m.slots) w.u64(s);
                w.bits(m.bases);
            } else if constexpr (std::is_same_v<T, KeepListMsg>) {
                f.type = MsgType::KeepList;
                w.u32(static_cast<std::uint32_t>(m.positions.size()));
                for (auto p : m.positions) w.u64(p);
            } else if constexpr (std::is_same_v<T, SampleIdxMsg>) {
                f.type = MsgType::SampleIdx;
                w.u32(static_cast<std::uint32_t>(m.positions.size()));
                for (auto p : m.positions) w.u64(p);
            } else if constexpr (std::is_same_v<T, SampleBitsMsg>) {
                f.type = MsgType::SampleBits;
                w.bits(m.bits);
            } else if constexpr (std::is_same_v<T, QberReportMsg>) {
                f.type = MsgType::QberReport;
                w.f64(m.e_hat);
            } else if constexpr (std::is_same_v<T, SyndromeMsg>) {
                f.type = MsgType::Syndrome;
                w.u32(m.block_id);
                w.bits(m.syndrome);
            } else if constexpr (std::is_same_v<T, BlockVerdictMsg>) {
                f.type = MsgType::BlockVerdict;
                w.u32(m.block_id);
                w.u8(m.corrected);
                w.u8(m.iterations);
                w.u16(m.corrected_bits);
            } else if constexpr (std::is_same_v<T, PaParamsMsg>) {
                f.type = MsgType::PaParams;
                w.u64(m.n);
                w.u64(m.r);
                w.u64(m.s);
                w.bits(m.seed);
            } else if constexpr (std::is_same_v<T, KeyHashMsg>) {
                f.type = MsgType::KeyHash;
                w.u64(m.hash);
            } else if constexpr (std::is_same_v<T, VerifyOkMsg>) {
                f.type = MsgType::VerifyOk;
            } else if constexpr (std::is_same_v<T, AbortMsg>) {
                f.type = MsgType::Abort;
                w.u8(static_cast<std::uint8_t>(m.reason));
            }
        },
        msg);
    f.payload = std::move(w.buf);
    return f;
}

inline Message decode_message(const Frame& f) {
    wire::Reader r{f.payload};
    switch (f.type) {
        case MsgType::Hello: {
            r.done();
            return HelloMsg{};
        }
        case MsgType::Sync: {
            SyncMsg m;
            m.t_a0 = static_cast<TimePs>(r.u64());
            m.t_d = static_cast<TimePs>(r.u64());
            m.period = static_cast<TimePs>(r.u64());
            m.window = static_cast<TimePs>(r.u64());
            r.done();
            return m;
        }
        case MsgType::BasisAnnounce: {
            BasisAnnounceMsg m;
            std::uint32_t n = r.u32();
            m.slots.reserve(n);
            for (std::uint32_t i = 0; i < n; ++i) m.slots.push_back(r.u64());
            m.bases = r.bits();
            r.done();
            if (m.bases.size() != m.slots.size()) throw TruncatedFrameError();
            return m;
        }
        case MsgType::KeepList: {
            KeepListMsg m;
            std::uint32_t n = r.u32();
            m.positions.reserve(n);
            for (std::uint32_t i = 0; i < n; ++i) m.positions.push_back(r.u64());
            r.done();
            return m;
        }
        case MsgType::SampleIdx: {
            SampleIdxMsg m;
            std::uint32_t n = r.u32();
            m.positions.reserve(n);
            for (std::uint32_t i = 0; i < n; ++i) m.positions.push_back(r.u64());
            r.done();
            return m;
        }
        case MsgType::SampleBits: {
            SampleBitsMsg m;
            m.bits = r.bits();
            r.done();
            return m;
        }
        case MsgType::QberReport: {
            QberReportMsg m;
            m.e_hat = r.f64();
            r.done();
            return m;
        }
        case MsgType::Syndrome: {
            SyndromeMsg m;
            m.block_id = r.u32();
            m.syndrome = r.bits();
            r.done();
            return m;
        }
        case MsgType::BlockVerdict: {
            BlockVerdictMsg m;
            m.block_id = r.u32();
            m.corrected = r.u8();
            m.iterations = r.u8();
            m.corrected_bits = r.u16();
            r.done();
            return m;
        }
        case MsgType::PaParams: {
            PaParamsMsg m;
            m.n = r.u64();
            m.r = r.u64();
            m.s = r.u64();
            m.seed = r.bits();
            r.done();
            return m;
        }
        case MsgType::KeyHash: {
            KeyHashMsg m;
            m.hash = r.u64();
            r.done();
            return m;
        }
        case MsgType::VerifyOk: {
            r.done();
            return VerifyOkMsg{};
        }
        case MsgType::Abort: {
            AbortMsg m;
            m.reason = static_cast<AbortReason>(r.u8());
            r.done();
            return m;
        }
    }
    throw UnknownTypeError();
}

// ---- Transport ----------------------------------------------------------

class StreamTimeout : public std::runtime_error {
public:
    StreamTimeout() : std::runtime_error("stream: read timeout") {}
};
class StreamClosed : public std::runtime_error {
public:
    StreamClosed() : std::runtime_error("stream: closed by peer") {}
};

/// Reliable ordered byte stream. Implementations must deliver writes in
/// order and read_exact must block until the requested bytes arrive, the
/// timeout elapses, or the peer closes.
class Stream {
public:
    virtual ~Stream() = default;
    virtual void write(std::span<const std::uint8_t> bytes) = 0;
    virtual void read_exact(std::span<std::uint8_t> dst,
                            std::chrono::milliseconds timeout) = 0;
};

namespace detail {

struct LoopbackChannel {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::uint8_t> dir[2];  // 0: a->b, 1: b->a
    bool closed[2] = {false, false};
};

}  // namespace detail

/// In-memory duplex pipe; the test suite runs sessions with no network
/// stack. End A writes direction 0 and reads direction 1.
class LoopbackStream : public Stream {
public:
    LoopbackStream(std::shared_ptr<detail::LoopbackChannel> ch, int side)
        : ch_(std::move(ch)), side_(side) {}

    ~LoopbackStream() override {
        std::lock_guard lk(ch_->mu);
        ch_->closed[side_] = true;
        ch_->cv.notify_all();
    }

    void write(std::span<const std::uint8_t> bytes) override {
        std::lock_guard lk(ch_->mu);
        auto& q = ch_->dir[side_ == 0 ? 0 : 1];
        q.insert(q.end(), bytes.begin(), bytes.end());
        ch_->cv.notify_all();
    }

    void read_exact(std::span<std::uint8_t> dst,
                    std::chrono::milliseconds timeout) override {
        std::unique_lock lk(ch_->mu);
        auto& q = ch_->dir[side_ == 0 ? 1 : 0];
        int peer = side_ == 0 ? 1 : 0;
        bool ok = ch_->cv.wait_for(lk, timeout, [&] {
            return q.size() >= dst.size() || ch_->closed[peer];
        });
        if (q.size() < dst.size()) {
            if (ch_->closed[peer]) throw StreamClosed();
            if (!ok) throw StreamTimeout();
            throw StreamTimeout();
        }
        for (auto& b : dst) {
            b = q.front();
            q.pop_front();
        }
    }

private:
    std::shared_ptr<detail::LoopbackChannel> ch_;
    int side_;
};

inline std::pair<std::unique_ptr<Stream>, std::unique_ptr<Stream>> make_loopback() {
    auto ch = std::make_shared<detail::LoopbackChannel>();
    return {std::make_unique<LoopbackStream>(ch, 0),
            std::make_unique<LoopbackStream>(ch, 1)};
}

inline void write_frame(Stream& s, const Frame& f) {
    auto bytes = encode_frame(f);
    s.write(bytes);
}

inline Frame read_frame(Stream& s, std::chrono::milliseconds timeout) {
    std::uint8_t header[8];
    s.read_exact(header, timeout);
    if (header[0] != kMagic0 || header[1] != kMagic1) throw BadMagicError();
    if (header[2] != kVersion) throw BadVersionError();
    if (!known_type(header[3])) throw UnknownTypeError();
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(header[4 + i]) << (8 * i);
    Frame f;
    f.type = static_cast<MsgType>(header[3]);
    f.payload.resize(len);
    if (len) s.read_exact(f.payload, timeout);
    return f;
}

// ---- Session state machines ----------------------------------------------

enum class Role : std::uint8_t { Alice, Bob };
enum class SessionPhase : std::uint8_t {
    Idle,
    Synced,
    Sifted,
    Estimated,
    Reconciled,
    Amplified,
    Verified,
    Aborted,
};

inline const char* phase_name(SessionPhase p) {
    switch (p) {
        case SessionPhase::Idle: return "idle";
        case SessionPhase::Synced: return "synced";
        case SessionPhase::Sifted: return "sifted";
        case SessionPhase::Estimated: return "estimated";
        case SessionPhase::Reconciled: return "reconciled";
        case SessionPhase::Amplified: return "amplified";
        case SessionPhase::Verified: return "verified";
        default: return "aborted";
    }
}

struct TranscriptEntry {
    Role sender;
    std::vector<std::uint8_t> bytes;
};
using Transcript = std::vector<TranscriptEntry>;

struct SessionInputs {
    const std::vector<PulseRecord>* alice_log = nullptr;
    const std::vector<DetectionEvent>* bob_log = nullptr;
    const BitString* key = nullptr;  // pre-sifted key; skips temporal sifting
};

struct SessionResult {
    SessionPhase phase = SessionPhase::Idle;
    AbortReason abort_reason = AbortReason::InternalError;
    BitString final_key;
    Transcript transcript;
    std::uint64_t sifted_bits = 0;
    double qber_estimate = 0;
    std::uint64_t reconciled_bits = 0;
    std::uint64_t parity_bits = 0;
    std::uint64_t secret_bits = 0;
    std::uint32_t blocks_total = 0;
    std::uint32_t blocks_corrected = 0;

    bool aborted() const { return phase == SessionPhase::Aborted; }
    const char* abort_reason_str() const { return abort_reason_name(abort_reason); }
};

namespace detail {

struct SessionAbort {
    AbortReason reason;
    bool notify_peer;
};

inline BitString gather_bits(const BitString& key, const std::vector<std::uint64_t>& idx) {
    BitString out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(key.get(i));
    return out;
}

/// Removes ascending positions from the key.
inline BitString remove_bits(const BitString& key, const std::vector<std::uint64_t>& idx) {
    BitString out;
    out.reserve(key.size() - idx.size());
    std::size_t j = 0;
    for (std::size_t i = 0; i < key.size(); ++i) {
        if (j < idx.size() && idx[j] == i) {
            ++j;
            continue;
        }
        out.push_back(key.get(i));
    }
    return out;
}

inline std::uint32_t block_count(std::uint64_t bits) {
    return static_cast<std::uint32_t>((bits + LdpcCode::block_length - 1) /
                                      LdpcCode::block_length);
}

inline BitString block_of(const BitString& key, std::uint32_t index) {
    BitString b(LdpcCode::block_length, 0);
    std::uint64_t base = static_cast<std::uint64_t>(index) * LdpcCode::block_length;
    std::uint64_t stop = std::min<std::uint64_t>(base + LdpcCode::block_length, key.size());
    for (std::uint64_t i = base; i < stop; ++i) b.set(i - base, key.get(i));
    return b;  // final block zero-padded with publicly known bits
}

class Endpoint {
public:
    Endpoint(Role role, Stream& stream, const SessionConfig& cfg,
             std::chrono::milliseconds timeout)
        : role_(role), stream_(stream), cfg_(cfg), timeout_(timeout) {}

    void send(const Message& msg) {
        Frame f = encode_message(msg);
        auto bytes = encode_frame(f);
        result_.transcript.push_back({role_, bytes});
        stream_.write(bytes);
    }

    Message receive() {
        Frame f = [&] {
            try {
                return read_frame(stream_, timeout_);
            } catch (const StreamTimeout&) {
                throw SessionAbort{AbortReason::Timeout, true};
            } catch (const StreamClosed&) {
                throw SessionAbort{AbortReason::Timeout, false};
            } catch (const ProtocolError&) {
                throw SessionAbort{AbortReason::ProtocolOrder, true};
            }
        }();
        result_.transcript.push_back({peer(), encode_frame(f)});
        Message m = [&] {
            try {
                return decode_message(f);
            } catch (const ProtocolError&) {
                throw SessionAbort{AbortReason::ProtocolOrder, true};
            }
        }();
        if (auto* abort = std::get_if<AbortMsg>(&m))
            throw SessionAbort{abort->reason, false};
        return m;
    }

    template <typename T>
    T expect() {
        Message m = receive();
        if (auto* v = std::get_if<T>(&m)) return std::move(*v);
        throw SessionAbort{AbortReason::ProtocolOrder, true};
    }

    /// The peer is about to abort; anything else is a protocol violation.
    [[noreturn]] void expect_abort() {
        receive();  // throws SessionAbort when the Abort frame arrives
        throw SessionAbort{AbortReason::ProtocolOrder, true};
    }

    SessionResult finish_aborted(const SessionAbort& abort) {
        if (abort.notify_peer) {
            try {
                send(AbortMsg{abort.reason});
            } catch (...) {
            }
        }
        result_.phase = SessionPhase::Aborted;
        result_.abort_reason = abort.reason;
        return std::move(result_);
    }

protected:
    Role peer() const { return role_ == Role::Alice ? Role::Bob : Role::Alice; }

    /// Shared tail: reconciliation bookkeeping plus PA and verification
    /// state, filled by the role-specific drivers.
    Role role_;
    Stream& stream_;
    const SessionConfig& cfg_;
    std::chrono::milliseconds timeout_;
    SessionResult result_;
};

}  // namespace detail

/// Drives one endpoint of the post-processing session over the stream.
/// Both sides end verified with identical final keys, or both end aborted
/// with a reason code. The transcript records every frame in order.
inline SessionResult run_session(Role role, Stream& stream, const SessionInputs& inputs,
                                 const SessionConfig& cfg,
                                 std::chrono::milliseconds timeout =
                                     std::chrono::milliseconds(30'000));

namespace detail {

class AliceSession : public Endpoint {
public:
    using Endpoint::Endpoint;

    SessionResult run(const SessionInputs& inputs) {
        try {
            return run_impl(inputs);
        } catch (const SessionAbort& abort) {
            return finish_aborted(abort);
        }
    }

private:
    SessionResult run_impl(const SessionInputs& inputs) {
        const TimePs period = cfg_.source.pulse_period_ps();
        send(HelloMsg{});
        expect<HelloMsg>();
        SyncMsg sync;
        sync.t_a0 = 0;
        sync.t_d = calibrated_path_delay(cfg_.channel.path_delay_ps,
                                         cfg_.detector.clock_tick_ps);
        sync.period = period;
        sync.window = cfg_.protocol.window_ps;
        send(sync);
        result_.phase = SessionPhase::Synced;

        auto announce = expect<BasisAnnounceMsg>();
        KeepListMsg keep;
        BitString key;
        if (inputs.key != nullptr) {
            // Pre-sifted key mode: keep every announced position.
            for (std::uint64_t i = 0; i < announce.slots.size(); ++i)
                keep.positions.push_back(i);
            key = *inputs.key;
            if (key.size() != announce.slots.size())
                throw SessionAbort{AbortReason::ProtocolOrder, true};
        } else {
            const auto& log = *inputs.alice_log;
            for (std::uint64_t i = 0; i < announce.slots.size(); ++i) {
                std::uint64_t slot = announce.slots[i];
                if (slot >= log.size()) continue;
                const PulseRecord& rec = log[slot];
                if (rec.cls != PulseClass::Signal) continue;
                Basis b = announce.bases.get(i) ? Basis::Diag : Basis::Rect;
                if (b != rec.basis()) continue;
                keep.positions.push_back(i);
                key.push_back(rec.bit());
            }
        }
        send(keep);
        result_.sifted_bits = key.size();
        result_.phase = SessionPhase::Sifted;
        if (key.empty()) throw SessionAbort{AbortReason::NoDetections, true};

        auto sample_idx = expect<SampleIdxMsg>();
        if (sample_idx.positions.empty())
            throw SessionAbort{AbortReason::ProtocolOrder, true};
        for (std::size_t i = 0; i < sample_idx.positions.size(); ++i)
            if (sample_idx.positions[i] >= key.size() ||
                (i > 0 && sample_idx.positions[i] <= sample_idx.positions[i - 1]))
                throw SessionAbort{AbortReason::ProtocolOrder, true};
        auto bob_sample = expect<SampleBitsMsg>();
        if (bob_sample.bits.size() != sample_idx.positions.size())
            throw SessionAbort{AbortReason::ProtocolOrder, true};
        BitString mine = gather_bits(key, sample_idx.positions);
        send(SampleBitsMsg{mine});
        QberEstimate est = estimate_qber(mine, bob_sample.bits);
        send(QberReportMsg{est.e_hat});
        result_.qber_estimate = est.e_hat;
        if (est.e_hat > cfg_.protocol.abort_threshold)
            throw SessionAbort{AbortReason::QberExceedsThreshold, true};
        key = remove_bits(key, sample_idx.positions);
        result_.phase = SessionPhase::Estimated;

        // Reconciliation: send per-block syndromes, collect verdicts.
        LdpcCode code = build_code(cfg_.protocol.ldpc_seed);
        const std::uint32_t blocks = block_count(key.size());
        BitString reconciled;
        for (std::uint32_t b = 0; b < blocks; ++b) {
            BitString block = block_of(key, b);
            send(SyndromeMsg{b, syndrome(code, block)});
            auto verdict = expect<BlockVerdictMsg>();
            if (verdict.block_id != b)
                throw SessionAbort{AbortReason::ProtocolOrder, true};
            if (!verdict.corrected) continue;
            ++result_.blocks_corrected;
            std::uint64_t base = static_cast<std::uint64_t>(b) * LdpcCode::block_length;
            std::uint64_t stop =
                std::min<std::uint64_t>(base + LdpcCode::block_length, key.size());
            for (std::uint64_t i = base; i < stop; ++i)
                reconciled.push_back(key.get(i));
        }
        result_.blocks_total = blocks;
        result_.parity_bits = parity_leakage(blocks);
        result_.reconciled_bits = reconciled.size();
        result_.phase = SessionPhase::Reconciled;

        LeakageLedger ledger{reconciled.size(), est.e_hat, result_.parity_bits,
                             cfg_.protocol.security_parameter};
        std::uint64_t r = secret_length(ledger);
        if (r == 0) throw SessionAbort{AbortReason::NoSecretBits, true};
        SplitMix64 pa_rng(derive_seed(cfg_.run.seed, 0x9A5Eu));
        ToeplitzSpec spec = make_toeplitz_spec(reconciled.size(), r, pa_rng);
        send(PaParamsMsg{spec.n, spec.r, ledger.s, spec.seed_bits});
        result_.final_key = toeplitz_hash(spec, reconciled);
        result_.secret_bits = r;
        result_.phase = SessionPhase::Amplified;

        send(KeyHashMsg{key_checksum(result_.final_key)});
        expect<VerifyOkMsg>();
        result_.phase = SessionPhase::Verified;
        return std::move(result_);
    }
};

class BobSession : public Endpoint {
public:
    using Endpoint::Endpoint;

    SessionResult run(const SessionInputs& inputs) {
        try {
            return run_impl(inputs);
        } catch (const SessionAbort& abort) {
            return finish_aborted(abort);
        }
    }

private:
    SessionResult run_impl(const SessionInputs& inputs) {
        expect<HelloMsg>();
        send(HelloMsg{});
        auto sync = expect<SyncMsg>();
        if (sync.period <= 0 || sync.window <= 0 || sync.window > sync.period)
            throw SessionAbort{AbortReason::ProtocolOrder, true};
        result_.phase = SessionPhase::Synced;

        BasisAnnounceMsg announce;
        std::vector<int> outcome_bits;
        if (inputs.key != nullptr) {
            for (std::uint64_t i = 0; i < inputs.key->size(); ++i) {
                announce.slots.push_back(i);
                announce.bases.push_back(0);
                outcome_bits.push_back(inputs.key->get(i));
            }
        } else {
            const auto& log = *inputs.bob_log;
            std::uint64_t current_slot = ~std::uint64_t{0};
            State current_det = State::H;
            unsigned count = 0;
            auto flush = [&]() {
                if (count != 1) return;
                announce.slots.push_back(current_slot);
                announce.bases.push_back(basis_of(current_det) == Basis::Diag ? 1 : 0);
                outcome_bits.push_back(bit_of(current_det));
            };
            for (const auto& ev : log) {
                SlotAssignment a = assign_slot(ev.timestamp_ps, sync.t_a0, sync.t_d,
                                               sync.period, sync.window);
                if (!a.accepted) continue;
                if (a.slot != current_slot) {
                    flush();
                    current_slot = a.slot;
                    current_det = ev.detector;
                    count = 1;
                } else {
                    ++count;
                }
            }
            flush();
        }
        send(announce);

        auto keep = expect<KeepListMsg>();
        BitString key;
        for (std::size_t i = 0; i < keep.positions.size(); ++i) {
            std::uint64_t p = keep.positions[i];
            if (p >= announce.slots.size() ||
                (i > 0 && p <= keep.positions[i - 1]))
                throw SessionAbort{AbortReason::ProtocolOrder, true};
            key.push_back(outcome_bits[p]);
        }
        result_.sifted_bits = key.size();
        result_.phase = SessionPhase::Sifted;
        if (key.empty()) expect_abort();

        SamplePlan plan =
            select_sample(key.size(), cfg_.protocol.sample_fraction,
                          cfg_.protocol.sample_mode, derive_seed(cfg_.run.seed, 0x5A11u));
        send(SampleIdxMsg{plan.indices});
        BitString mine = gather_bits(key, plan.indices);
        send(SampleBitsMsg{mine});
        auto alice_sample = expect<SampleBitsMsg>();
        if (alice_sample.bits.size() != mine.size())
            throw SessionAbort{AbortReason::ProtocolOrder, true};
        QberEstimate own = estimate_qber(alice_sample.bits, mine);
        auto report = expect<QberReportMsg>();
        if (report.e_hat != own.e_hat)
            throw SessionAbort{AbortReason::ProtocolOrder, true};
        result_.qber_estimate = report.e_hat;
        if (report.e_hat > cfg_.protocol.abort_threshold) expect_abort();
        key = remove_bits(key, plan.indices);
        result_.phase = SessionPhase::Estimated;

        LdpcCode code = build_code(cfg_.protocol.ldpc_seed);
        const std::uint32_t blocks = block_count(key.size());
        const double prior = std::clamp(report.e_hat, 1e-4, 0.4999);
        BitString reconciled;
        for (std::uint32_t b = 0; b < blocks; ++b) {
            auto msg = expect<SyndromeMsg>();
            if (msg.block_id != b || msg.syndrome.size() != LdpcCode::syndrome_length)
                throw SessionAbort{AbortReason::ProtocolOrder, true};
            BitString block = block_of(key, b);
            auto [fixed, verdict] = decode_block(code, block, msg.syndrome, prior);
            BlockVerdictMsg out;
            out.block_id = b;
            out.corrected = verdict.status == BlockVerdict::Status::Corrected;
            out.iterations = static_cast<std::uint8_t>(verdict.iterations);
            out.corrected_bits = static_cast<std::uint16_t>(verdict.corrected_bits);
            send(out);
            if (!out.corrected) continue;
            ++result_.blocks_corrected;
            std::uint64_t base = static_cast<std::uint64_t>(b) * LdpcCode::block_length;
            std::uint64_t stop =
                std::min<std::uint64_t>(base + LdpcCode::block_length, key.size());
            for (std::uint64_t i = base; i < stop; ++i)
                reconciled.push_back(fixed.get(i - base));
        }
        result_.blocks_total = blocks;
        result_.parity_bits = parity_leakage(blocks);
        result_.reconciled_bits = reconciled.size();
        result_.phase = SessionPhase::Reconciled;

        auto pa = expect<PaParamsMsg>();
        if (pa.n != reconciled.size() || pa.r == 0 ||
            pa.seed.size() != pa.n + pa.r - 1)
            throw SessionAbort{AbortReason::ProtocolOrder, true};
        ToeplitzSpec spec = make_toeplitz_spec(pa.n, pa.r, pa.seed);
        result_.final_key = toeplitz_hash(spec, reconciled);
        result_.secret_bits = pa.r;
        result_.phase = SessionPhase::Amplified;

        auto kh = expect<KeyHashMsg>();
        if (kh.hash != key_checksum(result_.final_key))
            throw SessionAbort{AbortReason::HashMismatch, true};
        send(VerifyOkMsg{});
        result_.phase = SessionPhase::Verified;
        return std::move(result_);
    }
};

}  // namespace detail

inline SessionResult run_session(Role role, Stream& stream, const SessionInputs& inputs,
                                 const SessionConfig& cfg,
                                 std::chrono::milliseconds timeout) {
    if (role == Role::Alice) {
        if (inputs.alice_log == nullptr && inputs.key == nullptr)
            throw std::invalid_argument("run_session: alice needs a log or a key");
        detail::AliceSession session(role, stream, cfg, timeout);
        return session.run(inputs);
    }
    if (inputs.bob_log == nullptr && inputs.key == nullptr)
        throw std::invalid_argument("run_session: bob needs a log or a key");
    detail::BobSession session(role, stream, cfg, timeout);
    return session.run(inputs);
}

}  // namespace qkd::net
