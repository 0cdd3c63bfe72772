#include "qkd/link.hpp"

#include "qkd/rng.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <numeric>
#include <ostream>
#include <unordered_map>

namespace qkd::link {

// ---------------------------------------------------------------------------
// transports

namespace {

struct ByteQueue {
    std::mutex m;
    std::condition_variable cv;
    std::deque<std::uint8_t> data;

    void push(const std::uint8_t* p, std::size_t n) {
        {
            std::lock_guard lock(m);
            data.insert(data.end(), p, p + n);
        }
        cv.notify_all();
    }
    void pop(std::uint8_t* p, std::size_t n) {
        std::unique_lock lock(m);
        cv.wait(lock, [&] { return data.size() >= n; });
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = data.front();
            data.pop_front();
        }
    }
};

class PipeEnd : public ByteStream {
public:
    PipeEnd(std::shared_ptr<ByteQueue> out, std::shared_ptr<ByteQueue> in)
        : out_(std::move(out)), in_(std::move(in)) {}
    void send(const std::uint8_t* data, std::size_t n) override { out_->push(data, n); }
    void recv(std::uint8_t* data, std::size_t n) override { in_->pop(data, n); }

private:
    std::shared_ptr<ByteQueue> out_, in_;
};

class FdStream : public ByteStream {
public:
    explicit FdStream(int fd) : fd_(fd) {}
    ~FdStream() override {
        if (fd_ >= 0) ::close(fd_);
    }
    void send(const std::uint8_t* data, std::size_t n) override {
        while (n > 0) {
            const ssize_t w = ::send(fd_, data, n, MSG_NOSIGNAL);
            if (w <= 0) throw ProtocolError("socket send failed");
            data += w;
            n -= static_cast<std::size_t>(w);
        }
    }
    void recv(std::uint8_t* data, std::size_t n) override {
        while (n > 0) {
            const ssize_t r = ::recv(fd_, data, n, 0);
            if (r <= 0) throw ProtocolError("socket closed mid-frame");
            data += r;
            n -= static_cast<std::size_t>(r);
        }
    }

private:
    int fd_;
};

}  // namespace

std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> make_pipe() {
    auto ab = std::make_shared<ByteQueue>();
    auto ba = std::make_shared<ByteQueue>();
    return {std::make_unique<PipeEnd>(ab, ba), std::make_unique<PipeEnd>(ba, ab)};
}

TcpListener::TcpListener(std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw ProtocolError("listener socket failed");
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
        ::listen(fd_, 1) != 0)
        throw ProtocolError("listener bind/listen failed");
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<ByteStream> TcpListener::accept() {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) throw ProtocolError("accept failed");
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return std::make_unique<FdStream>(fd);
}

std::unique_ptr<ByteStream> tcp_connect(const std::string& host, std::uint16_t port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ProtocolError("socket failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw ProtocolError("bad address: " + host);
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(fd);
        throw ProtocolError("connect failed");
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return std::make_unique<FdStream>(fd);
}

void RecordingStream::send(const std::uint8_t* data, std::size_t n) {
    sent_.insert(sent_.end(), data, data + n);
    inner_.send(data, n);
}

void RecordingStream::recv(std::uint8_t* data, std::size_t n) {
    inner_.recv(data, n);
    received_.insert(received_.end(), data, data + n);
}

// ---------------------------------------------------------------------------
// framing

namespace {

void put_u16(std::vector<std::uint8_t>& v, std::uint16_t x) {
    v.push_back(x & 0xff);
    v.push_back((x >> 8) & 0xff);
}
void put_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    for (int i = 0; i < 4; ++i) v.push_back((x >> (8 * i)) & 0xff);
}
void put_u64(std::vector<std::uint8_t>& v, std::uint64_t x) {
    for (int i = 0; i < 8; ++i) v.push_back((x >> (8 * i)) & 0xff);
}

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw ProtocolError("truncated payload");
    }
    std::uint8_t u8() {
        need(1);
        return buf[pos++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t x = buf[pos] | (std::uint16_t(buf[pos + 1]) << 8);
        pos += 2;
        return x;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= std::uint32_t(buf[pos + i]) << (8 * i);
        pos += 4;
        return x;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x |= std::uint64_t(buf[pos + i]) << (8 * i);
        pos += 8;
        return x;
    }
};

constexpr std::size_t kMaxPayload = 1u << 26;

}  // namespace

void write_frame(ByteStream& s, MsgType type, const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> header;
    header.push_back(kProtocolVersion);
    header.push_back(static_cast<std::uint8_t>(type));
    put_u32(header, static_cast<std::uint32_t>(payload.size()));
    s.send(header.data(), header.size());
    if (!payload.empty()) s.send(payload.data(), payload.size());
}

FrameMessage read_frame(ByteStream& s) {
    std::uint8_t header[6];
    s.recv(header, sizeof header);
    FrameMessage msg;
    msg.version = header[0];
    if (msg.version != kProtocolVersion)
        throw ProtocolError("version mismatch: got " + std::to_string(msg.version));
    const std::uint8_t raw_type = header[1];
    if (raw_type < 1 || raw_type > 6)
        throw ProtocolError("unknown message type " + std::to_string(raw_type));
    msg.type = static_cast<MsgType>(raw_type);
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= std::uint32_t(header[2 + i]) << (8 * i);
    if (len > kMaxPayload) throw ProtocolError("oversized frame");
    msg.payload.resize(len);
    if (len > 0) s.recv(msg.payload.data(), len);
    return msg;
}

void dump_transcript_hex(const std::vector<std::uint8_t>& bytes, std::ostream& os) {
    static const char* digits = "0123456789abcdef";
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        if (i % 32 != 0) os << ' ';
        os << digits[bytes[i] >> 4] << digits[bytes[i] & 0xf];
        if (i % 32 == 31) os << '\n';
    }
    if (bytes.size() % 32 != 0) os << '\n';
}

// ---------------------------------------------------------------------------
// hashing

namespace {

constexpr std::uint64_t kPrime = (1ull << 61) - 1;

std::uint64_t mod_p(unsigned __int128 x) {
    std::uint64_t out = static_cast<std::uint64_t>(x & kPrime) +
                        static_cast<std::uint64_t>(x >> 61);
    if (out >= kPrime) out -= kPrime;
    return out;
}

std::uint64_t mulmod(std::uint64_t a, std::uint64_t b) {
    return mod_p(static_cast<unsigned __int128>(a) * b);
}

}  // namespace

std::uint64_t polynomial_hash(const std::vector<std::uint8_t>& symbols,
                              std::uint64_t seed) {
    if (symbols.empty()) throw std::invalid_argument("polynomial_hash: empty key");
    const std::uint64_t x = 1 + split_seed(seed, 0) % (kPrime - 1);
    const std::uint64_t a = 1 + split_seed(seed, 1) % (kPrime - 1);
    const std::uint64_t b = split_seed(seed, 2) % kPrime;
    std::uint64_t h = 0;
    for (const std::uint8_t s : symbols) {
        h = mulmod(h, x);
        h += s + 1u;
        if (h >= kPrime) h -= kPrime;
    }
    h = mulmod(h, a);
    h += b;
    if (h >= kPrime) h -= kPrime;
    return h;
}

std::uint64_t truncate_tag(std::uint64_t h, int tag_bits) {
    if (tag_bits < 1 || tag_bits > 61)
        throw std::invalid_argument("truncate_tag: tag bits outside [1, 61]");
    return tag_bits == 61 ? h : (h & ((1ull << tag_bits) - 1));
}

int tag_bits_for(double epsilon_cor) {
    if (epsilon_cor <= 0.0 || epsilon_cor >= 1.0)
        throw std::invalid_argument("tag_bits_for: epsilon_cor outside (0, 1)");
    return static_cast<int>(std::ceil(std::log2(1.0 / epsilon_cor)));
}

VerificationTag make_verification_tag(const std::vector<std::uint8_t>& key,
                                      std::uint64_t seed, int tag_bits) {
    VerificationTag tag;
    tag.tag_bits = tag_bits;
    tag.seed = seed;
    tag.value = truncate_tag(polynomial_hash(key, seed), tag_bits);
    return tag;
}

// ---------------------------------------------------------------------------
// sampling

SampleResult draw_sample(std::vector<std::uint8_t>& key, double fraction,
                         std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("draw_sample: fraction outside (0, 1]");
    const std::size_t n = key.size();
    if (n == 0) throw std::invalid_argument("draw_sample: empty key");
    const std::size_t k = static_cast<std::size_t>(std::llround(fraction * n));
    if (k > n) throw std::invalid_argument("draw_sample: sample larger than key");

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.uniform_int(static_cast<std::uint32_t>(n - i));
        std::swap(order[i], order[j]);
    }
    SampleResult out;
    out.indices.assign(order.begin(), order.begin() + k);
    std::sort(out.indices.begin(), out.indices.end());
    out.symbols.reserve(k);
    for (const auto idx : out.indices) out.symbols.push_back(key[idx]);

    std::vector<std::uint8_t> rest;
    rest.reserve(n - k);
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (next < out.indices.size() && out.indices[next] == i) {
            ++next;
            continue;
        }
        rest.push_back(key[i]);
    }
    key = std::move(rest);
    return out;
}

double estimate_qber(const std::vector<std::uint8_t>& a,
                     const std::vector<std::uint8_t>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("estimate_qber: size mismatch");
    if (a.empty()) return 0.0;
    std::size_t bad = 0;
    for (std::size_t i = 0; i < a.size(); ++i) bad += a[i] != b[i];
    return static_cast<double>(bad) / static_cast<double>(a.size());
}

SampleEstimate sample_and_estimate(std::vector<std::uint8_t>& alice_key,
                                   std::vector<std::uint8_t>& bob_key,
                                   double fraction, std::uint64_t seed) {
    if (alice_key.size() != bob_key.size())
        throw std::invalid_argument("sample_and_estimate: misaligned keys");
    SampleResult a = draw_sample(alice_key, fraction, seed);
    SampleResult b = draw_sample(bob_key, fraction, seed);
    SampleEstimate out;
    out.indices = std::move(a.indices);
    out.qber = estimate_qber(a.symbols, b.symbols);
    return out;
}

// ---------------------------------------------------------------------------
// session

namespace {

std::vector<std::uint8_t> pack_symbols(const std::vector<std::uint8_t>& symbols) {
    std::vector<std::uint8_t> out;
    put_u32(out, static_cast<std::uint32_t>(symbols.size()));
    out.resize(4 + (symbols.size() + 3) / 4, 0);
    for (std::size_t i = 0; i < symbols.size(); ++i)
        out[4 + i / 4] |= (symbols[i] & 0x3) << (2 * (i % 4));
    return out;
}

std::vector<std::uint8_t> unpack_symbols(const std::vector<std::uint8_t>& payload) {
    Reader r{payload};
    const std::uint32_t count = r.u32();
    if (payload.size() != 4 + (count + 3) / 4)
        throw ProtocolError("sample payload length mismatch");
    std::vector<std::uint8_t> out(count);
    for (std::uint32_t i = 0; i < count; ++i)
        out[i] = (payload[4 + i / 4] >> (2 * (i % 4))) & 0x3;
    return out;
}

FrameMessage expect(ByteStream& s, MsgType type) {
    FrameMessage msg = read_frame(s);
    if (msg.type != type)
        throw ProtocolError("unexpected message type " +
                            std::to_string(static_cast<int>(msg.type)));
    return msg;
}

}  // namespace

SessionResult run_session(Role role, ByteStream& stream,
                          const std::vector<FrameRecord>& records,
                          const SessionConfig& cfg) {
    if (cfg.tag_bits < 1 || cfg.tag_bits > 61)
        throw std::invalid_argument("run_session: tag bits outside [1, 61]");
    SessionResult result;

    // HELLO exchange: Alice fixes the sampler seed and tag width.
    std::uint64_t sampler_seed = cfg.sampler_seed;
    if (role == Role::Alice) {
        std::vector<std::uint8_t> hello;
        hello.push_back(0);
        put_u16(hello, static_cast<std::uint16_t>(cfg.tag_bits));
        put_u64(hello, cfg.sampler_seed);
        write_frame(stream, MsgType::Hello, hello);
        FrameMessage peer = expect(stream, MsgType::Hello);
        Reader r{peer.payload};
        if (r.u8() != 1) throw ProtocolError("peer role mismatch");
        if (r.u16() != cfg.tag_bits) throw ProtocolError("tag width mismatch");
    } else {
        FrameMessage peer = expect(stream, MsgType::Hello);
        Reader r{peer.payload};
        if (r.u8() != 0) throw ProtocolError("peer role mismatch");
        const std::uint16_t peer_tag = r.u16();
        if (peer_tag != cfg.tag_bits) throw ProtocolError("tag width mismatch");
        sampler_seed = r.u64();
        std::vector<std::uint8_t> hello;
        hello.push_back(1);
        put_u16(hello, static_cast<std::uint16_t>(cfg.tag_bits));
        put_u64(hello, 0);
        write_frame(stream, MsgType::Hello, hello);
    }

    // Basis announcement (Bob) and sifting verdicts (Alice). Verdict codes:
    // 0 discard, 1 time-basis key, 2 phase-basis estimate.
    std::vector<std::uint8_t> key;
    std::vector<std::uint8_t> phase_syms;
    if (role == Role::Bob) {
        std::vector<std::uint8_t> basis;
        put_u32(basis, static_cast<std::uint32_t>(records.size()));
        for (const auto& rec : records) {
            put_u64(basis, rec.index);
            basis.push_back(rec.basis);
        }
        write_frame(stream, MsgType::Basis, basis);
        FrameMessage ack = expect(stream, MsgType::SiftAck);
        Reader r{ack.payload};
        const std::uint32_t count = r.u32();
        if (count != records.size()) throw ProtocolError("sift ack count mismatch");
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::uint8_t verdict = r.u8();
            if (verdict == 1) key.push_back(records[i].symbol);
            else if (verdict == 2) phase_syms.push_back(records[i].symbol);
            else if (verdict != 0) throw ProtocolError("unknown sift verdict");
        }
    } else {
        std::unordered_map<std::uint64_t, const FrameRecord*> by_index;
        by_index.reserve(records.size());
        for (const auto& rec : records) by_index[rec.index] = &rec;
        FrameMessage basis = expect(stream, MsgType::Basis);
        Reader r{basis.payload};
        const std::uint32_t count = r.u32();
        std::vector<std::uint8_t> ack;
        put_u32(ack, count);
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::uint64_t index = r.u64();
            const std::uint8_t bob_basis = r.u8();
            const auto it = by_index.find(index);
            if (it == by_index.end()) throw ProtocolError("unknown frame index announced");
            std::uint8_t verdict = 0;
            if (it->second->basis == bob_basis) {
                verdict = bob_basis == 0 ? 1 : 2;
                if (verdict == 1) key.push_back(it->second->symbol);
                else phase_syms.push_back(it->second->symbol);
            }
            ack.push_back(verdict);
        }
        write_frame(stream, MsgType::SiftAck, ack);
    }

    // Phase-basis disclosure: both sides reveal their conclusive phase
    // symbols; they are estimate-only and never enter the key.
    {
        std::vector<std::uint8_t> mine = pack_symbols(phase_syms);
        std::vector<std::uint8_t> theirs_raw;
        if (role == Role::Alice) {
            write_frame(stream, MsgType::Sample, mine);
            theirs_raw = expect(stream, MsgType::Sample).payload;
        } else {
            theirs_raw = expect(stream, MsgType::Sample).payload;
            write_frame(stream, MsgType::Sample, mine);
        }
        const std::vector<std::uint8_t> theirs = unpack_symbols(theirs_raw);
        result.qber_phase = estimate_qber(phase_syms, theirs);
        result.ledger.disclosed_bits += 2ull * phase_syms.size() + 2ull * theirs.size();
    }

    // Time-basis sampling from the shared seed.
    {
        SampleResult sample = draw_sample(key, cfg.sample_fraction, sampler_seed);
        std::vector<std::uint8_t> mine = pack_symbols(sample.symbols);
        std::vector<std::uint8_t> theirs_raw;
        if (role == Role::Alice) {
            write_frame(stream, MsgType::Sample, mine);
            theirs_raw = expect(stream, MsgType::Sample).payload;
        } else {
            theirs_raw = expect(stream, MsgType::Sample).payload;
            write_frame(stream, MsgType::Sample, mine);
        }
        const std::vector<std::uint8_t> theirs = unpack_symbols(theirs_raw);
        result.qber_estimate = estimate_qber(sample.symbols, theirs);
        result.ledger.disclosed_bits += 2ull * sample.symbols.size() + 2ull * theirs.size();
    }

    if (key.empty()) {
        result.verified = false;
        result.abort_reason = "key empty after sampling";
        return result;
    }

    // Error verification tag.
    bool tags_match = false;
    if (role == Role::Alice) {
        const VerificationTag tag = make_verification_tag(key, cfg.hash_seed, cfg.tag_bits);
        std::vector<std::uint8_t> msg;
        put_u64(msg, tag.seed);
        put_u16(msg, static_cast<std::uint16_t>(tag.tag_bits));
        for (int i = 0; i < (cfg.tag_bits + 7) / 8; ++i)
            msg.push_back((tag.value >> (8 * i)) & 0xff);
        write_frame(stream, MsgType::Hash, msg);
        result.ledger.disclosed_bits += static_cast<std::uint64_t>(cfg.tag_bits);
        FrameMessage verdict = expect(stream, MsgType::Result);
        Reader r{verdict.payload};
        tags_match = r.u8() == 0;
    } else {
        FrameMessage msg = expect(stream, MsgType::Hash);
        Reader r{msg.payload};
        const std::uint64_t hash_seed = r.u64();
        const int tag_bits = r.u16();
        if (tag_bits != cfg.tag_bits) throw ProtocolError("tag width changed mid-session");
        std::uint64_t peer_tag = 0;
        for (int i = 0; i < (tag_bits + 7) / 8; ++i)
            peer_tag |= std::uint64_t(r.u8()) << (8 * i);
        const VerificationTag own = make_verification_tag(key, hash_seed, tag_bits);
        tags_match = own.value == peer_tag;
        result.ledger.disclosed_bits += static_cast<std::uint64_t>(tag_bits);
        std::vector<std::uint8_t> verdict;
        verdict.push_back(tags_match ? 0 : 1);
        write_frame(stream, MsgType::Result, verdict);
    }

    result.verified = tags_match;
    if (!tags_match) {
        result.abort_reason = "error verification hash mismatch";
        return result;
    }
    result.key = std::move(key);
    return result;
}

std::uint64_t audit_disclosed_bits(const std::vector<std::uint8_t>& transcript) {
    std::uint64_t bits = 0;
    std::size_t pos = 0;
    while (pos + 6 <= transcript.size()) {
        const std::uint8_t type = transcript[pos + 1];
        std::uint32_t len = 0;
        for (int i = 0; i < 4; ++i) len |= std::uint32_t(transcript[pos + 2 + i]) << (8 * i);
        const std::size_t payload_at = pos + 6;
        if (payload_at + len > transcript.size())
            throw ProtocolError("audit: truncated transcript");
        if (type == static_cast<std::uint8_t>(MsgType::Sample)) {
            std::uint32_t count = 0;
            for (int i = 0; i < 4; ++i)
                count |= std::uint32_t(transcript[payload_at + i]) << (8 * i);
            bits += 2ull * count;
        } else if (type == static_cast<std::uint8_t>(MsgType::Hash)) {
            const std::uint16_t tag_bits =
                transcript[payload_at + 8] | (std::uint16_t(transcript[payload_at + 9]) << 8);
            bits += tag_bits;
        }
        pos = payload_at + len;
    }
    if (pos != transcript.size()) throw ProtocolError("audit: trailing bytes");
    return bits;
}

}  // namespace qkd::link
