#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qkd::link {

constexpr std::uint8_t kProtocolVersion = 1;

enum class MsgType : std::uint8_t {
    Hello = 1,
    Basis = 2,
    SiftAck = 3,
    Sample = 4,
    Hash = 5,
    Result = 6,
};

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Reliable ordered byte transport.
class ByteStream {
public:
    virtual ~ByteStream() = default;
    virtual void send(const std::uint8_t* data, std::size_t n) = 0;
    virtual void recv(std::uint8_t* data, std::size_t n) = 0;
};

/// In-process duplex pipe; both ends are full ByteStreams.
std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> make_pipe();

/// Loopback/remote TCP transport.
class TcpListener {
public:
    explicit TcpListener(std::uint16_t port);  // port 0 picks a free port
    ~TcpListener();
    std::uint16_t port() const { return port_; }
    std::unique_ptr<ByteStream> accept();

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

std::unique_ptr<ByteStream> tcp_connect(const std::string& host, std::uint16_t port);

/// Wrapper that records every byte sent for transcript audits.
class RecordingStream : public ByteStream {
public:
    explicit RecordingStream(ByteStream& inner) : inner_(inner) {}
    void send(const std::uint8_t* data, std::size_t n) override;
    void recv(std::uint8_t* data, std::size_t n) override;
    const std::vector<std::uint8_t>& sent() const { return sent_; }
    const std::vector<std::uint8_t>& received() const { return received_; }

private:
    ByteStream& inner_;
    std::vector<std::uint8_t> sent_;
    std::vector<std::uint8_t> received_;
};

/// Wire frame: version u8, type u8, payload length u32 little-endian,
/// payload bytes. Unknown types and version mismatches are rejected.
struct FrameMessage {
    std::uint8_t version = kProtocolVersion;
    MsgType type = MsgType::Hello;
    std::vector<std::uint8_t> payload;
};

void write_frame(ByteStream& s, MsgType type, const std::vector<std::uint8_t>& payload);
FrameMessage read_frame(ByteStream& s);

void dump_transcript_hex(const std::vector<std::uint8_t>& bytes, std::ostream& os);

/// epsilon-almost-universal polynomial hash over GF(2^61 - 1). The seed
/// selects the evaluation point and an affine output layer.
std::uint64_t polynomial_hash(const std::vector<std::uint8_t>& symbols,
                              std::uint64_t seed);
std::uint64_t truncate_tag(std::uint64_t h, int tag_bits);
int tag_bits_for(double epsilon_cor);  // ceil(log2(1/epsilon_cor))

/// Error-verification tag: t = ceil(log2(1/epsilon_cor)) bits from a
/// randomly seeded hash-family member; the seed is disclosed.
struct VerificationTag {
    int tag_bits = 50;
    std::uint64_t seed = 0;
    std::uint64_t value = 0;
};

VerificationTag make_verification_tag(const std::vector<std::uint8_t>& key,
                                      std::uint64_t seed, int tag_bits);

/// Uniform sample without replacement of round(fraction * n) positions,
/// derived deterministically from the seed; sampled symbols are removed
/// from the key and returned.
struct SampleResult {
    std::vector<std::uint32_t> indices;  // ascending
    std::vector<std::uint8_t> symbols;   // symbols at those positions
};
SampleResult draw_sample(std::vector<std::uint8_t>& key, double fraction,
                         std::uint64_t seed);

/// Error fraction between two aligned symbol samples.
double estimate_qber(const std::vector<std::uint8_t>& a,
                     const std::vector<std::uint8_t>& b);

/// Two-party convenience form: draws the same sample from both keys and
/// returns the disclosed indices plus the error estimate.
struct SampleEstimate {
    std::vector<std::uint32_t> indices;
    double qber = 0.0;
};
SampleEstimate sample_and_estimate(std::vector<std::uint8_t>& alice_key,
                                   std::vector<std::uint8_t>& bob_key,
                                   double fraction, std::uint64_t seed);

enum class Role { Alice, Bob };

/// One party's view of a frame. Alice supplies every sent frame; Bob
/// supplies his detections (phase-basis entries only when conclusive).
struct FrameRecord {
    std::uint64_t index = 0;
    std::uint8_t basis = 0;   // 0 = time, 1 = phase
    std::uint8_t symbol = 0;  // 0..3
};

struct SessionConfig {
    double sample_fraction = 0.10;
    int tag_bits = 50;
    std::uint64_t sampler_seed = 1;  // chosen by Alice, sent in HELLO
    std::uint64_t hash_seed = 1;     // chosen by Alice, sent in HASH
};

/// Count of every payload bit that reveals raw-key information: sampled
/// and disclosed symbols from both parties plus the verification tag.
struct SessionLedger {
    std::uint64_t disclosed_bits = 0;
};

struct SessionResult {
    bool verified = false;
    std::string abort_reason;
    std::vector<std::uint8_t> key;  // verified symbols, 0..3
    double qber_estimate = 0.0;
    double qber_phase = 0.0;
    SessionLedger ledger;
};

/// Sift, sample, and verify over the transport. Both parties end with
/// identical keys (up to the hash collision probability) or an explicit
/// abort. Protocol violations raise ProtocolError.
SessionResult run_session(Role role, ByteStream& stream,
                          const std::vector<FrameRecord>& records,
                          const SessionConfig& cfg);

/// Disclosed-bit count recomputed from raw transcript bytes (one party's
/// sent stream); used to audit the ledger.
std::uint64_t audit_disclosed_bits(const std::vector<std::uint8_t>& transcript);

}  // namespace qkd::link
