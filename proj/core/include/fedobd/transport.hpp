#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedobd/model.hpp"
#include "fedobd/quant.hpp"

namespace fedobd {

inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr char kMagic[4] = {'F', 'O', 'B', 'D'};

enum class PayloadKind : std::uint8_t {
  /// Every block with raw values; only the first distribution of a FedOBD run
  /// and every FedAvg exchange.
  kFullModel = 0,
  /// Retained blocks as quantized differences.
  kBlockDeltas = 1,
  /// Retained blocks with raw values (FedOBD with quantization disabled).
  kBlockValues = 2,
};

const char* to_string(PayloadKind kind) noexcept;

/// Wire envelope. `blocks` is used by kFullModel and kBlockValues, `deltas` by
/// kBlockDeltas; the unused member stays empty.
struct RoundMessage {
  std::uint16_t protocol_version = kProtocolVersion;
  std::uint32_t round = 0;
  std::string sender;
  PayloadKind kind = PayloadKind::kFullModel;
  std::uint32_t sample_count = 0;  // uploads only; 0 on distributions
  std::vector<Block> blocks;
  std::vector<QuantizedBlockDelta> deltas;

  bool operator==(const RoundMessage&) const = default;
};

/// Bytes before the payload for a given sender:
/// magic(4) version(2) round(4) sender(2 + n) kind(1) sample_count(4) block_count(4).
std::size_t header_size(std::string_view sender) noexcept;

/// Little-endian, fixed field order:
///
///   raw block    : id, u8 kind count, kinds, u32 tensor count, then per tensor
///                  name, u8 rank, u32 dims, f32 values
///   delta block  : id, u32 tensor count, then per tensor
///                  f32 lo, f32 step, u8 code_bits, u32 count, packed codes
///
/// Strings are u16 length + UTF-8 bytes.
std::vector<std::uint8_t> serialize(const RoundMessage& msg);

/// Throws MalformedMessage (with the failing offset) or UnsupportedVersion.
RoundMessage deserialize(std::span<const std::uint8_t> bytes);

struct DeliveryRecord {
  std::uint64_t bytes = 0;
  double seconds = 0.0;  // 0 on an uncapped channel
  std::uint64_t sequence = 0;
};

struct Envelope {
  std::string sender;
  std::string receiver;
  std::vector<std::uint8_t> bytes;
  std::uint64_t sequence = 0;
};

/// In-process channel with byte accounting and an optional bandwidth cap.
/// Safe for concurrent senders; delivery per (sender, receiver) is FIFO.
class Channel {
 public:
  explicit Channel(std::optional<std::uint64_t> bytes_per_sec = std::nullopt);

  DeliveryRecord send(const std::string& sender, const std::string& receiver,
                      std::vector<std::uint8_t> bytes);

  /// Oldest pending message for `receiver`, from any sender.
  std::optional<Envelope> receive(const std::string& receiver);
  /// Oldest pending message for `receiver` from `sender`.
  std::optional<Envelope> receive_from(const std::string& receiver, const std::string& sender);

  std::uint64_t bytes_sent(const std::string& sender) const;
  std::uint64_t bytes_received(const std::string& receiver) const;
  std::uint64_t total_bytes() const;
  double simulated_seconds() const;
  std::size_t pending() const;

 private:
  mutable std::mutex mu_;
  std::optional<std::uint64_t> bytes_per_sec_;
  std::map<std::string, std::deque<Envelope>> inbox_;
  std::map<std::string, std::uint64_t> sent_;
  std::map<std::string, std::uint64_t> received_;
  std::uint64_t total_ = 0;
  double seconds_ = 0.0;
  std::uint64_t next_sequence_ = 0;
};

}  // namespace fedobd
