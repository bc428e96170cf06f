#include "fedobd/transport.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "fedobd/errors.hpp"

namespace fedobd {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v), 4); }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

  void str(const std::string& s) {
    if (s.size() > std::numeric_limits<std::uint16_t>::max())
      throw InvalidInput("string too long for the wire format: " + s.substr(0, 32) + "...");
    u16(static_cast<std::uint16_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }

  void count(std::size_t n, const char* what) {
    if (n > std::numeric_limits<std::uint32_t>::max())
      throw InvalidInput(std::string("too many ") + what + " for the wire format");
    u32(static_cast<std::uint32_t>(n));
  }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw MalformedMessage(std::string("truncated ") + what, pos_);
  }

  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(le(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }

  float f32(const char* what) {
    const std::size_t at = pos_;
    const float v = std::bit_cast<float>(u32(what));
    if (!std::isfinite(v)) throw MalformedMessage(std::string("non-finite ") + what, at);
    return v;
  }

  std::string str(const char* what) {
    const std::size_t n = u16(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::uint64_t le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_raw_block(Writer& w, const Block& b) {
  w.str(b.block_id);
  if (b.layer_kinds.size() > 255) throw InvalidInput("block '" + b.block_id + "' has too many layers");
  w.u8(static_cast<std::uint8_t>(b.layer_kinds.size()));
  for (const auto& k : b.layer_kinds) w.str(k);
  w.count(b.tensors.size(), "tensors");
  for (const auto& t : b.tensors) {
    w.str(t.name);
    if (t.shape.size() > 255) throw InvalidInput("tensor '" + t.name + "' has too many dimensions");
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (const auto d : t.shape) w.count(d, "elements in one dimension");
    for (const float v : t.values) w.f32(v);
  }
}

Block read_raw_block(Reader& r) {
  Block b;
  b.block_id = r.str("block id");
  const std::size_t kinds = r.u8("layer kind count");
  for (std::size_t i = 0; i < kinds; ++i) b.layer_kinds.push_back(r.str("layer kind"));
  const std::size_t tensors = r.u32("tensor count");
  // Every tensor needs at least name length + rank.
  r.need(tensors * 3, "tensor table");
  for (std::size_t i = 0; i < tensors; ++i) {
    ParameterTensor t;
    t.name = r.str("tensor name");
    const std::size_t at = r.offset();
    const std::size_t rank = r.u8("tensor rank");
    if (rank == 0) throw MalformedMessage("tensor '" + t.name + "' has rank 0", at);
    std::size_t volume = 1;
    for (std::size_t d = 0; d < rank; ++d) {
      const std::size_t dim_at = r.offset();
      const std::size_t dim = r.u32("tensor dimension");
      if (dim == 0) throw MalformedMessage("zero tensor dimension", dim_at);
      if (volume > r.remaining() / dim) throw MalformedMessage("tensor larger than the message", dim_at);
      volume *= dim;
      t.shape.push_back(dim);
    }
    r.need(volume * 4, "tensor values");
    t.values.resize(volume);
    for (auto& v : t.values) v = r.f32("tensor value");
    b.tensors.push_back(std::move(t));
  }
  return b;
}

void write_delta_block(Writer& w, const QuantizedBlockDelta& d) {
  w.str(d.block_id);
  w.count(d.tensors.size(), "tensors");
  for (const auto& q : d.tensors) {
    if (q.code_bits < 1 || q.code_bits > 16)
      throw InvalidInput("delta for block '" + d.block_id + "' has invalid code_bits");
    w.f32(q.lo);
    w.f32(q.step);
    w.u8(q.code_bits);
    w.count(q.codes.size(), "codes");
    w.bytes(pack_codes(q.codes, q.code_bits));
  }
}

QuantizedBlockDelta read_delta_block(Reader& r) {
  QuantizedBlockDelta d;
  d.block_id = r.str("block id");
  const std::size_t tensors = r.u32("tensor count");
  r.need(tensors * 13, "delta tensor table");
  for (std::size_t i = 0; i < tensors; ++i) {
    QuantizedTensor q;
    q.lo = r.f32("delta lo");
    const std::size_t step_at = r.offset();
    q.step = r.f32("delta step");
    if (q.step < 0.0f) throw MalformedMessage("negative quantization step", step_at);
    const std::size_t bits_at = r.offset();
    q.code_bits = r.u8("code bits");
    if (q.code_bits < 1 || q.code_bits > 16) throw MalformedMessage("code bits outside [1, 16]", bits_at);
    const std::size_t count = r.u32("code count");
    if (count > r.remaining() * 8) throw MalformedMessage("truncated packed codes", r.offset());
    const auto packed = r.bytes(packed_size(count, q.code_bits), "packed codes");
    q.codes = unpack_codes(packed, count, q.code_bits);
    d.tensors.push_back(std::move(q));
  }
  return d;
}

}  // namespace

const char* to_string(PayloadKind kind) noexcept {
  switch (kind) {
    case PayloadKind::kFullModel: return "full_model";
    case PayloadKind::kBlockDeltas: return "block_deltas";
    case PayloadKind::kBlockValues: return "block_values";
  }
  return "unknown";
}

std::size_t header_size(std::string_view sender) noexcept {
  return 4 + 2 + 4 + 2 + sender.size() + 1 + 4 + 4;
}

std::vector<std::uint8_t> serialize(const RoundMessage& msg) {
  Writer w;
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u16(msg.protocol_version);
  w.u32(msg.round);
  w.str(msg.sender);
  w.u8(static_cast<std::uint8_t>(msg.kind));
  w.u32(msg.sample_count);
  if (msg.kind == PayloadKind::kBlockDeltas) {
    if (!msg.blocks.empty()) throw InvalidInput("delta message carries raw blocks");
    w.count(msg.deltas.size(), "blocks");
    for (const auto& d : msg.deltas) write_delta_block(w, d);
  } else {
    if (!msg.deltas.empty()) throw InvalidInput("raw-value message carries deltas");
    w.count(msg.blocks.size(), "blocks");
    for (const auto& b : msg.blocks) write_raw_block(w, b);
  }
  return w.take();
}

RoundMessage deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.bytes(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw MalformedMessage("bad magic", 0);
  RoundMessage msg;
  msg.protocol_version = r.u16("protocol version");
  if (msg.protocol_version != kProtocolVersion) throw UnsupportedVersion(msg.protocol_version);
  msg.round = r.u32("round");
  msg.sender = r.str("sender");
  const std::size_t kind_at = r.offset();
  const auto kind = r.u8("payload kind");
  if (kind > static_cast<std::uint8_t>(PayloadKind::kBlockValues))
    throw MalformedMessage("unknown payload kind " + std::to_string(kind), kind_at);
  msg.kind = static_cast<PayloadKind>(kind);
  msg.sample_count = r.u32("sample count");
  const std::size_t blocks = r.u32("block count");
  // Smallest possible block: id length(2) + tensor count(4).
  r.need(blocks * 6, "block table");
  for (std::size_t i = 0; i < blocks; ++i) {
    if (msg.kind == PayloadKind::kBlockDeltas)
      msg.deltas.push_back(read_delta_block(r));
    else
      msg.blocks.push_back(read_raw_block(r));
  }
  if (r.remaining() != 0) throw MalformedMessage("trailing bytes after payload", r.offset());
  return msg;
}

Channel::Channel(std::optional<std::uint64_t> bytes_per_sec) : bytes_per_sec_(bytes_per_sec) {
  if (bytes_per_sec_ && *bytes_per_sec_ == 0) throw InvalidInput("bandwidth cap must be positive");
}

DeliveryRecord Channel::send(const std::string& sender, const std::string& receiver,
                             std::vector<std::uint8_t> bytes) {
  std::lock_guard lock(mu_);
  DeliveryRecord rec;
  rec.bytes = bytes.size();
  rec.seconds = bytes_per_sec_ ? static_cast<double>(rec.bytes) / static_cast<double>(*bytes_per_sec_) : 0.0;
  rec.sequence = next_sequence_++;
  sent_[sender] += rec.bytes;
  received_[receiver] += rec.bytes;
  total_ += rec.bytes;
  seconds_ += rec.seconds;
  inbox_[receiver].push_back({sender, receiver, std::move(bytes), rec.sequence});
  return rec;
}

std::optional<Envelope> Channel::receive(const std::string& receiver) {
  std::lock_guard lock(mu_);
  auto it = inbox_.find(receiver);
  if (it == inbox_.end() || it->second.empty()) return std::nullopt;
  Envelope e = std::move(it->second.front());
  it->second.pop_front();
  return e;
}

std::optional<Envelope> Channel::receive_from(const std::string& receiver, const std::string& sender) {
  std::lock_guard lock(mu_);
  auto it = inbox_.find(receiver);
  if (it == inbox_.end()) return std::nullopt;
  auto& queue = it->second;
  for (auto q = queue.begin(); q != queue.end(); ++q) {
    if (q->sender == sender) {
      Envelope e = std::move(*q);
      queue.erase(q);
      return e;
    }
  }
  return std::nullopt;
}

std::uint64_t Channel::bytes_sent(const std::string& sender) const {
  std::lock_guard lock(mu_);
  const auto it = sent_.find(sender);
  return it == sent_.end() ? 0 : it->second;
}

std::uint64_t Channel::bytes_received(const std::string& receiver) const {
  std::lock_guard lock(mu_);
  const auto it = received_.find(receiver);
  return it == received_.end() ? 0 : it->second;
}

std::uint64_t Channel::total_bytes() const {
  std::lock_guard lock(mu_);
  return total_;
}

double Channel::simulated_seconds() const {
  std::lock_guard lock(mu_);
  return seconds_;
}

std::size_t Channel::pending() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& [_, q] : inbox_) n += q.size();
  return n;
}

}  // namespace fedobd
