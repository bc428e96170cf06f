#include "fedobd/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedobd/errors.hpp"

namespace fedobd {

namespace {

void check_weight(double weight) {
  if (!(weight > 0.0 && weight <= 1.0))
    throw InvalidInput("quantization weight must lie in (0, 1], got " + std::to_string(weight));
}

QuantizedTensor quantize_range(std::span<const double> values, double weight, Rng& rng) {
  if (values.empty()) throw InvalidInput("cannot quantize an empty tensor");
  double lo = values.front();
  double hi = values.front();
  for (const double v : values) {
    if (!std::isfinite(v)) throw InvalidInput("cannot quantize a non-finite value");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const auto bits = code_bits_for(weight);
  const auto lo_f = static_cast<float>(lo);
  if (hi == lo) return quantize_on_grid(values, lo_f, 0.0f, bits, rng);
  auto step_f = static_cast<float>(weight * (hi - lo));
  if (!(step_f > 0.0f)) step_f = std::numeric_limits<float>::denorm_min();
  return quantize_on_grid(values, lo_f, step_f, bits, rng);
}

}  // namespace

std::uint8_t code_bits_for(double weight) {
  check_weight(weight);
  const double levels = 1.0 / weight + 1.0;
  std::uint8_t bits = 1;
  while (bits < 16 && std::ldexp(1.0, bits) < levels) ++bits;
  return bits;
}

QuantizedTensor quantize_on_grid(std::span<const double> values, float lo, float step,
                                 std::uint8_t code_bits, Rng& rng) {
  if (code_bits < 1 || code_bits > 16) throw InvalidInput("code_bits must lie in [1, 16]");
  QuantizedTensor q;
  q.lo = lo;
  q.step = step;
  q.code_bits = code_bits;
  q.codes.resize(values.size(), 0);
  if (step == 0.0f) return q;
  const double max_code = std::ldexp(1.0, code_bits) - 1.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = std::max(0.0, (values[i] - static_cast<double>(lo)) / static_cast<double>(step));
    const double base = std::floor(x);
    double code = base + (rng.bernoulli(x - base) ? 1.0 : 0.0);
    code = std::min(code, max_code);
    q.codes[i] = static_cast<std::uint16_t>(code);
  }
  return q;
}

QuantizedTensor quantize(std::span<const float> values, double weight, Rng& rng) {
  check_weight(weight);
  std::vector<double> wide(values.begin(), values.end());
  return quantize_range(wide, weight, rng);
}

std::vector<double> dequantize(const QuantizedTensor& q) {
  std::vector<double> out(q.codes.size());
  const double lo = q.lo;
  const double step = q.step;
  for (std::size_t i = 0; i < q.codes.size(); ++i) out[i] = lo + static_cast<double>(q.codes[i]) * step;
  return out;
}

QuantizedBlockDelta encode_delta(const Block& prev, const Block& cur, double weight, Rng& rng) {
  if (!prev.same_structure(cur))
    throw IncompatibleStructure("cannot encode block '" + cur.block_id + "' against '" +
                                prev.block_id + "': structures differ");
  check_weight(weight);
  QuantizedBlockDelta delta;
  delta.block_id = cur.block_id;
  delta.tensors.reserve(cur.tensors.size());
  std::vector<double> diff;
  for (std::size_t t = 0; t < cur.tensors.size(); ++t) {
    const auto& a = prev.tensors[t].values;
    const auto& b = cur.tensors[t].values;
    diff.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      diff[i] = static_cast<double>(b[i]) - static_cast<double>(a[i]);
    delta.tensors.push_back(quantize_range(diff, weight, rng));
  }
  return delta;
}

Block decode_delta(const Block& prev, const QuantizedBlockDelta& delta) {
  if (delta.block_id != prev.block_id)
    throw IncompatibleStructure("delta for block '" + delta.block_id + "' applied to '" +
                                prev.block_id + "'");
  if (delta.tensors.size() != prev.tensors.size())
    throw IncompatibleStructure("delta for block '" + delta.block_id + "' carries " +
                                std::to_string(delta.tensors.size()) + " tensors, expected " +
                                std::to_string(prev.tensors.size()));
  Block out = prev;
  for (std::size_t t = 0; t < prev.tensors.size(); ++t) {
    const auto& q = delta.tensors[t];
    auto& values = out.tensors[t].values;
    if (q.size() != values.size())
      throw IncompatibleStructure("delta tensor " + std::to_string(t) + " of block '" +
                                  delta.block_id + "' has " + std::to_string(q.size()) +
                                  " codes, expected " + std::to_string(values.size()));
    const auto diff = dequantize(q);
    for (std::size_t i = 0; i < values.size(); ++i)
      values[i] = static_cast<float>(static_cast<double>(values[i]) + diff[i]);
  }
  return out;
}

std::vector<std::uint8_t> pack_codes(std::span<const std::uint16_t> codes, std::uint8_t code_bits) {
  std::vector<std::uint8_t> out(packed_size(codes.size(), code_bits), 0);
  std::size_t bit = 0;
  for (const auto code : codes) {
    for (std::uint8_t k = 0; k < code_bits; ++k, ++bit)
      if ((code >> k) & 1u) out[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
  }
  return out;
}

std::vector<std::uint16_t> unpack_codes(std::span<const std::uint8_t> bytes, std::size_t count,
                                        std::uint8_t code_bits) {
  if (bytes.size() < packed_size(count, code_bits))
    throw InvalidInput("packed code buffer too short");
  std::vector<std::uint16_t> out(count, 0);
  std::size_t bit = 0;
  for (auto& code : out) {
    for (std::uint8_t k = 0; k < code_bits; ++k, ++bit)
      if ((bytes[bit / 8] >> (bit % 8)) & 1u) code = static_cast<std::uint16_t>(code | (1u << k));
  }
  return out;
}

}  // namespace fedobd
