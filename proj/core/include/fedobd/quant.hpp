#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedobd/model.hpp"
#include "fedobd/rng.hpp"

namespace fedobd {

/// Stochastically rounded codes on the grid lo + k * step.
///
/// A tensor carries no name or shape: inside a QuantizedBlockDelta the i-th
/// tensor corresponds to the i-th tensor of the receiver's copy of the block,
/// and the code count must equal that tensor's size.
struct QuantizedTensor {
  float lo = 0.0f;
  float step = 0.0f;  // 0 for constant input
  std::uint8_t code_bits = 1;
  std::vector<std::uint16_t> codes;

  std::size_t size() const noexcept { return codes.size(); }
  bool operator==(const QuantizedTensor&) const = default;
};

/// Quantized (cur - prev) differences of one retained block.
struct QuantizedBlockDelta {
  std::string block_id;
  std::vector<QuantizedTensor> tensors;

  bool operator==(const QuantizedBlockDelta&) const = default;
};

/// Bits needed for the codes produced at `weight`: min(16, ceil(log2(1/weight + 1))).
std::uint8_t code_bits_for(double weight);

/// step = weight * (max - min); lo = min. Throws InvalidInput for an empty or
/// non-finite input or a weight outside (0, 1].
QuantizedTensor quantize(std::span<const float> values, double weight, Rng& rng);

/// Stochastic rounding onto an explicit grid: code = floor(x) + Bernoulli(frac(x))
/// with x = (v - lo) / step, clamped to [0, 2^code_bits - 1].
QuantizedTensor quantize_on_grid(std::span<const double> values, float lo, float step,
                                 std::uint8_t code_bits, Rng& rng);

/// lo + code * step per element, in double precision.
std::vector<double> dequantize(const QuantizedTensor& q);

QuantizedBlockDelta encode_delta(const Block& prev, const Block& cur, double weight, Rng& rng);

/// prev + dequantized differences, rounded to single precision.
Block decode_delta(const Block& prev, const QuantizedBlockDelta& delta);

/// Codes packed LSB-first at `code_bits` each, zero-padded to a byte boundary.
std::vector<std::uint8_t> pack_codes(std::span<const std::uint16_t> codes, std::uint8_t code_bits);
std::vector<std::uint16_t> unpack_codes(std::span<const std::uint8_t> bytes, std::size_t count,
                                        std::uint8_t code_bits);

constexpr std::size_t packed_size(std::size_t count, std::uint8_t code_bits) noexcept {
  return (count * code_bits + 7) / 8;
}

}  // namespace fedobd
