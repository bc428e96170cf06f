#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedobd {

/// Named single-precision tensor, row-major.
struct ParameterTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;

  std::size_t size() const noexcept { return values.size(); }

  /// Throws InvalidInput when shape is empty, has a zero dimension, does not
  /// match the value count, or a value is not finite.
  void validate() const;

  bool operator==(const ParameterTensor&) const = default;
};

std::size_t shape_volume(std::span<const std::size_t> shape) noexcept;

/// A semantic block: consecutive layers transmitted and scored as one unit.
struct Block {
  std::string block_id;
  std::vector<std::string> layer_kinds;
  std::vector<ParameterTensor> tensors;

  std::size_t param_count() const noexcept;

  /// Same id, same tensor names and shapes (values may differ).
  bool same_structure(const Block& other) const noexcept;

  bool operator==(const Block&) const = default;
};

/// Ordered blocks plus the round index the model belongs to. Immutable after
/// construction apart from the round tag.
class BlockedModel {
 public:
  BlockedModel() = default;
  /// Validates ids, tensor names, shapes and values.
  explicit BlockedModel(std::vector<Block> blocks, std::uint32_t round = 0);

  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  std::size_t block_count() const noexcept { return blocks_.size(); }
  std::size_t total_params() const noexcept { return total_params_; }
  std::uint32_t round() const noexcept { return round_; }
  void set_round(std::uint32_t round) noexcept { round_ = round; }

  std::optional<std::size_t> index_of(const std::string& block_id) const noexcept;
  const Block& block(const std::string& block_id) const;

  BlockedModel with_round(std::uint32_t round) const {
    BlockedModel copy = *this;
    copy.round_ = round;
    return copy;
  }

  bool operator==(const BlockedModel&) const = default;

 private:
  std::vector<Block> blocks_;
  std::uint32_t round_ = 0;
  std::size_t total_params_ = 0;
};

bool structurally_compatible(const BlockedModel& a, const BlockedModel& b) noexcept;

/// Throws IncompatibleStructure naming the first differing block.
void require_compatible(const BlockedModel& a, const BlockedModel& b);

/// One declared layer prior to decomposition. Parameter-free layers
/// (activation, pooling) carry no tensors.
struct Layer {
  std::string kind;
  std::vector<ParameterTensor> tensors;
};

using LayerPattern = std::vector<std::string>;

/// Layer-kind sequences that form one block. At each position the longest
/// matching pattern wins; equal-length patterns are tried in list order.
struct DecompositionRules {
  std::vector<LayerPattern> patterns;
};

/// Partitions `layers` into blocks. Layers matched by no pattern become
/// singleton blocks. Block ids are "block_NN.<kind>_<first layer index>".
BlockedModel decompose(std::span<const Layer> layers, const DecompositionRules& rules);

/// Tensor values concatenated in tensor order.
std::vector<float> vectorize(const Block& block);

/// `base` with each replacement substituted by id. Keeps base's round.
BlockedModel apply_blocks(const BlockedModel& base, std::span<const Block> replacements);

}  // namespace fedobd
