#include "fedobd/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <unordered_map>

#include "fedobd/errors.hpp"

namespace fedobd {

std::size_t shape_volume(std::span<const std::size_t> shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void ParameterTensor::validate() const {
  if (shape.empty()) throw InvalidInput("tensor '" + name + "' has an empty shape");
  if (std::find(shape.begin(), shape.end(), std::size_t{0}) != shape.end())
    throw InvalidInput("tensor '" + name + "' has a zero dimension");
  if (shape_volume(shape) != values.size())
    throw InvalidInput("tensor '" + name + "' holds " + std::to_string(values.size()) +
                       " values but its shape needs " + std::to_string(shape_volume(shape)));
  for (const float v : values)
    if (!std::isfinite(v)) throw InvalidInput("tensor '" + name + "' holds a non-finite value");
}

std::size_t Block::param_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

bool Block::same_structure(const Block& other) const noexcept {
  if (block_id != other.block_id || tensors.size() != other.tensors.size()) return false;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name != other.tensors[i].name || tensors[i].shape != other.tensors[i].shape)
      return false;
  }
  return true;
}

BlockedModel::BlockedModel(std::vector<Block> blocks, std::uint32_t round)
    : blocks_(std::move(blocks)), round_(round) {
  std::set<std::string> ids;
  for (const auto& b : blocks_) {
    if (b.block_id.empty()) throw InvalidInput("block with an empty id");
    if (!ids.insert(b.block_id).second) throw InvalidInput("duplicate block id '" + b.block_id + "'");
    std::set<std::string> names;
    for (const auto& t : b.tensors) {
      t.validate();
      if (!names.insert(t.name).second)
        throw InvalidInput("duplicate tensor '" + t.name + "' in block '" + b.block_id + "'");
    }
    total_params_ += b.param_count();
  }
}

std::optional<std::size_t> BlockedModel::index_of(const std::string& block_id) const noexcept {
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (blocks_[i].block_id == block_id) return i;
  return std::nullopt;
}

const Block& BlockedModel::block(const std::string& block_id) const {
  const auto idx = index_of(block_id);
  if (!idx) throw IncompatibleStructure("unknown block '" + block_id + "'");
  return blocks_[*idx];
}

bool structurally_compatible(const BlockedModel& a, const BlockedModel& b) noexcept {
  if (a.block_count() != b.block_count()) return false;
  for (std::size_t i = 0; i < a.block_count(); ++i)
    if (!a.blocks()[i].same_structure(b.blocks()[i])) return false;
  return true;
}

void require_compatible(const BlockedModel& a, const BlockedModel& b) {
  if (a.block_count() != b.block_count())
    throw IncompatibleStructure("models have " + std::to_string(a.block_count()) + " and " +
                                std::to_string(b.block_count()) + " blocks");
  for (std::size_t i = 0; i < a.block_count(); ++i) {
    if (!a.blocks()[i].same_structure(b.blocks()[i]))
      throw IncompatibleStructure("block " + std::to_string(i) + " differs: '" +
                                  a.blocks()[i].block_id + "' vs '" + b.blocks()[i].block_id + "'");
  }
}

BlockedModel decompose(std::span<const Layer> layers, const DecompositionRules& rules) {
  if (layers.empty()) throw InvalidInput("cannot decompose an empty layer list");

  // Longest pattern first; stable keeps configured order among equal lengths.
  std::vector<const LayerPattern*> ordered;
  for (const auto& p : rules.patterns)
    if (!p.empty()) ordered.push_back(&p);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const LayerPattern* a, const LayerPattern* b) { return a->size() > b->size(); });

  auto matches = [&](std::size_t at, const LayerPattern& pattern) {
    if (at + pattern.size() > layers.size()) return false;
    for (std::size_t k = 0; k < pattern.size(); ++k)
      if (layers[at + k].kind != pattern[k]) return false;
    return true;
  };

  std::vector<Block> blocks;
  std::size_t pos = 0;
  while (pos < layers.size()) {
    std::size_t span = 1;
    for (const auto* pattern : ordered) {
      if (matches(pos, *pattern)) {
        span = pattern->size();
        break;
      }
    }
    char id[64];
    std::snprintf(id, sizeof id, "block_%02zu.", blocks.size());
    Block block;
    block.block_id = id + layers[pos].kind + "_" + std::to_string(pos);
    for (std::size_t k = pos; k < pos + span; ++k) {
      block.layer_kinds.push_back(layers[k].kind);
      block.tensors.insert(block.tensors.end(), layers[k].tensors.begin(), layers[k].tensors.end());
    }
    blocks.push_back(std::move(block));
    pos += span;
  }
  return BlockedModel(std::move(blocks));
}

std::vector<float> vectorize(const Block& block) {
  std::vector<float> out;
  out.reserve(block.param_count());
  for (const auto& t : block.tensors) out.insert(out.end(), t.values.begin(), t.values.end());
  return out;
}

BlockedModel apply_blocks(const BlockedModel& base, std::span<const Block> replacements) {
  std::vector<Block> blocks = base.blocks();
  for (const auto& r : replacements) {
    const auto idx = base.index_of(r.block_id);
    if (!idx) throw IncompatibleStructure("replacement for unknown block '" + r.block_id + "'");
    if (!blocks[*idx].same_structure(r))
      throw IncompatibleStructure("replacement for block '" + r.block_id + "' has a different shape");
    blocks[*idx].tensors = r.tensors;
  }
  return BlockedModel(std::move(blocks), base.round());
}

}  // namespace fedobd
