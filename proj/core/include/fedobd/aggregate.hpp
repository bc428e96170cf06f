#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedobd/model.hpp"
#include "fedobd/quant.hpp"

namespace fedobd {

/// A client's upload: the retained blocks, either as quantized deltas or raw values.
struct ClientUpdate {
  std::string client_id;
  std::uint32_t round = 0;
  std::uint64_t sample_count = 0;
  std::vector<QuantizedBlockDelta> deltas;
  std::vector<Block> blocks;

  /// sample_count >= 1 and every block id appears at most once.
  void validate() const;
};

/// prev_global with every uploaded block applied; untouched blocks keep
/// prev_global's values bit for bit.
BlockedModel reconstruct_client(const BlockedModel& prev_global, const ClientUpdate& update);

struct WeightedModel {
  std::string client_id;
  BlockedModel model;
  std::uint64_t sample_count = 0;
};

/// Sample-count weighted average. Summation runs in double precision in
/// ascending client_id order, so the result does not depend on input order.
/// The output carries the round of the first model in canonical order.
BlockedModel fedavg(std::span<const WeightedModel> updates);

}  // namespace fedobd
