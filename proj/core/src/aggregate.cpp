#include "fedobd/aggregate.hpp"

#include <algorithm>
#include <set>

#include "fedobd/errors.hpp"

namespace fedobd {

void ClientUpdate::validate() const {
  if (sample_count == 0) throw InvalidInput("client '" + client_id + "' reported zero samples");
  std::set<std::string> ids;
  for (const auto& d : deltas)
    if (!ids.insert(d.block_id).second)
      throw InvalidInput("client '" + client_id + "' uploaded block '" + d.block_id + "' twice");
  for (const auto& b : blocks)
    if (!ids.insert(b.block_id).second)
      throw InvalidInput("client '" + client_id + "' uploaded block '" + b.block_id + "' twice");
}

BlockedModel reconstruct_client(const BlockedModel& prev_global, const ClientUpdate& update) {
  update.validate();
  std::vector<Block> replacements;
  replacements.reserve(update.deltas.size() + update.blocks.size());
  for (const auto& d : update.deltas) {
    const auto idx = prev_global.index_of(d.block_id);
    if (!idx)
      throw IncompatibleStructure("client '" + update.client_id + "' round " +
                                  std::to_string(update.round) + " uploaded unknown block '" +
                                  d.block_id + "'");
    replacements.push_back(decode_delta(prev_global.blocks()[*idx], d));
  }
  replacements.insert(replacements.end(), update.blocks.begin(), update.blocks.end());
  return apply_blocks(prev_global, replacements);
}

BlockedModel fedavg(std::span<const WeightedModel> updates) {
  if (updates.empty()) throw InvalidInput("fedavg needs at least one update");

  std::vector<const WeightedModel*> order;
  for (const auto& u : updates) order.push_back(&u);
  std::sort(order.begin(), order.end(),
            [](const WeightedModel* a, const WeightedModel* b) { return a->client_id < b->client_id; });
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0 && order[i]->client_id == order[i - 1]->client_id)
      throw InvalidInput("duplicate client '" + order[i]->client_id + "' in aggregation");
    if (order[i]->sample_count == 0)
      throw InvalidInput("client '" + order[i]->client_id + "' reported zero samples");
    require_compatible(order.front()->model, order[i]->model);
    total += order[i]->sample_count;
  }

  std::vector<double> weights;
  for (const auto* u : order)
    weights.push_back(static_cast<double>(u->sample_count) / static_cast<double>(total));

  const BlockedModel& ref = order.front()->model;
  std::vector<Block> blocks = ref.blocks();
  std::vector<double> acc;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t t = 0; t < blocks[b].tensors.size(); ++t) {
      auto& out = blocks[b].tensors[t].values;
      acc.assign(out.size(), 0.0);
      for (std::size_t c = 0; c < order.size(); ++c) {
        const auto& in = order[c]->model.blocks()[b].tensors[t].values;
        for (std::size_t i = 0; i < in.size(); ++i) acc[i] += weights[c] * static_cast<double>(in[i]);
      }
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(acc[i]);
    }
  }
  return BlockedModel(std::move(blocks), ref.round());
}

}  // namespace fedobd
