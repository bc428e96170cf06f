#pragma once

// Double-precision view of an MLP stored in a BlockedModel. Used by the
// trainer and by gradient checks in tests.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedobd/model.hpp"

namespace fedobd::mlp {

struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;
};

/// Dense layers with ReLU between them (none after the last).
struct Network {
  std::vector<Dense> layers;

  /// Collects every "<name>.weight" / "<name>.bias" pair in block order.
  /// Throws InvalidInput when the model is not a chain of dense layers.
  static Network from_model(const BlockedModel& model);

  /// `model` with this network's parameters rounded to single precision.
  BlockedModel to_model(const BlockedModel& layout) const;

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t output_dim() const { return layers.back().out; }
  std::size_t param_count() const;

  /// Flat parameter view in (weight, bias) per layer order.
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> params);

  /// Output logits for one input.
  std::vector<double> logits(std::span<const float> x) const;
};

/// Sum over samples of cross-entropy, and its gradient accumulated into
/// `grad` (same layout as Network::flatten) when non-null.
double loss_and_gradient(const Network& net, std::span<const float> features,
                         std::span<const std::uint32_t> labels, std::span<const std::size_t> indices,
                         std::vector<double>* grad);

/// -log softmax(logits)[label], computed with max subtraction.
double cross_entropy(std::span<const double> logits, std::uint32_t label);

}  // namespace fedobd::mlp
