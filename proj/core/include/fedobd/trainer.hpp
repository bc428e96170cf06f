#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedobd/model.hpp"
#include "fedobd/rng.hpp"

namespace fedobd {

/// Labeled samples, features stored row-major (sample_count x dim).
struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<float> features;
  std::vector<std::uint32_t> labels;

  std::size_t sample_count() const noexcept { return labels.size(); }
  std::span<const float> sample(std::size_t i) const { return {features.data() + i * dim, dim}; }

  void validate() const;
};

enum class Activation { kRelu };

struct MLPSpec {
  std::vector<std::size_t> layer_widths;  // input, hidden..., output
  Activation activation = Activation::kRelu;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Rules used by init_model when none are supplied: one block per <linear, activation>.
DecompositionRules default_mlp_rules();

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. Tensors are named
/// "linear_<layer index>.weight" (shape out x in) and "linear_<layer index>.bias".
BlockedModel init_model(const MLPSpec& spec, const DecompositionRules& rules = default_mlp_rules());

struct TrainOptions {
  std::size_t epochs = 1;
  double lr = 0.05;
  std::size_t batch_size = 32;
};

/// Mini-batch SGD on mean softmax cross-entropy. The sample order of every
/// epoch is a fresh shuffle drawn from `rng`. Returns the updated model;
/// `model` is left untouched.
BlockedModel local_train(const BlockedModel& model, const Dataset& data, const TrainOptions& opts,
                         Rng& rng);

struct Metrics {
  double loss = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;

  bool operator==(const Metrics&) const = default;
};

Metrics evaluate(const BlockedModel& model, const Dataset& data);

// Synthetic data and file loading.

struct BlobSpec {
  std::size_t num_classes = 3;
  std::size_t dim = 8;
  std::size_t samples = 1000;
  double center_scale = 1.5;  // centers ~ N(0, center_scale^2) per coordinate
  double spread = 1.0;        // per-class isotropic standard deviation
};

/// Class centers are drawn first from `centers_rng`, then samples from
/// `samples_rng`, so train and test sets can share centers.
Dataset make_blobs(const BlobSpec& spec, Rng& centers_rng, Rng& samples_rng);

/// Shuffles the samples and deals them into `parts` contiguous shards whose
/// sizes differ by at most one.
std::vector<Dataset> split_iid(const Dataset& data, std::size_t parts, Rng& rng);

/// One sample per line: features then an integer label, separated by commas,
/// semicolons, tabs or spaces. '#' starts a comment line.
Dataset load_delimited(const std::filesystem::path& path, std::size_t num_classes = 0);

}  // namespace fedobd
