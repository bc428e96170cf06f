#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedobd/model.hpp"
#include "fedobd/obd.hpp"
#include "fedobd/trainer.hpp"
#include "fedobd/transport.hpp"

namespace fedobd {

enum class Algorithm { kFedAvg, kFedObd };

const char* to_string(Algorithm a) noexcept;
Algorithm parse_algorithm(const std::string& text);

struct DataConfig {
  enum class Source { kBlobs, kFile };
  Source source = Source::kBlobs;
  std::size_t num_classes = 3;
  std::size_t samples_per_client = 2000;
  std::size_t test_samples = 1000;
  double center_scale = 1.5;
  double spread = 1.0;
  std::filesystem::path train_file;
  std::filesystem::path test_file;
};

struct RunConfig {
  std::size_t n_clients = 4;
  Algorithm algorithm = Algorithm::kFedObd;
  double lambda = 0.3;
  std::optional<double> quant_weight = 0.01;
  std::size_t stage1_rounds = 30;
  std::size_t stage1_epochs = 1;
  std::size_t stage2_epochs = 2;
  /// Leave stage 1 early once test loss improves by less than 1e-4 for 3
  /// consecutive rounds. stage1_rounds stays the upper bound.
  bool stage1_plateau = false;
  double lr = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> bandwidth_bytes_per_sec;
  std::vector<std::size_t> layer_widths = {8, 32, 32, 3};
  DecompositionRules block_rules = default_mlp_rules();
  DataConfig data;

  /// FedAvg exchanges full models: lambda is forced to 0 and quantization off.
  RunConfig normalized() const;
  /// Throws InvalidInput naming the offending field.
  void validate() const;
};

/// One aggregation step (or the initial distribution, stage 0).
struct RoundRecord {
  std::uint32_t round = 0;
  int stage = 0;
  std::size_t local_epochs = 0;
  std::vector<std::uint64_t> upload_bytes;    // per client, in client order
  std::vector<std::uint64_t> download_bytes;  // per client
  std::vector<std::string> distributed_blocks;
  Metrics global;
  double simulated_seconds = 0.0;

  std::uint64_t round_bytes() const;
};

struct RunReport {
  RunConfig config;
  std::vector<std::string> client_ids;
  std::size_t model_params = 0;
  std::uint64_t raw_model_bytes = 0;  // 4 bytes per parameter
  std::size_t stage1_rounds_run = 0;
  std::vector<RoundRecord> rounds;
  std::uint64_t total_upload_bytes = 0;
  std::uint64_t total_download_bytes = 0;
  std::uint64_t total_bytes = 0;
  std::uint64_t transport_bytes = 0;  // counted independently by the channel
  std::optional<double> estimated_seconds;
  Metrics final_metrics;
  ContributionLog contributions;
};

/// Transfer-bound time in seconds. Requires bytes_per_sec > 0.
double wall_clock_estimate(double total_bytes, double bytes_per_sec);

/// Holds the most recent global models of one participant (two at most).
class ModelLog {
 public:
  /// Stores `model` as round `round` and evicts anything older than round - 1.
  std::uint32_t store(std::uint32_t round, BlockedModel model);
  /// Throws MissingState when the round was never stored or has been evicted.
  const BlockedModel& load(std::uint32_t round) const;
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::deque<std::pair<std::uint32_t, BlockedModel>> entries_;
};

struct FederatedData {
  std::vector<Dataset> clients;
  Dataset test;
};

/// Client shards and the test set for a config (synthetic blobs or files).
FederatedData build_data(const RunConfig& cfg);

std::string client_id(std::size_t index);

inline constexpr const char* kServerId = "server";

/// Applies a distribution message to the receiver's previous global model.
BlockedModel apply_distribution(const BlockedModel& prev_global, const RoundMessage& msg);

using RoundObserver = std::function<void(const RoundRecord&, const BlockedModel& global)>;

/// Runs the whole protocol: initial distribution, stage-1 rounds, stage-2
/// per-epoch aggregation. Deterministic for a given config.
RunReport run_federated(const RunConfig& cfg, const RoundObserver& observer = {});

}  // namespace fedobd
