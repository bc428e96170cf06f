#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <fedobd/errors.hpp>
#include <fedobd/orchestrator.hpp>

namespace fedobd::cli {

/// Invalid or unreadable experiment configuration; maps to exit code 2.
class ConfigError : public fedobd::Error {
 public:
  using Error::Error;
};

struct Variant {
  std::string name;
  RunConfig run;
};

struct ExperimentConfig {
  RunConfig run;
  std::filesystem::path output_dir = "out";
  /// Only used by `compare`; each variant starts from `run` and applies its own keys.
  std::vector<Variant> variants;
};

/// Reads a YAML experiment document. Unknown keys are rejected.
///
///   algorithm: fedobd             # fedobd | fedavg
///   n_clients: 4
///   lambda: 0.3                   # dropout rate in [0, 1]
///   quant_weight: 0.01            # step as a fraction of each tensor's range; none disables
///   stage1_rounds: 30
///   stage1_epochs: 1
///   stage2_epochs: 2
///   stage1_plateau: false
///   lr: 0.05
///   batch_size: 32
///   seed: 1
///   bandwidth_bytes_per_sec: 2097152   # none for uncapped
///   layer_widths: [8, 32, 32, 3]
///   block_rules: [[linear, activation]]
///   dataset: blobs                # blobs | file
///   num_classes: 3
///   samples_per_client: 2000
///   test_samples: 1000
///   center_scale: 1.5
///   spread: 1.0
///   train_file: train.csv         # dataset: file only, relative to the config
///   test_file: test.csv
///   output_dir: out
///   variants:                     # compare only
///     - {name: fedavg, algorithm: fedavg}
///     - {name: fedobd, lambda: 0.3}
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

ExperimentConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir,
                              const std::vector<std::string>& overrides = {});

/// Applies one "key=value" override (value parsed as YAML scalar or flow sequence).
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

}  // namespace fedobd::cli
