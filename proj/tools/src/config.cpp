#include "fedobd_cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace fedobd::cli {

namespace {

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
  try {
    if (!node.IsScalar()) throw ConfigError(key + ": expected a scalar value");
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(key + ": cannot parse '" + node.Scalar() + "'");
  }
}

std::size_t positive_size(const YAML::Node& node, const std::string& key) {
  const auto v = scalar<long long>(node, key);
  if (v <= 0) throw ConfigError(key + ": must be a positive integer");
  return static_cast<std::size_t>(v);
}

bool is_none(const YAML::Node& node) {
  if (node.IsNull()) return true;
  if (!node.IsScalar()) return false;
  const auto& s = node.Scalar();
  return s == "none" || s == "None" || s == "null" || s == "~";
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void apply_key(RunConfig& run, std::filesystem::path* output_dir, const std::string& key,
               const YAML::Node& v, const std::filesystem::path& base_dir) {
  if (key == "algorithm") {
    const auto text = scalar<std::string>(v, key);
    if (text == "fedavg") run.algorithm = Algorithm::kFedAvg;
    else if (text == "fedobd") run.algorithm = Algorithm::kFedObd;
    else throw ConfigError("algorithm: expected fedavg or fedobd, got '" + text + "'");
  } else if (key == "n_clients") {
    run.n_clients = positive_size(v, key);
  } else if (key == "lambda") {
    run.lambda = scalar<double>(v, key);
    if (!(run.lambda >= 0.0 && run.lambda <= 1.0)) throw ConfigError("lambda: must lie in [0, 1]");
  } else if (key == "quant_weight") {
    if (is_none(v)) {
      run.quant_weight.reset();
    } else {
      const auto w = scalar<double>(v, key);
      if (!(w > 0.0 && w <= 1.0)) throw ConfigError("quant_weight: must lie in (0, 1] or be none");
      run.quant_weight = w;
    }
  } else if (key == "stage1_rounds") {
    run.stage1_rounds = positive_size(v, key);
  } else if (key == "stage1_epochs") {
    run.stage1_epochs = positive_size(v, key);
  } else if (key == "stage2_epochs") {
    run.stage2_epochs = positive_size(v, key);
  } else if (key == "stage1_plateau") {
    run.stage1_plateau = scalar<bool>(v, key);
  } else if (key == "lr") {
    run.lr = scalar<double>(v, key);
    if (!(run.lr > 0.0)) throw ConfigError("lr: must be positive");
  } else if (key == "batch_size") {
    run.batch_size = positive_size(v, key);
  } else if (key == "seed") {
    run.seed = scalar<std::uint64_t>(v, key);
  } else if (key == "bandwidth_bytes_per_sec") {
    if (is_none(v)) run.bandwidth_bytes_per_sec.reset();
    else run.bandwidth_bytes_per_sec = positive_size(v, key);
  } else if (key == "layer_widths") {
    if (!v.IsSequence() || v.size() < 2) throw ConfigError("layer_widths: expected a list of at least two widths");
    run.layer_widths.clear();
    for (const auto& w : v) run.layer_widths.push_back(positive_size(w, key));
  } else if (key == "block_rules") {
    if (!v.IsSequence()) throw ConfigError("block_rules: expected a list of layer-kind lists");
    run.block_rules.patterns.clear();
    for (const auto& rule : v) {
      if (!rule.IsSequence() || rule.size() == 0)
        throw ConfigError("block_rules: every rule must be a non-empty list of layer kinds");
      LayerPattern p;
      for (const auto& kind : rule) p.push_back(scalar<std::string>(kind, key));
      run.block_rules.patterns.push_back(std::move(p));
    }
  } else if (key == "dataset") {
    const auto text = scalar<std::string>(v, key);
    if (text == "blobs") run.data.source = DataConfig::Source::kBlobs;
    else if (text == "file") run.data.source = DataConfig::Source::kFile;
    else throw ConfigError("dataset: expected blobs or file, got '" + text + "'");
  } else if (key == "num_classes") {
    run.data.num_classes = positive_size(v, key);
  } else if (key == "samples_per_client") {
    run.data.samples_per_client = positive_size(v, key);
  } else if (key == "test_samples") {
    run.data.test_samples = positive_size(v, key);
  } else if (key == "center_scale") {
    run.data.center_scale = scalar<double>(v, key);
  } else if (key == "spread") {
    run.data.spread = scalar<double>(v, key);
    if (!(run.data.spread > 0.0)) throw ConfigError("spread: must be positive");
  } else if (key == "train_file") {
    run.data.train_file = resolve(base_dir, scalar<std::string>(v, key));
  } else if (key == "test_file") {
    run.data.test_file = resolve(base_dir, scalar<std::string>(v, key));
  } else if (key == "output_dir" && output_dir) {
    *output_dir = scalar<std::string>(v, key);
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

void check_run(const RunConfig& run, const std::string& context) {
  try {
    run.normalized().validate();
  } catch (const fedobd::InvalidInput& e) {
    throw ConfigError(context + e.what());
  }
}

}  // namespace

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string key = assignment.substr(0, eq);
  if (key == "variants") throw ConfigError("variants cannot be overridden from the command line");
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError("override '" + key + "': " + e.what());
  }
  apply_key(cfg.run, &cfg.output_dir, key, value, {});
  for (auto& v : cfg.variants) apply_key(v.run, nullptr, key, value, {});
}

ExperimentConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir,
                              const std::vector<std::string>& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  ExperimentConfig cfg;
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) throw ConfigError("config must be a key/value mapping");

  YAML::Node variants;
  bool has_variants = false;
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (key == "variants") {
      variants = kv.second;
      has_variants = true;
      continue;
    }
    apply_key(cfg.run, &cfg.output_dir, key, kv.second, base_dir);
  }
  if (has_variants) {
    if (!variants.IsSequence()) throw ConfigError("variants: expected a list of mappings");
    std::set<std::string> names;
    for (std::size_t i = 0; i < variants.size(); ++i) {
      const auto& node = variants[i];
      if (!node.IsMap()) throw ConfigError("variants[" + std::to_string(i) + "]: expected a mapping");
      Variant var{"", cfg.run};
      for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (key == "name") var.name = scalar<std::string>(kv.second, "variants.name");
        else if (key == "output_dir") throw ConfigError("variants: output_dir is set once per experiment");
        else apply_key(var.run, nullptr, key, kv.second, base_dir);
      }
      if (var.name.empty()) var.name = std::string(to_string(var.run.algorithm)) + "_" + std::to_string(i);
      if (var.name.find_first_of("/\\") != std::string::npos || var.name == "." || var.name == "..")
        throw ConfigError("variants: name '" + var.name + "' is not usable as a directory name");
      if (!names.insert(var.name).second) throw ConfigError("variants: duplicate name '" + var.name + "'");
      cfg.variants.push_back(std::move(var));
    }
  }
  for (const auto& o : overrides) apply_override(cfg, o);

  check_run(cfg.run, "");
  for (const auto& v : cfg.variants) check_run(v.run, "variant '" + v.name + "': ");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path(), overrides);
}

}  // namespace fedobd::cli
