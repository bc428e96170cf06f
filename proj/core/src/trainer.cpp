#include "fedobd/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fedobd/errors.hpp"
#include "fedobd/mlp.hpp"

namespace fedobd {

void Dataset::validate() const {
  if (dim == 0) throw InvalidInput("dataset has zero feature dimension");
  if (labels.empty()) throw InvalidInput("dataset is empty");
  if (features.size() != labels.size() * dim)
    throw InvalidInput("dataset feature count does not match sample count x dim");
  for (const auto y : labels)
    if (y >= num_classes)
      throw InvalidInput("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
}

void MLPSpec::validate() const {
  if (layer_widths.size() < 2) throw InvalidInput("an MLP needs at least input and output widths");
  for (const auto w : layer_widths)
    if (w == 0) throw InvalidInput("layer widths must be positive");
}

DecompositionRules default_mlp_rules() { return {{{"linear", "activation"}}}; }

BlockedModel init_model(const MLPSpec& spec, const DecompositionRules& rules) {
  spec.validate();
  Rng rng = Rng::derive(spec.seed, "init", 0, "");
  std::vector<Layer> layers;
  const std::size_t dense = spec.layer_widths.size() - 1;
  for (std::size_t l = 0; l < dense; ++l) {
    const std::size_t in = spec.layer_widths[l];
    const std::size_t out = spec.layer_widths[l + 1];
    const std::string name = "linear_" + std::to_string(layers.size());
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    ParameterTensor w{name + ".weight", {out, in}, std::vector<float>(out * in)};
    for (auto& v : w.values) v = static_cast<float>(rng.uniform(-bound, bound));
    ParameterTensor b{name + ".bias", {out}, std::vector<float>(out, 0.0f)};
    layers.push_back({"linear", {std::move(w), std::move(b)}});
    if (l + 1 < dense) layers.push_back({"activation", {}});
  }
  return decompose(layers, rules);
}

namespace {

void check_dims(const mlp::Network& net, const Dataset& data) {
  data.validate();
  if (net.input_dim() != data.dim)
    throw InvalidInput("model expects " + std::to_string(net.input_dim()) + " features, dataset has " +
                       std::to_string(data.dim));
  if (net.output_dim() < data.num_classes)
    throw InvalidInput("model has " + std::to_string(net.output_dim()) + " outputs for " +
                       std::to_string(data.num_classes) + " classes");
}

}  // namespace

BlockedModel local_train(const BlockedModel& model, const Dataset& data, const TrainOptions& opts,
                         Rng& rng) {
  auto net = mlp::Network::from_model(model);
  check_dims(net, data);
  if (opts.batch_size == 0) throw InvalidInput("batch size must be positive");
  if (!(opts.lr >= 0.0) || !std::isfinite(opts.lr)) throw InvalidInput("learning rate must be finite and >= 0");

  std::vector<std::size_t> order(data.sample_count());
  std::vector<double> params = net.flatten();
  std::vector<double> grad;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opts.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      mlp::loss_and_gradient(net, data.features, data.labels, batch, &grad);
      const double scale = opts.lr / static_cast<double>(batch.size());
      // Parameters live in single precision between steps, so how epochs are
      // split across calls never changes the result.
      for (std::size_t i = 0; i < params.size(); ++i)
        params[i] = static_cast<float>(params[i] - scale * grad[i]);
      net.unflatten(params);
    }
  }
  return net.to_model(model);
}

Metrics evaluate(const BlockedModel& model, const Dataset& data) {
  const auto net = mlp::Network::from_model(model);
  check_dims(net, data);
  const std::size_t k = std::max(net.output_dim(), data.num_classes);
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.sample_count(); ++i) {
    const auto logits = net.logits(data.sample(i));
    const auto y = data.labels[i];
    loss += mlp::cross_entropy(logits, y);
    const auto pred = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (pred == y) {
      ++correct;
      ++tp[y];
    } else {
      ++fp[pred];
      ++fn[y];
    }
  }
  Metrics m;
  const auto n = static_cast<double>(data.sample_count());
  m.loss = loss / n;
  m.accuracy = static_cast<double>(correct) / n;
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < data.num_classes; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    f1_sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  m.macro_f1 = f1_sum / static_cast<double>(data.num_classes);
  return m;
}

Dataset make_blobs(const BlobSpec& spec, Rng& centers_rng, Rng& samples_rng) {
  if (spec.num_classes < 2 || spec.dim == 0 || spec.samples == 0)
    throw InvalidInput("blob spec needs >= 2 classes, dim >= 1 and samples >= 1");
  std::vector<double> centers(spec.num_classes * spec.dim);
  for (auto& c : centers) c = spec.center_scale * centers_rng.normal();

  Dataset d;
  d.dim = spec.dim;
  d.num_classes = spec.num_classes;
  d.features.resize(spec.samples * spec.dim);
  d.labels.resize(spec.samples);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const auto y = static_cast<std::uint32_t>(i % spec.num_classes);
    d.labels[i] = y;
    for (std::size_t j = 0; j < spec.dim; ++j)
      d.features[i * spec.dim + j] =
          static_cast<float>(centers[y * spec.dim + j] + spec.spread * samples_rng.normal());
  }
  return d;
}

std::vector<Dataset> split_iid(const Dataset& data, std::size_t parts, Rng& rng) {
  data.validate();
  if (parts == 0 || parts > data.sample_count())
    throw InvalidInput("cannot split " + std::to_string(data.sample_count()) + " samples into " +
                       std::to_string(parts) + " shards");
  std::vector<std::size_t> order(data.sample_count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span(order));

  std::vector<Dataset> out(parts);
  const std::size_t base = data.sample_count() / parts;
  const std::size_t extra = data.sample_count() % parts;
  std::size_t at = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    auto& shard = out[p];
    shard.dim = data.dim;
    shard.num_classes = data.num_classes;
    const std::size_t n = base + (p < extra ? 1 : 0);
    for (std::size_t k = 0; k < n; ++k, ++at) {
      const auto s = data.sample(order[at]);
      shard.features.insert(shard.features.end(), s.begin(), s.end());
      shard.labels.push_back(data.labels[order[at]]);
    }
  }
  return out;
}

Dataset load_delimited(const std::filesystem::path& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open dataset file " + path.string());
  Dataset d;
  std::string line;
  std::size_t line_no = 0;
  std::uint32_t max_label = 0;
  std::vector<std::string_view> tokens;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    tokens.clear();
    std::size_t pos = 0;
    while (pos < line.size()) {
      const auto next = line.find_first_of(",; \t\r", pos);
      const auto end = next == std::string::npos ? line.size() : next;
      if (end > pos) tokens.emplace_back(line.data() + pos, end - pos);
      pos = end + 1;
    }
    if (tokens.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    if (tokens.size() < 2) throw InvalidInput(where + ": need at least one feature and a label");
    if (d.dim == 0) d.dim = tokens.size() - 1;
    if (tokens.size() - 1 != d.dim)
      throw InvalidInput(where + ": expected " + std::to_string(d.dim) + " features");
    for (std::size_t k = 0; k + 1 < tokens.size(); ++k) {
      float v = 0.0f;
      const auto [p, ec] = std::from_chars(tokens[k].data(), tokens[k].data() + tokens[k].size(), v);
      if (ec != std::errc() || p != tokens[k].data() + tokens[k].size() || !std::isfinite(v))
        throw InvalidInput(where + ": bad feature '" + std::string(tokens[k]) + "'");
      d.features.push_back(v);
    }
    std::uint32_t y = 0;
    const auto& lt = tokens.back();
    const auto [p, ec] = std::from_chars(lt.data(), lt.data() + lt.size(), y);
    if (ec != std::errc() || p != lt.data() + lt.size())
      throw InvalidInput(where + ": bad label '" + std::string(lt) + "'");
    d.labels.push_back(y);
    max_label = std::max(max_label, y);
  }
  d.num_classes = num_classes != 0 ? num_classes : static_cast<std::size_t>(max_label) + 1;
  d.validate();
  return d;
}

}  // namespace fedobd
