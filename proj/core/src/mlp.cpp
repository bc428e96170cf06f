#include "fedobd/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string_view>

#include "fedobd/errors.hpp"

namespace fedobd::mlp {

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string_view stem(std::string_view name) { return name.substr(0, name.rfind('.')); }

}  // namespace

Network Network::from_model(const BlockedModel& model) {
  std::vector<const ParameterTensor*> tensors;
  for (const auto& b : model.blocks())
    for (const auto& t : b.tensors) tensors.push_back(&t);
  if (tensors.empty() || tensors.size() % 2 != 0)
    throw InvalidInput("model is not a chain of dense layers (expected weight/bias pairs)");

  Network net;
  for (std::size_t i = 0; i < tensors.size(); i += 2) {
    const auto& w = *tensors[i];
    const auto& b = *tensors[i + 1];
    if (!ends_with(w.name, ".weight") || !ends_with(b.name, ".bias") || stem(w.name) != stem(b.name))
      throw InvalidInput("expected a weight/bias pair, got '" + w.name + "' and '" + b.name + "'");
    if (w.shape.size() != 2 || b.shape.size() != 1 || b.shape[0] != w.shape[0])
      throw InvalidInput("dense layer '" + std::string(stem(w.name)) + "' has inconsistent shapes");
    Dense d;
    d.out = w.shape[0];
    d.in = w.shape[1];
    if (!net.layers.empty() && net.layers.back().out != d.in)
      throw InvalidInput("dense layer '" + std::string(stem(w.name)) + "' input width does not match");
    d.weight.assign(w.values.begin(), w.values.end());
    d.bias.assign(b.values.begin(), b.values.end());
    net.layers.push_back(std::move(d));
  }
  return net;
}

BlockedModel Network::to_model(const BlockedModel& layout) const {
  std::vector<Block> blocks = layout.blocks();
  std::size_t layer = 0;
  bool weight_next = true;
  for (auto& b : blocks) {
    for (auto& t : b.tensors) {
      if (layer >= layers.size()) throw InvalidInput("layout has more tensors than the network");
      const auto& src = weight_next ? layers[layer].weight : layers[layer].bias;
      if (src.size() != t.values.size()) throw InvalidInput("layout tensor '" + t.name + "' size mismatch");
      std::transform(src.begin(), src.end(), t.values.begin(), [](double v) { return static_cast<float>(v); });
      if (!weight_next) ++layer;
      weight_next = !weight_next;
    }
  }
  return BlockedModel(std::move(blocks), layout.round());
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<double> Network::flatten() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (const auto& l : layers) {
    out.insert(out.end(), l.weight.begin(), l.weight.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

void Network::unflatten(std::span<const double> params) {
  if (params.size() != param_count()) throw InvalidInput("parameter vector size mismatch");
  std::size_t at = 0;
  for (auto& l : layers) {
    std::copy_n(params.begin() + at, l.weight.size(), l.weight.begin());
    at += l.weight.size();
    std::copy_n(params.begin() + at, l.bias.size(), l.bias.begin());
    at += l.bias.size();
  }
}

std::vector<double> Network::logits(std::span<const float> x) const {
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> z;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& l = layers[li];
    z.assign(l.out, 0.0);
    for (std::size_t o = 0; o < l.out; ++o) {
      double s = l.bias[o];
      const double* row = l.weight.data() + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) s += row[i] * a[i];
      z[o] = (li + 1 < layers.size()) ? std::max(0.0, s) : s;
    }
    a.swap(z);
  }
  return a;
}

double cross_entropy(std::span<const double> logits, std::uint32_t label) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (const double v : logits) sum += std::exp(v - m);
  return std::log(sum) + m - logits[label];
}

double loss_and_gradient(const Network& net, std::span<const float> features,
                         std::span<const std::uint32_t> labels, std::span<const std::size_t> indices,
                         std::vector<double>* grad) {
  const std::size_t depth = net.layers.size();
  const std::size_t dim = net.input_dim();
  if (grad) grad->assign(net.param_count(), 0.0);

  // offsets[l] = start of layer l's weights in the flat layout
  std::vector<std::size_t> offsets(depth);
  for (std::size_t l = 0, at = 0; l < depth; ++l) {
    offsets[l] = at;
    at += net.layers[l].weight.size() + net.layers[l].bias.size();
  }

  std::vector<std::vector<double>> acts(depth + 1);  // acts[0] = input, acts[l+1] = output of layer l
  std::vector<double> delta;
  std::vector<double> prev_delta;
  double total = 0.0;

  for (const std::size_t idx : indices) {
    acts[0].assign(features.begin() + idx * dim, features.begin() + (idx + 1) * dim);
    for (std::size_t l = 0; l < depth; ++l) {
      const auto& layer = net.layers[l];
      auto& out = acts[l + 1];
      out.assign(layer.out, 0.0);
      for (std::size_t o = 0; o < layer.out; ++o) {
        double s = layer.bias[o];
        const double* row = layer.weight.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) s += row[i] * acts[l][i];
        out[o] = (l + 1 < depth) ? std::max(0.0, s) : s;
      }
    }
    const auto& logits = acts[depth];
    const std::uint32_t y = labels[idx];
    total += cross_entropy(logits, y);
    if (!grad) continue;

    // dL/dlogits = softmax - onehot
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    delta.resize(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) sum += (delta[k] = std::exp(logits[k] - m));
    for (std::size_t k = 0; k < logits.size(); ++k) delta[k] /= sum;
    delta[y] -= 1.0;

    for (std::size_t l = depth; l-- > 0;) {
      const auto& layer = net.layers[l];
      const auto& input = acts[l];
      double* gw = grad->data() + offsets[l];
      double* gb = gw + layer.weight.size();
      for (std::size_t o = 0; o < layer.out; ++o) {
        gb[o] += delta[o];
        for (std::size_t i = 0; i < layer.in; ++i) gw[o * layer.in + i] += delta[o] * input[i];
      }
      if (l == 0) break;
      prev_delta.assign(layer.in, 0.0);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double* row = layer.weight.data() + o * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) prev_delta[i] += row[i] * delta[o];
      }
      // ReLU derivative; acts[l] is post-activation, positive iff pre-activation positive.
      for (std::size_t i = 0; i < layer.in; ++i)
        if (input[i] <= 0.0) prev_delta[i] = 0.0;
      delta.swap(prev_delta);
    }
  }
  return total;
}

}  // namespace fedobd::mlp
