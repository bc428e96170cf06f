#include <benchmark/benchmark.h>

#include <fedobd/obd.hpp>
#include <fedobd/quant.hpp>
#include <fedobd/trainer.hpp>
#include <fedobd/transport.hpp>

namespace {

using namespace fedobd;

// A model with `blocks` blocks of `width` x `width` weights each.
BlockedModel square_model(std::size_t blocks, std::size_t width, Rng& rng) {
  std::vector<Block> out;
  for (std::size_t b = 0; b < blocks; ++b) {
    ParameterTensor w{"w", {width, width}, std::vector<float>(width * width)};
    for (auto& v : w.values) v = static_cast<float>(rng.uniform(-1, 1));
    out.push_back({"block_" + std::to_string(b), {"linear"}, {std::move(w)}});
  }
  return BlockedModel(std::move(out));
}

BlockedModel nudged(const BlockedModel& m, Rng& rng) {
  auto blocks = m.blocks();
  for (auto& b : blocks)
    for (auto& t : b.tensors)
      for (auto& v : t.values) v = static_cast<float>(v + rng.uniform(-0.01, 0.01));
  return BlockedModel(std::move(blocks));
}

void BM_SelectBlocks(benchmark::State& state) {
  Rng rng(1);
  const auto prev = square_model(static_cast<std::size_t>(state.range(0)), 64, rng);
  const auto cur = nudged(prev, rng);
  for (auto _ : state) benchmark::DoNotOptimize(select_with_scores(prev, cur, {0.3}));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(prev.total_params()));
}
BENCHMARK(BM_SelectBlocks)->Arg(4)->Arg(16)->Arg(64);

void BM_Quantize(benchmark::State& state) {
  Rng rng(2);
  std::vector<float> v(static_cast<std::size_t>(state.range(0)));
  for (auto& x : v) x = static_cast<float>(rng.normal());
  for (auto _ : state) benchmark::DoNotOptimize(quantize(v, 0.01, rng));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Quantize)->Arg(1 << 10)->Arg(1 << 16);

void BM_SerializeDeltas(benchmark::State& state) {
  Rng rng(3);
  const auto prev = square_model(8, 64, rng);
  const auto cur = nudged(prev, rng);
  RoundMessage msg;
  msg.sender = "client_00";
  msg.kind = PayloadKind::kBlockDeltas;
  for (std::size_t b = 0; b < prev.block_count(); ++b)
    msg.deltas.push_back(encode_delta(prev.blocks()[b], cur.blocks()[b], 0.01, rng));
  std::size_t bytes = 0;
  for (auto _ : state) {
    const auto out = serialize(msg);
    bytes = out.size();
    benchmark::DoNotOptimize(deserialize(out));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(bytes));
}
BENCHMARK(BM_SerializeDeltas);

void BM_LocalTrainEpoch(benchmark::State& state) {
  Rng centers(4), samples(5), train(6);
  const auto data = make_blobs({3, 8, 2000, 1.5, 1.0}, centers, samples);
  const auto model = init_model({{8, 32, 32, 3}, Activation::kRelu, 7});
  for (auto _ : state) benchmark::DoNotOptimize(local_train(model, data, {1, 0.05, 32}, train));
  state.SetItemsProcessed(state.iterations() * 2000);
}
BENCHMARK(BM_LocalTrainEpoch);

}  // namespace

BENCHMARK_MAIN();
