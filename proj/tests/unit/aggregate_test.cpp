#include <gtest/gtest.h>

#include <algorithm>

#include <fedobd/aggregate.hpp>
#include <fedobd/errors.hpp>

#include "test_support.hpp"

namespace fedobd {
namespace {

BlockedModel scalar_model(float a, float b) {
  return BlockedModel({{"A", {"linear"}, {{"w", {1}, {a}}}}, {"B", {"linear"}, {{"w", {1}, {b}}}}});
}

float value(const BlockedModel& m, const std::string& id) { return m.block(id).tensors[0].values[0]; }

TEST(Reconstruct, DeltaOnOneBlockLeavesOthersBitIdentical) {
  Rng rng(1);
  const auto prev = scalar_model(0.1f, 0.2f);
  const auto cur = scalar_model(0.1f, 0.7f);
  ClientUpdate u{"c", 1, 10, {encode_delta(prev.block("B"), cur.block("B"), 0.01, rng)}, {}};
  const auto out = reconstruct_client(prev, u);
  EXPECT_EQ(value(out, "A"), 0.1f);
  EXPECT_NEAR(value(out, "B"), 0.7f, 1e-6);
}

TEST(Reconstruct, RawBlocksAndEmptyUpdate) {
  const auto prev = scalar_model(1, 2);
  const ClientUpdate raw{"c", 1, 5, {}, {scalar_model(9, 9).block("A")}};
  EXPECT_EQ(reconstruct_client(prev, raw), scalar_model(9, 2));
  const ClientUpdate empty{"c", 1, 5, {}, {}};
  EXPECT_EQ(reconstruct_client(prev, empty), prev);
}

TEST(Reconstruct, RejectsUnknownBlocksAndBadUpdates) {
  const auto prev = scalar_model(1, 2);
  Block z{"Z", {"linear"}, {{"w", {1}, {0}}}};
  EXPECT_THROW(reconstruct_client(prev, ClientUpdate{"c", 1, 5, {}, {z}}), IncompatibleStructure);
  EXPECT_THROW(reconstruct_client(prev, ClientUpdate{"c", 1, 0, {}, {}}), InvalidInput);
  const auto a = prev.block("A");
  EXPECT_THROW(reconstruct_client(prev, ClientUpdate{"c", 1, 5, {}, {a, a}}), InvalidInput);
}

TEST(FedAvg, SampleWeightedExample) {
  const std::vector<WeightedModel> in = {{"c1", scalar_model(0, 0), 1}, {"c2", scalar_model(4, 4), 3}};
  const auto out = fedavg(in);
  EXPECT_EQ(value(out, "A"), 3.0f);
}

TEST(FedAvg, EqualWeightsGiveMean) {
  const std::vector<WeightedModel> in = {{"c1", scalar_model(2, 1), 7}, {"c2", scalar_model(4, 2), 7}};
  const auto out = fedavg(in);
  EXPECT_EQ(value(out, "A"), 3.0f);
  EXPECT_EQ(value(out, "B"), 1.5f);
}

TEST(FedAvg, IdenticalModelsAreFixedPoint) {
  Rng rng(2);
  for (int i = 0; i < 30; ++i) {
    const auto m = testing::random_model(rng);
    std::vector<WeightedModel> in;
    for (int c = 0; c < 4; ++c) in.push_back({"c" + std::to_string(c), m, 1 + rng.below(100)});
    EXPECT_EQ(fedavg(in), m);
  }
}

TEST(FedAvg, ConvexAndOrderInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto base = testing::random_model(rng);
    std::vector<WeightedModel> in;
    const std::size_t k = 1 + rng.below(6);
    for (std::size_t c = 0; c < k; ++c)
      in.push_back({"client_" + std::to_string(c), testing::perturb(base, rng), 1 + rng.below(1000)});
    const auto out = fedavg(in);
    for (std::size_t b = 0; b < out.block_count(); ++b)
      for (std::size_t t = 0; t < out.blocks()[b].tensors.size(); ++t)
        for (std::size_t e = 0; e < out.blocks()[b].tensors[t].values.size(); ++e) {
          float lo = std::numeric_limits<float>::max(), hi = -lo;
          for (const auto& w : in) {
            lo = std::min(lo, w.model.blocks()[b].tensors[t].values[e]);
            hi = std::max(hi, w.model.blocks()[b].tensors[t].values[e]);
          }
          const float v = out.blocks()[b].tensors[t].values[e];
          EXPECT_GE(v, lo);
          EXPECT_LE(v, hi);
        }
    auto shuffled = in;
    rng.shuffle(std::span<WeightedModel>(shuffled));
    EXPECT_EQ(fedavg(shuffled), out);
  }
}

TEST(FedAvg, RejectsEmptyDuplicateZeroAndIncompatible) {
  EXPECT_THROW(fedavg(std::vector<WeightedModel>{}), InvalidInput);
  const auto m = scalar_model(1, 1);
  EXPECT_THROW(fedavg(std::vector<WeightedModel>{{"c", m, 1}, {"c", m, 1}}), InvalidInput);
  EXPECT_THROW(fedavg(std::vector<WeightedModel>{{"c", m, 0}}), InvalidInput);
  const BlockedModel other({{"A", {"linear"}, {{"w", {2}, {1, 1}}}}});
  EXPECT_THROW(fedavg(std::vector<WeightedModel>{{"c", m, 1}, {"d", other, 1}}), IncompatibleStructure);
}

}  // namespace
}  // namespace fedobd
