#include <gtest/gtest.h>

#include <fedobd/errors.hpp>
#include <fedobd/orchestrator.hpp>
#include <fedobd/report.hpp>

namespace fedobd {
namespace {

RunConfig small_config() {
  RunConfig c;
  c.n_clients = 4;
  c.stage1_rounds = 5;
  c.stage1_epochs = 1;
  c.stage2_epochs = 1;
  c.layer_widths = {8, 16, 3};
  c.data.samples_per_client = 150;
  c.data.test_samples = 200;
  c.seed = 3;
  return c;
}

/// Upper bound on the bytes of a delta upload from its retained blocks:
/// one byte per code plus per-block and per-tensor framing.
std::uint64_t delta_upload_bound(const BlockedModel& model, const std::string& sender,
                                 const std::vector<std::string>& retained) {
  std::uint64_t n = header_size(sender);
  for (const auto& id : retained) {
    const auto& b = model.block(id);
    n += 2 + id.size() + 4;
    for (const auto& t : b.tensors) n += 4 + 4 + 1 + 4 + t.values.size();
  }
  return n;
}

std::size_t retained_params(const BlockedModel& model, const std::vector<std::string>& retained) {
  std::size_t n = 0;
  for (const auto& id : retained) n += model.block(id).param_count();
  return n;
}

TEST(Orchestrator, DegenerateFedObdMatchesFedAvg) {
  auto obd = small_config();
  obd.algorithm = Algorithm::kFedObd;
  obd.lambda = 0.0;
  obd.quant_weight.reset();
  auto avg = obd;
  avg.algorithm = Algorithm::kFedAvg;

  std::vector<BlockedModel> a, b;
  const auto ra = run_federated(obd, [&](const RoundRecord&, const BlockedModel& g) { a.push_back(g); });
  const auto rb = run_federated(avg, [&](const RoundRecord&, const BlockedModel& g) { b.push_back(g); });
  ASSERT_EQ(a.size(), 7u);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]) << "round " << i;
  EXPECT_EQ(ra.final_metrics, rb.final_metrics);
}

TEST(Orchestrator, SingleClientFedAvgIsCentralizedTraining) {
  auto cfg = small_config();
  cfg.n_clients = 1;
  cfg.algorithm = Algorithm::kFedAvg;
  cfg.stage1_rounds = 3;
  cfg.stage1_epochs = 2;
  cfg.stage2_epochs = 2;
  BlockedModel last;
  run_federated(cfg, [&](const RoundRecord&, const BlockedModel& g) { last = g; });

  const auto data = build_data(cfg);
  Rng rng = Rng::derive(cfg.seed, "train", 0, client_id(0));
  const auto init = init_model({cfg.layer_widths, Activation::kRelu, cfg.seed});
  const auto central = local_train(init, data.clients[0], {3 * 2 + 2, cfg.lr, cfg.batch_size}, rng);
  EXPECT_EQ(last.blocks(), central.blocks());
}

TEST(Orchestrator, UploadRespectsBudgetAndCodeWidth) {
  auto cfg = small_config();
  cfg.layer_widths = {10, 30, 20, 3};  // 330 + 620 + 63 = 1013 parameters
  cfg.lambda = 0.5;
  cfg.quant_weight = 0.01;
  cfg.stage1_rounds = 3;
  const auto report = run_federated(cfg);
  ASSERT_EQ(report.model_params, 1013u);
  const auto model = init_model({cfg.layer_widths, Activation::kRelu, cfg.seed});

  std::size_t checked = 0;
  for (const auto& e : report.contributions.entries()) {
    if (e.sender == kServerId) continue;
    EXPECT_LE(retained_params(model, e.retained_ids), 506u);
    const auto& rec = report.rounds[e.round];
    const auto idx = static_cast<std::size_t>(std::find(report.client_ids.begin(), report.client_ids.end(), e.sender) -
                                              report.client_ids.begin());
    EXPECT_LE(rec.upload_bytes[idx], delta_upload_bound(model, e.sender, e.retained_ids));
    EXPECT_LT(rec.upload_bytes[idx], report.raw_model_bytes / 2);
    ++checked;
  }
  EXPECT_EQ(checked, 4u * 4u);
}

TEST(Orchestrator, FedObdUsesFewerBytesThanFedAvg) {
  auto obd = small_config();
  obd.lambda = 0.3;
  obd.quant_weight = 0.01;
  auto avg = obd;
  avg.algorithm = Algorithm::kFedAvg;
  const auto ro = run_federated(obd);
  const auto ra = run_federated(avg);
  EXPECT_LT(ro.total_bytes, ra.total_bytes);

  const auto model = init_model({obd.layer_widths, Activation::kRelu, obd.seed});
  for (const auto& e : ro.contributions.entries()) {
    if (e.sender == kServerId || ro.rounds[e.round].stage != 1) continue;
    const auto idx = static_cast<std::size_t>(std::find(ro.client_ids.begin(), ro.client_ids.end(), e.sender) -
                                              ro.client_ids.begin());
    const double eps = static_cast<double>(delta_upload_bound(model, e.sender, e.retained_ids)) -
                       static_cast<double>(retained_params(model, e.retained_ids));
    EXPECT_LE(static_cast<double>(ro.rounds[e.round].upload_bytes[idx]),
              0.7 * 0.25 * static_cast<double>(ro.raw_model_bytes) + eps);
  }
}

TEST(Orchestrator, AccountingAndDistributionInvariants) {
  auto cfg = small_config();
  cfg.bandwidth_bytes_per_sec = 1 << 20;
  const auto r = run_federated(cfg);
  EXPECT_EQ(r.transport_bytes, r.total_bytes);
  ASSERT_EQ(r.rounds.size(), 1 + cfg.stage1_rounds + cfg.stage2_epochs);
  EXPECT_EQ(r.rounds[0].stage, 0);
  EXPECT_EQ(r.rounds[0].round_bytes(), 4 * r.rounds[0].download_bytes[0]);
  double seconds = 0;
  for (const auto& rec : r.rounds) {
    seconds += rec.simulated_seconds;
    // Every client receives the same distribution.
    for (const auto b : rec.download_bytes) EXPECT_EQ(b, rec.download_bytes[0]);
  }
  ASSERT_TRUE(r.estimated_seconds);
  EXPECT_NEAR(*r.estimated_seconds, seconds, 1e-9);
  EXPECT_EQ(r.rounds.back().stage, 2);
}

TEST(Orchestrator, DeterministicForSeed) {
  const auto cfg = small_config();
  const auto a = run_federated(cfg);
  const auto b = run_federated(cfg);
  EXPECT_EQ(report_to_json(a, "c.log"), report_to_json(b, "c.log"));
  auto other = cfg;
  other.seed = 4;
  EXPECT_NE(report_to_json(run_federated(other), "c.log"), report_to_json(a, "c.log"));
}

TEST(Orchestrator, PlateauStopsStageOneEarly) {
  auto cfg = small_config();
  cfg.stage1_rounds = 60;
  cfg.stage1_plateau = true;
  cfg.lr = 1e-6;  // barely moves, so the loss flattens at once
  const auto r = run_federated(cfg);
  EXPECT_EQ(r.stage1_rounds_run, 3u);
  EXPECT_EQ(r.rounds.size(), 1 + 3 + cfg.stage2_epochs);
}

TEST(Orchestrator, RejectsInvalidConfig) {
  auto cfg = small_config();
  cfg.data.num_classes = 4;
  EXPECT_THROW(run_federated(cfg), InvalidInput);
  cfg = small_config();
  cfg.n_clients = 0;
  EXPECT_THROW(run_federated(cfg), InvalidInput);
}

TEST(WallClock, TransferTimeExamples) {
  const double mb = 1024.0 * 1024.0;
  EXPECT_DOUBLE_EQ(wall_clock_estimate(2 * mb, 2 * mb), 1.0);
  EXPECT_NEAR(wall_clock_estimate(368407.60 * mb, 2 * mb) / 3600.0, 51.17, 0.01);
  EXPECT_NEAR(wall_clock_estimate(104188.50 * mb, 2 * mb) / 3600.0, 14.47, 0.01);
  EXPECT_THROW(wall_clock_estimate(1, 0), InvalidInput);
}

TEST(ModelLogTest, KeepsTwoMostRecentRounds) {
  ModelLog log;
  const BlockedModel m({{"b", {"linear"}, {{"w", {1}, {1}}}}});
  log.store(0, m);
  log.store(1, m);
  EXPECT_EQ(log.load(0).round(), 0u);
  log.store(2, m);
  EXPECT_EQ(log.size(), 2u);
  EXPECT_THROW(log.load(0), MissingState);
  EXPECT_EQ(log.load(2).round(), 2u);
  EXPECT_THROW(log.load(9), MissingState);
  EXPECT_THROW(log.store(2, m), InvalidInput);
}

TEST(Distribution, AppliesEveryPayloadKind) {
  const BlockedModel prev({{"a", {"linear"}, {{"w", {2}, {1, 2}}}}, {"b", {"linear"}, {{"w", {1}, {5}}}}});
  RoundMessage values;
  values.round = 4;
  values.kind = PayloadKind::kBlockValues;
  values.blocks = {{"b", {"linear"}, {{"w", {1}, {6}}}}};
  const auto got = apply_distribution(prev, values);
  EXPECT_EQ(got.round(), 4u);
  EXPECT_EQ(got.block("b").tensors[0].values[0], 6.0f);
  EXPECT_EQ(got.block("a"), prev.block("a"));

  RoundMessage deltas;
  deltas.kind = PayloadKind::kBlockDeltas;
  deltas.deltas = {{"a", {{0.5f, 0.0f, 7, {0, 0}}}}};
  EXPECT_EQ(apply_distribution(prev, deltas).block("a").tensors[0].values, (std::vector<float>{1.5f, 2.5f}));

  RoundMessage wrong;
  wrong.kind = PayloadKind::kFullModel;
  wrong.blocks = {{"z", {"linear"}, {{"w", {1}, {0}}}}};
  EXPECT_THROW(apply_distribution(prev, wrong), IncompatibleStructure);
}

}  // namespace
}  // namespace fedobd
