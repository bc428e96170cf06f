#include "fedobd/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>

#include "fedobd/aggregate.hpp"
#include "fedobd/errors.hpp"
#include "fedobd/quant.hpp"

namespace fedobd {

const char* to_string(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::kFedAvg: return "fedavg";
    case Algorithm::kFedObd: return "fedobd";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& text) {
  if (text == "fedavg") return Algorithm::kFedAvg;
  if (text == "fedobd") return Algorithm::kFedObd;
  throw InvalidInput("algorithm: expected fedavg or fedobd, got '" + text + "'");
}

RunConfig RunConfig::normalized() const {
  RunConfig c = *this;
  if (c.algorithm == Algorithm::kFedAvg) {
    c.lambda = 0.0;
    c.quant_weight.reset();
  }
  return c;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw InvalidInput(field + ": " + why); };
  if (n_clients == 0) fail("n_clients", "must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda", "must lie in [0, 1]");
  if (quant_weight && !(*quant_weight > 0.0 && *quant_weight <= 1.0)) fail("quant_weight", "must lie in (0, 1]");
  if (stage1_rounds == 0) fail("stage1_rounds", "must be positive");
  if (stage1_epochs == 0) fail("stage1_epochs", "must be positive");
  if (stage2_epochs == 0) fail("stage2_epochs", "must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr", "must be positive and finite");
  if (batch_size == 0) fail("batch_size", "must be positive");
  if (bandwidth_bytes_per_sec && *bandwidth_bytes_per_sec == 0) fail("bandwidth_bytes_per_sec", "must be positive");
  if (layer_widths.size() < 2) fail("layer_widths", "needs at least input and output widths");
  if (std::find(layer_widths.begin(), layer_widths.end(), std::size_t{0}) != layer_widths.end())
    fail("layer_widths", "widths must be positive");
  if (data.source == DataConfig::Source::kBlobs) {
    if (data.num_classes < 2) fail("num_classes", "must be at least 2");
    if (data.num_classes != layer_widths.back()) fail("num_classes", "must equal the output width");
    if (data.samples_per_client == 0) fail("samples_per_client", "must be positive");
    if (data.test_samples == 0) fail("test_samples", "must be positive");
    if (!(data.spread > 0.0)) fail("spread", "must be positive");
  } else {
    if (data.train_file.empty()) fail("train_file", "required when dataset = file");
    if (data.test_file.empty()) fail("test_file", "required when dataset = file");
  }
}

std::uint64_t RoundRecord::round_bytes() const {
  std::uint64_t n = 0;
  for (const auto b : upload_bytes) n += b;
  for (const auto b : download_bytes) n += b;
  return n;
}

double wall_clock_estimate(double total_bytes, double bytes_per_sec) {
  if (!(bytes_per_sec > 0.0)) throw InvalidInput("bandwidth must be positive");
  return total_bytes / bytes_per_sec;
}

std::uint32_t ModelLog::store(std::uint32_t round, BlockedModel model) {
  if (!entries_.empty() && round <= entries_.back().first)
    throw InvalidInput("model log rounds must increase (got " + std::to_string(round) + " after " +
                       std::to_string(entries_.back().first) + ")");
  model.set_round(round);
  entries_.emplace_back(round, std::move(model));
  while (!entries_.empty() && entries_.front().first + 1 < round) entries_.pop_front();
  return round;
}

const BlockedModel& ModelLog::load(std::uint32_t round) const {
  for (const auto& [r, m] : entries_)
    if (r == round) return m;
  throw MissingState("no model stored for round " + std::to_string(round));
}

std::string client_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "client_%02zu", index);
  return buf;
}

FederatedData build_data(const RunConfig& cfg) {
  FederatedData out;
  Rng split_rng = Rng::derive(cfg.seed, "split", 0, "");
  if (cfg.data.source == DataConfig::Source::kBlobs) {
    BlobSpec spec;
    spec.num_classes = cfg.data.num_classes;
    spec.dim = cfg.layer_widths.front();
    spec.center_scale = cfg.data.center_scale;
    spec.spread = cfg.data.spread;
    spec.samples = cfg.data.samples_per_client * cfg.n_clients;
    Rng centers = Rng::derive(cfg.seed, "blob-centers", 0, "");
    Rng train_samples = Rng::derive(cfg.seed, "train-samples", 0, "");
    const Dataset train = make_blobs(spec, centers, train_samples);
    spec.samples = cfg.data.test_samples;
    Rng test_centers = Rng::derive(cfg.seed, "blob-centers", 0, "");
    Rng test_samples = Rng::derive(cfg.seed, "test-samples", 0, "");
    out.test = make_blobs(spec, test_centers, test_samples);
    out.clients = split_iid(train, cfg.n_clients, split_rng);
  } else {
    const std::size_t classes = cfg.layer_widths.back();
    const Dataset train = load_delimited(cfg.data.train_file, classes);
    out.test = load_delimited(cfg.data.test_file, classes);
    out.clients = split_iid(train, cfg.n_clients, split_rng);
  }
  return out;
}

BlockedModel apply_distribution(const BlockedModel& prev_global, const RoundMessage& msg) {
  switch (msg.kind) {
    case PayloadKind::kFullModel: {
      BlockedModel m(msg.blocks, msg.round);
      if (prev_global.block_count() != 0) require_compatible(prev_global, m);
      return m;
    }
    case PayloadKind::kBlockValues:
      return apply_blocks(prev_global, msg.blocks).with_round(msg.round);
    case PayloadKind::kBlockDeltas: {
      std::vector<Block> decoded;
      for (const auto& d : msg.deltas) decoded.push_back(decode_delta(prev_global.block(d.block_id), d));
      return apply_blocks(prev_global, decoded).with_round(msg.round);
    }
  }
  throw InvalidInput("unknown payload kind");
}

namespace {

struct ClientState {
  std::string id;
  Dataset data;
  Rng train_rng;
  ModelLog log;
};

struct Upload {
  std::vector<std::uint8_t> bytes;
  std::optional<ContributionLogEntry> record;
};

/// Builds the outgoing message for `cur` relative to `prev` under the run's algorithm.
RoundMessage make_message(const RunConfig& cfg, std::uint32_t round, const std::string& sender,
                          const BlockedModel& prev, const BlockedModel& cur, std::uint32_t sample_count,
                          std::optional<ContributionLogEntry>& record, const char* purpose) {
  RoundMessage msg;
  msg.round = round;
  msg.sender = sender;
  msg.sample_count = sample_count;
  if (cfg.algorithm == Algorithm::kFedAvg) {
    msg.kind = PayloadKind::kFullModel;
    msg.blocks = cur.blocks();
    return msg;
  }
  auto sel = select_with_scores(prev, cur, DropoutConfig{cfg.lambda});
  record = contribution_record(round, sender, sel.scores, sel.retained_ids());
  if (cfg.quant_weight) {
    msg.kind = PayloadKind::kBlockDeltas;
    Rng rng = Rng::derive(cfg.seed, purpose, round, sender);
    for (const auto& b : sel.retained)
      msg.deltas.push_back(encode_delta(prev.block(b.block_id), b, *cfg.quant_weight, rng));
  } else {
    msg.kind = PayloadKind::kBlockValues;
    msg.blocks = std::move(sel.retained);
  }
  return msg;
}

std::string where(std::uint32_t round, const std::string& sender) {
  return "round " + std::to_string(round) + ", sender " + sender + ": ";
}

}  // namespace

RunReport run_federated(const RunConfig& raw_cfg, const RoundObserver& observer) {
  const RunConfig cfg = raw_cfg.normalized();
  cfg.validate();

  RunReport report;
  report.config = cfg;
  auto data = build_data(cfg);
  const Dataset& test = data.test;

  std::vector<ClientState> clients;
  for (std::size_t i = 0; i < cfg.n_clients; ++i) {
    const auto id = client_id(i);
    clients.push_back({id, std::move(data.clients[i]), Rng::derive(cfg.seed, "train", 0, id), {}});
    report.client_ids.push_back(id);
  }

  Channel channel(cfg.bandwidth_bytes_per_sec);
  ModelLog server_log;

  const MLPSpec spec{cfg.layer_widths, Activation::kRelu, cfg.seed};
  BlockedModel global = init_model(spec, cfg.block_rules);
  report.model_params = global.total_params();
  report.raw_model_bytes = 4 * static_cast<std::uint64_t>(global.total_params());

  // Delivers one serialized distribution to every client and checks that each
  // reconstruction matches the server's copy bit for bit.
  auto distribute = [&](const RoundMessage& msg, RoundRecord& rec) {
    const auto bytes = serialize(msg);
    for (auto& c : clients) {
      const auto d = channel.send(kServerId, c.id, bytes);
      rec.download_bytes.push_back(d.bytes);
      rec.simulated_seconds += d.seconds;
      const auto env = channel.receive_from(c.id, kServerId);
      const auto received = deserialize(env->bytes);
      const BlockedModel prev = msg.round == 0 ? BlockedModel{} : c.log.load(msg.round - 1);
      BlockedModel local;
      try {
        local = apply_distribution(prev, received);
      } catch (const IncompatibleStructure& e) {
        throw IncompatibleStructure(where(msg.round, kServerId) + e.what());
      }
      if (!(local == global))
        throw Error(where(msg.round, kServerId) + "client " + c.id + " reconstruction diverged from the server");
      c.log.store(msg.round, std::move(local));
    }
  };

  auto finish_round = [&](RoundRecord& rec) {
    rec.global = evaluate(global, test);
    if (observer) observer(rec, global);
    report.rounds.push_back(std::move(rec));
  };

  {
    RoundRecord rec;
    rec.round = 0;
    rec.stage = 0;
    rec.upload_bytes.assign(clients.size(), 0);
    RoundMessage msg;
    msg.round = 0;
    msg.sender = kServerId;
    msg.kind = PayloadKind::kFullModel;
    msg.blocks = global.blocks();
    server_log.store(0, global);
    distribute(msg, rec);
    finish_round(rec);
  }

  auto step = [&](std::uint32_t round, int stage, std::size_t epochs) {
    RoundRecord rec;
    rec.round = round;
    rec.stage = stage;
    rec.local_epochs = epochs;
    const TrainOptions opts{epochs, cfg.lr, cfg.batch_size};

    // Local training and upload encoding are independent per client.
    std::vector<std::future<Upload>> work;
    for (auto& c : clients) {
      work.push_back(std::async(std::launch::async, [&cfg, &c, round, opts] {
        try {
          const BlockedModel& reference = c.log.load(round - 1);
          const BlockedModel local = local_train(reference, c.data, opts, c.train_rng).with_round(round);
          Upload up;
          const auto msg = make_message(cfg, round, c.id, reference, local,
                                        static_cast<std::uint32_t>(c.data.sample_count()), up.record, "upload");
          up.bytes = serialize(msg);
          return up;
        } catch (const IncompatibleStructure& e) {
          throw IncompatibleStructure(where(round, c.id) + e.what());
        }
      }));
    }
    std::vector<Upload> uploads;
    for (auto& f : work) uploads.push_back(f.get());

    for (std::size_t i = 0; i < clients.size(); ++i) {
      const auto d = channel.send(clients[i].id, kServerId, std::move(uploads[i].bytes));
      rec.upload_bytes.push_back(d.bytes);
      rec.simulated_seconds += d.seconds;
      if (uploads[i].record) report.contributions.append(std::move(*uploads[i].record));
    }

    const BlockedModel& prev_global = server_log.load(round - 1);
    std::vector<WeightedModel> reconstructed;
    for (const auto& c : clients) {
      const auto env = channel.receive_from(kServerId, c.id);
      const auto msg = deserialize(env->bytes);
      if (msg.round != round || msg.sender != c.id)
        throw Error(where(round, c.id) + "unexpected upload header (round " + std::to_string(msg.round) +
                    ", sender " + msg.sender + ")");
      try {
        BlockedModel model;
        if (msg.kind == PayloadKind::kFullModel) {
          model = BlockedModel(msg.blocks, round);
          require_compatible(prev_global, model);
        } else {
          ClientUpdate update{c.id, round, msg.sample_count, msg.deltas, msg.blocks};
          model = reconstruct_client(prev_global, update);
        }
        reconstructed.push_back({c.id, std::move(model), msg.sample_count});
      } catch (const IncompatibleStructure& e) {
        throw IncompatibleStructure(where(round, c.id) + e.what());
      }
    }
    const BlockedModel aggregated = fedavg(reconstructed).with_round(round);

    std::optional<ContributionLogEntry> server_record;
    const RoundMessage out = make_message(cfg, round, kServerId, prev_global, aggregated, 0, server_record, "download");
    if (server_record) {
      rec.distributed_blocks = server_record->retained_ids;
      report.contributions.append(std::move(*server_record));
    } else {
      for (const auto& b : aggregated.blocks()) rec.distributed_blocks.push_back(b.block_id);
    }
    // The server keeps exactly what the clients will reconstruct.
    global = apply_distribution(prev_global, out);
    server_log.store(round, global);
    distribute(out, rec);
    finish_round(rec);
  };

  std::uint32_t round = 0;
  double best_loss = report.rounds.back().global.loss;
  std::size_t flat_rounds = 0;
  for (std::size_t r = 0; r < cfg.stage1_rounds; ++r) {
    step(++round, 1, cfg.stage1_epochs);
    ++report.stage1_rounds_run;
    if (cfg.stage1_plateau) {
      const double loss = report.rounds.back().global.loss;
      flat_rounds = (best_loss - loss < 1e-4) ? flat_rounds + 1 : 0;
      best_loss = std::min(best_loss, loss);
      if (flat_rounds >= 3) break;
    }
  }
  // Stage 2: one round of stage2_epochs local epochs, aggregated after each epoch.
  for (std::size_t e = 0; e < cfg.stage2_epochs; ++e) step(++round, 2, 1);

  for (const auto& rec : report.rounds) {
    for (const auto b : rec.upload_bytes) report.total_upload_bytes += b;
    for (const auto b : rec.download_bytes) report.total_download_bytes += b;
  }
  report.total_bytes = report.total_upload_bytes + report.total_download_bytes;
  report.transport_bytes = channel.total_bytes();
  if (report.transport_bytes != report.total_bytes)
    throw Error("byte accounting mismatch: records sum to " + std::to_string(report.total_bytes) +
                ", channel counted " + std::to_string(report.transport_bytes));
  if (cfg.bandwidth_bytes_per_sec)
    report.estimated_seconds =
        wall_clock_estimate(static_cast<double>(report.total_bytes), static_cast<double>(*cfg.bandwidth_bytes_per_sec));
  report.final_metrics = report.rounds.back().global;
  return report;
}

}  // namespace fedobd
