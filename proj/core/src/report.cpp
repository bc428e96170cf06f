#include "fedobd/report.hpp"

#include <charconv>

#include <json.hpp>

#include "fedobd/errors.hpp"

namespace fedobd {

using nlohmann::ordered_json;

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
  return std::string(buf, res.ptr);
}

namespace {

ordered_json metrics_json(const Metrics& m) {
  return {{"loss", m.loss}, {"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}};
}

Metrics metrics_from(const nlohmann::json& j) {
  return {j.at("loss").get<double>(), j.at("accuracy").get<double>(), j.at("macro_f1").get<double>()};
}

ordered_json config_json(const RunConfig& c) {
  ordered_json j;
  j["algorithm"] = to_string(c.algorithm);
  j["n_clients"] = c.n_clients;
  j["lambda"] = c.lambda;
  j["quant_weight"] = c.quant_weight ? ordered_json(*c.quant_weight) : ordered_json(nullptr);
  j["stage1_rounds"] = c.stage1_rounds;
  j["stage1_epochs"] = c.stage1_epochs;
  j["stage2_epochs"] = c.stage2_epochs;
  j["stage1_plateau"] = c.stage1_plateau;
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["bandwidth_bytes_per_sec"] =
      c.bandwidth_bytes_per_sec ? ordered_json(*c.bandwidth_bytes_per_sec) : ordered_json(nullptr);
  j["layer_widths"] = c.layer_widths;
  j["block_rules"] = c.block_rules.patterns;
  if (c.data.source == DataConfig::Source::kBlobs) {
    j["dataset"] = "blobs";
    j["num_classes"] = c.data.num_classes;
    j["samples_per_client"] = c.data.samples_per_client;
    j["test_samples"] = c.data.test_samples;
    j["center_scale"] = c.data.center_scale;
    j["spread"] = c.data.spread;
  } else {
    j["dataset"] = "file";
    j["train_file"] = c.data.train_file.generic_string();
    j["test_file"] = c.data.test_file.generic_string();
  }
  return j;
}

}  // namespace

std::string report_to_json(const RunReport& r, const std::string& contribution_log_name) {
  ordered_json j;
  j["format"] = "fedobd-report/1";
  j["config"] = config_json(r.config);
  j["clients"] = r.client_ids;
  j["model_params"] = r.model_params;
  j["raw_model_bytes"] = r.raw_model_bytes;
  j["stage1_rounds_run"] = r.stage1_rounds_run;
  auto& rounds = j["rounds"] = ordered_json::array();
  for (const auto& rec : r.rounds) {
    ordered_json o;
    o["round"] = rec.round;
    o["stage"] = rec.stage;
    o["local_epochs"] = rec.local_epochs;
    o["upload_bytes"] = rec.upload_bytes;
    o["download_bytes"] = rec.download_bytes;
    o["distributed_blocks"] = rec.distributed_blocks;
    o["simulated_seconds"] = rec.simulated_seconds;
    o["metrics"] = metrics_json(rec.global);
    rounds.push_back(std::move(o));
  }
  ordered_json totals;
  totals["upload_bytes"] = r.total_upload_bytes;
  totals["download_bytes"] = r.total_download_bytes;
  totals["total_bytes"] = r.total_bytes;
  totals["transport_bytes"] = r.transport_bytes;
  totals["total_mb"] = static_cast<double>(r.total_bytes) / (1024.0 * 1024.0);
  totals["estimated_seconds"] = r.estimated_seconds ? ordered_json(*r.estimated_seconds) : ordered_json(nullptr);
  totals["estimate_note"] = "transfer-bound: total bytes / bandwidth cap, compute time excluded";
  j["totals"] = std::move(totals);
  j["final_metrics"] = metrics_json(r.final_metrics);
  j["contribution_log"] = contribution_log_name;
  j["contribution_records"] = r.contributions.entries().size();
  return j.dump(2) + "\n";
}

ReportSummary parse_report(const std::string& json_text) {
  try {
    const auto j = nlohmann::json::parse(json_text);
    if (j.at("format").get<std::string>() != "fedobd-report/1")
      throw InvalidInput("unsupported report format '" + j.at("format").get<std::string>() + "'");
    ReportSummary s;
    s.algorithm = j.at("config").at("algorithm").get<std::string>();
    s.contribution_log = j.at("contribution_log").get<std::string>();
    s.raw_model_bytes = j.at("raw_model_bytes").get<std::uint64_t>();
    s.total_bytes = j.at("totals").at("total_bytes").get<std::uint64_t>();
    for (const auto& o : j.at("rounds")) {
      RoundRecord rec;
      rec.round = o.at("round").get<std::uint32_t>();
      rec.stage = o.at("stage").get<int>();
      rec.local_epochs = o.at("local_epochs").get<std::size_t>();
      rec.upload_bytes = o.at("upload_bytes").get<std::vector<std::uint64_t>>();
      rec.download_bytes = o.at("download_bytes").get<std::vector<std::uint64_t>>();
      rec.distributed_blocks = o.at("distributed_blocks").get<std::vector<std::string>>();
      rec.simulated_seconds = o.at("simulated_seconds").get<double>();
      rec.global = metrics_from(o.at("metrics"));
      s.rounds.push_back(std::move(rec));
    }
    s.final_metrics = metrics_from(j.at("final_metrics"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed report: ") + e.what());
  }
}

std::string metrics_csv(const RunReport& r) {
  std::string out = "round,stage,local_epochs,upload_bytes,download_bytes,cumulative_bytes,loss,accuracy,macro_f1\n";
  std::uint64_t cumulative = 0;
  for (const auto& rec : r.rounds) {
    std::uint64_t up = 0, down = 0;
    for (const auto b : rec.upload_bytes) up += b;
    for (const auto b : rec.download_bytes) down += b;
    cumulative += up + down;
    out += std::to_string(rec.round) + "," + std::to_string(rec.stage) + "," + std::to_string(rec.local_epochs) +
           "," + std::to_string(up) + "," + std::to_string(down) + "," + std::to_string(cumulative) + "," +
           format_fixed(rec.global.loss, 6) + "," + format_fixed(rec.global.accuracy, 6) + "," +
           format_fixed(rec.global.macro_f1, 6) + "\n";
  }
  return out;
}

}  // namespace fedobd
