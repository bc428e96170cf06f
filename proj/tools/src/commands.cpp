#include "fedobd_cli/commands.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#include <fedobd/errors.hpp>
#include <fedobd/obd.hpp>
#include <fedobd/orchestrator.hpp>
#include <fedobd/report.hpp>

#include "fedobd_cli/config.hpp"

namespace fedobd::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kReportFile = "report.json";
constexpr const char* kMetricsFile = "metrics.csv";
constexpr const char* kContributionFile = "contribution.log";
constexpr const char* kSummaryFile = "summary.txt";

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw fedobd::Error("cannot write " + path.string());
  f << contents;
  if (!f) throw fedobd::Error("failed writing " + path.string());
}

std::string pad(const std::string& s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

double to_mb(std::uint64_t bytes) { return static_cast<double>(bytes) / (1024.0 * 1024.0); }

std::string summary_text(const RunReport& r) {
  std::ostringstream s;
  s << "algorithm          " << to_string(r.config.algorithm) << "\n";
  s << "clients            " << r.config.n_clients << "\n";
  s << "model parameters   " << r.model_params << " (" << r.raw_model_bytes << " bytes raw)\n";
  s << "rounds             " << r.stage1_rounds_run << " stage-1 + " << r.config.stage2_epochs
    << " stage-2 aggregations\n";
  s << "total bytes        " << r.total_bytes << " (upload " << r.total_upload_bytes << ", download "
    << r.total_download_bytes << ")\n";
  s << "total MB           " << format_fixed(to_mb(r.total_bytes), 4) << "\n";
  if (r.estimated_seconds)
    s << "est. hours at cap  " << format_fixed(*r.estimated_seconds / 3600.0, 4) << " ("
      << *r.config.bandwidth_bytes_per_sec << " bytes/s, transfer only)\n";
  else
    s << "est. hours at cap  n/a (no bandwidth cap configured)\n";
  s << "final accuracy     " << format_fixed(r.final_metrics.accuracy, 4) << "\n";
  s << "final macro F1     " << format_fixed(r.final_metrics.macro_f1, 4) << "\n";
  return s.str();
}

RunReport execute(const RunConfig& run, const fs::path& dir) {
  fs::create_directories(dir);
  RunReport report = run_federated(run);
  write_file(dir / kReportFile, report_to_json(report, kContributionFile));
  write_file(dir / kMetricsFile, metrics_csv(report));
  std::ostringstream log;
  report.contributions.write(log);
  write_file(dir / kContributionFile, log.str());
  write_file(dir / kSummaryFile, summary_text(report));
  return report;
}

ExperimentConfig load(const RunOptions& opts) {
  auto overrides = opts.overrides;
  if (opts.seed) overrides.push_back("seed=" + std::to_string(*opts.seed));
  auto cfg = load_config(opts.config_path, overrides);
  if (opts.out_dir) cfg.output_dir = *opts.out_dir;
  return cfg;
}

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = load(opts);
    const auto report = execute(cfg.run, cfg.output_dir);
    out << summary_text(report);
    out << "wrote " << (cfg.output_dir / kReportFile).string() << "\n";
    return kExitOk;
  });
}

int cmd_compare(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = load(opts);
    if (cfg.variants.size() < 2)
      throw ConfigError("compare needs at least two variants, config lists " + std::to_string(cfg.variants.size()));

    struct Row {
      std::string name;
      std::string algorithm;
      std::uint64_t bytes;
      double accuracy;
      double macro_f1;
    };
    std::vector<Row> rows;
    for (const auto& v : cfg.variants) {
      const auto report = execute(v.run, cfg.output_dir / v.name);
      rows.push_back({v.name, to_string(report.config.algorithm), report.total_bytes, report.final_metrics.accuracy,
                      report.final_metrics.macro_f1});
    }

    const double base = static_cast<double>(rows.front().bytes);
    auto reduction = [&](const Row& r) { return 100.0 * (1.0 - static_cast<double>(r.bytes) / base); };

    std::string csv = "variant,algorithm,total_bytes,total_mb,reduction_pct,final_accuracy,final_macro_f1\n";
    for (const auto& r : rows)
      csv += r.name + "," + r.algorithm + "," + std::to_string(r.bytes) + "," + format_fixed(to_mb(r.bytes), 6) + "," +
             format_fixed(reduction(r), 2) + "," + format_fixed(r.accuracy, 6) + "," + format_fixed(r.macro_f1, 6) + "\n";

    std::size_t name_w = 7;
    for (const auto& r : rows) name_w = std::max(name_w, r.name.size());
    std::string txt = pad("variant", name_w, true) + "  " + pad("algorithm", 9, true) + "  " + pad("total MB", 12) +
                      "  " + pad("reduction %", 11) + "  " + pad("accuracy", 8) + "  " + pad("macro F1", 8) + "\n";
    for (const auto& r : rows)
      txt += pad(r.name, name_w, true) + "  " + pad(r.algorithm, 9, true) + "  " + pad(format_fixed(to_mb(r.bytes), 4), 12) +
             "  " + pad(format_fixed(reduction(r), 2), 11) + "  " + pad(format_fixed(r.accuracy, 4), 8) + "  " +
             pad(format_fixed(r.macro_f1, 4), 8) + "\n";

    fs::create_directories(cfg.output_dir);
    write_file(cfg.output_dir / "compare.csv", csv);
    write_file(cfg.output_dir / "compare.txt", txt);
    out << txt;
    return kExitOk;
  });
}

int cmd_inspect(const fs::path& report_path, std::size_t top_k, std::ostream& out, std::ostream& err) {
  try {
    std::ifstream in(report_path);
    if (!in) {
      err << "error: cannot read report '" << report_path.string() << "'\n";
      return kExitConfig;
    }
    std::ostringstream text;
    text << in.rdbuf();
    const auto summary = parse_report(text.str());

    ContributionLog log;
    const auto log_path = report_path.parent_path() / summary.contribution_log;
    if (std::ifstream log_in(log_path); log_in) log = ContributionLog::read(log_in);

    out << "algorithm " << summary.algorithm << ", " << summary.rounds.size() << " rounds, "
        << summary.total_bytes << " bytes total\n\n";
    out << pad("round", 5) << pad("stage", 6) << pad("upload B", 12) << pad("download B", 12) << pad("cumulative B", 14)
        << pad("accuracy", 10) << pad("macro F1", 10) << "\n";
    std::uint64_t cumulative = 0;
    for (const auto& r : summary.rounds) {
      std::uint64_t up = 0, down = 0;
      for (const auto b : r.upload_bytes) up += b;
      for (const auto b : r.download_bytes) down += b;
      cumulative += up + down;
      out << pad(std::to_string(r.round), 5) << pad(std::to_string(r.stage), 6) << pad(std::to_string(up), 12)
          << pad(std::to_string(down), 12) << pad(std::to_string(cumulative), 14)
          << pad(format_fixed(r.global.accuracy, 4), 10) << pad(format_fixed(r.global.macro_f1, 4), 10) << "\n";
    }
    if (cumulative != summary.total_bytes)
      err << "warning: per-round bytes sum to " << cumulative << " but the report total is " << summary.total_bytes
          << "\n";

    const auto top = top_contributors(log, top_k);
    out << "\ntop " << top.size() << " blocks by cumulative retained MBD\n";
    for (std::size_t i = 0; i < top.size(); ++i)
      out << pad(std::to_string(i + 1), 4) << "  " << pad(top[i].block_id, 24, true) << "  "
          << format_number(top[i].mbd) << "  (" << top[i].param_count << " params)\n";
    return kExitOk;
  } catch (const fedobd::InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace fedobd::cli
