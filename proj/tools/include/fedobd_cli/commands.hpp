#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fedobd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct RunOptions {
  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  std::vector<std::string> overrides;  // key=value
};

/// Executes one run and writes report.json, metrics.csv, contribution.log and
/// summary.txt into the output directory.
int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err);

/// Runs every variant of the config (at least two) into <out>/<variant>/ and
/// writes compare.csv / compare.txt with byte reduction relative to the first row.
int cmd_compare(const RunOptions& opts, std::ostream& out, std::ostream& err);

/// Prints per-round bytes and metrics of a report plus the top-k blocks by
/// cumulative MBD from its contribution log.
int cmd_inspect(const std::filesystem::path& report_path, std::size_t top_k, std::ostream& out,
                std::ostream& err);

}  // namespace fedobd::cli
