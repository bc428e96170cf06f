#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedobd/model.hpp"

namespace fedobd {

/// Importance score of one block: the Mean Block Difference between two versions.
struct BlockImportance {
  std::string block_id;
  double mbd = 0.0;
  std::size_t param_count = 0;

  bool operator==(const BlockImportance&) const = default;
};

enum class TieBreak {
  /// Equal scores are examined in ascending lexicographic block id order.
  kBlockIdAscending,
};

struct DropoutConfig {
  /// Fraction of the model size that is dropped; 0 sends everything, 1 nothing.
  double lambda = 0.0;
  TieBreak tie_break = TieBreak::kBlockIdAscending;

  void validate() const;
};

/// ||vector(prev) - vector(cur)||_2 / param_count, accumulated in double.
/// A block without parameters scores 0.
double mbd(const Block& prev, const Block& cur);

std::vector<BlockImportance> score_all(const BlockedModel& prev_model, const BlockedModel& cur_model);

/// Scores sorted into examination order: descending MBD, then tie-break.
std::vector<BlockImportance> rank(std::vector<BlockImportance> scores, TieBreak tie_break);

/// Ids retained by the greedy budget pass over already-ranked scores.
/// A block that does not fit is skipped and the pass continues, so smaller
/// blocks further down the ranking may still be retained.
std::vector<std::string> greedy_retain(const std::vector<BlockImportance>& ranked,
                                       std::size_t total_params, double lambda);

struct Selection {
  std::vector<BlockImportance> scores;  // ranked
  std::vector<Block> retained;          // values from the current model, in retention order

  std::vector<std::string> retained_ids() const;
};

/// Opportunistic block dropout with the scores kept for contribution logging.
Selection select_with_scores(const BlockedModel& prev_model, const BlockedModel& cur_model,
                             const DropoutConfig& cfg);

std::vector<Block> select_blocks(const BlockedModel& prev_model, const BlockedModel& cur_model,
                                 const DropoutConfig& cfg);

struct ContributionLogEntry {
  std::uint32_t round = 0;
  std::string sender;
  std::vector<BlockImportance> scores;
  std::vector<std::string> retained_ids;

  bool operator==(const ContributionLogEntry&) const = default;
};

/// Throws InvalidInput when a retained id has no score.
ContributionLogEntry contribution_record(std::uint32_t round, std::string sender,
                                         std::vector<BlockImportance> scores,
                                         std::vector<std::string> retained_ids);

/// One JSON object per line, no trailing newline.
std::string to_log_line(const ContributionLogEntry& entry);
ContributionLogEntry parse_log_line(const std::string& line);

/// Append-only history of dropout decisions within one run.
class ContributionLog {
 public:
  /// Throws InvalidInput if `entry.round` is lower than the last appended round.
  void append(ContributionLogEntry entry);

  const std::vector<ContributionLogEntry>& entries() const noexcept { return entries_; }
  bool empty() const noexcept { return entries_.empty(); }

  void write(std::ostream& out) const;
  static ContributionLog read(std::istream& in);

 private:
  std::vector<ContributionLogEntry> entries_;
};

/// Blocks ranked by the MBD they accumulated over all records in which they
/// were retained (descending; ties by block id). At most `k` entries.
std::vector<BlockImportance> top_contributors(const ContributionLog& log, std::size_t k);

}  // namespace fedobd
