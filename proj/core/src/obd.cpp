#include "fedobd/obd.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include <json.hpp>

#include "fedobd/errors.hpp"

namespace fedobd {

void DropoutConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw InvalidInput("dropout rate must lie in [0, 1], got " + std::to_string(lambda));
}

double mbd(const Block& prev, const Block& cur) {
  if (!prev.same_structure(cur))
    throw IncompatibleStructure("cannot score block '" + prev.block_id + "' against '" +
                                cur.block_id + "': structures differ");
  const std::size_t n = prev.param_count();
  if (n == 0) return 0.0;
  double sum_sq = 0.0;
  for (std::size_t t = 0; t < prev.tensors.size(); ++t) {
    const auto& a = prev.tensors[t].values;
    const auto& b = cur.tensors[t].values;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      sum_sq += d * d;
    }
  }
  return std::sqrt(sum_sq) / static_cast<double>(n);
}

std::vector<BlockImportance> score_all(const BlockedModel& prev_model, const BlockedModel& cur_model) {
  require_compatible(prev_model, cur_model);
  std::vector<BlockImportance> out;
  out.reserve(prev_model.block_count());
  for (std::size_t i = 0; i < prev_model.block_count(); ++i) {
    const auto& prev = prev_model.blocks()[i];
    out.push_back({prev.block_id, mbd(prev, cur_model.blocks()[i]), prev.param_count()});
  }
  return out;
}

std::vector<BlockImportance> rank(std::vector<BlockImportance> scores, TieBreak tie_break) {
  switch (tie_break) {
    case TieBreak::kBlockIdAscending:
      std::sort(scores.begin(), scores.end(), [](const BlockImportance& a, const BlockImportance& b) {
        if (a.mbd != b.mbd) return a.mbd > b.mbd;
        return a.block_id < b.block_id;
      });
      break;
  }
  return scores;
}

std::vector<std::string> greedy_retain(const std::vector<BlockImportance>& ranked,
                                       std::size_t total_params, double lambda) {
  const double budget = (1.0 - lambda) * static_cast<double>(total_params);
  std::size_t used = 0;
  std::vector<std::string> kept;
  for (const auto& s : ranked) {
    const std::size_t next = used + s.param_count;
    if (static_cast<double>(next) > budget) continue;
    used = next;
    kept.push_back(s.block_id);
  }
  return kept;
}

std::vector<std::string> Selection::retained_ids() const {
  std::vector<std::string> ids;
  ids.reserve(retained.size());
  for (const auto& b : retained) ids.push_back(b.block_id);
  return ids;
}

Selection select_with_scores(const BlockedModel& prev_model, const BlockedModel& cur_model,
                             const DropoutConfig& cfg) {
  cfg.validate();
  Selection sel;
  sel.scores = rank(score_all(prev_model, cur_model), cfg.tie_break);
  for (const auto& id : greedy_retain(sel.scores, cur_model.total_params(), cfg.lambda))
    sel.retained.push_back(cur_model.block(id));
  return sel;
}

std::vector<Block> select_blocks(const BlockedModel& prev_model, const BlockedModel& cur_model,
                                 const DropoutConfig& cfg) {
  return select_with_scores(prev_model, cur_model, cfg).retained;
}

ContributionLogEntry contribution_record(std::uint32_t round, std::string sender,
                                         std::vector<BlockImportance> scores,
                                         std::vector<std::string> retained_ids) {
  std::set<std::string> known;
  for (const auto& s : scores) known.insert(s.block_id);
  for (const auto& id : retained_ids)
    if (!known.count(id)) throw InvalidInput("retained block '" + id + "' has no score");
  return {round, std::move(sender), std::move(scores), std::move(retained_ids)};
}

std::string to_log_line(const ContributionLogEntry& entry) {
  nlohmann::ordered_json j;
  j["round"] = entry.round;
  j["sender"] = entry.sender;
  auto& scores = j["scores"] = nlohmann::ordered_json::array();
  for (const auto& s : entry.scores)
    scores.push_back({{"block_id", s.block_id}, {"mbd", s.mbd}, {"param_count", s.param_count}});
  j["retained"] = entry.retained_ids;
  return j.dump();
}

ContributionLogEntry parse_log_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    ContributionLogEntry e;
    e.round = j.at("round").get<std::uint32_t>();
    e.sender = j.at("sender").get<std::string>();
    for (const auto& s : j.at("scores"))
      e.scores.push_back({s.at("block_id").get<std::string>(), s.at("mbd").get<double>(),
                          s.at("param_count").get<std::size_t>()});
    e.retained_ids = j.at("retained").get<std::vector<std::string>>();
    return contribution_record(e.round, std::move(e.sender), std::move(e.scores), std::move(e.retained_ids));
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidInput(std::string("malformed contribution record: ") + ex.what());
  }
}

void ContributionLog::append(ContributionLogEntry entry) {
  if (!entries_.empty() && entry.round < entries_.back().round)
    throw InvalidInput("contribution record for round " + std::to_string(entry.round) +
                       " after round " + std::to_string(entries_.back().round));
  entries_.push_back(std::move(entry));
}

void ContributionLog::write(std::ostream& out) const {
  for (const auto& e : entries_) out << to_log_line(e) << '\n';
}

ContributionLog ContributionLog::read(std::istream& in) {
  ContributionLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    log.append(parse_log_line(line));
  }
  return log;
}

std::vector<BlockImportance> top_contributors(const ContributionLog& log, std::size_t k) {
  std::map<std::string, BlockImportance> acc;
  for (const auto& e : log.entries()) {
    for (const auto& id : e.retained_ids) {
      const auto it = std::find_if(e.scores.begin(), e.scores.end(),
                                   [&](const BlockImportance& s) { return s.block_id == id; });
      auto& slot = acc[id];
      slot.block_id = id;
      slot.mbd += it->mbd;
      slot.param_count = it->param_count;
    }
  }
  std::vector<BlockImportance> out;
  for (auto& [_, v] : acc) out.push_back(std::move(v));
  out = rank(std::move(out), TieBreak::kBlockIdAscending);
  if (out.size() > k) out.resize(k);
  return out;
}

}  // namespace fedobd
