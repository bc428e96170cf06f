#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <fedobd/obd.hpp>
#include <fedobd/report.hpp>

#include "fedobd_cli/commands.hpp"
#include "fedobd_cli/config.hpp"

namespace fedobd::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kSmallRun = R"(# small task for fast tests
n_clients: 3
stage1_rounds: 4
stage2_epochs: 1
layer_widths: [8, 16, 3]
samples_per_client: 120
test_samples: 150
)";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("fedobd_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const std::string& text) {
    const auto p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, MissingConfigIsConfigErrorNamingPath) {
  RunOptions o;
  o.config_path = dir_ / "nope.yaml";
  EXPECT_EQ(cmd_run(o, out_, err_), kExitConfig);
  EXPECT_NE(err_.str().find("nope.yaml"), std::string::npos);
}

TEST_F(CliTest, UnknownKeyAndBadValueAreConfigErrors) {
  RunOptions o;
  o.config_path = write_config("bad.yaml", std::string(kSmallRun) + "lamda: 0.3\n");
  EXPECT_EQ(cmd_run(o, out_, err_), kExitConfig);
  EXPECT_NE(err_.str().find("lamda"), std::string::npos);

  o.config_path = write_config("ok.yaml", kSmallRun);
  o.overrides = {"lambda=1.5"};
  EXPECT_EQ(cmd_run(o, out_, err_), kExitConfig);
  EXPECT_NE(err_.str().find("lambda"), std::string::npos);
}

TEST_F(CliTest, SameSeedGivesByteIdenticalReport) {
  RunOptions o;
  o.config_path = write_config("run.yaml", kSmallRun);
  o.seed = 7;
  o.out_dir = dir_ / "a";
  ASSERT_EQ(cmd_run(o, out_, err_), kExitOk) << err_.str();
  o.out_dir = dir_ / "b";
  ASSERT_EQ(cmd_run(o, out_, err_), kExitOk) << err_.str();
  const auto a = slurp(dir_ / "a" / "report.json");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir_ / "b" / "report.json"));
  EXPECT_EQ(slurp(dir_ / "a" / "contribution.log"), slurp(dir_ / "b" / "contribution.log"));
  for (const auto* f : {"metrics.csv", "summary.txt"}) EXPECT_TRUE(fs::exists(dir_ / "a" / f)) << f;
}

TEST_F(CliTest, FedAvgWritesEmptyContributionLog) {
  RunOptions o;
  o.config_path = write_config("avg.yaml", std::string(kSmallRun) + "algorithm: fedavg\n");
  o.out_dir = dir_ / "out";
  ASSERT_EQ(cmd_run(o, out_, err_), kExitOk) << err_.str();
  ASSERT_TRUE(fs::exists(dir_ / "out" / "contribution.log"));
  EXPECT_EQ(fs::file_size(dir_ / "out" / "contribution.log"), 0u);
}

TEST_F(CliTest, MetricsCsvIsStableAndMatchesReport) {
  RunOptions o;
  o.config_path = write_config("run.yaml", kSmallRun);
  o.out_dir = dir_ / "out";
  ASSERT_EQ(cmd_run(o, out_, err_), kExitOk) << err_.str();
  std::istringstream csv(slurp(dir_ / "out" / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "round,stage,local_epochs,upload_bytes,download_bytes,cumulative_bytes,loss,accuracy,macro_f1");
  std::size_t rows = 0;
  std::string last;
  while (std::getline(csv, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, 1u + 4u + 1u);
  const auto report = parse_report(slurp(dir_ / "out" / "report.json"));
  // cumulative_bytes of the last row is the report total.
  std::vector<std::string> cols;
  std::istringstream ls(last);
  for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
  ASSERT_EQ(cols.size(), 9u);
  EXPECT_EQ(cols[5], std::to_string(report.total_bytes));
}

TEST_F(CliTest, CompareDegenerateVariantsShowNoReduction) {
  RunOptions o;
  o.config_path = write_config("cmp.yaml", std::string(kSmallRun) + R"(
variants:
  - name: avg
    algorithm: fedavg
  - name: obd0
    algorithm: fedobd
    lambda: 0
    quant_weight: none
)");
  o.out_dir = dir_ / "cmp";
  ASSERT_EQ(cmd_compare(o, out_, err_), kExitOk) << err_.str();
  const auto csv = slurp(dir_ / "cmp" / "compare.csv");
  std::istringstream in(csv);
  std::string header, avg, obd;
  std::getline(in, header);
  std::getline(in, avg);
  std::getline(in, obd);
  auto col = [](const std::string& row, int i) {
    std::istringstream s(row);
    std::string c;
    for (int k = 0; k <= i; ++k) std::getline(s, c, ',');
    return c;
  };
  EXPECT_NEAR(std::stod(col(obd, 4)), 0.0, 1.0);
  EXPECT_EQ(col(obd, 5), col(avg, 5));
  EXPECT_EQ(col(obd, 6), col(avg, 6));
  EXPECT_TRUE(fs::exists(dir_ / "cmp" / "obd0" / "report.json"));
}

TEST_F(CliTest, CompareReportsLargeReductionForFedObd) {
  RunOptions o;
  o.config_path = write_config("cmp.yaml", std::string(kSmallRun) + R"(
variants:
  - name: fedavg
    algorithm: fedavg
  - name: fedobd
    algorithm: fedobd
    lambda: 0.3
    quant_weight: 0.01
)");
  o.out_dir = dir_ / "cmp";
  ASSERT_EQ(cmd_compare(o, out_, err_), kExitOk) << err_.str();
  std::istringstream in(slurp(dir_ / "cmp" / "compare.csv"));
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::getline(in, line);
  std::istringstream s(line);
  std::string c;
  for (int k = 0; k < 5; ++k) std::getline(s, c, ',');
  EXPECT_GE(std::stod(c), 50.0);
}

TEST_F(CliTest, CompareNeedsTwoVariants) {
  RunOptions o;
  o.config_path = write_config("one.yaml", std::string(kSmallRun) + "variants:\n  - name: only\n");
  EXPECT_EQ(cmd_compare(o, out_, err_), kExitConfig);
}

TEST_F(CliTest, InspectListsRoundsAndTopBlocks) {
  RunOptions o;
  o.config_path = write_config("run.yaml", kSmallRun);
  o.out_dir = dir_ / "out";
  o.overrides = {"layer_widths=[8, 16, 16, 3]"};
  ASSERT_EQ(cmd_run(o, out_, err_), kExitOk) << err_.str();

  std::ifstream log_in(dir_ / "out" / "contribution.log");
  const auto log = ContributionLog::read(log_in);
  const auto expected = top_contributors(log, 2);
  ASSERT_EQ(expected.size(), 2u);

  std::ostringstream out, err;
  ASSERT_EQ(cmd_inspect(dir_ / "out" / "report.json", 2, out, err), kExitOk) << err.str();
  const auto text = out.str();
  const auto first = text.find(expected[0].block_id, text.find("top 2"));
  const auto second = text.find(expected[1].block_id, text.find("top 2"));
  ASSERT_NE(first, std::string::npos);
  ASSERT_NE(second, std::string::npos);
  EXPECT_LT(first, second);
  EXPECT_TRUE(err.str().empty());

  std::ostringstream big;
  EXPECT_EQ(cmd_inspect(dir_ / "out" / "report.json", 100, big, err), kExitOk);
  const auto all = top_contributors(log, 100);
  EXPECT_LE(all.size(), 3u);
  EXPECT_NE(big.str().find("top " + std::to_string(all.size()) + " blocks"), std::string::npos);
}

TEST_F(CliTest, InspectRejectsMalformedOrMissingReport) {
  const auto bad = write_config("report.json", "{\"format\": \"fedobd-report/1\"}");
  EXPECT_EQ(cmd_inspect(bad, 5, out_, err_), kExitConfig);
  const auto junk = write_config("junk.json", "not json");
  EXPECT_EQ(cmd_inspect(junk, 5, out_, err_), kExitConfig);
  EXPECT_EQ(cmd_inspect(dir_ / "missing.json", 5, out_, err_), kExitConfig);
}

TEST(ConfigParse, DefaultsOverridesAndVariants) {
  const auto cfg = parse_config("", {}, {"lambda=0.5", "quant_weight=none", "layer_widths=[4, 6, 3]"});
  EXPECT_EQ(cfg.run.lambda, 0.5);
  EXPECT_FALSE(cfg.run.quant_weight);
  EXPECT_EQ(cfg.run.layer_widths, (std::vector<std::size_t>{4, 6, 3}));
  EXPECT_EQ(cfg.output_dir, fs::path("out"));

  const auto v = parse_config("seed: 9\nvariants:\n  - algorithm: fedavg\n  - lambda: 0.2\n", {}, {});
  ASSERT_EQ(v.variants.size(), 2u);
  EXPECT_EQ(v.variants[0].name, "fedavg_0");
  EXPECT_EQ(v.variants[1].run.seed, 9u);
  EXPECT_EQ(v.variants[1].run.lambda, 0.2);

  EXPECT_THROW(parse_config("variants:\n  - name: a\n  - name: a\n", {}, {}), ConfigError);
  EXPECT_THROW(parse_config("[1, 2]", {}, {}), ConfigError);
  EXPECT_THROW(parse_config("", {}, {"novalue"}), ConfigError);
  EXPECT_THROW(parse_config("num_classes: 5\n", {}, {}), ConfigError);
}

TEST(ConfigParse, ShippedConfigsLoad) {
  const fs::path dir(FEDOBD_CONFIG_DIR);
  EXPECT_EQ(load_config(dir / "default.yaml", {}).run.lambda, 0.3);
  EXPECT_EQ(load_config(dir / "compare.yaml", {}).variants.size(), 3u);
  EXPECT_EQ(load_config(dir / "degenerate.yaml", {}).variants.size(), 2u);
}

TEST(ConfigParse, FilePathsResolveAgainstConfigDirectory) {
  const auto cfg = parse_config("dataset: file\ntrain_file: train.csv\ntest_file: /abs/test.csv\n", "/data/exp", {});
  EXPECT_EQ(cfg.run.data.train_file, fs::path("/data/exp/train.csv"));
  EXPECT_EQ(cfg.run.data.test_file, fs::path("/abs/test.csv"));
}

}  // namespace
}  // namespace fedobd::cli
