#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "direct/common.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kData = DIRECT_TEST_DATA;

struct CliResult {
  int code = -1;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    home_ = fs::temp_directory_path() /
            ("direct_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(home_);
    fs::create_directories(home_);
  }
  void TearDown() override { fs::remove_all(home_); }

  CliResult run(const std::string& args) const {
    const auto err = (home_ / "stderr.txt").string();
    const std::string cmd = "DIRECT_HOME='" + home_.string() + "' '" + DIRECT_CLI + "' " + args + " >'" +
                            (home_ / "stdout.txt").string() + "' 2>'" + err + "'";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = direct::read_file(err);
    return r;
  }

  std::string out() const { return direct::read_file((home_ / "stdout.txt").string()); }

  /// Short training config with absolute input paths.
  std::string write_config(nlohmann::json extra = nlohmann::json::object(), const std::string& name = "cfg.json") {
    nlohmann::json j{{"train_path", kData + "/fixture.json"},
                     {"schema_path", kData + "/fixture_relations.json"},
                     {"output_dir", "runs/short"},
                     {"backend", "toy"},
                     {"epochs", 2},
                     {"batch_size", 8},
                     {"learning_rate", 1e-3},
                     {"seed", 3},
                     {"encoder", {{"hidden", 16}, {"layers", 1}, {"heads", 2}, {"ffn", 32}}}};
    j.update(extra);
    const auto path = (home_ / name).string();
    direct::write_file(path, j.dump(2));
    return path;
  }

  std::vector<nlohmann::json> manifests() const {
    std::vector<nlohmann::json> out;
    std::ifstream in(home_ / "manifests.jsonl");
    std::string line;
    while (std::getline(in, line)) out.push_back(nlohmann::json::parse(line));
    return out;
  }

  fs::path home_;
};

}  // namespace

TEST_F(Cli, IngestTrainPredictEvaluateChain) {
  const auto canon = (home_ / "fixture.canonical.jsonl").string();
  ASSERT_EQ(run("ingest " + kData + "/fixture.json --schema " + kData + "/fixture_relations.json --out " + canon).code,
            0);
  ASSERT_EQ(run("stats " + canon + " --out " + (home_ / "stats.json").string()).code, 0);
  auto stats = nlohmann::json::parse(direct::read_file((home_ / "stats.json").string()));
  EXPECT_EQ(stats.at("schema_version"), 1);

  auto cfg = write_config({{"train_path", canon}});
  auto t = run("train --config " + cfg);
  ASSERT_EQ(t.code, 0) << t.err;
  const auto ckpt = home_ / "runs/short/model.ckpt";
  ASSERT_TRUE(fs::exists(ckpt));
  ASSERT_TRUE(fs::exists(home_ / "runs/short/train_log.jsonl"));

  const auto preds = (home_ / "preds.jsonl").string();
  auto p = run("predict --checkpoint runs/short/model.ckpt " + canon + " --out " + preds);
  ASSERT_EQ(p.code, 0) << p.err;
  std::istringstream lines(direct::read_file(preds));
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) ++n;
  EXPECT_EQ(n, 64u);

  const auto report = (home_ / "report.json").string();
  const auto csv = (home_ / "by_n.csv").string();
  auto e = run("evaluate " + preds + " " + canon + " --mode exact --out " + report + " --csv " + csv);
  ASSERT_EQ(e.code, 0) << e.err;
  auto j = nlohmann::json::parse(direct::read_file(report));
  EXPECT_EQ(j.at("mode"), "exact");
  EXPECT_EQ(j.at("sentences"), 64);
  EXPECT_EQ(j.at("overall").at("gold"), 118);
  EXPECT_TRUE(fs::exists(csv));

  auto c = run("cost " + canon + " --schema " + kData + "/fixture_relations.json --kinds direct,mhs");
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(out().rfind("DIRECT\t", 0), 0u) << out();
}

TEST_F(Cli, IngestIsIdempotent) {
  const auto a = (home_ / "a.jsonl").string(), b = (home_ / "b.jsonl").string();
  ASSERT_EQ(run("ingest " + kData + "/fixture.json --out " + a).code, 0);
  ASSERT_EQ(run("ingest " + a + " --out " + b).code, 0);
  ASSERT_EQ(run("ingest " + kData + "/fixture.json --out " + a).code, 0);
  EXPECT_EQ(direct::read_file(a), direct::read_file(b));
}

TEST_F(Cli, ExitCodes) {
  auto missing = run("ingest /nonexistent/raw.json --out " + (home_ / "x").string());
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("/nonexistent/raw.json"), std::string::npos);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("evaluate a b --mode fuzzy").code, 1);
  EXPECT_EQ(run("stats " + kData + "/fixture.json --overlap-convention sideways").code, 1);

  auto no_ckpt = run("predict --checkpoint missing.ckpt " + kData + "/fixture.json --out " +
                     (home_ / "p.jsonl").string());
  EXPECT_EQ(no_ckpt.code, 2);
  EXPECT_NE(no_ckpt.err.find("checkpoint"), std::string::npos);
}

TEST_F(Cli, MissingConfigKeyNamed) {
  auto cfg = write_config();
  auto j = nlohmann::json::parse(direct::read_file(cfg));
  j.erase("learning_rate");
  direct::write_file(cfg, j.dump());
  auto r = run("train --config " + cfg);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos) << r.err;

  direct::write_file(cfg, "{not json");
  EXPECT_EQ(run("train --config " + cfg).code, 1);
}

TEST_F(Cli, ManifestPerRunAndSeedRepeatIdenticalLog) {
  auto cfg = write_config({{"epochs", 1}});
  ASSERT_EQ(run("train --config " + cfg + " --out runs/a").code, 0);
  ASSERT_EQ(run("train --config " + cfg + " --out runs/b").code, 0);
  EXPECT_EQ(direct::read_file((home_ / "runs/a/train_log.jsonl").string()),
            direct::read_file((home_ / "runs/b/train_log.jsonl").string()));
  EXPECT_EQ(direct::read_file((home_ / "runs/a/model.ckpt").string()),
            direct::read_file((home_ / "runs/b/model.ckpt").string()));

  ASSERT_EQ(run("train --config " + cfg + " --out runs/c --seed 99").code, 0);
  EXPECT_NE(direct::read_file((home_ / "runs/a/train_log.jsonl").string()),
            direct::read_file((home_ / "runs/c/train_log.jsonl").string()));

  ASSERT_EQ(run("predict --checkpoint runs/a/model.ckpt " + kData + "/fixture.json --out " +
                (home_ / "p.jsonl").string())
                .code,
            0);
  auto m = manifests();
  ASSERT_EQ(m.size(), 4u);
  EXPECT_EQ(m[0].at("command"), "train");
  EXPECT_EQ(m[2].at("seed"), 99);
  EXPECT_EQ(m[3].at("command"), "predict");
  for (auto& x : m)
    for (const char* key : {"started", "finished", "config", "inputs", "checkpoint", "checkpoint_checksum"})
      EXPECT_TRUE(x.contains(key)) << key;
  EXPECT_EQ(m[0].at("checkpoint_checksum"), m[1].at("checkpoint_checksum"));
}

TEST_F(Cli, AblationFlagsReachTheConfig) {
  auto cfg = write_config({{"epochs", 1}});
  ASSERT_EQ(run("train --config " + cfg + " --out runs/eq --ablation equal --ablation shared").code, 0);
  std::ifstream log(home_ / "runs/eq/train_log.jsonl");
  std::string line;
  while (std::getline(log, line)) {
    auto j = nlohmann::json::parse(line);
    if (j.at("kind") == "step") EXPECT_EQ(j.at("weight"), 1.0);
  }
  auto m = manifests();
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].at("config").at("ablations"), (nlohmann::json{"shared", "equal"}));
  EXPECT_EQ(run("train --config " + cfg + " --ablation bogus").code, 1);
}
