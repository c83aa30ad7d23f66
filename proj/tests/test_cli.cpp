#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dsfm/dsfm.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

Result run(const std::string& args, const std::string& cwd = ".", const std::string& env = "") {
  const std::string cmd = "cd '" + cwd + "' && " + env + " '" + DSFM_CLI_PATH + "' " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), p)) r.output.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_path() { return (fs::path(DSFM_SOURCE_DIR) / "examples/configs/quick.json").string(); }

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::path(::testing::TempDir()) / ("dsfm_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// gen-data -> train-base -> attribute -> rank, shared by several tests.
class Chain : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fresh_dir("chain");
    const std::string c = " --config '" + config_path() + "'";
    steps_ = {run("gen-data" + c + " --out d.csv", dir_),
              run("train-base" + c + " --data d.csv --valid d.valid.csv --out base.json", dir_),
              run("attribute" + c + " --data d.csv --checkpoint base.json --out attr.bin", dir_),
              run("rank" + c + " --data d.csv --checkpoint base.json --attribution attr.bin --out report.json", dir_)};
  }
  static fs::path dir_;
  static std::vector<Result> steps_;
};
fs::path Chain::dir_;
std::vector<Result> Chain::steps_;

}  // namespace

TEST(Cli, HelpExitsZeroForEverySubcommand) {
  const std::vector<std::string> subs{"gen-data",        "train-base",     "attribute", "rank",        "train-memory",
                                      "evaluate",        "study-selection", "study-ablation", "flops", "export-dists"};
  const auto top = run("--help");
  EXPECT_EQ(top.code, 0);
  for (const auto& s : subs) {
    EXPECT_NE(top.output.find(s), std::string::npos) << s;
    const auto r = run(s + " --help");
    EXPECT_EQ(r.code, 0) << s;
    for (const char* flag : {"--config", "--seed", "--threads", "--out"})
      EXPECT_NE(r.output.find(flag), std::string::npos) << s << " help lacks " << flag;
  }
  EXPECT_NE(run("attribute --help").output.find("--ig-steps"), std::string::npos);
  const auto mem = run("train-memory --help").output;
  for (const char* flag : {"--kernel", "--no-emb-attn", "--no-hidden-attn", "--no-aux-logit", "--top-k-categorical"})
    EXPECT_NE(mem.find(flag), std::string::npos) << flag;
}

TEST(Cli, UsageErrorsExitOne) {
  const auto r = run("rank --no-such-flag");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("--no-such-flag"), std::string::npos);
  EXPECT_NE(r.output.find("Usage"), std::string::npos);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("flops --kernel cosine").code, 1);
}

TEST(Cli, RankWithoutAttributionNamesTheFile) {
  const auto dir = fresh_dir("noattr");
  const auto r = run("rank --config '" + config_path() + "' --attribution missing.bin", dir.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("missing.bin"), std::string::npos);
  const auto d = run("rank --config '" + config_path() + "'", dir.string());
  EXPECT_EQ(d.code, 2);
  EXPECT_NE(d.output.find("attribution.bin"), std::string::npos);
}

TEST(Cli, MissingCheckpointIsRuntimeError) {
  const auto dir = fresh_dir("nockpt");
  const auto r = run("evaluate --checkpoint nope.json --data d.csv", dir.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("nope.json"), std::string::npos);
}

TEST_F(Chain, StagesSucceedAndWriteManifests) {
  for (std::size_t i = 0; i < steps_.size(); ++i) ASSERT_EQ(steps_[i].code, 0) << "step " << i << ":\n" << steps_[i].output;
  for (const char* f : {"d.csv", "d.valid.csv", "d.test.csv", "d.csv.schema.json", "base.json", "attr.bin", "report.json"})
    EXPECT_TRUE(fs::exists(dir_ / f)) << f;
  const auto m = dsfm::read_json_file((dir_ / "base.json.manifest.json").string());
  EXPECT_EQ(m.at("subcommand"), "train-base");
  EXPECT_EQ(m.at("version"), dsfm::kVersion);
  EXPECT_EQ(m.at("seed"), 1);
  EXPECT_TRUE(m.at("config").contains("train"));
  EXPECT_TRUE(m.at("inputs").contains("train"));
  EXPECT_TRUE(m.at("inputs").contains("valid"));
  EXPECT_EQ(m.at("outputs")[0].at("path"), "base.json");
  EXPECT_GE(m.at("duration_seconds").get<double>(), 0.0);
}

TEST_F(Chain, ArtifactsAreLinkedByFingerprint) {
  ASSERT_EQ(steps_.back().code, 0);
  const auto ckpt = dsfm::read_json_file((dir_ / "base.json").string());
  const auto attr = dsfm::load_attribution((dir_ / "attr.bin").string());
  EXPECT_EQ(dsfm::to_hex(attr.model_fingerprint), ckpt.at("fingerprint").get<std::string>());
  const auto report = dsfm::read_json_file((dir_ / "report.json").string());
  EXPECT_EQ(report.at("attribution_fingerprint").get<std::string>(), dsfm::to_hex(attr.fingerprint()));
  const auto am = dsfm::read_json_file((dir_ / "attr.bin.manifest.json").string());
  EXPECT_EQ(am.at("inputs").at("checkpoint").at("fingerprint"), ckpt.at("fingerprint"));
}

TEST_F(Chain, RankRejectsAttributionForOtherData) {
  ASSERT_EQ(steps_.back().code, 0);
  const auto r = run("rank --config '" + config_path() + "' --data d.test.csv --schema d.csv.schema.json --attribution attr.bin",
                     dir_.string());
  EXPECT_EQ(r.code, 2);
  const auto attr = dsfm::load_attribution((dir_ / "attr.bin").string());
  EXPECT_NE(r.output.find(dsfm::to_hex(attr.dataset_fingerprint)), std::string::npos) << r.output;
}

TEST_F(Chain, MemoryModelTrainsAndEvaluates) {
  ASSERT_EQ(steps_.back().code, 0);
  const std::string c = " --config '" + config_path() + "'";
  const auto tm = run("train-memory" + c + " --data d.csv --valid d.valid.csv --checkpoint base.json --report report.json"
                      " --kernel softmax --no-aux-logit --out mem.json", dir_.string());
  ASSERT_EQ(tm.code, 0) << tm.output;
  const auto ckpt = dsfm::read_json_file((dir_ / "mem.json").string());
  EXPECT_EQ(ckpt.at("model_type"), "memory");
  EXPECT_EQ(ckpt.at("config").at("kernel"), "softmax");
  EXPECT_FALSE(ckpt.at("config").at("use_aux_logit").get<bool>());
  EXPECT_EQ(ckpt.at("config").at("sensitive").size(), 3u);

  const auto ev = run("evaluate --checkpoint mem.json --data d.test.csv --out eval.json", dir_.string());
  ASSERT_EQ(ev.code, 0) << ev.output;
  EXPECT_NE(ev.output.find("Overall"), std::string::npos);
  const auto e = dsfm::read_json_file((dir_ / "eval.json").string());
  EXPECT_EQ(e.at("per_domain").size(), 4u);
  EXPECT_GT(e.at("overall").get<double>(), 0.5);
  EXPECT_EQ(e.at("model_fingerprint"), ckpt.at("fingerprint"));
}

TEST_F(Chain, RerunIsIdempotent) {
  ASSERT_EQ(steps_.back().code, 0);
  const std::string c = " --config '" + config_path() + "'";
  const auto base = slurp(dir_ / "base.json");
  const auto attr = slurp(dir_ / "attr.bin");
  const auto report = slurp(dir_ / "report.json");
  ASSERT_EQ(run("train-base" + c + " --data d.csv --valid d.valid.csv --out base2.json", dir_).code, 0);
  ASSERT_EQ(run("attribute" + c + " --data d.csv --checkpoint base2.json --out attr2.bin", dir_).code, 0);
  ASSERT_EQ(run("rank" + c + " --data d.csv --attribution attr2.bin --out report2.json", dir_).code, 0);
  EXPECT_EQ(slurp(dir_ / "base2.json"), base);
  EXPECT_EQ(slurp(dir_ / "attr2.bin"), attr);
  EXPECT_EQ(slurp(dir_ / "report2.json"), report);
}

TEST_F(Chain, ExportedDistributionRowsSumToOne) {
  ASSERT_EQ(steps_.back().code, 0);
  const auto r = run("export-dists --report report.json --data d.csv --out dists", dir_.string());
  ASSERT_EQ(r.code, 0) << r.output;
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "dists")) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    std::ifstream in(e.path());
    std::string line;
    std::getline(in, line);  // header
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string cell;
      std::getline(ss, cell, ',');  // domain
      double total = 0.0;
      while (std::getline(ss, cell, ',')) total += std::stod(cell);
      EXPECT_NEAR(total, 1.0, 1e-9) << e.path() << " row " << rows;
      ++rows;
    }
    EXPECT_EQ(rows, 4u) << e.path();
  }
  EXPECT_EQ(files, 12u);
  EXPECT_TRUE(fs::exists(dir_ / "dists" / "manifest.json"));
}

TEST(Cli, SeedFlagAndEnvOverride) {
  const auto dir = fresh_dir("seed");
  const std::string c = " --config '" + config_path() + "'";
  ASSERT_EQ(run("gen-data" + c + " --out a.csv", dir.string()).code, 0);
  ASSERT_EQ(run("gen-data" + c + " --seed 7 --out b.csv", dir.string()).code, 0);
  ASSERT_EQ(run("gen-data" + c + " --out e.csv", dir.string(), "DSFM_SEED=7").code, 0);
  EXPECT_NE(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  EXPECT_EQ(slurp(dir / "b.csv"), slurp(dir / "e.csv"));
  EXPECT_EQ(dsfm::read_json_file((dir / "e.csv.manifest.json").string()).at("seed"), 7);
}

TEST(Cli, FlopsLinearBelowSoftmax) {
  const auto dir = fresh_dir("flops");
  const std::string c = " --config '" + config_path() + "'";
  const auto lin = run("flops" + c + " --kernel linear --out lin.json", dir.string());
  const auto soft = run("flops" + c + " --kernel softmax --out soft.json", dir.string());
  ASSERT_EQ(lin.code, 0) << lin.output;
  ASSERT_EQ(soft.code, 0) << soft.output;
  EXPECT_NE(lin.output.find("total"), std::string::npos);
  const auto l = dsfm::read_json_file((dir / "lin.json").string());
  const auto s = dsfm::read_json_file((dir / "soft.json").string());
  EXPECT_EQ(l.at("kernel"), "linear");
  EXPECT_EQ(s.at("kernel"), "softmax");
  EXPECT_LT(l.at("total").get<std::uint64_t>(), s.at("total").get<std::uint64_t>());
  const auto ab = run("flops" + c + " --no-emb-attn --no-hidden-attn --no-aux-logit --out none.json", dir.string());
  ASSERT_EQ(ab.code, 0);
  EXPECT_LT(dsfm::read_json_file((dir / "none.json").string()).at("total").get<std::uint64_t>(),
            l.at("total").get<std::uint64_t>());
}

TEST(Cli, StudiesPrintTablesAndJson) {
  const auto dir = fresh_dir("study");
  const std::string c = " --config '" + config_path() + "'";
  const auto sel = run("study-selection" + c + " --out sel.json", dir.string());
  ASSERT_EQ(sel.code, 0) << sel.output;
  for (const char* v : {"shared", "top-k", "last-k", "Overall"}) EXPECT_NE(sel.output.find(v), std::string::npos) << v;
  EXPECT_EQ(dsfm::read_json_file((dir / "sel.json").string()).at("variants").size(), 3u);
  const auto abl = run("study-ablation" + c + " --out abl.json", dir.string());
  ASSERT_EQ(abl.code, 0) << abl.output;
  EXPECT_NE(abl.output.find("w/o hidden_attn"), std::string::npos);
  EXPECT_EQ(dsfm::read_json_file((dir / "abl.json").string()).at("variants").size(), 4u);
}
