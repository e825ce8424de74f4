#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "lvcal/cli.hpp"
#include "lvcal/dataset.hpp"

using namespace lvcal;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun lvcal_run(std::vector<std::string> args) {
  args.insert(args.begin(), "lvcal");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lvcal_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void write(const std::string& name, const std::string& text) const { write_text(path(name), text); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, PipelineAlg1RecoversTruth) {
  write("spec.json", R"({"seed": 3})");
  ASSERT_EQ(lvcal_run({"simulate", "--spec", path("spec.json"), "--out", path("data.json")}).code, 0);
  ASSERT_EQ(lvcal_run({"validate", "--data", path("data.json")}).code, 0);
  const CliRun cal = lvcal_run({"calibrate", "--alg", "1", "--data", path("data.json"), "--out", path("result.json")});
  ASSERT_EQ(cal.code, 0) << cal.err;

  const Scenario s = read_dataset(path("data.json"));
  const StoredResult r = result_from_json(load_document(path("result.json")));
  const ExtrinsicError e = extrinsic_error(r.result.extrinsic, s.truth->extrinsic);
  EXPECT_LT(e.rotation_deg, 1e-3);
  EXPECT_LT(e.translation_m, 1e-4);

  const CliRun ev = lvcal_run(
      {"evaluate", "--data", path("data.json"), "--extrinsic", path("result.json"), "--out", path("d.csv")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_TRUE(fs::exists(path("d.stats.json")));
  const CliRun rep = lvcal_run({"report", "--result", path("result.json")});
  EXPECT_EQ(rep.code, 0);
  EXPECT_NE(rep.out.find("iterations:"), std::string::npos);
}

TEST_F(CliTest, OutputsAreDeterministic) {
  for (const char* tag : {"a", "b"}) {
    const std::string t(tag);
    ASSERT_EQ(lvcal_run({"simulate", "--seed", "5", "--out", path("data_" + t + ".json")}).code, 0);
    ASSERT_EQ(lvcal_run({"calibrate", "--alg", "2", "--data", path("data_" + t + ".json"), "--out",
                         path("res_" + t + ".json")})
                  .code,
              0);
  }
  EXPECT_EQ(read_text(path("data_a.json")), read_text(path("data_b.json")));
  // the echoed data path differs; everything else must agree
  Json a = Json::parse(read_text(path("res_a.json")));
  Json b = Json::parse(read_text(path("res_b.json")));
  a["config"].erase("data");
  b["config"].erase("data");
  EXPECT_EQ(a, b);
}

TEST_F(CliTest, ConfigPrecedenceIsEchoed) {
  ASSERT_EQ(lvcal_run({"simulate", "--out", path("data.json")}).code, 0);
  write("cfg.json", R"({"algorithm": 2, "max_iterations": 50, "cost_tolerance": 1e-12})");
  const CliRun r = lvcal_run({"calibrate", "--config", path("cfg.json"), "--max-iterations", "40", "--data",
                           path("data.json"), "--out", path("result.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json cfg = Json::parse(read_text(path("result.json")))["config"];
  EXPECT_EQ(cfg["algorithm"], 2);
  EXPECT_EQ(cfg["max_iterations"], 40);
  EXPECT_EQ(cfg["cost_tolerance"], 1e-12);
  EXPECT_EQ(cfg["update_tolerance"], 1e-8);
  EXPECT_EQ(cfg["ordering"], "natural");
  EXPECT_EQ(cfg["config_file"], path("cfg.json"));

  write("bad.json", "{\n  \"max_iterations\": 5,\n  \"speed\": 3\n}\n");
  const CliRun bad = lvcal_run({"calibrate", "--alg", "1", "--config", path("bad.json"), "--data", path("data.json"),
                             "--out", path("r2.json")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("bad.json:3:"), std::string::npos) << bad.err;
}

TEST_F(CliTest, PlanarReportNamesThirdAxis) {
  write("spec.json", R"({"motion": "planar", "motion_amplitude": 0.0})");
  ASSERT_EQ(lvcal_run({"simulate", "--spec", path("spec.json"), "--out", path("data.json")}).code, 0);
  ASSERT_EQ(lvcal_run({"calibrate", "--alg", "1", "--data", path("data.json"), "--out", path("result.json")}).code, 0);
  const CliRun rep = lvcal_run({"report", "--result", path("result.json")});
  EXPECT_NE(rep.out.find("extrinsic translation along body axis 3"), std::string::npos) << rep.out;
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(lvcal_run({}).code, 1);
  EXPECT_EQ(lvcal_run({"bogus"}).code, 1);
  EXPECT_EQ(lvcal_run({"calibrate", "--alg", "4", "--data", path("nope.json"), "--out", path("r.json")}).code, 1);
  write("broken.json", "{\"schema_version\": \"1.0\", \"scenario\": ");
  const CliRun r = lvcal_run({"validate", "--data", path("broken.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("SchemaViolation"), std::string::npos);
  ASSERT_EQ(lvcal_run({"simulate", "--out", path("data.json")}).code, 0);
  const CliRun alg = lvcal_run({"calibrate", "--data", path("data.json"), "--out", path("r.json")});
  EXPECT_EQ(alg.code, 1);
  EXPECT_EQ(lvcal_run({"calibrate", "--alg", "1", "--max-iterations", "1", "--max-rejections", "0", "--data",
                       path("data.json"), "--out", path("r.json")})
                .code,
            1);
}

TEST_F(CliTest, ReportOfPriorIsZero) {
  ASSERT_EQ(lvcal_run({"simulate", "--out", path("data.json")}).code, 0);
  ASSERT_EQ(lvcal_run({"calibrate", "--alg", "1", "--max-iterations", "1", "--data", path("data.json"), "--out",
                       path("result.json")})
                .code,
            0);
  // rewrite the estimate as the prior mean
  Json j = Json::parse(read_text(path("result.json")));
  j["extrinsic"] = j["prior"]["mean"];
  write("prior.json", canonical_dump(j));
  const CliRun rep = lvcal_run({"report", "--result", path("prior.json")});
  EXPECT_NE(rep.out.find("|dphi|: 0.00 deg"), std::string::npos) << rep.out;
  EXPECT_NE(rep.out.find("dr: (0.00, 0.00, 0.00) cm"), std::string::npos) << rep.out;
}

TEST_F(CliTest, InputsAreNotModified) {
  ASSERT_EQ(lvcal_run({"simulate", "--out", path("data.json")}).code, 0);
  const std::string before = read_text(path("data.json"));
  ASSERT_EQ(lvcal_run({"calibrate", "--alg", "3", "--data", path("data.json"), "--out", path("r.json")}).code, 0);
  ASSERT_EQ(lvcal_run({"evaluate", "--data", path("data.json"), "--extrinsic", path("r.json"), "--out",
                       path("d.csv")})
                .code,
            0);
  EXPECT_EQ(read_text(path("data.json")), before);
}
