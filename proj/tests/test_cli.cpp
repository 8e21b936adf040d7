#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "wfda/cli.hpp"

using namespace wfda;
namespace fs = std::filesystem;

namespace {

struct Invocation {
  int code;
  std::string out, err;
};

Invocation run(std::vector<std::string> args) {
  args.insert(args.begin(), "wfda");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("wfda_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  /// Scenario-one training data written as curves and responses CSVs.
  void write_training(int n = 40) {
    SimConfig c;
    c.scenario = Scenario::S1;
    c.n = n;
    c.N = 20;
    c.test_size = 5;
    const SimData sd = generate(c, 11);
    std::ofstream x(path("x.csv")), y(path("y.csv"));
    write_dataset(x, sd.train);
    write_responses(y, sd.train);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SimulateIsDeterministic) {
  const std::vector<std::string> base{"simulate", "--scenario", "1", "--n", "50", "--N", "20", "--runs", "2", "--seed", "7"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", path("a.csv")});
  b.insert(b.end(), {"--out", path("b.csv")});
  const Invocation ra = run(a), rb = run(b);
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(rb.code, 0) << rb.err;
  const std::string ca = slurp(path("a.csv"));
  EXPECT_EQ(ca, slurp(path("b.csv")));
  EXPECT_EQ(ca.substr(0, ca.find('\n')), "scenario,method,n,N,sigma,run,mspe");
  // two methods by default, two runs each
  EXPECT_EQ(std::count(ca.begin(), ca.end(), '\n'), 5);
  EXPECT_NE(ra.out.find("AMSPE"), std::string::npos);
}

TEST_F(CliTest, SimulateSummaryJson) {
  const Invocation r = run({"--json", "simulate", "--scenario", "2", "--n", "30", "--N", "15", "--runs", "1", "--seed", "3",
                     "--methods", "flm,fixed:exp:1", "--summary", path("s.json")});
  ASSERT_EQ(r.code, 2) << r.out;  // exponential weight on a bounded design
  const Invocation ok = run({"--json", "simulate", "--scenario", "2", "--n", "30", "--N", "15", "--runs", "1", "--seed", "3",
                      "--methods", "flm", "--summary", path("s.json")});
  ASSERT_EQ(ok.code, 0) << ok.err;
  const json j = json::parse(slurp(path("s.json")));
  EXPECT_EQ(j["methods"][0]["method"], "flm");
  EXPECT_EQ(json::parse(ok.out)["methods"].size(), 1u);
}

TEST_F(CliTest, FitThenPredictMatchesLibrary) {
  write_training();
  const Invocation f = run({"fit", "--data", path("x.csv"), "--responses", path("y.csv"), "--M", "3", "--out", path("m.json")});
  ASSERT_EQ(f.code, 0) << f.err;
  const Invocation p = run({"predict", "--model", path("m.json"), "--data", path("x.csv"), "--out", path("p.csv")});
  ASSERT_EQ(p.code, 0) << p.err;

  FunctionalDataset data = parse_dataset(path("x.csv"), path("y.csv"));
  const WorkingGrid g = cli::choose_grid(data, UniformWeight{}, 0);
  const WflmModel m = fit(data, UniformWeight{}, g, 3);
  const Vector expect = predict(m, data, g);

  std::istringstream lines(slurp(path("p.csv")));
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "subject_id,prediction");
  std::size_t i = 0;
  while (std::getline(lines, line)) {
    const auto comma = line.find(',');
    ASSERT_LT(i, data.size());
    EXPECT_EQ(line.substr(0, comma), data.samples[i].subject_id);
    EXPECT_NEAR(std::stod(line.substr(comma + 1)), expect[static_cast<Eigen::Index>(i)], 1e-9);
    ++i;
  }
  EXPECT_EQ(i, data.size());
}

TEST_F(CliTest, FitChoosesMByCvAndReportsJson) {
  write_training();
  const Invocation f =
      run({"--json", "fit", "--data", path("x.csv"), "--responses", path("y.csv"), "--cv", "exact", "--out", path("m.json")});
  ASSERT_EQ(f.code, 0) << f.err;
  const json s = json::parse(f.out);
  EXPECT_GE(s["M"].get<int>(), 1);
  EXPECT_FALSE(s["cv_trace"].empty());
}

TEST_F(CliTest, PredictOutsideDomainFails) {
  write_training();
  ASSERT_EQ(run({"fit", "--data", path("x.csv"), "--responses", path("y.csv"), "--M", "2", "--out", path("m.json")}).code,
            0);
  std::ofstream(path("far.csv")) << "subject_id,time,value\nz,0.5,1\nz,1.5,2\n";
  const Invocation p = run({"predict", "--model", path("m.json"), "--data", path("far.csv")});
  EXPECT_EQ(p.code, 1);
  EXPECT_NE(p.err.find("error:"), std::string::npos) << p.err;
  EXPECT_NE(p.err.find("domain"), std::string::npos) << p.err;
}

TEST_F(CliTest, ScorePrintsLoocvs) {
  write_training();
  ASSERT_EQ(run({"fit", "--data", path("x.csv"), "--responses", path("y.csv"), "--M", "2", "--out", path("m.json")}).code,
            0);
  const Invocation s = run({"score", "--model", path("m.json"), "--data", path("x.csv"), "--responses", path("y.csv")});
  ASSERT_EQ(s.code, 0) << s.err;
  ASSERT_EQ(s.out.rfind("LOOCVS ", 0), 0u) << s.out;
  const double v = std::stod(s.out.substr(7));
  FunctionalDataset data = parse_dataset(path("x.csv"), path("y.csv"));
  const WorkingGrid g = cli::choose_grid(data, UniformWeight{}, 0);
  EXPECT_NEAR(v, loocvs(data, UniformWeight{}, g, 2), 1e-12);
  const Invocation j = run({"--json", "score", "--model", path("m.json"), "--data", path("x.csv"), "--responses", path("y.csv")});
  ASSERT_EQ(j.code, 0);
  EXPECT_EQ(json::parse(j.out)["loocvs"].get<double>(), v);
}

TEST_F(CliTest, SelectMeasureStep) {
  write_training(60);
  const Invocation r = run({"--json", "select-measure", "--data", path("x.csv"), "--responses", path("y.csv"), "--family",
                     "step", "--k-max", "1", "--out", path("sel.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(slurp(path("sel.json")));
  EXPECT_FALSE(j["trace"].empty());
  EXPECT_NO_THROW(weight_from_json(j["weight"]));
  const Invocation bad = run({"select-measure", "--data", path("x.csv"), "--responses", path("y.csv"), "--family", "exp",
                       "--domain", "bounded:0,1"});
  EXPECT_EQ(bad.code, 2);
}

TEST_F(CliTest, UsageErrors) {
  const Invocation unknown = run({"simulate", "--bogus"});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("usage error"), std::string::npos);
  EXPECT_NE(unknown.err.find("simulate"), std::string::npos);  // help text follows

  EXPECT_EQ(run({"fit", "--data", "x.csv"}).code, 2);
  EXPECT_EQ(run({"simulate", "--scenario", "3"}).code, 2);
  EXPECT_EQ(run({"simulate", "--scenario", "1", "--N", "random"}).code, 2);
  EXPECT_EQ(run({"simulate", "--methods", "lasso"}).code, 2);
  write_training();
  EXPECT_EQ(run({"fit", "--data", path("x.csv"), "--responses", path("y.csv"), "--cv", "slow"}).code, 2);
  EXPECT_EQ(run({"fit", "--data", path("x.csv"), "--responses", path("y.csv"), "--weight", "gamma:2"}).code, 2);
}

TEST_F(CliTest, RuntimeErrors) {
  const Invocation missing = run({"predict", "--model", path("none.json"), "--data", path("none.csv")});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("error:"), std::string::npos);
  std::ofstream(path("broken.csv")) << "subject_id,time,value\na,1,x\n";
  std::ofstream(path("y.csv")) << "subject_id,y\na,1\n";
  const Invocation broken = run({"fit", "--data", path("broken.csv"), "--responses", path("y.csv"), "--M", "1"});
  EXPECT_NE(broken.code, 0);
  EXPECT_NE(broken.err.find("broken.csv:2:"), std::string::npos) << broken.err;
}

TEST_F(CliTest, HelpExitsZero) {
  const Invocation r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("select-measure"), std::string::npos);
  EXPECT_EQ(run({"simulate", "--help"}).code, 0);
}
