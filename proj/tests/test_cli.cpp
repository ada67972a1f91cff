#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("certiprop_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
    write("id.json", R"({"input_dim": 2, "layers": [{"type": "dense", "W": [[1, 0], [0, 1]], "b": [0, 0]}]})");
    write("x.json", R"({"center": [0.25, -1.0], "eps": 0.5})");
    write("x3.json", R"({"center": [0, 0, 0], "eps": 0.5})");
    write("mlp.json", R"({"input_dim": 2, "layers": [
      {"type": "dense", "W": [[1, -1], [0.5, 2], [-1, 0.25]], "b": [0.1, 0, -0.2]},
      {"type": "relu"},
      {"type": "dense", "W": [[1, 0, 1], [-1, 1, 0]], "b": [0, 0.3]},
      {"type": "softmax"}]})");
    write("huge.json", R"({"input_dim": 2, "layers": [
      {"type": "dense", "W": [[1e300, 1e300], [1e300, -1e300]], "b": [0, 0]},
      {"type": "dense", "W": [[1e300, 1e300], [1e300, 1e300]], "b": [0, 0]}]})");
    write("big.json", R"({"center": [1e10, 1e10], "eps": 0.5})");
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write(const std::string& name, const std::string& text) { std::ofstream(dir_ / name) << text; }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string read(const std::string& name) const {
    std::ifstream in(dir_ / name);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  CliRun run(const std::string& args) const {
    const std::string cmd = std::string(CERTIPROP_CLI) + " " + args + " 2>" + path("stderr.txt");
    CliRun r{0, {}};
    FILE* p = ::popen(cmd.c_str(), "r");
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int st = ::pclose(p);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
  }
  std::string common(const std::string& model, const std::string& input) const {
    return "--model " + path(model) + " --input " + path(input);
  }

  fs::path dir_;
};

nlohmann::json parse(const std::string& s) { return nlohmann::json::parse(s); }

}  // namespace

TEST_F(CliTest, IdentityIbpIsCenterPlusMinusEps) {
  const CliRun r = run("propagate --method ibp " + common("id.json", "x.json"));
  ASSERT_EQ(r.code, 0) << read("stderr.txt");
  const auto j = parse(r.out);
  EXPECT_EQ(std::stod(j["lo"][0].get<std::string>()), -0.25);
  EXPECT_EQ(std::stod(j["hi"][0].get<std::string>()), 0.75);
  EXPECT_EQ(std::stod(j["lo"][1].get<std::string>()), -1.5);
  EXPECT_EQ(std::stod(j["hi"][1].get<std::string>()), -0.5);
  EXPECT_EQ(j["metadata"]["version"], "0.1.0");
  EXPECT_EQ(j["metadata"]["method"], "ibp");
}

TEST_F(CliTest, EpsFlagOverridesRegion) {
  const CliRun r = run("propagate --method aa --eps 0 " + common("id.json", "x.json"));
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(std::stod(parse(r.out)["max_width"].get<std::string>()), 0.0);
}

TEST_F(CliTest, SingleSampleLowerBoundIsPoint) {
  const CliRun r = run("propagate --method lb --samples 1 " + common("mlp.json", "x.json"));
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(std::stod(parse(r.out)["max_width"].get<std::string>()), 0.0);
}

TEST_F(CliTest, RepeatRunsAreByteIdentical) {
  for (const char* m : {"ibp", "aa", "da", "lb"}) {
    const std::string base = std::string("propagate --method ") + m + " " + common("mlp.json", "x.json");
    const CliRun a = run(base + " --threads 1"), b = run(base + " --threads 3"), c = run(base);
    ASSERT_EQ(a.code, 0) << m;
    EXPECT_EQ(a.out, b.out) << m;
    EXPECT_EQ(a.out, c.out) << m;
  }
  const CliRun w1 = run("wrapping --dim 4 --layers 2 --trials 3 --threads 1");
  const CliRun w2 = run("wrapping --dim 4 --layers 2 --trials 3 --threads 2");
  ASSERT_EQ(w1.code, 0);
  EXPECT_EQ(w1.out, w2.out);
}

TEST_F(CliTest, CsvOutputHasMetadataHeader) {
  const CliRun r = run("propagate --method da --out " + path("r.csv") + " " + common("mlp.json", "x.json"));
  ASSERT_EQ(r.code, 0);
  const std::string csv = read("r.csv");
  EXPECT_NE(csv.find("# version=0.1.0"), std::string::npos);
  EXPECT_NE(csv.find("# db_strategy=hybrid"), std::string::npos);
  EXPECT_NE(csv.find("method,coord,lo,hi,width"), std::string::npos);
}

TEST_F(CliTest, CompareWithDa) {
  const CliRun r = run("compare --with-da " + common("mlp.json", "x.json"));
  ASSERT_EQ(r.code, 0) << read("stderr.txt");
  for (const char* m : {"LB,", "IBP,", "AA,", "DA,"}) EXPECT_NE(r.out.find(m), std::string::npos);
  EXPECT_EQ(r.out.find(",0\n"), std::string::npos);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run("propagate --method ibp " + common("missing.json", "x.json")).code, 2);
  EXPECT_EQ(run("propagate --method ibp --bogus " + common("id.json", "x.json")).code, 2);
  EXPECT_EQ(run("propagate --method ibp " + common("id.json", "x3.json")).code, 2);
  EXPECT_EQ(run("propagate --method nope " + common("id.json", "x.json")).code, 2);
  EXPECT_EQ(run("propagate --method ibp --softmax maybe " + common("id.json", "x.json")).code, 2);
  EXPECT_EQ(run("propagate --method ibp " + common("huge.json", "big.json")).code, 3);
  EXPECT_EQ(run("sweep --model " + path("mlp.json") + " --points " + path("x.json") + " --eps-grid ''").code, 2);
}

TEST_F(CliTest, LemmaStatsSmallDim) {
  const CliRun r = run("lemma-stats --dim 3 --samples 1000");
  ASSERT_EQ(r.code, 0) << read("stderr.txt");
  EXPECT_NE(r.out.find("n,E_hat,E_closed"), std::string::npos);
  EXPECT_NE(r.out.find("\n3,"), std::string::npos);
  EXPECT_NE(r.out.find(",1.5,"), std::string::npos);
}

TEST_F(CliTest, WrappingSmoke) {
  const CliRun r = run("wrapping --dim 2 --layers 1 --trials 1");
  ASSERT_EQ(r.code, 0) << read("stderr.txt");
  EXPECT_NE(r.out.find("n,k,trial,layer,method,width_ratio"), std::string::npos);
}

TEST_F(CliTest, SweepOnPoints) {
  write("pts.json", R"({"points": [[0.1, 0.2], [-0.3, 0.4]]})");
  const CliRun r = run("sweep --model " + path("mlp.json") + " --points " + path("pts.json") +
                    " --eps-grid 0.001,0.01 --methods lb,ibp,aa,da --samples 100");
  ASSERT_EQ(r.code, 0) << read("stderr.txt");
  EXPECT_NE(r.out.find("eps,method,mean_max_diameter"), std::string::npos);
  EXPECT_NE(r.out.find("0.01,DA,"), std::string::npos);
}
