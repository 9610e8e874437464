#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("pnstein_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run(const std::string& args) {
  const fs::path err = scratch() / "stderr.txt";
  const std::string cmd = std::string(PNSTEIN_CLI_PATH) + " " + args + " 2>" + err.string();
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

const std::string kOneZeroMean = "--mu-x 1 --mu-y 0 --sigma-x 1 --sigma-y 1 --rho 0 --n 1";

}  // namespace

TEST(Cli, MomentsJson) {
  const auto r = run("moments " + kOneZeroMean + " --kmax 8 --json");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["schema_version"], "1.0");
  EXPECT_EQ(j["command"], "moments");
  EXPECT_TRUE(j["timing_ms"].is_number_integer());
  const std::vector<double> want{1, 0, 2, 0, 30, 0, 1140, 0, 80220};
  EXPECT_EQ(j["results"]["values"].get<std::vector<double>>(), want);
  EXPECT_EQ(j["params_echo"]["kmax"], 8);
}

TEST(Cli, ExactMomentsAreRationalObjects) {
  const auto r = run("moments --mu-x 1/2 --mu-y 0 --sigma-x 1 --sigma-y 1 --rho 0 --n 1 --kmax 2 --exact --json");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  const auto& v = j["results"]["values"];
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[2]["num"], "5");
  EXPECT_EQ(v[2]["den"], "4");
}

TEST(Cli, OpsearchDeterminant) {
  const auto text = run("opsearch " + kOneZeroMean + " --order 3 --det");
  ASSERT_EQ(text.code, 0) << text.err;
  EXPECT_NE(text.out.find("125411328000"), std::string::npos);
  const auto r = run("opsearch " + kOneZeroMean + " --order 3 --rows 8 --det --json");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["results"]["determinant"]["num"], "125411328000");
  EXPECT_EQ(j["results"]["determinant"]["den"], "1");
  EXPECT_EQ(j["results"]["exists"], false);
  const auto four = json::parse(run("opsearch " + kOneZeroMean + " --order 4 --contains a1 --json").out);
  EXPECT_EQ(four["results"]["exists"], true);
  EXPECT_EQ(four["results"]["contains"]["a1"], true);
}

TEST(Cli, ExitCodes) {
  const auto singular = run("pdf " + kOneZeroMean + " --x 0");
  EXPECT_EQ(singular.code, 2);
  EXPECT_NE(singular.err.find("SingularPoint"), std::string::npos);
  EXPECT_EQ(run("frobnicate").code, 64);
  EXPECT_EQ(run("moments --kmax").code, 64);
  EXPECT_EQ(run("moments --rho 1").code, 2);
  EXPECT_EQ(run("moments --rho abc").code, 2);
  EXPECT_EQ(run("opsearch --mu-x nan --order 3").code, 2);
  const auto nc = run("pdf --mu-x 2 --mu-y 1.5 --sigma-x 1 --sigma-y 1 --rho 0.1 --n 1 --x 3 --max-outer 2 --no-fallback");
  EXPECT_EQ(nc.code, 3);
  EXPECT_NE(nc.err.find("NotConverged"), std::string::npos);
  EXPECT_EQ(run("operator --which a6 --mu-x 1 --mu-y 2 --rho 0.3").code, 2);
}

TEST(Cli, EnvelopeRoundTrip) {
  const auto first = run("stein-check --which a1 --f poly:2 --f gauss --mu-x 1 --mu-y 2 --sigma-x 1.5 --sigma-y 0.5 "
                         "--rho 0.4 --n 2 --count 20000 --batch 5000 --seed 17 --json");
  ASSERT_EQ(first.code, 0) << first.err;
  const fs::path env = scratch() / "envelope.json";
  std::ofstream(env) << first.out;
  const auto second = run("stein-check --params-json " + env.string() + " --json");
  ASSERT_EQ(second.code, 0) << second.err;
  const auto a = json::parse(first.out), b = json::parse(second.out);
  EXPECT_EQ(a["params_echo"], b["params_echo"]);
  EXPECT_EQ(a["results"], b["results"]);
  // explicit flags override the file
  const auto third = json::parse(run("stein-check --params-json " + env.string() + " --seed 18 --json").out);
  EXPECT_EQ(third["params_echo"]["seed"], 18);
  EXPECT_NE(third["results"]["estimate"], a["results"]["estimate"]);
}

TEST(Cli, CsvFormat) {
  const auto r = run("moments " + kOneZeroMean + " --kmax 3 --csv");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n') + 1), "k,raw_moment\r\n");
  EXPECT_NE(r.out.find("2,2\r\n"), std::string::npos);
  const auto p = run("pdf " + kOneZeroMean + " --x 0.3 --csv");
  ASSERT_EQ(p.code, 0) << p.err;
  const auto second = p.out.substr(p.out.find('\n') + 1);
  // 17 significant digits survive a round trip
  const double v = std::stod(second.substr(second.find(',') + 1));
  EXPECT_TRUE(std::isfinite(v));
}

TEST(Cli, SampleToFile) {
  const fs::path out = scratch() / "draws.csv";
  const auto r = run("sample " + kOneZeroMean + " --count 500 --batch 100 --seed 3 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string body = slurp(out);
  std::size_t lines = 0;
  for (char c : body) lines += c == '\n';
  EXPECT_EQ(lines, 501u);
  const auto again = run("sample " + kOneZeroMean + " --count 500 --batch 100 --seed 3 --csv");
  EXPECT_EQ(again.out, body);
}

TEST(Cli, BesselAndCf) {
  const auto b = json::parse(run("besselk --nu 0.5 --x 2 --json").out);
  EXPECT_NEAR(b["results"]["points"][0]["value"].get<double>(), std::cyl_bessel_k(0.5, 2.0), 1e-15);
  const auto c = json::parse(run("cf " + kOneZeroMean + " --t 0 --json").out);
  EXPECT_EQ(c["results"]["points"][0]["re"], 1.0);
  EXPECT_EQ(c["results"]["points"][0]["im"], 0.0);
  const auto ode = run("cf --mu-x 1 --mu-y 2 --rho 0.3 --n 3 --t 0.7 --check-ode --json");
  ASSERT_EQ(ode.code, 0) << ode.err;
  EXPECT_NE(ode.out.find("ode_residual"), std::string::npos);
}

TEST(Cli, OperatorAndApply) {
  const auto op = json::parse(run("operator --which a6 --mu-x 1 --mu-y 2 --sigma-x 1 --sigma-y 1 --rho 0 --n 1 --json").out);
  const auto& c = op["results"]["coefficients"];
  ASSERT_EQ(c.size(), 5u);
  const auto ap = json::parse(run("stein-apply --which a5 --mu-x 0 --mu-y 0 --rho 0 --n 1 --f poly:1 --x 3 --json").out);
  EXPECT_EQ(ap["results"]["points"][0]["value"], -8.0);
}

TEST(Cli, OdeCheck) {
  const auto r = json::parse(run("ode-check --mu-x 0 --mu-y 0 --rho 0.4 --n 3 --x 0.5 --x 1.5 --json").out);
  for (const auto& pt : r["results"]["points"]) EXPECT_LE(pt["residual"].get<double>(), 1e-8);
}

TEST(Cli, SubstitutionIdentity) {
  const auto r = run("stein-apply --which a1 --substitution --mu-x 1.5 --mu-y 0.75 --sigma-x 2 --sigma-y 1 --rho 0.3 "
                     "--n 3 --f sin:1.3 --x -2 --x 0.5 --json");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["results"]["identity"], "a1_to_a2");
  EXPECT_LE(j["results"]["max_relative"].get<double>(), 1e-12);
  EXPECT_EQ(run("stein-apply --which a2 --substitution --x 1").code, 2);
  // the identity needs equal ratios
  EXPECT_EQ(run("stein-apply --which a1 --substitution --mu-x 1 --mu-y 2 --x 1").code, 2);
}
