#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace abp;
using namespace abp::testing;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run_cli(const std::string& args, const std::filesystem::path& dir) {
  const auto out = dir / "stdout.txt";
  const std::string cmd = std::string("\"") + ABP_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                          (dir / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string toy() { return (std::filesystem::path(ABP_SOURCE_DIR) / "configs/toy.json").string(); }

}  // namespace

TEST(Cli, HelpAndUnknownSubcommand) {
  const auto dir = temp_dir("cli_help");
  EXPECT_EQ(run_cli("--help", dir).code, 0);
  EXPECT_EQ(run_cli("frobnicate", dir).code, 2);
}

TEST(Cli, MissingFilesAreUsageErrors) {
  const auto dir = temp_dir("cli_missing");
  EXPECT_EQ(run_cli("prune --weights /nonexistent/w.json --data /nonexistent/d.csv --abp-m --q 0.5", dir).code, 2);
  EXPECT_EQ(run_cli("train --data /nonexistent/d.csv", dir).code, 2);
  EXPECT_EQ(run_cli("experiment --config /nonexistent/c.json", dir).code, 2);
}

TEST(Cli, TrainIsDeterministicAndPruneValidatesFlags) {
  const auto dir = temp_dir("cli_train");
  const auto a = dir / "a", b = dir / "b";
  ASSERT_EQ(run_cli("train --config \"" + toy() + "\" --epochs 3 --out \"" + a.string() + "\"", dir).code, 0);
  ASSERT_EQ(run_cli("train --config \"" + toy() + "\" --epochs 3 --out \"" + b.string() + "\"", dir).code, 0);
  for (const char* f : {"weights.json", "scaler.json", "train_log.csv", "effective_config.json", "data.csv"})
    EXPECT_TRUE(std::filesystem::exists(a / f)) << f;
  EXPECT_EQ(slurp(a / "weights.json"), slurp(b / "weights.json"));

  const std::string common = "prune --weights \"" + (a / "weights.json").string() + "\" --data \"" +
                             (a / "data.csv").string() + "\" --target y --scaler \"" + (a / "scaler.json").string() +
                             "\" ";
  EXPECT_EQ(run_cli(common + "--abp-m --abp-l --q 0.5 --lambda 0.01", dir).code, 2);
  EXPECT_EQ(run_cli(common + "--abp-m", dir).code, 2);
  EXPECT_EQ(run_cli(common + "--baseline --p 0.5 --q 0.5", dir).code, 2);

  const auto out = dir / "pruned";
  ASSERT_EQ(run_cli(common + "--abp-l --lambda 0.01 --out \"" + out.string() + "\"", dir).code, 0);
  const Network original = load_weights(a / "weights.json");
  const Network pruned = load_weights(out / "pruned_weights.json");
  EXPECT_EQ(pruned.layer_dims(), original.layer_dims());
  const auto report = nlohmann::json::parse(slurp(out / "prune_report.json"));
  EXPECT_EQ(report.at("kept_params").get<Index>(), count_params(pruned).nonzero);
  EXPECT_TRUE(std::filesystem::exists(out / "prune_records.csv"));
}

TEST(Cli, BoundMatchesHandFixture) {
  const auto dir = temp_dir("cli_bound");
  MatrixXd w(1, 4);
  w << 1, 0, 0, 0;
  save_weights(make_network({w}, Activation::identity), dir / "w.json");
  Dataset d;
  d.features = MatrixXd(2, 3);
  d.features << 1, -1, 0.5, -1, 1, -0.5;
  d.targets = VectorXd::Zero(2);
  save_csv(d, dir / "d.csv");
  const std::string base = "bound --weights \"" + (dir / "w.json").string() + "\" --data \"" +
                           (dir / "d.csv").string() + "\" --target y --q 0.5 --m 4 --S 1 --C 1 ";
  const CliRun t = run_cli(base + "--variant theorem1", dir);
  ASSERT_EQ(t.code, 0) << slurp(dir / "stderr.txt");
  EXPECT_NEAR(nlohmann::json::parse(t.out).at("total").get<double>(), 0.125, 1e-15);
  const CliRun m = run_cli(base + "--variant magnitude", dir);
  ASSERT_EQ(m.code, 0);
  EXPECT_NEAR(nlohmann::json::parse(m.out).at("total").get<double>(), 0.25, 1e-15);
  const CliRun c = run_cli(base + "--variant classification --base-error 0.1", dir);
  ASSERT_EQ(c.code, 0);
  EXPECT_NEAR(nlohmann::json::parse(c.out).at("total").get<double>(), 0.325, 1e-15);
  EXPECT_EQ(run_cli(base + "--variant nonsense", dir).code, 2);
  EXPECT_EQ(run_cli(base + "--variant theorem1 --scope surviving", dir).code, 2);
}
