#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "elm/cli.hpp"

using namespace elm;

#ifndef ELM_CLI_PATH
#define ELM_CLI_PATH "elm"
#endif

namespace {

fs::path scratch() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / ("elm_cli_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path write_config(const std::string& name, const json& j) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

int binary(const std::string& args) {
  const std::string cmd = std::string(ELM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json teacher_config() {
  return {{"seed", 2},
          {"task", {{"kind", "teacher"}, {"channels", 6}, {"train_ms", 3000}, {"test_ms", 1000}, {"sequence_ms", 250}}},
          {"model", {{"kind", "elm"}, {"d_m", 3}, {"d_mlp", 6}, {"tau_m_init", {1, 100}}}},
          {"train", {{"epochs", 2}, {"batch_size", 4}, {"lr", 0.01}, {"val_fraction", 0.25}}}};
}

// Generates the shared teacher dataset once.
const fs::path& teacher_dataset() {
  static const fs::path dir = [] {
    const fs::path d = scratch() / "teacher_ds";
    const auto cfg = write_config("teacher.json", teacher_config());
    const CliRun r = cli({"gen", "--config", cfg.string(), "--out", d.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }();
  return dir;
}

std::vector<std::string> csv_lines(const fs::path& p) {
  std::vector<std::string> lines;
  std::istringstream in(slurp(p));
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

}  // namespace

TEST(CliGen, SameSeedIsByteIdentical) {
  const auto cfg = write_config("gen.json", teacher_config());
  const fs::path a = scratch() / "gen_a", b = scratch() / "gen_b", c = scratch() / "gen_c";
  EXPECT_EQ(cli({"gen", "--config", cfg.string(), "--out", a.string()}).code, 0);
  EXPECT_EQ(cli({"gen", "--config", cfg.string(), "--out", b.string()}).code, 0);
  EXPECT_EQ(cli({"gen", "--config", cfg.string(), "--out", c.string(), "--seed", "3"}).code, 0);
  for (const char* f : {"inputs.bin", "targets.bin", "meta.json", "config.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  EXPECT_NE(slurp(a / "inputs.bin"), slurp(c / "inputs.bin"));
}

TEST(CliGen, NonEmptyOutputNeedsForce) {
  const auto cfg = write_config("force.json", teacher_config());
  const fs::path d = scratch() / "force";
  ASSERT_EQ(cli({"gen", "--config", cfg.string(), "--out", d.string()}).code, 0);
  const CliRun again = cli({"gen", "--config", cfg.string(), "--out", d.string()});
  EXPECT_EQ(again.code, kExitConfigError);
  EXPECT_NE(again.err.find("not empty"), std::string::npos);
  EXPECT_EQ(cli({"gen", "--config", cfg.string(), "--out", d.string(), "--force"}).code, 0);
}

TEST(CliConfig, ErrorsExitWithTwo) {
  json bad = teacher_config();
  bad["train"]["learning_rate"] = 0.1;
  const auto unknown = write_config("unknown.json", bad);
  const CliRun r = cli({"gen", "--config", unknown.string(), "--out", (scratch() / "unused1").string()});
  EXPECT_EQ(r.code, kExitConfigError);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos);
  EXPECT_FALSE(fs::exists(scratch() / "unused1"));

  const fs::path broken = scratch() / "broken.json";
  std::ofstream(broken) << "{\"seed\": ";
  EXPECT_EQ(cli({"gen", "--config", broken.string(), "--out", (scratch() / "unused2").string()}).code, kExitConfigError);
  EXPECT_EQ(cli({"gen", "--config", (scratch() / "missing.json").string(), "--out", "x"}).code, kExitConfigError);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitConfigError);
  EXPECT_EQ(cli({"gradcheck", "gru"}).code, kExitConfigError);
}

TEST(CliTrain, ZeroEpochsWritesInitialRowAndCheckpoint) {
  const auto cfg = write_config("train0.json", teacher_config());
  const fs::path out = scratch() / "train0";
  const CliRun r = cli({"train", "--config", cfg.string(), "--dataset", teacher_dataset().string(), "--out", out.string(),
                     "--epochs", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = csv_lines(out / "metrics.csv");
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], "epoch,split,loss,rmse,auc,accuracy,lr");
  EXPECT_EQ(lines[1].substr(0, 6), "0,val,");
  const json info = json::parse(slurp(out / "ckpt.json"));
  EXPECT_EQ(info["epoch"], 0);
  EXPECT_TRUE(fs::exists(out / "params.bin"));
}

TEST(CliTrain, EvalReproducesValidationMetrics) {
  const auto cfg = write_config("train2.json", teacher_config());
  const fs::path out = scratch() / "train2";
  const CliRun r = cli({"train", "--config", cfg.string(), "--dataset", teacher_dataset().string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(csv_lines(out / "metrics.csv").size(), 6u);  // header, epoch 0 val, train+val for epochs 1 and 2
  const json info = json::parse(slurp(out / "ckpt.json"));
  const fs::path report = scratch() / "eval_val.json";
  const CliRun e = cli({"eval", "--checkpoint", out.string(), "--dataset", teacher_dataset().string(), "--split", "val",
                     "--out", report.string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(e.err.find("warning"), std::string::npos);
  const json rep = json::parse(slurp(report));
  for (const char* m : {"loss", "rmse", "auc"}) {
    if (info["metrics"]["val"][m].is_null()) continue;
    EXPECT_NEAR(rep["metrics"][m].get<double>(), info["metrics"]["val"][m].get<double>(), 1e-12) << m;
  }
  const CliRun t = cli({"eval", "--checkpoint", out.string(), "--dataset", teacher_dataset().string()});
  ASSERT_EQ(t.code, 0);
  EXPECT_NE(t.out.find("test:"), std::string::npos);
}

TEST(CliTrain, ThreadCountDoesNotChangeResults) {
  const auto cfg = write_config("threads.json", teacher_config());
  const fs::path a = scratch() / "threads1", b = scratch() / "threads3";
  ASSERT_EQ(cli({"train", "--config", cfg.string(), "--dataset", teacher_dataset().string(), "--out", a.string()}).code, 0);
  ASSERT_EQ(cli({"train", "--config", cfg.string(), "--dataset", teacher_dataset().string(), "--out", b.string(),
                 "--threads", "3"})
                .code,
            0);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "params.bin"), slurp(b / "params.bin"));
}

TEST(CliTrain, DivergenceExitsWithThreeAndKeepsPartialLog) {
  json c = teacher_config();
  c["model"]["lambda"] = 1e6;
  const auto cfg = write_config("diverge.json", c);
  const fs::path out = scratch() / "diverge";
  const CliRun r = cli({"train", "--config", cfg.string(), "--dataset", teacher_dataset().string(), "--out", out.string()});
  EXPECT_EQ(r.code, kExitDivergence);
  EXPECT_NE(r.err.find("diverged"), std::string::npos);
  const auto lines = csv_lines(out / "metrics.csv");
  EXPECT_GE(lines.size(), 2u);
  EXPECT_TRUE(json::parse(slurp(out / "ckpt.json"))["divergent"].get<bool>());
}

TEST(CliGradcheck, PassAndCorruptedFail) {
  const CliRun ok = cli({"gradcheck", "elm", "--seed", "1"});
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("PASS"), std::string::npos);
  const CliRun bad = cli({"gradcheck", "elm", "--corrupt"});
  EXPECT_EQ(bad.code, kExitGradCheckFailed);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
  const CliRun lif = cli({"gradcheck", "lif"});
  EXPECT_EQ(lif.code, 0);
  EXPECT_NE(lif.out.find("threshold=none"), std::string::npos);
  EXPECT_EQ(cli({"gradcheck", "lstm", "--sizes", "3,2,5,2"}).code, 0);
  EXPECT_EQ(cli({"gradcheck", "lstm", "--sizes", "3,2,5"}).code, kExitConfigError);
}

TEST(CliSweep, OneRowPerValue) {
  json c = teacher_config();
  c["train"]["epochs"] = 1;
  const auto cfg = write_config("sweep.json", c);
  const fs::path out = scratch() / "sweep";
  const CliRun r = cli({"sweep", "--config", cfg.string(), "--dataset", teacher_dataset().string(), "--out", out.string(),
                     "--axis", "d_m", "--values", "1,2", "--repeats", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto table = csv_lines(out / "sweep.csv");
  ASSERT_EQ(table.size(), 3u);
  EXPECT_EQ(table[1].substr(0, 10), "d_m,1,2,0,");
  EXPECT_EQ(csv_lines(out / "runs.csv").size(), 5u);
  EXPECT_EQ(cli({"sweep", "--config", cfg.string(), "--dataset", teacher_dataset().string(), "--out",
                 (scratch() / "sweep_bad").string(), "--axis", "tau_m", "--values", "5"})
                .code,
            kExitConfigError);
}

TEST(CliBinary, ExitCodesFromTheExecutable) {
  EXPECT_EQ(binary("gradcheck linear_elm"), 0);
  EXPECT_EQ(binary("gradcheck elm --corrupt"), kExitGradCheckFailed);
  EXPECT_EQ(binary(""), kExitConfigError);
  EXPECT_EQ(binary("--help"), 0);
}
