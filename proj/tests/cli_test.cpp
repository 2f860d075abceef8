#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

// End-to-end checks of the installed command-line interface: each test shells
// out to the real binary (path injected via TACSEG_CLI_PATH) and asserts on
// exit codes and produced files only.

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
#ifdef TACSEG_CLI_PATH
  return TACSEG_CLI_PATH;
#else
  const char* p = std::getenv("TACSEG_CLI_PATH");
  return p ? p : "";
#endif
}

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("tacseg_cli_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Runs the CLI with the given arguments, captures combined output to `log`,
// and returns the process exit code.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd =
      cli_path() + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc == -1 || !WIFEXITED(rc)) return -1;
  return WEXITSTATUS(rc);
}

// Minimal model/data geometry so each train step costs milliseconds.
void write_tiny_config(const fs::path& p, bool with_seed) {
  std::ofstream os(p);
  os << "[run]\n";
  if (with_seed) os << "seed = 11\n";
  os << "epochs = 1\n"
        "lr = 0.005\n"
        "[data]\n"
        "train_images = 3\n"
        "eval_images = 2\n"
        "height = 16\n"
        "width = 16\n"
        "min_cells = 1\n"
        "max_cells = 2\n"
        "[model]\n"
        "depth = 2\n"
        "stage_channels = 4,6\n"
        "embed_dim = 8\n"
        "patch = 4\n"
        "heads = 2\n";
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_FALSE(cli_path().empty())
        << "TACSEG_CLI_PATH must point at the built binary";
  }
};

TEST_F(CliTest, GenDataWritesLayout) {
  const fs::path dir = temp_dir("gendata");
  const int rc = run_cli("gen-data --seed 3 --n 4 --height 16 --width 16 "
                         "--out " + (dir / "data").string(),
                         dir / "log.txt");
  EXPECT_EQ(rc, 0) << read_file(dir / "log.txt");
  for (int i = 0; i < 4; ++i) {
    char name[16];
    std::snprintf(name, sizeof(name), "img_%03d", i);
    const fs::path img_dir = dir / "data" / "train" / name;
    EXPECT_TRUE(fs::exists(img_dir / "image.ppm")) << img_dir;
    EXPECT_TRUE(fs::exists(img_dir / "inst_0.pgm")) << img_dir;
  }
  fs::remove_all(dir);
}

TEST_F(CliTest, GenDataIsDeterministicPerSeed) {
  const fs::path dir = temp_dir("gendata_det");
  ASSERT_EQ(run_cli("gen-data --seed 9 --n 2 --height 16 --width 16 --out " +
                        (dir / "a").string(),
                    dir / "log_a.txt"),
            0);
  ASSERT_EQ(run_cli("gen-data --seed 9 --n 2 --height 16 --width 16 --out " +
                        (dir / "b").string(),
                    dir / "log_b.txt"),
            0);
  ASSERT_EQ(run_cli("gen-data --seed 10 --n 2 --height 16 --width 16 --out " +
                        (dir / "c").string(),
                    dir / "log_c.txt"),
            0);
  const std::string img_a = read_file(dir / "a/train/img_000/image.ppm");
  const std::string img_b = read_file(dir / "b/train/img_000/image.ppm");
  const std::string img_c = read_file(dir / "c/train/img_000/image.ppm");
  ASSERT_FALSE(img_a.empty());
  EXPECT_EQ(img_a, img_b);
  EXPECT_NE(img_a, img_c);
  EXPECT_EQ(read_file(dir / "a/train/img_001/inst_0.pgm"),
            read_file(dir / "b/train/img_001/inst_0.pgm"));
  fs::remove_all(dir);
}

TEST_F(CliTest, GenDataRefusesNonEmptyWithoutForce) {
  const fs::path dir = temp_dir("gendata_force");
  const std::string base = "gen-data --seed 3 --n 1 --height 16 --width 16 "
                           "--out " + (dir / "data").string();
  ASSERT_EQ(run_cli(base, dir / "log1.txt"), 0);
  EXPECT_EQ(run_cli(base, dir / "log2.txt"), 2);
  EXPECT_NE(read_file(dir / "log2.txt").find("--force"), std::string::npos);
  EXPECT_EQ(run_cli(base + " --force", dir / "log3.txt"), 0);
  fs::remove_all(dir);
}

TEST_F(CliTest, GenDataRequiresSeed) {
  const fs::path dir = temp_dir("gendata_noseed");
  EXPECT_EQ(run_cli("gen-data --n 1 --out " + (dir / "d").string(),
                    dir / "log.txt"),
            2);
  fs::remove_all(dir);
}

TEST_F(CliTest, TrainWritesRunArtifacts) {
  const fs::path dir = temp_dir("train");
  write_tiny_config(dir / "run.ini", /*with_seed=*/true);
  const int rc = run_cli("train --config " + (dir / "run.ini").string() +
                             " --out " + (dir / "out").string(),
                         dir / "log.txt");
  ASSERT_EQ(rc, 0) << read_file(dir / "log.txt");
  EXPECT_TRUE(fs::exists(dir / "out/config.resolved.txt"));
  EXPECT_TRUE(fs::exists(dir / "out/train_log.txt"));
  EXPECT_TRUE(fs::exists(dir / "out/checkpoint/manifest.txt"));
  EXPECT_NE(read_file(dir / "out/train_log.txt").find("epoch"),
            std::string::npos);
  // at least the decoder head must have been checkpointed
  EXPECT_TRUE(fs::exists(dir / "out/checkpoint/tensors/decoder.head.w.ftnsr"));
  fs::remove_all(dir);
}

TEST_F(CliTest, TrainWithoutSeedIsConfigError) {
  const fs::path dir = temp_dir("train_noseed");
  write_tiny_config(dir / "run.ini", /*with_seed=*/false);
  const int rc = run_cli("train --config " + (dir / "run.ini").string() +
                             " --out " + (dir / "out").string(),
                         dir / "log.txt");
  EXPECT_EQ(rc, 2);
  EXPECT_NE(read_file(dir / "log.txt").find("seed is required"),
            std::string::npos);
  fs::remove_all(dir);
}

TEST_F(CliTest, UnknownOverrideKeyIsConfigError) {
  const fs::path dir = temp_dir("train_badkey");
  write_tiny_config(dir / "run.ini", /*with_seed=*/true);
  const int rc = run_cli("train --config " + (dir / "run.ini").string() +
                             " --set run.nonsense=1 --out " +
                             (dir / "out").string(),
                         dir / "log.txt");
  EXPECT_EQ(rc, 2);
  EXPECT_NE(read_file(dir / "log.txt").find("unknown config key"),
            std::string::npos);
  fs::remove_all(dir);
}

TEST_F(CliTest, UnknownFlagIsConfigError) {
  const fs::path dir = temp_dir("badflag");
  EXPECT_EQ(run_cli("train --no-such-flag", dir / "log.txt"), 2);
  EXPECT_EQ(run_cli("frobnicate", dir / "log2.txt"), 2);
  fs::remove_all(dir);
}

TEST_F(CliTest, HelpExitsZero) {
  const fs::path dir = temp_dir("help");
  EXPECT_EQ(run_cli("--help", dir / "log.txt"), 0);
  EXPECT_NE(read_file(dir / "log.txt").find("train"), std::string::npos);
  fs::remove_all(dir);
}

TEST_F(CliTest, EvalReportsAndValidatesGeometry) {
  const fs::path dir = temp_dir("eval");
  write_tiny_config(dir / "run.ini", /*with_seed=*/true);
  ASSERT_EQ(run_cli("train --config " + (dir / "run.ini").string() +
                        " --out " + (dir / "out").string(),
                    dir / "log_train.txt"),
            0);

  // matching 16x16 dataset -> report files with the pinned CSV header
  ASSERT_EQ(run_cli("gen-data --seed 5 --n 2 --height 16 --width 16 --out " +
                        (dir / "data16").string() + " --split eval",
                    dir / "log_gen16.txt"),
            0);
  const int rc_eval =
      run_cli("eval " + (dir / "out/checkpoint").string() + " " +
                  (dir / "data16/eval").string() + " --out " +
                  (dir / "report").string(),
              dir / "log_eval.txt");
  ASSERT_EQ(rc_eval, 0) << read_file(dir / "log_eval.txt");
  const std::string csv = read_file(dir / "report/report.csv");
  EXPECT_EQ(csv.rfind("variant,miou,n_images,n_excluded,n_unmatched_pred\n", 0),
            0u);
  EXPECT_TRUE(fs::exists(dir / "report/report.txt"));

  // 48x48 clears the stride-divisibility gate but mismatches the checkpoint
  ASSERT_EQ(run_cli("gen-data --seed 5 --n 1 --height 48 --width 48 --out " +
                        (dir / "data48").string() + " --split eval",
                    dir / "log_gen48.txt"),
            0);
  EXPECT_EQ(run_cli("eval " + (dir / "out/checkpoint").string() + " " +
                        (dir / "data48/eval").string() + " --out " +
                        (dir / "report48").string(),
                    dir / "log_eval48.txt"),
            2);
  EXPECT_NE(read_file(dir / "log_eval48.txt").find("checkpoint expects"),
            std::string::npos);

  // 18x18 is not divisible by the depth-2 downsampling factor of 4
  ASSERT_EQ(run_cli("gen-data --seed 5 --n 1 --height 18 --width 18 --out " +
                        (dir / "data18").string() + " --split eval",
                    dir / "log_gen18.txt"),
            0);
  EXPECT_EQ(run_cli("eval " + (dir / "out/checkpoint").string() + " " +
                        (dir / "data18/eval").string() + " --out " +
                        (dir / "report18").string(),
                    dir / "log_eval18.txt"),
            2);
  EXPECT_NE(read_file(dir / "log_eval18.txt").find("divisible"),
            std::string::npos);
  fs::remove_all(dir);
}

TEST_F(CliTest, ResumeContinuesAndRejectsConfigChanges) {
  const fs::path dir = temp_dir("resume");
  write_tiny_config(dir / "run.ini", /*with_seed=*/true);
  const std::string common = "train --config " + (dir / "run.ini").string() +
                             " --out " + (dir / "out").string();
  ASSERT_EQ(run_cli(common, dir / "log1.txt"), 0);

  // same model, more epochs -> picks up at epoch 1
  ASSERT_EQ(run_cli(common + " --resume --set run.epochs=2",
                    dir / "log2.txt"),
            0);
  const std::string log = read_file(dir / "out/train_log.txt");
  EXPECT_NE(log.find("resuming"), std::string::npos);
  EXPECT_NE(log.find("epoch   1"), std::string::npos);

  // changed architecture -> refused
  EXPECT_EQ(run_cli(common + " --resume --set model.embed_dim=16",
                    dir / "log3.txt"),
            2);
  EXPECT_NE(read_file(dir / "log3.txt")
                .find("resuming across config changes is unsupported"),
            std::string::npos);
  fs::remove_all(dir);
}

TEST_F(CliTest, GradcheckScopeRunsClean) {
  const fs::path dir = temp_dir("gradcheck");
  const int rc = run_cli("gradcheck --scope fusion --seeds 2", dir / "log.txt");
  EXPECT_EQ(rc, 0) << read_file(dir / "log.txt");
  const std::string out = read_file(dir / "log.txt");
  EXPECT_NE(out.find("fusion/fusion"), std::string::npos);
  EXPECT_NE(out.find("gradcheck PASS"), std::string::npos);
  EXPECT_EQ(run_cli("gradcheck --scope bogus", dir / "log2.txt"), 2);
  fs::remove_all(dir);
}

}  // namespace
