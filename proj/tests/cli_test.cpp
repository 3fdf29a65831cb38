// Drives the installed CLI binary end to end: exit codes, CSV schemas,
// run-directory artifacts, determinism.
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gridrl/run_config.hpp"

namespace fs = std::filesystem;

namespace {

const char* kCli = GRIDRL_CLI_PATH;

struct RunResult {
    int exit_code;
    std::string out;
};

RunResult run_cli(const std::string& args, const fs::path& cwd) {
    const fs::path out_file = cwd / "cmd_output.txt";
    const std::string cmd = "cd '" + cwd.string() + "' && '" + std::string(kCli) + "' " + args +
                            " > '" + out_file.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class CliTest : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("gridrl_cli_" +
                std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    // small, fast training invocation
    std::string tiny_train_args(const std::string& extra) {
        return "train --minigame beacon --arch baseline --workers 1 --seed 7 --episodes 4 "
               "--resolution 8 --episode_cap 20 --eval_interval 2 --eval_episodes 2 "
               "--checkpoint_interval 2 " +
               extra;
    }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, TrainIsDeterministicAcrossRuns) {
    const RunResult r1 = run_cli(tiny_train_args("--out run1"), dir_);
    const RunResult r2 = run_cli(tiny_train_args("--out run2"), dir_);
    ASSERT_EQ(r1.exit_code, 0) << r1.out;
    ASSERT_EQ(r2.exit_code, 0) << r2.out;
    EXPECT_EQ(read_file(dir_ / "run1/train_log.csv"), read_file(dir_ / "run2/train_log.csv"));
    EXPECT_EQ(read_file(dir_ / "run1/final.ckpt"), read_file(dir_ / "run2/final.ckpt"));
    EXPECT_EQ(read_file(dir_ / "run1/best.ckpt"), read_file(dir_ / "run2/best.ckpt"));
    EXPECT_EQ(read_file(dir_ / "run1/eval_points.csv"), read_file(dir_ / "run2/eval_points.csv"));

    const auto lines = read_lines(dir_ / "run1/train_log.csv");
    ASSERT_GE(lines.size(), 5u);
    EXPECT_EQ(lines[0], std::string(gridrl::kTrainLogHeader));
    // single-worker deterministic mode blanks the wallclock column
    EXPECT_TRUE(lines[1].ends_with(",0")) << lines[1];
    // periodic checkpoints were requested every 2 episodes
    EXPECT_TRUE(fs::exists(dir_ / "run1/ckpt_ep000002.ckpt"));
    EXPECT_TRUE(fs::exists(dir_ / "run1/config.echo"));
    const std::string echo = read_file(dir_ / "run1/config.echo");
    EXPECT_NE(echo.find("minigame=beacon"), std::string::npos);
    EXPECT_NE(echo.find("learning_rate="), std::string::npos);
}

TEST_F(CliTest, MissingMinigameIsUsageError) {
    const RunResult r = run_cli("train --arch baseline", dir_);
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.out.find("minigame"), std::string::npos);
}

TEST_F(CliTest, UnknownConfigKeyIsRejectedByName) {
    {
        std::ofstream cfg(dir_ / "bad.cfg");
        cfg << "minigame=beacon\n";
        cfg << "learning_rte=0.1   # typo\n";
    }
    const RunResult r = run_cli("train --config bad.cfg", dir_);
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.out.find("learning_rte"), std::string::npos);
}

TEST_F(CliTest, ConfigFileWithCommentsAndFlagOverride) {
    {
        std::ofstream cfg(dir_ / "run.cfg");
        cfg << "# tiny smoke run\n";
        cfg << "minigame = beacon\n";
        cfg << "arch = baseline\n";
        cfg << "workers = 1\n";
        cfg << "episodes = 2\n";
        cfg << "resolution = 8\n";
        cfg << "episode_cap = 10\n";
        cfg << "eval_interval = 0\n";
        cfg << "checkpoint_interval = 0\n";
        cfg << "seed = 3\n";
    }
    const RunResult r = run_cli("train --config run.cfg --seed 9 --out cfg_run", dir_);
    ASSERT_EQ(r.exit_code, 0) << r.out;
    const std::string echo = read_file(dir_ / "cfg_run/config.echo");
    EXPECT_NE(echo.find("seed=9"), std::string::npos);  // flag wins over file
    EXPECT_NE(echo.find("episodes=2"), std::string::npos);
}

TEST_F(CliTest, FourWorkersAllAppearInLog) {
    const RunResult r = run_cli(
        "train --minigame beacon --arch baseline --workers 4 --seed 5 --episodes 12 "
        "--resolution 8 --episode_cap 20 --eval_interval 0 --checkpoint_interval 0 --out w4",
        dir_);
    ASSERT_EQ(r.exit_code, 0) << r.out;
    std::array<bool, 4> seen{};
    const auto lines = read_lines(dir_ / "w4/train_log.csv");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto first_comma = lines[i].find(',');
        const auto second_comma = lines[i].find(',', first_comma + 1);
        const int worker = std::stoi(lines[i].substr(first_comma + 1,
                                                     second_comma - first_comma - 1));
        ASSERT_GE(worker, 0);
        ASSERT_LT(worker, 4);
        seen[static_cast<std::size_t>(worker)] = true;
    }
    EXPECT_TRUE(seen[0] && seen[1] && seen[2] && seen[3]);
}

TEST_F(CliTest, EvalValidatesEpisodesAndIsDeterministic) {
    ASSERT_EQ(run_cli(tiny_train_args("--out run"), dir_).exit_code, 0);
    const RunResult bad = run_cli("eval run/final.ckpt --episodes 0", dir_);
    EXPECT_EQ(bad.exit_code, 2);

    const RunResult e1 =
        run_cli("eval run/final.ckpt --episodes 5 --seed 3 --out e1.csv", dir_);
    const RunResult e2 =
        run_cli("eval run/final.ckpt --episodes 5 --seed 3 --out e2.csv", dir_);
    ASSERT_EQ(e1.exit_code, 0) << e1.out;
    ASSERT_EQ(e2.exit_code, 0) << e2.out;
    EXPECT_EQ(read_file(dir_ / "e1.csv"), read_file(dir_ / "e2.csv"));
    const auto lines = read_lines(dir_ / "e1.csv");
    ASSERT_EQ(lines.size(), 6u);  // header + 5 episodes
    EXPECT_EQ(lines[0], std::string(gridrl::kEvalCsvHeader));
    EXPECT_NE(e1.out.find("mean="), std::string::npos);
    EXPECT_NE(e1.out.find("std="), std::string::npos);
    EXPECT_NE(e1.out.find("max="), std::string::npos);
}

TEST_F(CliTest, EvalMinigameMismatchNeedsForce) {
    ASSERT_EQ(run_cli(tiny_train_args("--out run"), dir_).exit_code, 0);
    const RunResult mismatch =
        run_cli("eval run/final.ckpt --minigame shards --episodes 2", dir_);
    EXPECT_EQ(mismatch.exit_code, 3);
    const RunResult forced =
        run_cli("eval run/final.ckpt --minigame shards --episodes 2 --force", dir_);
    EXPECT_EQ(forced.exit_code, 0) << forced.out;
}

TEST_F(CliTest, TransferAnnotatesLogAndRejectsIncompatibleArch) {
    ASSERT_EQ(run_cli(tiny_train_args("--out src"), dir_).exit_code, 0);

    const RunResult incompatible = run_cli(
        "transfer --source src/final.ckpt --minigame shards --arch plusconv --workers 1 "
        "--seed 2 --episodes 2 --resolution 8 --episode_cap 10 --eval_interval 0 "
        "--checkpoint_interval 0 --out bad",
        dir_);
    EXPECT_EQ(incompatible.exit_code, 3);
    EXPECT_NE(incompatible.out.find("screen.conv1.weight"), std::string::npos)
        << incompatible.out;

    const RunResult ok = run_cli(
        "transfer --source src/final.ckpt --minigame shards --workers 1 --seed 2 "
        "--episodes 2 --resolution 8 --episode_cap 10 --eval_interval 0 "
        "--checkpoint_interval 0 --out dst",
        dir_);
    ASSERT_EQ(ok.exit_code, 0) << ok.out;
    const auto lines = read_lines(dir_ / "dst/train_log.csv");
    ASSERT_GE(lines.size(), 2u);
    EXPECT_EQ(lines[0], std::string(gridrl::kTrainLogHeader));
    EXPECT_TRUE(lines[1].starts_with("# source=src/final.ckpt")) << lines[1];
}

TEST_F(CliTest, CompareWritesOneRowPerVariantSeed) {
    const RunResult r = run_cli(
        "compare --minigame beacon --variants baseline --variants plusfc --seeds 1 "
        "--budget 2 --workers 1 --resolution 8 --episode_cap 10 --eval_interval 1 "
        "--eval_episodes 2 --checkpoint_interval 0 --out cmp",
        dir_);
    ASSERT_EQ(r.exit_code, 0) << r.out;
    const auto lines = read_lines(dir_ / "cmp/compare.csv");
    ASSERT_EQ(lines.size(), 3u);  // header + 2 runs
    EXPECT_EQ(lines[0], std::string(gridrl::kCompareCsvHeader));
    EXPECT_TRUE(lines[1].starts_with("baseline,1,"));
    EXPECT_TRUE(lines[2].starts_with("plusfc,1,"));
    EXPECT_NE(r.out.find("variant ranking"), std::string::npos);
}

TEST_F(CliTest, CompareRequiresTwoVariants) {
    const RunResult r =
        run_cli("compare --minigame beacon --variants baseline --budget 1", dir_);
    EXPECT_EQ(r.exit_code, 2);
}

TEST_F(CliTest, BaselinesSchemaAndOracleAboveRandom) {
    const RunResult r =
        run_cli("baselines --minigame beacon --episodes 50 --seed 11 --out b.csv", dir_);
    ASSERT_EQ(r.exit_code, 0) << r.out;
    const auto lines = read_lines(dir_ / "b.csv");
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[0], std::string(gridrl::kBaselinesCsvHeader));
    EXPECT_TRUE(lines[1].starts_with("random,"));
    EXPECT_TRUE(lines[2].starts_with("oracle,"));
    const double random_mean = std::stod(lines[1].substr(7));
    const double oracle_mean = std::stod(lines[2].substr(7));
    EXPECT_GT(oracle_mean, random_mean);

    const RunResult r2 =
        run_cli("baselines --minigame beacon --episodes 50 --seed 11 --out b2.csv", dir_);
    ASSERT_EQ(r2.exit_code, 0);
    EXPECT_EQ(read_file(dir_ / "b.csv"), read_file(dir_ / "b2.csv"));
}

TEST_F(CliTest, BaselinesHuntReportsRandomOnly) {
    const RunResult r =
        run_cli("baselines --minigame hunt --episodes 20 --seed 1 --out h.csv", dir_);
    ASSERT_EQ(r.exit_code, 0) << r.out;
    const auto lines = read_lines(dir_ / "h.csv");
    ASSERT_EQ(lines.size(), 2u);  // header + random only
    EXPECT_TRUE(lines[1].starts_with("random,"));
    EXPECT_NE(r.out.find("no scripted oracle"), std::string::npos);
}

TEST_F(CliTest, HelpAndUnknownSubcommand) {
    EXPECT_EQ(run_cli("--help", dir_).exit_code, 0);
    EXPECT_EQ(run_cli("frobnicate", dir_).exit_code, 2);
}
