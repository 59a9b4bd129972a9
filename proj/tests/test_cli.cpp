#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "carepred/cli.hpp"
#include "carepred/hash.hpp"
#include "carepred/ingest.hpp"
#include "carepred/preprocess.hpp"
#include "carepred/train.hpp"
#include "json.hpp"
#include "example_day.hpp"

using namespace carepred;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("carepred_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "carepred");
    return cli::dispatch(std::move(args));
  }

  // Runs and returns stdout.
  std::string run_out(std::vector<std::string> args, int expected_code = 0) {
    ::testing::internal::CaptureStdout();
    const int code = run(std::move(args));
    auto out = ::testing::internal::GetCapturedStdout();
    EXPECT_EQ(code, expected_code);
    return out;
  }

  void small_pipeline() {
    ASSERT_EQ(run({"synth", "--users", "3,4", "--days", "5", "--hours", "4", "--seed", "1", "--out",
                   path("recs.csv")}),
              0);
    ASSERT_EQ(run({"preprocess", "--input", path("recs.csv"), "--output", path("train.jsonl"),
                   "--valid-fraction", "0.2", "--valid-output", path("valid.jsonl")}),
              0);
    ASSERT_EQ(run({"pretrain", "--data", path("train.jsonl"), "--out", path("pre.ckpt"), "--hidden",
                   "6", "--head", "4", "--epochs", "2", "--seed", "5", "--quiet"}),
              0);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SynthHappyPath) {
  EXPECT_EQ(run({"synth", "--out", path("r.csv")}), 0);
  const auto recs = read_records(path("r.csv"));
  EXPECT_FALSE(recs.empty());
  EXPECT_TRUE(fs::exists(path("r.csv.manifest.json")));
  const auto manifest = nlohmann::json::parse(read_file(path("r.csv.manifest.json")));
  EXPECT_EQ(manifest.at("outputs").at(0).at("sha256"), file_sha256_hex(path("r.csv")));
}

TEST_F(CliTest, UnknownSubcommandIsUsageError) {
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"synth"}), 2);  // --out is required
  EXPECT_EQ(run({"synth", "--out", path("x.csv"), "--days", "many"}), 2);
  const auto err = ::testing::internal::GetCapturedStderr();
  EXPECT_NE(err.find("kind=usage"), std::string::npos);
}

TEST_F(CliTest, DomainErrorsExitOne) {
  write_file(path("bad.csv"), "user_id,activity_type_id,start,finish\n1,40,2018-05-01T07:00,2018-05-01T07:01\n");
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({"preprocess", "--input", path("bad.csv"), "--output", path("o.jsonl")}), 1);
  EXPECT_EQ(run({"preprocess", "--input", path("missing.csv"), "--output", path("o.jsonl")}), 1);
  EXPECT_EQ(run({"synth", "--out", path("x.csv"), "--hours", "30"}), 1);
  const auto err = ::testing::internal::GetCapturedStderr();
  EXPECT_NE(err.find("kind=domain"), std::string::npos);
  EXPECT_NE(err.find("kind=io"), std::string::npos);
  EXPECT_NE(err.find("kind=config"), std::string::npos);
}

TEST_F(CliTest, PreprocessExampleDay) {
  write_file(path("day.csv"), fixtures::kExampleDayCsv);
  EXPECT_EQ(run({"preprocess", "--input", path("day.csv"), "--output", path("day.jsonl")}), 0);
  EXPECT_EQ(read_samples(path("day.jsonl")).size(), 9u);
}

TEST_F(CliTest, PreprocessDefaultSynthGives2100Samples) {
  ASSERT_EQ(run({"synth", "--seed", "42", "--out", path("r.csv")}), 0);
  ASSERT_EQ(run({"preprocess", "--input", path("r.csv"), "--output", path("all.jsonl")}), 0);
  EXPECT_EQ(read_samples(path("all.jsonl")).size(), 2100u);
  ASSERT_EQ(run({"preprocess", "--input", path("r.csv"), "--output", path("t.jsonl"),
                 "--valid-fraction", "0.2", "--valid-output", path("v.jsonl"), "--users", "8,13"}),
            0);
  EXPECT_EQ(read_samples(path("t.jsonl")).size(), 2u * 48 * 7);
  EXPECT_EQ(read_samples(path("v.jsonl")).size(), 2u * 12 * 7);
}

TEST_F(CliTest, ConfigFileSuppliesOptions) {
  write_file(path("synth.toml"), "days = 2\nhours = 3\nusers = [1, 2]\n");
  ASSERT_EQ(run({"synth", "--config", path("synth.toml"), "--out", path("r.csv")}), 0);
  EXPECT_EQ(read_records(path("r.csv")).size() > 0, true);
  EXPECT_EQ(preprocess_records(read_records(path("r.csv"))).size(), 2u * 2 * 2);
}

TEST_F(CliTest, TrainEvaluatePredict) {
  small_pipeline();
  EXPECT_TRUE(fs::exists(path("pre.ckpt.log.csv")));
  EXPECT_TRUE(fs::exists(path("pre.ckpt.manifest.json")));
  const auto pre = load_checkpoint(path("pre.ckpt"));
  EXPECT_EQ(pre.config.hidden_dim, 6);
  EXPECT_EQ(pre.epochs_completed, 2);

  ASSERT_EQ(run({"finetune", "--checkpoint", path("pre.ckpt"), "--data", path("train.jsonl"),
                 "--user", "4", "--out", path("ft4.ckpt"), "--epochs", "1", "--quiet"}),
            0);
  EXPECT_EQ(load_checkpoint(path("ft4.ckpt")).parent_fingerprint, fingerprint(pre));

  const auto avg = run_out({"evaluate", "--checkpoint", path("pre.ckpt"), "--data", path("valid.jsonl")});
  EXPECT_EQ(avg.rfind("user_id,accuracy,precision,recall,f1,n_samples\navg,", 0), 0u) << avg;
  const auto per_user = run_out({"evaluate", "--checkpoint", path("pre.ckpt"), "--checkpoint",
                                 path("ft4.ckpt"), "--data", path("valid.jsonl"), "--per-user"});
  EXPECT_NE(per_user.find("\n3,"), std::string::npos);
  EXPECT_NE(per_user.find("\n4,"), std::string::npos);
  EXPECT_NE(per_user.find("\navg,"), std::string::npos);
  const auto again = run_out({"evaluate", "--checkpoint", path("pre.ckpt"), "--checkpoint",
                              path("ft4.ckpt"), "--data", path("valid.jsonl"), "--per-user"});
  EXPECT_EQ(per_user, again);

  const auto pred = run_out({"predict", "--checkpoint", path("pre.ckpt"), "--history", "7:10,23;8:6",
                             "--next-hour", "9", "--user", "3"});
  EXPECT_EQ(std::count(pred.begin(), pred.end(), '\n'), 1);
  const auto batch = run_out({"predict", "--checkpoint", path("pre.ckpt"), "--sample", path("valid.jsonl")});
  EXPECT_EQ(static_cast<std::size_t>(std::count(batch.begin(), batch.end(), '\n')),
            read_samples(path("valid.jsonl")).size());
}

TEST_F(CliTest, CorruptCheckpointIsIntegrityError) {
  small_pipeline();
  auto bytes = read_file(path("pre.ckpt"));
  bytes[bytes.size() / 2] ^= 0x10;
  write_file(path("bad.ckpt"), bytes);
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(run({"evaluate", "--checkpoint", path("bad.ckpt"), "--data", path("valid.jsonl")}), 1);
  EXPECT_NE(::testing::internal::GetCapturedStderr().find("kind=integrity"), std::string::npos);
}

TEST_F(CliTest, Stats) {
  write_file(path("day.csv"), fixtures::kExampleDayCsv);
  const auto out = run_out({"stats", "--input", path("day.csv")});
  EXPECT_EQ(out.rfind("user_id,activity_type_id,count\n", 0), 0u);
  EXPECT_NE(out.find("25,6,"), std::string::npos);
}
