#include <gtest/gtest.h>

#include <filesystem>

#include "carepred/errors.hpp"
#include "carepred/hash.hpp"
#include "carepred/synth.hpp"
#include "carepred/train.hpp"

using namespace carepred;

namespace {

ModelCheckpoint trained(Backbone b) {
  SynthConfig s;
  s.users = {2, 3};
  s.days = 3;
  s.hours_per_day = 4;
  ModelConfig cfg;
  cfg.backbone = b;
  cfg.hidden_dim = 5;
  cfg.head_dim = 3;
  TrainConfig t;
  t.epochs = 2;
  t.seed = 123;
  return pretrain(preprocess_records(generate(s)), cfg, t);
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("carepred_test_" + name);
}

}  // namespace

TEST(Sha256, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Checkpoint, RoundTripIsLossless) {
  for (auto b : {Backbone::lstm, Backbone::bilstm}) {
    const auto cp = trained(b);
    const auto bytes = serialize_checkpoint(cp);
    const auto back = deserialize_checkpoint(bytes);
    EXPECT_EQ(back, cp);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
  }
}

TEST(Checkpoint, FinetunedFieldsSurvive) {
  SynthConfig s;
  s.users = {2, 3};
  s.days = 3;
  s.hours_per_day = 4;
  const auto data = preprocess_records(generate(s));
  const auto parent = trained(Backbone::lstm);
  TrainConfig t;
  t.epochs = 1;
  const auto child = finetune(data, parent, 3, t);
  const auto back = deserialize_checkpoint(serialize_checkpoint(child));
  EXPECT_EQ(back, child);
  EXPECT_EQ(back.finetune_user, UserId{3});
  EXPECT_EQ(back.parent_fingerprint, fingerprint(parent));
}

TEST(Checkpoint, FileRoundTripIsByteIdentical) {
  const auto cp = trained(Backbone::bilstm);
  const auto a = temp_path("a.ckpt"), b = temp_path("b.ckpt");
  save_checkpoint(cp, a);
  save_checkpoint(load_checkpoint(a), b);
  EXPECT_EQ(read_file(a), read_file(b));
  EXPECT_EQ(file_sha256_hex(a), fingerprint(cp));
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(Checkpoint, CorruptionIsAnIntegrityError) {
  const auto bytes = serialize_checkpoint(trained(Backbone::lstm));
  for (std::size_t pos : {std::size_t{20}, bytes.size() / 2, bytes.size() - 40, bytes.size() - 1}) {
    auto bad = bytes;
    bad[pos] = static_cast<char>(bad[pos] ^ 0x01);
    EXPECT_THROW(deserialize_checkpoint(bad), IntegrityError) << pos;
  }
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 7)), IntegrityError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, 10)), IntegrityError);
  EXPECT_THROW(deserialize_checkpoint(""), IntegrityError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(magic), IntegrityError);
}

TEST(Checkpoint, WrongVersionIsAFormatVersionError) {
  auto bytes = serialize_checkpoint(trained(Backbone::lstm));
  bytes[8] = 2;  // first byte of the little-endian version
  EXPECT_THROW(deserialize_checkpoint(bytes), FormatVersionError);
}

TEST(Checkpoint, MissingFileIsAnIoError) {
  EXPECT_THROW(load_checkpoint(temp_path("does_not_exist.ckpt")), IoError);
}

TEST(Checkpoint, FingerprintTracksContent) {
  auto cp = trained(Backbone::lstm);
  const auto before = fingerprint(cp);
  cp.params.head2_b(0) += 1e-12;
  EXPECT_NE(fingerprint(cp), before);
}
