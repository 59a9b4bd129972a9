#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "carepred/encoder.hpp"
#include "carepred/neural.hpp"
#include "carepred/preprocess.hpp"

namespace carepred {

struct TrainConfig {
  double learning_rate = 4e-4;
  int batch_size = 2;
  int epochs = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  int max_seq_len = kDefaultMaxSeqLen;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct OptimizerState {
  Gradients m;
  Gradients v;
  std::int64_t step = 0;

  static OptimizerState fresh(const ModelParams& params);
};

struct AdamWStep {
  ModelParams params;
  OptimizerState state;
};

/// Decoupled weight decay: theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
/// Inputs are left untouched. Non-finite gradients raise NumericError.
AdamWStep adamw_step(const ModelParams& params, const Gradients& grads,
                     const OptimizerState& state, const TrainConfig& cfg);

/// In-place form used by the training loop; same arithmetic as adamw_step.
void adamw_update(ModelParams& params, const Gradients& grads, OptimizerState& state,
                  const TrainConfig& cfg);

/// Independent RNG streams derived from one run seed.
enum class RngStream : std::uint64_t { init = 1, shuffle = 2, dropout = 3 };
std::mt19937_64 make_rng(std::uint64_t seed, RngStream stream);

/// Mean loss and mean gradient over a group of examples, accumulated one
/// sample at a time in index order.
LossAndGradients batch_gradients(std::span<const EncodedExample* const> batch,
                                 const ModelParams& params, const ModelConfig& config,
                                 std::mt19937_64* dropout_rng);

enum class Stage { pretrained, finetuned };

struct ModelCheckpoint {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  ModelConfig config;
  TrainConfig train_config;
  Stage stage = Stage::pretrained;
  std::optional<UserId> finetune_user;
  std::optional<std::string> parent_fingerprint;
  ModelParams params;
  std::vector<double> epoch_losses;
  int epochs_completed = 0;
  std::int64_t optimizer_steps = 0;
  /// "fresh" for pretraining; fine-tuning restarts the moments ("restarted").
  std::string optimizer_init = "fresh";
  std::int64_t training_samples = 0;

  friend bool operator==(const ModelCheckpoint&, const ModelCheckpoint&) = default;
};

std::string serialize_checkpoint(const ModelCheckpoint& cp);
ModelCheckpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const ModelCheckpoint& cp, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);
/// SHA-256 of the serialized checkpoint.
std::string fingerprint(const ModelCheckpoint& cp);

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

struct TrainInit {
  /// Start from these weights instead of a fresh seeded initialization.
  const ModelCheckpoint* parent = nullptr;
  std::optional<UserId> finetune_user;
};

/// Seeded shuffle each epoch, then one AdamW step per batch_size consecutive
/// samples using the mean gradient. Returns the final-epoch checkpoint.
ModelCheckpoint train(const std::vector<ActivitySample>& dataset, const ModelConfig& config,
                      const TrainConfig& tcfg, const TrainInit& init = {},
                      const EpochCallback& on_epoch = {});

/// User-agnostic training over every sample.
ModelCheckpoint pretrain(const std::vector<ActivitySample>& dataset, const ModelConfig& config,
                         const TrainConfig& tcfg, const EpochCallback& on_epoch = {});

/// Continues from `parent` on the given user's samples only.
ModelCheckpoint finetune(const std::vector<ActivitySample>& dataset, const ModelCheckpoint& parent,
                         UserId user, const TrainConfig& tcfg, const EpochCallback& on_epoch = {});

EncoderOptions encoder_options(const ModelConfig& config, const TrainConfig& tcfg);

}  // namespace carepred
