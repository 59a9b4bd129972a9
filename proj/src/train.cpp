#include "carepred/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "carepred/errors.hpp"

namespace carepred {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (max_seq_len < kTokensPerHour + 2) {
    throw ConfigError("max_seq_len must be >= " + std::to_string(kTokensPerHour + 2));
  }
}

OptimizerState OptimizerState::fresh(const ModelParams& params) {
  OptimizerState s{params, params, 0};
  s.m.for_each_array([](const std::string&, auto& a) { a.setZero(); });
  s.v.for_each_array([](const std::string&, auto& a) { a.setZero(); });
  return s;
}

namespace {

struct FlatView {
  double* data;
  Eigen::Index size;
};

std::vector<FlatView> flat_views(ModelParams& p) {
  std::vector<FlatView> views;
  p.for_each_array([&](const std::string&, auto& a) { views.push_back({a.data(), a.size()}); });
  return views;
}

}  // namespace

void adamw_update(ModelParams& params, const Gradients& grads, OptimizerState& state,
                  const TrainConfig& cfg) {
  if (!grads.all_finite()) throw NumericError("non-finite gradient; AdamW step refused");
  std::vector<const double*> g;
  std::vector<Eigen::Index> g_sizes;
  grads.for_each_array([&](const std::string&, const auto& a) {
    g.push_back(a.data());
    g_sizes.push_back(a.size());
  });
  auto theta = flat_views(params);
  auto m = flat_views(state.m);
  auto v = flat_views(state.v);
  if (theta.size() != g.size() || m.size() != g.size() || v.size() != g.size()) {
    throw ContractError("adamw: parameter/gradient/state shapes differ");
  }
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (theta[k].size != g_sizes[k] || m[k].size != g_sizes[k] || v[k].size != g_sizes[k]) {
      throw ContractError("adamw: parameter/gradient/state shapes differ");
    }
  }

  const auto t = state.step + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < g.size(); ++k) {
    for (Eigen::Index e = 0; e < g_sizes[k]; ++e) {
      const double grad = g[k][e];
      double& mk = m[k].data[e];
      double& vk = v[k].data[e];
      double& w = theta[k].data[e];
      mk = cfg.beta1 * mk + (1.0 - cfg.beta1) * grad;
      vk = cfg.beta2 * vk + (1.0 - cfg.beta2) * grad * grad;
      const double m_hat = mk / bc1;
      const double v_hat = vk / bc2;
      w -= cfg.learning_rate * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * w);
    }
  }
  state.step = t;
}

AdamWStep adamw_step(const ModelParams& params, const Gradients& grads,
                     const OptimizerState& state, const TrainConfig& cfg) {
  AdamWStep out{params, state};
  adamw_update(out.params, grads, out.state, cfg);
  return out;
}

std::mt19937_64 make_rng(std::uint64_t seed, RngStream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

LossAndGradients batch_gradients(std::span<const EncodedExample* const> batch,
                                 const ModelParams& params, const ModelConfig& config,
                                 std::mt19937_64* dropout_rng) {
  if (batch.empty()) throw ContractError("batch_gradients: empty batch");
  LossAndGradients total;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto mode = dropout_rng ? RunMode::train(*dropout_rng) : RunMode::eval();
    auto sample = loss_and_gradients(batch[k]->tokens, params, config, mode, batch[k]->target);
    if (k == 0) {
      total = std::move(sample);
      continue;
    }
    total.loss += sample.loss;
    auto dst = flat_views(total.grads);
    auto src = flat_views(sample.grads);
    for (std::size_t a = 0; a < dst.size(); ++a) {
      for (Eigen::Index e = 0; e < dst[a].size; ++e) dst[a].data[e] += src[a].data[e];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  total.loss *= inv;
  total.grads.for_each_array([&](const std::string&, auto& a) { a *= inv; });
  return total;
}

EncoderOptions encoder_options(const ModelConfig& config, const TrainConfig& tcfg) {
  return EncoderOptions{tcfg.max_seq_len, config.normalize_tokens};
}

ModelCheckpoint train(const std::vector<ActivitySample>& dataset, const ModelConfig& config,
                      const TrainConfig& tcfg, const TrainInit& init,
                      const EpochCallback& on_epoch) {
  config.validate();
  tcfg.validate();
  if (dataset.empty()) throw ConfigError("training dataset is empty");

  ModelCheckpoint cp;
  cp.config = config;
  cp.train_config = tcfg;
  if (init.parent != nullptr) {
    if (!(init.parent->config == config)) {
      throw ContractError("model config differs from the initial checkpoint's config");
    }
    init.parent->params.check_shapes(config);
    cp.params = init.parent->params;
    cp.parent_fingerprint = fingerprint(*init.parent);
    cp.optimizer_init = "restarted";
  } else {
    auto init_rng = make_rng(tcfg.seed, RngStream::init);
    cp.params = ModelParams::initialize(config, init_rng);
    cp.optimizer_init = "fresh";
  }
  if (init.finetune_user) {
    cp.stage = Stage::finetuned;
    cp.finetune_user = init.finetune_user;
  }

  const auto options = encoder_options(config, tcfg);
  std::vector<EncodedExample> examples;
  examples.reserve(dataset.size());
  for (const auto& s : dataset) examples.push_back(encode_example(s, options));
  cp.training_samples = static_cast<std::int64_t>(examples.size());

  auto shuffle_rng = make_rng(tcfg.seed, RngStream::shuffle);
  auto dropout_rng = make_rng(tcfg.seed, RngStream::dropout);
  auto state = OptimizerState::fresh(cp.params);

  std::vector<std::size_t> order(examples.size());
  std::vector<const EncodedExample*> batch;
  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tcfg.batch_size)) {
      const auto stop = std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch_size));
      batch.clear();
      for (auto k = start; k < stop; ++k) batch.push_back(&examples[order[k]]);
      const auto step = batch_gradients(batch, cp.params, config, &dropout_rng);
      loss_sum += step.loss * static_cast<double>(batch.size());
      adamw_update(cp.params, step.grads, state, tcfg);
    }
    const double mean_loss = loss_sum / static_cast<double>(examples.size());
    cp.epoch_losses.push_back(mean_loss);
    cp.epochs_completed = epoch;
    cp.optimizer_steps = state.step;
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return cp;
}

ModelCheckpoint pretrain(const std::vector<ActivitySample>& dataset, const ModelConfig& config,
                         const TrainConfig& tcfg, const EpochCallback& on_epoch) {
  return train(dataset, config, tcfg, TrainInit{}, on_epoch);
}

ModelCheckpoint finetune(const std::vector<ActivitySample>& dataset, const ModelCheckpoint& parent,
                         UserId user, const TrainConfig& tcfg, const EpochCallback& on_epoch) {
  const auto own = samples_for_user(dataset, user);
  if (own.empty()) {
    throw ConfigError("no training samples for user " + std::to_string(user));
  }
  return train(own, parent.config, tcfg, TrainInit{&parent, user}, on_epoch);
}

}  // namespace carepred
