#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "carepred/errors.hpp"
#include "carepred/synth.hpp"
#include "carepred/train.hpp"

using namespace carepred;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.hidden_dim = 6;
  c.head_dim = 5;
  return c;
}

ModelParams filled(const ModelConfig& c, double value) {
  auto p = ModelParams::zeros(c);
  p.for_each_array([&](const std::string&, auto& a) { a.setConstant(value); });
  return p;
}

std::vector<ActivitySample> small_dataset() {
  SynthConfig s;
  s.users = {3, 4};
  s.days = 4;
  s.hours_per_day = 4;
  s.seed = 9;
  return preprocess_records(generate(s));
}

TrainConfig quick(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.seed = 17;
  return t;
}

}  // namespace

TEST(AdamW, OneUnitGradientStep) {
  const auto cfg = tiny_config();
  const auto params = filled(cfg, 1.0);
  const auto grads = filled(cfg, 1.0);
  const auto out = adamw_step(params, grads, OptimizerState::fresh(params), TrainConfig{});
  const double expected = 1.0 - 4e-4 * (1.0 / (1.0 + 1e-8) + 0.01);
  out.params.for_each_array([&](const std::string&, const auto& a) {
    EXPECT_NEAR(a.minCoeff(), 0.999596, 1e-9);
    EXPECT_NEAR(a.maxCoeff(), expected, 1e-15);
  });
  EXPECT_EQ(out.state.step, 1);
  // inputs untouched
  EXPECT_EQ(params, filled(cfg, 1.0));
}

TEST(AdamW, DecayOnlyStep) {
  const auto cfg = tiny_config();
  const auto params = filled(cfg, 1.0);
  const auto out = adamw_step(params, filled(cfg, 0.0), OptimizerState::fresh(params), TrainConfig{});
  out.params.for_each_array([&](const std::string&, const auto& a) {
    EXPECT_NEAR(a.minCoeff(), 0.999996, 1e-9);
    EXPECT_NEAR(a.maxCoeff(), 1.0 - 4e-4 * 0.01, 1e-15);
  });
}

TEST(AdamW, SecondStepUsesBiasCorrection) {
  const auto cfg = tiny_config();
  TrainConfig t;
  t.weight_decay = 0.0;
  const auto p0 = filled(cfg, 0.0);
  auto s1 = adamw_step(p0, filled(cfg, 1.0), OptimizerState::fresh(p0), t);
  auto s2 = adamw_step(s1.params, filled(cfg, -1.0), s1.state, t);
  // m = 0.9*0.1 - 0.1 = -0.01, v = 0.001999 after two steps
  const double m_hat = (0.9 * 0.1 - 0.1) / (1.0 - 0.81);
  const double v_hat = (0.999 * 0.001 + 0.001) / (1.0 - 0.999 * 0.999);
  const double expected = -4e-4 / (1.0 + 1e-8) - 4e-4 * m_hat / (std::sqrt(v_hat) + 1e-8);
  EXPECT_NEAR(s2.params.head2_b(0), expected, 1e-15);
}

TEST(AdamW, RejectsNonFiniteGradient) {
  const auto cfg = tiny_config();
  const auto params = filled(cfg, 1.0);
  auto grads = filled(cfg, 0.0);
  grads.head1_b(0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(adamw_step(params, grads, OptimizerState::fresh(params), TrainConfig{}),
               NumericError);
}

TEST(BatchGradients, EqualsMeanOfSampleGradients) {
  const auto cfg = tiny_config();
  auto rng = make_rng(1, RngStream::init);
  const auto params = ModelParams::initialize(cfg, rng);
  const auto data = small_dataset();
  std::vector<EncodedExample> ex;
  for (std::size_t k = 0; k < 3; ++k) ex.push_back(encode_example(data[k]));
  std::vector<const EncodedExample*> batch = {&ex[0], &ex[1], &ex[2]};
  const auto got = batch_gradients(batch, params, cfg, nullptr);

  double loss = 0;
  auto sum = ModelParams::zeros(cfg);
  for (const auto& e : ex) {
    const auto one = loss_and_gradients(e.tokens, params, cfg, RunMode::eval(), e.target);
    loss += one.loss;
    std::vector<Eigen::MatrixXd> parts;
    one.grads.for_each_array([&](const std::string&, const auto& a) { parts.emplace_back(a); });
    std::size_t k = 0;
    sum.for_each_array([&](const std::string&, auto& a) { a += parts[k++]; });
  }
  EXPECT_NEAR(got.loss, loss / 3, 1e-12);
  std::vector<Eigen::MatrixXd> want;
  sum.for_each_array([&](const std::string&, const auto& a) { want.emplace_back(a / 3.0); });
  std::size_t k = 0;
  got.grads.for_each_array([&](const std::string& name, const auto& a) {
    EXPECT_LT((Eigen::MatrixXd(a) - want[k++]).cwiseAbs().maxCoeff(), 1e-12) << name;
  });
}

TEST(Rng, StreamsAreIndependentAndSeeded) {
  auto a = make_rng(42, RngStream::init);
  auto b = make_rng(42, RngStream::init);
  auto c = make_rng(42, RngStream::shuffle);
  auto d = make_rng(43, RngStream::init);
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
  EXPECT_NE(x, d());
}

TEST(Train, DeterministicForSeed) {
  const auto data = small_dataset();
  const auto a = pretrain(data, tiny_config(), quick(2));
  const auto b = pretrain(data, tiny_config(), quick(2));
  EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(b));
  auto other = quick(2);
  other.seed = 18;
  EXPECT_NE(pretrain(data, tiny_config(), other).params, a.params);
}

TEST(Train, RecordsProgress) {
  const auto data = small_dataset();
  std::vector<double> seen;
  const auto cp = pretrain(data, tiny_config(), quick(3),
                           [&](int epoch, double loss) {
                             EXPECT_EQ(epoch, static_cast<int>(seen.size()) + 1);
                             seen.push_back(loss);
                           });
  EXPECT_EQ(cp.epoch_losses, seen);
  EXPECT_EQ(cp.epochs_completed, 3);
  EXPECT_EQ(cp.training_samples, static_cast<std::int64_t>(data.size()));
  EXPECT_EQ(cp.optimizer_steps, 3 * static_cast<std::int64_t>((data.size() + 1) / 2));
  EXPECT_EQ(cp.stage, Stage::pretrained);
  EXPECT_EQ(cp.optimizer_init, "fresh");
  EXPECT_FALSE(cp.parent_fingerprint.has_value());
}

TEST(Train, LossFallsOnRoutineData) {
  SynthConfig s;
  s.users = {3};
  s.days = 6;
  s.hours_per_day = 4;
  s.seed = 2;
  const auto data = preprocess_records(generate(s));
  auto cfg = tiny_config();
  cfg.hidden_dim = 16;
  auto t = quick(25);
  t.learning_rate = 3e-3;
  const auto cp = pretrain(data, cfg, t);
  EXPECT_LT(cp.epoch_losses.back(), cp.epoch_losses.front());
}

TEST(Finetune, StartsFromParentOnOneUser) {
  const auto data = small_dataset();
  const auto parent = pretrain(data, tiny_config(), quick(1));
  const auto child = finetune(data, parent, 4, quick(1));
  EXPECT_EQ(child.stage, Stage::finetuned);
  EXPECT_EQ(child.finetune_user, UserId{4});
  EXPECT_EQ(child.parent_fingerprint, fingerprint(parent));
  EXPECT_EQ(child.optimizer_init, "restarted");
  EXPECT_EQ(child.training_samples, static_cast<std::int64_t>(samples_for_user(data, 4).size()));
  EXPECT_NE(child.params, parent.params);
  EXPECT_THROW(finetune(data, parent, 99, quick(1)), ConfigError);
}

TEST(Train, RejectsBadConfiguration) {
  const auto data = small_dataset();
  EXPECT_THROW(pretrain({}, tiny_config(), quick(1)), ConfigError);
  auto t = quick(1);
  t.learning_rate = 0.0;
  EXPECT_THROW(pretrain(data, tiny_config(), t), ConfigError);
  t = quick(1);
  t.max_seq_len = 60;
  EXPECT_THROW(pretrain(data, tiny_config(), t), ConfigError);
  const auto parent = pretrain(data, tiny_config(), quick(1));
  auto other = tiny_config();
  other.hidden_dim = 7;
  EXPECT_THROW(train(data, other, quick(1), TrainInit{&parent, std::nullopt}), ContractError);
}
