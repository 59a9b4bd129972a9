#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carepred/activity.hpp"

namespace carepred {

enum class Backbone { lstm, bilstm };

std::string_view to_string(Backbone backbone);
/// Accepts "lstm" / "bilstm" (case-insensitive); ConfigError otherwise.
Backbone parse_backbone(std::string_view text);

struct ModelConfig {
  Backbone backbone = Backbone::lstm;
  int input_dim = 1;
  int hidden_dim = 128;
  int head_dim = 64;
  int output_dim = kNumActivities;
  double dropout_rate = 0.1;
  /// Scale tokens by 1/24 before they reach the recurrence.
  bool normalize_tokens = false;

  void validate() const;
  int num_directions() const { return backbone == Backbone::bilstm ? 2 : 1; }
  /// Width of the recurrent feature fed to the head.
  int feature_dim() const { return num_directions() * hidden_dim; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Recurrent weights of one direction. Gate rows are packed [i, f, g, o],
/// each block hidden_dim rows tall.
struct LstmDirection {
  Eigen::MatrixXd w_ih;  // 4H x input_dim
  Eigen::MatrixXd w_hh;  // 4H x H
  Eigen::VectorXd b;     // 4H
};

struct ModelParams {
  std::vector<LstmDirection> directions;  // forward, then backward for BiLSTM
  Eigen::MatrixXd head1_w;                // head_dim x feature_dim
  Eigen::VectorXd head1_b;
  Eigen::MatrixXd head2_w;                // output_dim x head_dim
  Eigen::VectorXd head2_b;

  static ModelParams zeros(const ModelConfig& config);
  /// Uniform on [-1/sqrt(H), 1/sqrt(H)] for every weight and bias.
  static ModelParams initialize(const ModelConfig& config, std::mt19937_64& rng);

  /// ContractError unless every array matches the config's shapes.
  void check_shapes(const ModelConfig& config) const;
  bool all_finite() const;
  std::size_t num_values() const;

  /// Calls f(name, array) for every parameter array in a fixed order. Arrays
  /// are Eigen::MatrixXd or Eigen::VectorXd.
  template <class F>
  void for_each_array(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each_array(F&& f) const {
    visit(*this, f);
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b);

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    static constexpr std::string_view kDirNames[] = {"lstm.forward", "lstm.backward"};
    for (std::size_t d = 0; d < self.directions.size(); ++d) {
      const std::string prefix(kDirNames[d < 2 ? d : 1]);
      f(prefix + ".w_ih", self.directions[d].w_ih);
      f(prefix + ".w_hh", self.directions[d].w_hh);
      f(prefix + ".b", self.directions[d].b);
    }
    f(std::string("head1.weight"), self.head1_w);
    f(std::string("head1.bias"), self.head1_b);
    f(std::string("head2.weight"), self.head2_w);
    f(std::string("head2.bias"), self.head2_b);
  }
};

/// Parameter-shaped container of partial derivatives.
using Gradients = ModelParams;

struct CellState {
  Eigen::VectorXd h;
  Eigen::VectorXd c;
};

/// One LSTM step: i,f,o = sigmoid, g = tanh, c' = f*c + i*g, h' = o*tanh(c').
CellState lstm_cell_step(const Eigen::VectorXd& x, const Eigen::VectorXd& h,
                         const Eigen::VectorXd& c, const LstmDirection& params);

/// Inverted-dropout multipliers (0 or 1/(1-p)) for the two head inputs.
/// Empty vectors mean identity.
struct DropoutMasks {
  Eigen::VectorXd feature;
  Eigen::VectorXd hidden;
};

/// How dropout behaves during a forward pass.
class RunMode {
 public:
  static RunMode eval() { return RunMode(nullptr, std::nullopt); }
  static RunMode train(std::mt19937_64& rng) { return RunMode(&rng, std::nullopt); }
  /// Reuses masks from an earlier train-mode pass.
  static RunMode fixed(DropoutMasks masks) { return RunMode(nullptr, std::move(masks)); }

  std::mt19937_64* rng() const { return rng_; }
  const std::optional<DropoutMasks>& masks() const { return masks_; }

 private:
  RunMode(std::mt19937_64* rng, std::optional<DropoutMasks> masks)
      : rng_(rng), masks_(std::move(masks)) {}

  std::mt19937_64* rng_;
  std::optional<DropoutMasks> masks_;
};

struct DirectionTrace {
  Eigen::MatrixXd gates;  // activated [i,f,g,o] per timestep, 4H x T
  Eigen::MatrixXd h;      // H x (T+1), column 0 is the zero initial state
  Eigen::MatrixXd c;      // H x (T+1)
  Eigen::MatrixXd tanh_c; // H x (T+1)
};

/// Everything backward() needs from a forward pass.
struct ForwardPass {
  std::vector<double> inputs;  // tokens as fed to the recurrence
  std::vector<DirectionTrace> directions;
  Eigen::VectorXd feature;  // concatenated final hidden states
  DropoutMasks masks;
  Eigen::VectorXd head_input;   // dropout(relu(feature))
  Eigen::VectorXd hidden_pre;   // head1 output
  Eigen::VectorXd hidden_out;   // dropout(relu(hidden_pre))
  Eigen::VectorXd logits;
};

ForwardPass forward(std::span<const double> tokens, const ModelParams& params,
                    const ModelConfig& config, const RunMode& mode);

/// Eval-mode logits.
Eigen::VectorXd predict_logits(std::span<const double> tokens, const ModelParams& params,
                               const ModelConfig& config);

/// Mean over elements of max(z,0) - z*t + log(1 + exp(-|z|)).
double bce_with_logits(std::span<const double> logits, std::span<const double> target);

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

/// Exact gradients of loss_scale * bce_with_logits(pass.logits, target) under
/// the pass's dropout masks.
LossAndGradients backward(const ForwardPass& pass, const ModelParams& params,
                          const ModelConfig& config, std::span<const double> target,
                          double loss_scale = 1.0);

LossAndGradients loss_and_gradients(std::span<const double> tokens, const ModelParams& params,
                                    const ModelConfig& config, const RunMode& mode,
                                    std::span<const double> target);

/// Max over coordinates of |analytic - central difference| / max(|a|, |b|, 1e-8).
/// Dropout is the identity unless masks are given.
double gradient_check(const ModelParams& params, const ModelConfig& config,
                      std::span<const double> tokens, std::span<const double> target, double eps,
                      const DropoutMasks* masks = nullptr);

/// 1 where sigmoid(logit) >= threshold.
std::vector<int> predict_labels(std::span<const double> logits, double threshold = 0.5);

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace carepred
