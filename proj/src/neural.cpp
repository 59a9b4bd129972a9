#include "carepred/neural.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "carepred/errors.hpp"

namespace carepred {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(Backbone backbone) {
  return backbone == Backbone::bilstm ? "bilstm" : "lstm";
}

Backbone parse_backbone(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lower == "lstm") return Backbone::lstm;
  if (lower == "bilstm") return Backbone::bilstm;
  throw ConfigError("unknown backbone '" + std::string(text) + "' (expected lstm or bilstm)");
}

void ModelConfig::validate() const {
  if (input_dim != 1) throw ConfigError("input_dim must be 1 (one scalar token per timestep)");
  if (hidden_dim < 1 || head_dim < 1) throw ConfigError("hidden_dim and head_dim must be >= 1");
  if (output_dim != kNumActivities) throw ConfigError("output_dim must be 28");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout_rate must lie in [0, 1)");
  }
}

// ---------------------------------------------------------------------------
// Parameters

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  const int H = config.hidden_dim;
  ModelParams p;
  for (int d = 0; d < config.num_directions(); ++d) {
    p.directions.push_back(LstmDirection{MatrixXd::Zero(4 * H, config.input_dim),
                                         MatrixXd::Zero(4 * H, H), VectorXd::Zero(4 * H)});
  }
  p.head1_w = MatrixXd::Zero(config.head_dim, config.feature_dim());
  p.head1_b = VectorXd::Zero(config.head_dim);
  p.head2_w = MatrixXd::Zero(config.output_dim, config.head_dim);
  p.head2_b = VectorXd::Zero(config.output_dim);
  return p;
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::mt19937_64& rng) {
  auto p = zeros(config);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  p.for_each_array([&](const std::string&, auto& array) {
    for (Eigen::Index i = 0; i < array.size(); ++i) array.data()[i] = dist(rng);
  });
  return p;
}

void ModelParams::check_shapes(const ModelConfig& config) const {
  const auto expect = [](bool ok, const char* what) {
    if (!ok) throw ContractError(std::string("parameter shape mismatch: ") + what);
  };
  const int H = config.hidden_dim;
  expect(static_cast<int>(directions.size()) == config.num_directions(), "direction count");
  for (const auto& d : directions) {
    expect(d.w_ih.rows() == 4 * H && d.w_ih.cols() == config.input_dim, "w_ih");
    expect(d.w_hh.rows() == 4 * H && d.w_hh.cols() == H, "w_hh");
    expect(d.b.size() == 4 * H, "lstm bias");
  }
  expect(head1_w.rows() == config.head_dim && head1_w.cols() == config.feature_dim(),
         "head1.weight");
  expect(head1_b.size() == config.head_dim, "head1.bias");
  expect(head2_w.rows() == config.output_dim && head2_w.cols() == config.head_dim,
         "head2.weight");
  expect(head2_b.size() == config.output_dim, "head2.bias");
}

bool ModelParams::all_finite() const {
  bool finite = true;
  for_each_array([&](const std::string&, const auto& a) { finite = finite && a.allFinite(); });
  return finite;
}

std::size_t ModelParams::num_values() const {
  std::size_t n = 0;
  for_each_array([&](const std::string&, const auto& a) { n += static_cast<std::size_t>(a.size()); });
  return n;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (a.directions.size() != b.directions.size()) return false;
  const auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() &&
           std::equal(x.data(), x.data() + x.size(), y.data());
  };
  for (std::size_t d = 0; d < a.directions.size(); ++d) {
    if (!same(a.directions[d].w_ih, b.directions[d].w_ih) ||
        !same(a.directions[d].w_hh, b.directions[d].w_hh) ||
        !same(a.directions[d].b, b.directions[d].b)) {
      return false;
    }
  }
  return same(a.head1_w, b.head1_w) && same(a.head1_b, b.head1_b) && same(a.head2_w, b.head2_w) &&
         same(a.head2_b, b.head2_b);
}

// ---------------------------------------------------------------------------
// Recurrence

namespace {

template <class Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& z) {
  return 1.0 / (1.0 + (-z).exp());
}

// Eigen vectorizes exp but not tanh for doubles.
template <class Derived>
auto tanh_via_exp(const Eigen::ArrayBase<Derived>& z) {
  return 1.0 - 2.0 / ((2.0 * z).exp() + 1.0);
}

// Activates packed pre-activations [i, f, g, o] in place.
template <class Vec>
void activate_gates(Vec&& z, Eigen::Index H) {
  z.head(2 * H) = sigmoid(z.head(2 * H).array()).matrix();
  z.segment(2 * H, H) = tanh_via_exp(z.segment(2 * H, H).array()).matrix();
  z.tail(H) = sigmoid(z.tail(H).array()).matrix();
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void require_finite(const VectorXd& v, const char* layer) {
  if (!v.allFinite()) throw NumericError(std::string("non-finite value in ") + layer);
}

// Runs one direction over the sequence; column s of the trace holds the s-th
// step in processing order (reversed tokens for the backward direction).
DirectionTrace run_direction(const LstmDirection& p, std::span<const double> x, bool reverse) {
  const Eigen::Index H = p.w_hh.cols();
  const auto T = static_cast<Eigen::Index>(x.size());
  DirectionTrace tr;
  tr.gates.resize(4 * H, T);
  tr.h.resize(H, T + 1);
  tr.c.resize(H, T + 1);
  tr.tanh_c.resize(H, T + 1);
  tr.h.col(0).setZero();
  tr.c.col(0).setZero();
  tr.tanh_c.col(0).setZero();

  VectorXd z(4 * H);
  const auto w_x = p.w_ih.col(0);
  for (Eigen::Index s = 0; s < T; ++s) {
    const double xt = x[static_cast<std::size_t>(reverse ? T - 1 - s : s)];
    z.noalias() = p.w_hh * tr.h.col(s);
    z += p.b + w_x * xt;
    auto g = tr.gates.col(s);
    g = z;
    activate_gates(g, H);
    tr.c.col(s + 1) = g.segment(H, H).cwiseProduct(tr.c.col(s)) +
                      g.head(H).cwiseProduct(g.segment(2 * H, H));
    tr.tanh_c.col(s + 1) = tanh_via_exp(tr.c.col(s + 1).array()).matrix();
    tr.h.col(s + 1) = g.tail(H).cwiseProduct(tr.tanh_c.col(s + 1));
  }
  return tr;
}

// Accumulates parameter gradients for one direction given dL/dh at its final step.
void backprop_direction(const LstmDirection& p, const DirectionTrace& tr,
                        std::span<const double> x, bool reverse, VectorXd dh,
                        LstmDirection& grad) {
  const Eigen::Index H = p.w_hh.cols();
  const auto T = static_cast<Eigen::Index>(x.size());
  MatrixXd dz(4 * H, T);
  VectorXd dc = VectorXd::Zero(H);
  VectorXd xs(T);

  for (Eigen::Index s = T - 1; s >= 0; --s) {
    xs[s] = x[static_cast<std::size_t>(reverse ? T - 1 - s : s)];
    const auto g = tr.gates.col(s);
    const auto i = g.head(H).array();
    const auto f = g.segment(H, H).array();
    const auto cand = g.segment(2 * H, H).array();
    const auto o = g.tail(H).array();
    const auto tc = tr.tanh_c.col(s + 1).array();
    const auto c_prev = tr.c.col(s).array();

    dc.array() += dh.array() * o * (1.0 - tc.square());
    auto col = dz.col(s);
    col.head(H) = (dc.array() * cand * i * (1.0 - i)).matrix();
    col.segment(H, H) = (dc.array() * c_prev * f * (1.0 - f)).matrix();
    col.segment(2 * H, H) = (dc.array() * i * (1.0 - cand.square())).matrix();
    col.tail(H) = (dh.array() * tc * o * (1.0 - o)).matrix();
    dc.array() *= f;
    dh.noalias() = p.w_hh.transpose() * col;
  }

  grad.w_hh.noalias() += dz * tr.h.leftCols(T).transpose();
  grad.w_ih.col(0).noalias() += dz * xs;
  grad.b += dz.rowwise().sum();
}

VectorXd sample_mask(Eigen::Index n, double rate, std::mt19937_64& rng) {
  VectorXd mask(n);
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index k = 0; k < n; ++k) mask[k] = keep(rng) ? scale : 0.0;
  return mask;
}

}  // namespace

CellState lstm_cell_step(const VectorXd& x, const VectorXd& h, const VectorXd& c,
                         const LstmDirection& p) {
  const Eigen::Index H = p.w_hh.cols();
  if (p.w_hh.rows() != 4 * H || p.w_ih.rows() != 4 * H || p.b.size() != 4 * H ||
      x.size() != p.w_ih.cols() || h.size() != H || c.size() != H) {
    throw ContractError("lstm_cell_step: shape mismatch");
  }
  VectorXd z(4 * H);
  z.noalias() = p.w_hh * h;
  z += p.b + p.w_ih * x;
  activate_gates(z, H);
  CellState next;
  next.c = z.segment(H, H).cwiseProduct(c) + z.head(H).cwiseProduct(z.segment(2 * H, H));
  next.h = z.tail(H).cwiseProduct(tanh_via_exp(next.c.array()).matrix());
  return next;
}

ForwardPass forward(std::span<const double> tokens, const ModelParams& params,
                    const ModelConfig& config, const RunMode& mode) {
  config.validate();
  params.check_shapes(config);
  if (tokens.empty()) throw ContractError("forward: empty token sequence");
  for (double t : tokens) {
    if (!std::isfinite(t)) throw NumericError("non-finite value in input tokens");
  }

  ForwardPass pass;
  pass.inputs.assign(tokens.begin(), tokens.end());
  const Eigen::Index H = config.hidden_dim;
  pass.feature.resize(config.feature_dim());
  for (int d = 0; d < config.num_directions(); ++d) {
    pass.directions.push_back(run_direction(params.directions[static_cast<std::size_t>(d)],
                                            pass.inputs, d == 1));
    const auto& tr = pass.directions.back();
    const char* name = d == 0 ? "lstm.forward" : "lstm.backward";
    require_finite(tr.c.col(tr.c.cols() - 1), name);
    require_finite(tr.h.col(tr.h.cols() - 1), name);
    pass.feature.segment(d * H, H) = tr.h.col(tr.h.cols() - 1);
  }

  if (mode.masks()) {
    pass.masks = *mode.masks();
    if (pass.masks.feature.size() != config.feature_dim() ||
        pass.masks.hidden.size() != config.head_dim) {
      throw ContractError("dropout mask shapes do not match the model");
    }
  } else if (mode.rng() != nullptr) {
    pass.masks.feature = sample_mask(config.feature_dim(), config.dropout_rate, *mode.rng());
    pass.masks.hidden = sample_mask(config.head_dim, config.dropout_rate, *mode.rng());
  }

  pass.head_input = pass.feature.cwiseMax(0.0);
  if (pass.masks.feature.size() > 0) pass.head_input.array() *= pass.masks.feature.array();
  pass.hidden_pre = params.head1_w * pass.head_input + params.head1_b;
  require_finite(pass.hidden_pre, "head1");
  pass.hidden_out = pass.hidden_pre.cwiseMax(0.0);
  if (pass.masks.hidden.size() > 0) pass.hidden_out.array() *= pass.masks.hidden.array();
  pass.logits = params.head2_w * pass.hidden_out + params.head2_b;
  require_finite(pass.logits, "head2");
  return pass;
}

VectorXd predict_logits(std::span<const double> tokens, const ModelParams& params,
                        const ModelConfig& config) {
  return forward(tokens, params, config, RunMode::eval()).logits;
}

double bce_with_logits(std::span<const double> logits, std::span<const double> target) {
  if (logits.size() != target.size()) throw ContractError("bce_with_logits: length mismatch");
  if (logits.empty()) throw ContractError("bce_with_logits: empty input");
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const double z = logits[j];
    const double t = target[j];
    if (!std::isfinite(z) || !std::isfinite(t)) throw NumericError("non-finite value in loss");
    sum += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  return sum / static_cast<double>(logits.size());
}

LossAndGradients backward(const ForwardPass& pass, const ModelParams& params,
                          const ModelConfig& config, std::span<const double> target,
                          double loss_scale) {
  if (static_cast<Eigen::Index>(target.size()) != pass.logits.size()) {
    throw ContractError("backward: target length mismatch");
  }
  LossAndGradients out;
  out.loss = bce_with_logits(as_span(pass.logits), target);
  out.grads = ModelParams::zeros(config);
  auto& g = out.grads;

  const auto n = static_cast<double>(target.size());
  VectorXd d_logits(pass.logits.size());
  for (Eigen::Index j = 0; j < d_logits.size(); ++j) {
    d_logits[j] = loss_scale * (stable_sigmoid(pass.logits[j]) - target[static_cast<std::size_t>(j)]) / n;
  }

  g.head2_b = d_logits;
  g.head2_w.noalias() = d_logits * pass.hidden_out.transpose();
  VectorXd d_hidden = params.head2_w.transpose() * d_logits;
  if (pass.masks.hidden.size() > 0) d_hidden.array() *= pass.masks.hidden.array();
  d_hidden = (pass.hidden_pre.array() > 0.0).select(d_hidden, 0.0);

  g.head1_b = d_hidden;
  g.head1_w.noalias() = d_hidden * pass.head_input.transpose();
  VectorXd d_feature = params.head1_w.transpose() * d_hidden;
  if (pass.masks.feature.size() > 0) d_feature.array() *= pass.masks.feature.array();
  d_feature = (pass.feature.array() > 0.0).select(d_feature, 0.0);

  const Eigen::Index H = config.hidden_dim;
  for (std::size_t d = 0; d < pass.directions.size(); ++d) {
    backprop_direction(params.directions[d], pass.directions[d], pass.inputs, d == 1,
                       d_feature.segment(static_cast<Eigen::Index>(d) * H, H), g.directions[d]);
  }
  if (!g.all_finite()) throw NumericError("non-finite value in gradients");
  return out;
}

LossAndGradients loss_and_gradients(std::span<const double> tokens, const ModelParams& params,
                                    const ModelConfig& config, const RunMode& mode,
                                    std::span<const double> target) {
  return backward(forward(tokens, params, config, mode), params, config, target);
}

double gradient_check(const ModelParams& params, const ModelConfig& config,
                      std::span<const double> tokens, std::span<const double> target, double eps,
                      const DropoutMasks* masks) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw ContractError("gradient_check: eps must be positive");
  }
  const RunMode mode = masks ? RunMode::fixed(*masks) : RunMode::eval();
  const auto analytic = loss_and_gradients(tokens, params, config, mode, target).grads;

  std::vector<double*> probe;
  std::vector<const double*> exact;
  std::vector<Eigen::Index> sizes;
  ModelParams work = params;
  work.for_each_array([&](const std::string&, auto& a) {
    probe.push_back(a.data());
    sizes.push_back(a.size());
  });
  analytic.for_each_array([&](const std::string&, const auto& a) { exact.push_back(a.data()); });

  const auto logits_at = [&] { return forward(tokens, work, config, mode).logits; };
  // L(z+) - L(z-) summed per logit as softplus(a) - softplus(b) - t (a - b), with
  // softplus(a) - softplus(b) = log1p(sigmoid(b) * expm1(a - b)). Subtracting two
  // rounded loss totals would bury gradients near 1e-8 under rounding noise.
  const auto loss_delta = [&](const VectorXd& plus, const VectorXd& minus) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < plus.size(); ++j) {
      const double step = plus[j] - minus[j];
      sum += std::log1p(stable_sigmoid(minus[j]) * std::expm1(step)) -
             target[static_cast<std::size_t>(j)] * step;
    }
    return sum / static_cast<double>(plus.size());
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (Eigen::Index e = 0; e < sizes[k]; ++e) {
      double& theta = probe[k][e];
      const double original = theta;
      theta = original + eps;
      const VectorXd plus = logits_at();
      theta = original - eps;
      const VectorXd minus = logits_at();
      theta = original;
      const double numeric = loss_delta(plus, minus) / (2.0 * eps);
      const double a = exact[k][e];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

std::vector<int> predict_labels(std::span<const double> logits, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ContractError("threshold must lie in (0, 1)");
  }
  // sigmoid(z) >= t  <=>  z >= log(t / (1 - t)); exactly z >= 0 at t = 0.5
  const double cut = std::log(threshold / (1.0 - threshold));
  std::vector<int> out(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) out[j] = logits[j] >= cut ? 1 : 0;
  return out;
}

}  // namespace carepred
