#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mclink/nn.hpp"
#include "mclink/rng.hpp"

namespace mclink {

struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int epochs = 100;
  int batch_size = 1;
  uint64_t seed = 0;
  double gradient_clip_norm = 0.0;  // 0 disables clipping

  void validate() const {
    if (learning_rate < 0.0) throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
      throw std::invalid_argument("TrainConfig: betas must lie in [0, 1)");
    if (epochs < 1 || batch_size < 1)
      throw std::invalid_argument("TrainConfig: epochs and batch_size must be >= 1");
    if (gradient_clip_norm < 0.0) throw std::invalid_argument("TrainConfig: negative clip norm");
  }
};

/// Adam with bias correction over a flat parameter vector.
struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Vec m, v;
  long t = 0;

  Adam() = default;
  explicit Adam(const TrainConfig& cfg)
      : lr(cfg.learning_rate), beta1(cfg.adam_beta1), beta2(cfg.adam_beta2),
        eps(cfg.adam_epsilon) {}

  void step(Vec& params, const Vec& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("Adam: size mismatch");
    if (m.size() != params.size()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
      t = 0;
    }
    ++t;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
      double mhat = m[i] / c1;
      double vhat = v[i] / c2;
      params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

inline void clip_to_norm(Vec& g, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (double x : g) sq += x * x;
  double norm = std::sqrt(sq);
  if (norm > max_norm) {
    double s = max_norm / norm;
    for (double& x : g) x *= s;
  }
}

inline void check_finite_loss(double L, int epoch) {
  if (!std::isfinite(L))
    throw std::runtime_error("training diverged: non-finite loss at epoch " +
                             std::to_string(epoch));
}

struct TrainResult {
  std::vector<double> loss_curve;  // mean per-example loss per epoch
};

using Example = std::pair<Vec, Vec>;

/// Mini-batch Adam training of an MLP. Batches are drawn by seeded shuffle;
/// gradients are averaged over the batch.
inline TrainResult train_mlp(Mlp& model, const std::vector<Example>& data, Loss loss,
                             const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  if (data.empty()) throw std::invalid_argument("train_mlp: empty dataset");
  if (model.act.back() != paired_output_act(loss))
    throw std::invalid_argument("train_mlp: output activation does not pair with loss");

  Adam opt(cfg);
  Rng shuffle_rng = make_rng(derive_seed(cfg.seed, 0x5EEDULL));
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});

  TrainResult result;
  Vec params = flatten(model);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), pos + static_cast<size_t>(cfg.batch_size));
      MlpGrads grads = zero_grads(model);
      for (size_t q = pos; q < end; ++q) {
        const auto& [x, t] = data[order[q]];
        MlpCache cache;
        Vec y = mlp_forward_cached(model, x, cache);
        total += loss_value(loss, y, t);
        mlp_backward(model, cache, loss_output_dz(loss, y, t), grads);
      }
      Vec g = flatten(grads);
      double inv = 1.0 / static_cast<double>(end - pos);
      for (double& x : g) x *= inv;
      clip_to_norm(g, cfg.gradient_clip_norm);
      opt.step(params, g);
      unflatten(params, model);
    }
    double mean_loss = total / static_cast<double>(data.size());
    check_finite_loss(mean_loss, epoch);
    result.loss_curve.push_back(mean_loss);
  }
  return result;
}

/// One training sequence: per-step inputs and targets, with optional
/// per-step loss weights (empty means every step weighs 1).
struct SeqExample {
  std::vector<Vec> inputs;
  std::vector<Vec> targets;
  std::vector<double> step_weight;
};

inline double seq_loss_and_dz(const Rnn& model, const SeqExample& ex, Loss loss,
                              const std::vector<Vec>& outputs, std::vector<Vec>& dz_out) {
  double L = 0.0;
  dz_out.assign(outputs.size(), Vec(static_cast<size_t>(model.output_size()), 0.0));
  for (size_t t = 0; t < outputs.size(); ++t) {
    double w = ex.step_weight.empty() ? 1.0 : ex.step_weight[t];
    if (w == 0.0) continue;
    L += w * loss_value(loss, outputs[t], ex.targets[t]);
    Vec dz = loss_output_dz(loss, outputs[t], ex.targets[t]);
    for (size_t i = 0; i < dz.size(); ++i) dz_out[t][i] = w * dz[i];
  }
  return L;
}

/// Full-sequence BPTT with mini-batch Adam over sequences.
inline TrainResult train_rnn(Rnn& model, const std::vector<SeqExample>& data, Loss loss,
                             const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  if (data.empty()) throw std::invalid_argument("train_rnn: empty dataset");
  if (model.output_act != paired_output_act(loss))
    throw std::invalid_argument("train_rnn: output activation does not pair with loss");
  for (const auto& ex : data) {
    if (ex.inputs.empty() || ex.inputs.size() != ex.targets.size())
      throw std::invalid_argument("train_rnn: inputs/targets length mismatch");
    if (!ex.step_weight.empty() && ex.step_weight.size() != ex.inputs.size())
      throw std::invalid_argument("train_rnn: step_weight length mismatch");
  }

  Adam opt(cfg);
  Rng shuffle_rng = make_rng(derive_seed(cfg.seed, 0x5EEDULL));
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});

  TrainResult result;
  Vec params = flatten(model);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), pos + static_cast<size_t>(cfg.batch_size));
      RnnGrads grads = zero_grads(model);
      for (size_t q = pos; q < end; ++q) {
        const SeqExample& ex = data[order[q]];
        RnnCache cache;
        std::vector<Vec> outputs = rnn_forward_cached(model, ex.inputs, cache);
        std::vector<Vec> dz_out;
        total += seq_loss_and_dz(model, ex, loss, outputs, dz_out);
        rnn_backward(model, cache, dz_out, grads);
      }
      Vec g = flatten(grads);
      double inv = 1.0 / static_cast<double>(end - pos);
      for (double& x : g) x *= inv;
      clip_to_norm(g, cfg.gradient_clip_norm);
      opt.step(params, g);
      unflatten(params, model);
    }
    double mean_loss = total / static_cast<double>(data.size());
    check_finite_loss(mean_loss, epoch);
    result.loss_curve.push_back(mean_loss);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification (central differences, step 1e-5)
// ---------------------------------------------------------------------------

namespace detail {

inline double grad_rel_error(const Vec& analytic, const Vec& numeric) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-4});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace detail

/// Max relative error between backprop and central-difference gradients.
inline double gradient_check_mlp(Mlp model, const Vec& input, const Vec& target, Loss loss) {
  MlpCache cache;
  Vec y = mlp_forward_cached(model, input, cache);
  MlpGrads grads = zero_grads(model);
  mlp_backward(model, cache, loss_output_dz(loss, y, target), grads);
  Vec analytic = flatten(grads);

  Vec params = flatten(model);
  Vec numeric(params.size());
  const double h = 1e-5;
  for (size_t i = 0; i < params.size(); ++i) {
    double keep = params[i];
    params[i] = keep + h;
    unflatten(params, model);
    double lp = loss_value(loss, mlp_forward(model, input), target);
    params[i] = keep - h;
    unflatten(params, model);
    double lm = loss_value(loss, mlp_forward(model, input), target);
    params[i] = keep;
    numeric[i] = (lp - lm) / (2.0 * h);
  }
  return detail::grad_rel_error(analytic, numeric);
}

/// BPTT counterpart over one sequence example.
inline double gradient_check_rnn(Rnn model, const SeqExample& ex, Loss loss) {
  RnnCache cache;
  std::vector<Vec> outputs = rnn_forward_cached(model, ex.inputs, cache);
  std::vector<Vec> dz_out;
  seq_loss_and_dz(model, ex, loss, outputs, dz_out);
  RnnGrads grads = zero_grads(model);
  rnn_backward(model, cache, dz_out, grads);
  Vec analytic = flatten(grads);

  auto seq_loss = [&](const Rnn& m) {
    std::vector<Vec> ys = rnn_forward(m, ex.inputs);
    double L = 0.0;
    for (size_t t = 0; t < ys.size(); ++t) {
      double w = ex.step_weight.empty() ? 1.0 : ex.step_weight[t];
      L += w * loss_value(loss, ys[t], ex.targets[t]);
    }
    return L;
  };

  Vec params = flatten(model);
  Vec numeric(params.size());
  const double h = 1e-5;
  for (size_t i = 0; i < params.size(); ++i) {
    double keep = params[i];
    params[i] = keep + h;
    unflatten(params, model);
    double lp = seq_loss(model);
    params[i] = keep - h;
    unflatten(params, model);
    double lm = seq_loss(model);
    params[i] = keep;
    numeric[i] = (lp - lm) / (2.0 * h);
  }
  return detail::grad_rel_error(analytic, numeric);
}

}  // namespace mclink
