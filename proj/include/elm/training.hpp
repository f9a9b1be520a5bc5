#pragma once

// Losses, optimizers, learning-rate schedule, metrics and the generic
// training loop over ELM, LSTM and SNN models.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "elm/bptt.hpp"
#include "elm/cells.hpp"
#include "elm/numerics.hpp"
#include "elm/tasks.hpp"

namespace elm {

// ---------------------------------------------------------------------------
// Losses

inline constexpr double kLogitClamp = 30.0;

struct NeuronioLoss {
  double value = 0.0;
  Vector grad_voltage;
  Vector grad_logit;
  std::size_t counted_steps = 0;
};

/// Mean over steps t >= burn_in of BCE(sigmoid(logit), spike) + (v - scale * target_v)^2.
/// Masked steps get exactly zero loss and zero gradient.
inline NeuronioLoss neuronio_loss(std::span<const double> pred_voltage, std::span<const double> pred_logit,
                                  std::span<const double> target_voltage, std::span<const double> target_spike,
                                  std::size_t burn_in_steps, double voltage_scale = 1.0) {
  const std::size_t T = pred_voltage.size();
  detail::require_size(pred_logit.size(), T, "neuronio_loss logits");
  detail::require_size(target_voltage.size(), T, "neuronio_loss voltage targets");
  detail::require_size(target_spike.size(), T, "neuronio_loss spike targets");
  detail::require(burn_in_steps < T, "neuronio_loss: burn-in must be shorter than the sequence");
  NeuronioLoss out;
  out.grad_voltage.assign(T, 0.0);
  out.grad_logit.assign(T, 0.0);
  out.counted_steps = T - burn_in_steps;
  const double inv = 1.0 / static_cast<double>(out.counted_steps);
  for (std::size_t t = burn_in_steps; t < T; ++t) {
    const double z = std::clamp(pred_logit[t], -kLogitClamp, kLogitClamp);
    const double y = target_spike[t];
    // softplus(z) - y z
    const double bce = -log_sigmoid(-z) - y * z;
    const double diff = pred_voltage[t] - voltage_scale * target_voltage[t];
    out.value += (bce + diff * diff) * inv;
    out.grad_logit[t] = (sigmoid(z) - y) * inv;
    out.grad_voltage[t] = 2.0 * diff * inv;
  }
  return out;
}

struct ClassLoss {
  double value = 0.0;
  Vector grad;
};

/// Softmax cross-entropy of the final-step logits.
inline ClassLoss last_step_ce(std::span<const double> logits, int cls) {
  detail::require(cls >= 0 && static_cast<std::size_t>(cls) < logits.size(), "last_step_ce: class out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  ClassLoss out;
  out.value = lse - logits[static_cast<std::size_t>(cls)];
  out.grad.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) out.grad[k] = std::exp(logits[k] - lse);
  out.grad[static_cast<std::size_t>(cls)] -= 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Optimizers and schedule

enum class OptimizerKind { adam, adamax };

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "adamax"; }

struct OptimizerState {
  Vector m;
  Vector v;  // second moment (Adam) or infinity norm (Adamax)
  std::size_t t = 0;
};

inline constexpr double kBeta1 = 0.9;
inline constexpr double kBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

inline void prepare(OptimizerState& s, std::size_t n) {
  if (s.m.empty() && s.v.empty()) {
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
  }
  detail::require_size(s.m.size(), n, "optimizer state");
}

inline void adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& s, double lr) {
  detail::require_size(grads.size(), params.size(), "adam_step grads");
  prepare(s, params.size());
  ++s.t;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = kBeta1 * s.m[i] + (1.0 - kBeta1) * g;
    s.v[i] = kBeta2 * s.v[i] + (1.0 - kBeta2) * g * g;
    params[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + kAdamEps);
  }
}

/// Adamax: u = max(beta2 u, |g|); step lr / (1 - beta1^t) * m / (u + eps).
inline void adamax_step(std::span<double> params, std::span<const double> grads, OptimizerState& s, double lr) {
  detail::require_size(grads.size(), params.size(), "adamax_step grads");
  prepare(s, params.size());
  ++s.t;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = kBeta1 * s.m[i] + (1.0 - kBeta1) * g;
    s.v[i] = std::max(kBeta2 * s.v[i], std::abs(g));
    params[i] -= (lr / c1) * s.m[i] / (s.v[i] + kAdamEps);
  }
}

inline void optimizer_step(OptimizerKind k, std::span<double> params, std::span<const double> grads,
                           OptimizerState& s, double lr) {
  if (k == OptimizerKind::adam) {
    adam_step(params, grads, s, lr);
  } else {
    adamax_step(params, grads, s, lr);
  }
}

inline double cosine_lr(double lr0, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return lr0;
  detail::require(step <= total_steps, "cosine_lr: step beyond schedule");
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

// ---------------------------------------------------------------------------
// Metrics

/// Rank-based ROC AUC; ties between a positive and a negative count 0.5.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  detail::require_size(labels.size(), scores.size(), "auc labels");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::domain_error("auc: need both positive and negative labels");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

/// TPR at the score threshold with the largest FPR not above `fpr`
/// (predict positive when score >= threshold).
inline double tpr_at_fpr(std::span<const double> scores, std::span<const int> labels, double fpr) {
  detail::require_size(labels.size(), scores.size(), "tpr_at_fpr labels");
  detail::require(fpr > 0.0 && fpr < 1.0, "tpr_at_fpr: fpr must be in (0, 1)");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l != 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::domain_error("tpr_at_fpr: need both positive and negative labels");
  double best = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] != 0 ? tp : fp) += 1;
      ++j;
    }
    if (static_cast<double>(fp) / static_cast<double>(n_neg) > fpr) break;
    best = static_cast<double>(tp) / static_cast<double>(n_pos);
    i = j;
  }
  return best;
}

inline const std::vector<double>& reported_fprs() {
  static const std::vector<double> f{0.001, 0.01, 0.1};
  return f;
}

/// NaN marks a metric that does not apply to the task (or is undefined, e.g.
/// AUC on a split without spikes).
struct MetricsReport {
  double loss = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double auc = std::numeric_limits<double>::quiet_NaN();
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  std::map<double, double> tpr_at_fpr;
};

struct MetricsRow {
  std::size_t epoch = 0;
  std::string split;
  MetricsReport metrics;
  double lr = 0.0;
};

// ---------------------------------------------------------------------------
// Training

/// Checkpoint selection on the validation split: the task-native metric
/// (RMSE or accuracy) or the validation loss.
enum class Selection { metric, loss };

inline std::string_view to_string(Selection s) { return s == Selection::metric ? "metric" : "loss"; }

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 5e-3;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  double burn_in_ms = 0.0;
  double dropout = 0.0;
  double recurrent_dropout = 0.0;
  double spike_l1 = 0.0;
  double voltage_scale = 1.0;
  double val_fraction = 0.1;
  /// Mean batch loss above which a run counts as divergent (in addition to
  /// any non-finite value). Well-posed runs have per-step losses of order one.
  double divergence_loss = 1e8;
  /// Teacher fitting: start the spike-logit readout bias at the logit of the
  /// training spike rate (ignored by models without a readout bias).
  bool spike_bias_prior = true;
  Selection select_by = Selection::metric;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const {
    detail::require(lr > 0.0, "train: lr must be > 0");
    detail::require(batch_size >= 1, "train: batch_size must be >= 1");
    detail::require(burn_in_ms >= 0.0, "train: burn_in_ms must be >= 0");
    detail::require(dropout >= 0.0 && dropout < 1.0, "train: dropout must be in [0, 1)");
    detail::require(recurrent_dropout >= 0.0 && recurrent_dropout < 1.0, "train: recurrent_dropout must be in [0, 1)");
    detail::require(spike_l1 >= 0.0, "train: spike_l1 must be >= 0");
    detail::require(voltage_scale > 0.0, "train: voltage_scale must be > 0");
    detail::require(val_fraction > 0.0 && val_fraction < 1.0, "train: val_fraction must be in (0, 1)");
    detail::require(threads >= 1, "train: threads must be >= 1");
    detail::require(divergence_loss > 0.0, "train: divergence_loss must be > 0");
  }
};

inline std::size_t burn_in_steps(const TrainConfig& cfg, const SequenceBatch& b) {
  const auto n = static_cast<std::size_t>(std::llround(cfg.burn_in_ms / b.dt));
  detail::require(b.layout == TargetLayout::class_index || n < b.steps, "train: burn-in must be shorter than the sequence");
  return n;
}

/// Deterministic split: the last ceil(fraction * N) sequences validate.
inline std::pair<SequenceBatch, SequenceBatch> split_validation(const SequenceBatch& b, double fraction) {
  detail::require(b.count >= 2, "split_validation: need at least two sequences");
  auto n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(b.count)));
  n_val = std::clamp<std::size_t>(n_val, 1, b.count - 1);
  return {slice(b, 0, b.count - n_val), slice(b, b.count - n_val, n_val)};
}

template <typename P>
inline constexpr bool is_trainable_model_v =
    std::is_same_v<P, ElmParams> || std::is_same_v<P, LstmParams> || std::is_same_v<P, SnnParams>;

template <typename P>
std::size_t output_width(const P& p) {
  if constexpr (std::is_same_v<P, SnnParams>) {
    return p.n_out;
  } else {
    return p.d_o;
  }
}

template <typename P>
std::size_t input_width(const P& p) {
  if constexpr (std::is_same_v<P, ElmParams>) {
    return p.d_s;
  } else if constexpr (std::is_same_v<P, LstmParams>) {
    return p.d_in;
  } else {
    return p.n_in;
  }
}

/// Checks a model against a dataset before any training.
template <typename P>
void check_compatible(const P& p, const SequenceBatch& b) {
  detail::require_size(input_width(p), b.channels, "model input width vs dataset channels");
  if (b.layout == TargetLayout::per_step_pairs) {
    detail::require_size(output_width(p), 2, "model outputs for (voltage, spike) targets");
  } else {
    detail::require_size(output_width(p), static_cast<std::size_t>(b.n_classes), "model outputs vs class count");
  }
}

struct SequenceResult {
  double loss = 0.0;
  std::vector<Vector> outputs;
};

namespace detail {

/// Output gradients of the task loss for one sequence.
inline std::pair<double, std::vector<Vector>> task_loss(const SequenceBatch& b, std::size_t i,
                                                        const std::vector<Vector>& outputs, std::size_t burn_in,
                                                        double voltage_scale) {
  const std::size_t T = outputs.size();
  std::vector<Vector> grads(T, Vector(outputs.empty() ? 0 : outputs[0].size(), 0.0));
  if (b.layout == TargetLayout::per_step_pairs) {
    Vector pv(T), pl(T), tv(T), ts(T);
    for (std::size_t t = 0; t < T; ++t) {
      pv[t] = outputs[t][0];
      pl[t] = outputs[t][1];
      tv[t] = b.target_voltage(i, t);
      ts[t] = b.target_spike(i, t);
    }
    const NeuronioLoss l = neuronio_loss(pv, pl, tv, ts, burn_in, voltage_scale);
    for (std::size_t t = 0; t < T; ++t) {
      grads[t][0] = l.grad_voltage[t];
      grads[t][1] = l.grad_logit[t];
    }
    return {l.value, std::move(grads)};
  }
  const ClassLoss l = last_step_ce(outputs.back(), b.labels[i]);
  grads.back() = l.grad;
  return {l.value, std::move(grads)};
}

}  // namespace detail

/// Loss and parameter gradient of one sequence. `noise.rng` enables dropout.
template <typename P>
std::pair<double, P> sequence_gradient(const P& p, const SequenceBatch& b, std::size_t i, const TrainNoise& noise,
                                       std::size_t burn_in, const TrainConfig& cfg) {
  const SequenceView v = b.view(i);
  if constexpr (std::is_same_v<P, LstmParams>) {
    Vector mask;
    auto r = rollout(p, initial_state(p), v, noise, i, &mask);
    auto [loss, g] = detail::task_loss(b, i, r.outputs, burn_in, cfg.voltage_scale);
    return {loss, backward(r.tape, p, g, mask)};
  } else if constexpr (std::is_same_v<P, SnnParams>) {
    auto r = rollout(p, initial_state(p), v, noise, i);
    auto [loss, g] = detail::task_loss(b, i, r.outputs, burn_in, cfg.voltage_scale);
    const double norm = static_cast<double>(b.steps * p.n_neurons());
    const double coeff = cfg.spike_l1 / norm;
    return {loss + coeff * r.spike_count, backward(r.tape, p, g, coeff)};
  } else {
    auto r = rollout(p, initial_state(p), v, noise, i);
    auto [loss, g] = detail::task_loss(b, i, r.outputs, burn_in, cfg.voltage_scale);
    return {loss, backward(r.tape, p, g)};
  }
}

/// Eval-mode outputs of one sequence (no dropout).
template <typename P>
std::vector<Vector> predict(const P& p, const SequenceView& v, std::size_t index = 0) {
  return rollout(p, initial_state(p), v, TrainNoise{}, index).outputs;
}

/// Eval-mode metrics over a whole batch.
template <typename P>
MetricsReport evaluate(const P& p, const SequenceBatch& b, const TrainConfig& cfg) {
  const std::size_t burn_in = burn_in_steps(cfg, b);
  MetricsReport rep;
  double loss = 0.0;
  std::size_t correct = 0;
  Vector scores;
  std::vector<int> spikes;
  double sq = 0.0;
  std::size_t n_steps = 0;
  for (std::size_t i = 0; i < b.count; ++i) {
    const auto outputs = predict(p, b.view(i), i);
    loss += detail::task_loss(b, i, outputs, burn_in, cfg.voltage_scale).first;
    if (b.layout == TargetLayout::per_step_pairs) {
      for (std::size_t t = burn_in; t < b.steps; ++t) {
        const double e = outputs[t][0] / cfg.voltage_scale - b.target_voltage(i, t);
        sq += e * e;
        ++n_steps;
        scores.push_back(outputs[t][1]);
        spikes.push_back(b.target_spike(i, t) > 0.5 ? 1 : 0);
      }
    } else {
      const Vector& last = outputs.back();
      const auto pred = static_cast<int>(std::max_element(last.begin(), last.end()) - last.begin());
      correct += pred == b.labels[i];
    }
  }
  rep.loss = loss / static_cast<double>(b.count);
  if (b.layout == TargetLayout::per_step_pairs) {
    rep.rmse = std::sqrt(sq / static_cast<double>(n_steps));
    const bool both = std::any_of(spikes.begin(), spikes.end(), [](int s) { return s == 1; }) &&
                      std::any_of(spikes.begin(), spikes.end(), [](int s) { return s == 0; });
    if (both) {
      rep.auc = auc(scores, spikes);
      for (double f : reported_fprs()) rep.tpr_at_fpr[f] = tpr_at_fpr(scores, spikes, f);
    }
  } else {
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(b.count);
  }
  return rep;
}

/// True when `candidate` beats `best`: lower loss, or on the task-native
/// metric lower RMSE for teacher fitting and higher accuracy for classification.
inline bool improves(const MetricsReport& candidate, const MetricsReport& best, TargetLayout layout,
                     Selection by = Selection::metric) {
  if (by == Selection::loss) return candidate.loss < best.loss;
  if (layout == TargetLayout::per_step_pairs) return candidate.rmse < best.rmse;
  return candidate.accuracy > best.accuracy;
}

template <typename P>
struct TrainResult {
  P best;
  P final;
  std::size_t best_epoch = 0;
  MetricsReport best_val;
  std::vector<MetricsRow> curve;
  bool divergent = false;
  std::string divergence;
};

/// Fraction of spike targets after burn-in; the prior behind `spike_bias_prior`.
inline double spike_rate(const SequenceBatch& b, std::size_t burn_in) {
  detail::require(b.layout == TargetLayout::per_step_pairs, "spike_rate: batch has no spike targets");
  double k = 0.0, n = 0.0;
  for (std::size_t i = 0; i < b.count; ++i)
    for (std::size_t t = burn_in; t < b.steps; ++t) {
      k += b.target_spike(i, t) > 0.5 ? 1.0 : 0.0;
      n += 1.0;
    }
  return k / n;
}

/// Sets the bias of output 1 (the spike logit) to logit(rate). Rates of 0 or
/// 1 leave the bias untouched.
template <typename P>
void set_spike_bias(P& p, double rate) {
  if constexpr (!std::is_same_v<P, SnnParams>) {
    if (rate > 0.0 && rate < 1.0 && p.b_y.size() >= 2) p.b_y[1] = logit(rate);
  }
}

template <typename P>
TrainNoise make_noise(const TrainConfig& cfg, Rng* rng) {
  TrainNoise n;
  n.rng = rng;
  if constexpr (std::is_same_v<P, ElmParams>) n.dropout = cfg.dropout;
  if constexpr (std::is_same_v<P, LstmParams>) n.recurrent_dropout = cfg.recurrent_dropout;
  return n;
}

/// Mini-batch training with a cosine schedule over the whole run and
/// validation-based model selection. Epoch 0 rows hold the initial
/// validation metrics. Per-sequence gradients are reduced in sequence order
/// whatever the thread count, so results do not depend on `threads`.
template <typename P>
TrainResult<P> train(P model, const SequenceBatch& train_set, const SequenceBatch& val_set, const TrainConfig& cfg,
                     const std::function<void(const MetricsRow&)>& on_row = {}) {
  static_assert(is_trainable_model_v<P>);
  cfg.validate();
  train_set.validate();
  val_set.validate();
  check_compatible(model, train_set);
  check_compatible(model, val_set);
  detail::require(train_set.count >= 1 && val_set.count >= 1, "train: empty split");
  const std::size_t burn_in = burn_in_steps(cfg, train_set);
  const Rng master(cfg.seed);
  if (cfg.spike_bias_prior && train_set.layout == TargetLayout::per_step_pairs)
    set_spike_bias(model, spike_rate(train_set, burn_in));

  TrainResult<P> res;
  auto emit = [&](MetricsRow row) {
    if (on_row) on_row(row);
    res.curve.push_back(std::move(row));
  };
  res.best_val = evaluate(model, val_set, cfg);
  res.best = model;
  emit({0, "val", res.best_val, cosine_lr(cfg.lr, 0, 0)});

  const std::size_t per_epoch = (train_set.count + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = per_epoch * cfg.epochs;
  OptimizerState opt;
  std::size_t step = 0;
  double lr = cfg.lr;
  for (std::size_t epoch = 1; epoch <= cfg.epochs && !res.divergent; ++epoch) {
    std::vector<std::size_t> order(train_set.count);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle = master.substream("data-order", epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);

    double epoch_loss = 0.0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - first);
      std::vector<double> losses(n, 0.0);
      std::vector<std::optional<P>> grads(n);
      std::vector<std::string> errors(n);
      auto work = [&](std::size_t k) {
        Rng rng = master.substream("noise", step * cfg.batch_size + k);
        try {
          auto [l, g] = sequence_gradient(model, train_set, order[first + k], make_noise<P>(cfg, &rng), burn_in, cfg);
          losses[k] = l;
          grads[k] = std::move(g);
        } catch (const NonFiniteError& e) {
          errors[k] = e.what();
        }
      };
      if (cfg.threads <= 1 || n == 1) {
        for (std::size_t k = 0; k < n; ++k) work(k);
      } else {
        const std::size_t workers = std::min(cfg.threads, n);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
          pool.emplace_back([&, w] {
            for (std::size_t k = w; k < n; k += workers) work(k);
          });
        for (auto& th : pool) th.join();
      }
      P total_grad = zeros_like(model);
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (!errors[k].empty()) {
          res.divergent = true;
          res.divergence = errors[k];
          break;
        }
        accumulate(total_grad, *grads[k]);
        batch_loss += losses[k];
      }
      if (res.divergent) break;
      Vector g = flatten(total_grad);
      for (double& x : g) x /= static_cast<double>(n);
      if (!std::isfinite(batch_loss) || !all_finite(g)) {
        res.divergent = true;
        res.divergence = "non-finite loss or gradient at optimizer step " + std::to_string(step);
        break;
      }
      if (batch_loss / static_cast<double>(n) > cfg.divergence_loss) {
        res.divergent = true;
        res.divergence = "loss above divergence_loss at optimizer step " + std::to_string(step);
        break;
      }
      lr = cosine_lr(cfg.lr, step, total);
      Vector flat = flatten(model);
      optimizer_step(cfg.optimizer, flat, g, opt, lr);
      if (!all_finite(flat)) {
        res.divergent = true;
        res.divergence = "non-finite parameters at optimizer step " + std::to_string(step);
        break;
      }
      unflatten(model, flat);
      epoch_loss += batch_loss;
      ++step;
    }
    if (res.divergent) break;

    MetricsReport tr;
    tr.loss = epoch_loss / static_cast<double>(train_set.count);
    emit({epoch, "train", tr, lr});
    MetricsReport val;
    try {
      val = evaluate(model, val_set, cfg);
    } catch (const NonFiniteError& e) {
      res.divergent = true;
      res.divergence = e.what();
      break;
    }
    emit({epoch, "val", val, lr});
    if (!std::isfinite(val.loss)) {
      res.divergent = true;
      res.divergence = "non-finite validation loss at epoch " + std::to_string(epoch);
      break;
    }
    if (improves(val, res.best_val, val_set.layout, cfg.select_by)) {
      res.best_val = val;
      res.best = model;
      res.best_epoch = epoch;
    }
  }
  res.final = std::move(model);
  return res;
}

}  // namespace elm
