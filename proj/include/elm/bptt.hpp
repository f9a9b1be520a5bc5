#pragma once

// Full-sequence rollouts that record a tape, and hand-derived reverse-mode
// rules for every cell. No truncation: the backward pass always runs over
// the whole recorded sequence.

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "elm/cells.hpp"
#include "elm/numerics.hpp"

namespace elm {

/// Non-owning view of one input sequence, row-major [steps, channels].
/// `dt` holds either one entry per step or a single constant.
struct SequenceView {
  std::span<const double> inputs;
  std::size_t steps = 0;
  std::size_t channels = 0;
  std::span<const double> dt;

  std::span<const double> input(std::size_t t) const { return inputs.subspan(t * channels, channels); }
  double dt_at(std::size_t t) const { return dt.size() == 1 ? dt[0] : dt[t]; }

  void validate() const {
    detail::require_size(inputs.size(), steps * channels, "sequence inputs");
    detail::require(dt.size() == 1 || dt.size() == steps, "sequence dt must be constant or per-step");
    for (double d : dt) detail::require(d > 0.0, "sequence dt must be > 0");
  }
};

/// Stochastic regularisation applied during training rollouts only.
struct TrainNoise {
  double dropout = 0.0;            // ELM: MLP hidden activations
  double recurrent_dropout = 0.0;  // LSTM: variational mask on h
  Rng* rng = nullptr;
};

template <typename Record, typename State>
struct Tape {
  State initial;
  std::vector<Record> steps;
  std::size_t size() const { return steps.size(); }
  bool empty() const { return steps.empty(); }
};

template <typename Record, typename State>
struct Rollout {
  std::vector<Vector> outputs;
  Tape<Record, State> tape;
  State final_state;
  double spike_count = 0.0;  // SNN only
};

using ElmTape = Tape<ElmStepRecord, ElmState>;
using ElmRollout = Rollout<ElmStepRecord, ElmState>;

namespace detail {

inline void check_finite(std::span<const double> v, const char* what, std::size_t seq, std::size_t step) {
  if (!all_finite(v)) throw NonFiniteError(std::string("non-finite ") + what, seq, step);
}

inline std::vector<Vector> zero_output_grads(std::size_t steps, std::size_t d_o) {
  return std::vector<Vector>(steps, Vector(d_o, 0.0));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ELM

inline ElmRollout rollout(const ElmParams& p, const ElmState& s0, const SequenceView& seq,
                          const TrainNoise& noise = {}, std::size_t sequence_index = 0) {
  seq.validate();
  detail::require_size(seq.channels, p.d_s, "ELM rollout channels");
  detail::require_size(s0.s.size(), p.d_s, "ELM rollout state.s");
  detail::require_size(s0.m.size(), p.d_m, "ELM rollout state.m");
  const Vector tau = p.tau_m();
  const Vector w_s = p.w_s();
  const DropoutSpec dropout{noise.dropout, noise.rng};
  ElmRollout r;
  r.tape.initial = s0;
  r.tape.steps.resize(seq.steps);
  r.outputs.reserve(seq.steps);
  ElmState st = s0;
  for (std::size_t t = 0; t < seq.steps; ++t) {
    ElmStepRecord& rec = r.tape.steps[t];
    st = detail::elm_step_impl(p, tau, w_s, st, seq.input(t), seq.dt_at(t), &rec, dropout);
    detail::check_finite(st.m, "ELM memory", sequence_index, t);
    detail::check_finite(st.s, "ELM synaptic trace", sequence_index, t);
    rec.y = elm_readout(p, st.m);
    r.outputs.push_back(rec.y);
  }
  r.final_state = std::move(st);
  return r;
}

/// Gradient of a scalar loss with respect to every trainable ELM parameter,
/// given dL/dy_t for each step. `tau_grad`, when given, receives dL/dtau_m
/// (the gradient before the sigmoid reparametrisation).
inline ElmParams backward(const ElmTape& tape, const ElmParams& p, std::span<const Vector> output_grads,
                          Vector* tau_grad = nullptr) {
  detail::require_size(output_grads.size(), tape.size(), "ELM backward output grads");
  const std::size_t d_s = p.d_s;
  const std::size_t d_m = p.d_m;
  const std::size_t off = p.integration_width();
  const std::size_t n_layers = p.mlp_weights.size();
  ElmParams g = zeros_like(p);
  const Vector tau = p.tau_m();

  Vector gm(d_m, 0.0), gs(d_s, 0.0), gtau(d_m, 0.0);
  for (std::size_t t = tape.size(); t-- > 0;) {
    const ElmStepRecord& rec = tape.steps[t];
    detail::require(rec.m.size() == d_m && rec.x.size() == d_s && rec.layer_inputs.size() == n_layers,
                    "ELM backward: tape does not match parameters");
    const Vector& gy = output_grads[t];
    detail::require_size(gy.size(), p.d_o, "ELM backward output grad");

    matvec_transposed_add(p.w_y, gy, gm);
    add_outer(g.w_y, gy, rec.m);
    axpy(1.0, gy, g.b_y);

    Vector gkappa(d_m), gcoef(d_m), gm_prev(d_m), gq(d_m);
    for (std::size_t i = 0; i < d_m; ++i) {
      const double delta = rec.delta_m[i];
      gkappa[i] = gm[i] * rec.m_prev[i];
      gcoef[i] = gm[i] * delta;
      gm_prev[i] = gm[i] * rec.kappa_m[i];
      gq[i] = gm[i] * rec.update[i] * (1.0 - delta * delta);
    }

    // MLP, output layer then hidden layers
    Vector ga(rec.layer_inputs.back().size(), 0.0);
    add_outer(g.mlp_weights.back(), gq, rec.layer_inputs.back());
    axpy(1.0, gq, g.mlp_biases.back());
    matvec_transposed_add(p.mlp_weights.back(), gq, ga);
    for (std::size_t l = n_layers - 1; l-- > 0;) {
      const Vector& z = rec.hidden_pre[l];
      const Vector& scale = rec.dropout_scale[l];
      Vector gz(z.size());
      for (std::size_t k = 0; k < z.size(); ++k) {
        gz[k] = z[k] > 0.0 ? ga[k] : 0.0;
        if (!scale.empty()) gz[k] *= scale[k];
      }
      add_outer(g.mlp_weights[l], gz, rec.layer_inputs[l]);
      axpy(1.0, gz, g.mlp_biases[l]);
      ga.assign(rec.layer_inputs[l].size(), 0.0);
      matvec_transposed_add(p.mlp_weights[l], gz, ga);
    }

    for (std::size_t i = 0; i < d_m; ++i) {
      gm_prev[i] += ga[off + i] * rec.kappa_m[i];
      gkappa[i] += ga[off + i] * rec.m_prev[i];
    }
    const std::span<const double> gz_in(ga.data(), off);
    if (p.branch) {
      branch_reduce_backward(*p.branch, gz_in, gs);
    } else {
      axpy(1.0, gz_in, gs);
    }
    if (p.w_s_trainable) {
      for (std::size_t i = 0; i < d_s; ++i)
        if (p.w_s_raw[i] > 0.0) g.w_s_raw[i] += gs[i] * rec.x[i];
    }
    for (std::size_t i = 0; i < d_s; ++i) gs[i] *= rec.kappa_s[i];

    for (std::size_t i = 0; i < d_m; ++i) {
      const double inv_tau2 = rec.dt / (tau[i] * tau[i]);
      if (p.variant == ElmVariant::original) {
        gkappa[i] -= p.lambda * gcoef[i];
      } else {
        gtau[i] -= gcoef[i] * rec.kappa_lambda[i] * p.lambda * inv_tau2;
      }
      gtau[i] += gkappa[i] * rec.kappa_m[i] * inv_tau2;
    }
    gm = std::move(gm_prev);
  }
  for (std::size_t i = 0; i < d_m; ++i) g.theta_m[i] = gtau[i] * p.tau_bounds.dtau_dtheta(p.theta_m[i]);
  if (tau_grad) *tau_grad = gtau;
  return g;
}

// ---------------------------------------------------------------------------
// LSTM

using LstmTape = Tape<LstmStepRecord, LstmState>;
using LstmRollout = Rollout<LstmStepRecord, LstmState>;

inline LstmRollout rollout(const LstmParams& p, const LstmState& s0, const SequenceView& seq,
                           const TrainNoise& noise = {}, std::size_t sequence_index = 0,
                           Vector* recurrent_mask_out = nullptr) {
  seq.validate();
  detail::require_size(seq.channels, p.d_in, "LSTM rollout channels");
  Vector mask;
  if (noise.recurrent_dropout > 0.0 && noise.rng) {
    const double keep = 1.0 - noise.recurrent_dropout;
    mask.resize(p.hidden);
    for (auto& m : mask) m = noise.rng->bernoulli(keep) ? 1.0 / keep : 0.0;
  }
  LstmRollout r;
  r.tape.initial = s0;
  r.tape.steps.resize(seq.steps);
  LstmState st = s0;
  for (std::size_t t = 0; t < seq.steps; ++t) {
    st = detail::lstm_step_impl(p, st, seq.input(t), mask, &r.tape.steps[t]);
    detail::check_finite(st.c, "LSTM cell", sequence_index, t);
    r.outputs.push_back(lstm_readout(p, st.h));
  }
  r.final_state = std::move(st);
  if (recurrent_mask_out) *recurrent_mask_out = mask;
  return r;
}

/// `recurrent_mask` must be the mask the rollout used (empty when none).
inline LstmParams backward(const LstmTape& tape, const LstmParams& p, std::span<const Vector> output_grads,
                           std::span<const double> recurrent_mask = {}) {
  detail::require_size(output_grads.size(), tape.size(), "LSTM backward output grads");
  const std::size_t h = p.hidden;
  LstmParams g = zeros_like(p);
  Vector gh(h, 0.0), gc(h, 0.0), dz(4 * h);
  for (std::size_t t = tape.size(); t-- > 0;) {
    const LstmStepRecord& rec = tape.steps[t];
    detail::require(rec.h.size() == h && rec.x.size() == p.d_in, "LSTM backward: tape does not match parameters");
    const Vector& gy = output_grads[t];
    matvec_transposed_add(p.w_y, gy, gh);
    add_outer(g.w_y, gy, rec.h);
    axpy(1.0, gy, g.b_y);
    for (std::size_t k = 0; k < h; ++k) {
      const double go = gh[k] * rec.tanh_c[k];
      gc[k] += gh[k] * rec.o[k] * (1.0 - rec.tanh_c[k] * rec.tanh_c[k]);
      const double gf = gc[k] * rec.c_prev[k];
      const double gi = gc[k] * rec.g[k];
      const double gg = gc[k] * rec.i[k];
      dz[k] = gi * rec.i[k] * (1.0 - rec.i[k]);
      dz[h + k] = gf * rec.f[k] * (1.0 - rec.f[k]);
      dz[2 * h + k] = gg * (1.0 - rec.g[k] * rec.g[k]);
      dz[3 * h + k] = go * rec.o[k] * (1.0 - rec.o[k]);
      gc[k] *= rec.f[k];
    }
    add_outer(g.w, dz, rec.x);
    add_outer(g.u, dz, rec.h_prev);
    axpy(1.0, dz, g.b);
    std::fill(gh.begin(), gh.end(), 0.0);
    matvec_transposed_add(p.u, dz, gh);
    if (!recurrent_mask.empty())
      for (std::size_t k = 0; k < h; ++k) gh[k] *= recurrent_mask[k];
  }
  return g;
}

// ---------------------------------------------------------------------------
// LIF / ALIF as single-neuron cells. Output per step is [v_readout, spike].
// Backward replaces d(spike)/dv by the triangular surrogate and propagates
// through the reset.

struct LifStepRecord {
  double dt = 0.0;
  Vector x;
  double v_prev = 0.0;
  double a_prev = 0.0;
  double kappa = 0.0;
  double kappa_a = 0.0;
  double drive = 0.0;
  double v_pre = 0.0;
  bool spike = false;
};

struct LifState {
  double v = 0.0;
  double a = 0.0;
};

using LifTape = Tape<LifStepRecord, LifState>;
using LifRollout = Rollout<LifStepRecord, LifState>;

inline constexpr double kLifSurrogateWidth = 1.0;

namespace detail {

template <bool Adaptive>
LifRollout lif_rollout_impl(const AlifParams& p, const LifState& s0, const SequenceView& seq, std::size_t seq_index) {
  seq.validate();
  detail::require_size(seq.channels, p.w.size(), "LIF rollout channels");
  LifRollout r;
  r.tape.initial = s0;
  r.tape.steps.resize(seq.steps);
  LifState st = s0;
  for (std::size_t t = 0; t < seq.steps; ++t) {
    LifStepRecord& rec = r.tape.steps[t];
    rec.dt = seq.dt_at(t);
    const auto x = seq.input(t);
    rec.x.assign(x.begin(), x.end());
    rec.v_prev = st.v;
    rec.a_prev = st.a;
    rec.kappa = std::exp(-rec.dt / p.tau);
    rec.drive = dot(p.w, x) + p.bias;
    rec.v_pre = rec.kappa * st.v + (1.0 - rec.kappa) * rec.drive;
    const double thr = p.threshold + (Adaptive ? st.a : 0.0);
    rec.spike = rec.v_pre >= thr;
    st.v = rec.spike ? p.v_reset : rec.v_pre;
    if constexpr (Adaptive) {
      rec.kappa_a = std::exp(-rec.dt / p.tau_a);
      st.a = rec.kappa_a * st.a + (rec.spike ? p.strength : 0.0);
    }
    if (!std::isfinite(st.v)) throw NonFiniteError("non-finite LIF membrane", seq_index, t);
    r.outputs.push_back({rec.v_pre, rec.spike ? 1.0 : 0.0});
  }
  r.final_state = st;
  return r;
}

template <bool Adaptive>
AlifParams lif_backward_impl(const LifTape& tape, const AlifParams& p, std::span<const Vector> output_grads) {
  detail::require_size(output_grads.size(), tape.size(), "LIF backward output grads");
  AlifParams g = p;
  std::fill(g.w.begin(), g.w.end(), 0.0);
  g.tau = g.bias = g.tau_a = 0.0;
  double gv = 0.0, ga = 0.0;
  for (std::size_t t = tape.size(); t-- > 0;) {
    const LifStepRecord& rec = tape.steps[t];
    detail::require_size(rec.x.size(), p.w.size(), "LIF backward: tape does not match parameters");
    const double thr = p.threshold + (Adaptive ? rec.a_prev : 0.0);
    const double surr = spike_surrogate(rec.v_pre, thr, kLifSurrogateWidth);
    const double spike = rec.spike ? 1.0 : 0.0;
    // downstream of the spike: readout, reset and adaptation jump
    double gspike = output_grads[t][1] + gv * (p.v_reset - rec.v_pre);
    double ga_prev = 0.0;
    if constexpr (Adaptive) {
      gspike += ga * p.strength;
      ga_prev = ga * rec.kappa_a;
      g.tau_a += ga * rec.a_prev * rec.kappa_a * rec.dt / (p.tau_a * p.tau_a);
    }
    const double gvpre = output_grads[t][0] + gv * (1.0 - spike) + gspike * surr;
    if constexpr (Adaptive) ga_prev -= gspike * surr;
    const double gdrive = gvpre * (1.0 - rec.kappa);
    for (std::size_t i = 0; i < p.w.size(); ++i) g.w[i] += gdrive * rec.x[i];
    g.bias += gdrive;
    const double gkappa = gvpre * (rec.v_prev - rec.drive);
    g.tau += gkappa * rec.kappa * rec.dt / (p.tau * p.tau);
    gv = gvpre * rec.kappa;
    ga = ga_prev;
  }
  return g;
}

}  // namespace detail

inline LifRollout rollout(const LifParams& p, const LifState& s0, const SequenceView& seq, const TrainNoise& = {},
                          std::size_t sequence_index = 0) {
  AlifParams a;
  static_cast<LifParams&>(a) = p;
  return detail::lif_rollout_impl<false>(a, s0, seq, sequence_index);
}

inline LifRollout rollout(const AlifParams& p, const LifState& s0, const SequenceView& seq, const TrainNoise& = {},
                          std::size_t sequence_index = 0) {
  return detail::lif_rollout_impl<true>(p, s0, seq, sequence_index);
}

inline LifParams backward(const LifTape& tape, const LifParams& p, std::span<const Vector> output_grads) {
  AlifParams a;
  static_cast<LifParams&>(a) = p;
  return static_cast<LifParams>(detail::lif_backward_impl<false>(tape, a, output_grads));
}

inline AlifParams backward(const LifTape& tape, const AlifParams& p, std::span<const Vector> output_grads) {
  return detail::lif_backward_impl<true>(tape, p, output_grads);
}

// ---------------------------------------------------------------------------
// SNN

using SnnTape = Tape<SnnStepRecord, SnnState>;
using SnnRollout = Rollout<SnnStepRecord, SnnState>;

inline SnnRollout rollout(const SnnParams& p, const SnnState& s0, const SequenceView& seq, const TrainNoise& = {},
                          std::size_t sequence_index = 0) {
  seq.validate();
  detail::require_size(seq.channels, p.n_in, "SNN rollout channels");
  const Vector tau = snn_tau(p);
  SnnRollout r;
  r.tape.initial = s0;
  r.tape.steps.resize(seq.steps);
  SnnState st = s0;
  for (std::size_t t = 0; t < seq.steps; ++t) {
    st = detail::snn_step_impl(p, tau, st, seq.input(t), seq.dt_at(t), &r.tape.steps[t]);
    detail::check_finite(st.v, "SNN membrane", sequence_index, t);
    for (double s : st.spikes) r.spike_count += s;
    r.outputs.push_back(st.filtered);
  }
  r.final_state = std::move(st);
  return r;
}

/// `spike_grad` is added to dL/dspike for every neuron and step (the
/// derivative of a linear spike-count penalty).
inline SnnParams backward(const SnnTape& tape, const SnnParams& p, std::span<const Vector> output_grads,
                          double spike_grad = 0.0) {
  detail::require_size(output_grads.size(), tape.size(), "SNN backward output grads");
  const std::size_t n = p.n_neurons();
  SnnParams g = zeros_like(p);
  const Vector tau = snn_tau(p);
  Vector gfilt(p.n_out, 0.0), gv(n, 0.0), gspike_future(n, 0.0), gtau(n, 0.0);
  for (std::size_t t = tape.size(); t-- > 0;) {
    const SnnStepRecord& rec = tape.steps[t];
    detail::require(rec.v_pre.size() == n && rec.x.size() == p.n_in, "SNN backward: tape does not match parameters");
    const double ko = std::exp(-rec.dt / p.output_tau);
    Vector gspike = gspike_future;
    for (auto& gsp : gspike) gsp += spike_grad;
    for (std::size_t o = 0; o < p.n_out; ++o) {
      gfilt[o] += output_grads[t][o];
      gspike[p.n_rec + o] += gfilt[o];
      gfilt[o] *= ko;
    }
    Vector gv_prev(n, 0.0), gspike_prev(n, 0.0);
    auto backprop_neuron = [&](std::size_t j) {
      const double gs_total = gspike[j] - gv[j] * p.reset_fraction * p.v_threshold;
      const double gvpre = gv[j] + gs_total * spike_surrogate(rec.v_pre[j], p.v_threshold, p.surrogate_width);
      if (gvpre == 0.0) return;
      gv_prev[j] = gvpre * rec.kappa[j];
      gtau[j] += gvpre * rec.v_prev[j] * rec.kappa[j] * rec.dt / (tau[j] * tau[j]);
      const bool is_output = j >= p.n_rec;
      const auto w = p.w_raw.row(j);
      auto gw = g.w_raw.row(j);
      for (std::size_t k = 0; k < p.synapses; ++k) {
        if (w[k] <= 0.0) continue;
        const SynapseSource& src = p.sources[j * p.synapses + k];
        double value = 0.0;
        if (src.kind == SourceKind::input) {
          value = rec.x[src.index];
        } else if (src.kind == SourceKind::recurrent) {
          const double sgn = p.sign[src.index];
          value = sgn * (is_output ? rec.spikes[src.index] : rec.spikes_prev[src.index]);
          if (is_output) {
            gspike[src.index] += gvpre * w[k] * sgn;
          } else {
            gspike_prev[src.index] += gvpre * w[k] * sgn;
          }
        } else {
          const std::size_t idx = p.n_rec + src.index;
          value = p.sign[idx] * rec.spikes_prev[idx];
          gspike_prev[idx] += gvpre * w[k] * p.sign[idx];
        }
        gw[k] += gvpre * value;
      }
    };
    for (std::size_t j = p.n_rec; j < n; ++j) backprop_neuron(j);
    for (std::size_t j = 0; j < p.n_rec; ++j) backprop_neuron(j);
    gv = std::move(gv_prev);
    gspike_future = std::move(gspike_prev);
  }
  for (std::size_t j = 0; j < n; ++j) g.theta[j] = gtau[j] * p.tau_bounds.dtau_dtheta(p.theta[j]);
  return g;
}

// ---------------------------------------------------------------------------
// Gradient verification against central finite differences

enum class CellKind { elm, elm_improved, branch_elm, linear_elm, lstm, lif, alif, snn };

inline std::string_view to_string(CellKind k) {
  switch (k) {
    case CellKind::elm: return "elm";
    case CellKind::elm_improved: return "elm_improved";
    case CellKind::branch_elm: return "branch_elm";
    case CellKind::linear_elm: return "linear_elm";
    case CellKind::lstm: return "lstm";
    case CellKind::lif: return "lif";
    case CellKind::alif: return "alif";
    case CellKind::snn: return "snn";
  }
  return "?";
}

inline std::optional<CellKind> parse_cell_kind(std::string_view s) {
  for (CellKind k : {CellKind::elm, CellKind::elm_improved, CellKind::branch_elm, CellKind::linear_elm,
                     CellKind::lstm, CellKind::lif, CellKind::alif, CellKind::snn})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline bool uses_surrogate(CellKind k) { return k == CellKind::lif || k == CellKind::alif || k == CellKind::snn; }

/// Cells without ReLU kinks or spikes.
inline bool is_smooth(CellKind k) { return k == CellKind::linear_elm || k == CellKind::lstm; }

struct GradCheckSizes {
  std::size_t d_s = 6;
  std::size_t d_m = 3;
  std::size_t steps = 12;
  std::size_t d_o = 2;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Scales the largest analytic gradient entry by 1.5 (negative control).
  bool corrupt_backward = false;
  /// Instances with a nonzero finite-difference entry smaller than
  /// resolution * max(1, loss scale) are redrawn: at step 1e-5 the
  /// difference quotient carries a rounding error near 1e-11 per unit of
  /// loss magnitude, so smaller entries cannot be compared at 1e-6.
  double resolution = 1e-4;
  int max_attempts = 64;
};

struct GradCheckReport {
  CellKind kind = CellKind::elm;
  std::size_t n_params = 0;
  double max_rel_err = 0.0;
  std::string worst_parameter;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double min_abs_gradient = 0.0;  // smallest nonzero |finite-difference entry|
  double loss_scale = 0.0;
  int redraws = 0;
  bool surrogate_used = false;
  std::string note;
};

/// |a - b| / max(|a|, |b|, 1e-8)
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

namespace detail {

/// Random linear probe L = sum_t sum_o r_to y_to, so dL/dy = r.
struct ProbeLoss {
  std::vector<Vector> weights;

  double value(const std::vector<Vector>& ys) const {
    double acc = 0.0;
    for (std::size_t t = 0; t < ys.size(); ++t)
      for (std::size_t o = 0; o < ys[t].size(); ++o) acc += weights[t][o] * ys[t][o];
    return acc;
  }
  /// sum |r y|: the magnitude that sets the rounding error of value().
  double scale(const std::vector<Vector>& ys) const {
    double acc = 0.0;
    for (std::size_t t = 0; t < ys.size(); ++t)
      for (std::size_t o = 0; o < ys[t].size(); ++o) acc += std::abs(weights[t][o] * ys[t][o]);
    return acc;
  }
  std::vector<Vector> grads(const std::vector<Vector>& ys) const {
    std::vector<Vector> g(ys.size());
    for (std::size_t t = 0; t < ys.size(); ++t) g[t] = weights[t];
    return g;
  }
};

inline double min_abs_hidden_preactivation(const ElmTape& tape) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& rec : tape.steps)
    for (const auto& z : rec.hidden_pre)
      for (double v : z) m = std::min(m, std::abs(v));
  return m;
}

template <typename Params, typename State>
GradCheckReport compare_with_finite_differences(Params params, const State& s0, const SequenceView& seq,
                                                 const ProbeLoss& loss, const GradCheckOptions& opt) {
  auto eval = [&](const Params& p) { return loss.value(rollout(p, s0, seq).outputs); };
  const auto r = rollout(params, s0, seq);
  Vector analytic = flatten(backward(r.tape, params, loss.grads(r.outputs)));
  if (opt.corrupt_backward && !analytic.empty()) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
      if (std::abs(analytic[i]) > std::abs(analytic[idx])) idx = i;
    analytic[idx] *= 1.5;
  }

  std::vector<std::string> names;
  params.for_each_trainable([&](std::string_view name, std::span<double> v) {
    for (std::size_t i = 0; i < v.size(); ++i) names.push_back(std::string(name) + "[" + std::to_string(i) + "]");
  });
  Vector flat = flatten(params);
  GradCheckReport rep;
  rep.n_params = flat.size();
  rep.loss_scale = loss.scale(r.outputs);
  rep.min_abs_gradient = std::numeric_limits<double>::infinity();
  const double h = opt.step;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double orig = flat[i];
    auto at = [&](double offset) {
      flat[i] = orig + offset;
      unflatten(params, flat);
      return eval(params);
    };
    const double numeric = (at(h) - at(-h)) / (2.0 * h);
    flat[i] = orig;
    if (numeric != 0.0) rep.min_abs_gradient = std::min(rep.min_abs_gradient, std::abs(numeric));
    const double err = relative_error(analytic[i], numeric);
    if (err > rep.max_rel_err || rep.worst_parameter.empty()) {
      rep.max_rel_err = err;
      rep.worst_parameter = names[i];
      rep.worst_analytic = analytic[i];
      rep.worst_numeric = numeric;
    }
  }
  unflatten(params, flat);
  return rep;
}

inline std::vector<double> random_inputs(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace detail

/// Builds a random instance of `kind`, runs BPTT and central differences on
/// every trainable scalar and reports the worst relative disagreement.
/// Inputs are redrawn while a ReLU pre-activation lies within 1e-3 of its
/// kink or a gradient entry is below the finite-difference resolution.
inline GradCheckReport grad_check(CellKind kind, const GradCheckSizes& sizes, std::uint64_t seed,
                                  const GradCheckOptions& opt = {}) {
  Rng master(seed);
  Rng init = master.substream("init");
  Rng data = master.substream("data");
  const std::size_t T = sizes.steps;
  const std::size_t d_out = (kind == CellKind::lif || kind == CellKind::alif) ? 2 : sizes.d_o;

  detail::ProbeLoss loss;
  for (std::size_t t = 0; t < T; ++t) loss.weights.push_back(detail::random_inputs(data, d_out, -1.0, 1.0));
  const Vector dts = detail::random_inputs(data, T, 0.5, 2.0);

  // builds and compares one instance; nullopt when the instance has a kink
  std::function<std::optional<GradCheckReport>(const std::vector<double>&)> attempt;
  double input_lo = -1.0, input_hi = 1.0;
  std::size_t channels = sizes.d_s;

  ElmParams elm_p;
  LstmParams lstm_p;
  AlifParams alif_p;
  SnnParams snn_p;
  switch (kind) {
    case CellKind::elm:
    case CellKind::elm_improved:
    case CellKind::branch_elm:
    case CellKind::linear_elm: {
      ElmConfig cfg;
      cfg.d_s = sizes.d_s;
      cfg.d_m = sizes.d_m;
      cfg.d_mlp = 2 * sizes.d_m;
      cfg.l_mlp = kind == CellKind::linear_elm ? 0 : 1;
      cfg.d_o = sizes.d_o;
      cfg.lambda = 3.0;
      cfg.variant = kind == CellKind::elm_improved ? ElmVariant::improved : ElmVariant::original;
      cfg.tau_bounds = {1.0, 50.0};
      cfg.tau_init_lo = 2.0;
      cfg.tau_init_hi = 30.0;
      if (kind == CellKind::branch_elm)
        cfg.branch = std::pair<std::size_t, std::size_t>{3, std::max<std::size_t>(1, sizes.d_s / 2)};
      elm_p = make_elm(cfg, init);
      for (auto& th : elm_p.theta_m) th += init.uniform(-0.5, 0.5);
      for (auto& t : elm_p.tau_s) t = init.uniform(2.0, 10.0);
      if (elm_p.w_s_trainable)
        for (auto& w : elm_p.w_s_raw) w = init.uniform(0.1, 1.0);
      attempt = [&](const std::vector<double>& inputs) -> std::optional<GradCheckReport> {
        const SequenceView seq{inputs, T, sizes.d_s, dts};
        if (elm_p.l_mlp() > 0 &&
            detail::min_abs_hidden_preactivation(rollout(elm_p, initial_state(elm_p), seq).tape) <= 1e-3)
          return std::nullopt;
        return detail::compare_with_finite_differences(elm_p, initial_state(elm_p), seq, loss, opt);
      };
      break;
    }
    case CellKind::lstm: {
      lstm_p = make_lstm(sizes.d_s, sizes.d_m, sizes.d_o, init);
      // the default init leaves recurrent gradients near the difference-quotient noise floor
      for (auto* m : {&lstm_p.w, &lstm_p.u})
        for (auto& x : m->values()) x = init.uniform(-1.0, 1.0);
      for (auto& x : lstm_p.b) x = init.uniform(-1.0, 1.0);
      attempt = [&](const std::vector<double>& inputs) -> std::optional<GradCheckReport> {
        const SequenceView seq{inputs, T, sizes.d_s, dts};
        return detail::compare_with_finite_differences(lstm_p, initial_state(lstm_p), seq, loss, opt);
      };
      break;
    }
    case CellKind::lif:
    case CellKind::alif: {
      alif_p.w = detail::random_inputs(init, sizes.d_s, -0.5, 1.5);
      alif_p.tau = 10.0;
      alif_p.bias = 0.3;
      alif_p.tau_a = 50.0;
      alif_p.strength = 0.5;
      input_lo = 0.0;
      attempt = [&](const std::vector<double>& inputs) -> std::optional<GradCheckReport> {
        const SequenceView seq{inputs, T, sizes.d_s, dts};
        if (kind == CellKind::lif)
          return detail::compare_with_finite_differences(static_cast<LifParams>(alif_p), LifState{}, seq, loss, opt);
        return detail::compare_with_finite_differences(alif_p, LifState{}, seq, loss, opt);
      };
      break;
    }
    case CellKind::snn: {
      SnnConfig cfg;
      cfg.n_in = sizes.d_s;
      cfg.n_total = 4 * sizes.d_m + sizes.d_o;
      cfg.n_out = sizes.d_o;
      cfg.synapses = 8;
      snn_p = make_snn(cfg, init);
      for (auto& w : snn_p.w_raw.values()) w = init.uniform(0.05, 0.6);
      input_lo = 0.0;
      input_hi = 2.0;
      attempt = [&](const std::vector<double>& inputs) -> std::optional<GradCheckReport> {
        const SequenceView seq{inputs, T, sizes.d_s, dts};
        return detail::compare_with_finite_differences(snn_p, initial_state(snn_p), seq, loss, opt);
      };
      break;
    }
  }

  GradCheckReport rep;
  bool have = false;
  for (int a = 0; a < opt.max_attempts; ++a) {
    Rng draw = data.substream("inputs", static_cast<std::uint64_t>(a));
    const auto inputs = detail::random_inputs(draw, T * channels, input_lo, input_hi);
    auto r = attempt(inputs);
    if (!r) continue;
    rep = *r;
    rep.redraws = a;
    have = true;
    if (uses_surrogate(kind) || rep.min_abs_gradient >= opt.resolution * std::max(1.0, rep.loss_scale)) break;
  }
  detail::require(have, "grad_check: no kink-free instance found");
  rep.kind = kind;
  if (uses_surrogate(kind)) {
    rep.surrogate_used = true;
    rep.note = "non-differentiable path, surrogate used";
  }
  return rep;
}

/// Pass threshold for grad_check: 1e-6 on smooth cells, 1e-4 otherwise.
/// Surrogate cells have no threshold (their analytic gradient is not the
/// derivative of the forward pass).
inline std::optional<double> grad_check_threshold(CellKind kind) {
  if (uses_surrogate(kind)) return std::nullopt;
  return is_smooth(kind) ? 1e-6 : 1e-4;
}

inline bool grad_check_passed(const GradCheckReport& rep) {
  const auto thr = grad_check_threshold(rep.kind);
  return !thr || rep.max_rel_err < *thr;
}

}  // namespace elm
