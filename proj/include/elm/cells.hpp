#pragma once

// Forward dynamics of the recurrent cells: ELM / Branch-ELM (original and
// improved memory update), LIF, ALIF, LSTM (optionally chrono-initialised)
// and a two-layer recurrent LIF network.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "elm/numerics.hpp"

namespace elm {

// ---------------------------------------------------------------------------
// Shared helpers

/// Timescale constrained to (lo, hi) through a sigmoid.
struct BoundedTimescale {
  double lo = 1.0;
  double hi = 1000.0;

  double tau(double theta) const { return lo + (hi - lo) * sigmoid(theta); }
  double dtau_dtheta(double theta) const {
    const double s = sigmoid(theta);
    return (hi - lo) * s * (1.0 - s);
  }
  /// Inverse map. Targets on (or beyond) the bounds are pulled 1e-4 of the
  /// range inside so the pre-parameter stays finite.
  double theta(double tau) const {
    double frac = (tau - lo) / (hi - lo);
    frac = std::clamp(frac, 1e-4, 1.0 - 1e-4);
    return logit(frac);
  }
  void validate() const {
    detail::require(lo > 0.0 && hi > lo, "timescale bounds must satisfy 0 < lo < hi");
  }
};

enum class Spacing { linear, log };

/// n targets spaced over [lo, hi]; a single target sits at lo.
inline Vector spaced_values(double lo, double hi, std::size_t n, Spacing spacing) {
  Vector out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    out[i] = spacing == Spacing::log ? std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)))
                                     : lo + f * (hi - lo);
  }
  return out;
}

/// Visits every trainable tensor of a parameter record as (name, span).
template <typename Params>
std::size_t count_params(const Params& p) {
  std::size_t n = 0;
  const_cast<Params&>(p).for_each_trainable([&](std::string_view, std::span<double> v) { n += v.size(); });
  return n;
}

/// Copy of `p` with every trainable entry zeroed; used as a gradient accumulator.
template <typename Params>
Params zeros_like(const Params& p) {
  Params g = p;
  g.for_each_trainable([](std::string_view, std::span<double> v) { std::fill(v.begin(), v.end(), 0.0); });
  return g;
}

/// a += b over all trainables (shapes must match).
template <typename Params>
void accumulate(Params& a, const Params& b) {
  std::vector<std::span<double>> bs;
  const_cast<Params&>(b).for_each_trainable([&](std::string_view, std::span<double> v) { bs.push_back(v); });
  std::size_t i = 0;
  a.for_each_trainable([&](std::string_view name, std::span<double> v) {
    detail::require(i < bs.size() && bs[i].size() == v.size(),
                    std::string("gradient shape mismatch at ") + std::string(name));
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += bs[i][k];
    ++i;
  });
}

/// All trainable values concatenated in visiting order.
template <typename Params>
Vector flatten(const Params& p) {
  Vector out;
  const_cast<Params&>(p).for_each_trainable(
      [&](std::string_view, std::span<double> v) { out.insert(out.end(), v.begin(), v.end()); });
  return out;
}

template <typename Params>
void unflatten(Params& p, std::span<const double> flat) {
  std::size_t off = 0;
  p.for_each_trainable([&](std::string_view, std::span<double> v) {
    detail::require(off + v.size() <= flat.size(), "unflatten: vector too short");
    std::copy(flat.begin() + off, flat.begin() + off + v.size(), v.begin());
    off += v.size();
  });
  detail::require(off == flat.size(), "unflatten: vector too long");
}

// ---------------------------------------------------------------------------
// Branch layout

struct BranchLayout {
  std::size_t d_s = 0;
  std::size_t d_tree = 0;
  std::size_t d_brch = 0;
  std::vector<std::size_t> window_starts;
};

/// Equally spaced windows: start_j = round(j * (d_s - d_brch) / (d_tree - 1)).
/// Windows overlap when d_tree * d_brch > d_s.
inline BranchLayout make_branch_layout(std::size_t d_s, std::size_t d_tree, std::size_t d_brch) {
  detail::require(d_tree >= 1 && d_brch >= 1, "branch layout: d_tree and d_brch must be >= 1");
  detail::require(d_brch <= d_s, "branch layout: window larger than synapse count");
  BranchLayout layout{d_s, d_tree, d_brch, {}};
  layout.window_starts.resize(d_tree, 0);
  if (d_tree > 1) {
    const double stride = static_cast<double>(d_s - d_brch) / static_cast<double>(d_tree - 1);
    for (std::size_t j = 0; j < d_tree; ++j)
      layout.window_starts[j] = static_cast<std::size_t>(std::llround(stride * static_cast<double>(j)));
  }
  return layout;
}

inline void validate(const BranchLayout& layout) {
  detail::require(layout.window_starts.size() == layout.d_tree, "branch layout: start count != d_tree");
  for (std::size_t j = 0; j < layout.d_tree; ++j) {
    detail::require(layout.window_starts[j] + layout.d_brch <= layout.d_s, "branch layout: window out of range");
    if (j > 0)
      detail::require(layout.window_starts[j] >= layout.window_starts[j - 1], "branch layout: starts must be nondecreasing");
  }
}

/// Per-branch sum of synaptic traces. The traces already carry w_s.
inline Vector branch_reduce(const BranchLayout& layout, std::span<const double> s) {
  detail::require_size(s.size(), layout.d_s, "branch_reduce traces");
  Vector out(layout.d_tree, 0.0);
  for (std::size_t j = 0; j < layout.d_tree; ++j) {
    const std::size_t start = layout.window_starts[j];
    double acc = 0.0;
    for (std::size_t i = start; i < start + layout.d_brch; ++i) acc += s[i];
    out[j] = acc;
  }
  return out;
}

/// Adjoint of branch_reduce: g_s[i] += sum of g_branch over windows containing i.
inline void branch_reduce_backward(const BranchLayout& layout, std::span<const double> g_branch, std::span<double> g_s) {
  for (std::size_t j = 0; j < layout.d_tree; ++j) {
    const std::size_t start = layout.window_starts[j];
    for (std::size_t i = start; i < start + layout.d_brch; ++i) g_s[i] += g_branch[j];
  }
}

// ---------------------------------------------------------------------------
// ELM neuron

enum class ElmVariant { original, improved };

inline std::string_view to_string(ElmVariant v) { return v == ElmVariant::original ? "original" : "improved"; }

struct ElmConfig {
  std::size_t d_s = 1;
  std::size_t d_m = 1;
  std::size_t d_mlp = 2;  // 0 means 2 * d_m
  std::size_t l_mlp = 1;
  std::size_t d_o = 1;
  double lambda = 5.0;
  ElmVariant variant = ElmVariant::original;
  BoundedTimescale tau_bounds{1.0, 1000.0};
  double tau_init_lo = 1.0;
  double tau_init_hi = 1000.0;
  Spacing tau_init_spacing = Spacing::log;
  double tau_s = 5.0;
  double w_s = 0.5;
  /// Branch-ELM when set; w_s then becomes trainable.
  std::optional<std::pair<std::size_t, std::size_t>> branch;  // (d_tree, d_brch)
};

struct ElmParams {
  std::size_t d_s = 0;
  std::size_t d_m = 0;
  std::size_t d_o = 0;
  double lambda = 1.0;
  ElmVariant variant = ElmVariant::original;
  BoundedTimescale tau_bounds;
  Vector tau_s;
  Vector w_s_raw;  // effective weight is max(0, raw)
  bool w_s_trainable = false;
  std::optional<BranchLayout> branch;
  Vector theta_m;
  std::vector<Matrix> mlp_weights;  // l_mlp hidden layers + output layer to d_m
  std::vector<Vector> mlp_biases;
  Matrix w_y;
  Vector b_y;

  std::size_t l_mlp() const { return mlp_weights.empty() ? 0 : mlp_weights.size() - 1; }
  std::size_t integration_width() const { return branch ? branch->d_tree : d_s; }
  std::size_t mlp_input_width() const { return integration_width() + d_m; }

  Vector tau_m() const {
    Vector t(d_m);
    for (std::size_t i = 0; i < d_m; ++i) t[i] = tau_bounds.tau(theta_m[i]);
    return t;
  }
  Vector w_s() const {
    Vector w(d_s);
    for (std::size_t i = 0; i < d_s; ++i) w[i] = std::max(0.0, w_s_raw[i]);
    return w;
  }

  template <typename F>
  void for_each_trainable(F&& f) {
    for (std::size_t l = 0; l < mlp_weights.size(); ++l) {
      f("mlp.w" + std::to_string(l), mlp_weights[l].values());
      f("mlp.b" + std::to_string(l), std::span<double>(mlp_biases[l]));
    }
    f("readout.w", w_y.values());
    f("readout.b", std::span<double>(b_y));
    f("theta_m", std::span<double>(theta_m));
    if (w_s_trainable) f("w_s", std::span<double>(w_s_raw));
  }
};

inline void validate(const ElmParams& p) {
  detail::require(p.d_s >= 1 && p.d_m >= 1 && p.d_o >= 1, "ELM: sizes must be >= 1");
  detail::require(p.lambda > 0.0, "ELM: lambda must be > 0");
  p.tau_bounds.validate();
  detail::require_size(p.tau_s.size(), p.d_s, "ELM tau_s");
  detail::require_size(p.w_s_raw.size(), p.d_s, "ELM w_s");
  detail::require_size(p.theta_m.size(), p.d_m, "ELM theta_m");
  for (double t : p.tau_s) detail::require(t > 0.0, "ELM: tau_s must be > 0");
  if (p.branch) {
    validate(*p.branch);
    detail::require(p.branch->d_s == p.d_s, "ELM: branch layout built for a different d_s");
  }
  detail::require(!p.mlp_weights.empty() && p.mlp_weights.size() == p.mlp_biases.size(), "ELM: malformed MLP");
  std::size_t width = p.mlp_input_width();
  for (std::size_t l = 0; l < p.mlp_weights.size(); ++l) {
    detail::require_size(p.mlp_weights[l].cols(), width, "ELM MLP layer input");
    detail::require_size(p.mlp_biases[l].size(), p.mlp_weights[l].rows(), "ELM MLP bias");
    width = p.mlp_weights[l].rows();
  }
  detail::require_size(width, p.d_m, "ELM MLP output");
  detail::require(p.w_y.rows() == p.d_o && p.w_y.cols() == p.d_m, "ELM: readout must be d_o x d_m");
  detail::require_size(p.b_y.size(), p.d_o, "ELM readout bias");
}

inline ElmParams make_elm(const ElmConfig& cfg, Rng& rng) {
  cfg.tau_bounds.validate();
  detail::require(cfg.d_s >= 1 && cfg.d_m >= 1 && cfg.d_o >= 1, "ELM: sizes must be >= 1");
  detail::require(cfg.tau_init_lo > 0.0 && cfg.tau_init_hi >= cfg.tau_init_lo, "ELM: invalid tau init range");
  ElmParams p;
  p.d_s = cfg.d_s;
  p.d_m = cfg.d_m;
  p.d_o = cfg.d_o;
  p.lambda = cfg.lambda;
  p.variant = cfg.variant;
  p.tau_bounds = cfg.tau_bounds;
  p.tau_s.assign(cfg.d_s, cfg.tau_s);
  p.w_s_raw.assign(cfg.d_s, cfg.w_s);
  if (cfg.branch) {
    p.branch = make_branch_layout(cfg.d_s, cfg.branch->first, cfg.branch->second);
    p.w_s_trainable = true;
  }
  for (double tau : spaced_values(cfg.tau_init_lo, cfg.tau_init_hi, cfg.d_m, cfg.tau_init_spacing))
    p.theta_m.push_back(cfg.tau_bounds.theta(tau));

  const std::size_t d_mlp = cfg.d_mlp == 0 ? 2 * cfg.d_m : cfg.d_mlp;
  std::size_t width = p.mlp_input_width();
  for (std::size_t l = 0; l <= cfg.l_mlp; ++l) {
    const std::size_t out = l == cfg.l_mlp ? cfg.d_m : d_mlp;
    p.mlp_weights.push_back(kaiming_uniform_init(rng, width, out));
    p.mlp_biases.push_back(uniform_bias_init(rng, width, out));
    width = out;
  }
  p.w_y = kaiming_uniform_init(rng, cfg.d_m, cfg.d_o);
  p.b_y = uniform_bias_init(rng, cfg.d_m, cfg.d_o);
  validate(p);
  return p;
}

struct ElmState {
  Vector s;
  Vector m;
};

inline ElmState initial_state(const ElmParams& p) { return {Vector(p.d_s, 0.0), Vector(p.d_m, 0.0)}; }

/// Per-step memory coefficients: retention kappa_m and update scale.
struct MemoryCoefficients {
  double kappa = 1.0;
  double update = 0.0;        // lambda*(1-kappa) or (1-kappa_lambda)
  double kappa_lambda = 1.0;  // improved variant only
};

inline MemoryCoefficients memory_coefficients(ElmVariant variant, double lambda, double tau, double dt) {
  MemoryCoefficients c;
  c.kappa = std::exp(-dt / tau);
  if (variant == ElmVariant::original) {
    c.update = lambda * -std::expm1(-dt / tau);
  } else {
    c.kappa_lambda = std::exp(-dt * lambda / tau);
    c.update = -std::expm1(-dt * lambda / tau);
  }
  return c;
}

/// Intermediates of one ELM step, enough to run the step's backward rule.
struct ElmStepRecord {
  double dt = 0.0;
  Vector x;
  Vector kappa_s;
  Vector m_prev;
  Vector kappa_m;
  Vector update;
  Vector kappa_lambda;
  std::vector<Vector> layer_inputs;  // input of each MLP layer; [0] = [z, kappa_m*m_prev]
  std::vector<Vector> hidden_pre;    // pre-ReLU of each hidden layer
  std::vector<Vector> dropout_scale; // per hidden layer, empty when inactive
  Vector delta_m;
  Vector m;
  Vector y;
};

/// Dropout on the MLP hidden activations (inverted scaling).
struct DropoutSpec {
  double p = 0.0;
  Rng* rng = nullptr;
  bool active() const { return p > 0.0 && rng != nullptr; }
};

namespace detail {

inline ElmState elm_step_impl(const ElmParams& p, std::span<const double> tau_m, std::span<const double> w_s,
                              const ElmState& st, std::span<const double> x, double dt, ElmStepRecord* rec,
                              const DropoutSpec& dropout) {
  const std::size_t d_s = p.d_s;
  const std::size_t d_m = p.d_m;
  ElmState next;
  next.s.resize(d_s);
  Vector kappa_s(d_s);
  for (std::size_t i = 0; i < d_s; ++i) {
    kappa_s[i] = std::exp(-dt / p.tau_s[i]);
    next.s[i] = kappa_s[i] * st.s[i] + w_s[i] * x[i];
  }

  std::vector<MemoryCoefficients> coeff(d_m);
  for (std::size_t i = 0; i < d_m; ++i) coeff[i] = memory_coefficients(p.variant, p.lambda, tau_m[i], dt);

  Vector a(p.mlp_input_width());
  if (p.branch) {
    const Vector b = branch_reduce(*p.branch, next.s);
    std::copy(b.begin(), b.end(), a.begin());
  } else {
    std::copy(next.s.begin(), next.s.end(), a.begin());
  }
  const std::size_t off = p.integration_width();
  for (std::size_t i = 0; i < d_m; ++i) a[off + i] = coeff[i].kappa * st.m[i];

  if (rec) {
    rec->dt = dt;
    rec->x.assign(x.begin(), x.end());
    rec->kappa_s = kappa_s;
    rec->m_prev = st.m;
    rec->kappa_m.resize(d_m);
    rec->update.resize(d_m);
    rec->kappa_lambda.resize(d_m);
    for (std::size_t i = 0; i < d_m; ++i) {
      rec->kappa_m[i] = coeff[i].kappa;
      rec->update[i] = coeff[i].update;
      rec->kappa_lambda[i] = coeff[i].kappa_lambda;
    }
    rec->layer_inputs.clear();
    rec->hidden_pre.clear();
    rec->dropout_scale.clear();
  }

  const std::size_t n_layers = p.mlp_weights.size();
  for (std::size_t l = 0; l + 1 < n_layers; ++l) {
    Vector z = p.mlp_biases[l];
    matvec_add(p.mlp_weights[l], a, z);
    Vector h(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) h[k] = z[k] > 0.0 ? z[k] : 0.0;
    Vector scale;
    if (dropout.active()) {
      scale.resize(h.size());
      const double keep = 1.0 - dropout.p;
      for (std::size_t k = 0; k < h.size(); ++k) {
        scale[k] = dropout.rng->bernoulli(keep) ? 1.0 / keep : 0.0;
        h[k] *= scale[k];
      }
    }
    if (rec) {
      rec->layer_inputs.push_back(std::move(a));
      rec->hidden_pre.push_back(std::move(z));
      rec->dropout_scale.push_back(std::move(scale));
    }
    a = std::move(h);
  }
  Vector q = p.mlp_biases.back();
  matvec_add(p.mlp_weights.back(), a, q);
  if (rec) rec->layer_inputs.push_back(std::move(a));

  next.m.resize(d_m);
  Vector delta(d_m);
  for (std::size_t i = 0; i < d_m; ++i) {
    delta[i] = std::tanh(q[i]);
    // |m| <= lambda holds in exact arithmetic; the clamp only removes
    // last-ulp rounding overshoot near saturation (backward treats it as identity)
    next.m[i] = std::clamp(coeff[i].kappa * st.m[i] + coeff[i].update * delta[i], -p.lambda, p.lambda);
  }
  if (rec) {
    rec->delta_m = std::move(delta);
    rec->m = next.m;
  }
  return next;
}

}  // namespace detail

/// Readout y = w_y m + b_y.
inline Vector elm_readout(const ElmParams& p, std::span<const double> m) {
  Vector y = p.b_y;
  matvec_add(p.w_y, m, y);
  return y;
}

/// One step of the ELM dynamics (eval mode). Returns the next state and y_t = w_y m_t + b_y.
inline std::pair<ElmState, Vector> elm_step(const ElmParams& p, const ElmState& st, std::span<const double> x,
                                            double dt) {
  detail::require(dt > 0.0, "elm_step: dt must be > 0");
  detail::require_size(x.size(), p.d_s, "elm_step input");
  detail::require_size(st.s.size(), p.d_s, "elm_step state.s");
  detail::require_size(st.m.size(), p.d_m, "elm_step state.m");
  const Vector tau = p.tau_m();
  const Vector w_s = p.w_s();
  ElmState next = detail::elm_step_impl(p, tau, w_s, st, x, dt, nullptr, {});
  Vector y = elm_readout(p, next.m);
  return {std::move(next), std::move(y)};
}

// ---------------------------------------------------------------------------
// LIF / ALIF
//
// Exponential-Euler membrane: v_pre = k v + (1 - k)(w.x + bias), k = exp(-dt/tau).
// A spike is emitted when v_pre >= threshold (ties fire), then v resets.

struct LifParams {
  Vector w;
  double tau = 20.0;
  double bias = 0.0;
  double threshold = 1.0;
  double v_reset = 0.0;

  template <typename F>
  void for_each_trainable(F&& f) {
    f("w", std::span<double>(w));
    f("tau", std::span<double>(&tau, 1));
    f("bias", std::span<double>(&bias, 1));
  }
};

struct AlifParams : LifParams {
  double tau_a = 200.0;
  double strength = 0.0;

  template <typename F>
  void for_each_trainable(F&& f) {
    LifParams::for_each_trainable(f);
    f("tau_a", std::span<double>(&tau_a, 1));
  }
};

struct LifStepResult {
  double v = 0.0;
  bool spike = false;
  double v_readout = 0.0;  // pre-reset membrane
};

inline void validate(const LifParams& p) {
  detail::require(p.tau > 0.0, "LIF: tau must be > 0");
  detail::require(p.threshold > p.v_reset, "LIF: threshold must exceed the reset value");
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  detail::require_size(b.size(), a.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline LifStepResult lif_step(const LifParams& p, double v, std::span<const double> x, double dt) {
  detail::require(dt > 0.0, "lif_step: dt must be > 0");
  const double k = std::exp(-dt / p.tau);
  const double drive = dot(p.w, x) + p.bias;
  LifStepResult r;
  r.v_readout = k * v + (1.0 - k) * drive;
  r.spike = r.v_readout >= p.threshold;
  r.v = r.spike ? p.v_reset : r.v_readout;
  return r;
}

struct AlifState {
  double v = 0.0;
  double a = 0.0;
};

struct AlifStepResult {
  AlifState state;
  bool spike = false;
  double v_readout = 0.0;
};

/// LIF with a spike-triggered threshold offset a that decays with tau_a.
inline AlifStepResult alif_step(const AlifParams& p, AlifState st, std::span<const double> x, double dt) {
  detail::require(dt > 0.0, "alif_step: dt must be > 0");
  detail::require(p.tau_a > 0.0, "ALIF: tau_a must be > 0");
  const double k = std::exp(-dt / p.tau);
  const double drive = dot(p.w, x) + p.bias;
  AlifStepResult r;
  r.v_readout = k * st.v + (1.0 - k) * drive;
  r.spike = r.v_readout >= p.threshold + st.a;
  r.state.v = r.spike ? p.v_reset : r.v_readout;
  r.state.a = std::exp(-dt / p.tau_a) * st.a + (r.spike ? p.strength : 0.0);
  return r;
}

// ---------------------------------------------------------------------------
// LSTM (gate order i, f, g, o) with a linear readout.

struct LstmParams {
  std::size_t d_in = 0;
  std::size_t hidden = 0;
  std::size_t d_o = 0;
  Matrix w;  // 4h x d_in
  Matrix u;  // 4h x h
  Vector b;  // 4h
  Matrix w_y;
  Vector b_y;

  template <typename F>
  void for_each_trainable(F&& f) {
    f("lstm.w", w.values());
    f("lstm.u", u.values());
    f("lstm.b", std::span<double>(b));
    f("readout.w", w_y.values());
    f("readout.b", std::span<double>(b_y));
  }
};

inline void validate(const LstmParams& p) {
  detail::require(p.d_in >= 1 && p.hidden >= 1 && p.d_o >= 1, "LSTM: sizes must be >= 1");
  detail::require(p.w.rows() == 4 * p.hidden && p.w.cols() == p.d_in, "LSTM: w must be 4h x d_in");
  detail::require(p.u.rows() == 4 * p.hidden && p.u.cols() == p.hidden, "LSTM: u must be 4h x h");
  detail::require_size(p.b.size(), 4 * p.hidden, "LSTM bias");
  detail::require(p.w_y.rows() == p.d_o && p.w_y.cols() == p.hidden, "LSTM: readout must be d_o x h");
  detail::require_size(p.b_y.size(), p.d_o, "LSTM readout bias");
}

/// Forget biases b_f = log(U(1, t_max - 1)), input biases b_i = -b_f.
inline void chrono_init(LstmParams& p, Rng& rng, double t_max) {
  detail::require(t_max >= 2.0, "chrono_init: t_max must be >= 2");
  const std::size_t h = p.hidden;
  for (std::size_t k = 0; k < h; ++k) {
    const double bf = std::log(rng.uniform(1.0, t_max - 1.0));
    p.b[h + k] = bf;
    p.b[k] = -bf;
  }
}

inline LstmParams make_lstm(std::size_t d_in, std::size_t hidden, std::size_t d_o, Rng& rng,
                            std::optional<double> chrono_t_max = std::nullopt) {
  LstmParams p;
  p.d_in = d_in;
  p.hidden = hidden;
  p.d_o = d_o;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.w = Matrix(4 * hidden, d_in);
  p.u = Matrix(4 * hidden, hidden);
  p.b = Vector(4 * hidden);
  for (auto& x : p.w.values()) x = rng.uniform(-bound, bound);
  for (auto& x : p.u.values()) x = rng.uniform(-bound, bound);
  for (auto& x : p.b) x = rng.uniform(-bound, bound);
  p.w_y = kaiming_uniform_init(rng, hidden, d_o);
  p.b_y = uniform_bias_init(rng, hidden, d_o);
  if (chrono_t_max) chrono_init(p, rng, *chrono_t_max);
  validate(p);
  return p;
}

struct LstmState {
  Vector h;
  Vector c;
};

inline LstmState initial_state(const LstmParams& p) { return {Vector(p.hidden, 0.0), Vector(p.hidden, 0.0)}; }

struct LstmStepRecord {
  Vector x;
  Vector h_prev;  // after recurrent dropout
  Vector c_prev;
  Vector i, f, g, o;
  Vector c;
  Vector tanh_c;
  Vector h;
};

namespace detail {

inline LstmState lstm_step_impl(const LstmParams& p, const LstmState& st, std::span<const double> x,
                                std::span<const double> recurrent_mask, LstmStepRecord* rec) {
  const std::size_t h = p.hidden;
  Vector h_in = st.h;
  if (!recurrent_mask.empty())
    for (std::size_t k = 0; k < h; ++k) h_in[k] *= recurrent_mask[k];
  Vector z = p.b;
  matvec_add(p.w, x, z);
  matvec_add(p.u, h_in, z);
  LstmState next{Vector(h), Vector(h)};
  Vector gi(h), gf(h), gg(h), go(h), tc(h);
  for (std::size_t k = 0; k < h; ++k) {
    gi[k] = sigmoid(z[k]);
    gf[k] = sigmoid(z[h + k]);
    gg[k] = std::tanh(z[2 * h + k]);
    go[k] = sigmoid(z[3 * h + k]);
    next.c[k] = gf[k] * st.c[k] + gi[k] * gg[k];
    tc[k] = std::tanh(next.c[k]);
    next.h[k] = go[k] * tc[k];
  }
  if (rec) {
    rec->x.assign(x.begin(), x.end());
    rec->h_prev = std::move(h_in);
    rec->c_prev = st.c;
    rec->i = std::move(gi);
    rec->f = std::move(gf);
    rec->g = std::move(gg);
    rec->o = std::move(go);
    rec->c = next.c;
    rec->tanh_c = std::move(tc);
    rec->h = next.h;
  }
  return next;
}

}  // namespace detail

/// Standard LSTM step. dt is accepted for interface symmetry and ignored.
inline std::pair<LstmState, Vector> lstm_step(const LstmParams& p, const LstmState& st, std::span<const double> x,
                                              double /*dt*/) {
  detail::require_size(x.size(), p.d_in, "lstm_step input");
  detail::require_size(st.h.size(), p.hidden, "lstm_step state.h");
  detail::require_size(st.c.size(), p.hidden, "lstm_step state.c");
  LstmState next = detail::lstm_step_impl(p, st, x, {}, nullptr);
  Vector out = next.h;
  return {std::move(next), std::move(out)};
}

inline Vector lstm_readout(const LstmParams& p, std::span<const double> h) {
  Vector y = p.b_y;
  matvec_add(p.w_y, h, y);
  return y;
}

// ---------------------------------------------------------------------------
// Recurrent LIF network: a recurrent layer of n_total - n_out neurons feeding
// an output layer of n_out neurons. Every neuron owns a fixed number of
// synapses, each drawn from the previous layer (same step) or from its own
// layer (previous step). Spiking neurons reset by subtraction.

struct SnnConfig {
  std::size_t n_in = 1;
  std::size_t n_total = 500;
  std::size_t n_out = 2;
  std::size_t synapses = 100;
  double inhibitory_fraction = 0.2;
  double p_previous_layer = 0.9;
  double tau_init = 25.0;
  BoundedTimescale tau_bounds{1.0, 200.0};
  double v_threshold = 1.0;
  double reset_fraction = 0.9;
  double output_tau = 20.0;
  double surrogate_width = 1.0;
};

enum class SourceKind : std::uint8_t { input, recurrent, output };

struct SynapseSource {
  SourceKind kind = SourceKind::input;
  std::uint32_t index = 0;
};

struct SnnParams {
  std::size_t n_in = 0;
  std::size_t n_rec = 0;
  std::size_t n_out = 0;
  std::size_t synapses = 0;
  double v_threshold = 1.0;
  double reset_fraction = 0.9;
  double output_tau = 20.0;
  double surrogate_width = 1.0;
  BoundedTimescale tau_bounds;
  std::vector<SynapseSource> sources;  // (n_rec + n_out) x synapses
  Vector sign;                         // +1 excitatory, -1 inhibitory, per neuron
  Matrix w_raw;                        // (n_rec + n_out) x synapses, effective max(0, .)
  Vector theta;                        // per-neuron membrane pre-timescale

  std::size_t n_neurons() const { return n_rec + n_out; }

  template <typename F>
  void for_each_trainable(F&& f) {
    f("snn.w", w_raw.values());
    f("snn.theta", std::span<double>(theta));
  }
};

inline void validate(const SnnParams& p) {
  const std::size_t n = p.n_neurons();
  detail::require(p.n_in >= 1 && p.n_rec >= 1 && p.n_out >= 1 && p.synapses >= 1, "SNN: sizes must be >= 1");
  detail::require(p.sources.size() == n * p.synapses, "SNN: connectivity size mismatch");
  detail::require(p.w_raw.rows() == n && p.w_raw.cols() == p.synapses, "SNN: weight shape mismatch");
  detail::require_size(p.sign.size(), n, "SNN sign");
  detail::require_size(p.theta.size(), n, "SNN theta");
  for (const auto& s : p.sources) {
    const std::size_t limit = s.kind == SourceKind::input ? p.n_in : s.kind == SourceKind::recurrent ? p.n_rec : p.n_out;
    detail::require(s.index < limit, "SNN: connectivity index out of range");
  }
}

inline SnnParams make_snn(const SnnConfig& cfg, Rng& rng) {
  detail::require(cfg.n_out >= 1 && cfg.n_total > cfg.n_out, "SNN: need n_total > n_out >= 1");
  cfg.tau_bounds.validate();
  SnnParams p;
  p.n_in = cfg.n_in;
  p.n_rec = cfg.n_total - cfg.n_out;
  p.n_out = cfg.n_out;
  p.synapses = cfg.synapses;
  p.v_threshold = cfg.v_threshold;
  p.reset_fraction = cfg.reset_fraction;
  p.output_tau = cfg.output_tau;
  p.surrogate_width = cfg.surrogate_width;
  p.tau_bounds = cfg.tau_bounds;
  const std::size_t n = p.n_neurons();
  p.sign.assign(n, 1.0);
  for (std::size_t j = 0; j < n; ++j)
    if (rng.bernoulli(cfg.inhibitory_fraction)) p.sign[j] = -1.0;
  p.sources.resize(n * cfg.synapses);
  for (std::size_t j = 0; j < n; ++j) {
    const bool is_output = j >= p.n_rec;
    for (std::size_t k = 0; k < cfg.synapses; ++k) {
      SynapseSource s;
      if (rng.bernoulli(cfg.p_previous_layer)) {
        s.kind = is_output ? SourceKind::recurrent : SourceKind::input;
      } else {
        s.kind = is_output ? SourceKind::output : SourceKind::recurrent;
      }
      const std::size_t limit = s.kind == SourceKind::input ? p.n_in : s.kind == SourceKind::recurrent ? p.n_rec : p.n_out;
      s.index = static_cast<std::uint32_t>(rng.index(limit));
      p.sources[j * cfg.synapses + k] = s;
    }
  }
  p.w_raw = Matrix(n, cfg.synapses, 0.3 / std::sqrt(static_cast<double>(cfg.synapses)));
  p.theta.assign(n, p.tau_bounds.theta(cfg.tau_init));
  validate(p);
  return p;
}

struct SnnState {
  Vector v;         // per neuron, post-reset
  Vector spikes;    // per neuron, previous step
  Vector filtered;  // per output neuron
};

inline SnnState initial_state(const SnnParams& p) {
  return {Vector(p.n_neurons(), 0.0), Vector(p.n_neurons(), 0.0), Vector(p.n_out, 0.0)};
}

struct SnnStepRecord {
  double dt = 0.0;
  Vector x;
  Vector v_prev;
  Vector spikes_prev;
  Vector kappa;
  Vector v_pre;
  Vector spikes;
  Vector filtered;
};

namespace detail {

inline SnnState snn_step_impl(const SnnParams& p, std::span<const double> tau, const SnnState& st,
                              std::span<const double> x, double dt, SnnStepRecord* rec) {
  const std::size_t n = p.n_neurons();
  SnnState next{Vector(n), Vector(n), Vector(p.n_out)};
  Vector v_pre(n), kappa(n);
  auto integrate = [&](std::size_t j) {
    kappa[j] = std::exp(-dt / tau[j]);
    double drive = 0.0;
    const auto w = p.w_raw.row(j);
    const bool is_output = j >= p.n_rec;
    for (std::size_t k = 0; k < p.synapses; ++k) {
      const double wk = w[k] > 0.0 ? w[k] : 0.0;
      if (wk == 0.0) continue;
      const SynapseSource& src = p.sources[j * p.synapses + k];
      double value = 0.0;
      if (src.kind == SourceKind::input) {
        value = x[src.index];
      } else if (src.kind == SourceKind::recurrent) {
        const double s = is_output ? next.spikes[src.index] : st.spikes[src.index];
        value = p.sign[src.index] * s;
      } else {
        value = p.sign[p.n_rec + src.index] * st.spikes[p.n_rec + src.index];
      }
      drive += wk * value;
    }
    v_pre[j] = kappa[j] * st.v[j] + drive;
    const bool fire = v_pre[j] >= p.v_threshold;
    next.spikes[j] = fire ? 1.0 : 0.0;
    next.v[j] = fire ? v_pre[j] - p.reset_fraction * p.v_threshold : v_pre[j];
  };
  for (std::size_t j = 0; j < p.n_rec; ++j) integrate(j);
  for (std::size_t j = p.n_rec; j < n; ++j) integrate(j);
  const double ko = std::exp(-dt / p.output_tau);
  for (std::size_t o = 0; o < p.n_out; ++o) next.filtered[o] = ko * st.filtered[o] + next.spikes[p.n_rec + o];
  if (rec) {
    rec->dt = dt;
    rec->x.assign(x.begin(), x.end());
    rec->v_prev = st.v;
    rec->spikes_prev = st.spikes;
    rec->kappa = std::move(kappa);
    rec->v_pre = std::move(v_pre);
    rec->spikes = next.spikes;
    rec->filtered = next.filtered;
  }
  return next;
}

}  // namespace detail

inline Vector snn_tau(const SnnParams& p) {
  Vector t(p.n_neurons());
  for (std::size_t j = 0; j < t.size(); ++j) t[j] = p.tau_bounds.tau(p.theta[j]);
  return t;
}

/// One network step; logits are the low-pass filtered output spikes.
inline std::pair<SnnState, Vector> snn_step(const SnnParams& p, const SnnState& st, std::span<const double> x,
                                            double dt) {
  detail::require(dt > 0.0, "snn_step: dt must be > 0");
  detail::require_size(x.size(), p.n_in, "snn_step input");
  detail::require_size(st.v.size(), p.n_neurons(), "snn_step state.v");
  const Vector tau = snn_tau(p);
  SnnState next = detail::snn_step_impl(p, tau, st, x, dt, nullptr);
  Vector logits = next.filtered;
  return {std::move(next), std::move(logits)};
}

/// Triangular surrogate for d(spike)/dv used on the backward pass.
inline double spike_surrogate(double v, double threshold, double width) {
  return std::max(0.0, 1.0 - std::abs(v - threshold) / width);
}

}  // namespace elm
