#pragma once

// Deterministic dataset generators: Poisson-driven LIF/ALIF teacher traces,
// template-based spike-encoded digits and their adding construction,
// temporal rebinning and a delayed-recall classification task.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "elm/bptt.hpp"
#include "elm/cells.hpp"
#include "elm/numerics.hpp"

namespace elm {

/// Signed spike counts, row-major [steps, channels]. |value| <= max_count.
struct SpikeRaster {
  std::size_t channels = 0;
  std::size_t steps = 0;
  double dt = 1.0;
  int max_count = 1;
  std::vector<std::int16_t> values;

  int at(std::size_t t, std::size_t c) const { return values[t * channels + c]; }
  std::int64_t total() const {
    std::int64_t acc = 0;
    for (auto v : values) acc += v;
    return acc;
  }
  std::int64_t total_abs() const {
    std::int64_t acc = 0;
    for (auto v : values) acc += v < 0 ? -v : v;
    return acc;
  }
};

// ---------------------------------------------------------------------------
// Sequence batches

enum class TargetLayout { per_step_pairs, class_index };

inline std::string_view to_string(TargetLayout l) {
  return l == TargetLayout::per_step_pairs ? "per_step_pairs" : "class_index";
}

/// N sequences of equal length with either per-step (voltage, spike) targets
/// or one class label per sequence.
struct SequenceBatch {
  std::size_t count = 0;
  std::size_t steps = 0;
  std::size_t channels = 0;
  double dt = 1.0;
  Vector inputs;  // [N, T, C]
  TargetLayout layout = TargetLayout::class_index;
  Vector step_targets;  // [N, T, 2] when per_step_pairs
  std::vector<int> labels;
  int n_classes = 0;

  SequenceView view(std::size_t i) const {
    return SequenceView{std::span<const double>(inputs).subspan(i * steps * channels, steps * channels), steps,
                        channels, std::span<const double>(&dt, 1)};
  }
  double target_voltage(std::size_t i, std::size_t t) const { return step_targets[(i * steps + t) * 2]; }
  double target_spike(std::size_t i, std::size_t t) const { return step_targets[(i * steps + t) * 2 + 1]; }

  void validate() const {
    detail::require(dt > 0.0, "batch dt must be > 0");
    detail::require_size(inputs.size(), count * steps * channels, "batch inputs");
    if (layout == TargetLayout::per_step_pairs) {
      detail::require_size(step_targets.size(), count * steps * 2, "batch step targets");
    } else {
      detail::require_size(labels.size(), count, "batch labels");
      for (int l : labels) detail::require(l >= 0 && l < n_classes, "batch label out of range");
    }
  }
};

/// Copies sequences [first, first + n) into a new batch.
inline SequenceBatch slice(const SequenceBatch& b, std::size_t first, std::size_t n) {
  detail::require(first + n <= b.count, "slice out of range");
  SequenceBatch out = b;
  out.count = n;
  const std::size_t per = b.steps * b.channels;
  out.inputs.assign(b.inputs.begin() + static_cast<std::ptrdiff_t>(first * per),
                    b.inputs.begin() + static_cast<std::ptrdiff_t>((first + n) * per));
  if (b.layout == TargetLayout::per_step_pairs) {
    const std::size_t pt = b.steps * 2;
    out.step_targets.assign(b.step_targets.begin() + static_cast<std::ptrdiff_t>(first * pt),
                            b.step_targets.begin() + static_cast<std::ptrdiff_t>((first + n) * pt));
  } else {
    out.labels.assign(b.labels.begin() + static_cast<std::ptrdiff_t>(first),
                      b.labels.begin() + static_cast<std::ptrdiff_t>(first + n));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Teacher neuron I/O

enum class TeacherKind { lif, alif };

/// Poisson input statistics and teacher calibration. Defaults put an LIF
/// teacher driven by 64 channels at 10 Hz in the 5-20 Hz output range.
struct TeacherConfig {
  TeacherKind kind = TeacherKind::lif;
  std::size_t channels = 64;
  double duration_ms = 1000.0;
  double dt = 1.0;
  double rate_hz = 10.0;
  double inhibitory_fraction = 0.2;
  double tau = 20.0;
  double threshold = 1.0;
  double v_reset = 0.0;
  double bias = 0.2;
  double w_exc = 1.6;  // excitatory weights ~ U(0.5, 1.5) * w_exc
  double w_inh = 2.4;  // inhibitory weights ~ U(0.5, 1.5) * w_inh
  double tau_a = 100.0;
  double adaptation = 0.0;
  std::uint64_t weight_seed = 7;  // teacher identity, independent of the input seed
};

struct TeacherTrace {
  SpikeRaster raster;
  Vector voltage;  // pre-reset membrane
  Vector spikes;   // 0/1
  std::size_t clipped = 0;  // bins where the Poisson draw exceeded one spike
};

/// Per-channel identity: +1 excitatory, -1 inhibitory; depends only on (channels, fraction, seed).
inline std::vector<int> channel_signs(std::size_t channels, double inhibitory_fraction, std::uint64_t seed) {
  Rng rng = Rng(seed).substream("channel-signs");
  std::vector<int> sign(channels, 1);
  const auto n_inh = static_cast<std::size_t>(std::llround(inhibitory_fraction * static_cast<double>(channels)));
  // last n_inh channels after a seeded shuffle of indices
  std::vector<std::size_t> idx(channels);
  for (std::size_t i = 0; i < channels; ++i) idx[i] = i;
  for (std::size_t i = channels; i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
  for (std::size_t k = 0; k < n_inh; ++k) sign[idx[k]] = -1;
  return sign;
}

inline AlifParams make_teacher(const TeacherConfig& cfg) {
  const auto sign = channel_signs(cfg.channels, cfg.inhibitory_fraction, cfg.weight_seed);
  Rng rng = Rng(cfg.weight_seed).substream("teacher-weights");
  AlifParams p;
  p.w.resize(cfg.channels);
  for (std::size_t c = 0; c < cfg.channels; ++c)
    p.w[c] = rng.uniform(0.5, 1.5) * (sign[c] > 0 ? cfg.w_exc : cfg.w_inh);
  p.tau = cfg.tau;
  p.bias = cfg.bias;
  p.threshold = cfg.threshold;
  p.v_reset = cfg.v_reset;
  p.tau_a = cfg.tau_a;
  p.strength = cfg.kind == TeacherKind::alif ? cfg.adaptation : 0.0;
  validate(static_cast<const LifParams&>(p));
  return p;
}

/// Simulates the teacher on independent Poisson inputs. Inputs are signed
/// by channel identity; the teacher weights are nonnegative.
inline TeacherTrace gen_teacher_io(const TeacherConfig& cfg, std::uint64_t seed) {
  detail::require(cfg.duration_ms >= 1000.0, "gen_teacher_io: duration must be >= 1000 ms");
  detail::require(cfg.channels >= 1, "gen_teacher_io: need at least one channel");
  detail::require(cfg.dt > 0.0 && cfg.rate_hz >= 0.0, "gen_teacher_io: invalid dt or rate");
  const AlifParams teacher = make_teacher(cfg);
  const auto sign = channel_signs(cfg.channels, cfg.inhibitory_fraction, cfg.weight_seed);
  const auto steps = static_cast<std::size_t>(std::llround(cfg.duration_ms / cfg.dt));

  TeacherTrace out;
  out.raster = SpikeRaster{cfg.channels, steps, cfg.dt, 1, std::vector<std::int16_t>(steps * cfg.channels, 0)};
  out.voltage.resize(steps);
  out.spikes.resize(steps);
  Rng rng = Rng(seed).substream("teacher-input");
  const double mean = cfg.rate_hz * cfg.dt / 1000.0;
  AlifState st;
  Vector x(cfg.channels);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      std::int64_t k = rng.poisson(mean);
      if (k > 1) {
        ++out.clipped;
        k = 1;
      }
      out.raster.values[t * cfg.channels + c] = static_cast<std::int16_t>(k * sign[c]);
      x[c] = static_cast<double>(k * sign[c]);
    }
    const AlifStepResult r = alif_step(teacher, st, x, cfg.dt);
    st = r.state;
    out.voltage[t] = r.v_readout;
    out.spikes[t] = r.spike ? 1.0 : 0.0;
  }
  return out;
}

/// Cuts a trace into consecutive windows of `steps_per_sequence` (a trailing
/// partial window is dropped).
inline SequenceBatch teacher_batch(const TeacherTrace& trace, std::size_t steps_per_sequence) {
  detail::require(steps_per_sequence >= 1, "teacher_batch: empty window");
  const SpikeRaster& r = trace.raster;
  SequenceBatch b;
  b.count = r.steps / steps_per_sequence;
  b.steps = steps_per_sequence;
  b.channels = r.channels;
  b.dt = r.dt;
  b.layout = TargetLayout::per_step_pairs;
  b.n_classes = 2;
  b.inputs.resize(b.count * b.steps * b.channels);
  b.step_targets.resize(b.count * b.steps * 2);
  for (std::size_t t = 0; t < b.count * b.steps; ++t) {
    for (std::size_t c = 0; c < r.channels; ++c) b.inputs[t * r.channels + c] = r.values[t * r.channels + c];
    b.step_targets[2 * t] = trace.voltage[t];
    b.step_targets[2 * t + 1] = trace.spikes[t];
  }
  return b;
}

// ---------------------------------------------------------------------------
// Spike-encoded digits

struct DigitConfig {
  std::size_t channels = 64;
  double duration_ms = 1000.0;
  double dt = 1.0;
  double peak_rate_hz = 80.0;
  double inhibitory_fraction = 0.0;
  int max_count = 15;
  std::uint64_t template_seed = 11;  // fixes the ten templates and the channel identities
};

/// One formant-like band: a Gaussian profile over channels whose centre
/// sweeps linearly while the band is on.
struct DigitBand {
  double center_start = 0.0;
  double center_end = 0.0;
  double width = 1.0;
  double onset_ms = 0.0;
  double offset_ms = 0.0;
  double peak_hz = 0.0;
};

struct DigitTemplate {
  std::vector<DigitBand> bands;
};

/// Rates below this are treated as silent so unused channels never fire.
inline constexpr double kDigitRateFloorHz = 0.5;

inline DigitTemplate digit_template(const DigitConfig& cfg, int label) {
  detail::require(label >= 0 && label <= 9, "digit label must be in 0..9");
  Rng rng = Rng(cfg.template_seed).substream("digit-template", static_cast<std::uint64_t>(label));
  const double n = static_cast<double>(cfg.channels);
  DigitTemplate tpl;
  for (int b = 0; b < 3; ++b) {
    DigitBand band;
    // band centres stay in the lower 75% of channels so the top quarter is nearly silent
    band.center_start = rng.uniform(0.05, 0.75) * n;
    band.center_end = std::clamp(band.center_start + rng.uniform(-0.15, 0.15) * n, 0.0, 0.75 * n);
    band.width = std::max(0.75, rng.uniform(0.02, 0.05) * n);
    band.onset_ms = rng.uniform(0.0, 0.4) * cfg.duration_ms;
    band.offset_ms = band.onset_ms + rng.uniform(0.3, 0.6) * cfg.duration_ms;
    band.peak_hz = cfg.peak_rate_hz * rng.uniform(0.5, 1.0);
    tpl.bands.push_back(band);
  }
  return tpl;
}

/// Firing rate (Hz) of a template at channel c and time t_ms.
inline double template_rate(const DigitTemplate& tpl, double c, double t_ms) {
  double rate = 0.0;
  for (const auto& b : tpl.bands) {
    if (t_ms < b.onset_ms || t_ms >= b.offset_ms) continue;
    const double f = (t_ms - b.onset_ms) / (b.offset_ms - b.onset_ms);
    const double center = b.center_start + f * (b.center_end - b.center_start);
    const double z = (c - center) / b.width;
    rate += b.peak_hz * std::exp(-0.5 * z * z);
  }
  return rate < kDigitRateFloorHz ? 0.0 : rate;
}

struct DigitSample {
  SpikeRaster raster;
  int label = 0;
  std::size_t clipped = 0;
};

/// Poisson spikes from the digit's template; identical (label, seed) give identical rasters.
inline DigitSample gen_digit(const DigitConfig& cfg, int label, std::uint64_t seed) {
  detail::require(cfg.dt > 0.0 && cfg.duration_ms > 0.0, "gen_digit: invalid timing");
  const DigitTemplate tpl = digit_template(cfg, label);
  const auto sign = channel_signs(cfg.channels, cfg.inhibitory_fraction, cfg.template_seed);
  const auto steps = static_cast<std::size_t>(std::llround(cfg.duration_ms / cfg.dt));
  DigitSample s;
  s.label = label;
  s.raster = SpikeRaster{cfg.channels, steps, cfg.dt, cfg.max_count, std::vector<std::int16_t>(steps * cfg.channels, 0)};
  Rng rng = Rng(seed).substream("digit", static_cast<std::uint64_t>(label));
  for (std::size_t t = 0; t < steps; ++t) {
    const double t_mid = (static_cast<double>(t) + 0.5) * cfg.dt;
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      const double rate = template_rate(tpl, static_cast<double>(c), t_mid);
      if (rate == 0.0) continue;
      std::int64_t k = rng.poisson(rate * cfg.dt / 1000.0);
      if (k > cfg.max_count) {
        ++s.clipped;
        k = cfg.max_count;
      }
      s.raster.values[t * cfg.channels + c] = static_cast<std::int16_t>(k * sign[c]);
    }
  }
  return s;
}

struct AddingSample {
  SpikeRaster raster;
  int label = 0;
};

inline constexpr int kAddingClasses = 19;

/// Time-concatenation of two digits with the label sum. Nothing marks the boundary.
inline AddingSample make_adding(const DigitSample& d1, const DigitSample& d2) {
  detail::require(d1.raster.channels == d2.raster.channels, "make_adding: channel count mismatch");
  detail::require(d1.raster.dt == d2.raster.dt, "make_adding: dt mismatch");
  AddingSample a;
  a.label = d1.label + d2.label;
  a.raster = d1.raster;
  a.raster.steps = d1.raster.steps + d2.raster.steps;
  a.raster.max_count = std::max(d1.raster.max_count, d2.raster.max_count);
  a.raster.values.insert(a.raster.values.end(), d2.raster.values.begin(), d2.raster.values.end());
  return a;
}

/// Sums counts within bins of `bin_ms`. A trailing partial bin is kept so
/// the signed spike mass is conserved exactly.
inline SpikeRaster rebin(const SpikeRaster& r, double bin_ms) {
  detail::require(bin_ms > 0.0, "rebin: bin must be > 0");
  const double ratio = bin_ms / r.dt;
  const double factor_d = std::round(ratio);
  detail::require(factor_d >= 1.0 && std::abs(ratio - factor_d) <= 1e-9 * ratio, "rebin: bin must be a multiple of dt");
  const auto factor = static_cast<std::size_t>(factor_d);
  detail::require(static_cast<long long>(r.max_count) * static_cast<long long>(factor) <= std::numeric_limits<std::int16_t>::max(),
                  "rebin: counts would overflow");
  SpikeRaster out;
  out.channels = r.channels;
  out.steps = (r.steps + factor - 1) / factor;
  out.dt = bin_ms;
  out.max_count = r.max_count * static_cast<int>(factor);
  out.values.assign(out.steps * out.channels, 0);
  for (std::size_t t = 0; t < r.steps; ++t) {
    const std::size_t b = t / factor;
    for (std::size_t c = 0; c < r.channels; ++c)
      out.values[b * r.channels + c] = static_cast<std::int16_t>(out.values[b * r.channels + c] + r.values[t * r.channels + c]);
  }
  return out;
}

struct AddingConfig {
  DigitConfig digit;
  double bin_ms = 2.0;
};

/// `count` adding samples with independently uniform digits, already rebinned.
inline SequenceBatch gen_adding_batch(const AddingConfig& cfg, std::size_t count, std::uint64_t seed) {
  Rng labels = Rng(seed).substream("adding-labels");
  SequenceBatch b;
  b.count = count;
  b.layout = TargetLayout::class_index;
  b.n_classes = kAddingClasses;
  b.channels = cfg.digit.channels;
  b.dt = cfg.bin_ms;
  for (std::size_t i = 0; i < count; ++i) {
    const int l1 = static_cast<int>(labels.index(10));
    const int l2 = static_cast<int>(labels.index(10));
    const auto d1 = gen_digit(cfg.digit, l1, Rng(seed).substream("adding-first", i).next());
    const auto d2 = gen_digit(cfg.digit, l2, Rng(seed).substream("adding-second", i).next());
    const SpikeRaster r = rebin(make_adding(d1, d2).raster, cfg.bin_ms);
    if (i == 0) b.steps = r.steps;
    for (auto v : r.values) b.inputs.push_back(v);
    b.labels.push_back(l1 + l2);
  }
  return b;
}

/// Rebins the inputs of a class-labelled batch (inputs must be spike counts).
inline SequenceBatch rebin(const SequenceBatch& b, double bin_ms) {
  detail::require(b.layout == TargetLayout::class_index, "rebin: only class-labelled batches can be rebinned");
  SequenceBatch out = b;
  out.inputs.clear();
  for (std::size_t i = 0; i < b.count; ++i) {
    SpikeRaster r{b.channels, b.steps, b.dt, std::numeric_limits<std::int16_t>::max() / 1024, {}};
    r.values.reserve(b.steps * b.channels);
    for (std::size_t k = 0; k < b.steps * b.channels; ++k)
      r.values.push_back(static_cast<std::int16_t>(b.inputs[i * b.steps * b.channels + k]));
    const SpikeRaster rr = rebin(r, bin_ms);
    out.steps = rr.steps;
    out.dt = rr.dt;
    for (auto v : rr.values) out.inputs.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Delayed recall
//
// Channels: n_symbols one-hot symbol lines, one distractor line carrying
// random 0/1 noise and one recall cue raised on the final step. The symbol
// appears at step length - delay - 1; the label is the symbol.

struct DelayedRecallConfig {
  std::size_t length = 32;
  std::size_t n_symbols = 4;
  std::size_t delay = 16;
  double dt = 1.0;
  double distractor_p = 0.5;
};

inline std::size_t delayed_recall_channels(const DelayedRecallConfig& cfg) { return cfg.n_symbols + 2; }

inline SequenceBatch gen_delayed_recall(const DelayedRecallConfig& cfg, std::size_t count, std::uint64_t seed) {
  detail::require(cfg.delay < cfg.length, "gen_delayed_recall: delay must be < length");
  detail::require(cfg.n_symbols >= 2, "gen_delayed_recall: need at least two symbols");
  const std::size_t C = delayed_recall_channels(cfg);
  SequenceBatch b;
  b.count = count;
  b.steps = cfg.length;
  b.channels = C;
  b.dt = cfg.dt;
  b.layout = TargetLayout::class_index;
  b.n_classes = static_cast<int>(cfg.n_symbols);
  b.inputs.assign(count * cfg.length * C, 0.0);
  Rng rng = Rng(seed).substream("delayed-recall");
  const std::size_t t0 = cfg.length - cfg.delay - 1;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t symbol = rng.index(cfg.n_symbols);
    b.labels.push_back(static_cast<int>(symbol));
    double* seq = b.inputs.data() + i * cfg.length * C;
    for (std::size_t t = 0; t < cfg.length; ++t) {
      if (t == t0) {
        seq[t * C + symbol] = 1.0;
      } else if (rng.bernoulli(cfg.distractor_p)) {
        seq[t * C + cfg.n_symbols] = 1.0;
      }
    }
    seq[(cfg.length - 1) * C + cfg.n_symbols + 1] = 1.0;
  }
  return b;
}

}  // namespace elm
