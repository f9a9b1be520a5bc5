#pragma once

// Run configuration: a JSON document with `task`, `model`, `train`, `seed`
// and `dataset` entries. Every key is checked; unknown keys are errors.

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>

#include <json.hpp>

#include "elm/cells.hpp"
#include "elm/tasks.hpp"
#include "elm/training.hpp"

namespace elm {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// Typed access to one JSON object that remembers which keys were read.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(obj_.at(key), key);
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError(path_ + "." + key + ": required");
    return convert<T>(obj_.at(key), key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  void finish() const {
    for (const auto& [k, _] : obj_.items())
      if (!seen_.count(k)) throw ConfigError(path_ + "." + k + ": unknown key");
  }

  const std::string& path() const { return path_; }

 private:
  template <typename T>
  T convert(const json& v, const std::string& key) const {
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_integer() || v.get<long long>() < 0)
          throw ConfigError(path_ + "." + key + ": expected a nonnegative integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(path_ + "." + key + ": expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(path_ + "." + key + ": expected a string");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(path_ + "." + key + ": expected a boolean");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void check(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

inline std::pair<double, double> read_range(ObjectReader& r, const std::string& key, std::pair<double, double> fallback) {
  if (!r.has(key)) return fallback;
  const json& v = r.raw(key);
  check(v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number(),
        r.path() + "." + key + ": expected [lo, hi]");
  return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Task

enum class TaskKind { teacher, adding, delayed_recall };

struct TaskSpec {
  TaskKind kind = TaskKind::teacher;
  // teacher
  TeacherConfig teacher;
  double train_ms = 100000.0;
  double test_ms = 20000.0;
  double sequence_ms = 500.0;
  // adding
  AddingConfig adding;
  // delayed recall
  DelayedRecallConfig recall;
  // classification tasks
  std::size_t train_count = 1000;
  std::size_t test_count = 200;
};

inline TaskSpec parse_task(const json& j) {
  detail::ObjectReader r(j, "task");
  TaskSpec t;
  const auto kind = r.require<std::string>("kind");
  if (kind == "teacher") {
    t.kind = TaskKind::teacher;
    auto& c = t.teacher;
    const auto teacher = r.get<std::string>("teacher", "lif");
    detail::check(teacher == "lif" || teacher == "alif", "task.teacher: expected lif or alif");
    c.kind = teacher == "lif" ? TeacherKind::lif : TeacherKind::alif;
    c.channels = r.get<std::size_t>("channels", c.channels);
    c.dt = r.get<double>("dt", c.dt);
    c.rate_hz = r.get<double>("rate_hz", c.rate_hz);
    c.inhibitory_fraction = r.get<double>("inhibitory_fraction", c.inhibitory_fraction);
    c.tau = r.get<double>("tau", c.tau);
    c.threshold = r.get<double>("threshold", c.threshold);
    c.v_reset = r.get<double>("v_reset", c.v_reset);
    c.bias = r.get<double>("bias", c.bias);
    c.w_exc = r.get<double>("w_exc", c.w_exc);
    c.w_inh = r.get<double>("w_inh", c.w_inh);
    c.tau_a = r.get<double>("tau_a", c.tau_a);
    c.adaptation = r.get<double>("adaptation", c.adaptation);
    c.weight_seed = r.get<std::uint64_t>("weight_seed", c.weight_seed);
    t.train_ms = r.get<double>("train_ms", t.train_ms);
    t.test_ms = r.get<double>("test_ms", t.test_ms);
    t.sequence_ms = r.get<double>("sequence_ms", t.sequence_ms);
    detail::check(c.channels >= 1, "task.channels must be >= 1");
    detail::check(c.dt > 0.0, "task.dt must be > 0");
    detail::check(c.rate_hz >= 0.0, "task.rate_hz must be >= 0");
    detail::check(c.inhibitory_fraction >= 0.0 && c.inhibitory_fraction <= 1.0, "task.inhibitory_fraction must be in [0, 1]");
    detail::check(c.tau > 0.0 && c.tau_a > 0.0, "task.tau and task.tau_a must be > 0");
    detail::check(c.adaptation >= 0.0, "task.adaptation must be >= 0");
    detail::check(c.kind == TeacherKind::alif || c.adaptation == 0.0, "task.adaptation requires teacher alif");
    detail::check(t.train_ms >= 1000.0 && t.test_ms >= 1000.0, "task.train_ms and task.test_ms must be >= 1000");
    detail::check(t.sequence_ms >= c.dt && t.sequence_ms <= t.test_ms, "task.sequence_ms out of range");
  } else if (kind == "adding") {
    t.kind = TaskKind::adding;
    auto& d = t.adding.digit;
    d.channels = r.get<std::size_t>("channels", d.channels);
    d.duration_ms = r.get<double>("digit_ms", d.duration_ms);
    d.dt = r.get<double>("dt", d.dt);
    d.peak_rate_hz = r.get<double>("peak_rate_hz", d.peak_rate_hz);
    d.inhibitory_fraction = r.get<double>("inhibitory_fraction", d.inhibitory_fraction);
    d.max_count = static_cast<int>(r.get<std::size_t>("max_count", static_cast<std::size_t>(d.max_count)));
    d.template_seed = r.get<std::uint64_t>("template_seed", d.template_seed);
    t.adding.bin_ms = r.get<double>("bin_ms", t.adding.bin_ms);
    t.train_count = r.get<std::size_t>("train_count", t.train_count);
    t.test_count = r.get<std::size_t>("test_count", t.test_count);
    detail::check(d.channels >= 1 && d.dt > 0.0 && d.duration_ms >= d.dt, "task: invalid digit geometry");
    detail::check(d.max_count >= 1, "task.max_count must be >= 1");
    detail::check(t.adding.bin_ms >= d.dt, "task.bin_ms must be >= dt");
    detail::check(t.train_count >= 2 && t.test_count >= 1, "task: need train_count >= 2 and test_count >= 1");
  } else if (kind == "delayed_recall") {
    t.kind = TaskKind::delayed_recall;
    auto& c = t.recall;
    c.length = r.get<std::size_t>("length", c.length);
    c.delay = r.get<std::size_t>("delay", c.delay);
    c.n_symbols = r.get<std::size_t>("n_symbols", c.n_symbols);
    c.dt = r.get<double>("dt", c.dt);
    c.distractor_p = r.get<double>("distractor_p", c.distractor_p);
    t.train_count = r.get<std::size_t>("train_count", t.train_count);
    t.test_count = r.get<std::size_t>("test_count", t.test_count);
    detail::check(c.delay < c.length, "task.delay must be < task.length");
    detail::check(c.n_symbols >= 2, "task.n_symbols must be >= 2");
    detail::check(c.dt > 0.0, "task.dt must be > 0");
    detail::check(c.distractor_p >= 0.0 && c.distractor_p <= 1.0, "task.distractor_p must be in [0, 1]");
    detail::check(t.train_count >= 2 && t.test_count >= 1, "task: need train_count >= 2 and test_count >= 1");
  } else {
    throw ConfigError("task.kind: expected teacher, adding or delayed_recall");
  }
  r.finish();
  return t;
}

// ---------------------------------------------------------------------------
// Model

enum class ModelKind { elm, branch_elm, lstm, snn };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::elm: return "elm";
    case ModelKind::branch_elm: return "branch_elm";
    case ModelKind::lstm: return "lstm";
    case ModelKind::snn: return "snn";
  }
  return "?";
}

struct ModelSpec {
  ModelKind kind = ModelKind::elm;
  ElmConfig elm;  // d_s and d_o are filled in from the dataset
  std::size_t d_tree = 0;
  std::size_t d_brch = 0;
  std::size_t lstm_hidden = 64;
  double chrono_t_max = 0.0;  // 0 disables chrono init
  SnnConfig snn;
};

inline ModelSpec parse_model(const json& j) {
  detail::ObjectReader r(j, "model");
  ModelSpec m;
  const auto kind = r.require<std::string>("kind");
  if (kind == "elm" || kind == "branch_elm") {
    m.kind = kind == "elm" ? ModelKind::elm : ModelKind::branch_elm;
    auto& e = m.elm;
    e.d_m = r.get<std::size_t>("d_m", 20);
    e.d_mlp = r.get<std::size_t>("d_mlp", 0);
    e.l_mlp = r.get<std::size_t>("l_mlp", 1);
    e.lambda = r.get<double>("lambda", 5.0);
    const auto variant = r.get<std::string>("variant", "original");
    detail::check(variant == "original" || variant == "improved", "model.variant: expected original or improved");
    e.variant = variant == "original" ? ElmVariant::original : ElmVariant::improved;
    const auto init = detail::read_range(r, "tau_m_init", {1.0, 1000.0});
    e.tau_init_lo = init.first;
    e.tau_init_hi = init.second;
    const auto bounds = detail::read_range(r, "tau_m_bounds", init);
    e.tau_bounds = {bounds.first, bounds.second};
    const auto spacing = r.get<std::string>("tau_m_spacing", "log");
    detail::check(spacing == "log" || spacing == "linear", "model.tau_m_spacing: expected log or linear");
    e.tau_init_spacing = spacing == "log" ? Spacing::log : Spacing::linear;
    e.tau_s = r.get<double>("tau_s", 5.0);
    e.w_s = r.get<double>("w_s", 0.5);
    detail::check(e.d_m >= 1, "model.d_m must be >= 1");
    detail::check(e.lambda > 0.0, "model.lambda must be > 0");
    detail::check(e.tau_bounds.lo > 0.0 && e.tau_bounds.lo < e.tau_bounds.hi, "model.tau_m_bounds: need 0 < lo < hi");
    detail::check(e.tau_init_lo > 0.0 && e.tau_init_lo <= e.tau_init_hi, "model.tau_m_init: need 0 < lo <= hi");
    detail::check(e.tau_init_lo >= e.tau_bounds.lo && e.tau_init_hi <= e.tau_bounds.hi,
                  "model.tau_m_init must lie within model.tau_m_bounds");
    detail::check(e.tau_s > 0.0, "model.tau_s must be > 0");
    detail::check(e.w_s >= 0.0, "model.w_s must be >= 0");
    if (m.kind == ModelKind::branch_elm) {
      m.d_tree = r.require<std::size_t>("d_tree");
      m.d_brch = r.require<std::size_t>("d_brch");
      detail::check(m.d_tree >= 1 && m.d_brch >= 1, "model.d_tree and model.d_brch must be >= 1");
    }
  } else if (kind == "lstm") {
    m.kind = ModelKind::lstm;
    m.lstm_hidden = r.get<std::size_t>("hidden", m.lstm_hidden);
    m.chrono_t_max = r.get<double>("chrono_t_max", 0.0);
    detail::check(m.lstm_hidden >= 1, "model.hidden must be >= 1");
    detail::check(m.chrono_t_max == 0.0 || m.chrono_t_max >= 2.0, "model.chrono_t_max must be 0 or >= 2");
  } else if (kind == "snn") {
    m.kind = ModelKind::snn;
    auto& s = m.snn;
    s.n_total = r.get<std::size_t>("n_total", s.n_total);
    s.synapses = r.get<std::size_t>("synapses", s.synapses);
    s.inhibitory_fraction = r.get<double>("inhibitory_fraction", s.inhibitory_fraction);
    s.p_previous_layer = r.get<double>("p_previous_layer", s.p_previous_layer);
    s.tau_init = r.get<double>("tau_init", s.tau_init);
    detail::check(s.synapses >= 1, "model.synapses must be >= 1");
    detail::check(s.p_previous_layer >= 0.0 && s.p_previous_layer <= 1.0, "model.p_previous_layer must be in [0, 1]");
  } else {
    throw ConfigError("model.kind: expected elm, branch_elm, lstm or snn");
  }
  r.finish();
  return m;
}

// ---------------------------------------------------------------------------
// Training

inline TrainConfig parse_train(const json& j) {
  detail::ObjectReader r(j, "train");
  TrainConfig c;
  const auto opt = r.get<std::string>("optimizer", "adam");
  detail::check(opt == "adam" || opt == "adamax", "train.optimizer: expected adam or adamax");
  c.optimizer = opt == "adam" ? OptimizerKind::adam : OptimizerKind::adamax;
  c.lr = r.get<double>("lr", c.lr);
  c.batch_size = r.get<std::size_t>("batch_size", c.batch_size);
  c.epochs = r.get<std::size_t>("epochs", c.epochs);
  c.burn_in_ms = r.get<double>("burn_in_ms", c.burn_in_ms);
  c.dropout = r.get<double>("dropout", c.dropout);
  c.recurrent_dropout = r.get<double>("recurrent_dropout", c.recurrent_dropout);
  c.spike_l1 = r.get<double>("spike_l1", c.spike_l1);
  c.voltage_scale = r.get<double>("voltage_scale", c.voltage_scale);
  c.val_fraction = r.get<double>("val_fraction", c.val_fraction);
  c.divergence_loss = r.get<double>("divergence_loss", c.divergence_loss);
  c.spike_bias_prior = r.get<bool>("spike_bias_prior", c.spike_bias_prior);
  const auto select_by = r.get<std::string>("select_by", std::string(to_string(c.select_by)));
  detail::check(select_by == "metric" || select_by == "loss", "train.select_by: expected metric or loss");
  c.select_by = select_by == "metric" ? Selection::metric : Selection::loss;
  r.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Whole run

struct RunConfig {
  std::optional<TaskSpec> task;
  std::optional<ModelSpec> model;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::string dataset;
  json raw;
};

inline RunConfig parse_run_config(const json& j) {
  detail::ObjectReader r(j, "config");
  RunConfig c;
  c.raw = j;
  if (r.has("task")) c.task = parse_task(r.raw("task"));
  if (r.has("model")) c.model = parse_model(r.raw("model"));
  if (r.has("train")) c.train = parse_train(r.raw("train"));
  c.seed = r.get<std::uint64_t>("seed", 0);
  c.dataset = r.get<std::string>("dataset", "");
  r.finish();
  c.train.seed = c.seed;
  return c;
}

inline RunConfig parse_run_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

/// Stable 64-bit digest of a JSON value (keys are serialised in sorted order).
inline std::uint64_t json_hash(const json& j) { return fnv1a64(j.dump()); }

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

}  // namespace elm
