// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Pass criterion numbers as arguments to
// run a subset, e.g. `acceptance 1 7 8`.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "elm/cli.hpp"

using namespace elm;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  const double mu = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// ---------------------------------------------------------------------------
// 1. BPTT against central differences

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string worst;
  double worst_ratio = 0.0;
  int instances = 0;
  for (CellKind kind :
       {CellKind::elm, CellKind::elm_improved, CellKind::branch_elm, CellKind::lstm, CellKind::linear_elm}) {
    const double thr = *grad_check_threshold(kind);
    double kind_max = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      GradCheckSizes sz;
      sz.d_s = 2 + seed % 7;     // 2..8
      sz.d_m = 1 + seed % 4;     // 1..4
      sz.steps = 5 + seed % 16;  // 5..20
      sz.d_o = 2;
      const GradCheckReport rep = grad_check(kind, sz, 1000 + seed);
      ++instances;
      kind_max = std::max(kind_max, rep.max_rel_err);
      if (rep.max_rel_err >= thr) ok = false;
      if (rep.max_rel_err / thr > worst_ratio) {
        worst_ratio = rep.max_rel_err / thr;
        worst = fmt("%s seed %llu (%s)", std::string(to_string(kind)).c_str(),
                    static_cast<unsigned long long>(seed), rep.worst_parameter.c_str());
      }
    }
    std::printf("  %-12s max rel err %.3e (threshold %.0e)\n", std::string(to_string(kind)).c_str(), kind_max, thr);
  }
  const double secs = seconds_since(t0);
  if (secs >= 120.0) ok = false;
  return {ok, fmt("%d instances, worst %s at %.2f of threshold, %.1f s", instances, worst.c_str(), worst_ratio, secs)};
}

// ---------------------------------------------------------------------------
// 2. |m| <= lambda on random trajectories

Outcome memory_boundedness() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst_ratio = 0.0;  // max |m| / lambda
  bool ok = true;
  for (int traj = 0; traj < 1000; ++traj) {
    ElmConfig cfg;
    cfg.d_s = 1 + rng.index(6);
    cfg.d_m = 1 + rng.index(4);
    cfg.d_mlp = 1 + rng.index(8);
    cfg.l_mlp = rng.index(3);
    cfg.d_o = 1;
    cfg.variant = traj % 2 == 0 ? ElmVariant::original : ElmVariant::improved;
    cfg.lambda = std::exp(rng.uniform(std::log(0.5), std::log(50.0)));
    const double lo = std::exp(rng.uniform(std::log(0.5), std::log(20.0)));
    cfg.tau_bounds = {lo, lo * std::exp(rng.uniform(0.5, 6.0))};
    cfg.tau_init_lo = cfg.tau_bounds.lo * 1.01;
    cfg.tau_init_hi = cfg.tau_bounds.hi * 0.99;
    cfg.tau_s = rng.uniform(0.5, 20.0);
    ElmParams p = make_elm(cfg, rng);
    // large weights push the tanh into saturation so the bound is exercised
    const double scale = rng.uniform(1.0, 10.0);
    for (auto& w : p.mlp_weights)
      for (auto& x : w.values()) x = rng.normal() * scale;
    for (auto& b : p.mlp_biases)
      for (auto& x : b) x = rng.normal() * scale;
    for (auto& th : p.theta_m) th = rng.uniform(-6.0, 6.0);
    ElmState st = initial_state(p);
    Vector x(p.d_s);
    double sup = 0.0;
    for (int t = 0; t < 10000; ++t) {
      for (auto& v : x) v = rng.bernoulli(0.3) ? static_cast<double>(static_cast<int>(rng.index(7)) - 3) : 0.0;
      st = elm_step(p, st, x, rng.uniform(0.1, 5.0)).first;
      for (double v : st.m) sup = std::max(sup, std::abs(v));
    }
    if (!(sup <= p.lambda)) ok = false;
    worst_ratio = std::max(worst_ratio, sup / p.lambda);
  }
  const double secs = seconds_since(t0);
  if (secs >= 60.0) ok = false;
  return {ok, fmt("1000 trajectories x 1e4 steps, max |m|/lambda = %.17g, %.1f s", worst_ratio, secs)};
}

// ---------------------------------------------------------------------------
// 3. original vs improved update coefficient

Outcome variant_agreement() {
  double worst = 0.0, worst_tau = 0.0, worst_lambda = 0.0;
  int points = 0;
  for (double lambda : {1.5, 2.0, 5.0, 10.0, 20.0, 50.0}) {
    for (double dt : {0.1, 0.5, 1.0, 2.0}) {
      for (int k = 0; k <= 60; ++k) {
        const double tau = 100.0 * lambda * dt * std::pow(10.0, k / 10.0);
        const double a = memory_coefficients(ElmVariant::original, lambda, tau, dt).update;
        const double b = memory_coefficients(ElmVariant::improved, lambda, tau, dt).update;
        // oracle: both are lambda*dt/tau to first order
        const double first_order = lambda * dt / tau;
        const double rel = std::abs(a - b) / std::abs(a);
        if (std::abs(a / first_order - 1.0) > 0.01 || std::abs(b / first_order - 1.0) > 0.01) return {false, "coefficient far from lambda*dt/tau"};
        ++points;
        if (rel > worst) {
          worst = rel;
          worst_tau = tau;
          worst_lambda = lambda;
        }
      }
    }
  }
  // outside the regime the variants do disagree
  const double a = memory_coefficients(ElmVariant::original, 5.0, 5.0, 1.0).update;
  const double b = memory_coefficients(ElmVariant::improved, 5.0, 5.0, 1.0).update;
  return {worst < 0.01, fmt("%d grid points, max rel diff %.3e (tau %.4g, lambda %g); at tau = lambda*dt: %.2f", points, worst,
                            worst_tau, worst_lambda, std::abs(a - b) / a)};
}

// ---------------------------------------------------------------------------
// Shared training harness for 4, 5, 6

struct FitResult {
  MetricsReport test;
  double seconds = 0.0;
  std::size_t best_epoch = 0;
};

FitResult fit(const json& cfg_json) {
  const auto t0 = Clock::now();
  const RunConfig cfg = parse_run_config(cfg_json);
  const Dataset data = generate_dataset(*cfg.task, cfg_json.at("task"), cfg.seed);
  const detail::TrainOutcome out = detail::train_on_dataset(cfg_json, cfg, data, 1, nullptr, nullptr);
  if (out.divergent) throw std::runtime_error("training diverged");
  return {out.test, seconds_since(t0), out.best_epoch};
}

json lif_teacher() {
  return {{"kind", "teacher"}, {"teacher", "lif"}, {"channels", 64}, {"train_ms", 100000}, {"test_ms", 20000}, {"sequence_ms", 500}};
}

// Strong, fast adaptation at a firing rate close to the LIF teacher's.
json alif_teacher() {
  json t = lif_teacher();
  t["teacher"] = "alif";
  t["adaptation"] = 2.0;
  t["tau_a"] = 100;
  t["bias"] = 0.8;
  return t;
}

json teacher_run(const json& task, std::size_t d_m, std::uint64_t seed) {
  const json init = d_m == 1 ? json{20, 20} : json{1, 200};
  return {{"seed", seed},
          {"task", task},
          {"model",
           {{"kind", "elm"}, {"d_m", d_m}, {"d_mlp", 16}, {"lambda", 5}, {"tau_m_init", init}, {"tau_m_bounds", {1, 1000}}, {"tau_s", 0.5}}},
          {"train", {{"lr", 0.01}, {"batch_size", 8}, {"epochs", 60}, {"burn_in_ms", 150}, {"select_by", "loss"}}}};
}

std::map<std::size_t, std::vector<double>>& alif_capacity_cache() {
  static std::map<std::size_t, std::vector<double>> cache;
  return cache;
}

double max_fit_seconds = 0.0;

const std::vector<double>& alif_capacity(std::size_t d_m) {
  auto& cache = alif_capacity_cache();
  if (!cache.count(d_m)) {
    std::vector<double> aucs;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const FitResult r = fit(teacher_run(alif_teacher(), d_m, seed));
      max_fit_seconds = std::max(max_fit_seconds, r.seconds);
      std::printf("  alif teacher d_m=%zu seed %llu: test AUC %.4f (best epoch %zu, %.0f s)\n", d_m,
                  static_cast<unsigned long long>(seed), r.test.auc, r.best_epoch, r.seconds);
      std::fflush(stdout);
      aucs.push_back(r.test.auc);
    }
    cache[d_m] = aucs;
  }
  return cache[d_m];
}

// ---------------------------------------------------------------------------
// 4. teacher fitting

Outcome teacher_fitting() {
  const json simplest = {{"seed", 0},
                         {"task", lif_teacher()},
                         {"model",
                          {{"kind", "elm"}, {"d_m", 1}, {"l_mlp", 0}, {"lambda", 5}, {"tau_m_init", {20, 20}}, {"tau_m_bounds", {1, 1000}}, {"tau_s", 0.5}}},
                         {"train", {{"lr", 0.02}, {"batch_size", 8}, {"epochs", 100}, {"burn_in_ms", 150}, {"select_by", "loss"}}}};
  const FitResult s = fit(simplest);
  max_fit_seconds = std::max(max_fit_seconds, s.seconds);
  std::printf("  simplest ELM on lif teacher: test AUC %.4f (%.0f s)\n", s.test.auc, s.seconds);
  std::fflush(stdout);

  std::vector<double> lif;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const FitResult r = fit(teacher_run(lif_teacher(), 2, seed));
    max_fit_seconds = std::max(max_fit_seconds, r.seconds);
    std::printf("  lif teacher d_m=2 seed %llu: test AUC %.4f (%.0f s)\n", static_cast<unsigned long long>(seed), r.test.auc,
                r.seconds);
    std::fflush(stdout);
    lif.push_back(r.test.auc);
  }
  const std::vector<double>& alif = alif_capacity(2);
  const bool ok = s.test.auc >= 0.95 && mean(lif) > mean(alif) && max_fit_seconds < 1800.0;
  return {ok, fmt("simplest AUC %.4f; d_m=2 mean AUC lif %.4f vs alif %.4f; slowest fit %.0f s", s.test.auc, mean(lif),
                  mean(alif), max_fit_seconds)};
}

// ---------------------------------------------------------------------------
// 5. timescale ablation on delayed recall

Outcome timescale_ablation() {
  auto run = [](double hi, double init_hi, std::uint64_t seed) {
    const json cfg = {
        {"seed", seed},
        {"task",
         {{"kind", "delayed_recall"}, {"length", 1010}, {"delay", 1000}, {"n_symbols", 2}, {"distractor_p", 0.1}, {"train_count", 500}, {"test_count", 200}}},
        {"model",
         {{"kind", "elm"}, {"d_m", 16}, {"d_mlp", 32}, {"lambda", 5}, {"tau_m_init", {1, init_hi}}, {"tau_m_bounds", {1, hi}}, {"tau_s", 50}}},
        {"train", {{"lr", 0.003}, {"batch_size", 16}, {"epochs", 40}}}};
    const FitResult r = fit(cfg);
    std::printf("  tau_m bounds [1, %g] seed %llu: test accuracy %.3f (%.0f s)\n", hi, static_cast<unsigned long long>(seed),
                r.test.accuracy, r.seconds);
    std::fflush(stdout);
    return r.test.accuracy;
  };
  std::vector<double> long_acc, short_acc;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    long_acc.push_back(run(1e4, 2000, seed));
    short_acc.push_back(run(10, 10, seed));
  }
  const double l = mean(long_acc), s = mean(short_acc);
  return {l >= 0.9 && s <= l - 0.2, fmt("mean accuracy [1, 1e4]: %.3f, [1, 10]: %.3f", l, s)};
}

// ---------------------------------------------------------------------------
// 6. capacity ablation

Outcome capacity_ablation() {
  const std::vector<std::size_t> dims{1, 2, 4, 8};
  std::vector<double> mu, sd;
  for (std::size_t d : dims) {
    const auto& a = alif_capacity(d);
    mu.push_back(mean(a));
    sd.push_back(sample_sd(a));
  }
  std::string curve;
  for (std::size_t i = 0; i < dims.size(); ++i) curve += fmt("d_m=%zu %.4f+-%.4f ", dims[i], mu[i], sd[i]);
  // rising part: each step may dip by at most one sd
  bool ok = true;
  for (std::size_t i = 0; i + 1 < 3; ++i)
    if (mu[i + 1] < mu[i] - std::max(sd[i], sd[i + 1])) ok = false;
  // plateau: d_m=8 within one sd of d_m=4
  if (std::abs(mu[3] - mu[2]) > std::max(sd[2], sd[3])) ok = false;
  return {ok, curve + fmt("; slowest fit %.0f s", max_fit_seconds)};
}

// ---------------------------------------------------------------------------
// 7. AUC against pairwise counting

double brute_force_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

Outcome auc_oracle() {
  Rng rng(77);
  double worst = 0.0;
  int with_ties = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + rng.index(199);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const double levels = inst % 2 == 0 ? 5.0 : 1e6;  // even instances are heavily tied
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(rng.uniform(0.0, levels));
      y[i] = rng.bernoulli(0.3) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    // inject explicit cross-class ties
    for (int k = 0; k < 3; ++k) s[rng.index(n)] = s[1];
    std::set<double> distinct(s.begin(), s.end());
    if (distinct.size() < n) ++with_ties;
    worst = std::max(worst, std::abs(auc(s, y) - brute_force_auc(s, y)));
  }
  return {worst <= 1e-12 && with_ties == 100, fmt("100 instances (%d with ties), max |diff| %.3e", with_ties, worst)};
}

// ---------------------------------------------------------------------------
// 8. parameter counting

std::size_t closed_form_params(std::size_t d_s, std::size_t d_m, std::size_t d_mlp, std::size_t l_mlp, std::size_t d_o,
                               std::size_t d_tree, bool branch) {
  const std::size_t in = (branch ? d_tree : d_s) + d_m;
  std::size_t n = 0;
  if (l_mlp == 0) {
    n += in * d_m + d_m;
  } else {
    n += in * d_mlp + d_mlp;
    n += (l_mlp - 1) * (d_mlp * d_mlp + d_mlp);
    n += d_mlp * d_m + d_m;
  }
  n += d_m * d_o + d_o;  // readout
  n += d_m;              // tau_m
  if (branch) n += d_s;  // trainable synaptic weights
  return n;
}

Outcome parameter_counting() {
  Rng rng(8);
  int mismatches = 0;
  for (int i = 0; i < 50; ++i) {
    ElmConfig c;
    c.d_s = 1 + rng.index(300);
    c.d_m = 1 + rng.index(30);
    c.d_mlp = 1 + rng.index(64);
    c.l_mlp = rng.index(4);
    c.d_o = 1 + rng.index(5);
    const bool branch = i % 3 == 0;
    std::size_t d_tree = 0;
    if (branch) {
      d_tree = 1 + rng.index(std::min<std::size_t>(c.d_s, 16));
      c.branch = std::pair<std::size_t, std::size_t>{d_tree, 1 + rng.index(c.d_s)};
    }
    Rng init(i);
    const ElmParams p = make_elm(c, init);
    if (count_params(p) != closed_form_params(c.d_s, c.d_m, c.d_mlp, c.l_mlp, c.d_o, d_tree, branch)) ++mismatches;
  }
  std::string table;
  double worst = 0.0;
  for (auto [d_m, reported] : {std::pair<std::size_t, double>{10, 26060}, {20, 52920}, {25, 66650}}) {
    ElmConfig c;
    c.d_s = 1278;
    c.d_m = d_m;
    c.d_mlp = 2 * d_m;
    c.d_o = 2;
    Rng init(0);
    const std::size_t n = count_params(make_elm(c, init));
    const double rel = std::abs(static_cast<double>(n) - reported) / reported;
    worst = std::max(worst, rel);
    table += fmt("d_m=%zu: %zu vs %.0f; ", d_m, n, reported);
  }
  return {mismatches == 0 && worst <= 0.005,
          fmt("%d/50 closed-form mismatches; %smax rel diff %.3f%%", mismatches, table.c_str(), 100.0 * worst)};
}

// ---------------------------------------------------------------------------
// 9. adding label distribution

Outcome adding_labels() {
  // label geometry does not depend on the raster size, so keep digits small
  AddingConfig cfg;
  cfg.digit.channels = 4;
  cfg.digit.duration_ms = 20.0;
  cfg.bin_ms = 4.0;
  const std::size_t n = 10000;
  const SequenceBatch b = gen_adding_batch(cfg, n, 9);
  std::vector<double> count(kAddingClasses, 0.0);
  for (int l : b.labels) count.at(static_cast<std::size_t>(l)) += 1.0;
  // oracle: convolution of two uniforms on 0..9
  std::vector<double> p(kAddingClasses, 0.0);
  for (int a = 0; a < 10; ++a)
    for (int c = 0; c < 10; ++c) p[static_cast<std::size_t>(a + c)] += 0.01;
  bool ok = std::abs(p[0] - 0.01) < 1e-15 && std::abs(p[9] - 0.10) < 1e-15;
  double worst_z = 0.0;
  for (int k = 0; k < kAddingClasses; ++k) {
    const double e = static_cast<double>(n) * p[static_cast<std::size_t>(k)];
    const double z = std::abs(count[static_cast<std::size_t>(k)] - e) / std::sqrt(e * (1.0 - p[static_cast<std::size_t>(k)]));
    worst_z = std::max(worst_z, z);
  }
  ok = ok && worst_z <= 3.0;
  return {ok, fmt("10000 samples, max |z| over 19 classes %.2f; P(0)=%.0f/10000 P(9)=%.0f/10000", worst_z, count[0], count[9])};
}

// ---------------------------------------------------------------------------
// 10. determinism of full training runs

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("elm_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const json cfg = {{"seed", 5},
                    {"task", {{"kind", "teacher"}, {"channels", 16}, {"train_ms", 8000}, {"test_ms", 2000}, {"sequence_ms", 500}}},
                    {"model", {{"kind", "elm"}, {"d_m", 4}, {"tau_m_init", {1, 200}}, {"tau_m_bounds", {1, 1000}}}},
                    {"train", {{"lr", 0.01}, {"batch_size", 4}, {"epochs", 3}, {"dropout", 0.1}}}};
  std::ofstream(root / "config.json") << cfg.dump(2);
  std::ostringstream out, err;
  const std::string c = (root / "config.json").string(), d = (root / "data").string();
  if (run_cli({"gen", "--config", c, "--out", d}, out, err) != 0) return {false, "gen failed: " + err.str()};
  for (const char* run : {"a", "b"})
    if (run_cli({"train", "--config", c, "--dataset", d, "--out", (root / run).string(), "--threads", "1"}, out, err) != 0)
      return {false, "train failed: " + err.str()};
  bool ok = true;
  std::string files;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    const auto name = e.path().filename();
    files += name.string() + " ";
    if (slurp(e.path()) != slurp(root / "b" / name)) ok = false;
  }
  const bool has_all = fs::exists(root / "a" / "metrics.csv") && fs::exists(root / "a" / "params.bin") &&
                       fs::exists(root / "a" / "ckpt.json");
  fs::remove_all(root);
  return {ok && has_all, "compared " + files + (ok ? "(identical)" : "(differ)")};
}

// ---------------------------------------------------------------------------
// 11. chrono initialisation

Outcome chrono_init_range() {
  Rng rng(11);
  const double t_max = 1001.0;
  const double hi = std::log(1000.0);
  double lo_b = INFINITY, hi_b = -INFINITY, lo_t = INFINITY, hi_t = 0.0;
  bool in_range = true;
  std::size_t draws = 0;
  while (draws < 10000) {
    LstmParams p = make_lstm(1, 100, 1, rng, t_max);
    for (std::size_t k = 0; k < p.hidden; ++k, ++draws) {
      const double bf = p.b[p.hidden + k];
      if (!(bf >= 0.0 && bf <= hi) || p.b[k] != -bf) in_range = false;
      lo_b = std::min(lo_b, bf);
      hi_b = std::max(hi_b, bf);
      const double timescale = 1.0 / (1.0 - sigmoid(bf));
      lo_t = std::min(lo_t, timescale);
      hi_t = std::max(hi_t, timescale);
    }
  }
  const double decades = std::log10(hi_t / lo_t);
  return {in_range && decades >= 2.0,
          fmt("%zu draws, b_f in [%.4f, %.4f], timescales %.2f..%.1f (%.2f decades)", draws, lo_b, hi_b, lo_t, hi_t, decades)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"memory boundedness", memory_boundedness},
      {"variant agreement", variant_agreement},
      {"teacher fitting", teacher_fitting},
      {"timescale ablation", timescale_ablation},
      {"capacity ablation", capacity_ablation},
      {"auc oracle", auc_oracle},
      {"parameter counting", parameter_counting},
      {"adding labels", adding_labels},
      {"determinism", determinism},
      {"chrono init", chrono_init_range},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  std::string summary;
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    std::printf("[%d] %s\n", id, criteria[i].first);
    std::fflush(stdout);
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    const std::string line = fmt("%s %d %s: ", o.pass ? "PASS" : "FAIL", id, criteria[i].first) + o.detail + "\n";
    std::fputs(line.c_str(), stdout);
    std::fflush(stdout);
    summary += line;
  }
  const std::string total = fmt("total %.0f s, %d failed\n", seconds_since(t0), failures);
  std::fputs(total.c_str(), stdout);
  // ctest hides the output of passing tests, so keep the verdicts on disk too
  std::ofstream("acceptance_results.txt") << summary << total;
  return failures == 0 ? 0 : 1;
}
