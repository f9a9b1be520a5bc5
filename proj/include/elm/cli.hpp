#pragma once

// Command-line front end: gen, train, eval, gradcheck and sweep. run_cli is
// usable in-process (tests call it directly); tools/elm.cpp only forwards.

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "elm/bptt.hpp"
#include "elm/config.hpp"
#include "elm/io.hpp"
#include "elm/tasks.hpp"
#include "elm/training.hpp"

namespace elm {

enum ExitCode : int {
  kExitOk = 0,
  kExitRuntimeError = 1,
  kExitConfigError = 2,
  kExitDivergence = 3,
  kExitGradCheckFailed = 4,
};

namespace detail {

inline std::string read_config_text(const std::string& path) {
  try {
    return read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
}

/// Config JSON with command-line overrides applied.
inline json effective_config(const std::string& text, std::optional<std::uint64_t> seed,
                             std::optional<std::size_t> epochs) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected an object");
  if (seed) j["seed"] = *seed;
  if (epochs) j["train"]["epochs"] = *epochs;
  return j;
}

struct TrainOutcome {
  json info;
  bool divergent = false;
  MetricsReport best_val;
  MetricsReport test;
  std::size_t best_epoch = 0;
};

/// Trains the configured model on a loaded dataset. Rows are appended to
/// `csv` as they are produced so a divergent run keeps its partial log.
inline TrainOutcome train_on_dataset(const json& cfg_json, const RunConfig& cfg, const Dataset& data,
                                     std::size_t threads, std::ostream* csv, const fs::path* ckpt_dir) {
  if (!cfg.model) throw ConfigError("config: a model section is required");
  const SequenceBatch& full = data.train;
  TrainConfig tc = cfg.train;
  tc.threads = threads;
  if (full.layout == TargetLayout::per_step_pairs && burn_in_steps(tc, full) >= full.steps)
    throw ConfigError("train.burn_in_ms must be shorter than the sequence");
  if (full.layout == TargetLayout::class_index && cfg.model->kind == ModelKind::snn && full.n_classes < 1)
    throw ConfigError("snn needs a classification dataset");
  if (full.layout == TargetLayout::per_step_pairs && cfg.model->kind == ModelKind::snn)
    throw ConfigError("model.kind snn only supports classification datasets");
  const auto split = split_validation(full, tc.val_fraction);
  const SequenceBatch& train_set = split.first;
  const SequenceBatch& val_set = split.second;
  AnyModel model = make_model(*cfg.model, full.channels, dataset_outputs(full), cfg.seed);

  TrainOutcome out;
  std::visit(
      [&](auto& m) {
        try {
          check_compatible(m, full);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("model/dataset mismatch: ") + e.what());
        }
        auto on_row = [&](const MetricsRow& r) {
          if (csv) {
            *csv << metrics_csv_line(r);
            csv->flush();
          }
        };
        auto res = train(m, train_set, val_set, tc, on_row);
        out.divergent = res.divergent;
        out.best_val = res.best_val;
        out.best_epoch = res.best_epoch;
        out.test = evaluate(res.best, data.test, tc);
        out.info = {
            {"model_kind", std::string(to_string(cfg.model->kind))},
            {"config", cfg_json},
            {"config_hash", hex64(json_hash(cfg_json))},
            {"dataset_hash", data.meta.value("config_hash", "")},
            {"shapes", {{"inputs", full.channels}, {"outputs", dataset_outputs(full)}, {"steps", full.steps}}},
            {"epoch", res.best_epoch},
            {"epochs_run", res.curve.empty() ? 0 : res.curve.back().epoch},
            {"divergent", res.divergent},
            {"divergence", res.divergence},
            {"metrics", {{"val", metrics_json(res.best_val)}, {"test", metrics_json(out.test)}}},
        };
        if (ckpt_dir) save_checkpoint(*ckpt_dir, res.best, out.info);
      },
      model);
  return out;
}

inline void print_metrics(std::ostream& os, const std::string& label, const MetricsReport& m) {
  os << label << ":";
  if (!std::isnan(m.loss)) os << " loss=" << format_number(m.loss);
  if (!std::isnan(m.rmse)) os << " rmse=" << format_number(m.rmse);
  if (!std::isnan(m.auc)) os << " auc=" << format_number(m.auc);
  if (!std::isnan(m.accuracy)) os << " accuracy=" << format_number(m.accuracy);
  for (const auto& [f, t] : m.tpr_at_fpr) os << " tpr@fpr" << format_number(f) << "=" << format_number(t);
  os << "\n";
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(what + ": not a number: " + s);
  }
}

inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{"d_m", "l_mlp", "lambda", "tau_m", "d_tree", "d_brch", "bin_ms"};
  return axes;
}

/// Applies one sweep value to a config; returns the bin size for `bin_ms`.
inline std::optional<double> apply_sweep_value(json& cfg, const std::string& axis, const std::string& value) {
  if (axis == "bin_ms") return parse_number(value, "bin_ms");
  if (!cfg.contains("model")) throw ConfigError("sweep: config has no model section");
  json& model = cfg["model"];
  if (axis == "tau_m") {
    const auto colon = value.find(':');
    if (colon == std::string::npos) throw ConfigError("sweep tau_m values are lo:hi");
    const double lo = parse_number(value.substr(0, colon), "tau_m");
    const double hi = parse_number(value.substr(colon + 1), "tau_m");
    model["tau_m_init"] = {lo, hi};
    model["tau_m_bounds"] = {lo, hi};
  } else if (axis == "lambda") {
    model["lambda"] = parse_number(value, axis);
  } else {
    const double v = parse_number(value, axis);
    if (v < 0 || v != std::floor(v)) throw ConfigError(axis + ": expected a nonnegative integer");
    model[axis] = static_cast<std::size_t>(v);
  }
  return std::nullopt;
}

struct Summary {
  std::size_t n = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
};

/// Mean and sample standard deviation of the non-NaN values.
inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  double sum = 0.0;
  for (double x : xs)
    if (!std::isnan(x)) {
      sum += x;
      ++s.n;
    }
  if (s.n == 0) return s;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n >= 2) {
    double sq = 0.0;
    for (double x : xs)
      if (!std::isnan(x)) sq += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(sq / static_cast<double>(s.n - 1));
  }
  return s;
}

inline std::string sweep_csv_header() {
  return "axis,value,runs,divergent,rmse_mean,rmse_sd,auc_mean,auc_sd,accuracy_mean,accuracy_sd\n";
}

}  // namespace detail

/// Runs one command line. Returns the process exit code.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Expressive leaky memory neuron toolkit", "elm"};
  app.require_subcommand(1);

  std::string config_path, out_dir, dataset_path, checkpoint_dir, split = "test", kind, sizes, axis, values;
  std::uint64_t seed_value = 0;
  std::size_t threads = 1, epochs_value = 0, repeats = 1;
  bool force = false, corrupt = false;

  auto* gen = app.add_subcommand("gen", "generate a dataset directory from a task config");
  gen->add_option("--config", config_path, "run config (JSON)")->required();
  gen->add_option("--out", out_dir, "output dataset directory")->required();
  auto* gen_seed = gen->add_option("--seed", seed_value, "override the config seed");
  gen->add_flag("--force", force, "overwrite a non-empty output directory");
  gen->add_option("--threads", threads, "worker threads (unused by gen)");

  auto* trn = app.add_subcommand("train", "train a model on a dataset directory");
  trn->add_option("--config", config_path, "run config (JSON)")->required();
  trn->add_option("--out", out_dir, "output run directory")->required();
  trn->add_option("--dataset", dataset_path, "dataset directory (overrides config)");
  auto* trn_seed = trn->add_option("--seed", seed_value, "override the config seed");
  auto* trn_epochs = trn->add_option("--epochs", epochs_value, "override train.epochs");
  trn->add_option("--threads", threads, "gradient worker threads")->check(CLI::PositiveNumber);
  trn->add_flag("--force", force, "overwrite a non-empty output directory");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  ev->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  ev->add_option("--dataset", dataset_path, "dataset directory")->required();
  ev->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--out", out_dir, "write the JSON report to this file");
  ev->add_option("--threads", threads, "unused by eval");

  auto* gc = app.add_subcommand("gradcheck", "compare BPTT gradients with finite differences");
  gc->add_option("kind", kind, "elm, elm_improved, branch_elm, linear_elm, lstm, lif, alif or snn")->required();
  gc->add_option("--sizes", sizes, "d_s,d_m,steps,d_o");
  gc->add_option("--seed", seed_value, "instance seed");
  gc->add_flag("--corrupt", corrupt, "perturb the backward pass (negative control)");

  auto* sw = app.add_subcommand("sweep", "one training run per axis value, aggregated over repeat seeds");
  sw->add_option("--config", config_path, "run config (JSON)")->required();
  sw->add_option("--out", out_dir, "output directory")->required();
  sw->add_option("--axis", axis, "d_m, l_mlp, lambda, tau_m, d_tree, d_brch or bin_ms")
      ->required()
      ->check(CLI::IsMember(detail::sweep_axes()));
  sw->add_option("--values", values, "comma-separated values (tau_m uses lo:hi)")->required();
  sw->add_option("--repeats", repeats, "seeds per value")->check(CLI::PositiveNumber);
  sw->add_option("--dataset", dataset_path, "dataset directory (overrides config)");
  auto* sw_seed = sw->add_option("--seed", seed_value, "first seed");
  auto* sw_epochs = sw->add_option("--epochs", epochs_value, "override train.epochs");
  sw->add_option("--threads", threads, "gradient worker threads")->check(CLI::PositiveNumber);
  sw->add_flag("--force", force, "overwrite a non-empty output directory");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfigError;
  }

  auto opt_seed = [&](CLI::Option* o) -> std::optional<std::uint64_t> {
    if (o->count() > 0) return seed_value;
    return std::nullopt;
  };
  auto opt_epochs = [&](CLI::Option* o) -> std::optional<std::size_t> {
    if (o->count() > 0) return epochs_value;
    return std::nullopt;
  };

  try {
    if (gen->parsed()) {
      const std::string text = detail::read_config_text(config_path);
      const json cj = detail::effective_config(text, opt_seed(gen_seed), std::nullopt);
      const RunConfig cfg = parse_run_config(cj);
      if (!cfg.task) throw ConfigError("config: gen needs a task section");
      prepare_output_dir(out_dir, force);
      const Dataset d = generate_dataset(*cfg.task, cj.at("task"), cfg.seed);
      save_dataset(out_dir, d);
      detail::write_file(fs::path(out_dir) / "config.json", text);
      out << "dataset " << out_dir << ": " << d.meta["kind"].get<std::string>() << ", train " << d.train.count
          << " x " << d.train.steps << " steps, test " << d.test.count << ", " << d.train.channels
          << " channels, dt " << format_number(d.train.dt) << " ms\n";
      out << "stats: " << d.meta["stats"].dump() << "\n";
      return kExitOk;
    }

    if (trn->parsed()) {
      const std::string text = detail::read_config_text(config_path);
      const json cj = detail::effective_config(text, opt_seed(trn_seed), opt_epochs(trn_epochs));
      const RunConfig cfg = parse_run_config(cj);
      const std::string ds = dataset_path.empty() ? cfg.dataset : dataset_path;
      if (ds.empty()) throw ConfigError("train: no dataset given (config.dataset or --dataset)");
      const Dataset data = load_dataset(ds);
      if (!cfg.model) throw ConfigError("config: train needs a model section");
      prepare_output_dir(out_dir, force);
      detail::write_file(fs::path(out_dir) / "config.json", text);
      std::ofstream csv(fs::path(out_dir) / "metrics.csv", std::ios::trunc);
      csv << metrics_csv_header();
      const fs::path ckpt(out_dir);
      const auto res = detail::train_on_dataset(cj, cfg, data, threads, &csv, &ckpt);
      detail::print_metrics(out, "best validation (epoch " + std::to_string(res.best_epoch) + ")", res.best_val);
      detail::print_metrics(out, "test", res.test);
      if (res.divergent) {
        err << "training diverged: " << res.info.value("divergence", "") << "\n";
        return kExitDivergence;
      }
      return kExitOk;
    }

    if (ev->parsed()) {
      const Checkpoint ck = load_checkpoint(checkpoint_dir);
      const Dataset data = load_dataset(dataset_path);
      if (data.meta.value("config_hash", "") != ck.info.value("dataset_hash", ""))
        err << "warning: dataset " << dataset_path << " differs from the one the checkpoint was trained on\n";
      SequenceBatch batch;
      if (split == "test") {
        batch = data.test;
      } else {
        auto [tr, va] = split_validation(data.train, ck.config.train.val_fraction);
        batch = split == "val" ? va : tr;
      }
      MetricsReport m;
      std::visit(
          [&](const auto& model) {
            try {
              check_compatible(model, batch);
            } catch (const std::invalid_argument& e) {
              throw ConfigError(std::string("model/dataset mismatch: ") + e.what());
            }
            m = evaluate(model, batch, ck.config.train);
          },
          ck.model);
      json report = {{"split", split}, {"count", batch.count}, {"metrics", metrics_json(m)}};
      detail::print_metrics(out, split, m);
      out << report.dump() << "\n";
      if (!out_dir.empty()) detail::write_file(out_dir, report.dump(2) + "\n");
      return kExitOk;
    }

    if (gc->parsed()) {
      const auto k = parse_cell_kind(kind);
      if (!k) throw ConfigError("unknown cell kind: " + kind);
      GradCheckSizes gs;
      if (!sizes.empty()) {
        const auto parts = detail::split_list(sizes);
        if (parts.size() != 4) throw ConfigError("--sizes expects d_s,d_m,steps,d_o");
        std::size_t* fields[4] = {&gs.d_s, &gs.d_m, &gs.steps, &gs.d_o};
        for (int i = 0; i < 4; ++i) {
          const double v = detail::parse_number(parts[static_cast<std::size_t>(i)], "--sizes");
          if (v < 1 || v != std::floor(v)) throw ConfigError("--sizes entries must be positive integers");
          *fields[i] = static_cast<std::size_t>(v);
        }
      }
      GradCheckOptions go;
      go.corrupt_backward = corrupt;
      const GradCheckReport rep = grad_check(*k, gs, seed_value, go);
      const bool ok = grad_check_passed(rep);
      const auto thr = grad_check_threshold(*k);
      out << "gradcheck " << to_string(rep.kind) << ": params=" << rep.n_params
          << " max_rel_err=" << format_number(rep.max_rel_err) << " worst=" << rep.worst_parameter
          << " threshold=" << (thr ? format_number(*thr) : std::string("none")) << " redraws=" << rep.redraws;
      if (!rep.note.empty()) out << " note=\"" << rep.note << "\"";
      out << " -> " << (ok ? "PASS" : "FAIL") << "\n";
      return ok ? kExitOk : kExitGradCheckFailed;
    }

    if (sw->parsed()) {
      const std::string text = detail::read_config_text(config_path);
      const json base = detail::effective_config(text, opt_seed(sw_seed), opt_epochs(sw_epochs));
      const RunConfig base_cfg = parse_run_config(base);
      const std::string ds = dataset_path.empty() ? base_cfg.dataset : dataset_path;
      if (ds.empty()) throw ConfigError("sweep: no dataset given (config.dataset or --dataset)");
      const auto vals = detail::split_list(values);
      if (vals.empty()) throw ConfigError("sweep: no values");
      // validate every value before any run starts
      for (const auto& v : vals) {
        json c = base;
        detail::apply_sweep_value(c, axis, v);
        parse_run_config(c);
      }
      const Dataset data = load_dataset(ds);
      prepare_output_dir(out_dir, force);
      detail::write_file(fs::path(out_dir) / "config.json", text);
      std::ofstream runs(fs::path(out_dir) / "runs.csv", std::ios::trunc);
      runs << "axis,value,seed,divergent,best_epoch,rmse,auc,accuracy\n";
      std::string table = detail::sweep_csv_header();
      for (const auto& v : vals) {
        json c = base;
        const auto bin = detail::apply_sweep_value(c, axis, v);
        Dataset d = data;
        if (bin) {
          d.train = rebin(data.train, *bin);
          d.test = rebin(data.test, *bin);
        }
        std::vector<double> rmse, auc_v, acc;
        std::size_t divergent = 0;
        for (std::size_t r = 0; r < repeats; ++r) {
          json cr = c;
          cr["seed"] = base_cfg.seed + r;
          const RunConfig rc = parse_run_config(cr);
          const auto res = detail::train_on_dataset(cr, rc, d, threads, nullptr, nullptr);
          runs << axis << ',' << v << ',' << rc.seed << ',' << (res.divergent ? 1 : 0) << ',' << res.best_epoch << ','
               << format_number(res.test.rmse) << ',' << format_number(res.test.auc) << ','
               << format_number(res.test.accuracy) << '\n';
          runs.flush();
          if (res.divergent) {
            ++divergent;
            continue;
          }
          rmse.push_back(res.test.rmse);
          auc_v.push_back(res.test.auc);
          acc.push_back(res.test.accuracy);
        }
        const auto sr = detail::summarize(rmse), sa = detail::summarize(auc_v), sc = detail::summarize(acc);
        std::ostringstream row;
        row << axis << ',' << v << ',' << repeats << ',' << divergent << ',' << format_number(sr.mean) << ','
            << format_number(sr.sd) << ',' << format_number(sa.mean) << ',' << format_number(sa.sd) << ','
            << format_number(sc.mean) << ',' << format_number(sc.sd) << '\n';
        table += row.str();
      }
      detail::write_file(fs::path(out_dir) / "sweep.csv", table);
      out << table;
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitConfigError;
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace elm
