#pragma once

// On-disk formats: dataset directories (meta.json + inputs.bin +
// targets.bin), checkpoints (ckpt.json + params.bin) and metrics.csv.
// Binary payloads are little-endian IEEE-754 regardless of host order.

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "elm/cells.hpp"
#include "elm/config.hpp"
#include "elm/tasks.hpp"
#include "elm/training.hpp"

namespace elm {

namespace fs = std::filesystem;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Little-endian primitives

namespace detail {

template <typename U>
void put_le(std::string& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace detail

inline std::string encode_f32(std::span<const double> v) {
  std::string out;
  out.reserve(v.size() * 4);
  for (double x : v) detail::put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  return out;
}

inline std::string encode_f64(std::span<const double> v) {
  std::string out;
  out.reserve(v.size() * 8);
  for (double x : v) detail::put_le(out, std::bit_cast<std::uint64_t>(x));
  return out;
}

inline std::string encode_i32(std::span<const int> v) {
  std::string out;
  out.reserve(v.size() * 4);
  for (int x : v) detail::put_le(out, static_cast<std::uint32_t>(x));
  return out;
}

inline Vector decode_f32(const std::string& bytes) {
  if (bytes.size() % 4 != 0) throw IoError("float32 payload size is not a multiple of 4");
  Vector v(bytes.size() / 4);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(p + 4 * i));
  return v;
}

inline Vector decode_f64(const std::string& bytes) {
  if (bytes.size() % 8 != 0) throw IoError("float64 payload size is not a multiple of 8");
  Vector v(bytes.size() / 8);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(p + 8 * i));
  return v;
}

inline std::vector<int> decode_i32(const std::string& bytes) {
  if (bytes.size() % 4 != 0) throw IoError("int32 payload size is not a multiple of 4");
  std::vector<int> v(bytes.size() / 4);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<int>(detail::get_le<std::uint32_t>(p + 4 * i));
  return v;
}

/// Refuses to reuse a non-empty directory unless `force`; creates it otherwise.
inline void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw ConfigError(dir.string() + " exists and is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

// ---------------------------------------------------------------------------
// Datasets

inline constexpr int kDatasetSchemaVersion = 1;

struct Dataset {
  SequenceBatch train;
  SequenceBatch test;
  json meta;
};

inline json teacher_stats(const TeacherTrace& tr) {
  double spikes = 0.0, in_spikes = 0.0;
  for (double s : tr.spikes) spikes += s;
  in_spikes = static_cast<double>(tr.raster.total_abs());
  const double seconds = static_cast<double>(tr.raster.steps) * tr.raster.dt / 1000.0;
  return {{"output_rate_hz", spikes / seconds},
          {"input_rate_hz", in_spikes / seconds / static_cast<double>(tr.raster.channels)},
          {"clipped_bins", tr.clipped}};
}

inline json class_histogram(const SequenceBatch& b) {
  std::vector<std::size_t> h(static_cast<std::size_t>(b.n_classes), 0);
  for (int l : b.labels) ++h[static_cast<std::size_t>(l)];
  return h;
}

/// Generates train and test splits of a task. `task_json` is the task
/// section as written in the config; its digest identifies the dataset.
inline Dataset generate_dataset(const TaskSpec& task, const json& task_json, std::uint64_t seed) {
  const Rng master(seed);
  Dataset d;
  json stats;
  std::string kind;
  switch (task.kind) {
    case TaskKind::teacher: {
      kind = "teacher";
      TeacherConfig tc = task.teacher;
      const auto window = static_cast<std::size_t>(std::llround(task.sequence_ms / tc.dt));
      tc.duration_ms = task.train_ms;
      const TeacherTrace tr = gen_teacher_io(tc, master.substream("train").next());
      tc.duration_ms = task.test_ms;
      const TeacherTrace te = gen_teacher_io(tc, master.substream("test").next());
      d.train = teacher_batch(tr, window);
      d.test = teacher_batch(te, window);
      stats = {{"train", teacher_stats(tr)}, {"test", teacher_stats(te)}};
      break;
    }
    case TaskKind::adding:
      kind = "adding";
      d.train = gen_adding_batch(task.adding, task.train_count, master.substream("train").next());
      d.test = gen_adding_batch(task.adding, task.test_count, master.substream("test").next());
      stats = {{"train_class_histogram", class_histogram(d.train)}, {"test_class_histogram", class_histogram(d.test)}};
      break;
    case TaskKind::delayed_recall:
      kind = "delayed_recall";
      d.train = gen_delayed_recall(task.recall, task.train_count, master.substream("train").next());
      d.test = gen_delayed_recall(task.recall, task.test_count, master.substream("test").next());
      stats = {{"train_class_histogram", class_histogram(d.train)}, {"test_class_histogram", class_histogram(d.test)}};
      break;
  }
  const SequenceBatch& b = d.train;
  d.meta = {
      {"schema_version", kDatasetSchemaVersion},
      {"kind", kind},
      {"seed", seed},
      {"channels", b.channels},
      {"steps", b.steps},
      {"dt", b.dt},
      {"n_classes", b.n_classes},
      {"splits", {{"train", {{"first", 0}, {"count", d.train.count}}}, {"test", {{"first", d.train.count}, {"count", d.test.count}}}}},
      {"inputs", {{"file", "inputs.bin"}, {"dtype", "float32"}, {"endianness", "little"}, {"layout", "[N, T, C]"}}},
      {"targets",
       b.layout == TargetLayout::per_step_pairs
           ? json{{"file", "targets.bin"}, {"dtype", "float32"}, {"endianness", "little"}, {"layout", "per_step_pairs"}, {"shape", "[N, T, 2]"}, {"columns", {"voltage", "spike"}}}
           : json{{"file", "targets.bin"}, {"dtype", "int32"}, {"endianness", "little"}, {"layout", "class_index"}, {"shape", "[N]"}}},
      {"generator", task_json},
      {"config_hash", hex64(json_hash(task_json))},
      {"stats", stats},
  };
  return d;
}

inline void save_dataset(const fs::path& dir, const Dataset& d) {
  Vector inputs = d.train.inputs;
  inputs.insert(inputs.end(), d.test.inputs.begin(), d.test.inputs.end());
  detail::write_file(dir / "inputs.bin", encode_f32(inputs));
  if (d.train.layout == TargetLayout::per_step_pairs) {
    Vector t = d.train.step_targets;
    t.insert(t.end(), d.test.step_targets.begin(), d.test.step_targets.end());
    detail::write_file(dir / "targets.bin", encode_f32(t));
  } else {
    std::vector<int> t = d.train.labels;
    t.insert(t.end(), d.test.labels.begin(), d.test.labels.end());
    detail::write_file(dir / "targets.bin", encode_i32(t));
  }
  detail::write_file(dir / "meta.json", d.meta.dump(2) + "\n");
}

inline Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  try {
    d.meta = json::parse(detail::read_file(dir / "meta.json"));
  } catch (const json::parse_error& e) {
    throw IoError(std::string("meta.json: ") + e.what());
  }
  try {
    if (d.meta.at("schema_version").get<int>() != kDatasetSchemaVersion) throw IoError("unsupported dataset schema version");
    SequenceBatch proto;
    proto.channels = d.meta.at("channels").get<std::size_t>();
    proto.steps = d.meta.at("steps").get<std::size_t>();
    proto.dt = d.meta.at("dt").get<double>();
    proto.n_classes = d.meta.at("n_classes").get<int>();
    const auto layout = d.meta.at("targets").at("layout").get<std::string>();
    proto.layout = layout == "per_step_pairs" ? TargetLayout::per_step_pairs : TargetLayout::class_index;
    const std::size_t n_train = d.meta.at("splits").at("train").at("count").get<std::size_t>();
    const std::size_t n_test = d.meta.at("splits").at("test").at("count").get<std::size_t>();
    const std::size_t n = n_train + n_test;

    SequenceBatch all = proto;
    all.count = n;
    all.inputs = decode_f32(detail::read_file(dir / "inputs.bin"));
    if (all.inputs.size() != n * proto.steps * proto.channels) throw IoError("inputs.bin size disagrees with meta.json");
    const std::string targets = detail::read_file(dir / "targets.bin");
    if (proto.layout == TargetLayout::per_step_pairs) {
      all.step_targets = decode_f32(targets);
      if (all.step_targets.size() != n * proto.steps * 2) throw IoError("targets.bin size disagrees with meta.json");
    } else {
      all.labels = decode_i32(targets);
      if (all.labels.size() != n) throw IoError("targets.bin size disagrees with meta.json");
    }
    all.validate();
    d.train = slice(all, 0, n_train);
    d.test = slice(all, n_train, n_test);
  } catch (const json::exception& e) {
    throw IoError(std::string("meta.json: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("dataset: ") + e.what());
  }
  return d;
}

// ---------------------------------------------------------------------------
// Models

using AnyModel = std::variant<ElmParams, LstmParams, SnnParams>;

/// Builds a freshly initialised model for a dataset geometry. Everything
/// non-trainable (e.g. SNN connectivity) is a function of (spec, seed).
inline AnyModel make_model(const ModelSpec& spec, std::size_t channels, std::size_t outputs, std::uint64_t seed) {
  Rng rng = Rng(seed).substream("init");
  switch (spec.kind) {
    case ModelKind::elm:
    case ModelKind::branch_elm: {
      ElmConfig c = spec.elm;
      c.d_s = channels;
      c.d_o = outputs;
      if (spec.kind == ModelKind::branch_elm) c.branch = std::make_pair(spec.d_tree, spec.d_brch);
      return make_elm(c, rng);
    }
    case ModelKind::lstm: {
      std::optional<double> chrono;
      if (spec.chrono_t_max > 0.0) chrono = spec.chrono_t_max;
      return make_lstm(channels, spec.lstm_hidden, outputs, rng, chrono);
    }
    case ModelKind::snn: {
      SnnConfig c = spec.snn;
      c.n_in = channels;
      c.n_out = outputs;
      return make_snn(c, rng);
    }
  }
  throw ConfigError("unknown model kind");
}

inline std::size_t dataset_outputs(const SequenceBatch& b) {
  return b.layout == TargetLayout::per_step_pairs ? 2 : static_cast<std::size_t>(b.n_classes);
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointFormatVersion = 1;

/// Writes params.bin (named sections, float64 LE) and ckpt.json. `info`
/// carries the run description; the section table is added here.
template <typename P>
void save_checkpoint(const fs::path& dir, const P& model, json info) {
  std::string bytes;
  json sections = json::array();
  std::size_t offset = 0;
  const_cast<P&>(model).for_each_trainable([&](std::string_view name, std::span<double> v) {
    bytes += encode_f64(v);
    sections.push_back({{"name", std::string(name)}, {"offset", offset}, {"count", v.size()}});
    offset += v.size();
  });
  info["format_version"] = kCheckpointFormatVersion;
  info["params_file"] = "params.bin";
  info["sections"] = sections;
  info["n_params"] = offset;
  detail::write_file(dir / "params.bin", bytes);
  detail::write_file(dir / "ckpt.json", info.dump(2) + "\n");
}

struct Checkpoint {
  json info;
  AnyModel model;
  RunConfig config;
};

inline Checkpoint load_checkpoint(const fs::path& dir) {
  Checkpoint c;
  try {
    c.info = json::parse(detail::read_file(dir / "ckpt.json"));
    if (c.info.at("format_version").get<int>() != kCheckpointFormatVersion) throw IoError("unsupported checkpoint format");
    c.config = parse_run_config(c.info.at("config"));
    if (!c.config.model) throw IoError("checkpoint config has no model section");
    const auto channels = c.info.at("shapes").at("inputs").get<std::size_t>();
    const auto outputs = c.info.at("shapes").at("outputs").get<std::size_t>();
    c.model = make_model(*c.config.model, channels, outputs, c.config.seed);
    const Vector flat = decode_f64(detail::read_file(dir / "params.bin"));
    const json& sections = c.info.at("sections");
    std::visit(
        [&](auto& m) {
          std::size_t k = 0;
          m.for_each_trainable([&](std::string_view name, std::span<double> v) {
            if (k >= sections.size()) throw IoError("checkpoint is missing section " + std::string(name));
            const json& s = sections[k++];
            const auto off = s.at("offset").get<std::size_t>();
            const auto count = s.at("count").get<std::size_t>();
            if (s.at("name").get<std::string>() != name || count != v.size() || off + count > flat.size())
              throw IoError("checkpoint section mismatch at " + std::string(name));
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                      flat.begin() + static_cast<std::ptrdiff_t>(off + count), v.begin());
          });
          if (k != sections.size()) throw IoError("checkpoint has extra sections");
        },
        c.model);
  } catch (const json::exception& e) {
    throw IoError(std::string("ckpt.json: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Metrics

/// Shortest round-trip text for a double; NaN (not applicable) is empty.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline json metrics_json(const MetricsReport& m) {
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  json j = {{"loss", num(m.loss)}, {"rmse", num(m.rmse)}, {"auc", num(m.auc)}, {"accuracy", num(m.accuracy)}};
  json t = json::object();
  for (const auto& [f, r] : m.tpr_at_fpr) t[format_number(f)] = r;
  j["tpr_at_fpr"] = t;
  return j;
}

inline std::string metrics_csv_header() { return "epoch,split,loss,rmse,auc,accuracy,lr\n"; }

inline std::string metrics_csv_line(const MetricsRow& r) {
  std::ostringstream os;
  os << r.epoch << ',' << r.split << ',' << format_number(r.metrics.loss) << ',' << format_number(r.metrics.rmse)
     << ',' << format_number(r.metrics.auc) << ',' << format_number(r.metrics.accuracy) << ','
     << format_number(r.lr) << '\n';
  return os.str();
}

}  // namespace elm
