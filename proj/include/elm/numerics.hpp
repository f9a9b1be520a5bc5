#pragma once

// Dense row-major kernel, elementary functions and a reproducible RNG.
// Everything runs in double precision; shape mismatches throw.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace elm {

using Vector = std::vector<double>;

/// Raised when a forward or backward pass produces NaN/Inf.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::size_t sequence, std::size_t step)
      : std::runtime_error(what + " (sequence " + std::to_string(sequence) + ", step " +
                           std::to_string(step) + ")"),
        sequence_(sequence),
        step_(step) {}

  std::size_t sequence() const { return sequence_; }
  std::size_t step() const { return step_; }

 private:
  std::size_t sequence_;
  std::size_t step_;
};

namespace detail {

inline void require(bool ok, std::string_view msg) {
  if (!ok) throw std::invalid_argument(std::string(msg));
}

inline void require_size(std::size_t got, std::size_t want, std::string_view what) {
  if (got != want) {
    std::ostringstream os;
    os << what << ": expected length " << want << ", got " << got;
    throw std::invalid_argument(os.str());
  }
}

}  // namespace detail

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    detail::require_size(data_.size(), rows * cols, "Matrix data");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

inline Vector matvec(const Matrix& m, std::span<const double> v) {
  detail::require_size(v.size(), m.cols(), "matvec operand");
  Vector out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * v[c];
    out[r] = acc;
  }
  return out;
}

/// out += m * v
inline void matvec_add(const Matrix& m, std::span<const double> v, std::span<double> out) {
  detail::require_size(v.size(), m.cols(), "matvec_add operand");
  detail::require_size(out.size(), m.rows(), "matvec_add output");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * v[c];
    out[r] += acc;
  }
}

/// out += m^T * v
inline void matvec_transposed_add(const Matrix& m, std::span<const double> v, std::span<double> out) {
  detail::require_size(v.size(), m.rows(), "matvec_transposed_add operand");
  detail::require_size(out.size(), m.cols(), "matvec_transposed_add output");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double vr = v[r];
    if (vr == 0.0) continue;
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] * vr;
  }
}

/// m += a * b^T
inline void add_outer(Matrix& m, std::span<const double> a, std::span<const double> b) {
  detail::require_size(a.size(), m.rows(), "add_outer left");
  detail::require_size(b.size(), m.cols(), "add_outer right");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += ar * b[c];
  }
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  detail::require_size(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(sigmoid(x)) without overflow.
inline double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

/// Per-step retention exp(-dt/tau) of a leaky variable with timescale tau.
inline double decay_factor(double tau, double dt) {
  if (!(tau > 0.0)) throw std::invalid_argument("decay_factor: tau must be > 0");
  if (!(dt >= 0.0)) throw std::invalid_argument("decay_factor: dt must be >= 0");
  return std::exp(-dt / tau);
}

// ---------------------------------------------------------------------------
// RNG

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// xoshiro256** seeded through splitmix64. All derived distributions are
/// implemented here (not via <random>) so streams match across standard
/// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  std::uint64_t seed() const { return seed_; }

  /// Independent named stream derived from this generator's seed (not its state).
  Rng substream(std::string_view name) const {
    std::uint64_t mix = seed_ ^ fnv1a64(name);
    return Rng(splitmix64(mix));
  }
  Rng substream(std::string_view name, std::uint64_t index) const {
    std::uint64_t mix = seed_ ^ fnv1a64(name);
    mix = splitmix64(mix) ^ (index * 0xD1B54A32D192ED03ULL);
    return Rng(splitmix64(mix));
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    detail::require(n > 0, "Rng::index: empty range");
    const unsigned __int128 prod = static_cast<unsigned __int128>(next()) * n;
    return static_cast<std::size_t>(prod >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Poisson draw. Knuth's product method for small means, rounded normal
  /// approximation above 30 (only reached by unusually dense rasters).
  std::int64_t poisson(double mean) {
    detail::require(mean >= 0.0, "Rng::poisson: negative mean");
    if (mean == 0.0) return 0;
    if (mean > 30.0) {
      const double x = std::round(mean + std::sqrt(mean) * normal());
      return x < 0.0 ? 0 : static_cast<std::int64_t>(x);
    }
    const double limit = std::exp(-mean);
    std::int64_t k = 0;
    double p = uniform();
    while (p > limit) {
      ++k;
      p *= uniform();
    }
    return k;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t seed_;
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Entries i.i.d. uniform on [-b, b], b = sqrt(6 / fan_in). Shape fan_out x fan_in.
inline Matrix kaiming_uniform_init(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  detail::require(fan_in >= 1 && fan_out >= 1, "kaiming_uniform_init: fan_in and fan_out must be >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Matrix m(fan_out, fan_in);
  for (auto& x : m.values()) x = rng.uniform(-bound, bound);
  return m;
}

/// Bias vector with the PyTorch-style bound 1/sqrt(fan_in).
inline Vector uniform_bias_init(Rng& rng, std::size_t fan_in, std::size_t n) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Vector b(n);
  for (auto& x : b) x = rng.uniform(-bound, bound);
  return b;
}

}  // namespace elm
