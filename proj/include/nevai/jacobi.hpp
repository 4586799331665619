#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nevai/error.hpp"

namespace nevai {

struct Coeff {
  double a;
  double b;
};

// First `size()` recurrence coefficients, flat, for the inner loops.
struct CoeffTable {
  std::vector<double> a;
  std::vector<double> b;
  std::size_t size() const { return a.size(); }
};

// Source of Jacobi parameters: either a closed-form supplier or a finite table.
// Immutable after construction; copies share the table.
class JacobiParameters {
 public:
  using Supplier = std::function<Coeff(std::size_t)>;

  JacobiParameters() = default;

  static JacobiParameters closed_form(std::string label, Supplier supplier) {
    JacobiParameters p;
    p.label_ = std::move(label);
    p.supplier_ = std::move(supplier);
    return p;
  }

  static JacobiParameters table(std::string label, std::vector<double> a, std::vector<double> b) {
    if (a.size() != b.size()) throw ValidationError("coefficient table: a and b differ in length");
    if (a.empty()) throw ValidationError("coefficient table: empty");
    for (std::size_t n = 0; n < a.size(); ++n) {
      if (!(a[n] > 0.0) || !std::isfinite(a[n]))
        throw ValidationError("coefficient table: a_" + std::to_string(n) + " is not positive and finite");
      if (!std::isfinite(b[n])) throw ValidationError("coefficient table: b_" + std::to_string(n) + " is not finite");
    }
    JacobiParameters p;
    p.label_ = std::move(label);
    p.a_ = std::make_shared<const std::vector<double>>(std::move(a));
    p.b_ = std::make_shared<const std::vector<double>>(std::move(b));
    return p;
  }

  const std::string& label() const { return label_; }

  // Largest valid index for table-backed parameters; empty for closed forms.
  std::optional<std::size_t> max_index() const {
    if (a_) return a_->size() - 1;
    return std::nullopt;
  }

  Coeff at(std::size_t n) const {
    if (a_) {
      if (n >= a_->size()) throw resolution_error(n);
      return {(*a_)[n], (*b_)[n]};
    }
    if (!supplier_) throw ValidationError("empty Jacobi parameters");
    Coeff c = supplier_(n);
    if (!(c.a > 0.0) || !std::isfinite(c.a) || !std::isfinite(c.b))
      throw ValidationError(label_ + ": invalid coefficient at n=" + std::to_string(n));
    return c;
  }

  double a(std::size_t n) const { return at(n).a; }
  double b(std::size_t n) const { return at(n).b; }

  // Coefficients with indices 0..count-1.
  CoeffTable prefix(std::size_t count) const {
    CoeffTable t;
    if (count == 0) return t;
    if (a_) {
      if (count > a_->size()) throw resolution_error(count - 1);
      t.a.assign(a_->begin(), a_->begin() + static_cast<std::ptrdiff_t>(count));
      t.b.assign(b_->begin(), b_->begin() + static_cast<std::ptrdiff_t>(count));
      return t;
    }
    t.a.resize(count);
    t.b.resize(count);
    for (std::size_t n = 0; n < count; ++n) {
      Coeff c = at(n);
      t.a[n] = c.a;
      t.b[n] = c.b;
    }
    return t;
  }

 private:
  ResolutionError resolution_error(std::size_t n) const {
    std::size_t max = a_->size() - 1;
    return ResolutionError(label_ + ": insufficient resolution for index " + std::to_string(n) +
                               " (max safe index " + std::to_string(max) + ")",
                           max);
  }

  std::string label_;
  Supplier supplier_;
  std::shared_ptr<const std::vector<double>> a_;
  std::shared_ptr<const std::vector<double>> b_;
};

// ---------------------------------------------------------------------------
// Scaled evaluation

inline constexpr int kRescaleExponent = 512;
inline constexpr double kRescaleBound = 0x1p512;

// (p_{n-1}(x), p_n(x)) = (u, v) * 2^exponent.
struct ScaledPair {
  double u = 0.0;
  double v = 1.0;
  long exponent = 0;

  double log_scale() const { return static_cast<double>(exponent) * std::numbers::ln2; }
  double prev() const { return std::ldexp(u, static_cast<int>(std::clamp(exponent, -4000L, 4000L))); }
  double curr() const { return std::ldexp(v, static_cast<int>(std::clamp(exponent, -4000L, 4000L))); }
};

namespace detail {

// Moves max(|u|,|v|) into [1, 2) once it leaves [2^-512, 2^512).
inline void rescale(double& u, double& v, long& exponent) {
  double m = std::max(std::abs(u), std::abs(v));
  if (m < kRescaleBound && m >= 1.0 / kRescaleBound) return;
  if (!(m > 0.0) || !std::isfinite(m))
    throw std::logic_error("recurrence state degenerated (consecutive values both zero or non-finite)");
  int k = 0;
  std::frexp(m, &k);
  u = std::ldexp(u, 1 - k);
  v = std::ldexp(v, 1 - k);
  exponent += k - 1;
}

}  // namespace detail

// Walks the recurrence upward one degree at a time.
// state() holds (p_{k-1}, p_k) with k = degree(); starts at k = 0 with p_{-1} = 0.
class RecurrenceWalker {
 public:
  RecurrenceWalker(const CoeffTable& c, double x) : c_(&c), x_(x) {}

  std::size_t degree() const { return k_; }
  const ScaledPair& state() const { return s_; }

  // Needs a_k, b_k (and a_{k-1}).
  void advance() {
    const double ak = c_->a[k_];
    const double bk = c_->b[k_];
    double next = (x_ - bk) * s_.v;
    if (k_ > 0) next -= c_->a[k_ - 1] * s_.u;
    next /= ak;
    s_.u = s_.v;
    s_.v = next;
    detail::rescale(s_.u, s_.v, s_.exponent);
    ++k_;
  }

 private:
  const CoeffTable* c_;
  double x_;
  std::size_t k_ = 0;
  ScaledPair s_{};
};

inline ScaledPair eval_pair(const CoeffTable& c, std::size_t n, double x) {
  if (n < 1) throw ValidationError("eval_pair: n must be >= 1");
  if (c.size() < n) throw ValidationError("eval_pair: coefficient table too short");
  RecurrenceWalker w(c, x);
  while (w.degree() < n) w.advance();
  return w.state();
}

inline ScaledPair eval_pair(const JacobiParameters& params, std::size_t n, double x) {
  if (n < 1) throw ValidationError("eval_pair: n must be >= 1");
  return eval_pair(params.prefix(n), n, x);
}

// Sum of terms m * 2^e, kept as mantissa and exponent.
class ScaledAccumulator {
 public:
  void add(double m, long e) {
    if (m == 0.0) return;
    if (sum_ == 0.0) {
      sum_ = m;
      exp_ = e;
    } else if (e == exp_) {
      sum_ += m;
    } else if (e > exp_) {
      sum_ = std::ldexp(sum_, static_cast<int>(std::max(exp_ - e, -2000L))) + m;
      exp_ = e;
    } else {
      sum_ += std::ldexp(m, static_cast<int>(std::max(e - exp_, -2000L)));
    }
    if (std::abs(sum_) >= kRescaleBound) {
      int k = 0;
      std::frexp(sum_, &k);
      sum_ = std::ldexp(sum_, -k);
      exp_ += k;
    }
  }
  double mantissa() const { return sum_; }
  long exponent() const { return exp_; }
  double value() const { return std::ldexp(sum_, static_cast<int>(std::clamp(exp_, -4000L, 4000L))); }
  // log|sum|; -inf for an empty sum.
  double log_abs() const {
    if (sum_ == 0.0) return -INFINITY;
    return std::log(std::abs(sum_)) + static_cast<double>(exp_) * std::numbers::ln2;
  }

 private:
  double sum_ = 0.0;
  long exp_ = 0;
};

// ---------------------------------------------------------------------------
// 2x2 matrices

struct Mat2 {
  double m11 = 0.0, m12 = 0.0, m21 = 0.0, m22 = 0.0;

  static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  double trace() const { return m11 + m22; }
  double det() const { return m11 * m22 - m12 * m21; }
  double discr() const {
    double t = trace();
    return t * t - 4.0 * det();
  }
  double max_abs() const {
    return std::max({std::abs(m11), std::abs(m12), std::abs(m21), std::abs(m22)});
  }
  friend Mat2 operator*(const Mat2& p, const Mat2& q) {
    return {p.m11 * q.m11 + p.m12 * q.m21, p.m11 * q.m12 + p.m12 * q.m22,
            p.m21 * q.m11 + p.m22 * q.m21, p.m21 * q.m12 + p.m22 * q.m22};
  }
  friend Mat2 operator+(const Mat2& p, const Mat2& q) {
    return {p.m11 + q.m11, p.m12 + q.m12, p.m21 + q.m21, p.m22 + q.m22};
  }
  friend Mat2 operator-(const Mat2& p, const Mat2& q) {
    return {p.m11 - q.m11, p.m12 - q.m12, p.m21 - q.m21, p.m22 - q.m22};
  }
  friend Mat2 operator*(double s, const Mat2& p) { return {s * p.m11, s * p.m12, s * p.m21, s * p.m22}; }
};

// One-step transfer matrix [[0,1],[-a_{n-1}/a_n, (x-b_n)/a_n]].
inline Mat2 transfer_matrix(const JacobiParameters& params, std::size_t n, double x) {
  if (n < 1) throw ValidationError("transfer_matrix: n must be >= 1");
  const double prev = params.a(n - 1);
  const Coeff c = params.at(n);
  return {0.0, 1.0, -prev / c.a, (x - c.b) / c.a};
}

// Applies M to (u, v) and rescales; used to push scaled pairs through transfer products.
inline ScaledPair apply(const Mat2& m, ScaledPair s) {
  double u = m.m11 * s.u + m.m12 * s.v;
  double v = m.m21 * s.u + m.m22 * s.v;
  s.u = u;
  s.v = v;
  detail::rescale(s.u, s.v, s.exponent);
  return s;
}

// ---------------------------------------------------------------------------
// Periodic profiles

class PeriodicProfile {
 public:
  PeriodicProfile(std::vector<double> alpha, std::vector<double> beta)
      : alpha_(std::move(alpha)), beta_(std::move(beta)) {
    if (alpha_.empty()) throw ValidationError("periodic profile: period must be >= 1");
    if (alpha_.size() != beta_.size()) throw ValidationError("periodic profile: alpha and beta differ in length");
    for (std::size_t i = 0; i < alpha_.size(); ++i) {
      if (!(alpha_[i] > 0.0) || !std::isfinite(alpha_[i]))
        throw ValidationError("periodic profile: alpha_" + std::to_string(i) + " must be positive");
      if (!std::isfinite(beta_[i])) throw ValidationError("periodic profile: beta_" + std::to_string(i) + " not finite");
    }
  }

  std::size_t period() const { return alpha_.size(); }
  double alpha(long n) const { return alpha_[wrap(n)]; }
  double beta(long n) const { return beta_[wrap(n)]; }
  const std::vector<double>& alphas() const { return alpha_; }
  const std::vector<double>& betas() const { return beta_; }

  // Same profile under a rescaled normalizing sequence: both limits scale together.
  PeriodicProfile scaled(double c) const {
    std::vector<double> a = alpha_, b = beta_;
    for (double& v : a) v *= c;
    for (double& v : b) v *= c;
    return {a, b};
  }

 private:
  std::size_t wrap(long n) const {
    long N = static_cast<long>(alpha_.size());
    long r = n % N;
    return static_cast<std::size_t>(r < 0 ? r + N : r);
  }
  std::vector<double> alpha_;
  std::vector<double> beta_;
};

// [[0,1],[-alpha_{n-1}/alpha_n, (x-beta_n)/alpha_n]]
inline Mat2 profile_step(const PeriodicProfile& p, long n, double x) {
  const double an = p.alpha(n);
  return {0.0, 1.0, -p.alpha(n - 1) / an, (x - p.beta(n)) / an};
}

inline Mat2 profile_step_derivative(const PeriodicProfile& p, long n) { return {0.0, 0.0, 0.0, 1.0 / p.alpha(n)}; }

struct PeriodicTransfer {
  Mat2 value;
  std::optional<Mat2> derivative;
};

// Product of steps first..last-1 applied right to left: step(last-1) ... step(first).
inline PeriodicTransfer step_product(const PeriodicProfile& p, long first, long last, double x, bool with_derivative) {
  Mat2 v = Mat2::identity();
  Mat2 d{};
  for (long n = first; n < last; ++n) {
    const Mat2 s = profile_step(p, n, x);
    if (with_derivative) d = s * d + profile_step_derivative(p, n) * v;
    v = s * v;
  }
  PeriodicTransfer out{v, std::nullopt};
  if (with_derivative) out.derivative = d;
  return out;
}

// X_i(x) = B_{N+i-1}(x) ... B_i(x), optionally with its x-derivative.
inline PeriodicTransfer periodic_transfer(const PeriodicProfile& p, std::size_t i, double x, bool with_derivative) {
  const long N = static_cast<long>(p.period());
  if (static_cast<long>(i) >= N) throw ValidationError("periodic_transfer: i must be < N");
  return step_product(p, static_cast<long>(i), static_cast<long>(i) + N, x, with_derivative);
}

// ---------------------------------------------------------------------------
// Regularity diagnostics

// sums[j-1] = sum_n |Delta^j x_n|^(r/j) over the finite sequence, j = 1..r.
inline std::vector<double> difference_sums(std::span<const double> x, std::size_t r) {
  std::vector<double> sums(r, 0.0);
  std::vector<double> diff(x.begin(), x.end());
  for (std::size_t j = 1; j <= r; ++j) {
    if (diff.size() < 2) break;
    for (std::size_t n = 0; n + 1 < diff.size(); ++n) diff[n] = diff[n + 1] - diff[n];
    diff.pop_back();
    double s = 0.0;
    const double power = static_cast<double>(r) / static_cast<double>(j);
    for (double d : diff) s += std::pow(std::abs(d), power);
    sums[j - 1] = s;
  }
  return sums;
}

struct SequenceDiagnostic {
  std::string sequence;  // "a_prev/a", "b/a" or "1/a"
  std::size_t residue;
  std::vector<double> sums;  // index j-1
};

struct RegularityReport {
  std::size_t r = 0;
  std::size_t period = 0;
  std::size_t n_max = 0;
  std::vector<SequenceDiagnostic> sequences;
  std::vector<std::pair<std::size_t, double>> carleman;  // (n, sum_{k<=n} 1/a_k) at doubling checkpoints
  bool carleman_increasing = true;
};

inline RegularityReport regularity_diagnostics(const JacobiParameters& params, std::size_t r, std::size_t N,
                                               std::size_t n_max) {
  if (r < 1) throw ValidationError("regularity_diagnostics: r must be >= 1");
  if (N < 1) throw ValidationError("regularity_diagnostics: N must be >= 1");
  if (n_max < r + 1) throw ValidationError("regularity_diagnostics: n_max must be >= r + 1");
  const CoeffTable c = params.prefix(n_max + 1);

  RegularityReport rep;
  rep.r = r;
  rep.period = N;
  rep.n_max = n_max;
  const char* names[3] = {"a_prev/a", "b/a", "1/a"};
  for (int s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i < N; ++i) {
      std::vector<double> seq;
      for (std::size_t n = N + i; n <= n_max; n += N) {
        if (s == 0) seq.push_back(c.a[n - 1] / c.a[n]);
        else if (s == 1) seq.push_back(c.b[n] / c.a[n]);
        else seq.push_back(1.0 / c.a[n]);
      }
      rep.sequences.push_back({names[s], i, difference_sums(seq, r)});
    }
  }

  double sum = 0.0;
  double last = -1.0;
  std::size_t checkpoint = 1;
  for (std::size_t n = 0; n <= n_max; ++n) {
    sum += 1.0 / c.a[n];
    if (n + 1 == checkpoint || n == n_max) {
      if (!(sum > last)) rep.carleman_increasing = false;
      rep.carleman.emplace_back(n, sum);
      last = sum;
      checkpoint *= 2;
    }
  }
  return rep;
}

}  // namespace nevai
