#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nevai/error.hpp"
#include "nevai/jacobi.hpp"

namespace nevai {

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double v) {
    double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) comp_ += (sum_ - t) + v;
    else comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct SymTridiag {
  std::vector<double> diag;
  std::vector<double> offdiag;  // size() - 1 entries

  std::size_t size() const { return diag.size(); }

  static SymTridiag from_jacobi(const CoeffTable& c, std::size_t M) {
    if (M < 1) throw ValidationError("Jacobi matrix size must be >= 1");
    if (c.size() < M) throw ValidationError("coefficient table shorter than matrix size");
    SymTridiag t;
    t.diag.assign(c.b.begin(), c.b.begin() + static_cast<std::ptrdiff_t>(M));
    t.offdiag.assign(c.a.begin(), c.a.begin() + static_cast<std::ptrdiff_t>(M - 1));
    return t;
  }

  // Max-row-sum norm.
  double norm() const {
    double n = 0.0;
    for (std::size_t i = 0; i < diag.size(); ++i) {
      double r = std::abs(diag[i]);
      if (i > 0) r += std::abs(offdiag[i - 1]);
      if (i + 1 < diag.size()) r += std::abs(offdiag[i]);
      n = std::max(n, r);
    }
    return n;
  }
};

struct TridiagEigen {
  std::vector<double> values;            // ascending
  std::vector<double> first_components;  // first entry of each unit eigenvector
  std::vector<double> vectors;           // column-major M x M, only when requested
};

inline constexpr int kEigenIterationCap = 50;

// Implicit-shift QL. Tracks the first row of the eigenvector matrix, or the whole
// matrix when want_vectors is set.
inline TridiagEigen eigen_tridiag(const SymTridiag& T, double tol = std::numeric_limits<double>::epsilon(),
                                  bool want_vectors = false) {
  const std::size_t M = T.size();
  if (M < 1) throw ValidationError("eigen_tridiag: empty matrix");
  if (T.offdiag.size() + 1 != M) throw ValidationError("eigen_tridiag: off-diagonal length must be M-1");
  if (!(tol > 0.0)) throw ValidationError("eigen_tridiag: tol must be positive");

  std::vector<double> d = T.diag;
  std::vector<double> e(M, 0.0);
  std::copy(T.offdiag.begin(), T.offdiag.end(), e.begin());

  const std::size_t rows = want_vectors ? M : 1;
  std::vector<double> z(rows * M, 0.0);  // z[r + rows*col]
  if (want_vectors) {
    for (std::size_t i = 0; i < M; ++i) z[i + rows * i] = 1.0;
  } else {
    z[0] = 1.0;
  }

  for (std::size_t l = 0; l < M; ++l) {
    int iter = 0;
    std::size_t m;
    do {
      for (m = l; m + 1 < M; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= tol * dd) break;
      }
      if (m != l) {
        if (iter++ == kEigenIterationCap)
          throw ConvergenceError("eigen_tridiag: no convergence for eigenvalue index " + std::to_string(l));
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        bool early = false;
        for (std::size_t ii = m; ii-- > l;) {
          double f = s * e[ii];
          const double b = c * e[ii];
          r = std::hypot(f, g);
          e[ii + 1] = r;
          if (r == 0.0) {
            d[ii + 1] -= p;
            e[m] = 0.0;
            early = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[ii + 1] - p;
          r = (d[ii] - g) * s + 2.0 * c * b;
          p = s * r;
          d[ii + 1] = g + p;
          g = c * r - b;
          for (std::size_t k = 0; k < rows; ++k) {
            f = z[k + rows * (ii + 1)];
            z[k + rows * (ii + 1)] = s * z[k + rows * ii] + c * f;
            z[k + rows * ii] = c * z[k + rows * ii] - s * f;
          }
        }
        if (early) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }

  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return d[i] < d[j]; });

  TridiagEigen out;
  out.values.resize(M);
  out.first_components.resize(M);
  if (want_vectors) out.vectors.resize(M * M);
  for (std::size_t k = 0; k < M; ++k) {
    const std::size_t src = order[k];
    out.values[k] = d[src];
    double sign = z[rows * src] < 0.0 ? -1.0 : 1.0;
    out.first_components[k] = sign * z[rows * src];
    if (want_vectors)
      for (std::size_t r = 0; r < M; ++r) out.vectors[r + M * k] = sign * z[r + rows * src];
  }
  return out;
}

// Values m[k] * 2^e[k], k = 0..size-1.
struct ScaledSequence {
  std::vector<double> m;
  std::vector<long> e;

  std::size_t size() const { return m.size(); }
  double value(std::size_t k) const { return std::ldexp(m[k], static_cast<int>(std::clamp(e[k], -4000L, 4000L))); }
};

// Where a Gauss rule came from: the leading block of the Jacobi matrix, and per node the
// first degree at which the forward recurrence stops reproducing the eigenvector there.
// Kernel code uses it to evaluate polynomials at the nodes reliably.
class GaussOrigin {
 public:
  GaussOrigin(CoeffTable c, std::size_t M, std::vector<std::size_t> forward_limit)
      : c_(std::move(c)), M_(M), limit_(std::move(forward_limit)) {}

  const CoeffTable& coeffs() const { return c_; }
  std::size_t order() const { return M_; }
  std::size_t forward_limit(std::size_t i) const { return limit_[i]; }

  // True when c agrees with the matrix on everything degree n depends on.
  bool matches(const CoeffTable& c, std::size_t n) const {
    if (n > M_ || c.size() < n) return false;
    for (std::size_t k = 0; k < n; ++k) {
      if (c.b[k] != c_.b[k]) return false;
      if (k + 1 < M_ && c.a[k] != c_.a[k]) return false;
    }
    return true;
  }

  template <class Build>
  std::shared_ptr<const std::vector<ScaledPair>> pairs(std::size_t n, Build&& build) const {
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = pairs_.find(n);
      if (it != pairs_.end()) return it->second;
    }
    auto v = std::make_shared<const std::vector<ScaledPair>>(build());
    std::lock_guard<std::mutex> lock(mu_);
    return pairs_.emplace(n, std::move(v)).first->second;
  }

 private:
  CoeffTable c_;
  std::size_t M_;
  std::vector<std::size_t> limit_;
  mutable std::mutex mu_;
  mutable std::map<std::size_t, std::shared_ptr<const std::vector<ScaledPair>>> pairs_;
};

// Quadrature nodes with positive weights. Weights are kept as logarithms as well,
// since large rules for fast-decaying weights have weights far below the double range
// at nodes that still matter once multiplied by polynomial values.
class DiscretizedMeasure {
 public:
  DiscretizedMeasure() = default;
  DiscretizedMeasure(std::vector<double> nodes, std::vector<double> weights) : nodes_(std::move(nodes)) {
    if (nodes_.size() != weights.size()) throw ValidationError("measure: nodes and weights differ in length");
    log_weights_.resize(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
        throw ValidationError("measure: weight " + std::to_string(i) + " not positive");
      log_weights_[i] = std::log(weights[i]);
    }
    weights_ = std::move(weights);
    finish();
  }

  static DiscretizedMeasure from_log_weights(std::vector<double> nodes, std::vector<double> log_weights) {
    if (nodes.size() != log_weights.size()) throw ValidationError("measure: nodes and weights differ in length");
    DiscretizedMeasure dm;
    dm.nodes_ = std::move(nodes);
    dm.weights_.resize(log_weights.size());
    for (std::size_t i = 0; i < log_weights.size(); ++i) {
      if (!std::isfinite(log_weights[i]) || log_weights[i] > 700.0)
        throw ValidationError("measure: log-weight " + std::to_string(i) + " out of range");
      dm.weights_[i] = std::exp(log_weights[i]);
    }
    dm.log_weights_ = std::move(log_weights);
    dm.finish();
    return dm;
  }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<double>& nodes() const { return nodes_; }
  // May underflow to 0 far out in the tails; log_weights() is exact.
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& log_weights() const { return log_weights_; }
  double total_mass() const { return mass_; }

  // Highest polynomial degree integrated exactly, when known (Gauss rules, atomic measures).
  std::optional<std::size_t> exact_degree() const { return exact_degree_; }
  DiscretizedMeasure with_exact_degree(std::optional<std::size_t> d) const {
    DiscretizedMeasure out = *this;
    out.exact_degree_ = d;
    return out;
  }

  // Set for Gauss rules; survives reweighting since the nodes do not move.
  const std::shared_ptr<const GaussOrigin>& origin() const { return origin_; }
  DiscretizedMeasure with_origin(std::shared_ptr<const GaussOrigin> o) const {
    DiscretizedMeasure out = *this;
    out.origin_ = std::move(o);
    return out;
  }

 private:
  void finish() {
    if (nodes_.empty()) throw ValidationError("measure: no nodes");
    CompensatedSum s;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!std::isfinite(nodes_[i])) throw ValidationError("measure: node " + std::to_string(i) + " not finite");
      if (i > 0 && !(nodes_[i] > nodes_[i - 1]))
        throw ValidationError("measure: nodes not strictly increasing at index " + std::to_string(i));
      s.add(weights_[i]);
    }
    mass_ = s.value();
    if (!(mass_ > 0.0)) throw ValidationError("measure: total mass underflows");
  }

  std::vector<double> nodes_;
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  double mass_ = 0.0;
  std::optional<std::size_t> exact_degree_;
  std::shared_ptr<const GaussOrigin> origin_;
};

// p_0..p_{M-1} at an eigenvalue lam of the M x M Jacobi matrix, i.e. its eigenvector scaled
// to a leading 1. Twisted factorization: pivots from the top and from the bottom meet where
// the eigenvector is largest, so each half is built in its stable direction. The forward
// recurrence alone follows the decaying solution badly near isolated mass points.
inline ScaledSequence twisted_polys(const CoeffTable& c, std::size_t M, double lam) {
  ScaledSequence v{std::vector<double>(M, 0.0), std::vector<long>(M, 0)};
  v.m[0] = 1.0;
  if (M == 1) return v;
  const double tiny = std::numeric_limits<double>::min() * 1e16;
  auto guard = [tiny](double d) { return std::abs(d) < tiny ? (d < 0 ? -tiny : tiny) : d; };
  std::vector<double> top(M), bot(M);
  top[0] = guard(c.b[0] - lam);
  for (std::size_t k = 1; k < M; ++k) top[k] = guard((c.b[k] - lam) - c.a[k - 1] * (c.a[k - 1] / top[k - 1]));
  bot[M - 1] = guard(c.b[M - 1] - lam);
  for (std::size_t k = M - 1; k-- > 0;) bot[k] = guard((c.b[k] - lam) - c.a[k] * (c.a[k] / bot[k + 1]));
  std::size_t r = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < M; ++k) {
    const double g = std::abs(top[k] + bot[k] - (c.b[k] - lam));
    if (g < best) {
      best = g;
      r = k;
    }
  }
  auto put = [&v](std::size_t k, double t, long base) {
    int ex = 0;
    v.m[k] = std::frexp(t, &ex);
    v.e[k] = base + ex;
  };
  v.m[r] = 1.0;
  v.e[r] = 0;
  for (std::size_t k = r; k-- > 0;) put(k, -(c.a[k] / top[k]) * v.m[k + 1], v.e[k + 1]);
  for (std::size_t k = r + 1; k < M; ++k) put(k, -(c.a[k - 1] / bot[k]) * v.m[k - 1], v.e[k - 1]);
  const double m0 = v.m[0];
  const long e0 = v.e[0];
  for (std::size_t k = 0; k < M; ++k) {
    v.m[k] /= m0;
    v.e[k] -= e0;
  }
  return v;
}

// First degree where the forward recurrence at lam departs from p (relative to the largest
// value seen so far); M when it never does.
inline std::size_t forward_agreement(const CoeffTable& c, double lam, const ScaledSequence& p) {
  RecurrenceWalker w(c, lam);
  long scale = std::numeric_limits<long>::min();
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (k > 0) w.advance();
    if (p.m[k] != 0.0) {
      int ex = 0;
      std::frexp(p.m[k], &ex);
      scale = std::max(scale, p.e[k] + ex);
    }
    auto at = [scale](double m, long e) { return std::ldexp(m, static_cast<int>(std::clamp(e - scale, -4000L, 4000L))); };
    if (std::abs(at(w.state().v, w.state().exponent) - at(p.m[k], p.e[k])) > 1e-9) return k;
  }
  return p.size();
}

// M-point Gauss rule of a probability measure given by its recurrence.
// Nodes from the Jacobi matrix eigenvalues; weights 1 / sum_k p_k(x_i)^2 from the eigenvectors,
// kept as logarithms so tail weights far below the double range stay usable.
inline DiscretizedMeasure gauss_rule(const CoeffTable& c, std::size_t M) {
  if (M < 1) throw ValidationError("gauss_rule: M must be >= 1");
  const TridiagEigen eig = eigen_tridiag(SymTridiag::from_jacobi(c, M));
  std::vector<double> lw(M);
  std::vector<std::size_t> limit(M);
  for (std::size_t i = 0; i < M; ++i) {
    const ScaledSequence p = twisted_polys(c, M, eig.values[i]);
    ScaledAccumulator acc;
    for (std::size_t k = 0; k < M; ++k) acc.add(p.m[k] * p.m[k], 2 * p.e[k]);
    lw[i] = -acc.log_abs();
    limit[i] = forward_agreement(c, eig.values[i], p);
  }
  CoeffTable block;
  block.a.assign(c.a.begin(), c.a.begin() + static_cast<long>(std::min(c.a.size(), M)));
  block.b.assign(c.b.begin(), c.b.begin() + static_cast<long>(std::min(c.b.size(), M)));
  return DiscretizedMeasure::from_log_weights(eig.values, std::move(lw))
      .with_exact_degree(2 * M - 1)
      .with_origin(std::make_shared<const GaussOrigin>(std::move(block), M, std::move(limit)));
}

inline DiscretizedMeasure gauss_rule(const JacobiParameters& params, std::size_t M) {
  if (M < 1) throw ValidationError("gauss_rule: M must be >= 1");
  return gauss_rule(params.prefix(M), M);
}

// Weights as squared first eigenvector components (textbook Golub-Welsch).
// Components that underflow are dropped.
inline DiscretizedMeasure gauss_rule_golub_welsch(const CoeffTable& c, std::size_t M) {
  const TridiagEigen eig = eigen_tridiag(SymTridiag::from_jacobi(c, M));
  std::vector<double> nodes;
  std::vector<double> weights;
  for (std::size_t i = 0; i < M; ++i) {
    const double w = eig.first_components[i] * eig.first_components[i];
    if (w > 0.0) {
      nodes.push_back(eig.values[i]);
      weights.push_back(w);
    }
  }
  return {std::move(nodes), std::move(weights)};
}

// Orthonormal Jacobi-polynomial recurrence for (1-t)^alpha (1+t)^beta on [-1,1].
inline Coeff jacobi_weight_coefficient(double alpha, double beta, std::size_t n) {
  const double ab = alpha + beta;
  if (n == 0) {
    const double b0 = (beta - alpha) / (ab + 2.0);
    const double a0sq = 4.0 * (alpha + 1.0) * (beta + 1.0) / ((ab + 2.0) * (ab + 2.0) * (ab + 3.0));
    return {std::sqrt(a0sq), b0};
  }
  const double k = static_cast<double>(n);
  const double s = 2.0 * k + ab;
  const double bn = (beta * beta - alpha * alpha) / (s * (s + 2.0));
  const double k1 = k + 1.0;
  const double an_sq = 4.0 * k1 * (k1 + alpha) * (k1 + beta) * (k1 + ab) / ((s + 1.0) * (s + 2.0) * (s + 2.0) * (s + 3.0));
  return {std::sqrt(an_sq), bn};
}

// Gauss-Jacobi rule on [-1,1] for the unnormalized weight (1-t)^alpha (1+t)^beta.
inline DiscretizedMeasure gauss_jacobi(std::size_t q, double alpha, double beta) {
  if (!(alpha > -1.0) || !(beta > -1.0)) throw ValidationError("gauss_jacobi: exponents must exceed -1");
  CoeffTable c;
  for (std::size_t n = 0; n < q; ++n) {
    Coeff k = jacobi_weight_coefficient(alpha, beta, n);
    c.a.push_back(k.a);
    c.b.push_back(k.b);
  }
  const DiscretizedMeasure r = gauss_rule(c, q);
  const double log_mass = (alpha + beta + 1.0) * std::numbers::ln2 + std::lgamma(alpha + 1.0) +
                          std::lgamma(beta + 1.0) - std::lgamma(alpha + beta + 2.0);
  std::vector<double> lw = r.log_weights();
  for (double& v : lw) v += log_mass;
  return DiscretizedMeasure::from_log_weights(r.nodes(), std::move(lw)).with_exact_degree(r.exact_degree());
}

inline DiscretizedMeasure gauss_legendre(std::size_t q) { return gauss_jacobi(q, 0.0, 0.0); }

inline double integrate(const DiscretizedMeasure& dm, const std::function<double(double)>& f) {
  CompensatedSum s;
  for (std::size_t i = 0; i < dm.size(); ++i) s.add(dm.weights()[i] * f(dm.nodes()[i]));
  return s.value();
}

inline DiscretizedMeasure normalized(const DiscretizedMeasure& dm) {
  std::vector<double> lw = dm.log_weights();
  const double shift = std::log(dm.total_mass());
  for (double& v : lw) v -= shift;
  return DiscretizedMeasure::from_log_weights(dm.nodes(), std::move(lw))
      .with_exact_degree(dm.exact_degree())
      .with_origin(dm.origin());
}

// Weights w_i g(x_i), renormalized to mass 1.
inline DiscretizedMeasure modify_measure(const DiscretizedMeasure& dm, const std::function<double(double)>& g) {
  std::vector<double> lw(dm.size());
  for (std::size_t i = 0; i < dm.size(); ++i) {
    const double gi = g(dm.nodes()[i]);
    if (!(gi > 0.0) || !std::isfinite(gi)) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", dm.nodes()[i]);
      throw ValidationError("modify_measure: g is not positive at node " + std::to_string(i) + " (x=" + buf + ")");
    }
    lw[i] = dm.log_weights()[i] + std::log(gi);
  }
  return normalized(DiscretizedMeasure::from_log_weights(dm.nodes(), std::move(lw)));
}

// p_0..p_{n-1} at node i: forward recurrence where it reproduces the eigenvector, the
// eigenvector itself beyond that (rules with a matching origin only).
inline ScaledSequence node_polys(const CoeffTable& c, std::size_t n, const DiscretizedMeasure& dm, std::size_t i) {
  const auto& o = dm.origin();
  if (o && n > o->forward_limit(i) && o->matches(c, n)) {
    ScaledSequence p = twisted_polys(o->coeffs(), o->order(), dm.nodes()[i]);
    p.m.resize(n);
    p.e.resize(n);
    return p;
  }
  ScaledSequence p{std::vector<double>(n), std::vector<long>(n)};
  RecurrenceWalker w(c, dm.nodes()[i]);
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) w.advance();
    p.m[k] = w.state().v;
    p.e[k] = w.state().exponent;
  }
  return p;
}

// (p_{n-1}, p_n) at node i, same policy as node_polys.
inline ScaledPair node_pair(const CoeffTable& c, std::size_t n, const DiscretizedMeasure& dm, std::size_t i) {
  const auto& o = dm.origin();
  if (!(o && n + 1 > o->forward_limit(i) && o->matches(c, n))) return eval_pair(c, n, dm.nodes()[i]);
  const ScaledSequence p = twisted_polys(o->coeffs(), o->order(), dm.nodes()[i]);
  ScaledPair s;
  s.exponent = p.e[n - 1];
  s.u = p.m[n - 1];
  // p_M vanishes at every node of the M-point rule.
  s.v = n < p.size() ? std::ldexp(p.m[n], static_cast<int>(std::clamp(p.e[n] - s.exponent, -4000L, 4000L))) : 0.0;
  if (n < p.size() && p.e[n] > s.exponent) {
    s.exponent = p.e[n];
    s.u = std::ldexp(p.m[n - 1], static_cast<int>(std::clamp(p.e[n - 1] - s.exponent, -4000L, 4000L)));
    s.v = p.m[n];
  }
  return s;
}

// Pairs at every node, cached on the rule when the coefficients match its origin.
inline std::shared_ptr<const std::vector<ScaledPair>> node_pairs(const CoeffTable& c, std::size_t n,
                                                                 const DiscretizedMeasure& dm) {
  auto build = [&] {
    std::vector<ScaledPair> out(dm.size());
    for (std::size_t i = 0; i < dm.size(); ++i) out[i] = node_pair(c, n, dm, i);
    return out;
  };
  const auto& o = dm.origin();
  if (o && o->matches(c, n)) return o->pairs(n, build);
  return std::make_shared<const std::vector<ScaledPair>>(build());
}

struct StieltjesResult {
  CoeffTable coeffs;
  bool beyond_guarantee = false;  // n_max > M/2
  double orthogonality_residual = 0.0;
};

inline constexpr double kOrthogonalityLimit = 1e-6;

// Discretized Stieltjes procedure: the symmetric Lanczos recurrence on diag(x) started
// from sqrt(w). Each node carries its own binary exponent so that entries far out in the
// tails, which start below the double range, grow correctly. With `reorthogonalize`
// every new vector is cleaned against all previous ones (twice when needed) and the
// size of the first correction is the loss-of-orthogonality measure.
// Returns a_0..a_{n_max-1}, b_0..b_{n_max-1} of the normalized measure.
inline StieltjesResult stieltjes_from_discrete(const DiscretizedMeasure& dm, std::size_t n_max,
                                               bool reorthogonalize = true) {
  const std::size_t M = dm.size();
  if (n_max < 1) throw ValidationError("stieltjes: n_max must be >= 1");
  if (n_max >= M)
    throw ValidationError("stieltjes: n_max=" + std::to_string(n_max) + " must be below the node count " +
                          std::to_string(M));
  if (reorthogonalize && static_cast<double>(M) * static_cast<double>(n_max) > 3.0e8)
    throw ValidationError("stieltjes: basis too large for memory (M*n_max > 3e8)");

  const Eigen::Index m = static_cast<Eigen::Index>(M);
  const std::vector<double>& x = dm.nodes();
  const double log_mass = std::log(dm.total_mass());

  std::vector<double> u(M, 0.0), v(M), r(M);
  std::vector<long> e(M);
  for (std::size_t i = 0; i < M; ++i) {
    const double half = 0.5 * (dm.log_weights()[i] - log_mass);
    const double E = std::floor(half / std::numbers::ln2);
    v[i] = std::exp(half - E * std::numbers::ln2);
    e[i] = static_cast<long>(E);
  }

  Eigen::MatrixXd Q;
  if (reorthogonalize) Q.resize(m, static_cast<Eigen::Index>(n_max));
  Eigen::VectorXd qd(m), rd(m), c, corr;

  StieltjesResult out;
  out.beyond_guarantee = 2 * n_max > M;
  out.coeffs.a.resize(n_max);
  out.coeffs.b.resize(n_max);

  for (std::size_t k = 0; k < n_max; ++k) {
    const Eigen::Index kk = static_cast<Eigen::Index>(k);
    CompensatedSum bs;
    for (std::size_t i = 0; i < M; ++i) {
      qd[static_cast<Eigen::Index>(i)] = std::ldexp(v[i], static_cast<int>(std::max(e[i], -2000L)));
      bs.add(x[i] * qd[static_cast<Eigen::Index>(i)] * qd[static_cast<Eigen::Index>(i)]);
    }
    if (reorthogonalize) Q.col(kk) = qd;
    const double bk = bs.value();
    out.coeffs.b[k] = bk;

    const double prev = k > 0 ? out.coeffs.a[k - 1] : 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      r[i] = (x[i] - bk) * v[i] - prev * u[i];
      rd[static_cast<Eigen::Index>(i)] = std::ldexp(r[i], static_cast<int>(std::max(e[i], -2000L)));
    }

    double ak = 0.0;
    if (reorthogonalize) {
      double loss = 0.0;
      for (int pass = 0; pass < 2; ++pass) {
        const double before = rd.norm();
        c = Q.leftCols(kk + 1).transpose() * rd;
        corr = Q.leftCols(kk + 1) * c;
        for (std::size_t i = 0; i < M; ++i) {
          const double ci = corr[static_cast<Eigen::Index>(i)];
          if (ci == 0.0) continue;
          r[i] -= std::ldexp(ci, static_cast<int>(std::clamp(-e[i], -2000L, 2000L)));
          rd[static_cast<Eigen::Index>(i)] = std::ldexp(r[i], static_cast<int>(std::max(e[i], -2000L)));
        }
        ak = rd.norm();
        if (pass == 0) loss = ak > 0.0 ? c.cwiseAbs().maxCoeff() / ak : INFINITY;
        if (!(ak < 0.7 * before)) break;
      }
      out.orthogonality_residual = std::max(out.orthogonality_residual, loss);
      if (!(loss <= kOrthogonalityLimit))
        throw ConvergenceError("stieltjes: loss of orthogonality at degree " + std::to_string(k + 1) +
                               " (residual " + std::to_string(loss) + "); use more nodes");
    } else {
      ak = rd.norm();
    }
    if (!(ak > 0.0) || !std::isfinite(ak))
      throw ConvergenceError("stieltjes: recurrence broke down at degree " + std::to_string(k + 1) +
                             "; use more nodes");
    out.coeffs.a[k] = ak;
    for (std::size_t i = 0; i < M; ++i) {
      u[i] = v[i];
      v[i] = r[i] / ak;
      const double mx = std::max(std::abs(u[i]), std::abs(v[i]));
      if (mx >= kRescaleBound || (mx < 1.0 / kRescaleBound && mx > 0.0)) detail::rescale(u[i], v[i], e[i]);
    }
  }
  return out;
}

// CSV with header "x,w", 17 significant digits.
inline void write_csv(const DiscretizedMeasure& dm, std::ostream& os) {
  os << "x,w\n";
  char buf[96];
  for (std::size_t i = 0; i < dm.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", dm.nodes()[i], dm.weights()[i]);
    os << buf;
  }
}

namespace detail {

inline double parse_double(std::string_view s, const std::string& where) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v))
    throw ValidationError(where + ": cannot parse number '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

inline DiscretizedMeasure read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("measure csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,w") throw ValidationError("measure csv: header must be 'x,w'");
  std::vector<double> x, w;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string where = "measure csv line " + std::to_string(lineno);
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw ValidationError(where + ": expected two fields");
    x.push_back(detail::parse_double(std::string_view(line).substr(0, comma), where));
    w.push_back(detail::parse_double(std::string_view(line).substr(comma + 1), where));
  }
  return {std::move(x), std::move(w)};
}

}  // namespace nevai
