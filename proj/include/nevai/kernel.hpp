#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "nevai/error.hpp"
#include "nevai/jacobi.hpp"
#include "nevai/quadrature.hpp"

namespace nevai {

enum class KernelMethod { cd_formula, direct_sum };

inline const char* to_string(KernelMethod m) { return m == KernelMethod::cd_formula ? "cd-formula" : "direct-sum"; }

struct KernelValue {
  double value;
  KernelMethod method;
};

// mantissa * 2^exponent
struct ScaledValue {
  double mantissa = 0.0;
  long exponent = 0;

  double value() const { return std::ldexp(mantissa, static_cast<int>(std::clamp(exponent, -4000L, 4000L))); }
  double log_abs() const {
    if (mantissa == 0.0) return -INFINITY;
    return std::log(std::abs(mantissa)) + static_cast<double>(exponent) * std::numbers::ln2;
  }
};

inline constexpr double kKernelSwitch = 1e-3;

inline bool use_cd_formula(double x, double y) {
  return std::abs(x - y) >= kKernelSwitch * (1.0 + std::abs(x) + std::abs(y));
}

// Sum_{j<n} p_j(x) p_j(y); needs coefficients 0..n-2.
inline ScaledValue kernel_direct(const CoeffTable& c, std::size_t n, double x, double y) {
  if (n < 1) throw ValidationError("kernel: n must be >= 1");
  RecurrenceWalker wx(c, x);
  RecurrenceWalker wy(c, y);
  ScaledAccumulator acc;
  for (;;) {
    const ScaledPair& sx = wx.state();
    const ScaledPair& sy = wy.state();
    acc.add(sx.v * sy.v, sx.exponent + sy.exponent);
    if (wx.degree() + 1 >= n) break;
    wx.advance();
    wy.advance();
  }
  return {acc.mantissa(), acc.exponent()};
}

// Direct sum on the diagonal.
inline ScaledValue kernel_diagonal(const CoeffTable& c, std::size_t n, double x) {
  if (n < 1) throw ValidationError("kernel: n must be >= 1");
  RecurrenceWalker w(c, x);
  ScaledAccumulator acc;
  for (;;) {
    const ScaledPair& s = w.state();
    acc.add(s.v * s.v, 2 * s.exponent);
    if (w.degree() + 1 >= n) break;
    w.advance();
  }
  return {acc.mantissa(), acc.exponent()};
}

// a_{n-1} (p_n(x) p_{n-1}(y) - p_{n-1}(x) p_n(y)) / (x - y) from precomputed pairs at degree n.
inline ScaledValue kernel_cd(double a_last, const ScaledPair& px, double x, const ScaledPair& py, double y) {
  const double num = px.v * py.u - px.u * py.v;
  return {a_last * num / (x - y), px.exponent + py.exponent};
}

// Needs coefficients 0..n-1.
inline ScaledValue kernel_scaled(const CoeffTable& c, std::size_t n, double x, double y, KernelMethod* used = nullptr) {
  if (n < 1) throw ValidationError("kernel: n must be >= 1");
  if (x != y && use_cd_formula(x, y)) {
    if (used) *used = KernelMethod::cd_formula;
    return kernel_cd(c.a[n - 1], eval_pair(c, n, x), x, eval_pair(c, n, y), y);
  }
  if (used) *used = KernelMethod::direct_sum;
  return x == y ? kernel_diagonal(c, n, x) : kernel_direct(c, n, x, y);
}

inline KernelValue kernel(const JacobiParameters& params, std::size_t n, double x, double y) {
  if (n < 1) throw ValidationError("kernel: n must be >= 1");
  KernelMethod m;
  const ScaledValue v = kernel_scaled(params.prefix(n), n, x, y, &m);
  return {v.value(), m};
}

// lambda_n(x) = 1 / K_n(x,x).
inline double christoffel(const JacobiParameters& params, std::size_t n, double x) {
  if (n < 1) throw ValidationError("christoffel: n must be >= 1");
  return std::exp(-kernel_diagonal(params.prefix(n), n, x).log_abs());
}

// K_n(x, y_i) for every node of dm, sharing the pair at x. Node values come from
// node_pairs / node_polys so that rules with isolated atoms stay accurate.
inline std::vector<ScaledValue> kernel_row(const CoeffTable& c, std::size_t n, double x, const DiscretizedMeasure& dm) {
  if (n < 1) throw ValidationError("kernel: n must be >= 1");
  std::vector<ScaledValue> row(dm.size());
  const auto pairs = node_pairs(c, n, dm);
  const ScaledPair px = eval_pair(c, n, x);
  const double a_last = c.a[n - 1];
  std::optional<ScaledSequence> at_x;
  for (std::size_t i = 0; i < dm.size(); ++i) {
    const double y = dm.nodes()[i];
    if (y != x && use_cd_formula(x, y)) {
      row[i] = kernel_cd(a_last, px, x, (*pairs)[i], y);
      continue;
    }
    if (!at_x) {
      at_x.emplace(ScaledSequence{std::vector<double>(n), std::vector<long>(n)});
      RecurrenceWalker w(c, x);
      for (std::size_t k = 0; k < n; ++k) {
        if (k > 0) w.advance();
        at_x->m[k] = w.state().v;
        at_x->e[k] = w.state().exponent;
      }
    }
    const ScaledSequence py = node_polys(c, n, dm, i);
    ScaledAccumulator acc;
    for (std::size_t k = 0; k < n; ++k) acc.add(at_x->m[k] * py.m[k], at_x->e[k] + py.e[k]);
    row[i] = {acc.mantissa(), acc.exponent()};
  }
  return row;
}

// Masses w_i K_n(x,x_i)^2 / K_n(x,x) of the measure concentrated by the kernel at x.
inline std::vector<double> kernel_masses(const CoeffTable& c, std::size_t n, double x, const DiscretizedMeasure& dm) {
  const std::vector<ScaledValue> row = kernel_row(c, n, x, dm);
  const double log_diag = kernel_diagonal(c, n, x).log_abs();
  std::vector<double> m(dm.size());
  for (std::size_t i = 0; i < dm.size(); ++i) {
    const double lk = row[i].log_abs();
    m[i] = std::isinf(lk) ? 0.0 : std::exp(dm.log_weights()[i] + 2.0 * lk - log_diag);
  }
  return m;
}

// Polynomial given by its coefficients in the orthonormal basis p_0, p_1, ...
struct OrthoPoly {
  std::vector<double> coeffs;
  std::size_t degree() const { return coeffs.empty() ? 0 : coeffs.size() - 1; }
};

// sum_j coeffs_j p_j(x); needs coefficients 0..deg-1.
inline ScaledValue evaluate(const CoeffTable& c, const OrthoPoly& p, double x) {
  RecurrenceWalker w(c, x);
  ScaledAccumulator acc;
  for (std::size_t j = 0; j < p.coeffs.size(); ++j) {
    if (j > 0) w.advance();
    acc.add(p.coeffs[j] * w.state().v, w.state().exponent);
  }
  return {acc.mantissa(), acc.exponent()};
}

inline ScaledValue evaluate_at_node(const CoeffTable& c, const OrthoPoly& p, const DiscretizedMeasure& dm, std::size_t i) {
  if (p.coeffs.empty()) return {};
  const ScaledSequence q = node_polys(c, p.coeffs.size(), dm, i);
  ScaledAccumulator acc;
  for (std::size_t j = 0; j < p.coeffs.size(); ++j) acc.add(p.coeffs[j] * q.m[j], q.e[j]);
  return {acc.mantissa(), acc.exponent()};
}

struct IdentityResiduals {
  double reproducing;  // |int K_n(x,y) p(y) dmu(y) - p(x)|
  double mass;         // |int K_n(x,y)^2 dmu(y) - K_n(x,x)|
  double p_at_x;
  double diagonal;     // K_n(x,x)
};

inline IdentityResiduals identity_residuals(const JacobiParameters& params, std::size_t n, double x, const OrthoPoly& p,
                                            const DiscretizedMeasure& dm) {
  if (n < 1) throw ValidationError("identity_residuals: n must be >= 1");
  if (p.coeffs.size() > n) throw ValidationError("identity_residuals: polynomial degree must be < n");
  const std::size_t need = 2 * n - 2 + p.degree();
  if (!dm.exact_degree() || *dm.exact_degree() < need)
    throw ValidationError("identity_residuals: insufficient quadrature degree (need " + std::to_string(need) + ")");
  const CoeffTable c = params.prefix(n);
  const std::vector<ScaledValue> row = kernel_row(c, n, x, dm);
  const ScaledValue diag = kernel_diagonal(c, n, x);
  const double log_diag = diag.log_abs();

  // Reproducing sum and mass sum, both in units where the largest term is O(1).
  CompensatedSum repro, mass;
  for (std::size_t i = 0; i < dm.size(); ++i) {
    const double lk = row[i].log_abs();
    if (std::isinf(lk)) continue;
    const double sk = row[i].mantissa < 0 ? -1.0 : 1.0;
    mass.add(std::exp(dm.log_weights()[i] + 2.0 * lk - log_diag));
    const ScaledValue py = evaluate_at_node(c, p, dm, i);
    const double lp = py.log_abs();
    if (std::isinf(lp)) continue;
    const double sp = py.mantissa < 0 ? -1.0 : 1.0;
    repro.add(sk * sp * std::exp(dm.log_weights()[i] + lk + lp));
  }
  const double px = evaluate(c, p, x).value();
  const double kxx = diag.value();
  return {std::abs(repro.value() - px), std::abs(mass.value() - 1.0) * kxx, px, kxx};
}

}  // namespace nevai
