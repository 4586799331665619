#pragma once

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/sinh_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nevai/error.hpp"
#include "nevai/jacobi.hpp"
#include "nevai/kernel.hpp"
#include "nevai/quadrature.hpp"
#include "nevai/test_function.hpp"

namespace nevai {

enum class CaseLabel { I, IIa, IIb, III, borderline };

inline const char* to_string(CaseLabel c) {
  switch (c) {
    case CaseLabel::I: return "I";
    case CaseLabel::IIa: return "IIa";
    case CaseLabel::IIb: return "IIb";
    case CaseLabel::III: return "III";
    case CaseLabel::borderline: return "borderline";
  }
  return "?";
}

using Interval = std::pair<double, double>;

struct CaseReport {
  double trace = 0.0;
  double discriminant = 0.0;
  CaseLabel label = CaseLabel::I;
  int epsilon = 0;      // trace/2 rounded to +-1 when |trace| is near 2, else 0
  double defect = 0.0;  // max-norm of X_0(0) - epsilon Id
  std::vector<double> h_coeffs;         // ascending powers
  std::vector<Interval> lambda_minus;   // within the scan window
  std::vector<double> boundary_roots;
};

inline constexpr double kClassifyTol = 1e-9;

// Label from the N-step transfer matrix at 0. A trace within 10*tol of the band, or a
// defect within 10*tol of the diagonalizability threshold, is reported as borderline.
inline CaseReport classify(const PeriodicProfile& profile, double tol = kClassifyTol) {
  const Mat2 X = periodic_transfer(profile, 0, 0.0, false).value;
  CaseReport r;
  r.trace = X.trace();
  r.discriminant = X.discr();
  const double at = std::abs(r.trace);
  if (at < 2.0 - tol) {
    r.label = at >= 2.0 - 10.0 * tol ? CaseLabel::borderline : CaseLabel::I;
    return r;
  }
  if (at > 2.0 + tol) {
    r.label = at <= 2.0 + 10.0 * tol ? CaseLabel::borderline : CaseLabel::III;
    return r;
  }
  r.epsilon = r.trace > 0.0 ? 1 : -1;
  r.defect = (X - static_cast<double>(r.epsilon) * Mat2::identity()).max_abs();
  if (r.defect < tol) r.label = CaseLabel::IIa;
  else if (r.defect < 10.0 * tol) r.label = CaseLabel::borderline;
  else r.label = CaseLabel::IIb;
  return r;
}

// ---------------------------------------------------------------------------
// Limits of the discriminant along the period

struct HOptions {
  std::vector<std::size_t> j_list = {16, 32, 64, 128, 256, 512, 1024};
  // Envelope in the IIb scaling; a_n when empty.
  std::function<double(std::size_t)> gamma;
  double window_lo = -3.0;
  double window_hi = 3.0;
  std::size_t scan_points = 1000;
  double stabilization = 0.01;
};

// a^2_{jN+N-1} discr X_{jN}(x) (IIa) or gamma_{jN+N-1} discr X_{jN}(x) (IIb).
inline double h_value(const JacobiParameters& params, std::size_t N, CaseLabel label, std::size_t j, double x,
                      const std::function<double(std::size_t)>& gamma) {
  if (j < 1) throw ValidationError("h: j must be >= 1");
  Mat2 X = Mat2::identity();
  for (std::size_t k = j * N; k < j * N + N; ++k) X = transfer_matrix(params, k, x) * X;
  const std::size_t last = j * N + N - 1;
  double scale;
  if (label == CaseLabel::IIa) {
    const double a = params.a(last);
    scale = a * a;
  } else if (label == CaseLabel::IIb) {
    scale = gamma ? gamma(last) : params.a(last);
  } else {
    throw ValidationError("h: only defined for cases IIa and IIb");
  }
  return scale * X.discr();
}

// j values whose products stay inside the resolvable coefficient range.
inline std::vector<std::size_t> usable_j(const JacobiParameters& params, std::size_t N, const std::vector<std::size_t>& j_list) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < j_list.size(); ++k) {
    if (k > 0 && !(j_list[k] > j_list[k - 1])) throw ValidationError("h: j list must be ascending");
    if (j_list[k] < 1) throw ValidationError("h: j must be >= 1");
    if (!params.max_index() || j_list[k] * N + N - 1 <= *params.max_index()) out.push_back(j_list[k]);
  }
  if (out.empty()) {
    const std::size_t max = *params.max_index();
    throw ResolutionError(params.label() + ": insufficient resolution for the requested j values (max safe index " +
                              std::to_string(max) + ")",
                          max);
  }
  return out;
}

struct HLimit {
  std::vector<std::size_t> j;
  std::vector<double> values;
  bool stabilized = false;
  double estimate = 0.0;
};

inline HLimit h_limit(const JacobiParameters& params, std::size_t N, CaseLabel label, double x, const HOptions& opt = {}) {
  HLimit h;
  h.j = usable_j(params, N, opt.j_list);
  for (std::size_t j : h.j) h.values.push_back(h_value(params, N, label, j, x, opt.gamma));
  h.estimate = h.values.back();
  if (h.values.size() >= 2) {
    const double a = h.values[h.values.size() - 1];
    const double b = h.values[h.values.size() - 2];
    h.stabilized = std::abs(a - b) <= opt.stabilization * std::abs(a);
  }
  return h;
}

// Least-squares polynomial of the given degree through (xs, ys); ascending powers.
inline std::vector<double> polyfit(const std::vector<double>& xs, const std::vector<double>& ys, std::size_t degree) {
  const Eigen::Index m = static_cast<Eigen::Index>(xs.size());
  const Eigen::Index d = static_cast<Eigen::Index>(degree) + 1;
  if (m < d) throw ValidationError("polyfit: not enough points");
  Eigen::MatrixXd V(m, d);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double p = 1.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      V(i, k) = p;
      p *= xs[static_cast<std::size_t>(i)];
    }
    y[i] = ys[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd c = V.colPivHouseholderQr().solve(y);
  return {c.data(), c.data() + c.size()};
}

struct SignScan {
  std::vector<double> roots;
  std::vector<Interval> negative;
};

// Sign changes of h on a uniform scan, refined by bisection to `tol`.
inline SignScan scan_sign(const std::function<double(double)>& h, double lo, double hi, std::size_t points,
                          double tol = 1e-12) {
  if (!(hi > lo) || points < 2) throw ValidationError("scan: bad window");
  SignScan s;
  std::vector<double> xs(points), hs(points);
  for (std::size_t i = 0; i < points; ++i) {
    xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    hs[i] = h(xs[i]);
  }
  double open = hs[0] < 0.0 ? lo : NAN;
  for (std::size_t i = 0; i + 1 < points; ++i) {
    if ((hs[i] < 0.0) == (hs[i + 1] < 0.0)) continue;
    double a = xs[i], b = xs[i + 1];
    const bool a_neg = hs[i] < 0.0;
    while (b - a > tol) {
      const double mid = 0.5 * (a + b);
      if ((h(mid) < 0.0) == a_neg) a = mid;
      else b = mid;
      if (mid == a && mid == b) break;
    }
    const double root = 0.5 * (a + b);
    s.roots.push_back(root);
    if (a_neg) {
      s.negative.emplace_back(open, root);
      open = NAN;
    } else {
      open = root;
    }
  }
  if (!std::isnan(open)) s.negative.emplace_back(open, hi);
  return s;
}

// h estimate at the largest usable j, with its sign scan and polynomial fit.
struct HProfile {
  std::size_t j = 0;
  std::function<double(double)> h;
  std::vector<double> coeffs;
  SignScan scan;
};

inline HProfile h_profile(const JacobiParameters& params, std::size_t N, CaseLabel label, const HOptions& opt = {}) {
  const std::vector<std::size_t> js = usable_j(params, N, opt.j_list);
  HProfile p;
  p.j = js.back();
  const auto gamma = opt.gamma;
  const std::size_t j = p.j;
  p.h = [params, N, label, j, gamma](double x) { return h_value(params, N, label, j, x, gamma); };
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < 21; ++i) {
    const double x = opt.window_lo + (opt.window_hi - opt.window_lo) * static_cast<double>(i) / 20.0;
    xs.push_back(x);
    ys.push_back(p.h(x));
  }
  p.coeffs = polyfit(xs, ys, label == CaseLabel::IIa ? 2 : 1);
  p.scan = scan_sign(p.h, opt.window_lo, opt.window_hi, opt.scan_points);
  return p;
}

// Classification plus the discriminant-limit analysis for IIa/IIb.
inline CaseReport classify_with_h(const JacobiParameters& params, const PeriodicProfile& profile, const HOptions& opt = {}) {
  CaseReport r = classify(profile);
  if (r.label == CaseLabel::IIa || r.label == CaseLabel::IIb) {
    const HProfile hp = h_profile(params, profile.period(), r.label, opt);
    r.h_coeffs = hp.coeffs;
    r.lambda_minus = hp.scan.negative;
    r.boundary_roots = hp.scan.roots;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Blend

struct BlendTransfer {
  Mat2 value;
  Mat2 derivative;
  double discriminant;
};

// [[0,-1],[alpha_{N-1}/alpha_0, -(2x-beta_0)/alpha_0]] B_{N-1}(x) ... B_1(x).
inline BlendTransfer blend_transfer(const PeriodicProfile& p, double x) {
  const long N = static_cast<long>(p.period());
  const double a0 = p.alpha(0);
  const Mat2 head{0.0, -1.0, p.alpha(N - 1) / a0, -(2.0 * x - p.beta(0)) / a0};
  const Mat2 head_d{0.0, 0.0, 0.0, -2.0 / a0};
  const PeriodicTransfer tail = step_product(p, 1, N, x, true);
  BlendTransfer b;
  b.value = head * tail.value;
  b.derivative = head_d * tail.value + head * *tail.derivative;
  b.discriminant = b.value.discr();
  return b;
}

inline SignScan blend_bands(const PeriodicProfile& p, double lo, double hi, std::size_t points = 1000) {
  return scan_sign([&](double x) { return blend_transfer(p, x).discriminant; }, lo, hi, points);
}

// ---------------------------------------------------------------------------
// Asymptotic profiles

struct AsymptoticProfile {
  CaseLabel label = CaseLabel::I;
  bool blend = false;
  std::function<double(std::size_t)> rho;
  std::function<double(double)> upsilon;
  std::vector<Interval> support;  // where upsilon may be positive; infinite ends allowed
  std::vector<double> exceptional;
  std::string nu;
};

struct ProfileOptions {
  HOptions h;
  double blend_window_lo = -10.0;
  double blend_window_hi = 10.0;
};

inline AsymptoticProfile asymptotic_profile(const JacobiParameters& params, const PeriodicProfile& profile, CaseLabel label,
                                            bool blend = false, const ProfileOptions& opt = {}) {
  const std::size_t N = profile.period();
  const double Nd = static_cast<double>(N);
  constexpr double inf = std::numeric_limits<double>::infinity();
  AsymptoticProfile a;
  a.label = label;
  a.blend = blend;

  if (blend) {
    a.rho = [](std::size_t n) { return static_cast<double>(n); };
    a.upsilon = [profile](double x) {
      const BlendTransfer b = blend_transfer(profile, x);
      if (!(b.discriminant < 0.0)) return 0.0;
      const double Np2 = static_cast<double>(profile.period()) + 2.0;
      return std::abs(b.derivative.trace()) / (std::numbers::pi * Np2 * std::sqrt(-b.discriminant));
    };
    const SignScan s = blend_bands(profile, opt.blend_window_lo, opt.blend_window_hi);
    a.support = s.negative;
    a.exceptional = s.roots;
    a.nu = "upsilon(x) = |tr X1'(x)| / (pi (N+2) sqrt(-discr X1(x))) on the bands";
    return a;
  }

  if (label == CaseLabel::III) throw ValidationError("no a.c. profile: case III measures are purely discrete");
  if (label == CaseLabel::borderline) throw ValidationError("no a.c. profile: classification is borderline");

  const std::vector<double> alpha = profile.alphas();
  if (label == CaseLabel::IIb) {
    const auto gamma = opt.h.gamma;
    a.rho = [params, profile, gamma](std::size_t n) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double aj = params.a(j);
        const double gj = gamma ? gamma(j) : aj;
        s += std::sqrt(profile.alpha(static_cast<long>(j)) * gj) / aj;
      }
      return s;
    };
  } else {
    a.rho = [params, profile](std::size_t n) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += profile.alpha(static_cast<long>(j)) / params.a(j);
      return s;
    };
  }

  const PeriodicTransfer X0 = periodic_transfer(profile, 0, 0.0, true);
  const double tr_d = std::abs(X0.derivative->trace());

  if (label == CaseLabel::I) {
    const double v = tr_d / (std::numbers::pi * Nd * std::sqrt(-X0.value.discr()));
    a.upsilon = [v](double) { return v; };
    a.support = {{-inf, inf}};
    a.nu = "upsilon constant on the real line";
    return a;
  }

  const HProfile hp = h_profile(params, N, label, opt.h);
  const auto h = hp.h;
  a.exceptional = hp.scan.roots;
  a.support = hp.scan.negative;
  for (Interval& iv : a.support) {
    if (iv.first == opt.h.window_lo) iv.first = -inf;
    if (iv.second == opt.h.window_hi) iv.second = inf;
  }
  const double alast = profile.alpha(static_cast<long>(N) - 1);
  if (label == CaseLabel::IIa) {
    a.upsilon = [h, Nd, alast](double x) {
      const double hx = h(x);
      if (!(hx < 0.0)) return 0.0;
      const double d = 1e-5 * std::max(1.0, std::abs(x));
      const double dh = (h(x + d) - h(x - d)) / (2.0 * d);
      return std::abs(dh) / (4.0 * std::numbers::pi * Nd * alast * std::sqrt(-hx));
    };
    a.nu = "upsilon(x) = |h'(x)| / (4 pi N alpha_{N-1} sqrt(-h(x))) on the negative set of h";
  } else {
    a.upsilon = [h, Nd, alast, tr_d](double x) {
      const double hx = h(x);
      if (!(hx < 0.0)) return 0.0;
      return std::sqrt(alast) * tr_d / (std::numbers::pi * Nd * std::sqrt(-hx));
    };
    a.nu = "upsilon(x) = sqrt(alpha_{N-1}) |tr X_0'(0)| / (pi N sqrt(-h(x))) on the negative set of h";
  }
  return a;
}

// ---------------------------------------------------------------------------
// Limit checks

struct KernelLimitRow {
  std::size_t n;
  double rho;
  double r;          // K_n(x,x) mu'(x) / rho_n
  double rel_error;  // |r / upsilon(x) - 1|
};

struct KernelLimitReport {
  double x;
  double target;
  std::vector<KernelLimitRow> rows;
};

inline KernelLimitReport kernel_limit_check(const JacobiParameters& params, const AsymptoticProfile& prof, double x,
                                            const std::vector<std::size_t>& n_list,
                                            const std::function<double(double)>& density,
                                            const std::vector<double>& exceptional = {}, double radius = 0.1) {
  std::vector<double> bad = prof.exceptional;
  bad.insert(bad.end(), exceptional.begin(), exceptional.end());
  for (double p : bad)
    if (std::abs(x - p) < radius)
      throw ValidationError("kernel limit: x lies within the exclusion radius of an exceptional point; move x or shrink the radius");
  const double target = prof.upsilon(x);
  if (!(target > 0.0)) throw ValidationError("kernel limit: x is outside the absolutely continuous region");
  const double mu = density(x);
  KernelLimitReport rep{x, target, {}};
  for (std::size_t n : n_list) {
    if (n < 1) throw ValidationError("kernel limit: n must be >= 1");
    const double K = kernel_diagonal(params.prefix(n), n, x).value();
    const double rho = prof.rho(n);
    const double r = K * mu / rho;
    rep.rows.push_back({n, rho, r, std::abs(r / target - 1.0)});
  }
  return rep;
}

// int f upsilon dx over the support intervals.
inline double integrate_upsilon(const AsymptoticProfile& prof, const std::function<double(double)>& f) {
  auto g = [&](double x) {
    const double v = prof.upsilon(x);
    return v == 0.0 ? 0.0 : f(x) * v;
  };
  double total = 0.0;
  for (const Interval& iv : prof.support) {
    double err = 0.0, L1 = 0.0, val = 0.0;
    try {
      const bool lo_inf = std::isinf(iv.first), hi_inf = std::isinf(iv.second);
      if (lo_inf && hi_inf) {
        boost::math::quadrature::sinh_sinh<double> q;
        val = q.integrate(g, 1e-10, &err, &L1);
      } else if (hi_inf) {
        boost::math::quadrature::exp_sinh<double> q;
        const double a = iv.first;
        val = q.integrate([&](double t) { return g(a + t); }, 0.0, std::numeric_limits<double>::infinity(), 1e-10, &err, &L1);
      } else if (lo_inf) {
        boost::math::quadrature::exp_sinh<double> q;
        const double b = iv.second;
        val = q.integrate([&](double t) { return g(b - t); }, 0.0, std::numeric_limits<double>::infinity(), 1e-10, &err, &L1);
      } else {
        boost::math::quadrature::tanh_sinh<double> q;
        val = q.integrate(g, iv.first, iv.second, 1e-10, &err, &L1);
      }
    } catch (const std::domain_error&) {
      // boost's complaint when the integrand does not decay
      throw ValidationError("f * upsilon is not integrable on the support");
    }
    if (!std::isfinite(val) || err > 1e-7 * std::max(1.0, L1))
      throw ConvergenceError("limit integral did not converge (error estimate " + std::to_string(err) + ")");
    total += val;
  }
  return total;
}

// int f upsilon / (1 + x^2) dx
inline double integrate_limit(const AsymptoticProfile& prof, const std::function<double(double)>& f) {
  return integrate_upsilon(prof, [&](double x) { return f(x) / (1.0 + x * x); });
}

// int f K_n(x,x) / (rho (1 + x^2)) dmu over a discretization; the kernel comes from `coeffs`,
// the recurrence of the normalized version of dm. Scaling dm does not change the result.
inline double weighted_kernel_integral(const CoeffTable& coeffs, std::size_t n, const DiscretizedMeasure& dm, double rho,
                                       const std::function<double(double)>& f) {
  const double log_mass = std::log(dm.total_mass());
  CompensatedSum s;
  for (std::size_t i = 0; i < dm.size(); ++i) {
    const double x = dm.nodes()[i];
    const double fx = f(x);
    if (fx == 0.0) continue;
    const double lk = kernel_diagonal(coeffs, n, x).log_abs();
    s.add(fx * std::exp(dm.log_weights()[i] - log_mass + lk) / (1.0 + x * x));
  }
  return s.value() / rho;
}

struct WeakLimitReport {
  std::size_t n;
  std::size_t nodes;
  double rho;
  double lhs;
  double rhs;
  double gap;
};

inline WeakLimitReport weak_limit_check(const JacobiParameters& params, const AsymptoticProfile& prof, const TestFunction& f,
                                        std::size_t n, const DiscretizedMeasure& dm_big) {
  if (n < 1) throw ValidationError("weak limit: n must be >= 1");
  if (dm_big.size() < 4 * n) throw ValidationError("weak limit: need at least 4n nodes");
  if (!f.bounded()) throw ValidationError("weak limit: f needs a finite sup-norm bound");
  const double rho = prof.rho(n);
  const auto fn = [&](double x) { return f(x); };
  const double lhs = weighted_kernel_integral(params.prefix(n), n, dm_big, rho, fn);
  const double rhs = integrate_limit(prof, fn);
  return {n, dm_big.size(), rho, lhs, rhs, std::abs(lhs - rhs)};
}

// Same check for g dmu, whose recurrence is recovered from the modified discretization.
inline WeakLimitReport weak_limit_check_modified(const AsymptoticProfile& prof, const TestFunction& f, const TestFunction& g,
                                                 std::size_t n, const DiscretizedMeasure& dm_big) {
  if (n < 1) throw ValidationError("weak limit: n must be >= 1");
  if (dm_big.size() < 4 * n) throw ValidationError("weak limit: need at least 4n nodes");
  if (!f.bounded()) throw ValidationError("weak limit: f needs a finite sup-norm bound");
  const double rho = prof.rho(n);
  const auto fn = [&](double x) { return f(x); };
  const DiscretizedMeasure mg = modify_measure(dm_big, [&](double x) { return g(x); });
  const CoeffTable cg = stieltjes_from_discrete(mg, n).coeffs;
  const double lhs = weighted_kernel_integral(cg, n, mg, rho, fn);
  const double rhs = integrate_limit(prof, fn);
  return {n, dm_big.size(), rho, lhs, rhs, std::abs(lhs - rhs)};
}

}  // namespace nevai
