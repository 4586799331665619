#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "nevai/error.hpp"
#include "nevai/jacobi.hpp"
#include "nevai/quadrature.hpp"

namespace nevai {

struct Freud {
  double gamma = 2.0;
};
struct Meixner {
  double s = 1.0;
  double p = 0.25;
};
struct GenHermite {
  double t = 1.0;
};
struct LaguerreType {
  double gamma = -0.5;
  int kappa = 2;
};
struct PeriodicModulated {
  PeriodicProfile profile{{1.0}, {0.0}};
  double envelope_exponent = 0.5;
};
struct PeriodicBlend {
  PeriodicProfile profile{{1.0}, {0.0}};
};
struct CustomTable {
  std::string path;
};

using FamilySpec = std::variant<Freud, Meixner, GenHermite, LaguerreType, PeriodicModulated, PeriodicBlend, CustomTable>;

inline constexpr std::size_t kDefaultResolution = 1280;

inline void validate(const FamilySpec& spec) {
  std::visit(
      [](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, Freud>) {
          if (!(f.gamma >= 1.0) || !std::isfinite(f.gamma)) throw ValidationError("freud: gamma must be >= 1");
        } else if constexpr (std::is_same_v<T, Meixner>) {
          if (!(f.s > 0.0) || !std::isfinite(f.s)) throw ValidationError("meixner: s must be > 0");
          if (!(f.p > 0.0 && f.p < 1.0)) throw ValidationError("meixner: p must lie in (0,1)");
        } else if constexpr (std::is_same_v<T, GenHermite>) {
          if (!(f.t > -1.0) || !std::isfinite(f.t)) throw ValidationError("genhermite: t must be > -1");
        } else if constexpr (std::is_same_v<T, LaguerreType>) {
          if (!(f.gamma > -1.0) || !std::isfinite(f.gamma)) throw ValidationError("laguerre-type: gamma must be > -1");
          if (f.kappa < 2) throw ValidationError("laguerre-type: kappa must be an integer >= 2");
        } else if constexpr (std::is_same_v<T, PeriodicModulated>) {
          if (!(f.envelope_exponent > 0.0) || !std::isfinite(f.envelope_exponent))
            throw ValidationError("periodic-modulated: envelope exponent must be > 0");
        } else if constexpr (std::is_same_v<T, CustomTable>) {
          if (f.path.empty()) throw ValidationError("custom-table: path is empty");
        }
      },
      spec);
}

// ---------------------------------------------------------------------------
// Weight-defined families

// Weight y^power exp(-y^exponent) on y > 0. `mirrored` extends it evenly to the
// whole line; `squared` pushes it forward by x = y^2.
struct HalfLineWeight {
  double power = 0.0;
  double exponent = 2.0;
  bool mirrored = true;
  bool squared = false;
};

namespace detail {

// Mhaskar-Rakhmanov-Saff number of exp(-|y|^beta) for degree m.
inline double mrs_number(double m, double beta) {
  const double lam = std::exp(std::lgamma(beta / 2.0) + 0.5 * std::log(std::numbers::pi) - std::lgamma((beta + 1.0) / 2.0));
  return std::pow(m * lam, 1.0 / beta);
}

// Smallest R past the peak with y^k exp(-y^beta) below its peak by `drop` nats.
inline double monomial_tail(double k, double beta, double drop) {
  auto g = [&](double y) { return k * std::log(y) - std::pow(y, beta); };
  const double peak_y = k > 0.0 ? std::pow(k / beta, 1.0 / beta) : 0.0;
  const double peak = k > 0.0 ? g(peak_y) : 0.0;
  double lo = std::max(peak_y, 1e-3);
  double hi = std::max(2.0 * lo, 1.0);
  while (g(hi) > peak - drop) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) > peak - drop) lo = mid;
    else hi = mid;
  }
  return hi;
}

inline bool is_integer(double v) { return std::abs(v - std::round(v)) < 1e-12; }

}  // namespace detail

// Composite rule for the weight good for polynomials up to degree `degree` in the
// final variable. Weights are not normalized.
inline DiscretizedMeasure discretize_weight(const HalfLineWeight& w, std::size_t degree) {
  const double s = w.power;
  const double beta = w.exponent;
  const double D = static_cast<double>(w.squared ? 2 * degree + 2 : degree + 2);

  const double a_full = detail::mrs_number(D, beta);
  const double a_half = detail::mrs_number(D / 2.0, beta);
  double R = std::max({1.3 * a_full, detail::monomial_tail(D + std::max(s, 0.0), beta, 45.0), std::pow(45.0, 1.0 / beta)});

  constexpr std::size_t q = 20;
  const double density = (beta < 2.0 ? 2.0 : 1.25) * D / a_half;
  const std::size_t panels = std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(density * R / q)));
  const double h = R / static_cast<double>(panels);

  std::vector<double> y, lwy;
  const DiscretizedMeasure gl = gauss_legendre(q);
  auto add_panel = [&](double lo, double hi) {
    const double half = 0.5 * (hi - lo);
    for (std::size_t k = 0; k < q; ++k) {
      const double yy = lo + half * (gl.nodes()[k] + 1.0);
      y.push_back(yy);
      lwy.push_back(std::log(half) + gl.log_weights()[k] + s * std::log(yy) - std::pow(yy, beta));
    }
  };

  // Panel touching 0 carries y^s exactly; grade towards 0 when y^beta is not smooth there.
  const bool graded = !detail::is_integer(beta) || beta < 2.0;
  const int levels = graded ? 12 : 0;
  const double first_hi = graded ? h * std::pow(0.25, levels) : h;
  {
    const DiscretizedMeasure gj = gauss_jacobi(q, 0.0, s);
    const double half = 0.5 * first_hi;
    const double log_scale = (s + 1.0) * std::log(half);
    for (std::size_t k = 0; k < q; ++k) {
      const double yy = half * (gj.nodes()[k] + 1.0);
      y.push_back(yy);
      lwy.push_back(log_scale + gj.log_weights()[k] - std::pow(yy, beta));
    }
  }
  for (int l = levels; l > 0; --l) add_panel(h * std::pow(0.25, l), h * std::pow(0.25, l - 1));
  // Below exponent 2 the zeros crowd towards the origin; refine the inner fifth.
  const std::size_t inner = beta < 2.0 ? panels / 5 : 0;
  const std::size_t split = beta < 2.0 ? 4 : 1;
  for (std::size_t p = 1; p < panels; ++p) {
    const std::size_t sub = p < inner ? split : 1;
    for (std::size_t k = 0; k < sub; ++k) {
      const double lo = h * (static_cast<double>(p) + static_cast<double>(k) / static_cast<double>(sub));
      const double hi = h * (static_cast<double>(p) + static_cast<double>(k + 1) / static_cast<double>(sub));
      add_panel(lo, hi);
    }
  }

  std::vector<double> nodes, log_weights;
  if (w.mirrored) {
    for (std::size_t i = y.size(); i-- > 0;) {
      nodes.push_back(-y[i]);
      log_weights.push_back(lwy[i]);
    }
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    nodes.push_back(w.squared ? y[i] * y[i] : y[i]);
    log_weights.push_back(lwy[i]);
  }
  return DiscretizedMeasure::from_log_weights(std::move(nodes), std::move(log_weights));
}

// Coefficients 0..count-1 of the weight, from its discretization.
inline CoeffTable weight_coefficients(const HalfLineWeight& w, std::size_t count) {
  const std::size_t degree = 2 * count + 1;
  const DiscretizedMeasure dm = discretize_weight(w, degree);
  CoeffTable c = stieltjes_from_discrete(dm, count, false).coeffs;
  if (w.mirrored && !w.squared) std::fill(c.b.begin(), c.b.end(), 0.0);
  return c;
}

inline HalfLineWeight weight_of(const Freud& f) { return {0.0, f.gamma, true, false}; }
inline HalfLineWeight weight_of(const GenHermite& f) { return {f.t, 2.0, true, false}; }
inline HalfLineWeight weight_of(const LaguerreType& f) {
  return {2.0 * f.gamma + 1.0, 2.0 * static_cast<double>(f.kappa), false, true};
}

// ---------------------------------------------------------------------------
// Custom tables

inline JacobiParameters parse_coefficient_table(std::istream& in, const std::string& label) {
  std::vector<double> a, b;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string where = label + " line " + std::to_string(lineno);
    if (tok.size() != 3) throw ValidationError(where + ": expected 'n a_n b_n'");
    std::size_t n = 0;
    auto [p, ec] = std::from_chars(tok[0].data(), tok[0].data() + tok[0].size(), n);
    if (ec != std::errc() || p != tok[0].data() + tok[0].size()) throw ValidationError(where + ": bad index");
    if (n != a.size())
      throw ValidationError(where + ": index " + tok[0] + " breaks the contiguous sequence (expected " +
                            std::to_string(a.size()) + ")");
    const double an = detail::parse_double(tok[1], where);
    const double bn = detail::parse_double(tok[2], where);
    if (!(an > 0.0)) throw ValidationError(where + ": a_" + tok[0] + " must be positive");
    a.push_back(an);
    b.push_back(bn);
  }
  if (a.empty()) throw ValidationError(label + ": no coefficients");
  return JacobiParameters::table(label, std::move(a), std::move(b));
}

inline JacobiParameters load_coefficient_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("custom-table: cannot open '" + path + "'");
  return parse_coefficient_table(in, "custom-table " + path);
}

// ---------------------------------------------------------------------------
// Construction

inline std::string describe(const FamilySpec& spec) {
  char buf[160];
  return std::visit(
      [&](const auto& f) -> std::string {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, Freud>) {
          std::snprintf(buf, sizeof buf, "freud(gamma=%.17g)", f.gamma);
        } else if constexpr (std::is_same_v<T, Meixner>) {
          std::snprintf(buf, sizeof buf, "meixner(s=%.17g,p=%.17g)", f.s, f.p);
        } else if constexpr (std::is_same_v<T, GenHermite>) {
          std::snprintf(buf, sizeof buf, "genhermite(t=%.17g)", f.t);
        } else if constexpr (std::is_same_v<T, LaguerreType>) {
          std::snprintf(buf, sizeof buf, "laguerre-type(gamma=%.17g,kappa=%d)", f.gamma, f.kappa);
        } else if constexpr (std::is_same_v<T, PeriodicModulated>) {
          std::snprintf(buf, sizeof buf, "periodic-modulated(N=%zu,e=%.17g)", f.profile.period(), f.envelope_exponent);
        } else if constexpr (std::is_same_v<T, PeriodicBlend>) {
          std::snprintf(buf, sizeof buf, "periodic-blend(N=%zu)", f.profile.period());
        } else {
          return "custom-table(" + f.path + ")";
        }
        return buf;
      },
      spec);
}

namespace detail {

inline JacobiParameters resolve_weight_family(const FamilySpec& spec, const HalfLineWeight& w, std::size_t resolution) {
  static std::mutex mu;
  static std::map<std::string, JacobiParameters> cache;
  char key[64];
  std::snprintf(key, sizeof key, "#%zu", resolution);
  const std::string k = describe(spec) + key;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(k);
    if (it != cache.end()) return it->second;
  }
  CoeffTable c = weight_coefficients(w, resolution + 1);
  JacobiParameters p = JacobiParameters::table(describe(spec), std::move(c.a), std::move(c.b));
  std::lock_guard<std::mutex> lock(mu);
  return cache.emplace(k, p).first->second;
}

}  // namespace detail

// Jacobi parameters of the family. Weight-defined families are resolved up to
// index `resolution`; asking past it raises ResolutionError.
inline JacobiParameters make_parameters(const FamilySpec& spec, std::size_t resolution = kDefaultResolution) {
  validate(spec);
  return std::visit(
      [&](const auto& f) -> JacobiParameters {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, Freud>) {
          if (f.gamma == 2.0)
            return JacobiParameters::closed_form(describe(spec), [](std::size_t n) {
              return Coeff{std::sqrt((static_cast<double>(n) + 1.0) / 2.0), 0.0};
            });
          return detail::resolve_weight_family(spec, weight_of(f), resolution);
        } else if constexpr (std::is_same_v<T, Meixner>) {
          const double s = f.s, p = f.p;
          return JacobiParameters::closed_form(describe(spec), [s, p](std::size_t k) {
            const double n = static_cast<double>(k);
            return Coeff{std::sqrt((n + 1.0) * (n + s) * p) / (1.0 - p), (n + (n + s) * p) / (1.0 - p)};
          });
        } else if constexpr (std::is_same_v<T, GenHermite> || std::is_same_v<T, LaguerreType>) {
          return detail::resolve_weight_family(spec, weight_of(f), resolution);
        } else if constexpr (std::is_same_v<T, PeriodicModulated>) {
          const PeriodicProfile prof = f.profile;
          const double e = f.envelope_exponent;
          return JacobiParameters::closed_form(describe(spec), [prof, e](std::size_t k) {
            const double env = std::pow(static_cast<double>(k) + 1.0, e);
            return Coeff{prof.alpha(static_cast<long>(k)) * env, prof.beta(static_cast<long>(k)) * env};
          });
        } else if constexpr (std::is_same_v<T, PeriodicBlend>) {
          const PeriodicProfile prof = f.profile;
          return JacobiParameters::closed_form(describe(spec), [prof](std::size_t k) {
            const std::size_t N = prof.period();
            const std::size_t j = k / (N + 2);
            const std::size_t i = k % (N + 2);
            if (i < N) return Coeff{prof.alpha(static_cast<long>(i)), prof.beta(static_cast<long>(i))};
            return Coeff{static_cast<double>(j + 1), 0.0};
          });
        } else {
          return load_coefficient_table(f.path);
        }
      },
      spec);
}

inline Coeff coefficients(const FamilySpec& spec, std::size_t n) { return make_parameters(spec).at(n); }

// Limiting periodic profile used for classification.
inline std::optional<PeriodicProfile> canonical_profile(const FamilySpec& spec) {
  return std::visit(
      [](const auto& f) -> std::optional<PeriodicProfile> {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, Freud>) {
          return PeriodicProfile({1.0}, {0.0});
        } else if constexpr (std::is_same_v<T, Meixner>) {
          return PeriodicProfile({1.0}, {std::sqrt(f.p) + 1.0 / std::sqrt(f.p)});
        } else if constexpr (std::is_same_v<T, GenHermite>) {
          return PeriodicProfile({1.0, 1.0}, {0.0, 0.0});
        } else if constexpr (std::is_same_v<T, LaguerreType>) {
          return PeriodicProfile({1.0}, {2.0});
        } else if constexpr (std::is_same_v<T, PeriodicModulated> || std::is_same_v<T, PeriodicBlend>) {
          return f.profile;
        } else {
          return std::nullopt;
        }
      },
      spec);
}

// Density of the absolutely continuous (probability) measure, when known in closed form.
inline std::optional<std::function<double(double)>> density(const FamilySpec& spec) {
  return std::visit(
      [](const auto& f) -> std::optional<std::function<double(double)>> {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, Freud>) {
          const double g = f.gamma;
          const double c = 1.0 / (2.0 * std::tgamma(1.0 + 1.0 / g));
          return [g, c](double x) { return c * std::exp(-std::pow(std::abs(x), g)); };
        } else if constexpr (std::is_same_v<T, GenHermite>) {
          const double t = f.t;
          const double c = 1.0 / std::tgamma((1.0 + t) / 2.0);
          return [t, c](double x) { return c * std::pow(std::abs(x), t) * std::exp(-x * x); };
        } else if constexpr (std::is_same_v<T, LaguerreType>) {
          const double g = f.gamma;
          const double k = static_cast<double>(f.kappa);
          const double c = k / std::tgamma((g + 1.0) / k);
          return [g, k, c](double x) { return x > 0.0 ? c * std::pow(x, g) * std::exp(-std::pow(x, k)) : 0.0; };
        } else {
          return std::nullopt;
        }
      },
      spec);
}

// Points where the limiting density profile is known to degenerate.
inline std::vector<double> exceptional_points(const FamilySpec& spec) {
  if (std::holds_alternative<GenHermite>(spec) || std::holds_alternative<LaguerreType>(spec)) return {0.0};
  return {};
}

}  // namespace nevai
