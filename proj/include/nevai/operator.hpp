#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "nevai/error.hpp"
#include "nevai/jacobi.hpp"
#include "nevai/kernel.hpp"
#include "nevai/parallel.hpp"
#include "nevai/quadrature.hpp"
#include "nevai/test_function.hpp"

namespace nevai {

inline constexpr std::size_t kMaxNodes = std::size_t{1} << 15;

// Gauss rules of one measure, built on first use. Copies share the cache.
class GaussRuleCache {
 public:
  explicit GaussRuleCache(JacobiParameters params) : params_(std::move(params)), state_(std::make_shared<State>()) {}

  const JacobiParameters& params() const { return params_; }

  // Largest rule the coefficient source can support.
  std::size_t max_nodes() const {
    const auto m = params_.max_index();
    return m ? std::min(*m + 1, kMaxNodes) : kMaxNodes;
  }

  std::shared_ptr<const DiscretizedMeasure> rule(std::size_t M) const {
    {
      std::lock_guard<std::mutex> lock(state_->mu);
      auto it = state_->rules.find(M);
      if (it != state_->rules.end()) return it->second;
    }
    auto r = std::make_shared<const DiscretizedMeasure>(gauss_rule(params_, M));
    std::lock_guard<std::mutex> lock(state_->mu);
    return state_->rules.emplace(M, std::move(r)).first->second;
  }

 private:
  struct State {
    std::mutex mu;
    std::map<std::size_t, std::shared_ptr<const DiscretizedMeasure>> rules;
  };
  JacobiParameters params_;
  std::shared_ptr<State> state_;
};

struct QuadraturePolicy {
  double rel_tol = 1e-9;
  std::size_t cap = kMaxNodes;
};

// sum_i masses_i f(x_i) for each f.
inline std::vector<double> apply_masses(const std::vector<double>& masses, const DiscretizedMeasure& dm,
                                        std::span<const TestFunction> fs) {
  std::vector<double> out(fs.size());
  for (std::size_t k = 0; k < fs.size(); ++k) {
    CompensatedSum s;
    for (std::size_t i = 0; i < dm.size(); ++i)
      if (masses[i] != 0.0) s.add(masses[i] * fs[k](dm.nodes()[i]));
    out[k] = s.value();
  }
  return out;
}

// G_n[f](x) = (1/K_n(x,x)) sum_i w_i K_n(x,x_i)^2 f(x_i) on the given discretization.
inline double nevai_apply(const JacobiParameters& params, std::size_t n, const TestFunction& f, double x,
                          const DiscretizedMeasure& dm) {
  if (n < 1) throw ValidationError("nevai: n must be >= 1");
  if (f.is_polynomial() && dm.exact_degree() && *dm.exact_degree() < 2 * n - 2 + *f.polynomial_degree())
    throw ValidationError("nevai: insufficient quadrature degree for polynomial test function");
  const std::vector<double> masses = kernel_masses(params.prefix(n), n, x, dm);
  return apply_masses(masses, dm, std::span<const TestFunction>(&f, 1))[0];
}

struct NevaiEvaluation {
  std::vector<double> values;
  std::size_t nodes = 0;
};

// Node count for exact evaluation when every f is a polynomial; 0 otherwise.
inline std::size_t exact_node_count(std::size_t n, std::span<const TestFunction> fs) {
  std::size_t d = 0;
  for (const TestFunction& f : fs) {
    if (!f.is_polynomial()) return 0;
    d = std::max(d, *f.polynomial_degree());
  }
  return std::max<std::size_t>(1, 2 * n - 2 + d);
}

// G_n[f](x) for several f sharing one kernel row per rule. Polynomial batteries use the
// exact rule; otherwise M starts at 4n and doubles until every value moves by at most
// rel_tol * max(|G|, sup|f|).
inline NevaiEvaluation nevai_apply_many(const GaussRuleCache& cache, std::size_t n, std::span<const TestFunction> fs,
                                        double x, const QuadraturePolicy& policy = {}) {
  if (n < 1) throw ValidationError("nevai: n must be >= 1");
  const CoeffTable c = cache.params().prefix(n);
  const std::size_t limit = std::min(policy.cap, cache.max_nodes());
  auto eval = [&](std::size_t M) {
    const auto dm = cache.rule(M);
    return apply_masses(kernel_masses(c, n, x, *dm), *dm, fs);
  };

  if (const std::size_t M = exact_node_count(n, fs); M > 0) {
    if (M > limit) throw ConvergenceError("nevai: exact rule needs " + std::to_string(M) + " nodes, above the limit");
    return {eval(M), M};
  }

  std::size_t M = 4 * n;
  if (M > limit) throw ConvergenceError("quadrature not converged: starting rule exceeds node limit " + std::to_string(limit));
  std::vector<double> prev = eval(M);
  for (;;) {
    const std::size_t next = 2 * M;
    if (next > limit)
      throw ConvergenceError("quadrature not converged: node limit " + std::to_string(limit) + " reached at n=" +
                             std::to_string(n));
    std::vector<double> cur = eval(next);
    bool done = true;
    for (std::size_t k = 0; k < fs.size(); ++k) {
      const double scale = std::max(std::abs(cur[k]), fs[k].bounded() ? fs[k].bound() : 0.0);
      if (std::abs(cur[k] - prev[k]) > policy.rel_tol * scale) done = false;
    }
    M = next;
    if (done) return {cur, M};
    prev = std::move(cur);
  }
}

inline double nevai_apply(const GaussRuleCache& cache, std::size_t n, const TestFunction& f, double x,
                          const QuadraturePolicy& policy = {}) {
  return nevai_apply_many(cache, n, std::span<const TestFunction>(&f, 1), x, policy).values[0];
}

// Mass of [x - eta, x + eta] under the kernel-concentrated measure at x.
inline double concentration(const JacobiParameters& params, std::size_t n, double x, double eta,
                            const DiscretizedMeasure& dm) {
  if (!(eta > 0.0)) throw ValidationError("concentration: eta must be positive");
  if (n < 1) throw ValidationError("concentration: n must be >= 1");
  const std::vector<double> masses = kernel_masses(params.prefix(n), n, x, dm);
  CompensatedSum s;
  for (std::size_t i = 0; i < dm.size(); ++i)
    if (std::abs(dm.nodes()[i] - x) <= eta) s.add(masses[i]);
  return s.value();
}

struct ConcentrationEntry {
  std::size_t n;
  double x;
  double eta;
  double mass;
};

// Masses for every (n, x, eta), each n on its own M = factor * n rule.
inline std::vector<ConcentrationEntry> concentration_report(const GaussRuleCache& cache, std::span<const std::size_t> n_list,
                                                            std::span<const double> xs, std::span<const double> etas,
                                                            std::size_t node_factor = 4) {
  std::vector<ConcentrationEntry> out;
  for (std::size_t n : n_list) {
    if (n < 1) throw ValidationError("concentration: n must be >= 1");
    const std::size_t M = std::min(cache.max_nodes(), std::max<std::size_t>(node_factor * n, 1));
    const auto dm = cache.rule(M);
    const CoeffTable c = cache.params().prefix(n);
    for (double x : xs) {
      const std::vector<double> masses = kernel_masses(c, n, x, *dm);
      for (double eta : etas) {
        if (!(eta > 0.0)) throw ValidationError("concentration: eta must be positive");
        CompensatedSum s;
        for (std::size_t i = 0; i < dm->size(); ++i)
          if (std::abs(dm->nodes()[i] - x) <= eta) s.add(masses[i]);
        out.push_back({n, x, eta, s.value()});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grids

inline std::vector<double> linear_grid(double lo, double hi, std::size_t count) {
  if (count == 0) throw ValidationError("grid: need at least one point");
  if (!(hi >= lo)) throw ValidationError("grid: upper end below lower end");
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i)
    g[i] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return g;
}

// Default density: 41 points per unit length.
inline std::vector<double> density_grid(double lo, double hi, double per_unit = 41.0) {
  const auto count = static_cast<std::size_t>(std::llround((hi - lo) * per_unit)) + 1;
  return linear_grid(lo, hi, std::max<std::size_t>(count, 2));
}

// Drops grid points within `radius` of any exceptional point.
inline std::vector<double> exclude_points(std::span<const double> grid, std::span<const double> points, double radius) {
  std::vector<double> out;
  for (double x : grid) {
    bool keep = true;
    for (double p : points)
      if (std::abs(x - p) < radius) keep = false;
    if (keep) out.push_back(x);
  }
  return out;
}

struct NevaiTrace {
  std::vector<double> grid;
  std::vector<std::size_t> n_list;
  std::vector<std::vector<double>> deviation;  // [n index][x index]
  std::vector<double> sup;                     // per n
};

inline NevaiTrace uniform_trace(const GaussRuleCache& cache, const TestFunction& f, std::span<const double> grid,
                                std::span<const std::size_t> n_list, const QuadraturePolicy& policy = {},
                                std::size_t threads = 1) {
  if (grid.empty()) throw ValidationError("trace: empty grid");
  for (std::size_t k = 1; k < n_list.size(); ++k)
    if (!(n_list[k] > n_list[k - 1])) throw ValidationError("trace: n list must be ascending");
  NevaiTrace t;
  t.grid.assign(grid.begin(), grid.end());
  t.n_list.assign(n_list.begin(), n_list.end());
  for (std::size_t n : n_list) {
    std::vector<double> dev(grid.size());
    parallel_for(grid.size(), threads, [&](std::size_t i) {
      dev[i] = std::abs(nevai_apply(cache, n, f, grid[i], policy) - f(grid[i]));
    });
    t.sup.push_back(*std::max_element(dev.begin(), dev.end()));
    t.deviation.push_back(std::move(dev));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Christoffel ratio

struct RatioBounds {
  double lower;       // 1 / G_n[g](x)
  double ratio;       // K_n(x,x; g dmu) / K_n(x,x; mu)
  double upper;       // G_n[1/g](x)
  double hard_lower;  // 1 / max g over the nodes
  double hard_upper;  // max 1/g over the nodes
  double mass;        // int g dmu
};

// The modified measure is g dmu itself (not renormalized); its kernel is obtained from the
// normalized measure's recurrence divided by the mass int g dmu.
inline RatioBounds ratio_bounds(const JacobiParameters& params, const TestFunction& g, std::size_t n, double x,
                                const DiscretizedMeasure& dm) {
  if (n < 1) throw ValidationError("ratio: n must be >= 1");
  const auto gfn = [&](double y) { return g(y); };
  double gmax = 0.0, inv_max = 0.0;
  for (double y : dm.nodes()) {
    const double v = g(y);
    if (!(v > 0.0)) throw ValidationError("ratio: g must be positive on the nodes");
    gmax = std::max(gmax, v);
    inv_max = std::max(inv_max, 1.0 / v);
  }
  const TestFunction inv = reciprocal(g, inv_max * (1.0 + 1e-12));

  const CoeffTable c = params.prefix(n);
  const std::vector<double> masses = kernel_masses(c, n, x, dm);
  const TestFunction both[2] = {g, inv};
  const std::vector<double> G = apply_masses(masses, dm, both);

  CompensatedSum ms;
  for (std::size_t i = 0; i < dm.size(); ++i) ms.add(dm.weights()[i] * g(dm.nodes()[i]));
  const double mass = ms.value() / dm.total_mass();

  const DiscretizedMeasure modified = modify_measure(dm, gfn);
  const CoeffTable cg = stieltjes_from_discrete(modified, n).coeffs;
  const double log_kg = kernel_diagonal(cg, n, x).log_abs() - std::log(mass);
  const double log_k = kernel_diagonal(c, n, x).log_abs();

  return {1.0 / G[0], std::exp(log_kg - log_k), G[1], 1.0 / gmax, inv_max, mass};
}

// ---------------------------------------------------------------------------
// Atoms

// K_n(x*,x*) mu({x*}) for the discrete measure itself, n <= M.
inline std::vector<double> atom_limit_check(const DiscretizedMeasure& dm, std::size_t node, std::span<const std::size_t> n_list) {
  if (node >= dm.size()) throw ValidationError("atom check: node index out of range");
  std::size_t n_max = 0;
  for (std::size_t n : n_list) {
    if (n < 1) throw ValidationError("atom check: n must be >= 1");
    if (n > dm.size())
      throw ValidationError("atom check: n=" + std::to_string(n) + " exceeds the number of atoms " + std::to_string(dm.size()));
    n_max = std::max(n_max, n);
  }
  const DiscretizedMeasure mu = normalized(dm);
  CoeffTable c;
  if (n_max >= 2) c = stieltjes_from_discrete(mu, std::min(n_max, dm.size() - 1)).coeffs;
  const double x = mu.nodes()[node];
  const double lw = mu.log_weights()[node];
  std::vector<double> out;
  for (std::size_t n : n_list) out.push_back(std::exp(kernel_diagonal(c, n, x).log_abs() + lw));
  return out;
}

}  // namespace nevai
