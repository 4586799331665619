#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nevai/error.hpp"
#include "nevai/jacobi.hpp"
#include "nevai/operator.hpp"
#include "nevai/parallel.hpp"
#include "nevai/quadrature.hpp"
#include "nevai/rng.hpp"
#include "nevai/spectral.hpp"
#include "nevai/test_function.hpp"

namespace nevai {

// Rows phi_i = sqrt(w_i) (p_0(x_i), ..., p_{n-1}(x_i)).
inline Eigen::MatrixXd feature_matrix(const CoeffTable& c, std::size_t n, const DiscretizedMeasure& dm) {
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(dm.size()), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < dm.size(); ++i) {
    const ScaledSequence p = node_polys(c, n, dm, i);
    const double half = 0.5 * dm.log_weights()[i];
    for (std::size_t k = 0; k < n; ++k) {
      const double v = p.m[k] == 0.0 ? 0.0
                                     : std::copysign(std::exp(std::log(std::abs(p.m[k])) +
                                                              static_cast<double>(p.e[k]) * std::numbers::ln2 + half),
                                                     p.m[k]);
      phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
    }
  }
  return phi;
}

inline constexpr double kFeatureOrthonormality = 1e-8;

class EnsembleSampler {
 public:
  // `c` must hold the recurrence of the normalized measure dm (at least n-1 entries).
  EnsembleSampler(const CoeffTable& c, std::size_t n, DiscretizedMeasure dm) : dm_(normalized(dm)), n_(n) {
    if (n < 1) throw ValidationError("ensemble: n must be >= 1");
    if (n > dm_.size()) throw ValidationError("ensemble: n exceeds the number of nodes");
    phi_ = feature_matrix(c, n, dm_);
    const Eigen::MatrixXd gram = phi_.transpose() * phi_;
    const double err = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
    if (err > kFeatureOrthonormality)
      throw ValidationError("ensemble: features not orthonormal on the discretization (error " + std::to_string(err) +
                            "); use an exact rule with at least n nodes");
    diag_ = phi_.rowwise().squaredNorm();
  }

  // Recurrence recovered from the measure itself.
  static EnsembleSampler from_measure(const DiscretizedMeasure& dm, std::size_t n) {
    const DiscretizedMeasure mu = normalized(dm);
    CoeffTable c;
    if (n >= 2) c = stieltjes_from_discrete(mu, std::min(n, mu.size() - 1)).coeffs;
    return EnsembleSampler(c, n, mu);
  }

  const DiscretizedMeasure& measure() const { return dm_; }
  std::size_t n() const { return n_; }
  const Eigen::MatrixXd& features() const { return phi_; }
  // K_n(x_i,x_i) w_i
  const Eigen::VectorXd& kernel_diagonal() const { return diag_; }

  // One draw: n distinct node indices in ascending order.
  std::vector<std::size_t> draw(std::uint64_t seed, std::uint64_t index) const {
    StreamRng rng(seed, index);
    const Eigen::Index M = phi_.rows();
    Eigen::VectorXd resid = diag_;
    Eigen::MatrixXd basis(phi_.cols(), static_cast<Eigen::Index>(n_));
    std::vector<std::size_t> picked;
    for (std::size_t k = 0; k < n_; ++k) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < M; ++i) {
        if (resid[i] < -1e-10) throw ConvergenceError("ensemble: negative residual diagonal (orthogonality lost)");
        if (resid[i] < 0.0) resid[i] = 0.0;
        total += resid[i];
      }
      const double target = rng.uniform() * total;
      double acc = 0.0;
      Eigen::Index chosen = -1;
      for (Eigen::Index i = 0; i < M; ++i) {
        if (resid[i] <= 0.0) continue;
        chosen = i;
        acc += resid[i];
        if (acc > target) break;
      }
      if (chosen < 0) throw ConvergenceError("ensemble: residual kernel vanished before n points were drawn");
      picked.push_back(static_cast<std::size_t>(chosen));

      // New direction: phi_chosen minus its projection on the span so far (twice for stability).
      Eigen::VectorXd e = phi_.row(chosen).transpose();
      const auto prev = basis.leftCols(static_cast<Eigen::Index>(k));
      for (int pass = 0; pass < 2; ++pass) e -= prev * (prev.transpose() * e);
      const double norm = e.norm();
      if (!(norm > 0.0)) throw ConvergenceError("ensemble: degenerate direction");
      e /= norm;
      basis.col(static_cast<Eigen::Index>(k)) = e;
      resid -= (phi_ * e).cwiseAbs2();
      resid[chosen] = 0.0;
    }
    std::sort(picked.begin(), picked.end());
    return picked;
  }

  std::vector<std::vector<std::size_t>> sample(std::uint64_t seed, std::size_t count, std::size_t threads = 1) const {
    std::vector<std::vector<std::size_t>> out(count);
    parallel_for(count, threads, [&](std::size_t d) { out[d] = draw(seed, d); });
    return out;
  }

  // Probability of the subset S: det(Phi_S Phi_S^T).
  double subset_probability(std::span<const std::size_t> S) const {
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(S.size()), phi_.cols());
    for (std::size_t k = 0; k < S.size(); ++k) rows.row(static_cast<Eigen::Index>(k)) = phi_.row(static_cast<Eigen::Index>(S[k]));
    return (rows * rows.transpose()).determinant();
  }

  Eigen::VectorXd values(const TestFunction& f) const {
    Eigen::VectorXd v(phi_.rows());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = f(dm_.nodes()[static_cast<std::size_t>(i)]);
    return v;
  }

  // E[sum_{points} f] = sum_i f(x_i) |phi_i|^2
  double mean(const TestFunction& f) const {
    const Eigen::VectorXd fv = values(f);
    CompensatedSum s;
    for (Eigen::Index i = 0; i < fv.size(); ++i) s.add(fv[i] * diag_[i]);
    return s.value();
  }

  // Var = sum_i f_i^2 |phi_i|^2 - sum_{i,j} f_i f_j (phi_i . phi_j)^2; the double sum is |Phi^T F Phi|_F^2.
  double variance(const TestFunction& f) const {
    const Eigen::VectorXd fv = values(f);
    CompensatedSum s;
    for (Eigen::Index i = 0; i < fv.size(); ++i) s.add(fv[i] * fv[i] * diag_[i]);
    const Eigen::MatrixXd G = phi_.transpose() * fv.asDiagonal() * phi_;
    s.add(-G.squaredNorm());
    return s.value();
  }

  double statistic(const TestFunction& f, std::span<const std::size_t> draw) const {
    CompensatedSum s;
    for (std::size_t i : draw) s.add(f(dm_.nodes()[i]));
    return s.value();
  }

 private:
  DiscretizedMeasure dm_;
  std::size_t n_;
  Eigen::MatrixXd phi_;
  Eigen::VectorXd diag_;
};

struct StatisticReport {
  double exact_mean = 0.0;
  double exact_variance = 0.0;
  double mc_mean = 0.0;
  double mc_variance = 0.0;
  double std_error = 0.0;
  std::size_t draws = 0;
};

inline StatisticReport statistic_report(const EnsembleSampler& es, const TestFunction& f, std::uint64_t seed,
                                        std::size_t draws, std::size_t threads = 1) {
  StatisticReport r;
  r.exact_mean = es.mean(f);
  r.exact_variance = es.variance(f);
  r.draws = draws;
  if (draws == 0) return r;
  std::vector<double> stats(draws);
  parallel_for(draws, threads, [&](std::size_t d) { stats[d] = es.statistic(f, es.draw(seed, d)); });
  CompensatedSum m;
  for (double s : stats) m.add(s);
  r.mc_mean = m.value() / static_cast<double>(draws);
  if (draws > 1) {
    CompensatedSum v;
    for (double s : stats) v.add((s - r.mc_mean) * (s - r.mc_mean));
    r.mc_variance = v.value() / static_cast<double>(draws - 1);
  }
  r.std_error = std::sqrt(r.mc_variance / static_cast<double>(draws));
  return r;
}

struct LlnRow {
  std::size_t n;
  std::size_t nodes;
  double rho;
  double mean_over_rho;
  double mc_mean_over_rho;
  double mc_std_error_over_rho;
  double var_over_rho;
  double target;
  double bound;  // 2 exp(-eps rho / (6 |f|_inf))
  StatisticReport stats;
};

struct LlnOptions {
  std::size_t draws = 0;
  std::uint64_t seed = 0;
  std::size_t node_factor = 4;
  double epsilon = 0.1;
  std::size_t threads = 1;
};

// Linear-statistic law of large numbers along n_list; each n uses the Gauss rule with node_factor * n nodes.
inline std::vector<LlnRow> lln_experiment(const GaussRuleCache& cache, const AsymptoticProfile& prof, const TestFunction& f,
                                          std::span<const std::size_t> n_list, const LlnOptions& opt = {}) {
  if (opt.node_factor < 4) throw ValidationError("lln: node factor must be at least 4");
  if (!(opt.epsilon > 0.0)) throw ValidationError("lln: epsilon must be positive");
  if (!f.bounded()) throw ValidationError("lln: f needs a finite sup-norm bound");
  const double target = integrate_upsilon(prof, [&](double x) { return f(x); });
  std::vector<LlnRow> rows;
  for (std::size_t n : n_list) {
    if (n < 1) throw ValidationError("lln: n must be >= 1");
    const std::size_t M = opt.node_factor * n;
    if (M > cache.max_nodes())
      throw ValidationError("lln: n=" + std::to_string(n) + " needs " + std::to_string(M) + " nodes, above the limit " +
                            std::to_string(cache.max_nodes()));
    const auto dm = cache.rule(M);
    const EnsembleSampler es(cache.params().prefix(n), n, *dm);
    LlnRow row;
    row.n = n;
    row.nodes = M;
    row.rho = prof.rho(n);
    row.stats = statistic_report(es, f, opt.seed, opt.draws, opt.threads);
    row.mean_over_rho = row.stats.exact_mean / row.rho;
    row.var_over_rho = row.stats.exact_variance / row.rho;
    row.mc_mean_over_rho = row.stats.mc_mean / row.rho;
    row.mc_std_error_over_rho = row.stats.std_error / row.rho;
    row.target = target;
    row.bound = 2.0 * std::exp(-opt.epsilon * row.rho / (6.0 * f.bound()));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace nevai
