#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "nevai/families.hpp"
#include "nevai/jacobi.hpp"
#include "nevai/quadrature.hpp"
#include "oracles.hpp"

using namespace nevai;

namespace {

JacobiParameters hermite() { return make_parameters(Freud{2.0}); }
JacobiParameters meixner() { return make_parameters(Meixner{1.0, 0.25}); }

SymTridiag random_tridiag(std::mt19937_64& rng, std::size_t M) {
  std::normal_distribution<double> N(0.0, 1.0);
  SymTridiag T;
  for (std::size_t i = 0; i < M; ++i) T.diag.push_back(N(rng));
  for (std::size_t i = 0; i + 1 < M; ++i) T.offdiag.push_back(N(rng));
  return T;
}

}  // namespace

TEST(EigenTridiag, OneByOne) {
  const TridiagEigen e = eigen_tridiag(SymTridiag{{3.0}, {}});
  EXPECT_EQ(e.values[0], 3.0);
  EXPECT_EQ(e.first_components[0], 1.0);
}

TEST(EigenTridiag, TwoByTwoClosedForm) {
  const double a0 = 0.8;
  const TridiagEigen e = eigen_tridiag(SymTridiag{{0.0, 0.0}, {a0}});
  EXPECT_NEAR(e.values[0], -a0, 1e-15);
  EXPECT_NEAR(e.values[1], a0, 1e-15);
  EXPECT_NEAR(e.first_components[0], 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(e.first_components[1], 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(EigenTridiag, MatchesCharacteristicPolynomialBisection) {
  std::mt19937_64 rng(1);
  for (std::size_t M : {3u, 7u, 40u}) {
    for (int trial = 0; trial < 5; ++trial) {
      const SymTridiag T = random_tridiag(rng, M);
      const TridiagEigen e = eigen_tridiag(T);
      const std::vector<double> ref = oracle::tridiag_eigenvalues(T.diag, T.offdiag);
      for (std::size_t i = 0; i < M; ++i) EXPECT_NEAR(e.values[i], ref[i], 1e-13 * T.norm());
    }
  }
}

TEST(EigenTridiag, ResidualsAndFirstComponents) {
  std::mt19937_64 rng(2);
  for (std::size_t M : {16u, 128u, 512u}) {
    const SymTridiag T = random_tridiag(rng, M);
    const TridiagEigen e = eigen_tridiag(T, std::numeric_limits<double>::epsilon(), true);
    double sum = 0.0;
    for (double c : e.first_components) sum += c * c;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (std::size_t k = 1; k < M; ++k) EXPECT_LE(e.values[k - 1], e.values[k]);
    double worst = 0.0;
    for (std::size_t k = 0; k < M; ++k) {
      const double* v = &e.vectors[k * M];
      for (std::size_t i = 0; i < M; ++i) {
        double r = T.diag[i] * v[i] - e.values[k] * v[i];
        if (i > 0) r += T.offdiag[i - 1] * v[i - 1];
        if (i + 1 < M) r += T.offdiag[i] * v[i + 1];
        worst = std::max(worst, std::abs(r));
      }
    }
    EXPECT_LE(worst, 1e-12 * T.norm()) << "M=" << M;
  }
}

TEST(EigenTridiag, RejectsMalformedInput) {
  EXPECT_THROW(eigen_tridiag(SymTridiag{{}, {}}), ValidationError);
  EXPECT_THROW(eigen_tridiag(SymTridiag{{1.0, 2.0}, {}}), ValidationError);
  EXPECT_THROW(eigen_tridiag(SymTridiag{{1.0}, {}}, 0.0), ValidationError);
}

TEST(GaussRule, SingleNode) {
  const DiscretizedMeasure dm = gauss_rule(meixner(), 1);
  ASSERT_EQ(dm.size(), 1u);
  EXPECT_NEAR(dm.nodes()[0], meixner().b(0), 1e-15);
  EXPECT_NEAR(dm.weights()[0], 1.0, 1e-15);
}

TEST(GaussRule, HermiteTwoNodes) {
  const DiscretizedMeasure dm = gauss_rule(hermite(), 2);
  const double a0 = hermite().a(0);
  EXPECT_NEAR(dm.nodes()[0], -a0, 1e-15);
  EXPECT_NEAR(dm.nodes()[1], a0, 1e-15);
  EXPECT_NEAR(dm.weights()[0], 0.5, 1e-15);
  EXPECT_NEAR(dm.weights()[1], 0.5, 1e-15);
  EXPECT_EQ(*dm.exact_degree(), 3u);
}

TEST(GaussRule, MomentsMatchRecurrenceOracle) {
  PeriodicProfile prof({1.0, 2.0}, {0.5, -1.0});
  const FamilySpec specs[] = {Freud{2.0}, Freud{4.0}, Meixner{1.0, 0.25}, GenHermite{1.0}, LaguerreType{-0.5, 2},
                              PeriodicModulated{prof, 0.5}, PeriodicBlend{prof}};
  for (const auto& s : specs) {
    const JacobiParameters p = make_parameters(s);
    for (std::size_t M : {4u, 8u, 10u, 16u}) {
      const DiscretizedMeasure dm = gauss_rule(p, M);
      const CoeffTable c = p.prefix(2 * M + 1);
      const auto mom = oracle::moments(c.a, c.b, 2 * M - 1);
      for (std::size_t k = 0; k <= 2 * M - 1; ++k) {
        const double q = integrate(dm, [k](double x) { return std::pow(x, static_cast<double>(k)); });
        // Odd moments of symmetric laws vanish: compare on the scale of the even neighbour.
        const double scale = std::max(std::fabs(static_cast<double>(mom[k])),
                                      k > 0 ? std::sqrt(std::fabs(static_cast<double>(mom[k - 1] * mom[k + 1 <= 2 * M - 1 ? k + 1 : k - 1]))) : 1.0);
        EXPECT_NEAR(q, static_cast<double>(mom[k]), 1e-10 * std::max(scale, 1e-300)) << describe(s) << " M=" << M << " k=" << k;
      }
    }
  }
}

TEST(GaussRule, LogWeightsAgreeWithFirstComponents) {
  const CoeffTable c = meixner().prefix(64);
  const DiscretizedMeasure a = gauss_rule(c, 64);
  const DiscretizedMeasure b = gauss_rule_golub_welsch(c, 64);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a.nodes()[i], b.nodes()[i], 1e-12 * std::max(1.0, std::abs(a.nodes()[i])));
    if (b.weights()[i] > 1e-200) EXPECT_NEAR(a.weights()[i] / b.weights()[i], 1.0, 1e-8) << i;
  }
}

TEST(GaussRule, LargeHermiteRuleKeepsEveryNode) {
  const DiscretizedMeasure dm = gauss_rule(hermite(), 2048);
  EXPECT_EQ(dm.size(), 2048u);
  EXPECT_NEAR(dm.total_mass(), 1.0, 1e-12);
  // Outermost weight is far below the double range, its logarithm is not.
  EXPECT_EQ(dm.weights().front(), 0.0);
  EXPECT_TRUE(std::isfinite(dm.log_weights().front()));
  EXPECT_LT(dm.log_weights().front(), -800.0);
}

TEST(Stieltjes, FirstCoefficientsAreMomentIdentities) {
  const DiscretizedMeasure dm({-1.0, 0.2, 0.5, 3.0}, {0.1, 0.4, 0.3, 0.2});
  const CoeffTable c = stieltjes_from_discrete(dm, 2).coeffs;
  const double b0 = integrate(dm, [](double x) { return x; });
  const double m2 = integrate(dm, [](double x) { return x * x; });
  EXPECT_NEAR(c.b[0], b0, 1e-15);
  EXPECT_NEAR(c.a[0] * c.a[0], m2 - b0 * b0, 1e-14);
}

TEST(Stieltjes, HermiteRoundTrip) {
  const DiscretizedMeasure dm = gauss_rule(hermite(), 128);
  for (bool reorth : {true, false}) {
    const StieltjesResult r = stieltjes_from_discrete(dm, 50, reorth);
    EXPECT_FALSE(r.beyond_guarantee);
    for (std::size_t n = 0; n < 50; ++n) {
      EXPECT_NEAR(r.coeffs.a[n], hermite().a(n), 1e-10);
      EXPECT_NEAR(r.coeffs.b[n], 0.0, 1e-10);
    }
  }
}

TEST(Stieltjes, RoundTripOnEveryFamilyBelowHalf) {
  const FamilySpec specs[] = {Meixner{1.0, 0.25}, GenHermite{1.0}, LaguerreType{-0.5, 2}, Freud{1.5}};
  for (const auto& s : specs) {
    const JacobiParameters p = make_parameters(s);
    const StieltjesResult r = stieltjes_from_discrete(gauss_rule(p, 200), 99);
    for (std::size_t n = 0; n < 99; ++n) {
      EXPECT_NEAR(r.coeffs.a[n], p.a(n), 1e-10 * std::max(1.0, p.a(n))) << describe(s) << " " << n;
      EXPECT_NEAR(r.coeffs.b[n], p.b(n), 1e-10 * std::max(1.0, std::abs(p.a(n)))) << describe(s) << " " << n;
    }
  }
}

TEST(Stieltjes, FlagsRequestsBeyondHalfAndRejectsFullSize) {
  const DiscretizedMeasure dm = gauss_rule(hermite(), 20);
  EXPECT_TRUE(stieltjes_from_discrete(dm, 15).beyond_guarantee);
  EXPECT_THROW(stieltjes_from_discrete(dm, 20), ValidationError);
}

TEST(ModifyMeasure, ConstantsAreRemovedByNormalization) {
  const DiscretizedMeasure dm = gauss_rule(meixner(), 12);
  const DiscretizedMeasure one = modify_measure(dm, [](double) { return 1.0; });
  const DiscretizedMeasure c = modify_measure(dm, [](double) { return 7.5; });
  for (std::size_t i = 0; i < dm.size(); ++i) {
    EXPECT_NEAR(one.weights()[i], dm.weights()[i], 1e-15);
    EXPECT_NEAR(c.weights()[i], dm.weights()[i], 1e-15);
    EXPECT_EQ(c.nodes()[i], dm.nodes()[i]);
  }
}

TEST(ModifyMeasure, RationalDensityOnHermiteRule) {
  const DiscretizedMeasure dm = gauss_rule(hermite(), 64);
  const DiscretizedMeasure m = modify_measure(dm, [](double x) { return (2 + x * x) / (1 + x * x); });
  for (double w : m.log_weights()) EXPECT_TRUE(std::isfinite(w));
  EXPECT_NEAR(m.total_mass(), 1.0, 1e-14);
}

TEST(ModifyMeasure, NamesTheOffendingNode) {
  const DiscretizedMeasure dm = gauss_rule(hermite(), 5);
  try {
    modify_measure(dm, [](double x) { return x; });
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("node 0"), std::string::npos);
  }
}

TEST(ModifyMeasure, RecoveredPolynomialsAreOrthonormalForModifiedMeasure) {
  const DiscretizedMeasure dm = gauss_rule(hermite(), 128);
  const DiscretizedMeasure m = modify_measure(dm, [](double x) { return (2 + x * x) / (1 + x * x); });
  const std::size_t K = 63;
  const CoeffTable c = stieltjes_from_discrete(m, K).coeffs;
  // Gram matrix of p_0..p_{K-1} against the modified weights.
  std::vector<std::vector<double>> P(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto v = oracle::naive_polys(c.a, c.b, K - 1, m.nodes()[i]);
    P[i].assign(v.begin(), v.end());
  }
  double worst = 0.0;
  for (std::size_t j = 0; j < K; ++j)
    for (std::size_t k = j; k < K; ++k) {
      CompensatedSum s;
      for (std::size_t i = 0; i < m.size(); ++i) s.add(m.weights()[i] * P[i][j] * P[i][k]);
      worst = std::max(worst, std::abs(s.value() - (j == k ? 1.0 : 0.0)));
    }
  EXPECT_LE(worst, 1e-9);
}

TEST(Integrate, BasicIdentities) {
  const DiscretizedMeasure dm = gauss_rule(hermite(), 9);
  EXPECT_NEAR(integrate(dm, [](double) { return 1.0; }), dm.total_mass(), 1e-15);
  EXPECT_NEAR(integrate(dm, [](double x) { return x; }), 0.0, 1e-15);
}

TEST(Integrate, OrthonormalityOnExactRule) {
  const JacobiParameters p = meixner();
  const std::size_t M = 20;
  const DiscretizedMeasure dm = gauss_rule(p, M);
  const CoeffTable c = p.prefix(M);
  for (std::size_t j = 0; j < M; ++j)
    for (std::size_t k = 0; k < M && j + k <= 2 * M - 1; ++k) {
      const double v = integrate(dm, [&](double x) {
        const auto q = oracle::naive_polys(c.a, c.b, std::max<std::size_t>(j, k), x);
        return static_cast<double>(q[j] * q[k]);
      });
      EXPECT_NEAR(v, j == k ? 1.0 : 0.0, 1e-12) << j << "," << k;
    }
}

TEST(MeasureCsv, RoundTripsExactly) {
  const DiscretizedMeasure dm = gauss_rule(meixner(), 17);
  std::stringstream ss;
  write_csv(dm, ss);
  EXPECT_EQ(ss.str().substr(0, 4), "x,w\n");
  const DiscretizedMeasure back = read_csv(ss);
  ASSERT_EQ(back.size(), dm.size());
  for (std::size_t i = 0; i < dm.size(); ++i) {
    EXPECT_EQ(back.nodes()[i], dm.nodes()[i]);
    EXPECT_EQ(back.weights()[i], dm.weights()[i]);
  }
}

TEST(MeasureCsv, RejectsBadRows) {
  std::stringstream a("x,w\n1,0.5\n0,0.5\n");
  EXPECT_THROW(read_csv(a), ValidationError);
  std::stringstream b("x,w\n1,abc\n");
  EXPECT_THROW(read_csv(b), ValidationError);
  std::stringstream c("x,w\n1,-1\n");
  EXPECT_THROW(read_csv(c), ValidationError);
}

TEST(NodeValues, StayOrthonormalOnAtomicMeasure) {
  // Meixner rules put nodes on the integers, where the forward recurrence fails.
  const JacobiParameters p = meixner();
  const std::size_t M = 200, n = 150;
  const DiscretizedMeasure dm = gauss_rule(p, M);
  ASSERT_TRUE(dm.origin());
  EXPECT_LT(dm.origin()->forward_limit(0), n);
  const CoeffTable c = p.prefix(M);
  std::vector<ScaledSequence> rows;
  for (std::size_t i = 0; i < M; ++i) rows.push_back(node_polys(c, n, dm, i));
  double worst = 0.0;
  for (std::size_t j = 0; j < n; j += 7)
    for (std::size_t k = j; k < n; k += 5) {
      CompensatedSum s;
      for (std::size_t i = 0; i < M; ++i)
        s.add(std::exp(dm.log_weights()[i] + std::log(std::abs(rows[i].value(j) * rows[i].value(k)) + 1e-320)) *
              (rows[i].value(j) * rows[i].value(k) < 0 ? -1.0 : 1.0));
      worst = std::max(worst, std::abs(s.value() - (j == k ? 1.0 : 0.0)));
    }
  EXPECT_LE(worst, 1e-10);
}

TEST(NodeValues, ForwardRecurrenceTrustedOnHermiteRule) {
  const DiscretizedMeasure dm = gauss_rule(hermite(), 300);
  for (std::size_t i = 0; i < dm.size(); ++i) EXPECT_EQ(dm.origin()->forward_limit(i), 300u) << i;
}

TEST(NodeValues, PairMatchesSequence) {
  const JacobiParameters p = meixner();
  const DiscretizedMeasure dm = gauss_rule(p, 80);
  const CoeffTable c = p.prefix(80);
  for (std::size_t i : {0u, 3u, 40u, 79u})
    for (std::size_t n : {5u, 60u}) {
      const ScaledSequence q = node_polys(c, n + 1, dm, i);
      const ScaledPair s = node_pair(c, n, dm, i);
      const double scale = std::hypot(q.value(n - 1), q.value(n));
      EXPECT_NEAR(s.prev() / scale, q.value(n - 1) / scale, 1e-12);
      EXPECT_NEAR(s.curr() / scale, q.value(n) / scale, 1e-12);
    }
}
