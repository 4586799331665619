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

std::vector<double> to_vec(const CoeffTable& c, bool a) { return a ? c.a : c.b; }

}  // namespace

TEST(Coefficients, MeixnerFirstIndex) {
  const Coeff c = coefficients(Meixner{1.0, 0.25}, 0);
  EXPECT_NEAR(c.a, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(c.b, 1.0 / 3.0, 1e-15);
}

TEST(Coefficients, HermiteSymmetricAndClosedForm) {
  EXPECT_EQ(coefficients(Freud{2.0}, 0).b, 0.0);
  EXPECT_NEAR(coefficients(Freud{2.0}, 3).a, std::sqrt(2.0), 1e-15);
}

TEST(Coefficients, HermiteClosedFormAgreesWithStieltjesOnGaussHermite) {
  // 200-node Gauss-Hermite rule computed by the eigen solver, then orthogonalized again.
  const DiscretizedMeasure dm = gauss_rule(hermite(), 200);
  const CoeffTable c = stieltjes_from_discrete(dm, 60).coeffs;
  for (std::size_t n = 0; n < 60; ++n) {
    EXPECT_NEAR(c.a[n], std::sqrt((n + 1.0) / 2.0), 1e-10 * std::sqrt((n + 1.0) / 2.0));
    EXPECT_NEAR(c.b[n], 0.0, 1e-10);
  }
}

TEST(Coefficients, FreudTwoThroughWeightDiscretizationMatchesClosedForm) {
  const CoeffTable c = weight_coefficients(weight_of(Freud{2.0}), 400);
  for (std::size_t n = 0; n < 400; ++n) EXPECT_NEAR(c.a[n], std::sqrt((n + 1.0) / 2.0), 1e-10 * c.a[n]) << n;
}

TEST(Coefficients, FreudFourSatisfiesStringEquation) {
  // 4 a_n^2 (a_{n-1}^2 + a_n^2 + a_{n+1}^2) = n + 1 for the weight exp(-x^4).
  const JacobiParameters p = make_parameters(Freud{4.0});
  for (std::size_t n = 0; n < 1000; ++n) {
    const double am = n == 0 ? 0.0 : p.a(n - 1), a = p.a(n), ap = p.a(n + 1);
    EXPECT_NEAR(4.0 * a * a * (am * am + a * a + ap * ap), n + 1.0, 1e-10 * (n + 1.0)) << n;
    EXPECT_EQ(p.b(n), 0.0);
  }
}

TEST(Coefficients, GeneralizedHermiteMatchesKnownClosedForm) {
  // Test-only reference: a_n^2 = (n + 1 + t [n even]) / 2 for |x|^t exp(-x^2).
  for (double t : {1.0, -0.5, 2.5}) {
    const JacobiParameters p = make_parameters(GenHermite{t});
    for (std::size_t n = 0; n < 1000; ++n) {
      const double ref = std::sqrt((n + 1.0 + (n % 2 == 0 ? t : 0.0)) / 2.0);
      EXPECT_NEAR(p.a(n), ref, 1e-10 * ref) << "t=" << t << " n=" << n;
    }
  }
}

TEST(Coefficients, LaguerreTypeSquareRootOfFreudFour) {
  // x^{-1/2} exp(-x^2) on (0,inf) is the push-forward of exp(-y^4) by x = y^2:
  // a_n = A_{2n} A_{2n+1}, b_n = A_{2n}^2 + A_{2n-1}^2 with A the Freud-4 coefficients.
  const JacobiParameters lag = make_parameters(LaguerreType{-0.5, 2});
  const JacobiParameters f4 = make_parameters(Freud{4.0});
  for (std::size_t n = 0; n < 600; ++n) {
    const double A0 = f4.a(2 * n), A1 = f4.a(2 * n + 1), Am = n == 0 ? 0.0 : f4.a(2 * n - 1);
    EXPECT_NEAR(lag.a(n), A0 * A1, 1e-10 * A0 * A1) << n;
    EXPECT_NEAR(lag.b(n), A0 * A0 + Am * Am, 1e-10 * (A0 * A0 + Am * Am)) << n;
  }
}

TEST(Coefficients, FreudSelfConsistencyAcrossResolutions) {
  for (double g : {1.0, 1.5, 3.0}) {
    const CoeffTable lo = weight_coefficients(weight_of(Freud{g}), 300);
    const CoeffTable hi = weight_coefficients(weight_of(Freud{g}), 600);
    for (std::size_t n = 0; n < 300; ++n) EXPECT_NEAR(lo.a[n], hi.a[n], 1e-10 * hi.a[n]) << "gamma=" << g << " n=" << n;
  }
}

TEST(Coefficients, PositiveForEveryFamily) {
  PeriodicProfile prof({1.0, 2.0}, {0.5, -1.0});
  const FamilySpec specs[] = {Freud{2.0}, Freud{3.0}, Meixner{2.0, 0.5}, GenHermite{1.0}, LaguerreType{0.5, 3},
                              PeriodicModulated{prof, 0.5}, PeriodicBlend{prof}};
  for (const auto& s : specs) {
    const JacobiParameters p = make_parameters(s);
    for (std::size_t n = 0; n <= 1000; ++n) ASSERT_GT(p.a(n), 0.0) << describe(s) << " n=" << n;
  }
}

TEST(Coefficients, RepeatedQueriesAreIdentical) {
  const JacobiParameters p = make_parameters(Freud{3.0});
  const JacobiParameters q = make_parameters(Freud{3.0});
  for (std::size_t n : {0u, 17u, 999u}) {
    EXPECT_EQ(p.a(n), p.a(n));
    EXPECT_EQ(p.a(n), q.a(n));
    EXPECT_EQ(p.b(n), q.b(n));
  }
}

TEST(Coefficients, ResolutionErrorNamesMaximumIndex) {
  const JacobiParameters p = make_parameters(Freud{3.0}, 200);
  try {
    (void)p.a(5000);
    FAIL() << "expected an error";
  } catch (const ResolutionError& e) {
    EXPECT_EQ(e.max_safe_index(), *p.max_index());
    EXPECT_NE(std::string(e.what()).find("insufficient resolution"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find(std::to_string(*p.max_index())), std::string::npos);
  }
}

TEST(Coefficients, RejectsOutOfRangeParameters) {
  EXPECT_THROW(make_parameters(Freud{0.5}), ValidationError);
  EXPECT_THROW(make_parameters(Meixner{0.0, 0.5}), ValidationError);
  EXPECT_THROW(make_parameters(Meixner{1.0, 1.0}), ValidationError);
  EXPECT_THROW(make_parameters(GenHermite{-1.0}), ValidationError);
  EXPECT_THROW(make_parameters(LaguerreType{-1.0, 2}), ValidationError);
  EXPECT_THROW(make_parameters(LaguerreType{0.0, 1}), ValidationError);
  EXPECT_THROW(PeriodicProfile({1.0, -1.0}, {0.0, 0.0}), ValidationError);
  EXPECT_THROW(PeriodicProfile({1.0}, {0.0, 0.0}), ValidationError);
}

TEST(CustomTable, ParsesCommentsAndColumns) {
  std::istringstream in("# n a b\n0 1.5 0.25\n1 2 -1  # trailing\n\n2 3e0 0\n");
  const JacobiParameters p = parse_coefficient_table(in, "t");
  EXPECT_EQ(*p.max_index(), 2u);
  EXPECT_EQ(p.a(0), 1.5);
  EXPECT_EQ(p.b(1), -1.0);
  EXPECT_EQ(p.a(2), 3.0);
}

TEST(CustomTable, RejectsGapsAndNonPositive) {
  std::istringstream gap("0 1 0\n2 1 0\n");
  EXPECT_THROW(parse_coefficient_table(gap, "t"), ValidationError);
  std::istringstream neg("0 1 0\n1 0 0\n");
  EXPECT_THROW(parse_coefficient_table(neg, "t"), ValidationError);
  std::istringstream junk("0 1 0x\n");
  EXPECT_THROW(parse_coefficient_table(junk, "t"), ValidationError);
  std::istringstream missing("0 1\n");
  EXPECT_THROW(parse_coefficient_table(missing, "t"), ValidationError);
}

TEST(EvalPair, FirstDegree) {
  const JacobiParameters p = hermite();
  const ScaledPair s = eval_pair(p, 1, 1.0);
  EXPECT_EQ(s.prev(), 1.0);
  EXPECT_NEAR(s.curr(), 1.0 / p.a(0), 1e-15);
  EXPECT_EQ(eval_pair(meixner(), 1, -3.7).prev(), 1.0);
}

TEST(EvalPair, SecondDegreeMatchesNaiveRecurrence) {
  const JacobiParameters p = hermite();
  const double p1 = 1.0 / p.a(0);
  const double p2 = (1.0 * p1 - p.a(0)) / p.a(1);
  EXPECT_NEAR(eval_pair(p, 2, 1.0).curr(), p2, 1e-15);
  const auto naive = oracle::naive_polys(p.prefix(3).a, p.prefix(3).b, 2, 1.0L);
  EXPECT_NEAR(eval_pair(p, 2, 1.0).curr(), static_cast<double>(naive[2]), 1e-15);
}

TEST(EvalPair, ScaledAgreesWithNaiveWithinRange) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ux(-30.0, 30.0);
  for (const JacobiParameters& p : {hermite(), meixner()}) {
    const CoeffTable c = p.prefix(401);
    for (int trial = 0; trial < 200; ++trial) {
      const double x = ux(rng);
      const std::size_t n = 1 + rng() % 400;
      const auto naive = oracle::naive_polys(c.a, c.b, n, x);
      const ScaledPair s = eval_pair(p, n, x);
      const long double ref = naive[n];
      // Relative to the pair magnitude: near a zero of p_n the value alone has no relative accuracy.
      const long double scale = std::hypot(ref, naive[n - 1]);
      if (!std::isfinite(static_cast<double>(scale)) || scale < 1e-300L) continue;
      EXPECT_NEAR(s.curr() / static_cast<double>(scale), static_cast<double>(ref / scale), 1e-11) << "n=" << n << " x=" << x;
    }
  }
}

TEST(EvalPair, RescaledMantissaStaysBounded) {
  const JacobiParameters p = meixner();
  for (std::size_t n : {10u, 500u, 3000u}) {
    const ScaledPair s = eval_pair(p, n, -5.0);
    const double m = std::max(std::abs(s.u), std::abs(s.v));
    EXPECT_GT(m, 0.0);
    EXPECT_LT(m, kRescaleBound);
    if (s.exponent != 0) EXPECT_GE(m, 1.0);
  }
  // Far out: the values themselves overflow, the log-scale does not.
  const ScaledPair big = eval_pair(hermite(), 2000, 500.0);
  EXPECT_TRUE(std::isfinite(big.log_scale()));
  EXPECT_GT(big.log_scale(), 700.0);
}

TEST(TransferMatrix, HermiteFirstStep) {
  const JacobiParameters p = hermite();
  const Mat2 B = transfer_matrix(p, 1, 0.0);
  EXPECT_EQ(B.m11, 0.0);
  EXPECT_EQ(B.m12, 1.0);
  EXPECT_NEAR(B.m21, -p.a(0) / p.a(1), 1e-16);
  EXPECT_EQ(B.m22, 0.0);
}

TEST(TransferMatrix, DeterminantIsCoefficientRatio) {
  std::mt19937_64 rng(3);
  const JacobiParameters p = meixner();
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = 1 + rng() % 200;
    const double x = std::uniform_real_distribution<double>(-10, 10)(rng);
    EXPECT_NEAR(transfer_matrix(p, n, x).det(), p.a(n - 1) / p.a(n), 1e-14);
  }
}

TEST(TransferMatrix, ProductAdvancesThePair) {
  const JacobiParameters p = meixner();
  const double x = 0.7;
  const std::size_t n = 5, N = 3;
  ScaledPair s = eval_pair(p, n, x);
  Mat2 prod = Mat2::identity();
  for (std::size_t k = n; k < n + N; ++k) prod = transfer_matrix(p, k, x) * prod;
  const ScaledPair t = apply(prod, s);
  const auto naive = oracle::naive_polys(p.prefix(n + N + 1).a, p.prefix(n + N + 1).b, n + N, x);
  EXPECT_NEAR(t.prev() / static_cast<double>(naive[n + N - 1]), 1.0, 1e-12);
  EXPECT_NEAR(t.curr() / static_cast<double>(naive[n + N]), 1.0, 1e-12);
}

TEST(TransferMatrix, SingleStepMatchesRecurrenceRandomly) {
  std::mt19937_64 rng(5);
  const JacobiParameters p = hermite();
  for (int k = 0; k < 50; ++k) {
    const std::size_t n = 1 + rng() % 300;
    const double x = std::uniform_real_distribution<double>(-5, 5)(rng);
    const ScaledPair s = eval_pair(p, n, x);
    const ScaledPair t = apply(transfer_matrix(p, n, x), s);
    const ScaledPair r = eval_pair(p, n + 1, x);
    const double scale = std::hypot(r.u, r.v);
    EXPECT_NEAR(std::ldexp(t.v, static_cast<int>(t.exponent - r.exponent)), r.v, 1e-14 * scale);
    EXPECT_NEAR(std::ldexp(t.u, static_cast<int>(t.exponent - r.exponent)), r.u, 1e-14 * scale);
  }
}

TEST(PeriodicTransfer, FreudProfile) {
  const PeriodicProfile prof({1.0}, {0.0});
  for (double x : {-1.3, 0.0, 2.0}) {
    const Mat2 X = periodic_transfer(prof, 0, x, false).value;
    EXPECT_EQ(X.m11, 0.0);
    EXPECT_EQ(X.m12, 1.0);
    EXPECT_EQ(X.m21, -1.0);
    EXPECT_EQ(X.m22, x);
  }
  EXPECT_EQ(periodic_transfer(prof, 0, 0.0, true).derivative->trace(), 1.0);
}

TEST(PeriodicTransfer, LaguerreProfileIsJordanBlock) {
  const PeriodicProfile prof({1.0}, {2.0});
  const Mat2 X = periodic_transfer(prof, 0, 0.0, false).value;
  EXPECT_EQ(X.m21, -1.0);
  EXPECT_EQ(X.m22, -2.0);
  EXPECT_EQ(X.trace(), -2.0);
  EXPECT_EQ(X.discr(), 0.0);
  EXPECT_GT((X + Mat2::identity()).max_abs(), 0.5);
}

TEST(PeriodicTransfer, DerivativeMatchesCentralDifference) {
  const PeriodicProfile prof({1.0, 2.5, 0.7}, {0.3, -1.0, 2.0});
  for (std::size_t i = 0; i < 3; ++i) {
    for (double x : {0.0, 0.4, -1.1}) {
      const double h = 1e-5;
      const double fd = (periodic_transfer(prof, i, x + h, false).value.trace() -
                         periodic_transfer(prof, i, x - h, false).value.trace()) /
                        (2 * h);
      const double ex = periodic_transfer(prof, i, x, true).derivative->trace();
      EXPECT_NEAR(ex, fd, 1e-6 * std::max(1.0, std::abs(ex)));
    }
  }
}

TEST(PeriodicTransfer, StepsArePeriodic) {
  const PeriodicProfile prof({1.0, 2.5, 0.7}, {0.3, -1.0, 2.0});
  for (long n = -3; n < 10; ++n) {
    const Mat2 a = profile_step(prof, n, 0.9), b = profile_step(prof, n + 3, 0.9);
    EXPECT_EQ(a.m21, b.m21);
    EXPECT_EQ(a.m22, b.m22);
    EXPECT_NEAR(a.det(), prof.alpha(n - 1) / prof.alpha(n), 1e-15);
  }
  EXPECT_THROW(periodic_transfer(prof, 3, 0.0, false), ValidationError);
}

TEST(Regularity, ConstantSequenceHasNoVariation) {
  const std::vector<double> c(50, 3.25);
  for (double s : difference_sums(c, 3)) EXPECT_EQ(s, 0.0);
}

TEST(Regularity, HarmonicSequenceTelescopes) {
  std::vector<double> x;
  for (int n = 1; n <= 100000; ++n) x.push_back(1.0 / n);
  EXPECT_NEAR(difference_sums(x, 1)[0], 1.0, 1e-4);
}

TEST(Regularity, MeixnerCarlemanKeepsGrowing) {
  const RegularityReport r = regularity_diagnostics(meixner(), 1, 1, 10000);
  EXPECT_TRUE(r.carleman_increasing);
  ASSERT_GE(r.carleman.size(), 10u);
  // a_n ~ (2/3)(n+1): partial sums grow like 1.5 log n, no plateau.
  const double last = r.carleman.back().second, mid = r.carleman[r.carleman.size() - 4].second;
  EXPECT_GT(last - mid, 1.0);
  for (const auto& s : r.sequences) EXPECT_TRUE(std::isfinite(s.sums[0]));
}

TEST(Regularity, RejectsBadArguments) {
  EXPECT_THROW(regularity_diagnostics(meixner(), 0, 1, 10), ValidationError);
  EXPECT_THROW(regularity_diagnostics(meixner(), 3, 1, 3), ValidationError);
}
