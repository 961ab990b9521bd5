#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "loft/error.hpp"
#include "loft/rng.hpp"
#include "loft/sim.hpp"
#include "support/oracles.hpp"

using namespace loft;
using namespace std::complex_literals;

namespace {

TransmissionMatrix row_1_i() { return TransmissionMatrix(1, 2, {1.0, 1i}); }

std::vector<double> random_phase(std::size_t n, Rng& r) {
  std::vector<double> v(n);
  for (double& x : v) x = r.uniform();
  return v;
}

}  // namespace

TEST(GenTm, ShapeAndDeterminism) {
  const auto a = gen_tm(1024, 4096, 7);
  EXPECT_EQ(a.rows(), 4096u);
  EXPECT_EQ(a.cols(), 1024u);
  EXPECT_EQ(a.seed(), 7u);
  EXPECT_TRUE(a == gen_tm(1024, 4096, 7));
  EXPECT_FALSE(a == gen_tm(1024, 4096, 8));
}

TEST(GenTm, UnitSecondMomentAndZeroMean) {
  const auto t = gen_tm(1024, 4096, 7);
  double power = 0.0;
  cplx mean = 0.0;
  double re2 = 0.0;
  for (cplx v : t.entries()) {
    power += std::norm(v);
    mean += v;
    re2 += v.real() * v.real();
  }
  const double n = static_cast<double>(t.entries().size());
  EXPECT_GE(power / n, 0.98);
  EXPECT_LE(power / n, 1.02);
  EXPECT_LT(std::abs(mean / n), 0.01);
  EXPECT_NEAR(re2 / n, 0.5, 0.01);
}

TEST(GenTm, SmallMatrixMomentWindow) {
  const auto t = gen_tm(100, 100, 3);
  double power = 0.0;
  for (cplx v : t.entries()) power += std::norm(v);
  EXPECT_GE(power / 1e4, 0.9);
  EXPECT_LE(power / 1e4, 1.1);
}

TEST(GenTm, ZeroDimensionsRejected) {
  EXPECT_THROW(gen_tm(0, 4, 1), std::invalid_argument);
  EXPECT_THROW(gen_tm(4, 0, 1), std::invalid_argument);
}

TEST(TransmissionMatrixType, RejectsNonFinite) {
  EXPECT_THROW(TransmissionMatrix(1, 1, {cplx(NAN, 0.0)}), NumericFault);
  EXPECT_THROW(TransmissionMatrix(1, 2, {1.0}), ShapeError);
}

TEST(Propagate, SingleMode) {
  const auto e = propagate(TransmissionMatrix(1, 1, {1.0}), PhasePattern({0.0}));
  ASSERT_EQ(e.values.size(), 1u);
  EXPECT_NEAR(std::abs(e.values[0] - cplx(1.0)), 0.0, 1e-15);
}

TEST(Propagate, FlatPhaseOnRowOneI) {
  const auto e = propagate(row_1_i(), PhasePattern({0.0, 0.0}));
  EXPECT_NEAR(std::abs(e.values[0] - (1.0 + 1i) / std::sqrt(2.0)), 0.0, 1e-15);
  EXPECT_NEAR(intensity(e, false)[0], 1.0, 1e-15);
}

TEST(Propagate, AlignedPhaseDoublesIntensity) {
  const auto e = propagate(row_1_i(), PhasePattern({0.0, 0.75}));
  EXPECT_NEAR(std::abs(e.values[0] - cplx(std::sqrt(2.0))), 0.0, 1e-15);
  EXPECT_NEAR(intensity(e, false)[0], 2.0, 1e-14);
}

TEST(Propagate, ShapeMismatch) {
  EXPECT_THROW(propagate(row_1_i(), PhasePattern({0.0})), ShapeError);
}

TEST(Propagate, MatchesDirectFormula) {
  Rng r(11);
  const auto tm = gen_tm(16, 9, 5);
  const auto ph = random_phase(16, r);
  const auto oracle = oracle::naive_intensity(tm, ph);
  const auto s = speckle(tm, PhasePattern(ph), false);
  for (std::size_t m = 0; m < 9; ++m) EXPECT_NEAR(s[m], oracle[m], 1e-12 * std::max(1.0, oracle[m]));
}

TEST(Propagate, LinearInInputExponentials) {
  // E(u) = T u / sqrt(N) with u_n = exp(i 2 pi phi_n): check superposition E(u1) + E(u2) against the field
  // built from u1 + u2 directly through the matrix.
  Rng r(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto tm = gen_tm(12, 7, 100 + trial);
    const auto p1 = random_phase(12, r), p2 = random_phase(12, r);
    const auto e1 = propagate(tm, PhasePattern(p1)), e2 = propagate(tm, PhasePattern(p2));
    for (std::size_t m = 0; m < 7; ++m) {
      cplx direct = 0.0;
      for (std::size_t n = 0; n < 12; ++n) {
        direct += tm(m, n) * (std::polar(1.0, 2 * std::numbers::pi * p1[n]) + std::polar(1.0, 2 * std::numbers::pi * p2[n]));
      }
      direct /= std::sqrt(12.0);
      EXPECT_NEAR(std::abs(e1.values[m] + e2.values[m] - direct), 0.0, 1e-12);
    }
  }
}

TEST(Propagate, DeterministicFields) {
  const auto tm = gen_tm(8, 8, 1);
  const PhasePattern p(std::vector<double>(8, 0.3));
  const auto a = propagate(tm, p), b = propagate(tm, p);
  for (std::size_t m = 0; m < 8; ++m) EXPECT_EQ(a.values[m], b.values[m]);
}

TEST(Intensity, NormalizeToUnitMaxAndZeroNoop) {
  const auto s = intensity(ComplexField{{1.0, 2.0, cplx(0.0, 1.0)}}, true);
  EXPECT_DOUBLE_EQ(s[1], 1.0);
  EXPECT_DOUBLE_EQ(s[0], 0.25);
  EXPECT_TRUE(s.normalized());
  EXPECT_DOUBLE_EQ(s.scale(), 4.0);
  const auto z = intensity(ComplexField{{0.0, 0.0}}, true);
  EXPECT_EQ(z[0], 0.0);
  EXPECT_THROW(intensity(ComplexField{}, false), std::invalid_argument);
}

TEST(SpeckleStats, RandomPhaseMeanIntensityNearOne) {
  const auto tm = gen_tm(64, 256, 21);
  Rng r(2);
  double acc = 0.0;
  const int trials = 400;  // 256 * 400 > 1e5
  for (int t = 0; t < trials; ++t) {
    const auto s = speckle(tm, PhasePattern(random_phase(64, r)), false);
    for (double v : s.values()) acc += v;
  }
  EXPECT_NEAR(acc / (256.0 * trials), 1.0, 0.05);
}

TEST(SpeckleStats, SingleModeContrastNearOne) {
  const auto tm = gen_tm(64, 1, 8);
  Rng r(3);
  double sum = 0.0, sq = 0.0;
  const int n = 10000;
  std::vector<double> draws(n);
  for (int t = 0; t < n; ++t) {
    const double v = speckle(tm, PhasePattern(random_phase(64, r)), false)[0];
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  EXPECT_GE(var / (mean * mean), 0.8);
  EXPECT_LE(var / (mean * mean), 1.2);
}

TEST(PhasePatternType, RangeSideAndQuantize) {
  EXPECT_THROW(PhasePattern({1.5}), RangeError);
  EXPECT_THROW(PhasePattern({-0.1}), RangeError);
  EXPECT_EQ(PhasePattern(std::vector<double>(16, 0.0)).side(), 4u);
  EXPECT_THROW(PhasePattern(std::vector<double>(5, 0.0)).side(), ShapeError);
  const auto q = PhasePattern({0.0, 0.49, 0.999, 1.0 / 64.0 + 1e-9}).quantized(32);
  EXPECT_EQ(q[0], 0.0);
  EXPECT_EQ(q[1], 16.0 / 32.0);
  EXPECT_EQ(q[2], 0.0);  // wraps to level 0
  EXPECT_EQ(q[3], 1.0 / 32.0);
  EXPECT_EQ(q.levels(), 32);
  for (double v : q.values()) EXPECT_EQ(std::round(v * 32.0), v * 32.0);
}

TEST(SpeckleType, Invariants) {
  EXPECT_THROW(SpecklePattern({-1.0}, false), RangeError);
  EXPECT_THROW(SpecklePattern({2.0}, true), RangeError);
  EXPECT_DOUBLE_EQ(SpecklePattern({0.5, 1.0}, 3.0).scale(), 3.0);
  const auto n = SpecklePattern({1.0, 4.0}, false).normalize();
  EXPECT_DOUBLE_EQ(n[1], 1.0);
  EXPECT_DOUBLE_EQ(n.scale(), 4.0);
}

TEST(Hadamard, SmallBases) {
  const auto h1 = hadamard_basis(1);
  ASSERT_EQ(h1.size(), 1u);
  EXPECT_EQ(h1[0][0], 0.0);
  const auto h2 = hadamard_basis(2);
  EXPECT_EQ(h2[0].values()[1], 0.0);
  EXPECT_EQ(h2[1].values()[0], 0.0);
  EXPECT_EQ(h2[1].values()[1], 0.5);
}

TEST(Hadamard, OrthogonalEncodings) {
  for (std::size_t n : {4u, 8u, 64u}) {
    const auto h = hadamard_basis(n);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        long dot = 0;
        for (std::size_t k = 0; k < n; ++k) dot += (h[a][k] == 0.0 ? 1 : -1) * (h[b][k] == 0.0 ? 1 : -1);
        EXPECT_EQ(dot, a == b ? static_cast<long>(n) : 0);
      }
    }
  }
}

TEST(Hadamard, NonPowerOfTwoRejected) {
  EXPECT_THROW(hadamard_basis(6), std::invalid_argument);
  EXPECT_THROW(hadamard_basis(0), std::invalid_argument);
}
