#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "inchworm/simd/field_kernels.hpp"

using namespace inchworm::simd;

namespace {

struct Batch {
  explicit Batch(std::size_t n) : in(6, std::vector<double>(n)), out(12, std::vector<double>(n)) {}
  std::vector<std::vector<double>> in, out;

  DipoleBatch view(bool gradients) {
    DipoleBatch b{in[0], in[1], in[2], in[3], in[4], in[5], out[0], out[1], out[2], {}};
    if (gradients) {
      for (int c = 0; c < 9; ++c) b.g[c] = out[3 + c];
    }
    return b;
  }
};

void fill(Batch& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> r(-0.05, 0.05), m(-2.0, 2.0);
  for (std::size_t k = 0; k < b.in[0].size(); ++k) {
    for (int c = 0; c < 3; ++c) {
      double v = r(rng);
      if (std::abs(v) < 2e-3) v = 2e-3;
      b.in[c][k] = v;
      b.in[3 + c][k] = m(rng);
    }
  }
}

double worst(const std::vector<double>& a, const std::vector<double>& b) {
  double w = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double s = std::max({std::abs(a[k]), std::abs(b[k]), 1e-300});
    w = std::max(w, std::abs(a[k] - b[k]) / s);
  }
  return w;
}

}  // namespace

TEST(FieldKernels, Avx2MatchesScalarDipoles) {
  if (!avx2_available()) GTEST_SKIP() << "no AVX2 on this machine";
  std::mt19937_64 rng(1);
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 8u, 13u, 64u, 257u}) {
    for (bool grads : {false, true}) {
      Batch a(n), b(n);
      fill(a, rng);
      b.in = a.in;
      dipole_pairs_scalar(a.view(grads));
      dipole_pairs_avx2(b.view(grads));
      for (int c = 0; c < (grads ? 12 : 3); ++c) {
        EXPECT_LT(worst(a.out[c], b.out[c]), 1e-12) << "n " << n << " output " << c;
      }
    }
  }
}

TEST(FieldKernels, Avx2MatchesScalarLoopSum) {
  if (!avx2_available()) GTEST_SKIP() << "no AVX2 on this machine";
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (std::size_t n : {1u, 7u, 360u, 721u}) {
    std::vector<std::vector<double>> s(6, std::vector<double>(n));
    for (auto& col : s) {
      for (double& v : col) v = u(rng);
    }
    const LoopSegments segs{s[0], s[1], s[2], s[3], s[4], s[5]};
    const Sum3 a = loop_sum_scalar(segs, 0.03, -0.02, 0.04);
    const Sum3 b = loop_sum_avx2(segs, 0.03, -0.02, 0.04);
    const double scale = std::abs(a.x) + std::abs(a.y) + std::abs(a.z);
    EXPECT_LT(std::abs(a.x - b.x) + std::abs(a.y - b.y) + std::abs(a.z - b.z), 1e-12 * scale)
        << "n " << n;
  }
}

TEST(FieldKernels, DispatchHonoursOverride) {
  const Isa before = active_isa();
  EXPECT_EQ(set_active_isa(Isa::scalar), Isa::scalar);
  EXPECT_EQ(active_isa(), Isa::scalar);
  const Isa got = set_active_isa(Isa::avx2);
  EXPECT_EQ(got, avx2_available() ? Isa::avx2 : Isa::scalar);
  set_active_isa(before);
}

TEST(FieldKernels, DispatchAgreesWithReference) {
  std::mt19937_64 rng(3);
  Batch a(37), b(37);
  fill(a, rng);
  b.in = a.in;
  dipole_pairs_scalar(a.view(true));
  dipole_pairs(b.view(true));
  for (int c = 0; c < 12; ++c) EXPECT_LT(worst(a.out[c], b.out[c]), 1e-12);
}

TEST(FieldKernels, OnAxisDipoleValue) {
  // m along z at distance d on the axis: B = mu0 m / (2 pi d^3).
  std::vector<double> rx{0.0}, ry{0.0}, rz{0.02}, mx{0.0}, my{0.0}, mz{1.5};
  std::vector<double> bx(1), by(1), bz(1);
  dipole_pairs_scalar({rx, ry, rz, mx, my, mz, bx, by, bz, {}});
  const double mu0 = 4e-7 * std::numbers::pi;
  EXPECT_NEAR(bz[0], mu0 * 1.5 / (2 * std::numbers::pi * 8e-6), 1e-15);
  EXPECT_EQ(bx[0], 0.0);
  EXPECT_EQ(by[0], 0.0);
}
