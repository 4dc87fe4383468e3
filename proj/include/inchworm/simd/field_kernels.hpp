// Data-parallel field kernels with a scalar reference and an AVX2 variant.
//
// The scalar functions are the reference; the AVX2 versions must agree with
// them to rounding (see tests/test_field_kernels.cpp). The dispatching entry
// points pick the widest variant the running CPU supports, unless the
// INCHWORM_SIMD environment variable is set to "scalar".
#pragma once

#include <cstddef>
#include <span>

namespace inchworm::simd {

enum class Isa { scalar, avx2 };

const char* to_string(Isa isa);

/// True when the AVX2 variant was compiled in and the CPU reports AVX2+FMA.
bool avx2_available();

/// Variant used by the dispatching entry points.
Isa active_isa();

/// Overrides the dispatch choice (tests). Requesting avx2 on a machine
/// without it falls back to scalar; the effective choice is returned.
Isa set_active_isa(Isa isa);

/// Structure-of-arrays batch of point dipoles evaluated at one point each.
///
/// For pair k: r = point_k - source_k, m = moment_k. Outputs B (tesla) and
/// the gradient tensor grad(i, j) = dB_j/dx_i stored row-major in g[9].
struct DipoleBatch {
  std::span<const double> rx, ry, rz;  // point - source, metres
  std::span<const double> mx, my, mz;  // dipole moment, A m^2
  std::span<double> bx, by, bz;
  std::span<double> g[9];  // may be empty spans when gradients are unused
};

void dipole_pairs_scalar(const DipoleBatch& batch);
void dipole_pairs_avx2(const DipoleBatch& batch);
void dipole_pairs(const DipoleBatch& batch);

/// Loop quadrature: segment midpoints (px, py, pz) and current elements
/// (dlx, dly, dlz, already scaled by the segment length). Returns the sum of
/// dl x r / |r|^3 evaluated at `point`; the caller applies mu0 I / 4 pi.
struct LoopSegments {
  std::span<const double> px, py, pz;
  std::span<const double> dlx, dly, dlz;
};

struct Sum3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

Sum3 loop_sum_scalar(const LoopSegments& segs, double x, double y, double z);
Sum3 loop_sum_avx2(const LoopSegments& segs, double x, double y, double z);
Sum3 loop_sum(const LoopSegments& segs, double x, double y, double z);

}  // namespace inchworm::simd
