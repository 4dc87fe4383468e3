#include "inchworm/simd/field_kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>

namespace inchworm::simd {

namespace {

constexpr double kMu0Over4Pi = 1e-7;

bool gradients_requested(const DipoleBatch& b) {
  for (const auto& g : b.g) {
    if (g.empty()) return false;
  }
  return true;
}

Isa detect() {
#if defined(INCHWORM_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  if (const char* env = std::getenv("INCHWORM_SIMD");
      env != nullptr && std::strcmp(env, "scalar") == 0) {
    return Isa::scalar;
  }
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    return Isa::avx2;
  }
#endif
  return Isa::scalar;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

const char* to_string(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool avx2_available() {
#if defined(INCHWORM_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

Isa set_active_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_available()) isa = Isa::scalar;
  active().store(isa, std::memory_order_relaxed);
  return isa;
}

void dipole_pairs_scalar(const DipoleBatch& b) {
  const std::size_t n = b.rx.size();
  const bool want_grad = gradients_requested(b);
  for (std::size_t k = 0; k < n; ++k) {
    const double r[3] = {b.rx[k], b.ry[k], b.rz[k]};
    const double m[3] = {b.mx[k], b.my[k], b.mz[k]};
    const double r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    const double inv_r = 1.0 / std::sqrt(r2);
    const double inv_r2 = inv_r * inv_r;
    const double inv_r3 = inv_r2 * inv_r;
    const double inv_r5 = inv_r3 * inv_r2;
    const double mr = m[0] * r[0] + m[1] * r[1] + m[2] * r[2];
    const double c3 = kMu0Over4Pi * 3.0 * mr * inv_r5;
    const double c1 = kMu0Over4Pi * inv_r3;
    b.bx[k] = c3 * r[0] - c1 * m[0];
    b.by[k] = c3 * r[1] - c1 * m[1];
    b.bz[k] = c3 * r[2] - c1 * m[2];
    if (!want_grad) continue;
    // dB_j/dx_i = 3k/r^5 [m_i r_j + m_j r_i + (m.r) d_ij - 5 (m.r) r_i r_j / r^2]
    const double s = kMu0Over4Pi * 3.0 * inv_r5;
    const double five_mr_inv_r2 = 5.0 * mr * inv_r2;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double v = m[i] * r[j] + m[j] * r[i] - five_mr_inv_r2 * r[i] * r[j];
        if (i == j) v += mr;
        b.g[3 * i + j][k] = s * v;
      }
    }
  }
}

Sum3 loop_sum_scalar(const LoopSegments& s, double x, double y, double z) {
  Sum3 acc;
  const std::size_t n = s.px.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double rx = x - s.px[k];
    const double ry = y - s.py[k];
    const double rz = z - s.pz[k];
    const double r2 = rx * rx + ry * ry + rz * rz;
    const double inv_r3 = 1.0 / (r2 * std::sqrt(r2));
    acc.x += (s.dly[k] * rz - s.dlz[k] * ry) * inv_r3;
    acc.y += (s.dlz[k] * rx - s.dlx[k] * rz) * inv_r3;
    acc.z += (s.dlx[k] * ry - s.dly[k] * rx) * inv_r3;
  }
  return acc;
}

#if !defined(INCHWORM_HAVE_AVX2)
void dipole_pairs_avx2(const DipoleBatch& b) { dipole_pairs_scalar(b); }
Sum3 loop_sum_avx2(const LoopSegments& s, double x, double y, double z) {
  return loop_sum_scalar(s, x, y, z);
}
#endif

void dipole_pairs(const DipoleBatch& b) {
  if (active_isa() == Isa::avx2) {
    dipole_pairs_avx2(b);
  } else {
    dipole_pairs_scalar(b);
  }
}

Sum3 loop_sum(const LoopSegments& s, double x, double y, double z) {
  return active_isa() == Isa::avx2 ? loop_sum_avx2(s, x, y, z)
                                   : loop_sum_scalar(s, x, y, z);
}

}  // namespace inchworm::simd
