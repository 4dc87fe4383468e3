// AVX2/FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the runtime check in field_kernels.cpp.
#include <immintrin.h>

#include <cmath>

#include "inchworm/simd/field_kernels.hpp"

namespace inchworm::simd {

namespace {

constexpr double kMu0Over4Pi = 1e-7;

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

void dipole_pairs_avx2(const DipoleBatch& b) {
  const std::size_t n = b.rx.size();
  bool want_grad = true;
  for (const auto& g : b.g) want_grad = want_grad && !g.empty();

  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d three = _mm256_set1_pd(3.0);
  const __m256d five = _mm256_set1_pd(5.0);
  const __m256d kc = _mm256_set1_pd(kMu0Over4Pi);

  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d r[3] = {_mm256_loadu_pd(&b.rx[k]), _mm256_loadu_pd(&b.ry[k]),
                          _mm256_loadu_pd(&b.rz[k])};
    const __m256d m[3] = {_mm256_loadu_pd(&b.mx[k]), _mm256_loadu_pd(&b.my[k]),
                          _mm256_loadu_pd(&b.mz[k])};
    __m256d r2 = _mm256_mul_pd(r[0], r[0]);
    r2 = _mm256_fmadd_pd(r[1], r[1], r2);
    r2 = _mm256_fmadd_pd(r[2], r[2], r2);
    const __m256d inv_r = _mm256_div_pd(one, _mm256_sqrt_pd(r2));
    const __m256d inv_r2 = _mm256_mul_pd(inv_r, inv_r);
    const __m256d inv_r3 = _mm256_mul_pd(inv_r2, inv_r);
    const __m256d inv_r5 = _mm256_mul_pd(inv_r3, inv_r2);
    __m256d mr = _mm256_mul_pd(m[0], r[0]);
    mr = _mm256_fmadd_pd(m[1], r[1], mr);
    mr = _mm256_fmadd_pd(m[2], r[2], mr);
    const __m256d c3 = _mm256_mul_pd(_mm256_mul_pd(kc, three), _mm256_mul_pd(mr, inv_r5));
    const __m256d c1 = _mm256_mul_pd(kc, inv_r3);
    _mm256_storeu_pd(&b.bx[k], _mm256_fmsub_pd(c3, r[0], _mm256_mul_pd(c1, m[0])));
    _mm256_storeu_pd(&b.by[k], _mm256_fmsub_pd(c3, r[1], _mm256_mul_pd(c1, m[1])));
    _mm256_storeu_pd(&b.bz[k], _mm256_fmsub_pd(c3, r[2], _mm256_mul_pd(c1, m[2])));
    if (!want_grad) continue;
    const __m256d s = _mm256_mul_pd(_mm256_mul_pd(kc, three), inv_r5);
    const __m256d fmr = _mm256_mul_pd(five, _mm256_mul_pd(mr, inv_r2));
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        __m256d v = _mm256_mul_pd(m[i], r[j]);
        v = _mm256_fmadd_pd(m[j], r[i], v);
        v = _mm256_fnmadd_pd(_mm256_mul_pd(fmr, r[i]), r[j], v);
        if (i == j) v = _mm256_add_pd(v, mr);
        _mm256_storeu_pd(&b.g[3 * i + j][k], _mm256_mul_pd(s, v));
      }
    }
  }
  if (k < n) {
    DipoleBatch tail = b;
    const std::size_t rest = n - k;
    tail.rx = b.rx.subspan(k, rest);
    tail.ry = b.ry.subspan(k, rest);
    tail.rz = b.rz.subspan(k, rest);
    tail.mx = b.mx.subspan(k, rest);
    tail.my = b.my.subspan(k, rest);
    tail.mz = b.mz.subspan(k, rest);
    tail.bx = b.bx.subspan(k, rest);
    tail.by = b.by.subspan(k, rest);
    tail.bz = b.bz.subspan(k, rest);
    if (want_grad) {
      for (int c = 0; c < 9; ++c) tail.g[c] = b.g[c].subspan(k, rest);
    }
    dipole_pairs_scalar(tail);
  }
}

Sum3 loop_sum_avx2(const LoopSegments& s, double x, double y, double z) {
  const std::size_t n = s.px.size();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d vx = _mm256_set1_pd(x);
  const __m256d vy = _mm256_set1_pd(y);
  const __m256d vz = _mm256_set1_pd(z);
  __m256d ax = _mm256_setzero_pd();
  __m256d ay = _mm256_setzero_pd();
  __m256d az = _mm256_setzero_pd();

  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d rx = _mm256_sub_pd(vx, _mm256_loadu_pd(&s.px[k]));
    const __m256d ry = _mm256_sub_pd(vy, _mm256_loadu_pd(&s.py[k]));
    const __m256d rz = _mm256_sub_pd(vz, _mm256_loadu_pd(&s.pz[k]));
    __m256d r2 = _mm256_mul_pd(rx, rx);
    r2 = _mm256_fmadd_pd(ry, ry, r2);
    r2 = _mm256_fmadd_pd(rz, rz, r2);
    const __m256d inv_r3 = _mm256_div_pd(one, _mm256_mul_pd(r2, _mm256_sqrt_pd(r2)));
    const __m256d dlx = _mm256_loadu_pd(&s.dlx[k]);
    const __m256d dly = _mm256_loadu_pd(&s.dly[k]);
    const __m256d dlz = _mm256_loadu_pd(&s.dlz[k]);
    const __m256d cx = _mm256_fmsub_pd(dly, rz, _mm256_mul_pd(dlz, ry));
    const __m256d cy = _mm256_fmsub_pd(dlz, rx, _mm256_mul_pd(dlx, rz));
    const __m256d cz = _mm256_fmsub_pd(dlx, ry, _mm256_mul_pd(dly, rx));
    ax = _mm256_fmadd_pd(cx, inv_r3, ax);
    ay = _mm256_fmadd_pd(cy, inv_r3, ay);
    az = _mm256_fmadd_pd(cz, inv_r3, az);
  }
  Sum3 acc{hsum(ax), hsum(ay), hsum(az)};
  if (k < n) {
    const std::size_t rest = n - k;
    const LoopSegments tail{s.px.subspan(k, rest),  s.py.subspan(k, rest),
                            s.pz.subspan(k, rest),  s.dlx.subspan(k, rest),
                            s.dly.subspan(k, rest), s.dlz.subspan(k, rest)};
    const Sum3 t = loop_sum_scalar(tail, x, y, z);
    acc.x += t.x;
    acc.y += t.y;
    acc.z += t.z;
  }
  return acc;
}

}  // namespace inchworm::simd
