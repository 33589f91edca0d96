// AVX2 variants of the float kernels. This translation unit is compiled with
// -mavx2 and only entered after a runtime cpuid check (see kernels.cpp).
// No FMA: mul+add keeps lanes bit-identical to the scalar reference.

#include "vitsem/kernels.hpp"

#if defined(VITSEM_HAVE_AVX2)

#include <immintrin.h>

#include <algorithm>

namespace vitsem::kernels {
namespace {

void sub_avx2(const float* a, const float* b, float* out, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 va = _mm256_loadu_ps(a + i);
        __m256 vb = _mm256_loadu_ps(b + i);
        _mm256_storeu_ps(out + i, _mm256_sub_ps(va, vb));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void scale_avx2(const float* x, float s, float* out, size_t n) {
    const __m256 vs = _mm256_set1_ps(s);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(out + i, _mm256_mul_ps(vs, _mm256_loadu_ps(x + i)));
    }
    for (; i < n; ++i) out[i] = s * x[i];
}

void axpy_avx2(float a, const float* x, float* y, size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vy = _mm256_loadu_ps(y + i);
        __m256 vx = _mm256_loadu_ps(x + i);
        vy = _mm256_add_ps(vy, _mm256_mul_ps(va, vx));
        _mm256_storeu_ps(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
}

float dot_avx2(const float* a, const float* b, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 va = _mm256_loadu_ps(a + i);
        __m256 vb = _mm256_loadu_ps(b + i);
        acc = _mm256_add_ps(acc, _mm256_mul_ps(va, vb));
    }
    float total = hsum(acc);
    for (; i < n; ++i) total += a[i] * b[i];
    return total;
}

float reduce_max_avx2(const float* x, size_t n) {
    if (n < 8) {
        float m = x[0];
        for (size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
        return m;
    }
    __m256 vm = _mm256_loadu_ps(x);
    size_t i = 8;
    for (; i + 8 <= n; i += 8) vm = _mm256_max_ps(vm, _mm256_loadu_ps(x + i));
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, vm);
    float m = lanes[0];
    for (int k = 1; k < 8; ++k) m = std::max(m, lanes[k]);
    for (; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

float reduce_sum_avx2(const float* x, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float total = hsum(acc);
    for (; i < n; ++i) total += x[i];
    return total;
}

// Interior outputs vectorize over 8 consecutive positions with shifted loads;
// taps accumulate in the same order as the scalar loop, so interior lanes are
// bit-identical to the reference. Border columns fall back to the clamped
// scalar path.
void conv1d_same_clamp_avx2(const float* src, size_t n, const float* taps, int radius,
                            float* dst) {
    const long ln = static_cast<long>(n);
    const long r = radius;
    auto scalar_at = [&](long i) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) {
            long j = i + k;
            if (j < 0) j = 0;
            if (j >= ln) j = ln - 1;
            acc += taps[k + radius] * src[j];
        }
        dst[i] = acc;
    };

    const long lo = std::min<long>(r, ln);
    for (long i = 0; i < lo; ++i) scalar_at(i);

    long i = lo;
    const long interior_end = ln - r;
    for (; i + 8 <= interior_end; i += 8) {
        __m256 acc = _mm256_setzero_ps();
        for (int k = -radius; k <= radius; ++k) {
            const __m256 t = _mm256_set1_ps(taps[k + radius]);
            acc = _mm256_add_ps(acc, _mm256_mul_ps(t, _mm256_loadu_ps(src + i + k)));
        }
        _mm256_storeu_ps(dst + i, acc);
    }
    for (; i < ln; ++i) scalar_at(i);
}

}  // namespace

namespace detail {
extern const Ops kAvx2Ops;
const Ops kAvx2Ops = {
    sub_avx2,        scale_avx2,      axpy_avx2,            dot_avx2,
    reduce_max_avx2, reduce_sum_avx2, conv1d_same_clamp_avx2,
};
}  // namespace detail

}  // namespace vitsem::kernels

#endif  // VITSEM_HAVE_AVX2
