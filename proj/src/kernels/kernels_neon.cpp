// NEON variants of the float kernels (aarch64). Mirrors the AVX2 file at
// 4-lane width; mul+add, no fused ops, so lanes match the scalar reference.

#include "vitsem/kernels.hpp"

#if defined(VITSEM_HAVE_NEON)

#include <arm_neon.h>

#include <algorithm>

namespace vitsem::kernels {
namespace {

void sub_neon(const float* a, const float* b, float* out, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        vst1q_f32(out + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void scale_neon(const float* x, float s, float* out, size_t n) {
    const float32x4_t vs = vdupq_n_f32(s);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        vst1q_f32(out + i, vmulq_f32(vs, vld1q_f32(x + i)));
    }
    for (; i < n; ++i) out[i] = s * x[i];
}

void axpy_neon(float a, const float* x, float* y, size_t n) {
    const float32x4_t va = vdupq_n_f32(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t vy = vld1q_f32(y + i);
        vy = vaddq_f32(vy, vmulq_f32(va, vld1q_f32(x + i)));
        vst1q_f32(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

float hsum(float32x4_t v) {
    float32x2_t lo = vget_low_f32(v);
    float32x2_t hi = vget_high_f32(v);
    float32x2_t s = vadd_f32(lo, hi);
    return vget_lane_f32(vpadd_f32(s, s), 0);
}

float dot_neon(const float* a, const float* b, size_t n) {
    float32x4_t acc = vdupq_n_f32(0.0f);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = vaddq_f32(acc, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    }
    float total = hsum(acc);
    for (; i < n; ++i) total += a[i] * b[i];
    return total;
}

float reduce_max_neon(const float* x, size_t n) {
    if (n < 4) {
        float m = x[0];
        for (size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
        return m;
    }
    float32x4_t vm = vld1q_f32(x);
    size_t i = 4;
    for (; i + 4 <= n; i += 4) vm = vmaxq_f32(vm, vld1q_f32(x + i));
    float32x2_t m2 = vmax_f32(vget_low_f32(vm), vget_high_f32(vm));
    float m = vget_lane_f32(vpmax_f32(m2, m2), 0);
    for (; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

float reduce_sum_neon(const float* x, size_t n) {
    float32x4_t acc = vdupq_n_f32(0.0f);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = vaddq_f32(acc, vld1q_f32(x + i));
    float total = hsum(acc);
    for (; i < n; ++i) total += x[i];
    return total;
}

void conv1d_same_clamp_neon(const float* src, size_t n, const float* taps, int radius,
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
    for (; i + 4 <= interior_end; i += 4) {
        float32x4_t acc = vdupq_n_f32(0.0f);
        for (int k = -radius; k <= radius; ++k) {
            const float32x4_t t = vdupq_n_f32(taps[k + radius]);
            acc = vaddq_f32(acc, vmulq_f32(t, vld1q_f32(src + i + k)));
        }
        vst1q_f32(dst + i, acc);
    }
    for (; i < ln; ++i) scalar_at(i);
}

}  // namespace

namespace detail {
extern const Ops kNeonOps;
const Ops kNeonOps = {
    sub_neon,        scale_neon,      axpy_neon,            dot_neon,
    reduce_max_neon, reduce_sum_neon, conv1d_same_clamp_neon,
};
}  // namespace detail

}  // namespace vitsem::kernels

#endif  // VITSEM_HAVE_NEON
