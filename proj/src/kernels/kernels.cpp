#include "vitsem/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>

namespace vitsem::kernels {

// ============================================================================
// Scalar reference kernels
// ============================================================================
// These define the semantics; SIMD variants must agree with them (see
// tests/test_kernels.cpp). Compiled with -ffp-contract=off so the scalar
// mul+add sequences match the SIMD lanes operation-for-operation.

namespace {

void sub_scalar(const float* a, const float* b, float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void scale_scalar(const float* x, float s, float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = s * x[i];
}

void axpy_scalar(float a, const float* x, float* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

float dot_scalar(const float* a, const float* b, size_t n) {
    float acc = 0.0f;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

float reduce_max_scalar(const float* x, size_t n) {
    float m = x[0];
    for (size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

float reduce_sum_scalar(const float* x, size_t n) {
    float acc = 0.0f;
    for (size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

void conv1d_same_clamp_scalar(const float* src, size_t n, const float* taps, int radius,
                              float* dst) {
    const long ln = static_cast<long>(n);
    for (long i = 0; i < ln; ++i) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) {
            long j = i + k;
            if (j < 0) j = 0;
            if (j >= ln) j = ln - 1;
            acc += taps[k + radius] * src[j];
        }
        dst[i] = acc;
    }
}

constexpr detail::Ops kScalarOps = {
    sub_scalar,       scale_scalar,      axpy_scalar,           dot_scalar,
    reduce_max_scalar, reduce_sum_scalar, conv1d_same_clamp_scalar,
};

}  // namespace

// Defined in kernels_avx2.cpp / kernels_neon.cpp when the target supports them.
#if defined(VITSEM_HAVE_AVX2)
namespace detail {
extern const Ops kAvx2Ops;
}
#endif
#if defined(VITSEM_HAVE_NEON)
namespace detail {
extern const Ops kNeonOps;
}
#endif

namespace {

bool cpu_has_avx2() {
#if defined(VITSEM_HAVE_AVX2) && defined(__GNUC__)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

bool cpu_has_neon() {
#if defined(VITSEM_HAVE_NEON)
    return true;  // baseline on aarch64
#else
    return false;
#endif
}

Isa detect_isa() {
    if (const char* env = std::getenv("VITSEM_ISA")) {
        if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
        if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Isa::avx2;
        if (std::strcmp(env, "neon") == 0 && cpu_has_neon()) return Isa::neon;
        // unknown or unavailable value falls through to auto
    }
    if (cpu_has_avx2()) return Isa::avx2;
    if (cpu_has_neon()) return Isa::neon;
    return Isa::scalar;
}

Isa g_active = detect_isa();

}  // namespace

const detail::Ops& detail::ops_for(Isa isa) {
    switch (isa) {
#if defined(VITSEM_HAVE_AVX2)
        case Isa::avx2:
            return detail::kAvx2Ops;
#endif
#if defined(VITSEM_HAVE_NEON)
        case Isa::neon:
            return detail::kNeonOps;
#endif
        default:
            return kScalarOps;
    }
}

Isa active_isa() { return g_active; }

void set_active_isa(Isa isa) { g_active = isa_available(isa) ? isa : Isa::scalar; }

bool isa_available(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
            return cpu_has_avx2();
        case Isa::neon:
            return cpu_has_neon();
    }
    return false;
}

const char* isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return "scalar";
        case Isa::avx2:
            return "avx2";
        case Isa::neon:
            return "neon";
    }
    return "?";
}

void sub(const float* a, const float* b, float* out, size_t n) {
    detail::ops_for(g_active).sub(a, b, out, n);
}
void scale(const float* x, float s, float* out, size_t n) {
    detail::ops_for(g_active).scale(x, s, out, n);
}
void axpy(float a, const float* x, float* y, size_t n) {
    detail::ops_for(g_active).axpy(a, x, y, n);
}
float dot(const float* a, const float* b, size_t n) {
    return detail::ops_for(g_active).dot(a, b, n);
}
float reduce_max(const float* x, size_t n) { return detail::ops_for(g_active).reduce_max(x, n); }
float reduce_sum(const float* x, size_t n) { return detail::ops_for(g_active).reduce_sum(x, n); }
void conv1d_same_clamp(const float* src, size_t n, const float* taps, int radius, float* dst) {
    detail::ops_for(g_active).conv1d_same_clamp(src, n, taps, radius, dst);
}

}  // namespace vitsem::kernels
