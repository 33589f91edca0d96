#pragma once

#include <cstddef>
#include <string>

// Data-parallel float kernels behind the image and transformer code paths.
// Each operation has a scalar reference implementation plus AVX2/NEON
// variants; the active instruction set is resolved once at startup from the
// CPU (override with VITSEM_ISA=scalar|avx2|neon or set_active_isa, mainly
// for the equivalence tests).

namespace vitsem::kernels {

enum class Isa { scalar, avx2, neon };

Isa active_isa();
void set_active_isa(Isa isa);
const char* isa_name(Isa isa);

// True if the variant can run on this machine.
bool isa_available(Isa isa);

// out[i] = a[i] - b[i]
void sub(const float* a, const float* b, float* out, size_t n);

// out[i] = s * x[i]
void scale(const float* x, float s, float* out, size_t n);

// y[i] += a * x[i]
void axpy(float a, const float* x, float* y, size_t n);

// sum_i a[i] * b[i]
float dot(const float* a, const float* b, size_t n);

float reduce_max(const float* x, size_t n);
float reduce_sum(const float* x, size_t n);

// 1-D correlation with a symmetric tap set of given radius, same-size
// output, clamp-to-border on both ends. taps has 2*radius+1 entries.
void conv1d_same_clamp(const float* src, size_t n, const float* taps, int radius, float* dst);

namespace detail {
// Per-ISA entry points, exposed for the equivalence tests.
struct Ops {
    void (*sub)(const float*, const float*, float*, size_t);
    void (*scale)(const float*, float, float*, size_t);
    void (*axpy)(float, const float*, float*, size_t);
    float (*dot)(const float*, const float*, size_t);
    float (*reduce_max)(const float*, size_t);
    float (*reduce_sum)(const float*, size_t);
    void (*conv1d_same_clamp)(const float*, size_t, const float*, int, float*);
};
const Ops& ops_for(Isa isa);
}  // namespace detail

}  // namespace vitsem::kernels
