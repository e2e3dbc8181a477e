#include "ditto/kernels.hpp"

#include <stdexcept>

#if defined(__x86_64__) || defined(__i386__)
#define DITTO_X86 1
#include <immintrin.h>
#else
#define DITTO_X86 0
#endif

#if defined(__aarch64__)
#define DITTO_NEON 1
#include <arm_neon.h>
#else
#define DITTO_NEON 0
#endif

namespace ditto::kernels {

// ---------------------------------------------------------------- scalar

namespace scalar {

static void add(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
static void sub(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
static void mul(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
static void div(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}
static void scale(const double* a, double c, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * c;
}
static void axpy(double c, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += c * x[i];
}
static void muladd(const double* a, double b, const double* c, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b + c[i];
}
static double sum(const double* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i];
    return s;
}
static double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}
static double sqnorm(const double* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
    return s;
}

static constexpr detail::Table kTable = {add, sub, mul, div, scale, axpy, muladd, sum, dot, sqnorm};

}  // namespace scalar

// ------------------------------------------------------------------ AVX2

#if DITTO_X86

namespace avx2 {

#define DITTO_AVX2_FN __attribute__((target("avx2,fma")))

DITTO_AVX2_FN static void add(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}
DITTO_AVX2_FN static void sub(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}
DITTO_AVX2_FN static void mul(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}
DITTO_AVX2_FN static void div(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_div_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] / b[i];
}
DITTO_AVX2_FN static void scale(const double* a, double c, double* out, std::size_t n) {
    const __m256d vc = _mm256_set1_pd(c);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vc));
    for (; i < n; ++i) out[i] = a[i] * c;
}
DITTO_AVX2_FN static void axpy(double c, const double* x, double* y, std::size_t n) {
    const __m256d vc = _mm256_set1_pd(c);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vc, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += c * x[i];
}
DITTO_AVX2_FN static void muladd(const double* a, double b, const double* c, double* out, std::size_t n) {
    const __m256d vb = _mm256_set1_pd(b);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), vb, _mm256_loadu_pd(c + i)));
    for (; i < n; ++i) out[i] = a[i] * b + c[i];
}

DITTO_AVX2_FN static double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

DITTO_AVX2_FN static double sum(const double* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i];
    return s;
}
DITTO_AVX2_FN static double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}
DITTO_AVX2_FN static double sqnorm(const double* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(a + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * a[i];
    return s;
}

static constexpr detail::Table kTable = {add, sub, mul, div, scale, axpy, muladd, sum, dot, sqnorm};

}  // namespace avx2

#endif  // DITTO_X86

// ------------------------------------------------------------------ NEON

#if DITTO_NEON

namespace neon {

static void add(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}
static void sub(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}
static void mul(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}
static void div(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vdivq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] / b[i];
}
static void scale(const double* a, double c, double* out, std::size_t n) {
    float64x2_t vc = vdupq_n_f64(c);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vc));
    for (; i < n; ++i) out[i] = a[i] * c;
}
static void axpy(double c, const double* x, double* y, std::size_t n) {
    float64x2_t vc = vdupq_n_f64(c);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), vc, vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] += c * x[i];
}
static void muladd(const double* a, double b, const double* c, double* out, std::size_t n) {
    float64x2_t vb = vdupq_n_f64(b);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vfmaq_f64(vld1q_f64(c + i), vld1q_f64(a + i), vb));
    for (; i < n; ++i) out[i] = a[i] * b + c[i];
}
static double sum(const double* a, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(a + i));
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += a[i];
    return s;
}
static double dot(const double* a, const double* b, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}
static double sqnorm(const double* a, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t v = vld1q_f64(a + i);
        acc = vfmaq_f64(acc, v, v);
    }
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += a[i] * a[i];
    return s;
}

static constexpr detail::Table kTable = {add, sub, mul, div, scale, axpy, muladd, sum, dot, sqnorm};

}  // namespace neon

#endif  // DITTO_NEON

// -------------------------------------------------------------- dispatch

bool backend_supported(Backend b) {
    switch (b) {
        case Backend::Scalar: return true;
        case Backend::Avx2:
#if DITTO_X86
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Backend::Neon:
            return DITTO_NEON != 0;
    }
    return false;
}

static Backend detect_backend() {
    if (backend_supported(Backend::Avx2)) return Backend::Avx2;
    if (backend_supported(Backend::Neon)) return Backend::Neon;
    return Backend::Scalar;
}

namespace {
Backend g_backend = detect_backend();
const detail::Table* g_table = &detail::table_for(g_backend);
}  // namespace

Backend active_backend() { return g_backend; }

void set_backend(Backend b) {
    if (!backend_supported(b))
        throw std::runtime_error("kernel backend not supported on this CPU");
    g_backend = b;
    g_table = &detail::table_for(b);
}

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
        case Backend::Neon: return "neon";
    }
    return "?";
}

const detail::Table& detail::table_for(Backend b) {
    switch (b) {
#if DITTO_X86
        case Backend::Avx2: return avx2::kTable;
#endif
#if DITTO_NEON
        case Backend::Neon: return neon::kTable;
#endif
        default: return scalar::kTable;
    }
}

void add(const double* a, const double* b, double* out, std::size_t n) { g_table->add(a, b, out, n); }
void sub(const double* a, const double* b, double* out, std::size_t n) { g_table->sub(a, b, out, n); }
void mul(const double* a, const double* b, double* out, std::size_t n) { g_table->mul(a, b, out, n); }
void div(const double* a, const double* b, double* out, std::size_t n) { g_table->div(a, b, out, n); }
void scale(const double* a, double c, double* out, std::size_t n) { g_table->scale(a, c, out, n); }
void axpy(double c, const double* x, double* y, std::size_t n) { g_table->axpy(c, x, y, n); }
void muladd(const double* a, double b, const double* c, double* out, std::size_t n) { g_table->muladd(a, b, c, out, n); }
double sum(const double* a, std::size_t n) { return g_table->sum(a, n); }
double dot(const double* a, const double* b, std::size_t n) { return g_table->dot(a, b, n); }
double sqnorm(const double* a, std::size_t n) { return g_table->sqnorm(a, n); }

}  // namespace ditto::kernels
