#pragma once

// Elementwise and reduction kernels over contiguous double arrays.
// Scalar reference implementations plus AVX2/NEON variants selected at
// runtime. All higher-level tensor code routes through this table, so the
// scalar path doubles as the correctness oracle for the SIMD paths.

#include <cstddef>

namespace ditto::kernels {

enum class Backend { Scalar, Avx2, Neon };

// Active backend. Initialized from CPU detection on first use; tests may
// pin it explicitly to compare variants.
Backend active_backend();
void set_backend(Backend b);
bool backend_supported(Backend b);
const char* backend_name(Backend b);

// out[i] = a[i] (op) b[i]
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void div(const double* a, const double* b, double* out, std::size_t n);

// out[i] = a[i] * c
void scale(const double* a, double c, double* out, std::size_t n);
// y[i] += c * x[i]
void axpy(double c, const double* x, double* y, std::size_t n);
// out[i] = a[i] * b + c[i]
void muladd(const double* a, double b, const double* c, double* out, std::size_t n);

double sum(const double* a, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double sqnorm(const double* a, std::size_t n);

namespace detail {
// Per-variant entry points, exposed for equivalence tests.
struct Table {
    void (*add)(const double*, const double*, double*, std::size_t);
    void (*sub)(const double*, const double*, double*, std::size_t);
    void (*mul)(const double*, const double*, double*, std::size_t);
    void (*div)(const double*, const double*, double*, std::size_t);
    void (*scale)(const double*, double, double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*muladd)(const double*, double, const double*, double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*dot)(const double*, const double*, std::size_t);
    double (*sqnorm)(const double*, std::size_t);
};
const Table& table_for(Backend b);
}  // namespace detail

}  // namespace ditto::kernels
