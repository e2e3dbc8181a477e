#pragma once

// Small dense matrix products over Tensor, routed through the kernel table.

#include "ditto/kernels.hpp"
#include "ditto/tensor.hpp"

namespace ditto::linalg {

// C = A (m x k) * B (k x n)
inline Tensor matmul_nn(const Tensor& a, const Tensor& b) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({m, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = a.data() + static_cast<std::size_t>(i) * k;
        double* crow = c.data() + static_cast<std::size_t>(i) * n;
        for (int l = 0; l < k; ++l)
            kernels::axpy(arow[l], b.data() + static_cast<std::size_t>(l) * n, crow, n);
    }
    return c;
}

// C = A (m x k) * B^T, with B stored (n x k)
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    const int m = a.rows(), k = a.cols(), n = b.rows();
    Tensor c({m, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = a.data() + static_cast<std::size_t>(i) * k;
        double* crow = c.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j)
            crow[j] = kernels::dot(arow, b.data() + static_cast<std::size_t>(j) * k, k);
    }
    return c;
}

// C = A^T * B, with A stored (m x k) and B (m x n); result (k x n)
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({k, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = a.data() + static_cast<std::size_t>(i) * k;
        const double* brow = b.data() + static_cast<std::size_t>(i) * n;
        for (int l = 0; l < k; ++l)
            kernels::axpy(arow[l], brow, c.data() + static_cast<std::size_t>(l) * n, n);
    }
    return c;
}

inline Tensor transpose(const Tensor& a) {
    const int m = a.rows(), n = a.cols();
    Tensor t({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

}  // namespace ditto::linalg
