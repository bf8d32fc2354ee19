#pragma once

#include <cstddef>

// Dense kernels used by the tensor core. Each kernel exists in a serial
// reference form and an OpenMP form. Both compute every output element with
// the same fixed summation order, so results are bit-identical regardless of
// backend or thread count.
namespace hywu::kernels {

enum class Backend { serial, openmp };

Backend backend();
void set_backend(Backend b);
void set_threads(int n);

// C[m x n] = A[m x k] * B[k x n]
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);

// C[m x n] += A[m x k] * B[k x n]
void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n);

// C[k x n] += A^T[k x m] * G[m x n]   (A stored m x k)
void matmul_at_acc(const double* a, const double* g, double* c,
                   std::size_t m, std::size_t k, std::size_t n);

// C[m x k] += G[m x n] * B^T[n x k]   (B stored k x n)
void matmul_bt_acc(const double* g, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);

// Serial reference entry points, kept callable for tests and benchmarks.
namespace serial {
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n);
void matmul_at_acc(const double* a, const double* g, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_bt_acc(const double* g, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
}  // namespace serial

namespace openmp {
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n);
void matmul_at_acc(const double* a, const double* g, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_bt_acc(const double* g, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
}  // namespace openmp

}  // namespace hywu::kernels
