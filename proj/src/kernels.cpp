#include "hywu/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hywu::kernels {

namespace {
Backend g_backend =
#ifdef _OPENMP
    Backend::openmp;
#else
    Backend::serial;
#endif
}  // namespace

Backend backend() { return g_backend; }
void set_backend(Backend b) { g_backend = b; }

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

namespace serial {

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] += acc;
    }
  }
}

void matmul_at_acc(const double* a, const double* g, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += a[i * k + p] * g[i * n + j];
      c[p * n + j] += acc;
    }
  }
}

void matmul_bt_acc(const double* g, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b[p * n + j];
      c[i * k + p] += acc;
    }
  }
}

}  // namespace serial

namespace openmp {

// Each output element is produced by exactly one thread with the same inner
// summation order as the serial kernel, so outputs are bit-identical.

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] += acc;
    }
  }
}

void matmul_at_acc(const double* a, const double* g, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (long long pp = 0; pp < static_cast<long long>(k); ++pp) {
    const std::size_t p = static_cast<std::size_t>(pp);
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += a[i * k + p] * g[i * n + j];
      c[p * n + j] += acc;
    }
  }
}

void matmul_bt_acc(const double* g, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b[p * n + j];
      c[i * k + p] += acc;
    }
  }
}

}  // namespace openmp

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
  if (g_backend == Backend::openmp) openmp::matmul(a, b, c, m, k, n);
  else serial::matmul(a, b, c, m, k, n);
}

void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n) {
  if (g_backend == Backend::openmp) openmp::matmul_acc(a, b, c, m, k, n);
  else serial::matmul_acc(a, b, c, m, k, n);
}

void matmul_at_acc(const double* a, const double* g, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
  if (g_backend == Backend::openmp) openmp::matmul_at_acc(a, g, c, m, k, n);
  else serial::matmul_at_acc(a, g, c, m, k, n);
}

void matmul_bt_acc(const double* g, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
  if (g_backend == Backend::openmp) openmp::matmul_bt_acc(g, b, c, m, k, n);
  else serial::matmul_bt_acc(g, b, c, m, k, n);
}

}  // namespace hywu::kernels
