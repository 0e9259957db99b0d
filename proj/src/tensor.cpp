#include "slotrl/tensor.hpp"

#include <atomic>

namespace slotrl {

Tensor::Tensor(std::vector<std::size_t> s, double fill)
    : shape(std::move(s)), data(shape_numel(shape), fill) {}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data.assign(1, v);
  return t;
}

Tensor Tensor::vec(std::vector<double> v) {
  Tensor t;
  t.shape = {v.size()};
  t.data = std::move(v);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  if (v.size() != rows * cols)
    throw std::invalid_argument("Tensor::matrix: " + std::to_string(v.size()) +
                                " values for shape " + shape_str({rows, cols}));
  Tensor t;
  t.shape = {rows, cols};
  t.data = std::move(v);
  return t;
}

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape, 0.0); }

double Tensor::item() const {
  if (data.size() != 1)
    throw std::invalid_argument("Tensor::item: tensor of shape " + shape_str(shape) +
                                " is not a scalar");
  return data[0];
}

std::size_t Tensor::rows() const {
  if (shape.size() != 2) throw std::invalid_argument("Tensor::rows: rank != 2");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (shape.size() != 2) throw std::invalid_argument("Tensor::cols: rank != 2");
  return shape[1];
}

namespace {
std::atomic<int> g_compute_threads{1};
}

void set_compute_threads(int n) { g_compute_threads.store(n < 1 ? 1 : n); }
int compute_threads() { return g_compute_threads.load(); }

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace {

void gemm_nn_edge(std::size_t i_begin, std::size_t i_end, std::size_t j_begin,
                  std::size_t j_end, std::size_t k, std::size_t lda, std::size_t ldb,
                  std::size_t ldc, const double* a, const double* b, double* c) {
  for (std::size_t i = i_begin; i < i_end; ++i) {
    const double* ai = a + i * lda;
    double* ci = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * ldb;
      for (std::size_t j = j_begin; j < j_end; ++j) ci[j] += aip * bp[j];
    }
  }
}

#if defined(__AVX512F__)

// c[0..4) x [0..16) += a(4,k) * b(k,16), all with the given leading strides.
inline void gemm_nn_panel4x16(std::size_t k, std::size_t lda, std::size_t ldb,
                              std::size_t ldc, const double* a, const double* b, double* c) {
  __m512d c00 = _mm512_loadu_pd(c);
  __m512d c01 = _mm512_loadu_pd(c + 8);
  __m512d c10 = _mm512_loadu_pd(c + ldc);
  __m512d c11 = _mm512_loadu_pd(c + ldc + 8);
  __m512d c20 = _mm512_loadu_pd(c + 2 * ldc);
  __m512d c21 = _mm512_loadu_pd(c + 2 * ldc + 8);
  __m512d c30 = _mm512_loadu_pd(c + 3 * ldc);
  __m512d c31 = _mm512_loadu_pd(c + 3 * ldc + 8);
  for (std::size_t p = 0; p < k; ++p) {
    const __m512d b0 = _mm512_loadu_pd(b + p * ldb);
    const __m512d b1 = _mm512_loadu_pd(b + p * ldb + 8);
    __m512d av = _mm512_set1_pd(a[p]);
    c00 = _mm512_fmadd_pd(av, b0, c00);
    c01 = _mm512_fmadd_pd(av, b1, c01);
    av = _mm512_set1_pd(a[lda + p]);
    c10 = _mm512_fmadd_pd(av, b0, c10);
    c11 = _mm512_fmadd_pd(av, b1, c11);
    av = _mm512_set1_pd(a[2 * lda + p]);
    c20 = _mm512_fmadd_pd(av, b0, c20);
    c21 = _mm512_fmadd_pd(av, b1, c21);
    av = _mm512_set1_pd(a[3 * lda + p]);
    c30 = _mm512_fmadd_pd(av, b0, c30);
    c31 = _mm512_fmadd_pd(av, b1, c31);
  }
  _mm512_storeu_pd(c, c00);
  _mm512_storeu_pd(c + 8, c01);
  _mm512_storeu_pd(c + ldc, c10);
  _mm512_storeu_pd(c + ldc + 8, c11);
  _mm512_storeu_pd(c + 2 * ldc, c20);
  _mm512_storeu_pd(c + 2 * ldc + 8, c21);
  _mm512_storeu_pd(c + 3 * ldc, c30);
  _mm512_storeu_pd(c + 3 * ldc + 8, c31);
}

#endif  // __AVX512F__

}  // namespace

void gemm_nn(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c) {
#if defined(__AVX512F__)
  const std::size_t m4 = m - m % 4;
  const std::size_t n16 = n - n % 16;
  for (std::size_t i = 0; i < m4; i += 4)
    for (std::size_t j = 0; j < n16; j += 16)
      gemm_nn_panel4x16(k, k, n, n, a + i * k, b + j, c + i * n + j);
  if (n16 < n) gemm_nn_edge(0, m4, n16, n, k, k, n, n, a, b, c);
  if (m4 < m) gemm_nn_edge(m4, m, 0, n, k, k, n, n, a, b, c);
#else
  gemm_nn_edge(0, m, 0, n, k, k, n, n, a, b, c);
#endif
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c) {
  // b arrives (n, k); materialize b^T once so the hot loop runs unit-stride.
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(m, k, n, a, bt.data(), c);
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c) {
#if defined(__AVX512F__)
  const std::size_t m4 = m - m % 4;
  const std::size_t n16 = n - n % 16;
  constexpr std::size_t kChunk = 192;
  for (std::size_t p0 = 0; p0 < k; p0 += kChunk) {
    const std::size_t p1 = std::min(k, p0 + kChunk);
    for (std::size_t i = 0; i < m4; i += 4) {
      for (std::size_t j = 0; j < n16; j += 16) {
        __m512d c00 = _mm512_loadu_pd(c + i * n + j);
        __m512d c01 = _mm512_loadu_pd(c + i * n + j + 8);
        __m512d c10 = _mm512_loadu_pd(c + (i + 1) * n + j);
        __m512d c11 = _mm512_loadu_pd(c + (i + 1) * n + j + 8);
        __m512d c20 = _mm512_loadu_pd(c + (i + 2) * n + j);
        __m512d c21 = _mm512_loadu_pd(c + (i + 2) * n + j + 8);
        __m512d c30 = _mm512_loadu_pd(c + (i + 3) * n + j);
        __m512d c31 = _mm512_loadu_pd(c + (i + 3) * n + j + 8);
        for (std::size_t p = p0; p < p1; ++p) {
          const double* ap = a + p * m + i;
          const __m512d b0 = _mm512_loadu_pd(b + p * n + j);
          const __m512d b1 = _mm512_loadu_pd(b + p * n + j + 8);
          __m512d av = _mm512_set1_pd(ap[0]);
          c00 = _mm512_fmadd_pd(av, b0, c00);
          c01 = _mm512_fmadd_pd(av, b1, c01);
          av = _mm512_set1_pd(ap[1]);
          c10 = _mm512_fmadd_pd(av, b0, c10);
          c11 = _mm512_fmadd_pd(av, b1, c11);
          av = _mm512_set1_pd(ap[2]);
          c20 = _mm512_fmadd_pd(av, b0, c20);
          c21 = _mm512_fmadd_pd(av, b1, c21);
          av = _mm512_set1_pd(ap[3]);
          c30 = _mm512_fmadd_pd(av, b0, c30);
          c31 = _mm512_fmadd_pd(av, b1, c31);
        }
        _mm512_storeu_pd(c + i * n + j, c00);
        _mm512_storeu_pd(c + i * n + j + 8, c01);
        _mm512_storeu_pd(c + (i + 1) * n + j, c10);
        _mm512_storeu_pd(c + (i + 1) * n + j + 8, c11);
        _mm512_storeu_pd(c + (i + 2) * n + j, c20);
        _mm512_storeu_pd(c + (i + 2) * n + j + 8, c21);
        _mm512_storeu_pd(c + (i + 3) * n + j, c30);
        _mm512_storeu_pd(c + (i + 3) * n + j + 8, c31);
      }
      if (n16 < n) {
        for (std::size_t p = p0; p < p1; ++p) {
          const double* ap = a + p * m + i;
          const double* bp = b + p * n;
          for (std::size_t r = 0; r < 4; ++r) {
            double* ci = c + (i + r) * n;
            for (std::size_t j = n16; j < n; ++j) ci[j] += ap[r] * bp[j];
          }
        }
      }
    }
    for (std::size_t p = p0; p < p1; ++p) {
      const double* ap = a + p * m;
      const double* bp = b + p * n;
      for (std::size_t i = m4; i < m; ++i) {
        const double api = ap[i];
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
      }
    }
  }
#else
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
#endif
}

}  // namespace slotrl
