#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace slotrl {

// Dense row-major tensor of 64-bit floats. Rank 0 (shape {}) holds a scalar.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);

  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
  static Tensor zeros_like(const Tensor& t);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return data.size() == 1; }
  double item() const;

  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

std::string shape_str(const std::vector<std::size_t>& s);
std::size_t shape_numel(const std::vector<std::size_t>& s);

// Accumulating matrix kernels, row-major:
//   gemm_nn: c(m,n) += a(m,k) * b(k,n)
//   gemm_nt: c(m,n) += a(m,k) * b(n,k)^T
//   gemm_tn: c(m,n) += a(k,m)^T * b(k,n)
void gemm_nn(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c);
void gemm_nt(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c);
void gemm_tn(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c);

// Worker threads for forward-only bulk math (row-partitioned, so results are
// bitwise identical for any setting).
void set_compute_threads(int n);
int compute_threads();

}  // namespace slotrl
