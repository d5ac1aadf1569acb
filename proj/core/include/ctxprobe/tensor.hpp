#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ctxprobe {

// Dense row-major float32 matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  std::string shape_string() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

// Standard product a[m x k] * b[k x n]. For every output element the k terms
// are accumulated in float32 in ascending k order, so results are bit-stable
// across runs and thread counts. Throws ShapeError if a.cols != b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);

// a[m x k] * b[n x k]^T, same accumulation order as matmul. This is the
// layout of dense layer weights stored as [out_features x in_features].
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

// x * weight^T + bias, with weight shaped [out x in] and bias of length out.
Matrix linear(const Matrix& x, const Matrix& weight, std::span<const float> bias);

// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(Matrix m);
void softmax_rows_inplace(Matrix& m);

// (v - mean) / sqrt(var + eps) * gamma + beta with population variance.
std::vector<float> layer_norm(std::span<const float> v, std::span<const float> gamma,
                              std::span<const float> beta, float eps);
void layer_norm_rows_inplace(Matrix& m, std::span<const float> gamma,
                             std::span<const float> beta, float eps);

// Exact GELU, x * Phi(x) with Phi the standard normal CDF.
float gelu(float x);
float relu(float x);

enum class Activation { kGelu, kRelu };

void apply_activation_inplace(Matrix& m, Activation kind);

// Element-wise a += b; shapes must match.
void add_inplace(Matrix& a, const Matrix& b);

bool all_finite(std::span<const float> v);

}  // namespace ctxprobe
