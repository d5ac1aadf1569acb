#include "ctxprobe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

Matrix::Matrix(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    std::ostringstream os;
    os << "matrix data length " << data_.size() << " does not match shape [" << rows << " x "
       << cols << "]";
    throw ShapeError(os.str());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

std::string Matrix::shape_string() const {
  std::ostringstream os;
  os << "[" << rows_ << " x " << cols_ << "]";
  return os.str();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix c(m, n);
  // i-k-j loop: each c(i, j) receives its k terms in ascending k order.
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c.row(i).data();
    const float* arow = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const float aval = arow[p];
      const float* brow = b.row(p).data();
      for (std::size_t j = 0; j < n; ++j) crow[j] += aval * brow[j];
    }
  }
  return c;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transposed: cannot multiply " + a.shape_string() + " by the transpose of " +
                     b.shape_string());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Matrix c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a.row(i).data();
    for (std::size_t j = 0; j < n; ++j) {
      const float* brow = b.row(j).data();
      float acc = 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c(i, j) = acc;
    }
  }
  return c;
}

Matrix linear(const Matrix& x, const Matrix& weight, std::span<const float> bias) {
  if (bias.size() != weight.rows()) {
    std::ostringstream os;
    os << "linear: bias length " << bias.size() << " does not match weight " << weight.shape_string();
    throw ShapeError(os.str());
  }
  Matrix y = matmul_transposed(x, weight);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
  }
  return y;
}

void softmax_rows_inplace(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    if (r.empty()) continue;
    const float mx = *std::max_element(r.begin(), r.end());
    float sum = 0.0f;
    for (float& v : r) {
      v = std::exp(v - mx);
      sum += v;
    }
    const float inv = 1.0f / sum;
    for (float& v : r) v *= inv;
  }
}

Matrix softmax_rows(Matrix m) {
  softmax_rows_inplace(m);
  return m;
}

namespace {

void layer_norm_into(std::span<const float> v, std::span<const float> gamma,
                     std::span<const float> beta, float eps, std::span<float> out) {
  const std::size_t d = v.size();
  if (d == 0) throw ShapeError("layer_norm: empty input");
  if (gamma.size() != d || beta.size() != d) {
    std::ostringstream os;
    os << "layer_norm: input length " << d << " but gamma/beta lengths " << gamma.size() << "/"
       << beta.size();
    throw ShapeError(os.str());
  }
  // Moments in double: float32 sums lose the centred signal when |mean| >> std.
  double mean = 0.0;
  for (float x : v) mean += x;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (float x : v) {
    const double c = x - mean;
    var += c * c;
  }
  var /= static_cast<double>(d);
  const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
  for (std::size_t i = 0; i < d; ++i) {
    // Zero variance with eps == 0 would divide by zero; the centered value is
    // exactly 0 then, so the output collapses to beta.
    const double c = v[i] - mean;
    const double n = (c == 0.0) ? 0.0 : c * inv;
    out[i] = static_cast<float>(n * gamma[i] + beta[i]);
  }
}

}  // namespace

std::vector<float> layer_norm(std::span<const float> v, std::span<const float> gamma,
                              std::span<const float> beta, float eps) {
  std::vector<float> out(v.size());
  layer_norm_into(v, gamma, beta, eps, out);
  return out;
}

void layer_norm_rows_inplace(Matrix& m, std::span<const float> gamma,
                             std::span<const float> beta, float eps) {
  std::vector<float> tmp(m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    layer_norm_into(m.row(i), gamma, beta, eps, tmp);
    std::copy(tmp.begin(), tmp.end(), m.row(i).begin());
  }
}

float gelu(float x) {
  return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752440f));
}

float relu(float x) { return x > 0.0f ? x : 0.0f; }

void apply_activation_inplace(Matrix& m, Activation kind) {
  auto d = m.data();
  switch (kind) {
    case Activation::kGelu:
      for (float& v : d) v = gelu(v);
      break;
    case Activation::kRelu:
      for (float& v : d) v = relu(v);
      break;
  }
}

void add_inplace(Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("add: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
}

bool all_finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

}  // namespace ctxprobe
