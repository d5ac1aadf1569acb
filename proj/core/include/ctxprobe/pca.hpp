#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ctxprobe/tensor.hpp"

namespace ctxprobe {

// Top-k principal axes of a sample matrix.
struct PcaModel {
  std::vector<double> mean;
  std::vector<std::vector<double>> axes;    // k unit vectors, mutually orthogonal
  std::vector<double> explained_variance;   // descending, sample variance (n - 1)
  double total_variance = 0.0;              // trace of the sample covariance
  std::size_t n_samples = 0;

  std::size_t dim() const noexcept { return mean.size(); }
  std::size_t components() const noexcept { return axes.size(); }
};

// Mean-centred eigendecomposition of the sample covariance. When n <= d the
// n x n Gram matrix is decomposed instead (same non-zero spectrum). Each
// axis is signed so its largest-magnitude component is positive.
// Throws InsufficientDataError if n < 3, ShapeError if d < 2 or k > d.
PcaModel pca_fit(const Matrix& x, std::size_t k = 2);

std::vector<double> pca_project(const PcaModel& model, std::span<const float> v);

// Squared Euclidean distance between the projections of a and b.
double squared_l2_pcs(const PcaModel& model, std::span<const float> a, std::span<const float> b);

}  // namespace ctxprobe
