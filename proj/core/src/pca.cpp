#include "ctxprobe/pca.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

namespace {

void fix_sign(Eigen::VectorXd& axis) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < axis.size(); ++i) {
    if (std::abs(axis[i]) > std::abs(axis[best])) best = i;
  }
  if (axis[best] < 0) axis = -axis;
}

// Completes `axes` with a unit vector orthogonal to all previous ones. Used
// when the data has fewer non-degenerate directions than requested.
Eigen::VectorXd orthogonal_complement(const std::vector<Eigen::VectorXd>& axes, Eigen::Index d) {
  for (Eigen::Index e = 0; e < d; ++e) {
    Eigen::VectorXd v = Eigen::VectorXd::Unit(d, e);
    for (const auto& a : axes) v -= a.dot(v) * a;
    const double n = v.norm();
    if (n > 1e-6) return v / n;
  }
  throw ShapeError("pca: cannot complete an orthonormal basis");
}

}  // namespace

PcaModel pca_fit(const Matrix& x, std::size_t k) {
  const auto n = static_cast<Eigen::Index>(x.rows());
  const auto d = static_cast<Eigen::Index>(x.cols());
  if (n < 3) throw InsufficientDataError("pca: need at least 3 samples, got " + std::to_string(n));
  if (d < 2) throw ShapeError("pca: need at least 2 dimensions, got " + std::to_string(d));
  if (k == 0 || static_cast<Eigen::Index>(k) > d) {
    throw ShapeError("pca: cannot extract " + std::to_string(k) + " components from " + std::to_string(d) +
                     " dimensions");
  }

  Eigen::MatrixXd data(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) data(i, j) = x(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  }
  const Eigen::RowVectorXd mean = data.colwise().mean();
  data.rowwise() -= mean;
  const double denom = static_cast<double>(n - 1);

  PcaModel model;
  model.n_samples = static_cast<std::size_t>(n);
  model.mean.assign(mean.data(), mean.data() + d);
  model.total_variance = data.squaredNorm() / denom;

  std::vector<Eigen::VectorXd> axes;
  std::vector<double> variances;
  if (n <= d) {
    const Eigen::MatrixXd gram = data * data.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");
    for (std::size_t c = 0; c < k && static_cast<Eigen::Index>(c) < n; ++c) {
      const Eigen::Index idx = n - 1 - static_cast<Eigen::Index>(c);
      const double lambda = std::max(0.0, eig.eigenvalues()[idx]);
      if (lambda <= 1e-12 * std::max(1.0, eig.eigenvalues()[n - 1])) break;
      Eigen::VectorXd axis = data.transpose() * eig.eigenvectors().col(idx);
      axis /= axis.norm();
      axes.push_back(axis);
      variances.push_back(lambda / denom);
    }
  } else {
    const Eigen::MatrixXd cov = data.transpose() * data;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");
    for (std::size_t c = 0; c < k; ++c) {
      const Eigen::Index idx = d - 1 - static_cast<Eigen::Index>(c);
      const double lambda = std::max(0.0, eig.eigenvalues()[idx]);
      if (lambda <= 1e-12 * std::max(1.0, eig.eigenvalues()[d - 1])) break;
      axes.push_back(eig.eigenvectors().col(idx).normalized());
      variances.push_back(lambda / denom);
    }
  }
  while (axes.size() < k) {
    axes.push_back(orthogonal_complement(axes, d));
    variances.push_back(0.0);
  }
  for (auto& a : axes) {
    fix_sign(a);
    model.axes.emplace_back(a.data(), a.data() + d);
  }
  model.explained_variance = std::move(variances);
  return model;
}

std::vector<double> pca_project(const PcaModel& model, std::span<const float> v) {
  if (v.size() != model.dim()) {
    throw ShapeError("pca_project: vector of length " + std::to_string(v.size()) + " for a model of dimension " +
                     std::to_string(model.dim()));
  }
  std::vector<double> out(model.components(), 0.0);
  for (std::size_t c = 0; c < model.components(); ++c) {
    double acc = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) acc += (static_cast<double>(v[j]) - model.mean[j]) * model.axes[c][j];
    out[c] = acc;
  }
  return out;
}

double squared_l2_pcs(const PcaModel& model, std::span<const float> a, std::span<const float> b) {
  const auto pa = pca_project(model, a);
  const auto pb = pca_project(model, b);
  double acc = 0.0;
  for (std::size_t c = 0; c < pa.size(); ++c) acc += (pa[c] - pb[c]) * (pa[c] - pb[c]);
  return acc;
}

}  // namespace ctxprobe
