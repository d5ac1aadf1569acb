#pragma once

#include <array>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxprobe/encoder.hpp"
#include "ctxprobe/tensor.hpp"

namespace ctxprobe {

enum class ProbeKind { kLR, kSVM };

std::string_view to_string(ProbeKind k);
ProbeKind parse_probe_kind(std::string_view s);

struct ProbeDataset {
  Matrix features;                      // n x d
  std::vector<int> labels;              // ids into label_names
  std::vector<std::string> label_names;
  int layer = 0;
  Sublayer sublayer = Sublayer::kOut;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t num_classes() const noexcept { return label_names.size(); }
  std::size_t dim() const noexcept { return features.cols(); }

  // Throws ShapeError / ValidationError when the invariants do not hold.
  void validate() const;

  ProbeDataset subset(std::span<const std::size_t> rows) const;
};

// Sorted distinct names and the id of each input label.
struct LabelIndex {
  std::vector<std::string> names;
  std::vector<int> ids;
};
LabelIndex index_labels(std::span<const std::string> labels);

// Parameterization of the weights during training. Both give the same
// iterates; auto picks the kernel form (w = Z^T alpha) when n <= d.
enum class SolverForm { kAuto, kPrimal, kKernel };

struct LrParams {
  double c = 1.0;
  int max_iter = 1000;
  double tol = 1e-4;
  SolverForm form = SolverForm::kAuto;
};

struct SvmParams {
  double c = 1.0;
  int epochs = 1000;
  SolverForm form = SolverForm::kAuto;
};

struct ProbeParams {
  LrParams lr;
  SvmParams svm;
  bool standardize = true;
  double train_ratio = 0.8;

  nlohmann::json to_json() const;
  static ProbeParams from_json(const nlohmann::json& j);
};

struct LinearModel {
  ProbeKind kind = ProbeKind::kLR;
  std::vector<std::vector<double>> weights;  // per class, in standardized feature space
  std::vector<double> bias;
  std::vector<bool> trained;                 // false for classes absent from the train split
  std::vector<double> feature_mean;          // train statistics
  std::vector<double> feature_scale;
  nlohmann::json hyperparameters;
  int iterations = 0;
  // SVM: regularized objective at w = 0, then of the kept iterate after each epoch.
  std::vector<double> objective_history;

  std::size_t num_classes() const noexcept { return weights.size(); }
  std::size_t dim() const noexcept { return feature_mean.size(); }

  // One score per class; untrained classes score -infinity.
  std::vector<double> scores(std::span<const float> x) const;
  // Argmax of scores, ties to the lowest class id.
  int predict(std::span<const float> x) const;
};

struct SplitIndices {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
  bool stratified = false;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

// 80/20 style split. Stratified (largest-remainder quotas per class) when
// every class has at least two samples, a plain shuffle otherwise.
// Throws InsufficientDataError if fewer than 5 samples.
SplitIndices split_indices(std::span<const int> labels, double ratio, std::uint64_t seed);

struct SplitResult {
  ProbeDataset train;
  ProbeDataset test;
  SplitIndices indices;
};
SplitResult split(const ProbeDataset& dataset, double ratio = 0.8, std::uint64_t seed = 0);

// One-vs-rest L2-regularized logistic regression:
//   0.5 |w|^2 + C * sum log(1 + exp(-y (w.z + b))), bias unregularized,
// minimized by accelerated gradient descent until the gradient norm drops
// below tol times its initial value.
LinearModel train_lr(const ProbeDataset& train, const LrParams& params = {}, bool standardize = true);

// One-vs-rest L2-regularized hinge loss:
//   0.5 (|w|^2 + b^2) + C * sum max(0, 1 - y (w.z + b)),
// by full-batch subgradient descent with step 1/(t+1); the best iterate
// seen so far is kept.
LinearModel train_svm(const ProbeDataset& train, const SvmParams& params = {}, bool standardize = true);

// Fraction of correct argmax predictions. Throws ShapeError on dimension
// mismatch and ValidationError on an empty test set.
double evaluate(const LinearModel& model, const ProbeDataset& test);

struct ProbeGridResult {
  ProbeKind kind = ProbeKind::kLR;
  std::string dataset_id;
  std::uint64_t split_seed = 0;
  CapturePolicy policy;
  std::vector<std::array<double, 3>> accuracy;  // [layer - 1][sublayer]
  std::size_t num_samples = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t num_classes = 0;
  std::size_t classes_in_train = 0;
  bool stratified = false;
  ProbeParams params;
  std::vector<std::string> warnings;

  std::size_t num_layers() const noexcept { return accuracy.size(); }
  // (layer, sublayer) of the highest accuracy, earliest cell on ties.
  std::pair<int, Sublayer> best_cell() const;

  nlohmann::json to_json() const;
  static ProbeGridResult from_json(const nlohmann::json& j);
};

// Features of every trace at one cell with the given labels.
ProbeDataset cell_dataset(std::span<const TraceSet> traces, const LabelIndex& labels, int layer, Sublayer sublayer);

// Trains and evaluates one probe per (layer, sublayer) on a single shared
// split. `num_layers` = 0 takes the layer count of the first trace. Throws
// CoverageError listing the missing cells if any trace is incomplete.
ProbeGridResult probe_grid(std::span<const TraceSet> traces, std::span<const std::string> labels, ProbeKind kind,
                           std::uint64_t seed, const ProbeParams& params = {}, std::string dataset_id = {},
                           unsigned threads = 1, int num_layers = 0);

}  // namespace ctxprobe
