#include "ctxprobe/probes.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

#include "ctxprobe/error.hpp"
#include "ctxprobe/parallel.hpp"
#include "ctxprobe/rng.hpp"

namespace ctxprobe {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

std::string_view to_string(ProbeKind k) { return k == ProbeKind::kLR ? "LR" : "SVM"; }

ProbeKind parse_probe_kind(std::string_view s) {
  if (s == "LR" || s == "lr") return ProbeKind::kLR;
  if (s == "SVM" || s == "svm") return ProbeKind::kSVM;
  throw ConfigError("unknown probe kind '" + std::string(s) + "' (expected lr or svm)");
}

void ProbeDataset::validate() const {
  if (features.rows() != labels.size()) {
    throw ShapeError("probe dataset: " + std::to_string(features.rows()) + " feature rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  for (int id : labels) {
    if (id < 0 || static_cast<std::size_t>(id) >= label_names.size()) {
      throw ValidationError("probe dataset: label id " + std::to_string(id) + " outside [0, " +
                            std::to_string(label_names.size()) + ")");
    }
  }
}

ProbeDataset ProbeDataset::subset(std::span<const std::size_t> rows) const {
  ProbeDataset out;
  out.features = Matrix(rows.size(), features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = features.row(rows[i]);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.labels.push_back(labels[rows[i]]);
  }
  out.label_names = label_names;
  out.layer = layer;
  out.sublayer = sublayer;
  return out;
}

LabelIndex index_labels(std::span<const std::string> labels) {
  LabelIndex idx;
  std::map<std::string, int> ids;
  for (const auto& l : labels) ids.emplace(l, 0);
  int next = 0;
  for (auto& [name, id] : ids) {
    id = next++;
    idx.names.push_back(name);
  }
  idx.ids.reserve(labels.size());
  for (const auto& l : labels) idx.ids.push_back(ids.at(l));
  return idx;
}

nlohmann::json ProbeParams::to_json() const {
  return {{"lr", {{"C", lr.c}, {"max_iter", lr.max_iter}, {"tol", lr.tol}}},
          {"svm", {{"C", svm.c}, {"epochs", svm.epochs}}},
          {"standardize", standardize},
          {"train_ratio", train_ratio}};
}

ProbeParams ProbeParams::from_json(const nlohmann::json& j) {
  ProbeParams p;
  p.lr.c = j.at("lr").at("C").get<double>();
  p.lr.max_iter = j.at("lr").at("max_iter").get<int>();
  p.lr.tol = j.at("lr").at("tol").get<double>();
  p.svm.c = j.at("svm").at("C").get<double>();
  p.svm.epochs = j.at("svm").at("epochs").get<int>();
  p.standardize = j.at("standardize").get<bool>();
  p.train_ratio = j.at("train_ratio").get<double>();
  return p;
}

std::vector<double> LinearModel::scores(std::span<const float> x) const {
  if (x.size() != dim()) {
    throw ShapeError("probe: feature dimension " + std::to_string(x.size()) + " does not match model dimension " +
                     std::to_string(dim()));
  }
  std::vector<double> z(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) z[j] = (static_cast<double>(x[j]) - feature_mean[j]) / feature_scale[j];
  std::vector<double> out(num_classes(), -std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < num_classes(); ++c) {
    if (!trained[c]) continue;
    double acc = bias[c];
    const auto& w = weights[c];
    for (std::size_t j = 0; j < z.size(); ++j) acc += w[j] * z[j];
    out[c] = acc;
  }
  return out;
}

int LinearModel::predict(std::span<const float> x) const {
  const auto s = scores(x);
  int best = 0;
  for (std::size_t c = 1; c < s.size(); ++c) {
    if (s[c] > s[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  }
  return best;
}

SplitIndices split_indices(std::span<const int> labels, double ratio, std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (n < 5) throw InsufficientDataError("split: need at least 5 samples, got " + std::to_string(n));
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split: train ratio must be in (0, 1)");
  // Both sides keep at least one sample.
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 0.5)), 1, n - 1);

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  const bool stratify = std::all_of(by_class.begin(), by_class.end(), [](const auto& kv) { return kv.second.size() >= 2; });

  SplitIndices out;
  out.seed = seed;
  out.stratified = stratify;
  Rng rng(seed);
  if (stratify) {
    // Largest-remainder apportionment of the train quota over classes.
    struct Quota {
      int label;
      std::size_t take;
      double remainder;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (const auto& [label, rows] : by_class) {
      const double exact = static_cast<double>(rows.size()) * static_cast<double>(n_train) / static_cast<double>(n);
      const auto take = static_cast<std::size_t>(std::floor(exact));
      quotas.push_back({label, take, exact - static_cast<double>(take)});
      assigned += take;
    }
    std::vector<std::size_t> order(quotas.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
    for (std::size_t i = 0; assigned < n_train; ++i, ++assigned) ++quotas[order[i % order.size()]].take;
    for (const auto& q : quotas) {
      auto rows = by_class.at(q.label);
      rng.shuffle(std::span<std::size_t>(rows));
      out.train.insert(out.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(q.take));
      out.test.insert(out.test.end(), rows.begin() + static_cast<std::ptrdiff_t>(q.take), rows.end());
    }
  } else {
    std::size_t singletons = 0;
    for (const auto& kv : by_class) singletons += kv.second.size() < 2 ? 1 : 0;
    out.warnings.push_back("WARNING: " + std::to_string(singletons) + " of " + std::to_string(by_class.size()) +
                           " classes have a single sample; using a plain shuffled split (not stratified). "
                           "Classes seen only in the test split cannot be predicted.");
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    rng.shuffle(std::span<std::size_t>(rows));
    out.train.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

SplitResult split(const ProbeDataset& dataset, double ratio, std::uint64_t seed) {
  dataset.validate();
  SplitResult r;
  r.indices = split_indices(dataset.labels, ratio, seed);
  r.train = dataset.subset(r.indices.train);
  r.test = dataset.subset(r.indices.test);
  return r;
}

namespace {

// Standardized training data in either the primal (weights are d-vectors)
// or the kernel form (weights are Z^T alpha, alpha an n-vector). Both forms
// produce the same iterates; the kernel form is cheaper when n <= d.
struct Design {
  MatrixXd z;  // n x d
  MatrixXd gram;
  bool kernel = false;

  Index n() const { return z.rows(); }
  Index params() const { return kernel ? z.rows() : z.cols(); }

  MatrixXd margins(const MatrixXd& p) const { return kernel ? MatrixXd(gram * p) : MatrixXd(z * p); }
  // Maps per-sample coefficients into parameter space.
  MatrixXd from_samples(const MatrixXd& r) const { return kernel ? r : MatrixXd(z.transpose() * r); }
  // |w|^2 per column.
  VectorXd sq_norms(const MatrixXd& p) const {
    if (!kernel) return p.colwise().squaredNorm().transpose();
    return (p.array() * (gram * p).array()).colwise().sum().transpose();
  }
  MatrixXd weights(const MatrixXd& p) const { return kernel ? MatrixXd(z.transpose() * p) : p; }
};

struct Prepared {
  Design design;
  std::vector<double> mean, scale;
  std::vector<int> classes;  // class ids present in train, ascending
  MatrixXd signs;            // n x classes, +1 for the class, -1 otherwise
};

Prepared prepare(const ProbeDataset& train, bool standardize, SolverForm form) {
  train.validate();
  const std::size_t n = train.size(), d = train.dim();
  if (n == 0) throw InsufficientDataError("probe: empty training set");
  Prepared p;
  p.mean.assign(d, 0.0);
  p.scale.assign(d, 1.0);
  if (standardize) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = train.features.row(i);
      for (std::size_t j = 0; j < d; ++j) p.mean[j] += r[j];
    }
    for (auto& m : p.mean) m /= static_cast<double>(n);
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = train.features.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        const double c = r[j] - p.mean[j];
        var[j] += c * c;
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double sd = std::sqrt(var[j] / static_cast<double>(n));
      p.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
  }
  auto& z = p.design.z;
  z.resize(static_cast<Index>(n), static_cast<Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = train.features.row(i);
    for (std::size_t j = 0; j < d; ++j) z(static_cast<Index>(i), static_cast<Index>(j)) = (r[j] - p.mean[j]) / p.scale[j];
  }
  p.design.kernel = form == SolverForm::kAuto ? n <= d : form == SolverForm::kKernel;
  if (p.design.kernel) p.design.gram = z * z.transpose();

  std::vector<bool> present(train.num_classes(), false);
  for (int id : train.labels) present[static_cast<std::size_t>(id)] = true;
  for (std::size_t c = 0; c < present.size(); ++c) {
    if (present[c]) p.classes.push_back(static_cast<int>(c));
  }
  if (p.classes.size() < 2) {
    throw InsufficientDataError("probe: degenerate split, the training split contains " +
                                std::to_string(p.classes.size()) + " class(es); need at least 2");
  }
  p.signs.resize(static_cast<Index>(n), static_cast<Index>(p.classes.size()));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < p.classes.size(); ++c) {
      p.signs(static_cast<Index>(i), static_cast<Index>(c)) = train.labels[i] == p.classes[c] ? 1.0 : -1.0;
    }
  }
  return p;
}

// Largest eigenvalue of a PSD operator by power iteration from a fixed start.
double lambda_max(const std::function<VectorXd(const VectorXd&)>& apply, Index dim) {
  VectorXd v(dim);
  for (Index i = 0; i < dim; ++i) v[i] = 1.0 + 0.5 * std::sin(static_cast<double>(i) + 1.0);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 300; ++it) {
    VectorXd w = apply(v);
    const double next = v.dot(w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (it > 10 && std::abs(next - lambda) <= 1e-9 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

// Largest eigenvalue of [Z 1]^T [Z 1].
double augmented_lambda_max(const Design& d) {
  if (d.kernel) {
    return lambda_max([&](const VectorXd& v) { return VectorXd(d.gram * v + VectorXd::Constant(v.size(), v.sum())); },
                      d.n());
  }
  const Index cols = d.z.cols();
  return lambda_max(
      [&](const VectorXd& v) {
        const VectorXd zv = d.z * v.head(cols) + VectorXd::Constant(d.n(), v[cols]);
        VectorXd out(cols + 1);
        out.head(cols) = d.z.transpose() * zv;
        out[cols] = zv.sum();
        return out;
      },
      cols + 1);
}

LinearModel finish(const Prepared& p, const ProbeDataset& train, ProbeKind kind, const MatrixXd& params,
                   const RowVectorXd& bias) {
  LinearModel m;
  m.kind = kind;
  const MatrixXd w = p.design.weights(params);
  const std::size_t k = train.num_classes(), d = train.dim();
  m.weights.assign(k, std::vector<double>(d, 0.0));
  m.bias.assign(k, 0.0);
  m.trained.assign(k, false);
  for (std::size_t c = 0; c < p.classes.size(); ++c) {
    const auto id = static_cast<std::size_t>(p.classes[c]);
    for (std::size_t j = 0; j < d; ++j) m.weights[id][j] = w(static_cast<Index>(j), static_cast<Index>(c));
    m.bias[id] = bias[static_cast<Index>(c)];
    m.trained[id] = true;
  }
  m.feature_mean = p.mean;
  m.feature_scale = p.scale;
  return m;
}

// Derivative of log(1 + exp(-s m)) with respect to m.
double logloss_slope(double s, double m) {
  const double x = s * m;
  const double sig = x > 0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x));  // sigmoid(-x)
  return -s * sig;
}

}  // namespace

LinearModel train_lr(const ProbeDataset& train, const LrParams& params, bool standardize) {
  if (!(params.c > 0.0) || params.max_iter < 1 || !(params.tol > 0.0)) {
    throw ConfigError("train_lr: C and tol must be positive and max_iter >= 1");
  }
  const Prepared p = prepare(train, standardize, params.form);
  const Design& d = p.design;
  const Index n = d.n(), k = p.signs.cols();
  const double c = params.c;
  const double lip = 0.25 * c * augmented_lambda_max(d) + 1.0;

  MatrixXd x = MatrixXd::Zero(d.params(), k), x_prev = x;
  RowVectorXd b = RowVectorXd::Zero(k), b_prev = b;
  std::vector<bool> done(static_cast<std::size_t>(k), false);
  std::vector<double> g0(static_cast<std::size_t>(k), -1.0);
  double t = 1.0;
  int it = 0;
  for (; it < params.max_iter; ++it) {
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    t = t_next;
    const MatrixXd y = x + beta * (x - x_prev);
    const RowVectorXd yb = b + beta * (b - b_prev);
    MatrixXd m = d.margins(y);
    m.rowwise() += yb;
    MatrixXd r(n, k);
    for (Index j = 0; j < k; ++j) {
      for (Index i = 0; i < n; ++i) r(i, j) = logloss_slope(p.signs(i, j), m(i, j));
    }
    const MatrixXd g = y + c * d.from_samples(r);
    const RowVectorXd gb = c * r.colwise().sum();
    const VectorXd gn2 = d.sq_norms(g);

    x_prev = x;
    b_prev = b;
    bool all_done = true;
    for (Index j = 0; j < k; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (done[ju]) continue;
      const double gn = std::sqrt(gn2[j] + gb[j] * gb[j]);
      if (g0[ju] < 0.0) g0[ju] = gn;
      if (gn <= params.tol * g0[ju]) {
        done[ju] = true;
        x.col(j) = y.col(j);
        b[j] = yb[j];
        x_prev.col(j) = x.col(j);
        b_prev[j] = b[j];
        continue;
      }
      x.col(j) = y.col(j) - g.col(j) / lip;
      b[j] = yb[j] - gb[j] / lip;
      all_done = false;
    }
    if (all_done) break;
  }
  LinearModel model = finish(p, train, ProbeKind::kLR, x, b);
  model.iterations = it;
  model.hyperparameters = {{"C", c},
                           {"max_iter", params.max_iter},
                           {"tol", params.tol},
                           {"standardize", standardize},
                           {"solver", "accelerated_gradient"}};
  return model;
}

LinearModel train_svm(const ProbeDataset& train, const SvmParams& params, bool standardize) {
  if (!(params.c > 0.0) || params.epochs < 1) throw ConfigError("train_svm: C must be positive and epochs >= 1");
  const Prepared p = prepare(train, standardize, params.form);
  const Design& d = p.design;
  const Index n = d.n(), k = p.signs.cols();
  const double c = params.c;
  // The optimum satisfies |(w, b)|^2 <= 2 F(0) = 2 C n.
  const double radius = std::sqrt(2.0 * c * static_cast<double>(n));

  MatrixXd x = MatrixXd::Zero(d.params(), k);
  RowVectorXd b = RowVectorXd::Zero(k);
  MatrixXd best_x = x;
  RowVectorXd best_b = b;
  VectorXd best_obj = VectorXd::Constant(k, std::numeric_limits<double>::infinity());

  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(params.epochs) + 1);
  MatrixXd q(n, k);
  for (int epoch = 0; epoch <= params.epochs; ++epoch) {
    MatrixXd m = d.margins(x);
    m.rowwise() += b;
    const VectorXd norms = d.sq_norms(x);
    for (Index j = 0; j < k; ++j) {
      double hinge = 0.0;
      for (Index i = 0; i < n; ++i) {
        const double s = p.signs(i, j);
        const double slack = 1.0 - s * m(i, j);
        hinge += slack > 0.0 ? slack : 0.0;
        q(i, j) = slack > 0.0 ? s : 0.0;
      }
      const double obj = 0.5 * (norms[j] + b[j] * b[j]) + c * hinge;
      if (obj < best_obj[j]) {
        best_obj[j] = obj;
        best_x.col(j) = x.col(j);
        best_b[j] = b[j];
      }
    }
    history.push_back(best_obj.sum());
    if (epoch == params.epochs) break;

    const double eta = 1.0 / (epoch + 1.0);
    x = (1.0 - eta) * x + (eta * c) * d.from_samples(q);
    b = (1.0 - eta) * b + (eta * c) * q.colwise().sum();
    const VectorXd new_norms = d.sq_norms(x);
    for (Index j = 0; j < k; ++j) {
      const double norm = std::sqrt(new_norms[j] + b[j] * b[j]);
      if (norm > radius) {
        x.col(j) *= radius / norm;
        b[j] *= radius / norm;
      }
    }
  }
  LinearModel model = finish(p, train, ProbeKind::kSVM, best_x, best_b);
  model.iterations = params.epochs;
  model.objective_history = std::move(history);
  model.hyperparameters = {{"C", c},
                           {"epochs", params.epochs},
                           {"standardize", standardize},
                           {"solver", "subgradient_step_1/(t+1)_best_iterate"}};
  return model;
}

double evaluate(const LinearModel& model, const ProbeDataset& test) {
  test.validate();
  if (test.size() == 0) throw ValidationError("evaluate: empty test set");
  if (test.dim() != model.dim()) {
    throw ShapeError("evaluate: test features have dimension " + std::to_string(test.dim()) +
                     ", model expects " + std::to_string(model.dim()));
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (model.predict(test.features.row(i)) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::pair<int, Sublayer> ProbeGridResult::best_cell() const {
  std::pair<int, Sublayer> best{1, Sublayer::kSA};
  double acc = -1.0;
  for (std::size_t l = 0; l < accuracy.size(); ++l) {
    for (Sublayer s : kAllSublayers) {
      const double a = accuracy[l][static_cast<std::size_t>(s)];
      if (a > acc) {
        acc = a;
        best = {static_cast<int>(l + 1), s};
      }
    }
  }
  return best;
}

nlohmann::json ProbeGridResult::to_json() const {
  nlohmann::json acc = nlohmann::json::array();
  for (const auto& row : accuracy) acc.push_back({row[0], row[1], row[2]});
  return {{"kind", std::string(to_string(kind))},
          {"dataset_id", dataset_id},
          {"split_seed", split_seed},
          {"capture_policy", policy.to_json()},
          {"num_layers", accuracy.size()},
          {"sublayers", {"SA", "Acts", "Out"}},
          {"accuracy", acc},
          {"num_samples", num_samples},
          {"train_size", train_size},
          {"test_size", test_size},
          {"num_classes", num_classes},
          {"classes_in_train", classes_in_train},
          {"stratified", stratified},
          {"hyperparameters", params.to_json()},
          {"conventions",
           {{"label_space", "keyword::sense"},
            {"multiclass", "one-vs-rest"},
            {"prediction", "argmax, ties to lowest class id"},
            {"standardization", params.standardize ? "train-split mean/std" : "none"},
            {"split", "one shared split for every cell"}}},
          {"warnings", warnings}};
}

ProbeGridResult ProbeGridResult::from_json(const nlohmann::json& j) {
  ProbeGridResult r;
  r.kind = parse_probe_kind(j.at("kind").get<std::string>());
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.split_seed = j.at("split_seed").get<std::uint64_t>();
  r.policy = CapturePolicy::from_json(j.at("capture_policy"));
  for (const auto& row : j.at("accuracy")) {
    r.accuracy.push_back({row.at(0).get<double>(), row.at(1).get<double>(), row.at(2).get<double>()});
  }
  r.num_samples = j.at("num_samples").get<std::size_t>();
  r.train_size = j.at("train_size").get<std::size_t>();
  r.test_size = j.at("test_size").get<std::size_t>();
  r.num_classes = j.at("num_classes").get<std::size_t>();
  r.classes_in_train = j.at("classes_in_train").get<std::size_t>();
  r.stratified = j.at("stratified").get<bool>();
  r.params = ProbeParams::from_json(j.at("hyperparameters"));
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

ProbeDataset cell_dataset(std::span<const TraceSet> traces, const LabelIndex& labels, int layer, Sublayer sublayer) {
  if (labels.ids.size() != traces.size()) {
    throw ValidationError("probe: " + std::to_string(traces.size()) + " traces but " +
                          std::to_string(labels.ids.size()) + " labels");
  }
  ProbeDataset ds;
  ds.layer = layer;
  ds.sublayer = sublayer;
  ds.label_names = labels.names;
  ds.labels = labels.ids;
  const std::size_t d = traces.empty() ? 0 : traces.front().at(layer, sublayer).size();
  ds.features = Matrix(traces.size(), d);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& v = traces[i].at(layer, sublayer);
    if (v.size() != d) throw CoverageError("probe: inconsistent feature dimension in trace " + std::to_string(i));
    std::copy(v.begin(), v.end(), ds.features.row(i).begin());
  }
  return ds;
}

namespace {

void check_coverage(std::span<const TraceSet> traces, int num_layers) {
  std::array<std::size_t, 3> dims{0, 0, 0};
  for (const auto& t : traces) {
    for (std::size_t l = 0; l < t.layers.size() && l < static_cast<std::size_t>(num_layers); ++l) {
      for (Sublayer s : kAllSublayers) {
        auto& dim = dims[static_cast<std::size_t>(s)];
        if (dim == 0) dim = t.at(static_cast<int>(l + 1), s).size();
      }
    }
  }
  std::vector<std::string> missing;
  std::size_t total = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    for (int l = 1; l <= num_layers; ++l) {
      for (Sublayer s : kAllSublayers) {
        const bool ok = static_cast<std::size_t>(l) <= t.layers.size() && !t.at(l, s).empty() &&
                        t.at(l, s).size() == dims[static_cast<std::size_t>(s)];
        if (ok) continue;
        ++total;
        if (missing.size() < 20) {
          missing.push_back("sample " + std::to_string(i) + (t.sentence_id.empty() ? "" : " (" + t.sentence_id + ")") +
                            " layer " + std::to_string(l) + " " + std::string(to_string(s)));
        }
      }
    }
  }
  if (total == 0) return;
  std::string msg = "incomplete trace store: " + std::to_string(total) + " missing cell(s):";
  for (const auto& m : missing) msg += "\n  " + m;
  if (total > missing.size()) msg += "\n  ... and " + std::to_string(total - missing.size()) + " more";
  throw CoverageError(msg);
}

}  // namespace

ProbeGridResult probe_grid(std::span<const TraceSet> traces, std::span<const std::string> labels, ProbeKind kind,
                           std::uint64_t seed, const ProbeParams& params, std::string dataset_id, unsigned threads,
                           int num_layers) {
  if (traces.empty()) throw InsufficientDataError("probe_grid: no traces");
  if (labels.size() != traces.size()) {
    throw ValidationError("probe_grid: " + std::to_string(traces.size()) + " traces but " +
                          std::to_string(labels.size()) + " labels");
  }
  if (num_layers == 0) num_layers = static_cast<int>(traces.front().layers.size());
  if (num_layers <= 0) throw CoverageError("probe_grid: traces contain no layers");
  check_coverage(traces, num_layers);
  for (const auto& t : traces) {
    if (!(t.policy == traces.front().policy)) throw ConfigError("probe_grid: traces use different capture policies");
  }

  const LabelIndex index = index_labels(labels);
  const SplitIndices sp = split_indices(index.ids, params.train_ratio, seed);

  ProbeGridResult r;
  r.kind = kind;
  r.dataset_id = std::move(dataset_id);
  r.split_seed = seed;
  r.policy = traces.front().policy;
  r.num_samples = traces.size();
  r.train_size = sp.train.size();
  r.test_size = sp.test.size();
  r.num_classes = index.names.size();
  r.stratified = sp.stratified;
  r.params = params;
  r.warnings = sp.warnings;
  std::vector<bool> in_train(index.names.size(), false);
  for (std::size_t i : sp.train) in_train[static_cast<std::size_t>(index.ids[i])] = true;
  r.classes_in_train = static_cast<std::size_t>(std::count(in_train.begin(), in_train.end(), true));
  if (r.classes_in_train < r.num_classes) {
    r.warnings.push_back("WARNING: " + std::to_string(r.num_classes - r.classes_in_train) + " of " +
                         std::to_string(r.num_classes) + " classes do not occur in the train split");
  }

  r.accuracy.assign(static_cast<std::size_t>(num_layers), {0.0, 0.0, 0.0});
  const std::size_t cells = static_cast<std::size_t>(num_layers) * 3;
  parallel_for(cells, threads, [&](std::size_t cell) {
    const int layer = static_cast<int>(cell / 3) + 1;
    const Sublayer s = kAllSublayers[cell % 3];
    const ProbeDataset full = cell_dataset(traces, index, layer, s);
    const ProbeDataset train = full.subset(sp.train);
    const ProbeDataset test = full.subset(sp.test);
    const LinearModel model = kind == ProbeKind::kLR ? train_lr(train, params.lr, params.standardize)
                                                      : train_svm(train, params.svm, params.standardize);
    r.accuracy[static_cast<std::size_t>(layer - 1)][cell % 3] = evaluate(model, test);
  });
  return r;
}

}  // namespace ctxprobe
