#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <set>

#include "ctxprobe/error.hpp"
#include "ctxprobe/probes.hpp"
#include "fixtures.hpp"
#include "trace_fixtures.hpp"

using namespace ctxprobe;

namespace {

double fit_and_score(ProbeKind kind, const ProbeDataset& ds, std::uint64_t seed = 0) {
  const auto s = split(ds, 0.8, seed);
  const auto m = kind == ProbeKind::kLR ? train_lr(s.train) : train_svm(s.train);
  return evaluate(m, s.test);
}

ProbeDataset make(std::vector<std::vector<float>> rows, std::vector<int> labels, int classes) {
  ProbeDataset ds;
  ds.features = Matrix(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), ds.features.row(i).begin());
  ds.labels = std::move(labels);
  for (int c = 0; c < classes; ++c) ds.label_names.push_back("c" + std::to_string(c));
  return ds;
}

}  // namespace

struct BlobCase {
  int classes;
  std::size_t dim;
  ProbeKind kind;
};

class BlobProbe : public ::testing::TestWithParam<BlobCase> {};

TEST_P(BlobProbe, PlantedMarginIsLearned) {
  const auto p = GetParam();
  const auto ds = fixtures::gaussian_blobs(p.classes, p.dim, 60, 10.0, 1000 + p.dim + p.classes);
  EXPECT_GE(fit_and_score(p.kind, ds), 0.95);
}

INSTANTIATE_TEST_SUITE_P(Oracle, BlobProbe,
                         ::testing::Values(BlobCase{2, 768, ProbeKind::kLR}, BlobCase{5, 768, ProbeKind::kLR},
                                           BlobCase{2, 3072, ProbeKind::kLR}, BlobCase{5, 3072, ProbeKind::kLR},
                                           BlobCase{2, 768, ProbeKind::kSVM}, BlobCase{5, 768, ProbeKind::kSVM},
                                           BlobCase{2, 3072, ProbeKind::kSVM}, BlobCase{5, 3072, ProbeKind::kSVM}),
                         [](const auto& info) {
                           return std::string(to_string(info.param.kind)) + "_" + std::to_string(info.param.classes) +
                                  "c_" + std::to_string(info.param.dim) + "d";
                         });

TEST(Probe, ConstantFeaturesPredictMajority) {
  // 30 samples of class 0, 15 of class 1, identical features.
  ProbeDataset ds;
  ds.features = Matrix(45, 4, 1.0f);
  for (int i = 0; i < 45; ++i) ds.labels.push_back(i < 30 ? 0 : 1);
  ds.label_names = {"a", "b"};
  const auto s = split(ds, 0.8, 3);
  for (auto kind : {ProbeKind::kLR, ProbeKind::kSVM}) {
    const auto m = kind == ProbeKind::kLR ? train_lr(s.train) : train_svm(s.train);
    for (std::size_t i = 0; i < s.test.size(); ++i) EXPECT_EQ(m.predict(s.test.features.row(i)), 0);
    std::size_t majority = 0;
    for (int y : s.test.labels) majority += y == 0;
    EXPECT_DOUBLE_EQ(evaluate(m, s.test), static_cast<double>(majority) / s.test.size());
  }
}

TEST(Probe, MirroredBinaryProblemIsAntisymmetric) {
  // Labels are symmetric under x -> -x, so the two one-vs-rest models must be negatives.
  Rng rng(4);
  std::vector<std::vector<float>> rows;
  std::vector<int> labels;
  for (int i = 0; i < 20; ++i) {
    std::vector<float> x = {static_cast<float>(1.0 + rng.normal()), static_cast<float>(rng.normal())};
    rows.push_back(x);
    labels.push_back(1);
    rows.push_back({-x[0], -x[1]});
    labels.push_back(0);
  }
  const auto ds = make(rows, labels, 2);
  for (auto kind : {ProbeKind::kLR, ProbeKind::kSVM}) {
    const auto m = kind == ProbeKind::kLR ? train_lr(ds, {}, false) : train_svm(ds, {}, false);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(m.weights[0][j], -m.weights[1][j], 1e-6);
    EXPECT_NEAR(m.bias[0], -m.bias[1], 1e-6);
    EXPECT_NEAR(m.bias[1], 0.0, 1e-6);
    EXPECT_GT(m.weights[1][0], 0.0);
  }
}

TEST(Probe, SvmObjectiveNeverIncreases) {
  const auto ds = fixtures::gaussian_blobs(3, 50, 30, 3.0, 8);
  SvmParams p;
  p.epochs = 300;
  const auto m = train_svm(ds, p);
  ASSERT_EQ(m.objective_history.size(), 301u);
  for (std::size_t i = 1; i < m.objective_history.size(); ++i)
    EXPECT_LE(m.objective_history[i], m.objective_history[i - 1]);
  EXPECT_LT(m.objective_history.back(), m.objective_history.front());
}

TEST(Probe, OneDimensionalTwoPoints) {
  const auto ds = make({{-1.0f}, {1.0f}}, {0, 1}, 2);
  for (auto kind : {ProbeKind::kLR, ProbeKind::kSVM}) {
    const auto m = kind == ProbeKind::kLR ? train_lr(ds, {}, false) : train_svm(ds, {}, false);
    EXPECT_GT(m.weights[1][0], 0.0);
    EXPECT_LT(m.weights[0][0], 0.0);
    EXPECT_EQ(m.predict(std::vector<float>{2.0f}), 1);
    EXPECT_EQ(m.predict(std::vector<float>{-2.0f}), 0);
  }
}

TEST(Probe, LrMatchesClosedFormOptimality) {
  // At the optimum of 0.5 w^2 + C sum log(1+exp(-y(wx+b))) the gradient vanishes.
  const auto ds = make({{-2.0f}, {-1.0f}, {0.5f}, {1.0f}, {3.0f}, {-0.5f}}, {0, 0, 1, 1, 1, 1}, 2);
  LrParams p;
  p.tol = 1e-10;
  p.max_iter = 100000;
  const auto m = train_lr(ds, p, false);
  const double w = m.weights[1][0], b = m.bias[1];
  double gw = w, gb = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double x = ds.features(i, 0), y = ds.labels[i] == 1 ? 1.0 : -1.0;
    const double s = 1.0 / (1.0 + std::exp(y * (w * x + b)));
    gw -= y * x * s;
    gb -= y * s;
  }
  EXPECT_NEAR(gw, 0.0, 1e-6);
  EXPECT_NEAR(gb, 0.0, 1e-6);
}

TEST(Probe, KernelAndPrimalFormsAgree) {
  const auto small = fixtures::gaussian_blobs(3, 40, 10, 4.0, 21);  // n = 30 <= d = 40
  const auto tall = fixtures::gaussian_blobs(3, 8, 20, 4.0, 22);    // n = 60 > d = 8
  for (const auto* ds : {&small, &tall}) {
    LrParams lp, lk;
    lp.form = SolverForm::kPrimal;
    lk.form = SolverForm::kKernel;
    const auto a = train_lr(*ds, lp), b = train_lr(*ds, lk);
    SvmParams sp, sk;
    sp.form = SolverForm::kPrimal;
    sk.form = SolverForm::kKernel;
    sp.epochs = sk.epochs = 200;
    const auto c = train_svm(*ds, sp), d = train_svm(*ds, sk);
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t j = 0; j < ds->dim(); ++j) {
        EXPECT_NEAR(a.weights[k][j], b.weights[k][j], 1e-6 * (1.0 + std::abs(a.weights[k][j])));
        EXPECT_NEAR(c.weights[k][j], d.weights[k][j], 1e-6 * (1.0 + std::abs(c.weights[k][j])));
      }
      EXPECT_NEAR(a.bias[k], b.bias[k], 1e-6 * (1.0 + std::abs(a.bias[k])));
      EXPECT_NEAR(c.bias[k], d.bias[k], 1e-6 * (1.0 + std::abs(c.bias[k])));
    }
  }
}

TEST(Probe, RandomLabelsStayNearChance) {
  // Pure-noise binary problem: mean test accuracy over 40 seeds. With 40 test
  // samples per seed the mean has standard deviation 0.5 / sqrt(1600) = 0.0125.
  double acc = 0.0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(100 + seed);
    ProbeDataset ds;
    ds.features = fixtures::random_matrix(200, 20, rng);
    for (int i = 0; i < 200; ++i) ds.labels.push_back(static_cast<int>(rng.below(2)));
    ds.label_names = {"a", "b"};
    acc += fit_and_score(seed % 2 ? ProbeKind::kSVM : ProbeKind::kLR, ds, seed);
  }
  acc /= 40.0;
  EXPECT_GE(acc, 0.45);
  EXPECT_LE(acc, 0.55);
}

TEST(Split, HundredSamplesEightyTwenty) {
  std::vector<int> labels(100);
  for (int i = 0; i < 100; ++i) labels[i] = i % 4;
  const auto s = split_indices(labels, 0.8, 5);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.test.size(), 20u);
  EXPECT_TRUE(s.stratified);
  std::vector<int> per(4, 0);
  for (auto i : s.train) ++per[labels[i]];
  EXPECT_EQ(per, (std::vector<int>{20, 20, 20, 20}));
}

TEST(Split, TenBalancedSamples) {
  const std::vector<int> labels = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  const auto s = split_indices(labels, 0.8, 1);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.test.size(), 2u);
  std::set<int> test_labels;
  for (auto i : s.test) test_labels.insert(labels[i]);
  EXPECT_EQ(test_labels, (std::set<int>{0, 1}));
}

TEST(Split, NoLeakageAndSorted) {
  std::vector<int> labels(57);
  for (int i = 0; i < 57; ++i) labels[i] = (i * 7) % 5;
  for (std::uint64_t seed : {0u, 1u, 99u}) {
    const auto s = split_indices(labels, 0.8, seed);
    std::set<std::size_t> tr(s.train.begin(), s.train.end()), te(s.test.begin(), s.test.end());
    EXPECT_EQ(tr.size(), s.train.size());
    for (auto i : te) EXPECT_FALSE(tr.count(i));
    EXPECT_EQ(tr.size() + te.size(), 57u);
    EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));
    EXPECT_TRUE(std::is_sorted(s.test.begin(), s.test.end()));
  }
  EXPECT_EQ(split_indices(labels, 0.8, 4).train, split_indices(labels, 0.8, 4).train);
  EXPECT_NE(split_indices(labels, 0.8, 4).train, split_indices(labels, 0.8, 5).train);
}

TEST(Split, SingletonClassFallsBackWithWarning) {
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1, 2};
  const auto s = split_indices(labels, 0.8, 0);
  EXPECT_FALSE(s.stratified);
  ASSERT_EQ(s.warnings.size(), 1u);
  EXPECT_NE(s.warnings[0].find("WARNING"), std::string::npos);
  EXPECT_EQ(s.train.size() + s.test.size(), 7u);
}

TEST(Split, Errors) {
  EXPECT_THROW(split_indices(std::vector<int>{0, 1, 0, 1}, 0.8, 0), InsufficientDataError);
  EXPECT_THROW(split_indices(std::vector<int>{0, 1, 0, 1, 0}, 1.0, 0), ConfigError);
  const auto s = split_indices(std::vector<int>{0, 1, 0, 1, 0}, 0.99, 0);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Probe, StandardizationMakesScaleIrrelevant) {
  auto ds = fixtures::gaussian_blobs(3, 20, 20, 4.0, 31);
  auto scaled = ds;
  for (std::size_t i = 0; i < scaled.size(); ++i)
    for (std::size_t j = 0; j < scaled.dim(); ++j)
      scaled.features(i, j) = static_cast<float>(ds.features(i, j) * std::pow(2.0, static_cast<double>(j % 7) - 3.0));
  const auto a = split(ds, 0.8, 2), b = split(scaled, 0.8, 2);
  for (auto kind : {ProbeKind::kLR, ProbeKind::kSVM}) {
    const auto ma = kind == ProbeKind::kLR ? train_lr(a.train) : train_svm(a.train);
    const auto mb = kind == ProbeKind::kLR ? train_lr(b.train) : train_svm(b.train);
    for (std::size_t i = 0; i < a.test.size(); ++i)
      EXPECT_EQ(ma.predict(a.test.features.row(i)), mb.predict(b.test.features.row(i)));
  }
}

TEST(Probe, UntrainedClassScoresMinusInfinity) {
  ProbeDataset ds = fixtures::gaussian_blobs(2, 5, 10, 6.0, 3);
  ds.label_names.push_back("absent");
  const auto m = train_lr(ds);
  ASSERT_EQ(m.num_classes(), 3u);
  EXPECT_FALSE(m.trained[2]);
  EXPECT_TRUE(std::isinf(m.scores(ds.features.row(0))[2]));
  EXPECT_NE(m.predict(ds.features.row(0)), 2);
}

TEST(Probe, Errors) {
  const auto ds = fixtures::gaussian_blobs(2, 5, 10, 6.0, 3);
  std::vector<std::size_t> one_class;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.labels[i] == 0) one_class.push_back(i);
  EXPECT_THROW(train_lr(ds.subset(one_class)), InsufficientDataError);
  EXPECT_THROW(train_svm(ds.subset(one_class)), InsufficientDataError);
  const auto m = train_lr(ds);
  EXPECT_THROW(evaluate(m, ds.subset(std::vector<std::size_t>{})), ValidationError);
  auto wide = fixtures::gaussian_blobs(2, 6, 10, 6.0, 3);
  EXPECT_THROW(evaluate(m, wide), ShapeError);
  LrParams bad;
  bad.c = -1.0;
  EXPECT_THROW(train_lr(ds, bad), ConfigError);
  EXPECT_THROW(parse_probe_kind("tree"), ConfigError);
  auto broken = ds;
  broken.labels[0] = 7;
  EXPECT_THROW(broken.validate(), ValidationError);
}

TEST(Probe, LabelIndexSorted) {
  const std::vector<std::string> labels = {"b::x", "a::y", "b::x", "a::x"};
  const auto idx = index_labels(labels);
  EXPECT_EQ(idx.names, (std::vector<std::string>{"a::x", "a::y", "b::x"}));
  EXPECT_EQ(idx.ids, (std::vector<int>{2, 1, 2, 0}));
}

TEST(Grid, ShapeAndPlantedCell) {
  const auto g = fixtures::planted_grid(6, 12, 16, 32, 12, 7, Sublayer::kOut, 8.0, 77);
  const auto t0 = std::chrono::steady_clock::now();
  for (auto kind : {ProbeKind::kLR, ProbeKind::kSVM}) {
    const auto r = probe_grid(g.traces, g.labels, kind, 0, {}, "planted", 1);
    ASSERT_EQ(r.num_layers(), 12u);
    EXPECT_EQ(r.best_cell(), std::make_pair(7, Sublayer::kOut));
    EXPECT_GE(r.accuracy[6][2], 0.95);
    EXPECT_EQ(r.num_samples, 72u);
    EXPECT_EQ(r.train_size + r.test_size, 72u);
    EXPECT_EQ(r.num_classes, 6u);
    EXPECT_TRUE(r.stratified);
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
}

TEST(Grid, PlantedInActs) {
  const auto g = fixtures::planted_grid(4, 12, 8, 24, 4, 2, Sublayer::kActs, 8.0, 78);
  const auto r = probe_grid(g.traces, g.labels, ProbeKind::kLR, 3);
  EXPECT_EQ(r.best_cell(), std::make_pair(2, Sublayer::kActs));
}

TEST(Grid, ParallelEqualsSequential) {
  const auto g = fixtures::planted_grid(4, 10, 8, 16, 6, 3, Sublayer::kSA, 6.0, 79);
  const auto a = probe_grid(g.traces, g.labels, ProbeKind::kSVM, 1, {}, "x", 1);
  const auto b = probe_grid(g.traces, g.labels, ProbeKind::kSVM, 1, {}, "x", 4);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(Grid, JsonRoundTrip) {
  const auto g = fixtures::planted_grid(4, 8, 8, 16, 3, 1, Sublayer::kOut, 6.0, 80);
  const auto r = probe_grid(g.traces, g.labels, ProbeKind::kLR, 9, {}, "ds");
  const auto back = ProbeGridResult::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_EQ(back.accuracy, r.accuracy);
  EXPECT_EQ(back.split_seed, 9u);
  EXPECT_EQ(back.dataset_id, "ds");
}

TEST(Grid, BestCellTiesToEarliest) {
  ProbeGridResult r;
  r.accuracy = {{0.5, 0.9, 0.9}, {0.9, 0.9, 0.9}};
  EXPECT_EQ(r.best_cell(), std::make_pair(1, Sublayer::kActs));
}

TEST(Grid, Errors) {
  auto g = fixtures::planted_grid(4, 8, 8, 16, 3, 1, Sublayer::kOut, 6.0, 81);
  auto broken = g.traces;
  broken[5].layers.pop_back();
  try {
    probe_grid(broken, g.labels, ProbeKind::kLR, 0);
    FAIL() << "expected CoverageError";
  } catch (const CoverageError& e) {
    EXPECT_NE(std::string(e.what()).find("p5"), std::string::npos);
  }
  auto mixed = g.traces;
  mixed[1].policy.pooling = Pooling::kLastPiece;
  EXPECT_THROW(probe_grid(mixed, g.labels, ProbeKind::kLR, 0), ConfigError);
  EXPECT_THROW(probe_grid(g.traces, std::vector<std::string>(3, "a"), ProbeKind::kLR, 0), ValidationError);
  EXPECT_THROW(probe_grid({}, {}, ProbeKind::kLR, 0), InsufficientDataError);
}

TEST(Grid, MissingTrainClassWarns) {
  // One singleton class: plain split, it may land in test only.
  auto g = fixtures::planted_grid(3, 6, 8, 16, 2, 1, Sublayer::kOut, 6.0, 82);
  g.labels.push_back("lonely::x");
  g.traces.push_back(g.traces.front());
  g.traces.back().sentence_id = "lonely";
  bool warned_split = false, warned_missing = false;
  for (std::uint64_t seed = 0; seed < 20 && !warned_missing; ++seed) {
    const auto r = probe_grid(g.traces, g.labels, ProbeKind::kLR, seed);
    EXPECT_FALSE(r.stratified);
    for (const auto& w : r.warnings) {
      warned_split |= w.find("not stratified") != std::string::npos;
      warned_missing |= r.classes_in_train < r.num_classes && w.find("WARNING") != std::string::npos;
    }
  }
  EXPECT_TRUE(warned_split);
  EXPECT_TRUE(warned_missing);
}

TEST(Params, JsonRoundTrip) {
  ProbeParams p;
  p.lr.c = 0.5;
  p.svm.epochs = 7;
  p.standardize = false;
  p.train_ratio = 0.7;
  const auto q = ProbeParams::from_json(p.to_json());
  EXPECT_EQ(q.to_json(), p.to_json());
  EXPECT_EQ(q.svm.epochs, 7);
}
