#include "fedsim/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "fedsim/error.hpp"
#include "fedsim/nn.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fedsim {
namespace {

using testing::random_labels;

const ConfusionMatrix& example_cm() {
  // preds=[1,1,0], truth=[1,0,0]
  static const ConfusionMatrix cm = confusion(std::vector<Label>{1, 1, 0},
                                              std::vector<Label>{1, 0, 0}, 2);
  return cm;
}

TEST(Confusion, HandEnumeratedExample) {
  const ConfusionMatrix& cm = example_cm();
  EXPECT_EQ(cm.at(0, 0), 1u);
  EXPECT_EQ(cm.at(0, 1), 1u);
  EXPECT_EQ(cm.at(1, 0), 0u);
  EXPECT_EQ(cm.at(1, 1), 1u);
  EXPECT_EQ(cm.total(), 3u);
}

TEST(Confusion, PerfectPredictionIsDiagonal) {
  const std::vector<Label> y = {0, 2, 1, 2, 2};
  const ConfusionMatrix cm = confusion(y, y, 3);
  for (size_t i = 0; i < 3; ++i) {
    for (size_t j = 0; j < 3; ++j) {
      if (i != j) EXPECT_EQ(cm.at(i, j), 0u);
    }
  }
  EXPECT_EQ(cm.trace(), 5u);
}

TEST(Confusion, EmptyAndInvalid) {
  const ConfusionMatrix cm = confusion({}, {}, 4);
  EXPECT_EQ(cm.total(), 0u);
  EXPECT_EQ(summarize(cm).accuracy, 0.0);
  EXPECT_THROW(confusion(std::vector<Label>{0}, std::vector<Label>{}, 2), Error);
  EXPECT_THROW(confusion(std::vector<Label>{2}, std::vector<Label>{0}, 2), Error);
}

TEST(PrecisionRecall, Examples) {
  const ConfusionMatrix& cm = example_cm();
  EXPECT_DOUBLE_EQ(precision(cm, 1).value, 0.5);
  EXPECT_DOUBLE_EQ(recall(cm, 1).value, 1.0);
  EXPECT_DOUBLE_EQ(precision(cm, 0).value, 1.0);
  EXPECT_DOUBLE_EQ(recall(cm, 0).value, 0.5);
  const std::vector<Label> y = {0, 1, 1};
  const ConfusionMatrix diag = confusion(y, y, 2);
  EXPECT_EQ(precision(diag, 0).value, 1.0);
  EXPECT_EQ(recall(diag, 1).value, 1.0);
}

TEST(PrecisionRecall, EmptyDenominatorsAreFlaggedZero) {
  // Class 2 is never predicted and never true.
  const ConfusionMatrix cm = confusion(std::vector<Label>{0, 1},
                                       std::vector<Label>{1, 1}, 3);
  EXPECT_EQ(precision(cm, 2).value, 0.0);
  EXPECT_TRUE(precision(cm, 2).undefined);
  EXPECT_TRUE(recall(cm, 2).undefined);
  EXPECT_TRUE(recall(cm, 0).undefined);
  EXPECT_FALSE(precision(cm, 0).undefined);
  const MetricsReport r = summarize(cm);
  EXPECT_TRUE(r.per_class[2].precision_undefined);
  EXPECT_EQ(r.per_class[2].f1, 0.0);

  const auto j = nlohmann::json::parse(to_json(r));
  EXPECT_TRUE(j["per_class"][2]["precision_undefined"].get<bool>());
  EXPECT_EQ(j["confusion"][1][1].get<int>(), 1);
  EXPECT_DOUBLE_EQ(j["accuracy"].get<double>(), 0.5);
}

TEST(F1, Examples) {
  EXPECT_EQ(f1(1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(f1(0.5, 1.0), 2.0 / 3.0);
  EXPECT_EQ(f1(0.0, 0.7), 0.0);
  EXPECT_EQ(f1(0.0, 0.0), 0.0);
}

// Model over `features` inputs whose output is constant: class `winner`.
Model constant_model(size_t features, size_t classes, size_t winner) {
  Model m = init_model(std::vector<size_t>{features, classes}, 1).zeros_like();
  m.layers()[0].bias[winner] = 1.0;
  return m;
}

TEST(Evaluate, ConstantPredictorOnBalancedSetScoresOneOverC) {
  Dataset d;
  d.x = Matrix(12, 2);
  for (size_t r = 0; r < 12; ++r) d.y.push_back(static_cast<Label>(r % 4));
  d.class_count = 4;
  const MetricsReport r = evaluate(constant_model(2, 4, 0), d);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.25);
  EXPECT_DOUBLE_EQ(r.per_class[0].recall, 1.0);
  EXPECT_TRUE(r.per_class[1].precision_undefined);
}

TEST(Evaluate, TiesGoToLowestClass) {
  Dataset d;
  d.x = Matrix(1, 2);
  d.y = {0};
  d.class_count = 3;
  const Model zero = constant_model(2, 3, 0).zeros_like();
  EXPECT_EQ(evaluate(zero, d).accuracy, 1.0);
}

TEST(Evaluate, SingleClassPerfect) {
  Dataset d;
  d.x = Matrix(5, 2);
  d.y.assign(5, 1);
  d.class_count = 2;
  const MetricsReport r = evaluate(constant_model(2, 2, 1), d);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.per_class[1].f1, 1.0);
}

TEST(Evaluate, AccuracyMatchesDirectCount) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Model m = testing::random_model({4, 6, 5}, rng);
    const Dataset d = testing::random_dataset(50, 4, 5, rng);
    const Matrix p = forward(m, d.x);
    size_t hits = 0;
    for (size_t r = 0; r < d.rows(); ++r) {
      size_t best = 0;
      for (size_t c = 1; c < 5; ++c) {
        if (p(r, c) > p(r, best)) best = c;
      }
      hits += best == d.y[r];
    }
    EXPECT_EQ(evaluate(m, d).accuracy, static_cast<double>(hits) / 50.0);
  }
}

TEST(Evaluate, ClassCountMismatch) {
  Dataset d;
  d.x = Matrix(1, 2);
  d.y = {0};
  d.class_count = 3;
  EXPECT_THROW(evaluate(constant_model(2, 2, 0), d), Error);
}

TEST(MetricsProperties, HoldOnRandomInputs) {
  Rng rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    const size_t classes = 1 + rng.below(12);
    const size_t n = rng.below(80);
    const auto preds = random_labels(n, classes, rng);
    const auto truth = random_labels(n, classes, rng);
    const ConfusionMatrix cm = confusion(preds, truth, classes);
    const MetricsReport r = summarize(cm);

    EXPECT_EQ(cm.total(), n);
    if (n > 0) {
      EXPECT_EQ(r.accuracy, static_cast<double>(cm.trace()) / n);
    }
    for (size_t c = 0; c < classes; ++c) {
      EXPECT_EQ(cm.column_sum(c),
                static_cast<uint64_t>(std::count(preds.begin(), preds.end(), c)));
      EXPECT_EQ(cm.row_sum(c),
                static_cast<uint64_t>(std::count(truth.begin(), truth.end(), c)));
      const ClassMetrics& m = r.per_class[c];
      EXPECT_GE(m.f1, std::min(m.precision, m.recall) - 1e-15);
      EXPECT_LE(m.f1, std::max(m.precision, m.recall) + 1e-15);
      for (double v : {m.precision, m.recall, m.f1}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }

    // Relabel both sides with the same permutation.
    std::vector<Label> perm(classes);
    std::iota(perm.begin(), perm.end(), Label{0});
    rng.shuffle(std::span<Label>(perm));
    std::vector<Label> p2, t2;
    for (size_t i = 0; i < n; ++i) {
      p2.push_back(perm[preds[i]]);
      t2.push_back(perm[truth[i]]);
    }
    const MetricsReport r2 = summarize(confusion(p2, t2, classes));
    EXPECT_EQ(r2.accuracy, r.accuracy);
    EXPECT_NEAR(r2.macro_precision, r.macro_precision, 1e-12);
    EXPECT_NEAR(r2.macro_recall, r.macro_recall, 1e-12);
    EXPECT_NEAR(r2.macro_f1, r.macro_f1, 1e-12);
  }
}

TEST(MetricsProperties, MatchDirectCounting) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t classes = 1 + rng.below(12);
    const size_t n = 1 + rng.below(60);
    const auto preds = random_labels(n, classes, rng);
    const auto truth = random_labels(n, classes, rng);
    const MetricsReport r = summarize(confusion(preds, truth, classes));
    const testing::CountedMetrics o = testing::count_metrics(preds, truth, classes);
    EXPECT_EQ(r.accuracy, o.accuracy);
    for (size_t c = 0; c < classes; ++c) {
      EXPECT_NEAR(r.per_class[c].precision, o.precision[c], 1e-12);
      EXPECT_NEAR(r.per_class[c].recall, o.recall[c], 1e-12);
      EXPECT_NEAR(r.per_class[c].f1, o.f1[c], 1e-12);
    }
    EXPECT_NEAR(r.macro_precision, o.macro_precision, 1e-12);
    EXPECT_NEAR(r.macro_recall, o.macro_recall, 1e-12);
    EXPECT_NEAR(r.macro_f1, o.macro_f1, 1e-12);
  }
}

}  // namespace
}  // namespace fedsim
