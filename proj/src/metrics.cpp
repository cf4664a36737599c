#include "fedsim/metrics.hpp"

#include "json.hpp"

#include "fedsim/error.hpp"
#include "fedsim/nn.hpp"

namespace fedsim {

uint64_t ConfusionMatrix::total() const {
  uint64_t n = 0;
  for (uint64_t v : counts_) n += v;
  return n;
}

uint64_t ConfusionMatrix::trace() const {
  uint64_t n = 0;
  for (size_t c = 0; c < classes_; ++c) n += at(c, c);
  return n;
}

uint64_t ConfusionMatrix::row_sum(size_t truth) const {
  uint64_t n = 0;
  for (size_t p = 0; p < classes_; ++p) n += at(truth, p);
  return n;
}

uint64_t ConfusionMatrix::column_sum(size_t pred) const {
  uint64_t n = 0;
  for (size_t t = 0; t < classes_; ++t) n += at(t, pred);
  return n;
}

ConfusionMatrix confusion(std::span<const Label> preds,
                          std::span<const Label> truth, size_t classes) {
  if (preds.size() != truth.size()) {
    throw Error(ErrorKind::kInvalidInput,
                std::to_string(preds.size()) + " predictions for " +
                    std::to_string(truth.size()) + " labels");
  }
  ConfusionMatrix cm(classes);
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= classes || truth[i] >= classes) {
      throw Error(ErrorKind::kInvalidInput,
                  "label out of range at position " + std::to_string(i));
    }
    cm.add(truth[i], preds[i]);
  }
  return cm;
}

Ratio precision(const ConfusionMatrix& cm, size_t c) {
  const uint64_t retrieved = cm.column_sum(c);
  if (retrieved == 0) return {0.0, true};
  return {static_cast<double>(cm.at(c, c)) / static_cast<double>(retrieved),
          false};
}

Ratio recall(const ConfusionMatrix& cm, size_t c) {
  const uint64_t relevant = cm.row_sum(c);
  if (relevant == 0) return {0.0, true};
  return {static_cast<double>(cm.at(c, c)) / static_cast<double>(relevant),
          false};
}

double f1(double p, double r) {
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

MetricsReport summarize(const ConfusionMatrix& cm) {
  MetricsReport report{cm, 0.0, {}, 0.0, 0.0, 0.0};
  const uint64_t total = cm.total();
  if (total > 0) {
    report.accuracy =
        static_cast<double>(cm.trace()) / static_cast<double>(total);
  }
  const size_t classes = cm.classes();
  report.per_class.reserve(classes);
  for (size_t c = 0; c < classes; ++c) {
    const Ratio p = precision(cm, c);
    const Ratio r = recall(cm, c);
    report.per_class.push_back(
        {p.value, r.value, f1(p.value, r.value), p.undefined, r.undefined});
    report.macro_precision += p.value;
    report.macro_recall += r.value;
    report.macro_f1 += report.per_class.back().f1;
  }
  if (classes > 0) {
    const auto n = static_cast<double>(classes);
    report.macro_precision /= n;
    report.macro_recall /= n;
    report.macro_f1 /= n;
  }
  return report;
}

MetricsReport evaluate(const Model& model, const Dataset& test) {
  if (test.class_count != model.class_count()) {
    throw Error(ErrorKind::kShape,
                "test set has " + std::to_string(test.class_count) +
                    " classes, model predicts " +
                    std::to_string(model.class_count()));
  }
  std::vector<Label> preds;
  preds.reserve(test.rows());
  if (!test.empty()) {
    const Matrix probs = forward(model, test.x);
    for (size_t r = 0; r < probs.rows(); ++r) {
      preds.push_back(static_cast<Label>(predict_class(probs.row(r))));
    }
  }
  return summarize(confusion(preds, test.y, test.class_count));
}

std::string to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["accuracy"] = report.accuracy;
  j["macro_precision"] = report.macro_precision;
  j["macro_recall"] = report.macro_recall;
  j["macro_f1"] = report.macro_f1;
  auto& classes = j["per_class"] = nlohmann::ordered_json::array();
  for (size_t c = 0; c < report.per_class.size(); ++c) {
    const ClassMetrics& m = report.per_class[c];
    classes.push_back({{"class", c},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"precision_undefined", m.precision_undefined},
                       {"recall_undefined", m.recall_undefined}});
  }
  auto& cm = j["confusion"] = nlohmann::ordered_json::array();
  const ConfusionMatrix& counts = report.confusion;
  for (size_t t = 0; t < counts.classes(); ++t) {
    std::vector<uint64_t> row;
    for (size_t p = 0; p < counts.classes(); ++p) row.push_back(counts.at(t, p));
    cm.push_back(row);
  }
  return j.dump(2);
}

}  // namespace fedsim
