#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"

namespace fedsim {

class Model;

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(size_t classes = 0)
      : classes_(classes), counts_(classes * classes, 0) {}

  size_t classes() const { return classes_; }
  uint64_t at(size_t truth, size_t pred) const {
    return counts_[truth * classes_ + pred];
  }
  void add(size_t truth, size_t pred) { ++counts_[truth * classes_ + pred]; }

  uint64_t total() const;
  uint64_t trace() const;
  uint64_t row_sum(size_t truth) const;
  uint64_t column_sum(size_t pred) const;

  friend bool operator==(const ConfusionMatrix&,
                         const ConfusionMatrix&) = default;

 private:
  size_t classes_;
  std::vector<uint64_t> counts_;
};

ConfusionMatrix confusion(std::span<const Label> preds,
                          std::span<const Label> truth, size_t classes);

// A ratio whose denominator may be zero. Undefined ratios read as 0.
struct Ratio {
  double value = 0.0;
  bool undefined = false;
};

Ratio precision(const ConfusionMatrix& cm, size_t c);
Ratio recall(const ConfusionMatrix& cm, size_t c);
double f1(double p, double r);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;
  bool recall_undefined = false;
};

struct MetricsReport {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  // Unweighted means over all classes of the per-class values.
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

MetricsReport summarize(const ConfusionMatrix& cm);

// Argmax predictions (ties to the lowest class) scored against test.y.
MetricsReport evaluate(const Model& model, const Dataset& test);

// Per-class values, undefined flags and the confusion matrix.
std::string to_json(const MetricsReport& report);

}  // namespace fedsim
