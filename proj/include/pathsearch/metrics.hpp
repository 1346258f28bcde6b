#pragma once

// Slide-level classification metrics. Tumor is the positive class.

#include <cstddef>
#include <span>
#include <vector>

namespace pathsearch {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Counts from parallel truth/prediction vectors of 0/1 labels.
Confusion tally(std::span<const int> truth, std::span<const int> predicted);

struct MetricsReport {
  Confusion confusion;
  double recall = 0.0;
  double precision = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  // Set when the metric's denominator was zero; the value is then 0.
  bool recall_undefined = false;
  bool precision_undefined = false;
  bool specificity_undefined = false;
  bool f1_undefined = false;
};

/// Throws ParameterError when the confusion is empty.
MetricsReport compute_metrics(const Confusion& c);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

MeanStd mean_std(std::span<const double> values);
double median(std::vector<double> values);

struct MetricsSummary {
  std::size_t runs = 0;
  MeanStd recall, precision, specificity, f1, accuracy;
};

MetricsSummary summarize(std::span<const MetricsReport> reports);

}  // namespace pathsearch
