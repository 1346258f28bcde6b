#include "pathsearch/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "pathsearch/errors.hpp"

namespace pathsearch {

Confusion tally(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw ContractError("truth and prediction counts differ");
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] != 0, p = predicted[i] != 0;
    if (t && p) ++c.tp;
    else if (!t && p) ++c.fp;
    else if (!t && !p) ++c.tn;
    else ++c.fn;
  }
  return c;
}

namespace {

double ratio(std::size_t num, std::size_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport compute_metrics(const Confusion& c) {
  if (c.total() == 0) throw ParameterError("compute_metrics: no samples");
  MetricsReport r;
  r.confusion = c;
  r.recall = ratio(c.tp, c.tp + c.fn, r.recall_undefined);
  r.precision = ratio(c.tp, c.tp + c.fp, r.precision_undefined);
  r.specificity = ratio(c.tn, c.tn + c.fp, r.specificity_undefined);
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  const double pr = r.precision + r.recall;
  r.f1_undefined = pr == 0.0;
  r.f1 = r.f1_undefined ? 0.0 : 2.0 * r.precision * r.recall / pr;
  return r;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ParameterError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

MetricsSummary summarize(std::span<const MetricsReport> reports) {
  MetricsSummary s;
  s.runs = reports.size();
  auto field = [&](double MetricsReport::*member) {
    std::vector<double> v;
    v.reserve(reports.size());
    for (const auto& r : reports) v.push_back(r.*member);
    return mean_std(v);
  };
  s.recall = field(&MetricsReport::recall);
  s.precision = field(&MetricsReport::precision);
  s.specificity = field(&MetricsReport::specificity);
  s.f1 = field(&MetricsReport::f1);
  s.accuracy = field(&MetricsReport::accuracy);
  return s;
}

}  // namespace pathsearch
