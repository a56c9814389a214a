// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcnn/persistence.hpp"
#include "tcnn/text.hpp"

namespace tcnn {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0)
      : classes_(num_classes), counts_(num_classes * num_classes, 0) {}

  void add(std::size_t truth, std::size_t predicted);

  std::size_t classes() const noexcept { return classes_; }
  std::uint64_t total() const noexcept { return total_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }

  std::uint64_t tp(std::size_t c) const { return at(c, c); }
  std::uint64_t fp(std::size_t c) const;
  std::uint64_t fn(std::size_t c) const;
  std::uint64_t tn(std::size_t c) const { return total_ - tp(c) - fp(c) - fn(c); }
  std::uint64_t trace() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// Throws ShapeError on length mismatch or an id >= num_classes.
ConfusionMatrix confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                          std::size_t num_classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double binary_accuracy = 0.0;  // one-vs-rest (TP+TN)/total
};

/// One-vs-rest precision, recall, F1 and accuracy for class `c`; any 0/0 is 0
/// (binary accuracy of an empty matrix included).
ClassMetrics class_metrics(const ConfusionMatrix& cm, std::size_t c);

/// Sum of TP over sum of (TP+FN); equals trace/total for single-label data.
double micro_recall(const ConfusionMatrix& cm);

struct LatencyStats {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  std::size_t samples = 0;

  /// "mean ± std" with two decimals.
  std::string mean_pm_std() const;
};

LatencyStats latency_stats(std::span<const double> samples_ms);

struct MetricsReport {
  std::vector<std::string> labels;
  std::vector<ClassMetrics> per_class;
  ClassMetrics macro;  // unweighted means of per_class
  double overall_accuracy = 0.0;  // trace / total
  std::optional<LatencyStats> latency;
};

/// Throws ShapeError when the matrix is empty.
MetricsReport macro_report(const ConfusionMatrix& cm, std::span<const std::string> labels = {});

/// Human-readable table: one row per class, a macro row, the overall
/// accuracy, and the latency line when present.
std::string format_report(const MetricsReport& report);
nlohmann::json to_json(const MetricsReport& report);

struct BenchmarkResult {
  LatencyStats latency;
  std::vector<std::size_t> predictions;  // from the first repetition
};

/// Times predict() per record with a steady clock, `repetitions` passes.
BenchmarkResult benchmark_latency(const ModelBundle& bundle, std::span<const RawRecord> records,
                                  std::size_t repetitions = 1);

/// Writes one TSV row per record: the pooled feature vector (inference mode,
/// shortest round-trip decimals) then the label string. Returns rows written.
std::size_t export_features(const ModelBundle& bundle, std::span<const RawRecord> records,
                            const std::filesystem::path& out);

/// Predicts every record and builds the report (latency not included).
MetricsReport evaluate(const ModelBundle& bundle, std::span<const RawRecord> records);

}  // namespace tcnn
