// SPDX-License-Identifier: Apache-2.0
#include "tcnn/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tcnn/error.hpp"
#include "parallel.hpp"

namespace tcnn {

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= classes_ || predicted >= classes_) throw ShapeError("class id out of range for confusion matrix");
  ++counts_[truth * classes_ + predicted];
  ++total_;
}

std::uint64_t ConfusionMatrix::fp(std::size_t c) const {
  std::uint64_t col = 0;
  for (std::size_t t = 0; t < classes_; ++t) col += at(t, c);
  return col - tp(c);
}

std::uint64_t ConfusionMatrix::fn(std::size_t c) const {
  std::uint64_t row = 0;
  for (std::size_t p = 0; p < classes_; ++p) row += at(c, p);
  return row - tp(c);
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t c = 0; c < classes_; ++c) s += tp(c);
  return s;
}

ConfusionMatrix confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                          std::size_t num_classes) {
  if (predictions.size() != labels.size()) throw ShapeError("predictions and labels differ in length");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) cm.add(labels[i], predictions[i]);
  return cm;
}

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

ClassMetrics class_metrics(const ConfusionMatrix& cm, std::size_t c) {
  if (c >= cm.classes()) throw ShapeError("class id out of range");
  const auto tp = static_cast<double>(cm.tp(c));
  const auto fp = static_cast<double>(cm.fp(c));
  const auto fn = static_cast<double>(cm.fn(c));
  const auto tn = static_cast<double>(cm.tn(c));
  ClassMetrics m;
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  m.binary_accuracy = ratio(tp + tn, tp + fn + fp + tn);
  return m;
}

double micro_recall(const ConfusionMatrix& cm) {
  std::uint64_t tp = 0, fn = 0;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    tp += cm.tp(c);
    fn += cm.fn(c);
  }
  return ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
}

std::string LatencyStats::mean_pm_std() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f \xC2\xB1 %.2f", mean_ms, std_ms);
  return buf;
}

LatencyStats latency_stats(std::span<const double> samples_ms) {
  LatencyStats s;
  s.samples = samples_ms.size();
  if (samples_ms.empty()) return s;
  double sum = 0.0;
  for (double v : samples_ms) sum += v;
  s.mean_ms = sum / static_cast<double>(s.samples);
  double sq = 0.0;
  for (double v : samples_ms) sq += (v - s.mean_ms) * (v - s.mean_ms);
  s.std_ms = s.samples > 1 ? std::sqrt(sq / static_cast<double>(s.samples - 1)) : 0.0;
  const auto [lo, hi] = std::minmax_element(samples_ms.begin(), samples_ms.end());
  s.min_ms = *lo;
  s.max_ms = *hi;
  return s;
}

MetricsReport macro_report(const ConfusionMatrix& cm, std::span<const std::string> labels) {
  if (cm.total() == 0) throw ShapeError("cannot report on an empty confusion matrix");
  if (!labels.empty() && labels.size() != cm.classes()) throw ShapeError("label count differs from class count");
  MetricsReport r;
  const auto classes = cm.classes();
  for (std::size_t c = 0; c < classes; ++c) {
    r.labels.push_back(labels.empty() ? std::to_string(c) : labels[c]);
    const auto m = class_metrics(cm, c);
    r.per_class.push_back(m);
    r.macro.precision += m.precision;
    r.macro.recall += m.recall;
    r.macro.f1 += m.f1;
    r.macro.binary_accuracy += m.binary_accuracy;
  }
  const auto n = static_cast<double>(classes);
  r.macro.precision /= n;
  r.macro.recall /= n;
  r.macro.f1 /= n;
  r.macro.binary_accuracy /= n;
  r.overall_accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  return r;
}

std::string format_report(const MetricsReport& r) {
  std::size_t width = 5;
  for (const auto& l : r.labels) width = std::max(width, l.size());
  std::ostringstream os;
  char buf[160];
  auto line = [&](const std::string& name, const ClassMetrics& m) {
    std::snprintf(buf, sizeof buf, "%-*s  %9.4f  %9.4f  %9.4f  %9.4f\n", static_cast<int>(width), name.c_str(),
                  m.precision, m.recall, m.f1, m.binary_accuracy);
    os << buf;
  };
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %9s  %9s  %9s\n", static_cast<int>(width), "class", "Precision", "Recall",
                "F1-score", "Accuracy");
  os << buf;
  for (std::size_t c = 0; c < r.per_class.size(); ++c) line(r.labels[c], r.per_class[c]);
  line("macro", r.macro);
  std::snprintf(buf, sizeof buf, "overall accuracy (correct/total): %.4f\n", r.overall_accuracy);
  os << buf;
  if (r.latency) {
    std::snprintf(buf, sizeof buf, "latency per record: %s ms (min %.3f, max %.3f, n=%zu)\n",
                  r.latency->mean_pm_std().c_str(), r.latency->min_ms, r.latency->max_ms, r.latency->samples);
    os << buf;
  }
  return os.str();
}

nlohmann::json to_json(const MetricsReport& r) {
  auto metrics = [](const ClassMetrics& m) {
    return nlohmann::json{{"precision", m.precision},
                          {"recall", m.recall},
                          {"f1", m.f1},
                          {"accuracy", m.binary_accuracy}};
  };
  nlohmann::json j;
  j["per_class"] = nlohmann::json::object();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) j["per_class"][r.labels[c]] = metrics(r.per_class[c]);
  j["macro"] = metrics(r.macro);
  j["overall_accuracy"] = r.overall_accuracy;
  if (r.latency) {
    j["latency"] = {{"mean_ms", r.latency->mean_ms},
                    {"std_ms", r.latency->std_ms},
                    {"min_ms", r.latency->min_ms},
                    {"max_ms", r.latency->max_ms},
                    {"samples", r.latency->samples}};
  } else {
    j["latency"] = nullptr;
  }
  return j;
}

BenchmarkResult benchmark_latency(const ModelBundle& bundle, std::span<const RawRecord> records,
                                  std::size_t repetitions) {
  using clock = std::chrono::steady_clock;
  BenchmarkResult out;
  std::vector<double> samples;
  samples.reserve(records.size() * repetitions);
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    for (const auto& r : records) {
      const auto t0 = clock::now();
      const auto p = bundle.predict(r.text);
      const auto t1 = clock::now();
      samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      if (rep == 0) out.predictions.push_back(p.class_id);
    }
  }
  out.latency = latency_stats(samples);
  return out;
}

std::size_t export_features(const ModelBundle& bundle, std::span<const RawRecord> records,
                            const std::filesystem::path& out) {
  std::ofstream os(out, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write '" + out.string() + "'");
  char buf[32];
  for (const auto& r : records) {
    const auto ids = encode(tokenize(r.text), bundle.vocab, bundle.params.config.seq_len);
    for (double v : extract_features(ids, bundle.params)) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      os.write(buf, res.ptr - buf);
      os.put('\t');
    }
    os << r.label << '\n';
  }
  if (!os) throw Error("write failed for '" + out.string() + "'");
  return records.size();
}

MetricsReport evaluate(const ModelBundle& bundle, std::span<const RawRecord> records) {
  std::vector<std::size_t> preds(records.size());
  std::vector<std::size_t> truth(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto c = bundle.labels.find(records[i].label);
    if (!c) throw DataError("unknown label '" + records[i].label + "'", i + 1);
    truth[i] = *c;
  }
  const auto n = static_cast<std::ptrdiff_t>(records.size());
  detail::IterationErrors errors(records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    errors.run(k, [&] { preds[k] = bundle.predict(records[k].text).class_id; });
  }
  errors.rethrow_first();
  return macro_report(confusion(preds, truth, bundle.labels.size()), bundle.labels.labels());
}

}  // namespace tcnn
