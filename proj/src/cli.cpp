// SPDX-License-Identifier: Apache-2.0
#include "tcnn/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <optional>

#include <nlohmann/json.hpp>

#include "tcnn/error.hpp"
#include "tcnn/evaluation.hpp"
#include "tcnn/persistence.hpp"
#include "tcnn/synthdata.hpp"
#include "tcnn/training.hpp"

namespace tcnn::cli {
namespace {

constexpr double kGradCheckTolerance = 1e-4;
constexpr double kGradCheckFcTolerance = 1e-6;
constexpr double kGradCheckEpsilon = 1e-5;

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

struct RunPaths {
  std::string data;
  std::string out;
  std::string heldout;
};

// RunConfig: TrainConfig keys plus optional "data", "out" and "heldout" paths.
TrainConfig parse_run_config(const nlohmann::json& j, const TrainConfig& base, RunPaths& paths) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  nlohmann::json train_keys = nlohmann::json::object();
  for (const auto& [key, value] : j.items()) {
    if (key == "data" || key == "out" || key == "heldout") {
      if (!value.is_string()) throw ConfigError("'" + key + "' must be a string path");
      (key == "data" ? paths.data : key == "out" ? paths.out : paths.heldout) = value.get<std::string>();
    } else {
      train_keys[key] = value;
    }
  }
  return train_config_from_json(train_keys, base, true);
}

std::string fmt(const char* format, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, a);
  return buf;
}

int do_synth(const std::string& spec_path, const std::string& out_dir, std::ostream& out) {
  SynthSpec spec;
  if (!spec_path.empty()) spec = synth_spec_from_json(read_json_file(spec_path));
  const auto files = generate_files(spec, out_dir);
  out << "wrote " << files.train.string() << " (" << spec.num_classes * spec.train_per_class << " records)\n";
  out << "wrote " << files.test.string() << " (" << spec.num_classes * spec.test_per_class << " records)\n";
  return kExitOk;
}

int do_train(std::string data, const std::string& config_path, std::string model_out, bool desk,
             std::string heldout, std::ostream& out, std::ostream& err) {
  TrainConfig config;
  if (desk) config.model = ModelConfig::desk();
  RunPaths paths;
  if (!config_path.empty()) config = parse_run_config(read_json_file(config_path), config, paths);
  if (data.empty()) data = paths.data;
  if (model_out.empty()) model_out = paths.out;
  if (heldout.empty()) heldout = paths.heldout;
  if (data.empty() || model_out.empty()) throw ConfigError("train needs --data and --out (or config paths)");

  const EncodingOptions enc{config.model.seq_len, config.min_count};
  auto ds = load_dataset(data, enc);
  config.model.num_classes = ds.labels.size();
  config.validate();

  std::optional<Dataset> held;
  if (!heldout.empty()) held = load_dataset(heldout, enc, &ds.vocab, &ds.labels);

  err << "training on " << ds.records.size() << " records, vocabulary " << ds.vocab.size() << ", "
      << ds.labels.size() << " classes, feature dim " << config.model.feature_dim() << "\n";
  auto result = train(ds.records, ds.vocab.size(), config, held ? std::span(held->records) : std::span<const EncodedRecord>{},
                      [&](const EpochStats& e) {
                        err << "epoch " << e.epoch << "  loss " << fmt("%.6f", e.mean_loss) << "  train_acc "
                            << fmt("%.4f", e.train_accuracy);
                        if (e.heldout_accuracy) err << "  heldout_acc " << fmt("%.4f", *e.heldout_accuracy);
                        err << "  (" << fmt("%.2f", e.seconds) << " s)\n";
                      });

  ModelBundle bundle{std::move(result.params), std::move(ds.vocab), std::move(ds.labels), config};
  const auto bytes = save(bundle, model_out);
  out << "saved " << model_out << " (" << bytes << " bytes)\n";
  return kExitOk;
}

int do_evaluate(const std::string& model_path, const std::string& data, const std::string& json_path,
                std::size_t repetitions, std::ostream& out) {
  const auto bundle = load(model_path);
  const auto records = read_jsonl(data);
  if (records.empty()) throw DataError("evaluation set is empty");
  std::vector<std::size_t> truth;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto c = bundle.labels.find(records[i].label);
    if (!c) throw DataError("unknown label '" + records[i].label + "'", i + 1);
    truth.push_back(*c);
  }
  auto bench = benchmark_latency(bundle, records, repetitions);
  auto report = macro_report(confusion(bench.predictions, truth, bundle.labels.size()), bundle.labels.labels());
  report.latency = bench.latency;
  out << format_report(report);
  if (!json_path.empty()) {
    std::ofstream js(json_path, std::ios::trunc);
    if (!js) throw Error("cannot write '" + json_path + "'");
    js << to_json(report).dump(2) << '\n';
  }
  return kExitOk;
}

int do_predict(const std::string& model_path, const std::string& text, std::ostream& out) {
  const auto bundle = load(model_path);
  const auto p = bundle.predict(text);
  for (std::size_t c = 0; c < p.probabilities.size(); ++c) {
    out << bundle.labels.label(c) << '\t' << fmt("%.6f", p.probabilities[c]) << '\n';
  }
  out << "prediction\t" << p.label << '\n';
  return kExitOk;
}

int do_export(const std::string& model_path, const std::string& data, const std::string& tsv, std::ostream& out) {
  const auto bundle = load(model_path);
  const auto records = read_jsonl(data);
  const auto rows = export_features(bundle, records, tsv);
  out << "wrote " << rows << " rows x " << bundle.params.config.feature_dim() << " features to " << tsv << '\n';
  return kExitOk;
}

int do_gradcheck(std::uint64_t seed, std::ostream& out) {
  const auto cfg = ModelConfig::desk(6);
  constexpr std::size_t kVocab = 60;
  const auto params = init_params(cfg, kVocab, seed);
  const auto batch = random_batch(cfg, kVocab, 4, mix_seed(seed, 1));
  const auto r = grad_check(params, batch, kGradCheckEpsilon, TrainConfig{}.l2_coeff, mix_seed(seed, 2));
  for (const auto& [name, e] : r.per_tensor) out << "  " << name << "\t" << fmt("%.3e", e) << '\n';
  const bool ok = r.max_rel_error < kGradCheckTolerance && r.max_rel_error_fc < kGradCheckFcTolerance;
  out << "max relative error " << fmt("%.3e", r.max_rel_error) << " (fc " << fmt("%.3e", r.max_rel_error_fc)
      << ") over " << r.coordinates << " coordinates (" << r.kinks_skipped << " kinks skipped): " << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-kernel convolutional text classifier", "tcnn"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  synth->add_option("--spec", spec_path, "Synthetic corpus spec (JSON)");
  synth->add_option("--out-dir", out_dir, "Output directory")->required();

  std::string data, config_path, model_out, heldout;
  bool desk = false;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--data", data, "Training set (JSONL)");
  tr->add_option("--config", config_path, "Run config (JSON)");
  tr->add_option("--out", model_out, "Model file to write");
  tr->add_option("--heldout", heldout, "Optional held-out set for per-epoch accuracy");
  tr->add_flag("--desk", desk, "Reduced model preset (D=32, N=40, heights 2/3/4, K=16)");

  std::string model_path, json_path;
  std::size_t repetitions = 1;
  auto* ev = app.add_subcommand("evaluate", "Evaluate a model on a labeled set");
  ev->add_option("--model", model_path)->required();
  ev->add_option("--data", data)->required();
  ev->add_option("--json", json_path, "Also write metrics as JSON");
  ev->add_option("--repetitions", repetitions, "Timing passes over the data")->check(CLI::PositiveNumber);

  std::string text;
  auto* pr = app.add_subcommand("predict", "Classify one text");
  pr->add_option("--model", model_path)->required();
  pr->add_option("--text", text)->required();

  std::string tsv;
  auto* ex = app.add_subcommand("export-features", "Write pooled feature vectors as TSV");
  ex->add_option("--model", model_path)->required();
  ex->add_option("--data", data)->required();
  ex->add_option("--out", tsv)->required();

  std::uint64_t seed = 7;
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  gc->add_option("--seed", seed);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (*synth) return do_synth(spec_path, out_dir, out);
    if (*tr) return do_train(data, config_path, model_out, desk, heldout, out, err);
    if (*ev) return do_evaluate(model_path, data, json_path, repetitions, out);
    if (*pr) return do_predict(model_path, text, out);
    if (*ex) return do_export(model_path, data, tsv, out);
    if (*gc) return do_gradcheck(seed, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace tcnn::cli
