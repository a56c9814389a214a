// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "tcnn/cli.hpp"

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = tcnn::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == tcnn::cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == tcnn::cli::kExitUsage);
  CHECK(run({"predict", "--model", "x"}).code == tcnn::cli::kExitUsage);
  CHECK(run({"gradcheck", "--bogus"}).code == tcnn::cli::kExitUsage);
  CHECK(run({"evaluate", "--model", "m", "--data", "d", "--repetitions", "0"}).code == tcnn::cli::kExitUsage);
}

TEST_CASE("runtime errors exit 2") {
  const auto r = run({"predict", "--model", "/nonexistent/model.tcnn", "--text", "hi"});
  CHECK(r.code == tcnn::cli::kExitRuntime);
  CHECK(!r.err.empty());
}

TEST_CASE("gradcheck passes") {
  const auto r = run({"gradcheck", "--seed", "7"});
  CHECK(r.code == tcnn::cli::kExitOk);
  CHECK(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("synth, train, evaluate, predict, export") {
  const auto dir = oracle::scratch_dir("cli");
  const auto d = [&](const char* f) { return (dir / f).string(); };

  CHECK(run({"synth", "--out-dir", d("data")}).code == 0);
  REQUIRE(std::filesystem::exists(dir / "data" / "train.jsonl"));

  {
    std::ofstream cfg(d("bad.json"));
    cfg << R"({"epochs": 1, "learning_rat": 0.1})";
  }
  CHECK(run({"train", "--desk", "--data", d("data/train.jsonl"), "--out", d("m.tcnn"), "--config", d("bad.json")})
            .code == tcnn::cli::kExitRuntime);

  {
    std::ofstream cfg(d("run.json"));
    cfg << R"({"epochs": 12, "data": ")" << d("data/train.jsonl") << R"("})";
  }
  const auto tr = run({"train", "--desk", "--config", d("run.json"), "--out", d("m.tcnn")});
  REQUIRE(tr.code == 0);
  CHECK(tr.err.find("epoch 12") != std::string::npos);

  const auto ev = run({"evaluate", "--model", d("m.tcnn"), "--data", d("data/test.jsonl"), "--json", d("m.json")});
  REQUIRE(ev.code == 0);
  std::ifstream js(d("m.json"));
  const auto j = nlohmann::json::parse(js);
  const double macro_f1 = j["macro"]["f1"];
  CHECK(macro_f1 >= 0.95);
  CHECK(ev.out.find(fixed4(macro_f1)) != std::string::npos);
  CHECK(ev.out.find(fixed4(j["overall_accuracy"].get<double>())) != std::string::npos);
  for (const auto& [label, m] : j["per_class"].items()) CHECK(ev.out.find(label) != std::string::npos);
  CHECK(ev.out.find("\xC2\xB1") != std::string::npos);
  CHECK(j["latency"]["samples"] == 300);

  const auto pr = run({"predict", "--model", d("m.tcnn"), "--text", "m2x0 m2x1 w3 m2x5"});
  CHECK(pr.code == 0);
  CHECK(pr.out.find("prediction\tclass_2") != std::string::npos);
  CHECK(run({"predict", "--model", d("m.tcnn"), "--text", ""}).code == 0);

  const auto ex = run({"export-features", "--model", d("m.tcnn"), "--data", d("data/test.jsonl"), "--out", d("f.tsv")});
  CHECK(ex.code == 0);
  std::ifstream tsv(d("f.tsv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(tsv, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), '\t') == 48);  // 48 desk features then the label
  }
  CHECK(rows == 300);
  std::filesystem::remove_all(dir);
}
