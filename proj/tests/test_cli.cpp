#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "asap/cli.hpp"
#include "asap/corpus.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = asap::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

const std::string kData = ASAP_TEST_DATA_DIR;

std::vector<std::string> small_model_flags() {
  return {"--hidden", "16", "--layers", "1", "--heads", "2", "--ffn", "32", "--batch-size", "8"};
}

}  // namespace

TEST_CASE("cli: eval on the shipped 4-pair fixture") {
  const Result r = run({"eval", "--preds", kData + "/p.jsonl", "--gold", kData + "/g.csv", "--format", "json"});
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["acsa"]["accuracy"].get<double>() == 0.75);
  CHECK(j["acsa"]["macro_f1"].get<double>() == doctest::Approx(0.7778).epsilon(1e-4));

  const Result table = run({"eval", "--preds", kData + "/p.jsonl", "--gold", kData + "/g.csv"});
  CHECK(table.code == 0);
  CHECK(table.out.find("75.00") != std::string::npos);
}

TEST_CASE("cli: stats and validate on the shipped fixture") {
  const Result s = run({"stats", "--data", kData + "/stats_fixture.csv", "--format", "json"});
  REQUIRE(s.code == 0);
  CHECK(json::parse(s.out)["review_count"] == 3);
  const Result v = run({"validate", "--data", kData + "/stats_fixture.csv"});
  CHECK(v.code == 0);
  CHECK(json::parse(v.out)["reviews"] == 3);
}

TEST_CASE("cli: usage and data errors map to exit codes") {
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"stats"}).code == 1);
  CHECK(run({"stats", "--data", "/no/such/file.csv"}).code == 1);
  const Result help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("Exit codes") != std::string::npos);

  TempDir tmp("asap_cli_errors");
  std::ofstream(tmp / "bad.csv") << "id,review,star\n1,好,3\n";
  const Result missing = run({"validate", "--data", tmp / "bad.csv"});
  CHECK(missing.code == 2);
  const auto err = json::parse(missing.err.substr(0, missing.err.find('\n')));
  CHECK(err["error"] == "data");
  CHECK(err["kind"] == "MissingColumn");

  std::ofstream(tmp / "not.ckpt") << "garbage";
  CHECK(run({"predict", "--checkpoint", tmp / "not.ckpt", "--data", kData + "/g.csv", "--out-dir",
             tmp / "p"}).code == 2);

  std::ofstream(tmp / "file") << "x";
  const Result io = run({"split", "--data", kData + "/stats_fixture.csv", "--out-dir", tmp / "file/sub"});
  CHECK(io.code == 3);

  CHECK(run({"split", "--data", kData + "/stats_fixture.csv", "--out-dir", tmp / "s", "--ratios",
             "0.5,0.5,0.5"}).code == 1);
  CHECK(run({"train", "--data", kData + "/g.csv", "--out-dir", tmp / "t", "--encoder", "bert"}).code == 1);
}

TEST_CASE("cli: curate output always validates") {
  TempDir tmp("asap_cli_curate");
  {
    std::ofstream raw(tmp / "raw.csv");
    const auto header = asap::csv_header(asap::AspectTaxonomy::restaurant18());
    std::vector<std::string> cols = header;
    cols.push_back("user_id");
    asap::write_csv_row(raw, cols);
    for (int i = 0; i < 6; ++i) {
      std::vector<std::string> row(cols.size());
      row[0] = "r" + std::to_string(i);
      row[1] = fixtures::chinese(i % 2 == 0 ? 70 : 20, static_cast<std::uint64_t>(i));
      row[2] = "4";
      row[3 + 15] = "1";
      row.back() = "user" + std::to_string(i);
      asap::write_csv_row(raw, row);
    }
  }
  const Result c = run({"curate", "--input", tmp / "raw.csv", "--out-dir", tmp / "out"});
  REQUIRE(c.code == 0);
  const auto report = json::parse(c.out);
  CHECK(report["kept"] == 3);
  CHECK(report["dropped_short"] == 3);
  CHECK(fs::exists(tmp.path / "out" / "resolved_config.json"));
  CHECK(run({"validate", "--data", tmp / "out/curated.csv"}).code == 0);
  CHECK(slurp(tmp.path / "out" / "curated.csv").find("user") == std::string::npos);
}

TEST_CASE("cli: config precedence is flag > env > config file > default") {
  TempDir tmp("asap_cli_config");
  std::ofstream(tmp / "cfg.toml") << "[split]\nseed = 11\n";
  auto seed_of = [&](const std::string& dir) {
    return json::parse(slurp(fs::path(dir) / "resolved_config.json"))["options"]["seed"].get<std::string>();
  };
  const std::string data = kData + "/stats_fixture.csv";

  REQUIRE(run({"split", "--data", data, "--out-dir", tmp / "d"}).code == 0);
  CHECK(seed_of(tmp / "d") == "7");
  REQUIRE(run({"--config", tmp / "cfg.toml", "split", "--data", data, "--out-dir", tmp / "c"}).code == 0);
  CHECK(seed_of(tmp / "c") == "11");
  ::setenv("ASAP_SEED", "13", 1);
  REQUIRE(run({"--config", tmp / "cfg.toml", "split", "--data", data, "--out-dir", tmp / "e"}).code == 0);
  CHECK(seed_of(tmp / "e") == "13");
  REQUIRE(run({"--config", tmp / "cfg.toml", "split", "--data", data, "--out-dir", tmp / "f", "--seed", "17"})
              .code == 0);
  CHECK(seed_of(tmp / "f") == "17");
  ::unsetenv("ASAP_SEED");
}

TEST_CASE("cli: split writes three seeded parts") {
  TempDir tmp("asap_cli_split");
  {
    std::ofstream out(tmp / "corpus.csv");
    asap::write_dataset_csv(out, fixtures::synthetic_corpus(4, 20));
  }
  REQUIRE(run({"split", "--data", tmp / "corpus.csv", "--out-dir", tmp / "a", "--seed", "3"}).code == 0);
  REQUIRE(run({"split", "--data", tmp / "corpus.csv", "--out-dir", tmp / "b", "--seed", "3"}).code == 0);
  for (const char* part : {"train.csv", "dev.csv", "test.csv"}) {
    CHECK(slurp(tmp.path / "a" / part) == slurp(tmp.path / "b" / part));
  }
  const auto train = asap::load_dataset_csv(tmp / "a/train.csv", asap::AspectTaxonomy::restaurant18());
  CHECK(train.size() == 16);
}

TEST_CASE("cli: train is reproducible and feeds predict, eval, visualize and detect") {
  TempDir tmp("asap_cli_pipeline");
  {
    std::ofstream out(tmp / "fixture.csv");
    asap::write_dataset_csv(out, fixtures::synthetic_corpus(12, 16));
    std::ofstream dev(tmp / "dev.csv");
    asap::write_dataset_csv(dev, fixtures::synthetic_corpus(13, 6));
  }
  auto train_args = [&](const std::string& out, const std::string& epochs = "1") {
    std::vector<std::string> a{"train", "--data", tmp / "fixture.csv", "--encoder", "tiny",
                               "--epochs", epochs, "--seed", "7", "--out-dir", out};
    for (const auto& f : small_model_flags()) a.push_back(f);
    return a;
  };
  REQUIRE(run(train_args(tmp / "run1")).code == 0);
  REQUIRE(run(train_args(tmp / "run2")).code == 0);
  const std::string log1 = slurp(tmp.path / "run1" / "train_log.jsonl");
  CHECK_FALSE(log1.empty());
  CHECK(log1 == slurp(tmp.path / "run2" / "train_log.jsonl"));
  CHECK(fs::exists(tmp.path / "run1" / "final.ckpt"));
  CHECK(fs::exists(tmp.path / "run1" / "checkpoints" / "epoch-1.ckpt"));
  CHECK(fs::exists(tmp.path / "run1" / "resolved_config.json"));

  auto with_dev = train_args(tmp / "run3", "2");
  with_dev.push_back("--dev");
  with_dev.push_back(tmp / "dev.csv");
  REQUIRE(run(with_dev).code == 0);
  const auto summary = json::parse(slurp(tmp.path / "run3" / "summary.json"));
  CHECK(summary["epochs"] == 2);
  CHECK(summary["best_macro_f1"]["dev"].contains("macro_f1"));

  const std::string ckpt = tmp / "run3/final.ckpt";
  REQUIRE(run({"predict", "--checkpoint", ckpt, "--data", tmp / "dev.csv", "--out-dir", tmp / "pred"}).code == 0);
  const std::string preds = tmp / "pred/predictions.jsonl";
  const Result ev = run({"eval", "--preds", preds, "--gold", tmp / "dev.csv", "--format", "json",
                         "--per-aspect", "--out-dir", tmp / "eval"});
  REQUIRE(ev.code == 0);
  CHECK(json::parse(ev.out).contains("per_aspect"));
  CHECK(fs::exists(tmp.path / "eval" / "metrics.json"));

  REQUIRE(run({"visualize-attention", "--checkpoint", ckpt, "--data", tmp / "dev.csv", "--out-dir",
               tmp / "viz", "--limit", "2"}).code == 0);
  std::ifstream attn(tmp / "viz/attention.jsonl");
  std::string line;
  int records = 0;
  while (std::getline(attn, line)) {
    const auto j = json::parse(line);
    double sum = 0.0;
    for (double w : j["weights"]) sum += w;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    ++records;
  }
  CHECK(records > 0);
  CHECK(fs::exists(tmp.path / "viz" / "attention.html"));

  const Result det = run({"detect-unreliable", "--data", tmp / "dev.csv", "--preds", preds, "--out-dir",
                          tmp / "det", "--threshold", "0.5"});
  REQUIRE(det.code == 0);
  CHECK(json::parse(det.out)["reviews"] == 6);
  const Result det2 = run({"detect-unreliable", "--data", tmp / "dev.csv", "--checkpoint", ckpt,
                           "--out-dir", tmp / "det2", "--threshold", "0.5"});
  REQUIRE(det2.code == 0);
  CHECK(slurp(tmp.path / "det" / "unreliable.jsonl") == slurp(tmp.path / "det2" / "unreliable.jsonl"));
  CHECK(run({"detect-unreliable", "--data", tmp / "dev.csv", "--out-dir", tmp / "det3"}).code == 1);
}
