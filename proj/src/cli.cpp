#include "asap/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "asap/corpus.hpp"
#include "asap/csv.hpp"
#include "asap/error.hpp"
#include "asap/evaluation.hpp"
#include "asap/taxonomy.hpp"
#include "asap/training.hpp"

namespace asap::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char* kFooter = R"(Exit codes:
  0  success
  1  usage error (unknown subcommand, bad or missing flag)
  2  data error (malformed CSV, unknown polarity, taxonomy mismatch, ...)
  3  runtime error (I/O failure, non-finite loss, ...)

Precedence: command-line flag > ASAP_* environment variable > --config file > default.
Every long flag --some-flag can be set through ASAP_SOME_FLAG. The config file is
TOML/INI with one [subcommand] section per subcommand, e.g.
  [train]
  epochs = 3
  seed = 7
Subcommands that write artifacts echo their resolved options to
<out-dir>/resolved_config.json.)";

struct Options {
  // shared
  std::string out_dir;
  std::vector<std::string> data;
  std::string dev;
  std::string checkpoint;
  std::string preds;
  std::string gold;
  std::uint64_t seed = 7;
  int sentinel = -2;
  int threads = 0;
  bool serial = false;
  std::string format = "table";

  // curate
  std::string input;
  std::size_t min_chars = 50;
  std::size_t max_chars = 1000;
  double max_non_chinese = 0.70;

  // split
  std::vector<double> ratios = {0.8, 0.1, 0.1};

  // train
  std::string encoder = "tiny";
  int hidden = 64;
  int layers = 2;
  int heads = 4;
  int ffn = 256;
  int min_count = 1;
  int batch_size = 16;
  int epochs = 3;
  double lr = 1e-3;
  int max_len = 512;
  double lambda_acsa = 1.0;
  double lambda_rp = 1.0;
  int warmup = 0;
  double clip_norm = 0.0;
  bool freeze_encoder = false;
  std::int64_t max_steps = 0;

  // eval / visualize / detect
  bool per_aspect = false;
  std::size_t limit = 0;
  bool no_html = false;
  double threshold = kDefaultUnreliableThreshold;
};

std::string env_name(const std::string& lname) {
  std::string out = "ASAP_";
  for (char c : lname) {
    out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

bool mentions(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

// Environment values are appended as flags so they outrank the config file
// but never a flag given explicitly.
void append_env(const CLI::App& app, const std::vector<std::string>& given,
                std::vector<std::string>& args) {
  for (const CLI::Option* opt : app.get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names.front() == "help" || names.front() == "config") continue;
    const std::string flag = "--" + names.front();
    if (mentions(given, flag)) continue;
    const char* value = std::getenv(env_name(names.front()).c_str());
    if (value == nullptr) continue;
    args.push_back(flag + "=" + value);
  }
}

std::string find_subcommand(const CLI::App& app, const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config" || a == "--threads") {
      ++i;
      continue;
    }
    if (!a.empty() && a[0] == '-') continue;
    for (const CLI::App* sub : app.get_subcommands({})) {
      if (sub->get_name() == a) return a;
    }
    return {};
  }
  return {};
}

fs::path prepare_out_dir(const std::string& dir) {
  if (dir.empty()) throw Error(ErrorKind::InvalidArgument, "--out-dir must not be empty");
  fs::path path(dir);
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir + ": " + ec.message());
  return path;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

void echo_config(const CLI::App& sub, const fs::path& dir) {
  json options = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names.front() == "help") continue;
    json value;
    if (opt->count() > 0) {
      const auto& results = opt->results();
      if (results.size() == 1) {
        value = results.front();
      } else {
        value = results;
      }
    } else {
      value = opt->get_default_str();
    }
    options[names.front()] = value;
  }
  json doc{{"subcommand", sub.get_name()}, {"options", options}};
  auto out = open_out(dir / "resolved_config.json");
  out << doc.dump(2) << '\n';
}

ParseOptions parse_options(const Options& o) {
  ParseOptions p;
  p.not_mentioned_sentinel = o.sentinel;
  return p;
}

Dataset load(const std::string& path, Split split, const Options& o) {
  return load_dataset_csv(path, AspectTaxonomy::restaurant18(), split, parse_options(o));
}

Execution execution(const Options& o) { return o.serial ? Execution::Serial : Execution::Parallel; }

// ---- subcommands ------------------------------------------------------------

int cmd_validate(const Options& o, std::ostream& out) {
  for (const auto& path : o.data) {
    const Dataset ds = load(path, Split::Unsplit, o);
    std::size_t unlabeled = 0;
    for (const auto& r : ds.reviews()) unlabeled += r.mentioned_count() == 0 ? 1 : 0;
    json report{{"file", path},
                {"status", "ok"},
                {"reviews", ds.size()},
                {"reviews_without_aspects", unlabeled}};
    out << report.dump() << '\n';
  }
  return kExitOk;
}

int cmd_curate(const Options& o, const CLI::App& sub, std::ostream& out) {
  std::ifstream in(o.input, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + o.input);
  const auto records = to_records(read_csv(in));
  CurationConfig config;
  config.min_chinese_chars = o.min_chars;
  config.max_chinese_chars = o.max_chars;
  config.max_non_chinese_ratio = o.max_non_chinese;
  config.parse = parse_options(o);
  const auto result = curate(records, config, AspectTaxonomy::restaurant18());

  const fs::path dir = prepare_out_dir(o.out_dir);
  echo_config(sub, dir);
  save_dataset_csv((dir / "curated.csv").string(), result.dataset);
  const std::string report = curation_report_json(result.report);
  open_out(dir / "curation_report.json") << report << '\n';
  out << report << '\n';
  return kExitOk;
}

int cmd_stats(const Options& o, const CLI::App& sub, std::ostream& out) {
  const auto taxonomy = AspectTaxonomy::restaurant18();
  json all = json::object();
  for (const auto& path : o.data) {
    const Dataset ds = load(path, Split::Unsplit, o);
    const CorpusStats stats = compute_stats(ds);
    const std::string label = fs::path(path).stem().string();
    if (o.format == "json") {
      out << stats_json(stats, taxonomy) << '\n';
    } else {
      out << stats_table(stats, label);
    }
    all[label] = json::parse(stats_json(stats, taxonomy));
  }
  if (!o.out_dir.empty()) {
    const fs::path dir = prepare_out_dir(o.out_dir);
    echo_config(sub, dir);
    open_out(dir / "stats.json") << all.dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_split(const Options& o, const CLI::App& sub, std::ostream& out) {
  if (o.ratios.size() != 3) {
    throw Error(ErrorKind::BadRatios, "--ratios takes exactly three values");
  }
  const Dataset ds = load(o.data.front(), Split::Unsplit, o);
  const auto parts = split(ds, o.seed, {o.ratios[0], o.ratios[1], o.ratios[2]});
  const fs::path dir = prepare_out_dir(o.out_dir);
  echo_config(sub, dir);
  save_dataset_csv((dir / "train.csv").string(), parts.train);
  save_dataset_csv((dir / "dev.csv").string(), parts.dev);
  save_dataset_csv((dir / "test.csv").string(), parts.test);
  out << json{{"train", parts.train.size()}, {"dev", parts.dev.size()}, {"test", parts.test.size()}}
             .dump()
      << '\n';
  return kExitOk;
}

json snapshot_json(const std::optional<EvalSnapshot>& s) {
  if (!s) return nullptr;
  return {{"macro_f1", s->macro_f1},
          {"accuracy", s->accuracy},
          {"mae", s->mae},
          {"rating_accuracy", s->rating_accuracy}};
}

int cmd_train(const Options& o, const CLI::App& sub, std::ostream& out) {
  if (o.encoder != "tiny") {
    throw Error(ErrorKind::InvalidArgument,
                "encoder '" + o.encoder + "' is not built in; only 'tiny' is available");
  }
  const Dataset train_set = load(o.data.front(), Split::Train, o);
  const Dataset dev_set = o.dev.empty()
                              ? Dataset(train_set.taxonomy(), {}, Split::Dev)
                              : load(o.dev, Split::Dev, o);

  EncoderConfig enc;
  enc.hidden = o.hidden;
  enc.layers = o.layers;
  enc.heads = o.heads;
  enc.ffn_hidden = o.ffn;
  enc.max_len = o.max_len;
  enc.init_seed = o.seed;

  TrainConfig cfg;
  cfg.batch_size = o.batch_size;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.lr;
  cfg.max_len = o.max_len;
  cfg.seed = o.seed;
  cfg.loss_weights = {o.lambda_acsa, o.lambda_rp};
  cfg.warmup_steps = o.warmup;
  cfg.clip_norm = o.clip_norm;
  cfg.freeze_encoder = o.freeze_encoder;
  cfg.max_steps = o.max_steps;
  cfg.execution = execution(o);
  cfg.validate();

  const fs::path dir = prepare_out_dir(o.out_dir);
  echo_config(sub, dir);
  cfg.checkpoint_dir = (dir / "checkpoints").string();

  JointModel model = JointModel::create(train_set, enc, o.min_count);
  auto log = open_out(dir / "train_log.jsonl");
  TrainHooks hooks;
  hooks.log = &log;
  const TrainResult result = train(train_set, dev_set, cfg, std::move(model), hooks);

  const auto& best_f1 = result.history[result.best_macro_f1];
  const auto& best_mae = result.history[result.best_mae];
  const auto& last = result.history[result.final_index];
  save_checkpoint(best_f1, (dir / "best_macro_f1.ckpt").string());
  save_checkpoint(best_mae, (dir / "best_mae.ckpt").string());
  save_checkpoint(last, (dir / "final.ckpt").string());

  json summary{{"config_fingerprint", cfg.fingerprint()},
               {"steps", result.steps.size()},
               {"epochs", result.history.size()},
               {"final_loss", result.steps.empty() ? 0.0 : result.steps.back().loss.total},
               {"best_macro_f1", {{"epoch", best_f1.epoch}, {"dev", snapshot_json(best_f1.dev_metrics)}}},
               {"best_mae", {{"epoch", best_mae.epoch}, {"dev", snapshot_json(best_mae.dev_metrics)}}},
               {"final", {{"epoch", last.epoch}, {"dev", snapshot_json(last.dev_metrics)}}}};
  open_out(dir / "summary.json") << summary.dump(2) << '\n';
  out << summary.dump() << '\n';
  return kExitOk;
}

int cmd_eval(const Options& o, const CLI::App& sub, std::ostream& out) {
  const auto taxonomy = AspectTaxonomy::restaurant18();
  const Dataset gold = load(o.gold, Split::Unsplit, o);
  std::ifstream in(o.preds);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + o.preds);
  const auto preds = align_predictions(read_predictions_jsonl(in, taxonomy), gold);
  const AcsaMetrics acsa = evaluate_acsa(preds, gold);
  const RpMetrics rp = evaluate_rp(preds, gold);

  json doc = json::parse(metrics_json(acsa, rp));
  if (o.per_aspect) {
    json per = json::object();
    const auto breakdown = evaluate_acsa_per_aspect(preds, gold);
    for (std::size_t i = 0; i < breakdown.size(); ++i) {
      per[taxonomy[static_cast<int>(i)].name()] = {{"macro_f1", breakdown[i].macro_f1},
                                                   {"accuracy", breakdown[i].accuracy},
                                                   {"pairs", breakdown[i].pairs}};
    }
    doc["per_aspect"] = per;
  }
  if (o.format == "json") {
    out << doc.dump() << '\n';
  } else {
    out << metrics_table(acsa, rp, fs::path(o.preds).stem().string());
  }
  if (!o.out_dir.empty()) {
    const fs::path dir = prepare_out_dir(o.out_dir);
    echo_config(sub, dir);
    open_out(dir / "metrics.json") << doc.dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_predict(const Options& o, const CLI::App& sub, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Dataset ds = load(o.data.front(), Split::Unsplit, o);
  const auto preds = predict(ds, ckpt.model, o.max_len, false, execution(o));
  std::vector<PredictionRecord> records;
  records.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) records.push_back({ds[i].id, preds[i]});

  const fs::path dir = prepare_out_dir(o.out_dir);
  echo_config(sub, dir);
  auto file = open_out(dir / "predictions.jsonl");
  write_predictions_jsonl(file, records, ds.taxonomy());
  out << json{{"predictions", records.size()}, {"file", (dir / "predictions.jsonl").string()}}.dump()
      << '\n';
  return kExitOk;
}

int cmd_visualize(const Options& o, const CLI::App& sub, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Dataset full = load(o.data.front(), Split::Unsplit, o);
  std::vector<Review> subset = full.reviews();
  if (o.limit > 0 && subset.size() > o.limit) subset.resize(o.limit);
  const Dataset ds(full.taxonomy(), std::move(subset), full.split());

  const auto preds = predict(ds, ckpt.model, o.max_len, true, execution(o));
  const int max_len = std::min(o.max_len, ckpt.model.config.max_len);
  const Tokenizer tokenizer = ckpt.model.tokenizer();
  std::vector<AttentionTrace> traces;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    traces.push_back(build_attention_trace(ds[i], tokenizer.tokenize(ds[i].text, max_len), preds[i],
                                           ds.taxonomy()));
  }
  const fs::path dir = prepare_out_dir(o.out_dir);
  echo_config(sub, dir);
  const std::optional<std::string> html =
      o.no_html ? std::nullopt : std::optional<std::string>((dir / "attention.html").string());
  export_attention(traces, (dir / "attention.jsonl").string(), html);
  out << json{{"reviews", traces.size()}, {"file", (dir / "attention.jsonl").string()}}.dump() << '\n';
  return kExitOk;
}

int cmd_detect(const Options& o, const CLI::App& sub, std::ostream& out) {
  const Dataset ds = load(o.data.front(), Split::Unsplit, o);
  std::vector<JointPrediction> preds;
  if (!o.preds.empty()) {
    std::ifstream in(o.preds);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + o.preds);
    preds = align_predictions(read_predictions_jsonl(in, ds.taxonomy()), ds);
  } else if (!o.checkpoint.empty()) {
    preds = predict(ds, load_checkpoint(o.checkpoint).model, o.max_len, false, execution(o));
  } else {
    throw Error(ErrorKind::InvalidArgument, "detect-unreliable needs --checkpoint or --preds");
  }

  struct Row {
    std::size_t index;
    Reliability rel;
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    rows.push_back({i, detect_unreliable(ds[i], preds[i].rating, o.threshold)});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.rel.margin > b.rel.margin; });

  const fs::path dir = prepare_out_dir(o.out_dir);
  echo_config(sub, dir);
  auto file = open_out(dir / "unreliable.jsonl");
  std::size_t flagged = 0;
  for (const auto& row : rows) {
    const Review& r = ds[row.index];
    flagged += row.rel.flagged ? 1 : 0;
    file << json{{"id", r.id},
                 {"rating", r.rating},
                 {"predicted", preds[row.index].rating},
                 {"margin", row.rel.margin},
                 {"flagged", row.rel.flagged}}
                .dump()
         << '\n';
  }
  out << json{{"reviews", ds.size()}, {"flagged", flagged}, {"threshold", o.threshold}}.dump() << '\n';
  return kExitOk;
}

void report_error(std::ostream& err, std::string_view category, std::string_view kind,
                  std::string_view message) {
  err << json{{"error", category}, {"kind", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Joint aspect-category sentiment analysis and rating prediction toolkit", "asap"};
  app.option_defaults()->always_capture_default();
  app.footer(kFooter);
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI config file with [subcommand] sections")
      ->envname("ASAP_CONFIG");
  app.add_option("--threads", o.threads, "OpenMP threads (0: runtime default)")
      ->check(CLI::NonNegativeNumber);

  auto add_parse = [&](CLI::App* sub) {
    sub->add_option("--sentinel", o.sentinel, "Numeric label that also means 'not mentioned'");
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Seed for every stochastic step");
  };
  auto add_serial = [&](CLI::App* sub) {
    sub->add_flag("--serial", o.serial, "Use the serial reference kernels");
  };
  auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", o.format, "Report format on stdout")
        ->check(CLI::IsMember({"table", "json"}));
  };

  auto* validate = app.add_subcommand("validate", "Load review CSV files and check every row");
  validate->add_option("--data", o.data, "Review CSV file(s)")->required()->check(CLI::ExistingFile);
  add_parse(validate);

  auto* curate_cmd = app.add_subcommand("curate", "Apply the corpus curation rules to a raw CSV");
  curate_cmd->add_option("--input", o.input, "Raw review CSV")->required()->check(CLI::ExistingFile);
  curate_cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();
  curate_cmd->add_option("--min-chars", o.min_chars, "Minimum Chinese characters (inclusive)");
  curate_cmd->add_option("--max-chars", o.max_chars, "Maximum Chinese characters (inclusive)");
  curate_cmd->add_option("--max-non-chinese", o.max_non_chinese,
                         "Drop reviews whose non-Chinese share exceeds this")
      ->check(CLI::Range(0.0, 1.0));
  add_parse(curate_cmd);

  auto* stats = app.add_subcommand("stats", "Corpus statistics");
  stats->add_option("--data", o.data, "Review CSV file(s)")->required()->check(CLI::ExistingFile);
  stats->add_option("--out-dir", o.out_dir, "Also write stats.json here");
  add_format(stats);
  add_parse(stats);

  auto* split_cmd = app.add_subcommand("split", "Seeded train/dev/test split");
  split_cmd->add_option("--data", o.data, "Review CSV file")->required()->check(CLI::ExistingFile)
      ->expected(1);
  split_cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();
  split_cmd->add_option("--ratios", o.ratios, "train dev test fractions")->expected(3)
      ->delimiter(',');
  add_seed(split_cmd);
  add_parse(split_cmd);

  auto* train_cmd = app.add_subcommand("train", "Train the joint model");
  train_cmd->add_option("--data", o.data, "Training CSV")->required()->check(CLI::ExistingFile)
      ->expected(1);
  train_cmd->add_option("--dev", o.dev, "Dev CSV for per-epoch metrics")->check(CLI::ExistingFile);
  train_cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();
  train_cmd->add_option("--encoder", o.encoder, "Contextual encoder");
  train_cmd->add_option("--hidden", o.hidden, "Encoder hidden size");
  train_cmd->add_option("--layers", o.layers, "Encoder layers");
  train_cmd->add_option("--heads", o.heads, "Attention heads per layer");
  train_cmd->add_option("--ffn", o.ffn, "Feed-forward width");
  train_cmd->add_option("--min-count", o.min_count, "Minimum token count for the vocabulary");
  train_cmd->add_option("--batch-size", o.batch_size, "Reviews per step");
  train_cmd->add_option("--epochs", o.epochs, "Passes over the training set");
  train_cmd->add_option("--lr", o.lr, "Adam learning rate");
  train_cmd->add_option("--max-len", o.max_len, "Token budget per review, START included");
  train_cmd->add_option("--lambda-acsa", o.lambda_acsa, "ACSA loss weight");
  train_cmd->add_option("--lambda-rp", o.lambda_rp, "Rating loss weight");
  train_cmd->add_option("--warmup", o.warmup, "Linear warmup steps");
  train_cmd->add_option("--clip-norm", o.clip_norm, "Global gradient-norm clip (0: off)");
  train_cmd->add_flag("--freeze-encoder", o.freeze_encoder, "Train the heads only");
  train_cmd->add_option("--max-steps", o.max_steps, "Stop after this many steps (0: no cap)");
  add_seed(train_cmd);
  add_serial(train_cmd);
  add_parse(train_cmd);

  auto* eval = app.add_subcommand("eval", "Score a predictions file against gold labels");
  eval->add_option("--preds", o.preds, "Predictions JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--gold", o.gold, "Gold review CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--out-dir", o.out_dir, "Also write metrics.json here");
  eval->add_flag("--per-aspect", o.per_aspect, "Add a per-aspect breakdown");
  add_format(eval);
  add_parse(eval);

  auto* predict_cmd = app.add_subcommand("predict", "Run a checkpoint over a review CSV");
  predict_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required()
      ->check(CLI::ExistingFile);
  predict_cmd->add_option("--data", o.data, "Review CSV")->required()->check(CLI::ExistingFile)
      ->expected(1);
  predict_cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();
  predict_cmd->add_option("--max-len", o.max_len, "Token budget per review");
  add_serial(predict_cmd);
  add_parse(predict_cmd);

  auto* visualize = app.add_subcommand("visualize-attention", "Export attention weights");
  visualize->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required()
      ->check(CLI::ExistingFile);
  visualize->add_option("--data", o.data, "Review CSV")->required()->check(CLI::ExistingFile)
      ->expected(1);
  visualize->add_option("--out-dir", o.out_dir, "Output directory")->required();
  visualize->add_option("--limit", o.limit, "Only the first N reviews (0: all)");
  visualize->add_option("--max-len", o.max_len, "Token budget per review");
  visualize->add_flag("--no-html", o.no_html, "Skip the heatmap page");
  add_serial(visualize);
  add_parse(visualize);

  auto* detect = app.add_subcommand("detect-unreliable", "Rank reviews by rating disagreement");
  detect->add_option("--data", o.data, "Review CSV")->required()->check(CLI::ExistingFile)
      ->expected(1);
  detect->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
  detect->add_option("--preds", o.preds, "Predictions JSONL instead of a checkpoint")
      ->check(CLI::ExistingFile);
  detect->add_option("--out-dir", o.out_dir, "Output directory")->required();
  detect->add_option("--threshold", o.threshold, "Flag when |predicted - rating| >= threshold")
      ->check(CLI::PositiveNumber);
  detect->add_option("--max-len", o.max_len, "Token budget per review");
  add_serial(detect);
  add_parse(detect);

  std::vector<std::string> full = args;
  if (const std::string name = find_subcommand(app, args); !name.empty()) {
    append_env(*app.get_subcommand(name), args, full);
  }
  append_env(app, args, full);

  std::vector<std::string> reversed(full.rbegin(), full.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.get_name(), e.what());
    err << "Run with --help for usage.\n";
    return kExitUsage;
  }

#ifdef _OPENMP
  if (o.threads > 0) omp_set_num_threads(o.threads);
#endif

  try {
    if (validate->parsed()) return cmd_validate(o, out);
    if (curate_cmd->parsed()) return cmd_curate(o, *curate_cmd, out);
    if (stats->parsed()) return cmd_stats(o, *stats, out);
    if (split_cmd->parsed()) return cmd_split(o, *split_cmd, out);
    if (train_cmd->parsed()) return cmd_train(o, *train_cmd, out);
    if (eval->parsed()) return cmd_eval(o, *eval, out);
    if (predict_cmd->parsed()) return cmd_predict(o, *predict_cmd, out);
    if (visualize->parsed()) return cmd_visualize(o, *visualize, out);
    if (detect->parsed()) return cmd_detect(o, *detect, out);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidArgument || e.kind() == ErrorKind::BadRatios) {
      report_error(err, "usage", to_string(e.kind()), e.what());
      return kExitUsage;
    }
    const bool data = is_data_error(e.kind());
    report_error(err, data ? "data" : "runtime", to_string(e.kind()), e.what());
    return data ? kExitData : kExitRuntime;
  } catch (const std::exception& e) {
    report_error(err, "runtime", "Exception", e.what());
    return kExitRuntime;
  }
  report_error(err, "usage", "NoSubcommand", "no subcommand given");
  return kExitUsage;
}

}  // namespace asap::cli
