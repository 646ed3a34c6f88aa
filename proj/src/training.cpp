#include "asap/training.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "asap/error.hpp"
#include "asap/rng.hpp"

namespace asap {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'S', 'A', 'P', 'C', 'K', 'P', 'T'};

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << v;
  return out.str();
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

void check_taxonomy(const JointModel& model, const Dataset& ds) {
  if (!(model.taxonomy == ds.taxonomy().fingerprint())) {
    throw Error(ErrorKind::TaxonomyMismatch,
                "model built for a different aspect taxonomy than the dataset");
  }
}

nlohmann::ordered_json to_json(const EncoderConfig& c) {
  return {{"hidden", c.hidden},         {"layers", c.layers},   {"heads", c.heads},
          {"ffn_hidden", c.ffn_hidden}, {"vocab_size", c.vocab_size},
          {"max_len", c.max_len},       {"init_seed", c.init_seed}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.hidden = j.at("hidden").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn_hidden = j.at("ffn_hidden").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
  return c;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}

void read_matrix(std::istream& in, Matrix& m) {
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  if (!in) throw Error(ErrorKind::BadCheckpoint, "truncated tensor data");
}

double global_norm(const ModelParameters& grads) {
  double sq = 0.0;
  for (const auto& t : grads.tensors()) sq += t.tensor->squaredNorm();
  return std::sqrt(sq);
}

}  // namespace

// ---- JointModel -------------------------------------------------------------

JointModel JointModel::create(const Dataset& train, EncoderConfig config, int min_count) {
  std::vector<std::string> texts;
  texts.reserve(train.size());
  for (const auto& r : train.reviews()) texts.push_back(r.text);
  JointModel model;
  model.vocab = Vocabulary::build(texts, min_count);
  config.vocab_size = model.vocab.size();
  config.validate();
  model.config = config;
  model.aspect_names = train.taxonomy().names();
  model.taxonomy = train.taxonomy().fingerprint();
  model.params = ModelParameters::initialize(config, train.taxonomy().size());
  return model;
}

// ---- TrainConfig ------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 1");
  if (epochs < 1) throw Error(ErrorKind::InvalidArgument, "epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning_rate must be > 0");
  if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0 && adam.beta2 > 0.0 && adam.beta2 < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "Adam betas must lie in (0, 1)");
  }
  if (max_len < 2) throw Error(ErrorKind::InvalidArgument, "max_len must be >= 2");
  if (loss_weights.acsa < 0.0 || loss_weights.rp < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "loss weights must be non-negative");
  }
}

std::string TrainConfig::describe() const {
  std::ostringstream out;
  out.precision(17);
  out << "batch_size=" << batch_size << ";epochs=" << epochs << ";learning_rate=" << learning_rate
      << ";beta1=" << adam.beta1 << ";beta2=" << adam.beta2 << ";epsilon=" << adam.epsilon
      << ";max_len=" << max_len << ";seed=" << seed << ";lambda_acsa=" << loss_weights.acsa
      << ";lambda_rp=" << loss_weights.rp << ";warmup_steps=" << warmup_steps
      << ";clip_norm=" << clip_norm << ";freeze_encoder=" << freeze_encoder
      << ";max_steps=" << max_steps;
  return out.str();
}

std::string TrainConfig::fingerprint() const { return hex64(fnv1a(describe())); }

// ---- checkpoint I/O -----------------------------------------------------------

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto tensors = ckpt.model.params.tensors();
  nlohmann::ordered_json header;
  header["format"] = "asap-joint-checkpoint";
  header["version"] = kCheckpointVersion;
  header["encoder_config"] = to_json(ckpt.model.config);
  header["taxonomy"] = {{"count", ckpt.model.taxonomy.count},
                        {"names_hash", hex64(ckpt.model.taxonomy.names_hash)},
                        {"names", ckpt.model.aspect_names}};
  header["vocabulary"] = ckpt.model.vocab.pieces();
  header["epoch"] = ckpt.epoch;
  header["step"] = ckpt.step;
  header["config_fingerprint"] = ckpt.config_fingerprint;
  if (ckpt.dev_metrics) {
    header["dev_metrics"] = {{"macro_f1", ckpt.dev_metrics->macro_f1},
                             {"accuracy", ckpt.dev_metrics->accuracy},
                             {"mae", ckpt.dev_metrics->mae},
                             {"rating_accuracy", ckpt.dev_metrics->rating_accuracy}};
  }
  nlohmann::ordered_json shapes = nlohmann::ordered_json::array();
  for (const auto& t : tensors) {
    shapes.push_back({{"name", t.name}, {"rows", t.tensor->rows()}, {"cols", t.tensor->cols()}});
  }
  header["tensors"] = shapes;
  if (ckpt.optimizer) {
    header["optimizer"] = {{"type", "adam"},
                           {"steps", ckpt.optimizer->steps()},
                           {"beta1", ckpt.optimizer->config().beta1},
                           {"beta2", ckpt.optimizer->config().beta2},
                           {"epsilon", ckpt.optimizer->config().epsilon}};
  }
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp);
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t size = text.size();
    out.write(reinterpret_cast<const char*>(&size), sizeof(size));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : tensors) write_matrix(out, *t.tensor);
    if (ckpt.optimizer) {
      for (const auto& m : ckpt.optimizer->first_moments()) write_matrix(out, m);
      for (const auto& v : ckpt.optimizer->second_moments()) write_matrix(out, v);
    }
    if (!out) throw Error(ErrorKind::Io, "write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::BadCheckpoint, path + " is not a checkpoint");
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kCheckpointVersion) {
    throw Error(ErrorKind::BadCheckpoint, "unsupported checkpoint version " + std::to_string(version));
  }
  std::uint64_t size = 0;
  in.read(reinterpret_cast<char*>(&size), sizeof(size));
  if (!in || size > (1ull << 32)) throw Error(ErrorKind::BadCheckpoint, "bad header size");
  std::string text(size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(size));
  if (!in) throw Error(ErrorKind::BadCheckpoint, "truncated header");

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    auto& model = ckpt.model;
    model.config = encoder_config_from_json(header.at("encoder_config"));
    model.config.validate();
    model.vocab = Vocabulary(header.at("vocabulary").get<std::vector<std::string>>());
    if (model.vocab.size() != model.config.vocab_size) {
      throw Error(ErrorKind::BadCheckpoint, "vocabulary size disagrees with encoder config");
    }
    const auto& tax = header.at("taxonomy");
    model.aspect_names = tax.at("names").get<std::vector<std::string>>();
    model.taxonomy.count = tax.at("count").get<int>();
    model.taxonomy.names_hash = std::stoull(tax.at("names_hash").get<std::string>(), nullptr, 16);
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.step = header.at("step").get<std::int64_t>();
    ckpt.config_fingerprint = header.at("config_fingerprint").get<std::string>();
    if (header.contains("dev_metrics")) {
      const auto& m = header["dev_metrics"];
      ckpt.dev_metrics = EvalSnapshot{m.at("macro_f1").get<double>(), m.at("accuracy").get<double>(),
                                      m.at("mae").get<double>(),
                                      m.at("rating_accuracy").get<double>()};
    }
    model.params = ModelParameters::zeros(model.config, model.taxonomy.count);
    auto tensors = model.params.tensors();
    const auto& shapes = header.at("tensors");
    if (shapes.size() != tensors.size()) {
      throw Error(ErrorKind::BadCheckpoint, "tensor count mismatch");
    }
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      if (shapes[k].at("name").get<std::string>() != tensors[k].name ||
          shapes[k].at("rows").get<Eigen::Index>() != tensors[k].tensor->rows() ||
          shapes[k].at("cols").get<Eigen::Index>() != tensors[k].tensor->cols()) {
        throw Error(ErrorKind::BadCheckpoint, "unexpected tensor " + tensors[k].name);
      }
      read_matrix(in, *tensors[k].tensor);
    }
    if (header.contains("optimizer")) {
      const auto& o = header["optimizer"];
      AdamConfig ac{o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                    o.at("epsilon").get<double>()};
      std::vector<ConstTensorRef> shapes_ref;
      for (const auto& t : tensors) shapes_ref.push_back({t.name, t.tensor});
      Adam adam(ac, shapes_ref);
      adam.set_steps(o.at("steps").get<std::int64_t>());
      for (auto& m : adam.first_moments()) read_matrix(in, m);
      for (auto& v : adam.second_moments()) read_matrix(in, v);
      ckpt.optimizer = std::move(adam);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadCheckpoint, std::string("header: ") + e.what());
  }
  return ckpt;
}

// ---- training -----------------------------------------------------------------

EvalSnapshot evaluate_snapshot(std::span<const JointPrediction> predictions,
                               const Dataset& gold) {
  const AcsaMetrics acsa = evaluate_acsa(predictions, gold);
  const RpMetrics rp = evaluate_rp(predictions, gold);
  return {acsa.macro_f1, acsa.accuracy, rp.mae, rp.accuracy};
}

std::vector<JointPrediction> predict(const Dataset& dataset, const JointModel& model, int max_len,
                                     bool trace, Execution execution) {
  check_taxonomy(model, dataset);
  if (dataset.empty()) return {};
  const auto examples = prepare_examples(dataset, model.tokenizer(),
                                         std::min(max_len, model.config.max_len), execution);
  return predict_examples(model.config, model.params, examples, trace, execution);
}

TrainResult train(const Dataset& train_set, const Dataset& dev_set, const TrainConfig& config,
                  JointModel model, const TrainHooks& hooks) {
  config.validate();
  check_taxonomy(model, train_set);
  check_taxonomy(model, dev_set);
  if (train_set.split() == Split::Test || dev_set.split() == Split::Test) {
    throw Error(ErrorKind::SplitViolation, "training must not read the test split");
  }
  if (train_set.empty()) throw Error(ErrorKind::EmptyDataset, "training set is empty");

  const int max_len = std::min(config.max_len, model.config.max_len);
  const Tokenizer tokenizer = model.tokenizer();
  const auto train_examples = prepare_examples(train_set, tokenizer, max_len, config.execution);
  const auto dev_examples = prepare_examples(dev_set, tokenizer, max_len, config.execution);
  for (const auto& ex : train_examples) {
    if (std::count(ex.mask.begin(), ex.mask.end(), 1) == 0) {
      throw Error(ErrorKind::NoMentionedAspect, "training review " + ex.id + " has K = 0");
    }
  }

  if (!config.checkpoint_dir.empty()) std::filesystem::create_directories(config.checkpoint_dir);

  ModelParameters& params = model.params;
  ModelParameters grads = ModelParameters::zeros(model.config, params.heads.aspects);
  const auto param_refs = params.tensors();
  const auto grad_refs = std::as_const(grads).tensors();
  Adam adam(config.adam, std::as_const(params).tensors());
  BatchKernel kernel(model.config, params.heads.aspects);
  const BatchOptions options{config.loss_weights, config.freeze_encoder, config.execution};

  Rng rng(config.seed);
  std::vector<std::size_t> order(train_examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::string fingerprint = config.fingerprint();

  TrainResult result;
  std::int64_t step = 0;
  bool stop = false;
  for (int epoch = 1; epoch <= config.epochs && !stop; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      if (config.max_steps > 0 && step >= config.max_steps) {
        stop = true;
        break;
      }
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const TrainingExample*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_examples[order[i]]);

      grads.set_zero();
      const BatchOutput out = kernel.run(batch, params, options, &grads);
      ++step;
      if (!std::isfinite(out.loss.total)) {
        throw Error(ErrorKind::NonFiniteLoss,
                    "step " + std::to_string(step) + ", epoch " + std::to_string(epoch) +
                        ", batch starting at review " + batch.front()->id);
      }
      if (config.clip_norm > 0.0) {
        const double norm = global_norm(grads);
        if (norm > config.clip_norm) {
          for (const auto& t : grads.tensors()) *t.tensor *= config.clip_norm / norm;
        }
      }
      const StepRecord record{step, epoch, out.loss};
      if (hooks.on_step) hooks.on_step(record, grads);
      double lr = config.learning_rate;
      if (config.warmup_steps > 0 && step < config.warmup_steps) {
        lr *= static_cast<double>(step) / config.warmup_steps;
      }
      adam.step(param_refs, grad_refs, lr);
      result.steps.push_back(record);
      if (hooks.log) {
        nlohmann::ordered_json j{{"type", "step"},
                                 {"step", step},
                                 {"epoch", epoch},
                                 {"loss_acsa", out.loss.acsa},
                                 {"loss_rp", out.loss.rp},
                                 {"loss_total", out.loss.total}};
        *hooks.log << j.dump() << '\n';
      }
    }

    Checkpoint ckpt;
    ckpt.epoch = epoch;
    ckpt.step = step;
    ckpt.config_fingerprint = fingerprint;
    if (!dev_examples.empty()) {
      const auto preds = predict_examples(model.config, params, dev_examples, false, config.execution);
      ckpt.dev_metrics = evaluate_snapshot(preds, dev_set);
    }
    ckpt.model = model;
    ckpt.optimizer = adam;
    if (hooks.log) {
      nlohmann::ordered_json j{{"type", "epoch"}, {"epoch", epoch}, {"step", step}};
      if (ckpt.dev_metrics) {
        j["dev_macro_f1"] = ckpt.dev_metrics->macro_f1;
        j["dev_accuracy"] = ckpt.dev_metrics->accuracy;
        j["dev_mae"] = ckpt.dev_metrics->mae;
        j["dev_rating_accuracy"] = ckpt.dev_metrics->rating_accuracy;
      }
      *hooks.log << j.dump() << '\n';
    }
    if (!config.checkpoint_dir.empty()) {
      save_checkpoint(ckpt, (std::filesystem::path(config.checkpoint_dir) /
                             ("epoch-" + std::to_string(epoch) + ".ckpt"))
                                .string());
    }
    result.history.push_back(std::move(ckpt));
  }

  for (std::size_t i = 0; i < result.history.size(); ++i) {
    const auto& m = result.history[i].dev_metrics;
    const auto& best_f1 = result.history[result.best_macro_f1].dev_metrics;
    const auto& best_mae = result.history[result.best_mae].dev_metrics;
    if (m && best_f1 && m->macro_f1 > best_f1->macro_f1) result.best_macro_f1 = i;
    if (m && best_mae && m->mae < best_mae->mae) result.best_mae = i;
  }
  result.final_index = result.history.empty() ? 0 : result.history.size() - 1;
  return result;
}

}  // namespace asap
