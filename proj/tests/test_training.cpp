#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "asap/adam.hpp"
#include "asap/error.hpp"
#include "asap/training.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace asap;
namespace fs = std::filesystem;

namespace {

EncoderConfig small_encoder() {
  EncoderConfig c;
  c.hidden = 16;
  c.layers = 1;
  c.heads = 2;
  c.ffn_hidden = 32;
  c.max_len = 32;
  c.init_seed = 4;
  return c;
}

TrainConfig short_run() {
  TrainConfig t;
  t.batch_size = 8;
  t.epochs = 2;
  t.learning_rate = 3e-3;
  t.seed = 5;
  return t;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), Error);
  t = {};
  t.epochs = 0;
  CHECK_THROWS_AS(t.validate(), Error);
  t = {};
  t.learning_rate = 0.0;
  CHECK_THROWS_AS(t.validate(), Error);
  t = {};
  t.adam.beta2 = 1.0;
  CHECK_THROWS_AS(t.validate(), Error);
}

TEST_CASE("config fingerprint tracks every training field") {
  TrainConfig a;
  TrainConfig b;
  CHECK(a.fingerprint() == b.fingerprint());
  b.adam.epsilon = 1e-7;
  CHECK(a.fingerprint() != b.fingerprint());
  b = a;
  b.loss_weights.rp = 0.0;
  CHECK(a.fingerprint() != b.fingerprint());
}

TEST_CASE("adam matches the scalar update rule") {
  Matrix p(3, 1);
  p << 1.0, -2.0, 0.5;
  std::vector<double> ref{1.0, -2.0, 0.5};
  oracle::AdamState state;
  Matrix g(3, 1);
  const std::vector<TensorRef> params{{"p", &p}};
  const std::vector<ConstTensorRef> grads{{"p", &g}};
  Adam adam(AdamConfig{0.8, 0.99, 1e-6}, grads);
  for (int step = 0; step < 20; ++step) {
    for (int i = 0; i < 3; ++i) g(i, 0) = std::sin(3.0 * step + i) + p(i, 0);
    std::vector<double> gv{g(0, 0), g(1, 0), g(2, 0)};
    adam.step(params, grads, 0.01);
    oracle::adam_step(ref, gv, state, 0.01, 0.8, 0.99, 1e-6);
  }
  for (int i = 0; i < 3; ++i) CHECK(std::fabs(p(i, 0) - ref[static_cast<std::size_t>(i)]) < 1e-12);
  CHECK(adam.steps() == 20);
}

TEST_CASE("adam leaves never-updated tensors alone") {
  Matrix p = Matrix::Constant(2, 2, 0.5);
  Matrix g = Matrix::Zero(2, 2);
  const std::vector<TensorRef> params{{"p", &p}};
  const std::vector<ConstTensorRef> grads{{"p", &g}};
  Adam adam(AdamConfig{}, grads);
  for (int i = 0; i < 5; ++i) adam.step(params, grads, 0.1);
  CHECK(p == Matrix::Constant(2, 2, 0.5));
  CHECK_THROWS_AS(Adam(AdamConfig{1.0, 0.999, 1e-8}, grads), Error);
}

TEST_CASE("training is deterministic per seed and logs structured records") {
  const Dataset data = fixtures::synthetic_corpus(21, 24).with_split(Split::Train);
  const Dataset dev = fixtures::synthetic_corpus(22, 8).with_split(Split::Dev);
  const JointModel model = JointModel::create(data, small_encoder());
  std::ostringstream log_a, log_b;
  TrainHooks ha, hb;
  ha.log = &log_a;
  hb.log = &log_b;
  const TrainResult a = train(data, dev, short_run(), model, ha);
  const TrainResult b = train(data, dev, short_run(), model, hb);
  CHECK(log_a.str() == log_b.str());
  REQUIRE(a.steps.size() == 6);
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].loss.total == b.steps[i].loss.total);
    CHECK(std::isfinite(a.steps[i].loss.total));
  }
  REQUIRE(a.history.size() == 2);
  CHECK(a.history[1].dev_metrics == b.history[1].dev_metrics);

  std::istringstream lines(log_a.str());
  std::string line;
  int steps = 0, epochs = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.at("type") == "step") {
      ++steps;
      CHECK(j.contains("loss_acsa"));
      CHECK(j.contains("loss_rp"));
      CHECK(j.contains("loss_total"));
    } else {
      ++epochs;
      CHECK(j.contains("dev_macro_f1"));
      CHECK(j.contains("dev_mae"));
    }
  }
  CHECK(steps == 6);
  CHECK(epochs == 2);

  TrainConfig other = short_run();
  other.seed = 6;
  const TrainResult c = train(data, dev, other, model);
  CHECK(c.steps.back().loss.total != a.steps.back().loss.total);
}

TEST_CASE("serial and parallel training agree") {
  const Dataset data = fixtures::synthetic_corpus(23, 16).with_split(Split::Train);
  const Dataset dev(data.taxonomy(), {}, Split::Dev);
  const JointModel model = JointModel::create(data, small_encoder());
  TrainConfig serial = short_run();
  serial.execution = Execution::Serial;
  TrainConfig parallel = short_run();
  parallel.execution = Execution::Parallel;
  const TrainResult a = train(data, dev, serial, model);
  const TrainResult b = train(data, dev, parallel, model);
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].loss.total == doctest::Approx(b.steps[i].loss.total).epsilon(1e-9));
  }
}

TEST_CASE("selection rules pick best dev Macro-F1 and best dev MAE independently") {
  const Dataset data = fixtures::synthetic_corpus(24, 24).with_split(Split::Train);
  const Dataset dev = fixtures::synthetic_corpus(25, 12).with_split(Split::Dev);
  TrainConfig cfg = short_run();
  cfg.epochs = 4;
  const TrainResult r = train(data, dev, cfg, JointModel::create(data, small_encoder()));
  REQUIRE(r.history.size() == 4);
  CHECK(r.final_index == 3);
  for (const auto& h : r.history) {
    CHECK(h.dev_metrics->macro_f1 <= r.history[r.best_macro_f1].dev_metrics->macro_f1);
    CHECK(h.dev_metrics->mae >= r.history[r.best_mae].dev_metrics->mae);
  }
}

TEST_CASE("checkpoints round trip and reproduce the recorded dev metrics") {
  TempDir tmp("asap_ckpt_test");
  const Dataset data = fixtures::synthetic_corpus(26, 16).with_split(Split::Train);
  const Dataset dev = fixtures::synthetic_corpus(27, 8).with_split(Split::Dev);
  TrainConfig cfg = short_run();
  cfg.checkpoint_dir = (tmp.path / "ckpt").string();
  const TrainResult r = train(data, dev, cfg, JointModel::create(data, small_encoder()));
  REQUIRE(fs::exists(tmp.path / "ckpt" / "epoch-1.ckpt"));
  REQUIRE(fs::exists(tmp.path / "ckpt" / "epoch-2.ckpt"));

  const Checkpoint loaded = load_checkpoint((tmp.path / "ckpt" / "epoch-2.ckpt").string());
  CHECK(loaded.epoch == 2);
  CHECK(loaded.step == r.history[1].step);
  CHECK(loaded.config_fingerprint == cfg.fingerprint());
  CHECK(loaded.model.config == r.history[1].model.config);
  CHECK(loaded.model.vocab.pieces() == r.history[1].model.vocab.pieces());
  REQUIRE(loaded.optimizer.has_value());
  CHECK(loaded.optimizer->steps() == r.history[1].optimizer->steps());
  CHECK(loaded.optimizer->second_moments().back() == r.history[1].optimizer->second_moments().back());
  const auto a = loaded.model.params.tensors();
  const auto b = r.history[1].model.params.tensors();
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(*a[k].tensor == *b[k].tensor);

  const auto preds = predict(dev, loaded.model, cfg.max_len);
  CHECK(evaluate_snapshot(preds, dev) == *loaded.dev_metrics);
}

TEST_CASE("checkpoint loading rejects damaged files") {
  TempDir tmp("asap_ckpt_bad");
  const auto path = tmp.path / "bad.ckpt";
  std::ofstream(path, std::ios::binary) << "not a checkpoint";
  CHECK(kind_of([&] { load_checkpoint(path.string()); }) == ErrorKind::BadCheckpoint);

  const Dataset data = fixtures::synthetic_corpus(28, 8);
  Checkpoint ckpt;
  ckpt.model = JointModel::create(data, small_encoder());
  const auto good = tmp.path / "good.ckpt";
  save_checkpoint(ckpt, good.string());
  CHECK_NOTHROW(load_checkpoint(good.string()));
  const auto size = fs::file_size(good);
  fs::resize_file(good, size - 16);
  CHECK(kind_of([&] { load_checkpoint(good.string()); }) == ErrorKind::BadCheckpoint);
  CHECK(kind_of([&] { load_checkpoint((tmp.path / "none.ckpt").string()); }) == ErrorKind::Io);
}

TEST_CASE("training guards: taxonomy, test split, non-finite loss, K = 0") {
  const Dataset data = fixtures::synthetic_corpus(29, 8).with_split(Split::Train);
  const Dataset dev(data.taxonomy(), {}, Split::Dev);
  const JointModel model = JointModel::create(data, small_encoder());

  CHECK(kind_of([&] { train(data.with_split(Split::Test), dev, short_run(), model); }) ==
        ErrorKind::SplitViolation);
  CHECK(kind_of([&] { train(data, dev.with_split(Split::Test), short_run(), model); }) ==
        ErrorKind::SplitViolation);

  const AspectTaxonomy other({{0, "Food", "Taste", ""}, {1, "Food", "Portion", ""}});
  const Dataset foreign(other, {fixtures::review("z", "好", 3, {{0, Polarity::Positive}}, 2)});
  CHECK(kind_of([&] { train(foreign, Dataset(other, {}), short_run(), model); }) ==
        ErrorKind::TaxonomyMismatch);
  CHECK(kind_of([&] { predict(foreign, model); }) == ErrorKind::TaxonomyMismatch);

  JointModel broken = model;
  broken.params.heads.rating_readout(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    train(data, dev, short_run(), broken);
    FAIL("expected NonFiniteLoss");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFiniteLoss);
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }

  std::vector<Review> reviews = data.reviews();
  reviews[0].labels.assign(18, std::nullopt);
  const Dataset unlabeled(data.taxonomy(), reviews, Split::Train);
  CHECK(kind_of([&] { train(unlabeled, dev, short_run(), model); }) == ErrorKind::NoMentionedAspect);
}

TEST_CASE("frozen encoder is not updated; heads are") {
  const Dataset data = fixtures::synthetic_corpus(30, 8).with_split(Split::Train);
  const Dataset dev(data.taxonomy(), {}, Split::Dev);
  const JointModel model = JointModel::create(data, small_encoder());
  TrainConfig cfg = short_run();
  cfg.freeze_encoder = true;
  const TrainResult r = train(data, dev, cfg, model);
  const auto& after = r.history.back().model.params;
  const auto a = std::as_const(after).encoder.tensors();
  const auto b = model.params.encoder.tensors();
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(*a[k].tensor == *b[k].tensor);
  CHECK_FALSE(after.heads.rating_readout == model.params.heads.rating_readout);
}

TEST_CASE("max_steps, clipping and warmup") {
  const Dataset data = fixtures::synthetic_corpus(31, 16).with_split(Split::Train);
  const Dataset dev(data.taxonomy(), {}, Split::Dev);
  const JointModel model = JointModel::create(data, small_encoder());
  TrainConfig cfg = short_run();
  cfg.max_steps = 3;
  cfg.epochs = 5;
  CHECK(train(data, dev, cfg, model).steps.size() == 3);

  cfg = short_run();
  cfg.clip_norm = 1e-3;
  double worst = 0.0;
  TrainHooks hooks;
  hooks.on_step = [&](const StepRecord&, const ModelParameters& g) {
    double sq = 0.0;
    for (const auto& t : g.tensors()) sq += t.tensor->squaredNorm();
    worst = std::max(worst, std::sqrt(sq));
  };
  train(data, dev, cfg, model, hooks);
  CHECK(worst <= 1e-3 * (1 + 1e-12));

  cfg = short_run();
  cfg.warmup_steps = 2;
  cfg.max_steps = 1;
  TrainConfig plain = short_run();
  plain.max_steps = 1;
  const auto warm = train(data, dev, cfg, model).history.back().model.params.heads.rating_readout;
  const auto cold = train(data, dev, plain, model).history.back().model.params.heads.rating_readout;
  const Matrix start = model.params.heads.rating_readout;
  CHECK((warm - start).norm() < (cold - start).norm());
}

TEST_CASE("predict is pure and matches the loss-path forward") {
  const Dataset data = fixtures::synthetic_corpus(32, 6);
  const JointModel model = JointModel::create(data, small_encoder());
  CHECK(predict(Dataset(data.taxonomy(), {}), model).empty());
  const auto a = predict(data, model);
  const auto b = predict(data, model, 512, false, Execution::Serial);
  REQUIRE(a.size() == 6);
  const auto examples = prepare_examples(data, model.tokenizer(), model.config.max_len);
  const auto out = joint_forward_loss(model.config, model.params, examples);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].class_probs == b[i].class_probs);
    CHECK(a[i].rating == b[i].rating);
    CHECK(a[i].class_probs == out.predictions[i].class_probs);
    CHECK(a[i].rating == out.predictions[i].rating);
  }
}
