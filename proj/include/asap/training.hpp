#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "asap/adam.hpp"
#include "asap/corpus.hpp"
#include "asap/evaluation.hpp"
#include "asap/kernels.hpp"
#include "asap/tokenizer.hpp"

namespace asap {

// Everything needed to run inference: encoder shape, vocabulary, the
// taxonomy the heads were built for, and the parameters.
struct JointModel {
  EncoderConfig config;
  Vocabulary vocab;
  std::vector<std::string> aspect_names;
  TaxonomyFingerprint taxonomy;
  ModelParameters params;

  // Builds the vocabulary from the training texts and initializes weights
  // from config.init_seed. config.vocab_size is overwritten.
  static JointModel create(const Dataset& train, EncoderConfig config, int min_count = 1);

  Tokenizer tokenizer() const { return Tokenizer(vocab); }
};

struct TrainConfig {
  int batch_size = 16;
  int epochs = 3;
  double learning_rate = 1e-3;
  AdamConfig adam;
  int max_len = 512;
  std::uint64_t seed = 7;
  LossWeights loss_weights;
  std::string checkpoint_dir;  // empty: keep checkpoints in memory only
  int warmup_steps = 0;        // linear warmup, off by default
  double clip_norm = 0.0;      // global-norm clipping, off when <= 0
  bool freeze_encoder = false;
  std::int64_t max_steps = 0;  // 0: no cap
  Execution execution = Execution::Parallel;

  void validate() const;
  // Stable key=value rendering of every field that affects training.
  std::string describe() const;
  std::string fingerprint() const;
};

struct EvalSnapshot {
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  double mae = 0.0;
  double rating_accuracy = 0.0;

  bool operator==(const EvalSnapshot&) const = default;
};

struct Checkpoint {
  JointModel model;
  std::optional<Adam> optimizer;
  int epoch = 0;
  std::int64_t step = 0;
  std::optional<EvalSnapshot> dev_metrics;
  std::string config_fingerprint;
};

// Binary container, little-endian:
//   "ASAPCKPT" | u32 version | u64 header bytes | JSON header |
//   float64 tensor data (column-major, header order) | optional Adam moments.
// The header embeds the encoder config, vocabulary, taxonomy fingerprint and
// names, counters, dev metrics and config fingerprint.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct StepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  LossBreakdown loss;
};

struct TrainResult {
  std::vector<Checkpoint> history;  // one per epoch
  std::vector<StepRecord> steps;
  std::size_t best_macro_f1 = 0;
  std::size_t best_mae = 0;
  std::size_t final_index = 0;
};

struct TrainHooks {
  // Line-delimited JSON records: {"type":"step",...} and {"type":"epoch",...}.
  std::ostream* log = nullptr;
  // Called after the gradient of each step is computed, before the update.
  std::function<void(const StepRecord&, const ModelParameters& grads)> on_step;
};

// Throws TaxonomyMismatch, SplitViolation (a test split given to training),
// NonFiniteLoss (with the failing step/batch), NoMentionedAspect.
TrainResult train(const Dataset& train_set, const Dataset& dev_set, const TrainConfig& config,
                  JointModel model, const TrainHooks& hooks = {});

EvalSnapshot evaluate_snapshot(std::span<const JointPrediction> predictions,
                               const Dataset& gold);

// Throws TaxonomyMismatch when the checkpoint was built for another taxonomy.
std::vector<JointPrediction> predict(const Dataset& dataset, const JointModel& model,
                                     int max_len = 512, bool trace = false,
                                     Execution execution = Execution::Parallel);

}  // namespace asap
