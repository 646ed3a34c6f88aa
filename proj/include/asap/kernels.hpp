#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asap/corpus.hpp"
#include "asap/encoder.hpp"
#include "asap/joint_model.hpp"
#include "asap/tokenizer.hpp"

namespace asap {

// Encoder weights and head parameters trained together.
struct ModelParameters {
  EncoderWeights encoder;
  HeadParameters heads;

  static ModelParameters zeros(const EncoderConfig& config, int aspects);
  static ModelParameters initialize(const EncoderConfig& config, int aspects);

  std::vector<TensorRef> tensors();
  std::vector<ConstTensorRef> tensors() const;
  void set_zero();
};

// A tokenized review ready for the model.
struct TrainingExample {
  std::string id;
  TokenSequence tokens;
  int rating = 0;
  std::vector<std::optional<Polarity>> labels;
  std::vector<std::uint8_t> mask;

  ReviewTarget target() const { return {rating, labels, mask}; }
};

std::vector<TrainingExample> prepare_examples(const Dataset& dataset, const Tokenizer& tokenizer,
                                              int max_len,
                                              Execution execution = Execution::Parallel);

struct BatchOptions {
  LossWeights weights;
  bool freeze_encoder = false;
  Execution execution = Execution::Parallel;
};

struct BatchOutput {
  LossBreakdown loss;  // means over the batch
  std::vector<JointPrediction> predictions;
};

// Joint loss over a batch (mean over reviews) and, when `grads` is non-null,
// its gradient accumulated (+=) into `grads`.
//
// Serial: reviews in order, gradients accumulated straight into `grads`.
// Parallel: each review writes into its own gradient slot, then slots are
// summed in review order. The parallel result does not depend on the number
// of threads; it matches the serial path up to summation order.
class BatchKernel {
 public:
  BatchKernel(EncoderConfig config, int aspects);

  BatchOutput run(std::span<const TrainingExample* const> batch, const ModelParameters& params,
                  const BatchOptions& options, ModelParameters* grads = nullptr);

  const EncoderConfig& config() const { return config_; }

 private:
  BatchOutput run_serial(std::span<const TrainingExample* const> batch,
                         const ModelParameters& params, const BatchOptions& options,
                         ModelParameters* grads);
  BatchOutput run_parallel(std::span<const TrainingExample* const> batch,
                           const ModelParameters& params, const BatchOptions& options,
                           ModelParameters* grads);

  EncoderConfig config_;
  int aspects_;
  std::vector<ModelParameters> slots_;
  std::vector<std::vector<std::int32_t>> slot_tokens_;
};

// Convenience wrapper over a temporary BatchKernel.
BatchOutput joint_forward_loss(const EncoderConfig& config, const ModelParameters& params,
                               std::span<const TrainingExample> batch,
                               const BatchOptions& options = {},
                               ModelParameters* grads = nullptr);

// Inference for every example; pure in `params`.
std::vector<JointPrediction> predict_examples(const EncoderConfig& config,
                                              const ModelParameters& params,
                                              std::span<const TrainingExample> examples,
                                              bool trace = false,
                                              Execution execution = Execution::Parallel);

}  // namespace asap
