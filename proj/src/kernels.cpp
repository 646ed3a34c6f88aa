#include "asap/kernels.hpp"

#include <algorithm>
#include <exception>

#include "asap/error.hpp"

namespace asap {

namespace {

// Runs body(i) for i in [0, n) across OpenMP threads and rethrows the first
// exception on the calling thread.
template <class Body>
void parallel_for(int n, Body&& body) {
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
#pragma omp critical(asap_parallel_for)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::int32_t> unique_ids(const std::vector<std::int32_t>& ids) {
  std::vector<std::int32_t> out = ids;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Forward (+ backward when grads != nullptr) for one review.
LossBreakdown review_step(const EncoderConfig& config, const ModelParameters& params,
                          const TrainingExample& example, const BatchOptions& options,
                          double scale, JointPrediction& prediction, ModelParameters* grads) {
  const std::vector<std::uint8_t> valid(example.tokens.ids.size(), 1);
  EncoderTrace trace;
  const bool encoder_backward_needed = grads && !options.freeze_encoder;
  const EncoderOutput enc = encoder_forward(config, params.encoder, example.tokens.ids, valid,
                                            encoder_backward_needed ? &trace : nullptr);
  Matrix d_hidden;
  const LossBreakdown loss =
      joint_review_loss(enc, params.heads, example.target(), options.weights, &prediction, scale,
                        grads ? &grads->heads : nullptr,
                        encoder_backward_needed ? &d_hidden : nullptr);
  if (encoder_backward_needed) {
    encoder_backward(config, params.encoder, trace, d_hidden, grads->encoder);
  }
  return loss;
}

}  // namespace

ModelParameters ModelParameters::zeros(const EncoderConfig& config, int aspects) {
  return {EncoderWeights::zeros(config), HeadParameters::zeros(aspects, config.hidden)};
}

ModelParameters ModelParameters::initialize(const EncoderConfig& config, int aspects) {
  // Head initialization draws from a stream distinct from the encoder's.
  return {EncoderWeights::initialize(config),
          HeadParameters::initialize(aspects, config.hidden,
                                     config.init_seed ^ 0x9E3779B97F4A7C15ull)};
}

std::vector<TensorRef> ModelParameters::tensors() {
  auto out = encoder.tensors();
  auto head = heads.tensors();
  out.insert(out.end(), head.begin(), head.end());
  return out;
}

std::vector<ConstTensorRef> ModelParameters::tensors() const {
  auto out = encoder.tensors();
  auto head = heads.tensors();
  out.insert(out.end(), head.begin(), head.end());
  return out;
}

void ModelParameters::set_zero() {
  for (auto& t : tensors()) t.tensor->setZero();
}

std::vector<TrainingExample> prepare_examples(const Dataset& dataset, const Tokenizer& tokenizer,
                                              int max_len, Execution execution) {
  std::vector<TrainingExample> out(dataset.size());
  auto build = [&](int i) {
    const Review& r = dataset[static_cast<std::size_t>(i)];
    auto& ex = out[static_cast<std::size_t>(i)];
    ex.id = r.id;
    ex.tokens = tokenizer.tokenize(r.text, max_len);
    ex.rating = r.rating;
    ex.labels = r.labels;
    ex.mask = r.mask();
  };
  const int n = static_cast<int>(dataset.size());
  if (execution == Execution::Serial) {
    for (int i = 0; i < n; ++i) build(i);
  } else {
    parallel_for(n, build);
  }
  return out;
}

BatchKernel::BatchKernel(EncoderConfig config, int aspects)
    : config_(config), aspects_(aspects) {
  config_.validate();
}

BatchOutput BatchKernel::run(std::span<const TrainingExample* const> batch,
                             const ModelParameters& params, const BatchOptions& options,
                             ModelParameters* grads) {
  if (batch.empty()) return {};
  return options.execution == Execution::Serial ? run_serial(batch, params, options, grads)
                                                : run_parallel(batch, params, options, grads);
}

BatchOutput BatchKernel::run_serial(std::span<const TrainingExample* const> batch,
                                    const ModelParameters& params, const BatchOptions& options,
                                    ModelParameters* grads) {
  const double scale = 1.0 / static_cast<double>(batch.size());
  BatchOutput out;
  out.predictions.resize(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const LossBreakdown l =
        review_step(config_, params, *batch[b], options, scale, out.predictions[b], grads);
    out.loss.acsa += l.acsa;
    out.loss.rp += l.rp;
    out.loss.total += l.total;
  }
  out.loss.acsa *= scale;
  out.loss.rp *= scale;
  out.loss.total *= scale;
  return out;
}

BatchOutput BatchKernel::run_parallel(std::span<const TrainingExample* const> batch,
                                      const ModelParameters& params, const BatchOptions& options,
                                      ModelParameters* grads) {
  const std::size_t n = batch.size();
  const double scale = 1.0 / static_cast<double>(n);
  BatchOutput out;
  out.predictions.resize(n);
  std::vector<LossBreakdown> losses(n);

  if (grads) {
    while (slots_.size() < n) {
      slots_.push_back(ModelParameters::zeros(config_, aspects_));
      slot_tokens_.emplace_back();
    }
  }

  try {
    parallel_for(static_cast<int>(n), [&](int i) {
      const auto b = static_cast<std::size_t>(i);
      ModelParameters* slot = grads ? &slots_[b] : nullptr;
      losses[b] = review_step(config_, params, *batch[b], options, scale, out.predictions[b], slot);
      if (grads) slot_tokens_[b] = unique_ids(batch[b]->tokens.ids);
    });
  } catch (...) {
    // Slots may be partially written; drop them so the next call starts clean.
    slots_.clear();
    slot_tokens_.clear();
    throw;
  }

  if (grads) {
    // Ordered reduction; the token embedding only touches used columns.
    auto target = grads->tensors();
    std::vector<std::vector<TensorRef>> sources;
    sources.reserve(n);
    for (std::size_t b = 0; b < n; ++b) sources.push_back(slots_[b].tensors());
    const int tensor_count = static_cast<int>(target.size());
    parallel_for(tensor_count, [&](int t) {
      const auto k = static_cast<std::size_t>(t);
      if (target[k].tensor == &grads->encoder.token_embedding) {
        for (std::size_t b = 0; b < n; ++b) {
          Matrix& src = *sources[b][k].tensor;
          for (auto id : slot_tokens_[b]) {
            target[k].tensor->col(id) += src.col(id);
            src.col(id).setZero();
          }
        }
        return;
      }
      for (std::size_t b = 0; b < n; ++b) {
        *target[k].tensor += *sources[b][k].tensor;
        sources[b][k].tensor->setZero();
      }
    });
  }

  for (const auto& l : losses) {
    out.loss.acsa += l.acsa;
    out.loss.rp += l.rp;
    out.loss.total += l.total;
  }
  out.loss.acsa *= scale;
  out.loss.rp *= scale;
  out.loss.total *= scale;
  return out;
}

BatchOutput joint_forward_loss(const EncoderConfig& config, const ModelParameters& params,
                               std::span<const TrainingExample> batch, const BatchOptions& options,
                               ModelParameters* grads) {
  std::vector<const TrainingExample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& ex : batch) ptrs.push_back(&ex);
  BatchKernel kernel(config, params.heads.aspects);
  return kernel.run(ptrs, params, options, grads);
}

std::vector<JointPrediction> predict_examples(const EncoderConfig& config,
                                              const ModelParameters& params,
                                              std::span<const TrainingExample> examples,
                                              bool trace, Execution execution) {
  std::vector<JointPrediction> out(examples.size());
  auto run = [&](int i) {
    const auto& ex = examples[static_cast<std::size_t>(i)];
    const std::vector<std::uint8_t> valid(ex.tokens.ids.size(), 1);
    const EncoderOutput enc = encoder_forward(config, params.encoder, ex.tokens.ids, valid);
    out[static_cast<std::size_t>(i)] = predict_joint(enc, params.heads, trace);
  };
  const int n = static_cast<int>(examples.size());
  if (execution == Execution::Serial) {
    for (int i = 0; i < n; ++i) run(i);
  } else {
    parallel_for(n, run);
  }
  return out;
}

}  // namespace asap
