#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "asap/tensor.hpp"
#include "asap/tokenizer.hpp"

namespace asap {

struct EncoderConfig {
  int hidden = 64;
  int layers = 2;
  int heads = 4;
  int ffn_hidden = 256;
  int vocab_size = 0;
  int max_len = 512;
  std::uint64_t init_seed = 0;

  int head_dim() const { return hidden / heads; }
  // Throws Error(InvalidArgument) unless hidden % heads == 0, max_len >= 2,
  // and all sizes are positive.
  void validate() const;

  bool operator==(const EncoderConfig&) const = default;
};

struct EncoderLayerWeights {
  Matrix ln1_gain, ln1_bias;      // d x 1
  Matrix qkv_weight, qkv_bias;    // 3d x d, 3d x 1
  Matrix out_weight, out_bias;    // d x d, d x 1
  Matrix ln2_gain, ln2_bias;      // d x 1
  Matrix fc1_weight, fc1_bias;    // f x d, f x 1
  Matrix fc2_weight, fc2_bias;    // d x f, d x 1
};

struct EncoderWeights {
  Matrix token_embedding;     // d x vocab
  Matrix position_embedding;  // d x max_len
  std::vector<EncoderLayerWeights> layers;
  Matrix final_ln_gain, final_ln_bias;

  static EncoderWeights zeros(const EncoderConfig& config);
  // Seeded from config.init_seed.
  static EncoderWeights initialize(const EncoderConfig& config);

  std::vector<TensorRef> tensors();
  std::vector<ConstTensorRef> tensors() const;
};

// Column z of `hidden` is the contextual embedding of token z. `pooled` is
// column 0, the start-of-review token.
struct EncoderOutput {
  Matrix hidden;  // d x Z
  Vector pooled;  // d
  std::vector<std::uint8_t> valid;

  int length() const { return static_cast<int>(hidden.cols()); }
  int hidden_size() const { return static_cast<int>(hidden.rows()); }
};

// Adapter contract for any contextual encoder (the built-in tiny transformer
// or a binding to a pretrained one). Implementations must:
//   - return hidden of shape hidden_size() x seq.length(), all finite;
//   - set pooled to the output at position 0;
//   - be safe to call concurrently on distinct inputs.
class ContextualEncoder {
 public:
  virtual ~ContextualEncoder() = default;
  virtual int hidden_size() const = 0;
  virtual int max_length() const = 0;
  virtual EncoderOutput encode(const TokenSequence& seq) const = 0;
};

// Activations retained by the forward pass for backpropagation.
struct EncoderTrace {
  struct Layer {
    Matrix ln1_xhat, ln1_out;
    Vector ln1_rstd;
    Matrix qkv;
    std::vector<Matrix> probs;  // per head, Z x Z (query rows)
    Matrix attn_concat;
    Matrix ln2_xhat, ln2_out;
    Vector ln2_rstd;
    Matrix fc1_pre, fc1_act;
  };
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> valid;
  std::vector<Layer> layers;
  Matrix final_xhat;
  Vector final_rstd;
};

// Key positions with valid[z] == 0 are excluded from self-attention, so the
// outputs at valid positions do not depend on padding. valid[0] must be 1.
// Throws OutOfVocab for ids outside [0, vocab_size) and ShapeMismatch for
// length/mask errors.
EncoderOutput encoder_forward(const EncoderConfig& config, const EncoderWeights& weights,
                              std::span<const std::int32_t> ids,
                              std::span<const std::uint8_t> valid,
                              EncoderTrace* trace = nullptr);

// Accumulates (+=) gradients of a scalar loss into `grads`, given dLoss/dHidden.
void encoder_backward(const EncoderConfig& config, const EncoderWeights& weights,
                      const EncoderTrace& trace, const Matrix& d_hidden,
                      EncoderWeights& grads);

// One output per batch row, each d x width with padding columns included.
std::vector<EncoderOutput> encode_batch(const EncoderConfig& config,
                                        const EncoderWeights& weights,
                                        const PaddedBatch& batch,
                                        Execution execution = Execution::Parallel);

class TinyEncoder final : public ContextualEncoder {
 public:
  TinyEncoder(EncoderConfig config, EncoderWeights weights);

  int hidden_size() const override { return config_.hidden; }
  int max_length() const override { return config_.max_len; }
  EncoderOutput encode(const TokenSequence& seq) const override;

  const EncoderConfig& config() const { return config_; }
  const EncoderWeights& weights() const { return weights_; }

 private:
  EncoderConfig config_;
  EncoderWeights weights_;
};

}  // namespace asap
