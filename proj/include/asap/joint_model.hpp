#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "asap/encoder.hpp"
#include "asap/taxonomy.hpp"
#include "asap/tensor.hpp"

namespace asap {

// Per-aspect attention-pooling classifiers plus the rating regressor.
// Aspect heads never share parameters.
struct HeadParameters {
  int aspects = 0;
  int hidden = 0;
  int classes = kNumPolarityClasses;

  std::vector<Matrix> attn_proj;   // W_a[i]: d x d
  std::vector<Matrix> attn_query;  // omega[i]: d x 1
  std::vector<Matrix> pool_proj;   // W_p[i]: d x d
  std::vector<Matrix> cls_weight;  // W_q[i]: C x d
  std::vector<Matrix> cls_bias;    // b_q[i]: C x 1
  Matrix rating_proj;              // W_r: d x d
  Matrix rating_bias;              // b_r: d x 1
  Matrix rating_readout;           // beta: d x 1

  static HeadParameters zeros(int aspects, int hidden);
  static HeadParameters initialize(int aspects, int hidden, std::uint64_t seed);

  std::vector<TensorRef> tensors();
  std::vector<ConstTensorRef> tensors() const;
  // Names of the tensors belonging to the rating regressor.
  static bool is_rating_tensor(const std::string& name);
};

struct AttentionResult {
  Vector alpha;  // Z, zero at padding, sums to 1
  Vector r;      // d
  std::optional<Matrix> projected;  // tanh(W_a H), kept only when tracing
};

struct JointPrediction {
  Matrix class_probs;  // N x C
  double rating = 0.0;
  std::vector<AttentionResult> attention;  // N entries when traced, else empty

  int predicted_class(int aspect) const;
};

struct LossWeights {
  double acsa = 1.0;
  double rp = 1.0;
};

struct LossBreakdown {
  double acsa = 0.0;
  double rp = 0.0;
  double total = 0.0;  // weights.acsa * acsa + weights.rp * rp
};

AttentionResult attention_pool(const EncoderOutput& enc, int aspect,
                               const HeadParameters& params, bool trace = false);

// softmax(W_q[i] r + b_q[i]).
Vector classify_aspect(const Vector& r, int aspect, const HeadParameters& params);

// (1/K) sum_i mask[i] * -log class_probs(i, class(labels[i])). Rows with
// mask 0 are never read, so their labels may be anything (or absent).
// Throws NoMentionedAspect when K = 0.
double acsa_loss(const Matrix& class_probs, std::span<const std::optional<Polarity>> labels,
                 std::span<const std::uint8_t> mask);

// beta^T tanh(W_r pooled + b_r), unclamped.
double rating_head(const Vector& pooled, const HeadParameters& params);

double rp_loss(double predicted, int rating);

// Forward over all N aspects and the rating head.
JointPrediction predict_joint(const EncoderOutput& enc, const HeadParameters& params,
                              bool trace = false);

struct ReviewTarget {
  int rating = 0;
  std::span<const std::optional<Polarity>> labels;
  std::span<const std::uint8_t> mask;
};

// Forward + loss for one review. When `head_grads` is non-null, accumulates
// `grad_scale` * dLoss/dParams into it and returns dLoss/dHidden (scaled) in
// `d_hidden`. Only mentioned aspects are visited in the backward pass; a loss
// branch with weight 0 is skipped entirely.
LossBreakdown joint_review_loss(const EncoderOutput& enc, const HeadParameters& params,
                                const ReviewTarget& target, const LossWeights& weights,
                                JointPrediction* prediction, double grad_scale = 1.0,
                                HeadParameters* head_grads = nullptr,
                                Matrix* d_hidden = nullptr);

}  // namespace asap
