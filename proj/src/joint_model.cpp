#include "asap/joint_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "asap/error.hpp"
#include "asap/rng.hpp"

namespace asap {

namespace {

void check_aspect(int aspect, const HeadParameters& params) {
  if (aspect < 0 || aspect >= params.aspects) {
    throw Error(ErrorKind::IndexOutOfRange, "aspect index " + std::to_string(aspect));
  }
}

// Masked entries come out exactly 0 rather than a denormal from exp().
void masked_softmax_inplace(Vector& v, const std::vector<std::uint8_t>& valid) {
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index z = 0; z < v.size(); ++z) {
    if (valid[static_cast<std::size_t>(z)]) m = std::max(m, v(z));
  }
  double sum = 0.0;
  for (Eigen::Index z = 0; z < v.size(); ++z) {
    v(z) = valid[static_cast<std::size_t>(z)] ? std::exp(v(z) - m) : 0.0;
    sum += v(z);
  }
  v /= sum;
}

void softmax_inplace(Vector& v) {
  const double m = v.maxCoeff();
  v = (v.array() - m).exp();
  v /= v.sum();
}

struct AspectActivations {
  Matrix projected;  // tanh(W_a H)
  Vector alpha;
  Vector pooled;     // H alpha
  Vector r;
  Vector probs;
};

void aspect_forward(const EncoderOutput& enc, int aspect, const HeadParameters& params,
                    AspectActivations& a) {
  const auto i = static_cast<std::size_t>(aspect);
  a.projected = (params.attn_proj[i] * enc.hidden).array().tanh();
  a.alpha = (params.attn_query[i].transpose() * a.projected).transpose();
  masked_softmax_inplace(a.alpha, enc.valid);
  a.pooled = enc.hidden * a.alpha;
  a.r = (params.pool_proj[i] * a.pooled).array().tanh();
  a.probs = params.cls_weight[i] * a.r + params.cls_bias[i].col(0);
  softmax_inplace(a.probs);
}

void check_encoder_output(const EncoderOutput& enc, const HeadParameters& params) {
  if (enc.hidden_size() != params.hidden ||
      enc.valid.size() != static_cast<std::size_t>(enc.length()) || enc.length() < 1 ||
      enc.valid[0] == 0) {
    throw Error(ErrorKind::ShapeMismatch, "encoder output does not match head parameters");
  }
}

}  // namespace

HeadParameters HeadParameters::zeros(int aspects, int hidden) {
  if (aspects <= 0 || hidden <= 0) {
    throw Error(ErrorKind::InvalidArgument, "head sizes must be positive");
  }
  HeadParameters p;
  p.aspects = aspects;
  p.hidden = hidden;
  const auto n = static_cast<std::size_t>(aspects);
  p.attn_proj.assign(n, Matrix::Zero(hidden, hidden));
  p.attn_query.assign(n, Matrix::Zero(hidden, 1));
  p.pool_proj.assign(n, Matrix::Zero(hidden, hidden));
  p.cls_weight.assign(n, Matrix::Zero(p.classes, hidden));
  p.cls_bias.assign(n, Matrix::Zero(p.classes, 1));
  p.rating_proj = Matrix::Zero(hidden, hidden);
  p.rating_bias = Matrix::Zero(hidden, 1);
  p.rating_readout = Matrix::Zero(hidden, 1);
  return p;
}

HeadParameters HeadParameters::initialize(int aspects, int hidden, std::uint64_t seed) {
  HeadParameters p = zeros(aspects, hidden);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto fill = [&](Matrix& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.normal() * scale;
  };
  for (int i = 0; i < aspects; ++i) {
    const auto k = static_cast<std::size_t>(i);
    fill(p.attn_proj[k]);
    fill(p.attn_query[k]);
    fill(p.pool_proj[k]);
    fill(p.cls_weight[k]);
  }
  fill(p.rating_proj);
  fill(p.rating_readout);
  return p;
}

std::vector<TensorRef> HeadParameters::tensors() {
  std::vector<TensorRef> out;
  for (int i = 0; i < aspects; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const std::string p = "head.aspect" + std::to_string(i) + ".";
    out.push_back({p + "attn_proj", &attn_proj[k]});
    out.push_back({p + "attn_query", &attn_query[k]});
    out.push_back({p + "pool_proj", &pool_proj[k]});
    out.push_back({p + "cls_weight", &cls_weight[k]});
    out.push_back({p + "cls_bias", &cls_bias[k]});
  }
  out.push_back({"head.rating_proj", &rating_proj});
  out.push_back({"head.rating_bias", &rating_bias});
  out.push_back({"head.rating_readout", &rating_readout});
  return out;
}

std::vector<ConstTensorRef> HeadParameters::tensors() const {
  std::vector<ConstTensorRef> out;
  for (auto& t : const_cast<HeadParameters*>(this)->tensors()) out.push_back({t.name, t.tensor});
  return out;
}

bool HeadParameters::is_rating_tensor(const std::string& name) {
  return name.rfind("head.rating_", 0) == 0;
}

int JointPrediction::predicted_class(int aspect) const {
  Eigen::Index best = 0;
  class_probs.row(aspect).maxCoeff(&best);
  return static_cast<int>(best);
}

AttentionResult attention_pool(const EncoderOutput& enc, int aspect,
                               const HeadParameters& params, bool trace) {
  check_aspect(aspect, params);
  check_encoder_output(enc, params);
  AspectActivations a;
  aspect_forward(enc, aspect, params, a);
  AttentionResult result{std::move(a.alpha), std::move(a.r), std::nullopt};
  if (trace) result.projected = std::move(a.projected);
  return result;
}

Vector classify_aspect(const Vector& r, int aspect, const HeadParameters& params) {
  check_aspect(aspect, params);
  const auto i = static_cast<std::size_t>(aspect);
  Vector logits = params.cls_weight[i] * r + params.cls_bias[i].col(0);
  softmax_inplace(logits);
  return logits;
}

double acsa_loss(const Matrix& class_probs, std::span<const std::optional<Polarity>> labels,
                 std::span<const std::uint8_t> mask) {
  if (labels.size() != mask.size() || static_cast<Eigen::Index>(mask.size()) != class_probs.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "labels, mask and class_probs disagree in length");
  }
  int mentioned = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    if (!labels[i]) {
      throw Error(ErrorKind::InvalidArgument, "mentioned aspect without a label");
    }
    ++mentioned;
    sum -= std::log(class_probs(static_cast<Eigen::Index>(i), polarity_class(*labels[i])));
  }
  if (mentioned == 0) throw Error(ErrorKind::NoMentionedAspect, "K = 0");
  return sum / mentioned;
}

double rating_head(const Vector& pooled, const HeadParameters& params) {
  const Vector t = (params.rating_proj * pooled + params.rating_bias.col(0)).array().tanh();
  return params.rating_readout.col(0).dot(t);
}

double rp_loss(double predicted, int rating) {
  return std::fabs(static_cast<double>(rating) - predicted);
}

JointPrediction predict_joint(const EncoderOutput& enc, const HeadParameters& params, bool trace) {
  check_encoder_output(enc, params);
  JointPrediction pred;
  pred.class_probs.resize(params.aspects, params.classes);
  if (trace) pred.attention.reserve(static_cast<std::size_t>(params.aspects));
  AspectActivations a;
  for (int i = 0; i < params.aspects; ++i) {
    aspect_forward(enc, i, params, a);
    pred.class_probs.row(i) = a.probs.transpose();
    if (trace) pred.attention.push_back({a.alpha, a.r, a.projected});
  }
  pred.rating = rating_head(enc.pooled, params);
  return pred;
}

LossBreakdown joint_review_loss(const EncoderOutput& enc, const HeadParameters& params,
                                const ReviewTarget& target, const LossWeights& weights,
                                JointPrediction* prediction, double grad_scale,
                                HeadParameters* head_grads, Matrix* d_hidden) {
  check_encoder_output(enc, params);
  const auto n = static_cast<std::size_t>(params.aspects);
  if (target.labels.size() != n || target.mask.size() != n) {
    throw Error(ErrorKind::ShapeMismatch, "target width does not match head parameters");
  }
  int mentioned = 0;
  for (auto m : target.mask) mentioned += m ? 1 : 0;
  if (mentioned == 0) throw Error(ErrorKind::NoMentionedAspect, "K = 0");

  const bool backward = head_grads != nullptr;
  if (backward && d_hidden) d_hidden->setZero(enc.hidden.rows(), enc.hidden.cols());

  Matrix probs(params.aspects, params.classes);
  std::vector<AspectActivations> acts(n);
  for (int i = 0; i < params.aspects; ++i) {
    aspect_forward(enc, i, params, acts[static_cast<std::size_t>(i)]);
    probs.row(i) = acts[static_cast<std::size_t>(i)].probs.transpose();
  }

  LossBreakdown loss;
  loss.acsa = acsa_loss(probs, target.labels, target.mask);
  const double g_hat = rating_head(enc.pooled, params);
  loss.rp = rp_loss(g_hat, target.rating);
  loss.total = weights.acsa * loss.acsa + weights.rp * loss.rp;

  if (backward && weights.acsa != 0.0) {
    const double coef = weights.acsa * grad_scale / mentioned;
    for (std::size_t k = 0; k < n; ++k) {
      if (!target.mask[k]) continue;
      const auto& a = acts[k];
      Vector d_logits = a.probs * coef;
      d_logits(polarity_class(*target.labels[k])) -= coef;

      head_grads->cls_weight[k].noalias() += d_logits * a.r.transpose();
      head_grads->cls_bias[k].col(0) += d_logits;
      const Vector d_r = params.cls_weight[k].transpose() * d_logits;
      const Vector d_r_pre = d_r.array() * (1.0 - a.r.array().square());
      head_grads->pool_proj[k].noalias() += d_r_pre * a.pooled.transpose();
      const Vector d_pooled = params.pool_proj[k].transpose() * d_r_pre;

      // pooled = H alpha
      const Vector d_alpha = enc.hidden.transpose() * d_pooled;
      const Vector d_score = a.alpha.array() * (d_alpha.array() - a.alpha.dot(d_alpha));
      head_grads->attn_query[k].col(0) += a.projected * d_score;
      const Matrix d_proj_pre = (params.attn_query[k].col(0) * d_score.transpose()).array() *
                                (1.0 - a.projected.array().square());
      head_grads->attn_proj[k].noalias() += d_proj_pre * enc.hidden.transpose();
      if (d_hidden) {
        d_hidden->noalias() += d_pooled * a.alpha.transpose();
        d_hidden->noalias() += params.attn_proj[k].transpose() * d_proj_pre;
      }
    }
  }

  if (backward && weights.rp != 0.0) {
    const double diff = g_hat - target.rating;
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    const double d_g = weights.rp * grad_scale * sign;
    const Vector t = (params.rating_proj * enc.pooled + params.rating_bias.col(0)).array().tanh();
    head_grads->rating_readout.col(0) += d_g * t;
    const Vector d_pre = (d_g * params.rating_readout.col(0)).array() * (1.0 - t.array().square());
    head_grads->rating_proj.noalias() += d_pre * enc.pooled.transpose();
    head_grads->rating_bias.col(0) += d_pre;
    if (d_hidden) d_hidden->col(0) += params.rating_proj.transpose() * d_pre;
  }

  if (prediction) {
    prediction->class_probs = std::move(probs);
    prediction->rating = g_hat;
    prediction->attention.clear();
  }
  return loss;
}

}  // namespace asap
