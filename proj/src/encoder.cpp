#include "asap/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "asap/error.hpp"
#include "asap/rng.hpp"

namespace asap {

namespace {

constexpr double kLayerNormEps = 1e-5;
const double kGeluScale = std::sqrt(2.0 / std::numbers::pi);

void fill_normal(Matrix& m, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * stddev;
}

// Column-wise layer norm.
void layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix& xhat,
                Vector& rstd, Matrix& out) {
  const auto d = static_cast<double>(x.rows());
  xhat.resize(x.rows(), x.cols());
  rstd.resize(x.cols());
  for (Eigen::Index z = 0; z < x.cols(); ++z) {
    const double mean = x.col(z).sum() / d;
    const double var = (x.col(z).array() - mean).square().sum() / d;
    rstd(z) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.col(z) = (x.col(z).array() - mean) * rstd(z);
  }
  out = (xhat.array().colwise() * gain.col(0).array()).colwise() + bias.col(0).array();
}

// Returns dL/dx; accumulates gain/bias gradients.
Matrix layer_norm_backward(const Matrix& d_out, const Matrix& xhat, const Vector& rstd,
                           const Matrix& gain, Matrix& d_gain, Matrix& d_bias) {
  d_gain.col(0) += (d_out.array() * xhat.array()).rowwise().sum().matrix();
  d_bias.col(0) += d_out.rowwise().sum();
  const Matrix dxhat = d_out.array().colwise() * gain.col(0).array();
  const auto d = static_cast<double>(xhat.rows());
  Matrix dx(xhat.rows(), xhat.cols());
  for (Eigen::Index z = 0; z < xhat.cols(); ++z) {
    const double mean_dxhat = dxhat.col(z).sum() / d;
    const double mean_dxhat_xhat = dxhat.col(z).dot(xhat.col(z)) / d;
    dx.col(z) = rstd(z) * (dxhat.col(z).array() - mean_dxhat -
                           xhat.col(z).array() * mean_dxhat_xhat).matrix();
  }
  return dx;
}

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluScale * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  const double inner = kGeluScale * (x + 0.044715 * x * x * x);
  const double t = std::tanh(inner);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluScale * (1.0 + 3.0 * 0.044715 * x * x);
}

// Row-wise softmax over the valid columns; masked columns are exactly 0.
// (Vectorized exp clamps its argument, so a large negative score alone
// would leave a denormal weight behind.)
void masked_softmax_rows(Matrix& s, std::span<const std::uint8_t> valid) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (valid[static_cast<std::size_t>(j)]) m = std::max(m, s(i, j));
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      s(i, j) = valid[static_cast<std::size_t>(j)] ? std::exp(s(i, j) - m) : 0.0;
      sum += s(i, j);
    }
    s.row(i) /= sum;
  }
}

}  // namespace

void EncoderConfig::validate() const {
  if (hidden <= 0 || layers <= 0 || heads <= 0 || ffn_hidden <= 0 || vocab_size <= 0) {
    throw Error(ErrorKind::InvalidArgument, "encoder sizes must be positive");
  }
  if (hidden % heads != 0) {
    throw Error(ErrorKind::InvalidArgument, "hidden size must be divisible by heads");
  }
  if (max_len < 2) throw Error(ErrorKind::InvalidArgument, "max_len must be >= 2");
}

EncoderWeights EncoderWeights::zeros(const EncoderConfig& c) {
  c.validate();
  const int d = c.hidden;
  const int f = c.ffn_hidden;
  EncoderWeights w;
  w.token_embedding = Matrix::Zero(d, c.vocab_size);
  w.position_embedding = Matrix::Zero(d, c.max_len);
  w.layers.resize(static_cast<std::size_t>(c.layers));
  for (auto& l : w.layers) {
    l.ln1_gain = Matrix::Zero(d, 1);
    l.ln1_bias = Matrix::Zero(d, 1);
    l.qkv_weight = Matrix::Zero(3 * d, d);
    l.qkv_bias = Matrix::Zero(3 * d, 1);
    l.out_weight = Matrix::Zero(d, d);
    l.out_bias = Matrix::Zero(d, 1);
    l.ln2_gain = Matrix::Zero(d, 1);
    l.ln2_bias = Matrix::Zero(d, 1);
    l.fc1_weight = Matrix::Zero(f, d);
    l.fc1_bias = Matrix::Zero(f, 1);
    l.fc2_weight = Matrix::Zero(d, f);
    l.fc2_bias = Matrix::Zero(d, 1);
  }
  w.final_ln_gain = Matrix::Zero(d, 1);
  w.final_ln_bias = Matrix::Zero(d, 1);
  return w;
}

EncoderWeights EncoderWeights::initialize(const EncoderConfig& c) {
  EncoderWeights w = zeros(c);
  Rng rng(c.init_seed);
  const double in_d = 1.0 / std::sqrt(static_cast<double>(c.hidden));
  const double in_f = 1.0 / std::sqrt(static_cast<double>(c.ffn_hidden));
  // Residual-branch outputs are scaled down with depth.
  const double residual = 1.0 / std::sqrt(2.0 * c.layers);
  fill_normal(w.token_embedding, rng, 1.0);
  fill_normal(w.position_embedding, rng, 0.1);
  for (auto& l : w.layers) {
    l.ln1_gain.setOnes();
    l.ln2_gain.setOnes();
    fill_normal(l.qkv_weight, rng, in_d);
    fill_normal(l.out_weight, rng, in_d * residual);
    fill_normal(l.fc1_weight, rng, in_d);
    fill_normal(l.fc2_weight, rng, in_f * residual);
  }
  w.final_ln_gain.setOnes();
  return w;
}

std::vector<TensorRef> EncoderWeights::tensors() {
  std::vector<TensorRef> out{{"encoder.token_embedding", &token_embedding},
                             {"encoder.position_embedding", &position_embedding}};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "encoder.layer" + std::to_string(i) + ".";
    auto& l = layers[i];
    out.push_back({p + "ln1_gain", &l.ln1_gain});
    out.push_back({p + "ln1_bias", &l.ln1_bias});
    out.push_back({p + "qkv_weight", &l.qkv_weight});
    out.push_back({p + "qkv_bias", &l.qkv_bias});
    out.push_back({p + "out_weight", &l.out_weight});
    out.push_back({p + "out_bias", &l.out_bias});
    out.push_back({p + "ln2_gain", &l.ln2_gain});
    out.push_back({p + "ln2_bias", &l.ln2_bias});
    out.push_back({p + "fc1_weight", &l.fc1_weight});
    out.push_back({p + "fc1_bias", &l.fc1_bias});
    out.push_back({p + "fc2_weight", &l.fc2_weight});
    out.push_back({p + "fc2_bias", &l.fc2_bias});
  }
  out.push_back({"encoder.final_ln_gain", &final_ln_gain});
  out.push_back({"encoder.final_ln_bias", &final_ln_bias});
  return out;
}

std::vector<ConstTensorRef> EncoderWeights::tensors() const {
  std::vector<ConstTensorRef> out;
  for (auto& t : const_cast<EncoderWeights*>(this)->tensors()) out.push_back({t.name, t.tensor});
  return out;
}

EncoderOutput encoder_forward(const EncoderConfig& config, const EncoderWeights& weights,
                              std::span<const std::int32_t> ids,
                              std::span<const std::uint8_t> valid, EncoderTrace* trace) {
  const int z_len = static_cast<int>(ids.size());
  if (z_len < 1 || z_len > config.max_len) {
    throw Error(ErrorKind::ShapeMismatch, "sequence length " + std::to_string(z_len) +
                                              " outside [1, " + std::to_string(config.max_len) +
                                              "]");
  }
  if (valid.size() != ids.size() || valid[0] == 0) {
    throw Error(ErrorKind::ShapeMismatch, "valid mask must match ids and mark position 0");
  }
  if (weights.token_embedding.cols() != config.vocab_size ||
      weights.token_embedding.rows() != config.hidden ||
      static_cast<int>(weights.layers.size()) != config.layers) {
    throw Error(ErrorKind::ShapeMismatch, "encoder weights do not match config");
  }
  for (auto id : ids) {
    if (id < 0 || id >= config.vocab_size) {
      throw Error(ErrorKind::OutOfVocab, "token id " + std::to_string(id));
    }
  }

  const int d = config.hidden;
  const int dh = config.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x(d, z_len);
  for (int z = 0; z < z_len; ++z) {
    x.col(z) = weights.token_embedding.col(ids[static_cast<std::size_t>(z)]) +
               weights.position_embedding.col(z);
  }

  EncoderTrace local;
  EncoderTrace& t = trace ? *trace : local;
  t.ids.assign(ids.begin(), ids.end());
  t.valid.assign(valid.begin(), valid.end());
  t.layers.resize(weights.layers.size());

  for (std::size_t li = 0; li < weights.layers.size(); ++li) {
    const auto& w = weights.layers[li];
    auto& c = t.layers[li];
    layer_norm(x, w.ln1_gain, w.ln1_bias, c.ln1_xhat, c.ln1_rstd, c.ln1_out);
    c.qkv = w.qkv_weight * c.ln1_out;
    c.qkv.colwise() += w.qkv_bias.col(0);
    c.attn_concat.resize(d, z_len);
    c.probs.resize(static_cast<std::size_t>(config.heads));
    for (int h = 0; h < config.heads; ++h) {
      const auto q = c.qkv.middleRows(h * dh, dh);
      const auto k = c.qkv.middleRows(d + h * dh, dh);
      const auto v = c.qkv.middleRows(2 * d + h * dh, dh);
      Matrix& p = c.probs[static_cast<std::size_t>(h)];
      p.noalias() = (q.transpose() * k) * scale;
      masked_softmax_rows(p, valid);
      c.attn_concat.middleRows(h * dh, dh).noalias() = v * p.transpose();
    }
    x.noalias() += w.out_weight * c.attn_concat;
    x.colwise() += w.out_bias.col(0);

    layer_norm(x, w.ln2_gain, w.ln2_bias, c.ln2_xhat, c.ln2_rstd, c.ln2_out);
    c.fc1_pre = w.fc1_weight * c.ln2_out;
    c.fc1_pre.colwise() += w.fc1_bias.col(0);
    c.fc1_act = c.fc1_pre.unaryExpr([](double v) { return gelu(v); });
    x.noalias() += w.fc2_weight * c.fc1_act;
    x.colwise() += w.fc2_bias.col(0);
  }

  EncoderOutput out;
  layer_norm(x, weights.final_ln_gain, weights.final_ln_bias, t.final_xhat, t.final_rstd,
             out.hidden);
  out.pooled = out.hidden.col(0);
  out.valid.assign(valid.begin(), valid.end());
  return out;
}

void encoder_backward(const EncoderConfig& config, const EncoderWeights& weights,
                      const EncoderTrace& trace, const Matrix& d_hidden,
                      EncoderWeights& grads) {
  const int d = config.hidden;
  const int dh = config.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto z_len = static_cast<Eigen::Index>(trace.ids.size());
  if (d_hidden.rows() != d || d_hidden.cols() != z_len) {
    throw Error(ErrorKind::ShapeMismatch, "d_hidden shape");
  }

  Matrix dx = layer_norm_backward(d_hidden, trace.final_xhat, trace.final_rstd,
                                  weights.final_ln_gain, grads.final_ln_gain,
                                  grads.final_ln_bias);

  for (std::size_t li = weights.layers.size(); li-- > 0;) {
    const auto& w = weights.layers[li];
    const auto& c = trace.layers[li];
    auto& g = grads.layers[li];

    // MLP residual branch.
    g.fc2_weight.noalias() += dx * c.fc1_act.transpose();
    g.fc2_bias.col(0) += dx.rowwise().sum();
    Matrix d_act = w.fc2_weight.transpose() * dx;
    const Matrix d_pre =
        d_act.array() * c.fc1_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
    g.fc1_weight.noalias() += d_pre * c.ln2_out.transpose();
    g.fc1_bias.col(0) += d_pre.rowwise().sum();
    const Matrix d_ln2 = w.fc1_weight.transpose() * d_pre;
    dx += layer_norm_backward(d_ln2, c.ln2_xhat, c.ln2_rstd, w.ln2_gain, g.ln2_gain, g.ln2_bias);

    // Attention residual branch.
    g.out_weight.noalias() += dx * c.attn_concat.transpose();
    g.out_bias.col(0) += dx.rowwise().sum();
    const Matrix d_concat = w.out_weight.transpose() * dx;
    Matrix d_qkv = Matrix::Zero(3 * d, z_len);
    for (int h = 0; h < config.heads; ++h) {
      const Matrix& p = c.probs[static_cast<std::size_t>(h)];
      const auto q = c.qkv.middleRows(h * dh, dh);
      const auto k = c.qkv.middleRows(d + h * dh, dh);
      const auto v = c.qkv.middleRows(2 * d + h * dh, dh);
      const auto d_out = d_concat.middleRows(h * dh, dh);
      d_qkv.middleRows(2 * d + h * dh, dh).noalias() = d_out * p;
      const Matrix d_p = d_out.transpose() * v;
      const Vector row_dot = (d_p.array() * p.array()).rowwise().sum();
      const Matrix d_s = (p.array() * (d_p.array().colwise() - row_dot.array())) * scale;
      d_qkv.middleRows(h * dh, dh).noalias() = k * d_s.transpose();
      d_qkv.middleRows(d + h * dh, dh).noalias() = q * d_s;
    }
    g.qkv_weight.noalias() += d_qkv * c.ln1_out.transpose();
    g.qkv_bias.col(0) += d_qkv.rowwise().sum();
    const Matrix d_ln1 = w.qkv_weight.transpose() * d_qkv;
    dx += layer_norm_backward(d_ln1, c.ln1_xhat, c.ln1_rstd, w.ln1_gain, g.ln1_gain, g.ln1_bias);
  }

  for (Eigen::Index z = 0; z < z_len; ++z) {
    grads.token_embedding.col(trace.ids[static_cast<std::size_t>(z)]) += dx.col(z);
    grads.position_embedding.col(z) += dx.col(z);
  }
}

std::vector<EncoderOutput> encode_batch(const EncoderConfig& config,
                                        const EncoderWeights& weights,
                                        const PaddedBatch& batch, Execution execution) {
  std::vector<EncoderOutput> out(static_cast<std::size_t>(batch.rows));
  const auto width = static_cast<std::size_t>(batch.width);
  auto run_row = [&](int r) {
    const auto offset = static_cast<std::size_t>(r) * width;
    out[static_cast<std::size_t>(r)] = encoder_forward(
        config, weights, std::span(batch.ids).subspan(offset, width),
        std::span(batch.valid).subspan(offset, width));
  };
  if (execution == Execution::Serial) {
    for (int r = 0; r < batch.rows; ++r) run_row(r);
    return out;
  }
  // Exceptions may not cross the OpenMP region boundary.
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < batch.rows; ++r) {
    try {
      run_row(r);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

TinyEncoder::TinyEncoder(EncoderConfig config, EncoderWeights weights)
    : config_(config), weights_(std::move(weights)) {
  config_.validate();
}

EncoderOutput TinyEncoder::encode(const TokenSequence& seq) const {
  const std::vector<std::uint8_t> valid(seq.ids.size(), 1);
  return encoder_forward(config_, weights_, seq.ids, valid);
}

}  // namespace asap
