#include "asap/adam.hpp"

#include <cmath>

#include "asap/error.hpp"

namespace asap {

Adam::Adam(AdamConfig config, std::span<const ConstTensorRef> shapes) : config_(config) {
  if (!(config.beta1 > 0.0 && config.beta1 < 1.0 && config.beta2 > 0.0 && config.beta2 < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "Adam betas must lie in (0, 1)");
  }
  m_.reserve(shapes.size());
  v_.reserve(shapes.size());
  for (const auto& t : shapes) {
    m_.push_back(Matrix::Zero(t.tensor->rows(), t.tensor->cols()));
    v_.push_back(Matrix::Zero(t.tensor->rows(), t.tensor->cols()));
  }
}

void Adam::step(std::span<const TensorRef> params, std::span<const ConstTensorRef> grads,
                double learning_rate) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "Adam tensor count mismatch");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bias1 = 1.0 - std::pow(config_.beta1, t);
  const double bias2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < m_.size(); ++k) {
    const Matrix& g = *grads[k].tensor;
    Matrix& p = *params[k].tensor;
    if (g.rows() != p.rows() || g.cols() != p.cols() || g.rows() != m_[k].rows() ||
        g.cols() != m_[k].cols()) {
      throw Error(ErrorKind::ShapeMismatch, "Adam shape mismatch for " + params[k].name);
    }
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * g;
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    p.array() -= learning_rate * (m_[k].array() / bias1) /
                 ((v_[k].array() / bias2).sqrt() + config_.epsilon);
  }
}

}  // namespace asap
