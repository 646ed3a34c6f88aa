#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace asap {

// Every trainable tensor is a column-major Matrix; vectors are n x 1.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct TensorRef {
  std::string name;
  Matrix* tensor;
};

struct ConstTensorRef {
  std::string name;
  const Matrix* tensor;
};

enum class Execution { Serial, Parallel };

}  // namespace asap
