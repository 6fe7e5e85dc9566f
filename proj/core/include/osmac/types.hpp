#pragma once

#include <Eigen/Core>

namespace osmac {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Logistic-regression coefficients. Coordinate 0 is the intercept when the
/// design carries one.
using ParamVector = Eigen::VectorXd;

}  // namespace osmac
