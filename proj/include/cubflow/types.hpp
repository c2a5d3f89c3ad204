#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>

namespace cubflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// One point per row so that a row is a contiguous d-vector.
using PointSet = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Field = std::function<double(std::span<const double>)>;
using GradientField = std::function<void(std::span<const double>, std::span<double>)>;

inline std::span<const double> point(const PointSet& points, Eigen::Index i) {
  return {points.row(i).data(), static_cast<std::size_t>(points.cols())};
}

}  // namespace cubflow
