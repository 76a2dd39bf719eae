#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "ttsgd/errors.hpp"

namespace ttsgd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Index of the first non-finite entry, or -1.
template <typename Derived>
Eigen::Index first_non_finite(const Eigen::DenseBase<Derived>& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(m(i, j))) return j * m.rows() + i;
  return -1;
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const std::string& where) {
  const Eigen::Index bad = first_non_finite(m);
  if (bad >= 0) throw NumericBlowup(where, static_cast<std::size_t>(bad));
}

inline void require_size(Eigen::Index actual, Eigen::Index expected, const std::string& what) {
  if (actual != expected)
    throw DimensionError(what + ": expected size " + std::to_string(expected) + ", got " +
                         std::to_string(actual));
}

inline void require_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols)
    throw DimensionError(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

inline void symmetrize(Mat& m) { m = 0.5 * (m + m.transpose()).eval(); }

}  // namespace ttsgd
