#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>

namespace mclsr {

using Real = double;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Embedding tables are row-per-entity, so row-major keeps gathers contiguous.
using Mat = MatrixX<Real>;
using Vec = VectorX<Real>;
using SpMat = Eigen::SparseMatrix<Real, Eigen::RowMajor>;

using UserIndex = std::int32_t;
using ItemIndex = std::int32_t;

// Training prefixes and the position table are capped at this length.
inline constexpr int kMaxPrefixLen = 20;

}  // namespace mclsr
