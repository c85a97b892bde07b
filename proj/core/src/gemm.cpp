#include "gemm.hpp"

#include <Eigen/Core>

#include "lazyformer/error.hpp"
#include "lazyformer/tensor.hpp"

namespace lazyformer::detail {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Stride = Eigen::OuterStride<>;
using ConstMap = Eigen::Map<const RowMajor, Eigen::Unaligned, Stride>;
using MutMap = Eigen::Map<RowMajor, Eigen::Unaligned, Stride>;

ConstMap map(ConstMatrix m) {
  return ConstMap(m.data, static_cast<Eigen::Index>(m.rows),
                  static_cast<Eigen::Index>(m.cols),
                  Stride(static_cast<Eigen::Index>(m.stride)));
}

template <typename A, typename B>
void assign(MutMap& c, const A& a, const B& b, bool accumulate, double alpha) {
  if (accumulate) {
    c.noalias() += alpha * (a * b);
  } else if (alpha == 1.0) {
    c.noalias() = a * b;
  } else {
    c.noalias() = alpha * (a * b);
  }
}

}  // namespace

void gemm(ConstMatrix a, bool transpose_a, ConstMatrix b, bool transpose_b,
          MutMatrix c, bool accumulate, double alpha) {
  const std::size_t p = transpose_a ? a.cols : a.rows;
  const std::size_t q = transpose_a ? a.rows : a.cols;
  const std::size_t qb = transpose_b ? b.cols : b.rows;
  const std::size_t r = transpose_b ? b.rows : b.cols;
  if (q != qb || c.rows != p || c.cols != r) {
    throw DimensionError("gemm operand mismatch");
  }
  op_counters().flops += 2ULL * p * q * r;

  auto am = map(a);
  auto bm = map(b);
  MutMap cm(c.data, static_cast<Eigen::Index>(c.rows),
            static_cast<Eigen::Index>(c.cols),
            Stride(static_cast<Eigen::Index>(c.stride)));
  if (!transpose_a && !transpose_b) {
    assign(cm, am, bm, accumulate, alpha);
  } else if (!transpose_a && transpose_b) {
    assign(cm, am, bm.transpose(), accumulate, alpha);
  } else if (transpose_a && !transpose_b) {
    assign(cm, am.transpose(), bm, accumulate, alpha);
  } else {
    assign(cm, am.transpose(), bm.transpose(), accumulate, alpha);
  }
}

}  // namespace lazyformer::detail
