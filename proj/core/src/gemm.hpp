#pragma once

#include <cstddef>

namespace lazyformer::detail {

/// Row-major matrix view with an explicit row stride, so a head's column
/// block inside an [n×H] activation can be addressed in place.
struct ConstMatrix {
  const double* data;
  std::size_t rows;
  std::size_t cols;
  std::size_t stride;
};

struct MutMatrix {
  double* data;
  std::size_t rows;
  std::size_t cols;
  std::size_t stride;
};

/// c (+)= alpha · op(a) · op(b), where op transposes when the flag is set.
/// Adds 2·p·q·r to the flop counter.
void gemm(ConstMatrix a, bool transpose_a, ConstMatrix b, bool transpose_b,
          MutMatrix c, bool accumulate, double alpha = 1.0);

}  // namespace lazyformer::detail
