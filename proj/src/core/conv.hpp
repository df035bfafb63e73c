#pragma once

#include <cstdint>
#include <vector>

#include "core/kernel.hpp"
#include "core/tensor.hpp"

namespace chm {

// Both engines: stride 1 on every dimension, zero padding of half the kernel
// extent, so output shape equals input shape. Rank-4 inputs pair with 4D
// kernels and rank-6 inputs with 6D kernels.
//
// When mac_counter is non-null it accumulates one count per kernel tap
// evaluated (padding taps included), i.e. exactly volume()^2 per output
// element for the dense engine and 2*volume()-1 for the center-pivot engine.
Tensor conv_dense(const Tensor& c, const SharedKernel& k,
                  std::uint64_t* mac_counter = nullptr);

// Center-pivot decomposition: one half-dimensional convolution per subspace
// (the two kernel slices through the center), with the (0,0) weight counted
// once on the first side. Requires a CP scheme; agrees elementwise with
// conv_dense on the same kernel's dense materialization.
Tensor conv_cp(const Tensor& c, const SharedKernel& k,
               std::uint64_t* mac_counter = nullptr);

struct ScaleMaxpool {
  Tensor pooled;                      // rank-4 (H, W, H', W')
  std::vector<std::int32_t> arg_src;  // winning source-scale index m per element
  std::vector<std::int32_t> arg_trg;  // winning target-scale index n per element
  int src_scales = 1;
  int trg_scales = 1;
};

// Reduces a rank-6 tensor over both scale dims; ties broken toward the
// lexicographically smallest (m, n) so backward routing is deterministic.
ScaleMaxpool scale_maxpool(const Tensor& c6);

// Routes the upstream rank-4 gradient back to the recorded argmax positions.
Tensor scale_maxpool_backward(const ScaleMaxpool& pool, const Tensor& upstream);

struct ConvGrads {
  Tensor input;                // d loss / d correlation input
  std::vector<double> params;  // d loss / d kernel params (share-normalized)
  double bias = 0.0;
};

ConvGrads conv_dense_backward(const Tensor& c, const SharedKernel& k,
                              const Tensor& upstream);
ConvGrads conv_cp_backward(const Tensor& c, const SharedKernel& k,
                           const Tensor& upstream);

}  // namespace chm
