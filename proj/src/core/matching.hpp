#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "core/conv.hpp"
#include "core/kernel.hpp"
#include "core/tensor.hpp"

namespace chm {

// One backbone output for one image: [C, h, w].
struct FeatureLevel {
  std::string name;
  Tensor tensor;
};

struct PyramidConfig {
  int scale_count = 3;
  std::vector<double> scale_factors = {0.7071067811865475, 1.0, 1.4142135623730951};
  int rho = 4;  // channel-reduction divisor
  int base_h = 15;
  int base_w = 15;
  int up_h = 30;
  int up_w = 30;
};

// Learnable 3x3 projection for one scale: weight [Cout, Cin, 3, 3] + bias.
struct ScaleProjection {
  Tensor weight;
  std::vector<double> bias;
};

// One projection set per level, applied to both images of the pair.
struct ProjectionParams {
  std::vector<ScaleProjection> scales;
};

// 3x3 same-padding convolution on a [C, h, w] feature map.
Tensor conv3x3_same(const Tensor& in, const ScaleProjection& proj);

struct Conv3x3Grads {
  Tensor weight;
  std::vector<double> bias;
};
Conv3x3Grads conv3x3_backward(const Tensor& in, const ScaleProjection& proj,
                              const Tensor& upstream);

// Per-scale projected features at base resolution: resize by the scale
// factor, 3x3-convolve with that scale's parameters, resize to base.
struct ProjectedScale {
  Tensor resized_input;  // conv input, kept for the theta backward
  Tensor features;       // [C/rho, base_h, base_w]
};
std::vector<ProjectedScale> project_features(const FeatureLevel& level,
                                             const PyramidConfig& cfg,
                                             const ProjectionParams& proj);

// ReLU-clamped cosine-similarity slab between two projected feature maps;
// zero-norm vectors correlate to 0. Output (h_src, w_src, h_trg, w_trg).
Tensor correlation_4d(const Tensor& src, const Tensor& trg);

// Multi-scale 6D correlation, index order (y, x, m, y', x', n); every (m, n)
// slab is resized to (base_h, base_w, base_h, base_w).
Tensor correlation_6d(const std::vector<Tensor>& src, const std::vector<Tensor>& trg,
                      const PyramidConfig& cfg);

// Adjoint of correlation_6d: accumulates gradients onto the projected
// feature maps (ReLU-inactive and zero-norm entries contribute nothing).
void correlation_6d_backward(const std::vector<Tensor>& src,
                             const std::vector<Tensor>& trg,
                             const PyramidConfig& cfg, const Tensor& grad_c6,
                             std::vector<Tensor>& grad_src,
                             std::vector<Tensor>& grad_trg);

struct ChmStack {
  std::vector<SharedKernel> k6d;  // one per level
  SharedKernel k4d;
  bool use_cp = false;  // center-pivot engine instead of dense
};

struct LevelPair {
  FeatureLevel src;
  FeatureLevel trg;
};

struct LevelTrace {
  std::vector<ProjectedScale> src_scales, trg_scales;
  Tensor corr6;      // multi-scale correlation
  Tensor conv6;      // after the 6D layer
  ScaleMaxpool pool; // scale-space reduction + argmax maps
};

struct ForwardTrace {
  std::vector<LevelTrace> levels;
  Tensor fused;    // sum of per-level pooled tensors (pre-sigmoid)
  Tensor sig;      // sigmoid(fused)
  Tensor up;       // resized to (up_h, up_w, up_h, up_w)
  Tensor refined;  // after the 4D layer: the final correlation
};

// Full forward pass: per level correlation -> 6D layer -> scale maxpool;
// levels fused by addition; then sigmoid, upsample, 4D refinement.
ForwardTrace chmnet_forward(const std::vector<LevelPair>& levels,
                            const ChmStack& stack, const PyramidConfig& cfg,
                            const std::vector<ProjectionParams>& proj);

// Global offset voting over a rank-4 correlation (the ablation baseline):
// hough(h) accumulates c(x,x') * kernel(|x'-x-h|) over every candidate match,
// and rescored(x,x') = c(x,x') * hough(x'-x). sigma <= 0 selects a Dirac
// kernel, otherwise a discretized Gaussian of that width.
struct RhmResult {
  Tensor hough;     // (H+H'-1, W+W'-1), offset (0,0) at index (H-1, W-1)
  Tensor rescored;  // same shape as the input correlation
};
RhmResult rhm_vote(const Tensor& c4, double sigma);

// Direct evaluation of the local voting sum at a single (x, x', h): sums
// c(p, p') * kiso over both windows, where kiso is keyed by the group-wise
// offset of the neighbor match relative to h. Test-support oracle; x/xp/h
// have 2 components for rank-4 inputs and 3 (y, x, s) for rank-6.
double local_vote_oracle(const Tensor& c, std::span<const int> x,
                         std::span<const int> xp, const KernelDims& window,
                         std::span<const int> h,
                         const std::function<double(int d2_xy, int ds_abs)>& kiso);

}  // namespace chm
