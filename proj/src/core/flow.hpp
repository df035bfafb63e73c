#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace chm {

// Dense flow: coords[i][j] = (x, y) target position, in target-grid units.
// Values are convex combinations of grid points, so x in [0, W-1] and
// y in [0, H-1].
struct FlowField {
  Tensor coords;  // rank-3 [H, W, 2], channel 0 = x, channel 1 = y
};

// Keypoint annotations in original-image pixel coordinates.
struct AnnotatedPair {
  std::vector<std::array<double, 2>> src_kps;
  std::vector<std::array<double, 2>> trg_kps;
  std::array<double, 2> src_size{1.0, 1.0};  // (w, h)
  std::array<double, 2> trg_size{1.0, 1.0};
  std::optional<std::array<double, 4>> trg_bbox;  // (x, y, w, h)
};

struct SoftArgmaxResult {
  Tensor chat;                       // per-slice probability map, sums to 1
  std::vector<std::int32_t> peak_y;  // hard argmax per (i,j) slice
  std::vector<std::int32_t> peak_x;
};

// Softmax of the correlation modulated inside the exponent by a Gaussian
// centered on each slice's hard argmax (ties to the smallest (k,l)).
SoftArgmaxResult kernel_soft_argmax(const Tensor& c4, double sigma_g);

// Backward with the Gaussian mask held constant (no gradient through the
// argmax).
Tensor kernel_soft_argmax_backward(const Tensor& c4, const SoftArgmaxResult& fwd,
                                   double sigma_g, const Tensor& upstream);

// Probability-weighted average of the regular grid. Slices must sum to 1
// within 1e-6 or a contract violation is raised.
FlowField form_flow(const Tensor& chat);
Tensor form_flow_backward(const Tensor& grad_coords, int trg_h, int trg_w);

// Normalized triangular weights around a continuous grid point k = (kx, ky):
// w_ij proportional to max(0, tau - dist((j, i), k)). Raises if no grid point
// falls within tau.
Tensor soft_sampler(double kx, double ky, double tau, int grid_h, int grid_w);

// Source keypoints (pixels) -> sampler-weighted flow reads -> target pixels.
// Pixel<->grid mapping uses the half-pixel-center convention.
std::vector<std::array<double, 2>> transfer_keypoints(const FlowField& flow,
                                                      const AnnotatedPair& pair,
                                                      double tau);

// Scatters per-keypoint pixel-space gradients back onto the flow coordinates.
Tensor transfer_keypoints_backward(const AnnotatedPair& pair, double tau,
                                   int grid_h, int grid_w,
                                   const std::vector<std::array<double, 2>>& grad_pred);

// Mean Euclidean distance; optional gradient (unit difference vectors / M,
// zero where pred == gt).
double epe_loss(const std::vector<std::array<double, 2>>& pred,
                const std::vector<std::array<double, 2>>& gt,
                std::vector<std::array<double, 2>>* grad_pred = nullptr);

enum class PckMode { Img, Bbox, BboxKp };
PckMode pck_mode_from_name(const std::string& name);
const char* pck_mode_name(PckMode mode);

// Fraction of predictions within alpha * max(w, h) of ground truth; boundary
// equality counts as correct. Img uses the target image size, Bbox the
// annotated box, BboxKp the target-keypoint extremes.
double pck(const std::vector<std::array<double, 2>>& pred,
           const AnnotatedPair& pair, double alpha, PckMode mode);

}  // namespace chm
