#include "core/flow.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace chm {

SoftArgmaxResult kernel_soft_argmax(const Tensor& c4, double sigma_g) {
  require(c4.rank() == 4, ErrorCode::InvalidArgument,
          "kernel_soft_argmax expects a rank-4 tensor");
  require(sigma_g > 0.0, ErrorCode::InvalidArgument, "sigma_g must be positive");
  const int H = c4.dim(0), W = c4.dim(1), K = c4.dim(2), L = c4.dim(3);
  const std::size_t plane = static_cast<std::size_t>(K) * L;
  const std::size_t n_planes = static_cast<std::size_t>(H) * W;

  SoftArgmaxResult r;
  r.chat = Tensor(c4.shape());
  r.peak_y.assign(n_planes, 0);
  r.peak_x.assign(n_planes, 0);
  const double inv2s2 = 1.0 / (2.0 * sigma_g * sigma_g);

  for (std::size_t p = 0; p < n_planes; ++p) {
    const double* c = c4.data() + p * plane;
    double* out = r.chat.data() + p * plane;
    // Row-major scan with strict > keeps the lexicographically smallest peak.
    std::size_t best = 0;
    for (std::size_t i = 1; i < plane; ++i) {
      if (c[i] > c[best]) best = i;
    }
    const int py = static_cast<int>(best) / L;
    const int px = static_cast<int>(best) % L;
    r.peak_y[p] = py;
    r.peak_x[p] = px;

    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k)
      for (int l = 0; l < L; ++l) {
        const double d2 = static_cast<double>((k - py) * (k - py) + (l - px) * (l - px));
        const double s = std::exp(-d2 * inv2s2) * c[static_cast<std::size_t>(k) * L + l];
        out[static_cast<std::size_t>(k) * L + l] = s;
        mx = std::max(mx, s);
      }
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      out[i] = std::exp(out[i] - mx);
      sum += out[i];
    }
    for (std::size_t i = 0; i < plane; ++i) out[i] /= sum;
  }
  return r;
}

Tensor kernel_soft_argmax_backward(const Tensor& c4, const SoftArgmaxResult& fwd,
                                   double sigma_g, const Tensor& upstream) {
  require(upstream.same_shape(c4), ErrorCode::InvalidArgument,
          "soft-argmax upstream shape mismatch");
  const int K = c4.dim(2), L = c4.dim(3);
  const std::size_t plane = static_cast<std::size_t>(K) * L;
  const std::size_t n_planes = c4.size() / plane;
  const double inv2s2 = 1.0 / (2.0 * sigma_g * sigma_g);

  Tensor grad(c4.shape());
  for (std::size_t p = 0; p < n_planes; ++p) {
    const double* y = fwd.chat.data() + p * plane;
    const double* u = upstream.data() + p * plane;
    double* g = grad.data() + p * plane;
    double dot = 0.0;
    for (std::size_t i = 0; i < plane; ++i) dot += u[i] * y[i];
    const int py = fwd.peak_y[p], px = fwd.peak_x[p];
    for (int k = 0; k < K; ++k)
      for (int l = 0; l < L; ++l) {
        const std::size_t i = static_cast<std::size_t>(k) * L + l;
        const double gs = y[i] * (u[i] - dot);  // softmax backward
        const double d2 = static_cast<double>((k - py) * (k - py) + (l - px) * (l - px));
        g[i] = gs * std::exp(-d2 * inv2s2);  // mask held constant
      }
  }
  return grad;
}

FlowField form_flow(const Tensor& chat) {
  require(chat.rank() == 4, ErrorCode::InvalidArgument,
          "form_flow expects a rank-4 tensor");
  const int H = chat.dim(0), W = chat.dim(1), K = chat.dim(2), L = chat.dim(3);
  const std::size_t plane = static_cast<std::size_t>(K) * L;
  FlowField flow;
  flow.coords = Tensor({H, W, 2});
  std::size_t p = 0;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j, ++p) {
      const double* c = chat.data() + p * plane;
      double sum = 0.0, ex = 0.0, ey = 0.0;
      for (int k = 0; k < K; ++k)
        for (int l = 0; l < L; ++l) {
          const double w = c[static_cast<std::size_t>(k) * L + l];
          sum += w;
          ex += w * l;
          ey += w * k;
        }
      require(std::abs(sum - 1.0) <= 1e-6, ErrorCode::Contract,
              "form_flow input slice is not normalized");
      flow.coords(i, j, 0) = ex;
      flow.coords(i, j, 1) = ey;
    }
  return flow;
}

Tensor form_flow_backward(const Tensor& grad_coords, int trg_h, int trg_w) {
  require(grad_coords.rank() == 3 && grad_coords.dim(2) == 2,
          ErrorCode::InvalidArgument, "flow gradient must be [H, W, 2]");
  const int H = grad_coords.dim(0), W = grad_coords.dim(1);
  Tensor g({H, W, trg_h, trg_w});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const double gx = grad_coords(i, j, 0);
      const double gy = grad_coords(i, j, 1);
      for (int k = 0; k < trg_h; ++k)
        for (int l = 0; l < trg_w; ++l) {
          g(i, j, k, l) = gx * l + gy * k;
        }
    }
  return g;
}

Tensor soft_sampler(double kx, double ky, double tau, int grid_h, int grid_w) {
  require(tau > 0.0, ErrorCode::InvalidArgument, "sampler tau must be positive");
  require(grid_h >= 1 && grid_w >= 1, ErrorCode::InvalidArgument,
          "zero-sized dimension");
  Tensor w({grid_h, grid_w});
  double sum = 0.0;
  for (int i = 0; i < grid_h; ++i)
    for (int j = 0; j < grid_w; ++j) {
      const double d = std::hypot(kx - j, ky - i);
      const double v = tau - d;
      if (v > 0.0) {
        w(i, j) = v;
        sum += v;
      }
    }
  require(sum > 0.0, ErrorCode::InvalidArgument,
          "degenerate sampler: no grid point within tau of the keypoint");
  for (double& v : w.values()) v /= sum;
  return w;
}

namespace {

double to_grid(double pixel, double image_extent, int grid_extent) {
  return (pixel + 0.5) * static_cast<double>(grid_extent) / image_extent - 0.5;
}

double to_pixel(double grid, double image_extent, int grid_extent) {
  return (grid + 0.5) * image_extent / static_cast<double>(grid_extent) - 0.5;
}

}  // namespace

std::vector<std::array<double, 2>> transfer_keypoints(const FlowField& flow,
                                                      const AnnotatedPair& pair,
                                                      double tau) {
  const int H = flow.coords.dim(0), W = flow.coords.dim(1);
  std::vector<std::array<double, 2>> out;
  out.reserve(pair.src_kps.size());
  for (const auto& kp : pair.src_kps) {
    const double gx = to_grid(kp[0], pair.src_size[0], W);
    const double gy = to_grid(kp[1], pair.src_size[1], H);
    const Tensor w = soft_sampler(gx, gy, tau, H, W);
    double px = 0.0, py = 0.0;
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        const double v = w(i, j);
        if (v == 0.0) continue;
        px += v * flow.coords(i, j, 0);
        py += v * flow.coords(i, j, 1);
      }
    out.push_back({to_pixel(px, pair.trg_size[0], W), to_pixel(py, pair.trg_size[1], H)});
  }
  return out;
}

Tensor transfer_keypoints_backward(const AnnotatedPair& pair, double tau,
                                   int grid_h, int grid_w,
                                   const std::vector<std::array<double, 2>>& grad_pred) {
  require(grad_pred.size() == pair.src_kps.size(), ErrorCode::InvalidArgument,
          "per-keypoint gradient count mismatch");
  Tensor g({grid_h, grid_w, 2});
  const double sx = pair.trg_size[0] / static_cast<double>(grid_w);
  const double sy = pair.trg_size[1] / static_cast<double>(grid_h);
  for (std::size_t m = 0; m < pair.src_kps.size(); ++m) {
    const auto& kp = pair.src_kps[m];
    const double gx = to_grid(kp[0], pair.src_size[0], grid_w);
    const double gy = to_grid(kp[1], pair.src_size[1], grid_h);
    const Tensor w = soft_sampler(gx, gy, tau, grid_h, grid_w);
    const double ux = grad_pred[m][0] * sx;  // pixel = grid * scale + const
    const double uy = grad_pred[m][1] * sy;
    for (int i = 0; i < grid_h; ++i)
      for (int j = 0; j < grid_w; ++j) {
        const double v = w(i, j);
        if (v == 0.0) continue;
        g(i, j, 0) += ux * v;
        g(i, j, 1) += uy * v;
      }
  }
  return g;
}

double epe_loss(const std::vector<std::array<double, 2>>& pred,
                const std::vector<std::array<double, 2>>& gt,
                std::vector<std::array<double, 2>>* grad_pred) {
  require(!pred.empty() && pred.size() == gt.size(), ErrorCode::InvalidArgument,
          "epe_loss needs equal-length nonempty keypoint lists");
  const double inv_m = 1.0 / static_cast<double>(pred.size());
  if (grad_pred) grad_pred->assign(pred.size(), {0.0, 0.0});
  double loss = 0.0;
  for (std::size_t m = 0; m < pred.size(); ++m) {
    const double dx = pred[m][0] - gt[m][0];
    const double dy = pred[m][1] - gt[m][1];
    const double d = std::hypot(dx, dy);
    loss += d * inv_m;
    if (grad_pred && d > 0.0) {
      (*grad_pred)[m] = {dx / d * inv_m, dy / d * inv_m};
    }
  }
  return loss;
}

PckMode pck_mode_from_name(const std::string& name) {
  if (name == "img") return PckMode::Img;
  if (name == "bbox") return PckMode::Bbox;
  if (name == "bbox-kp") return PckMode::BboxKp;
  fail(ErrorCode::InvalidArgument, "unknown pck mode: " + name);
}

const char* pck_mode_name(PckMode mode) {
  switch (mode) {
    case PckMode::Img: return "img";
    case PckMode::Bbox: return "bbox";
    case PckMode::BboxKp: return "bbox-kp";
  }
  return "?";
}

double pck(const std::vector<std::array<double, 2>>& pred,
           const AnnotatedPair& pair, double alpha, PckMode mode) {
  require(!pred.empty() && pred.size() == pair.trg_kps.size(),
          ErrorCode::InvalidArgument, "prediction/annotation count mismatch");
  double w = 0.0, h = 0.0;
  switch (mode) {
    case PckMode::Img:
      w = pair.trg_size[0];
      h = pair.trg_size[1];
      break;
    case PckMode::Bbox:
      require(pair.trg_bbox.has_value(), ErrorCode::InvalidArgument,
              "bbox mode requires a target bounding box");
      w = (*pair.trg_bbox)[2];
      h = (*pair.trg_bbox)[3];
      break;
    case PckMode::BboxKp: {
      double min_x = pair.trg_kps[0][0], max_x = min_x;
      double min_y = pair.trg_kps[0][1], max_y = min_y;
      for (const auto& kp : pair.trg_kps) {
        min_x = std::min(min_x, kp[0]);
        max_x = std::max(max_x, kp[0]);
        min_y = std::min(min_y, kp[1]);
        max_y = std::max(max_y, kp[1]);
      }
      w = max_x - min_x;
      h = max_y - min_y;
      break;
    }
  }
  const double threshold = alpha * std::max(w, h);
  std::size_t correct = 0;
  for (std::size_t m = 0; m < pred.size(); ++m) {
    const double d = std::hypot(pred[m][0] - pair.trg_kps[m][0],
                                pred[m][1] - pair.trg_kps[m][1]);
    if (d <= threshold) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

}  // namespace chm
