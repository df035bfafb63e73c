#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace chm {

namespace {

std::size_t checked_volume(const std::vector<int>& shape) {
  require(!shape.empty() && shape.size() <= 6, ErrorCode::InvalidArgument,
          "tensor rank must be in [1, 6]");
  std::size_t n = 1;
  for (int d : shape) {
    require(d >= 1, ErrorCode::InvalidArgument, "zero-sized dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(checked_volume(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  require(checked_volume(shape_) == data_.size(), ErrorCode::InvalidArgument,
          "value count does not match tensor shape");
}

std::size_t Tensor::linear_index(std::span<const int> idx) const {
  assert(idx.size() == shape_.size());
  std::size_t off = 0;
  for (std::size_t a = 0; a < shape_.size(); ++a) {
    assert(idx[a] >= 0 && idx[a] < shape_[a]);
    off = off * static_cast<std::size_t>(shape_[a]) + static_cast<std::size_t>(idx[a]);
  }
  return off;
}

void Tensor::multi_index(std::size_t linear, std::span<int> idx_out) const {
  assert(idx_out.size() == shape_.size());
  for (std::size_t a = shape_.size(); a-- > 0;) {
    const std::size_t d = static_cast<std::size_t>(shape_[a]);
    idx_out[a] = static_cast<int>(linear % d);
    linear /= d;
  }
}

namespace {

struct AxisTap {
  int lo;
  int hi;
  double w_hi;  // weight on hi; lo gets 1 - w_hi
};

std::vector<AxisTap> axis_taps(int in_n, int out_n) {
  std::vector<AxisTap> taps(static_cast<std::size_t>(out_n));
  const double ratio = static_cast<double>(in_n) / static_cast<double>(out_n);
  for (int i = 0; i < out_n; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
    const int lo = static_cast<int>(std::floor(src));
    taps[static_cast<std::size_t>(i)] = {lo, std::min(lo + 1, in_n - 1), src - lo};
  }
  return taps;
}

// One bilinear plane: in is ih*iw values whose elements are blocks of
// `block` contiguous doubles (block == 1 for a plain 2D plane).
void resize_plane(const double* in, int ih, int iw, double* out, int oh, int ow,
                  std::size_t block) {
  const auto ys = axis_taps(ih, oh);
  const auto xs = axis_taps(iw, ow);
  for (int i = 0; i < oh; ++i) {
    const AxisTap& ty = ys[static_cast<std::size_t>(i)];
    for (int j = 0; j < ow; ++j) {
      const AxisTap& tx = xs[static_cast<std::size_t>(j)];
      const double w00 = (1.0 - ty.w_hi) * (1.0 - tx.w_hi);
      const double w01 = (1.0 - ty.w_hi) * tx.w_hi;
      const double w10 = ty.w_hi * (1.0 - tx.w_hi);
      const double w11 = ty.w_hi * tx.w_hi;
      const double* p00 = in + (static_cast<std::size_t>(ty.lo) * iw + tx.lo) * block;
      const double* p01 = in + (static_cast<std::size_t>(ty.lo) * iw + tx.hi) * block;
      const double* p10 = in + (static_cast<std::size_t>(ty.hi) * iw + tx.lo) * block;
      const double* p11 = in + (static_cast<std::size_t>(ty.hi) * iw + tx.hi) * block;
      double* o = out + (static_cast<std::size_t>(i) * ow + j) * block;
      for (std::size_t b = 0; b < block; ++b) {
        o[b] = w00 * p00[b] + w01 * p01[b] + w10 * p10[b] + w11 * p11[b];
      }
    }
  }
}

void resize_plane_adjoint(const double* up, int oh, int ow, double* gin, int ih,
                          int iw, std::size_t block) {
  const auto ys = axis_taps(ih, oh);
  const auto xs = axis_taps(iw, ow);
  for (int i = 0; i < oh; ++i) {
    const AxisTap& ty = ys[static_cast<std::size_t>(i)];
    for (int j = 0; j < ow; ++j) {
      const AxisTap& tx = xs[static_cast<std::size_t>(j)];
      const double w00 = (1.0 - ty.w_hi) * (1.0 - tx.w_hi);
      const double w01 = (1.0 - ty.w_hi) * tx.w_hi;
      const double w10 = ty.w_hi * (1.0 - tx.w_hi);
      const double w11 = ty.w_hi * tx.w_hi;
      const double* u = up + (static_cast<std::size_t>(i) * ow + j) * block;
      double* g00 = gin + (static_cast<std::size_t>(ty.lo) * iw + tx.lo) * block;
      double* g01 = gin + (static_cast<std::size_t>(ty.lo) * iw + tx.hi) * block;
      double* g10 = gin + (static_cast<std::size_t>(ty.hi) * iw + tx.lo) * block;
      double* g11 = gin + (static_cast<std::size_t>(ty.hi) * iw + tx.hi) * block;
      for (std::size_t b = 0; b < block; ++b) {
        g00[b] += w00 * u[b];
        g01[b] += w01 * u[b];
        g10[b] += w10 * u[b];
        g11[b] += w11 * u[b];
      }
    }
  }
}

}  // namespace

Tensor resize_bilinear_2d(const Tensor& t, int out_h, int out_w) {
  require(t.rank() == 2 || t.rank() == 3, ErrorCode::InvalidArgument,
          "resize_bilinear_2d expects rank-2 or rank-3 input");
  require(out_h >= 1 && out_w >= 1, ErrorCode::InvalidArgument,
          "zero-sized dimension");
  if (t.rank() == 2) {
    Tensor out({out_h, out_w});
    resize_plane(t.data(), t.dim(0), t.dim(1), out.data(), out_h, out_w, 1);
    return out;
  }
  const int c = t.dim(0), ih = t.dim(1), iw = t.dim(2);
  Tensor out({c, out_h, out_w});
  const std::size_t in_plane = static_cast<std::size_t>(ih) * iw;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  for (int ch = 0; ch < c; ++ch) {
    resize_plane(t.data() + ch * in_plane, ih, iw, out.data() + ch * out_plane,
                 out_h, out_w, 1);
  }
  return out;
}

Tensor resize_bilinear_2d_adjoint(const Tensor& upstream, int in_h, int in_w) {
  require(upstream.rank() == 2 || upstream.rank() == 3, ErrorCode::InvalidArgument,
          "resize_bilinear_2d_adjoint expects rank-2 or rank-3 input");
  require(in_h >= 1 && in_w >= 1, ErrorCode::InvalidArgument, "zero-sized dimension");
  if (upstream.rank() == 2) {
    Tensor gin({in_h, in_w});
    resize_plane_adjoint(upstream.data(), upstream.dim(0), upstream.dim(1),
                         gin.data(), in_h, in_w, 1);
    return gin;
  }
  const int c = upstream.dim(0), oh = upstream.dim(1), ow = upstream.dim(2);
  Tensor gin({c, in_h, in_w});
  const std::size_t up_plane = static_cast<std::size_t>(oh) * ow;
  const std::size_t in_plane = static_cast<std::size_t>(in_h) * in_w;
  for (int ch = 0; ch < c; ++ch) {
    resize_plane_adjoint(upstream.data() + ch * up_plane, oh, ow,
                         gin.data() + ch * in_plane, in_h, in_w, 1);
  }
  return gin;
}

Tensor resize_4d(const Tensor& t, int out_h0, int out_w0, int out_h1, int out_w1) {
  require(t.rank() == 4, ErrorCode::InvalidArgument, "resize_4d expects rank-4 input");
  require(out_h0 >= 1 && out_w0 >= 1 && out_h1 >= 1 && out_w1 >= 1,
          ErrorCode::InvalidArgument, "zero-sized dimension");
  const int h0 = t.dim(0), w0 = t.dim(1), h1 = t.dim(2), w1 = t.dim(3);
  // Pass 1: dims (0,1); each (i,j) element is a contiguous h1*w1 block.
  Tensor mid({out_h0, out_w0, h1, w1});
  resize_plane(t.data(), h0, w0, mid.data(), out_h0, out_w0,
               static_cast<std::size_t>(h1) * w1);
  // Pass 2: dims (2,3); one plain plane per (i,j).
  Tensor out({out_h0, out_w0, out_h1, out_w1});
  const std::size_t mid_plane = static_cast<std::size_t>(h1) * w1;
  const std::size_t out_plane = static_cast<std::size_t>(out_h1) * out_w1;
  const std::size_t n_planes = static_cast<std::size_t>(out_h0) * out_w0;
  for (std::size_t p = 0; p < n_planes; ++p) {
    resize_plane(mid.data() + p * mid_plane, h1, w1, out.data() + p * out_plane,
                 out_h1, out_w1, 1);
  }
  return out;
}

Tensor resize_4d_adjoint(const Tensor& upstream, int in_h0, int in_w0, int in_h1,
                         int in_w1) {
  require(upstream.rank() == 4, ErrorCode::InvalidArgument,
          "resize_4d_adjoint expects rank-4 input");
  const int oh0 = upstream.dim(0), ow0 = upstream.dim(1);
  const int oh1 = upstream.dim(2), ow1 = upstream.dim(3);
  // Reverse of resize_4d: undo pass 2 per plane, then undo pass 1 blockwise.
  Tensor mid({oh0, ow0, in_h1, in_w1});
  const std::size_t up_plane = static_cast<std::size_t>(oh1) * ow1;
  const std::size_t mid_plane = static_cast<std::size_t>(in_h1) * in_w1;
  const std::size_t n_planes = static_cast<std::size_t>(oh0) * ow0;
  for (std::size_t p = 0; p < n_planes; ++p) {
    resize_plane_adjoint(upstream.data() + p * up_plane, oh1, ow1,
                         mid.data() + p * mid_plane, in_h1, in_w1, 1);
  }
  Tensor gin({in_h0, in_w0, in_h1, in_w1});
  resize_plane_adjoint(mid.data(), oh0, ow0, gin.data(), in_h0, in_w0, mid_plane);
  return gin;
}

Tensor relu(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor sigmoid(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& upstream) {
  require(output.same_shape(upstream), ErrorCode::InvalidArgument,
          "sigmoid_backward shape mismatch");
  Tensor g = upstream;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] *= output[i] * (1.0 - output[i]);
  }
  return g;
}

Tensor softmax_last2(const Tensor& t) {
  require(t.rank() == 4, ErrorCode::InvalidArgument, "softmax_last2 expects rank-4 input");
  const std::size_t plane = static_cast<std::size_t>(t.dim(2)) * t.dim(3);
  const std::size_t n_planes = t.size() / plane;
  Tensor out = t;
  for (std::size_t p = 0; p < n_planes; ++p) {
    double* v = out.data() + p * plane;
    double mx = v[0];
    for (std::size_t i = 1; i < plane; ++i) mx = std::max(mx, v[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      v[i] = std::exp(v[i] - mx);
      sum += v[i];
    }
    for (std::size_t i = 0; i < plane; ++i) v[i] /= sum;
  }
  return out;
}

}  // namespace chm
