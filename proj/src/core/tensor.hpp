#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

#include "core/error.hpp"

namespace chm {

// Dense n-dimensional (rank 1..6) array of f64 values, row-major.
// All operations below are pure: inputs are never mutated.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> values);

  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  template <class... Ix>
  double& operator()(Ix... ix) {
    assert(sizeof...(Ix) == shape_.size());
    return data_[offset_of(ix...)];
  }
  template <class... Ix>
  double operator()(Ix... ix) const {
    assert(sizeof...(Ix) == shape_.size());
    return data_[offset_of(ix...)];
  }

  std::size_t linear_index(std::span<const int> idx) const;
  void multi_index(std::size_t linear, std::span<int> idx_out) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
  template <class... Ix>
  std::size_t offset_of(Ix... ix) const {
    std::size_t off = 0;
    std::size_t axis = 0;
    ((off = off * static_cast<std::size_t>(shape_[axis++]) +
          static_cast<std::size_t>(ix)),
     ...);
    return off;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

// Bilinear resize with half-pixel-center alignment: output sample i reads the
// continuous coordinate (i + 0.5) * in / out - 0.5, clamped to the border.
// Accepts rank-2 [H, W] or rank-3 [C, H, W]; same-size resize is an exact copy.
Tensor resize_bilinear_2d(const Tensor& t, int out_h, int out_w);

// Adjoint of resize_bilinear_2d: scatters upstream gradients back onto an
// input of spatial size (in_h, in_w).
Tensor resize_bilinear_2d_adjoint(const Tensor& upstream, int in_h, int in_w);

// Separable resize of a rank-4 tensor: dims (0,1) to (out_h0, out_w0), then
// dims (2,3) to (out_h1, out_w1). The two passes commute.
Tensor resize_4d(const Tensor& t, int out_h0, int out_w0, int out_h1, int out_w1);
Tensor resize_4d_adjoint(const Tensor& upstream, int in_h0, int in_w0, int in_h1, int in_w1);

Tensor relu(const Tensor& t);
Tensor sigmoid(const Tensor& t);
// d(sigmoid)/dx expressed through the forward output y: up * y * (1 - y).
Tensor sigmoid_backward(const Tensor& output, const Tensor& upstream);

// Per-(i,j) softmax over the trailing two dims of a rank-4 tensor,
// computed with max subtraction.
Tensor softmax_last2(const Tensor& t);

}  // namespace chm
