#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace chm {

// Weight-sharing schemes for correlation-convolution kernels.
//   Full   — every offset pair owns its own weight.
//   Iso    — weights shared across pairs with equal group-wise displacement
//            norm (squared spatial norm of z'-z, absolute scale offset).
//   Psi    — position-sensitive isotropic: additionally keyed by the two
//            endpoint norms, each group (spatial/scale) unordered across the
//            pair so the kernel is symmetric in its two position arguments.
//   CPFull / CPPsi — center-pivot variants supported only where one of the
//            two offsets is exactly zero; all other weights are identically
//            zero. CPPsi keys both halves by the norm of the nonzero half,
//            which makes the two half-kernels identical (and coincides with
//            a hypothetical CPIso).
enum class Scheme { Full, Iso, Psi, CPFull, CPPsi };

const char* scheme_name(Scheme scheme);
Scheme scheme_from_name(const std::string& name);

struct KernelDims {
  int h = 1;
  int w = 1;
  int s = 0;  // 0 -> 4D kernel (no scale extent)

  bool six_d() const { return s > 0; }
  // Offsets per side.
  int volume() const { return h * w * (six_d() ? s : 1); }
  void validate() const;
  bool operator==(const KernelDims&) const = default;
};

// Maps every offset pair (z, z') in the full window domain to a dense
// parameter slot, or to -1 where a center-pivot scheme carries no weight.
struct KernelIndexMap {
  Scheme scheme = Scheme::Full;
  KernelDims dims;
  std::vector<std::int32_t> slot;   // volume()^2 entries, pair-major (z, z')
  std::vector<std::int32_t> share;  // per-slot count of pairs mapped to it
  int zero_slot = 0;                // slot of the (z, z') = (0, 0) pair

  int param_count() const { return static_cast<int>(share.size()); }
  std::size_t pair_count() const { return slot.size(); }
};

KernelIndexMap build_index_map(Scheme scheme, KernelDims dims);
int param_count(Scheme scheme, KernelDims dims);

// One shared-parameter kernel: flat parameter vector plus layer bias.
// The dense weight of a supported pair is params[slot] / share[slot]; the
// normalization keeps loss-gradient magnitudes even across slots of very
// different multiplicity.
class SharedKernel {
public:
  SharedKernel(Scheme scheme, KernelDims dims);

  // Seeded init: per-slot zero-mean draw scaled by the slot's share count
  // (so materialized magnitudes are scheme-independent), plus a positive
  // boost on the zero-offset slot seeding an identity-like vote.
  static SharedKernel initialized(Scheme scheme, KernelDims dims,
                                  std::uint64_t seed, double spread,
                                  double center_boost);

  Scheme scheme() const { return map_.scheme; }
  const KernelDims& dims() const { return map_.dims; }
  const KernelIndexMap& map() const { return map_; }
  int param_count() const { return map_.param_count(); }

  std::vector<double> params;
  double bias = 0.0;

private:
  KernelIndexMap map_;
};

// Dense kernel over the full offset-pair domain: rank 6 (h,w,s,h,w,s) for 6D
// dims, rank 4 (h,w,h,w) otherwise. Unsupported pairs materialize as 0.
Tensor materialize(const SharedKernel& kernel);

// Adjoint of materialize composed with an inner product: folds a dense-kernel
// gradient back onto parameter slots (share-count normalized).
std::vector<double> scatter_grad(const SharedKernel& kernel, const Tensor& dense_grad);

struct KernelWeightMap {
  Tensor weights;  // rank-4 (h,w,h,w)
  std::string label;
};

// Figure-style decomposition of a kernel into rank-4 maps: a single map for
// 4D kernels; per |ds| for Iso; per scale class (|ds|, {|zs|,|zs'|}) for Psi;
// per ordered (zs, zs') pair for Full and the center-pivot schemes (CP maps
// skip scale pairs with no supported weight).
std::vector<KernelWeightMap> export_weight_maps(const SharedKernel& kernel);

}  // namespace chm
