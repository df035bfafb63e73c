#include "core/kernel.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <map>

#include "core/rng.hpp"

namespace chm {

const char* scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::Full: return "full";
    case Scheme::Iso: return "iso";
    case Scheme::Psi: return "psi";
    case Scheme::CPFull: return "cp_full";
    case Scheme::CPPsi: return "cp_psi";
  }
  return "?";
}

Scheme scheme_from_name(const std::string& name) {
  if (name == "full") return Scheme::Full;
  if (name == "iso") return Scheme::Iso;
  if (name == "psi") return Scheme::Psi;
  if (name == "cp_full") return Scheme::CPFull;
  if (name == "cp_psi") return Scheme::CPPsi;
  fail(ErrorCode::InvalidArgument, "unknown kernel scheme: " + name);
}

void KernelDims::validate() const {
  require(h >= 1 && w >= 1 && h % 2 == 1 && w % 2 == 1, ErrorCode::InvalidArgument,
          "kernel extents must be odd positive integers");
  require(s == 0 || (s >= 1 && s % 2 == 1), ErrorCode::InvalidArgument,
          "scale extent must be an odd positive integer (or absent)");
}

namespace {

struct Off {
  int y, x, s;
  bool zero() const { return y == 0 && x == 0 && s == 0; }
};

int sq_xy(const Off& o) { return o.y * o.y + o.x * o.x; }

std::vector<Off> half_domain(const KernelDims& d) {
  const int rh = d.h / 2, rw = d.w / 2, rs = d.six_d() ? d.s / 2 : 0;
  std::vector<Off> out;
  out.reserve(static_cast<std::size_t>(d.volume()));
  for (int y = -rh; y <= rh; ++y) {
    for (int x = -rw; x <= rw; ++x) {
      for (int s = -rs; s <= rs; ++s) out.push_back({y, x, s});
    }
  }
  return out;
}

using Key = std::array<int, 6>;

Key sharing_key(Scheme scheme, const Off& z, const Off& zp, int zi, int zpi) {
  switch (scheme) {
    case Scheme::Full:
      return {zi, zpi, 0, 0, 0, 0};
    case Scheme::Iso: {
      const Off d{zp.y - z.y, zp.x - z.x, zp.s - z.s};
      return {sq_xy(d), std::abs(d.s), 0, 0, 0, 0};
    }
    case Scheme::Psi: {
      // Squared spatial norms and |scale| offsets are exact integers, so key
      // equality is exact. Endpoint norms are unordered within each group.
      const Off d{zp.y - z.y, zp.x - z.x, zp.s - z.s};
      const int a = sq_xy(z), b = sq_xy(zp);
      const int u = std::abs(z.s), v = std::abs(zp.s);
      return {sq_xy(d),      std::abs(d.s),   std::min(a, b),
              std::max(a, b), std::min(u, v), std::max(u, v)};
    }
    case Scheme::CPPsi: {
      const Off& nz = z.zero() ? zp : z;
      return {sq_xy(nz), std::abs(nz.s), 0, 0, 0, 0};
    }
    case Scheme::CPFull: {
      // Disjoint slot ranges per side; the all-zero pair lands on the z side.
      if (z.zero()) return {0, zpi, 0, 0, 0, 0};
      return {1, zi, 0, 0, 0, 0};
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown scheme");
}

bool is_cp(Scheme scheme) {
  return scheme == Scheme::CPFull || scheme == Scheme::CPPsi;
}

}  // namespace

KernelIndexMap build_index_map(Scheme scheme, KernelDims dims) {
  dims.validate();
  const auto offs = half_domain(dims);
  const int vol = static_cast<int>(offs.size());

  KernelIndexMap m;
  m.scheme = scheme;
  m.dims = dims;
  m.slot.assign(static_cast<std::size_t>(vol) * vol, -1);

  const bool cp = is_cp(scheme);
  std::map<Key, std::int32_t> slots;  // ids assigned in pair iteration order
  for (int zi = 0; zi < vol; ++zi) {
    for (int zpi = 0; zpi < vol; ++zpi) {
      if (cp && !offs[zi].zero() && !offs[zpi].zero()) continue;
      const Key key = sharing_key(scheme, offs[zi], offs[zpi], zi, zpi);
      const auto [it, inserted] =
          slots.try_emplace(key, static_cast<std::int32_t>(slots.size()));
      m.slot[static_cast<std::size_t>(zi) * vol + zpi] = it->second;
    }
  }
  m.share.assign(slots.size(), 0);
  for (const std::int32_t s : m.slot) {
    if (s >= 0) ++m.share[static_cast<std::size_t>(s)];
  }

  int center = 0;
  for (int i = 0; i < vol; ++i) {
    if (offs[static_cast<std::size_t>(i)].zero()) center = i;
  }
  m.zero_slot = m.slot[static_cast<std::size_t>(center) * vol + center];
  return m;
}

int param_count(Scheme scheme, KernelDims dims) {
  return build_index_map(scheme, dims).param_count();
}

SharedKernel::SharedKernel(Scheme scheme, KernelDims dims)
    : map_(build_index_map(scheme, dims)) {
  params.assign(static_cast<std::size_t>(map_.param_count()), 0.0);
}

SharedKernel SharedKernel::initialized(Scheme scheme, KernelDims dims,
                                       std::uint64_t seed, double spread,
                                       double center_boost) {
  SharedKernel k(scheme, dims);
  Rng rng(seed);
  for (std::size_t i = 0; i < k.params.size(); ++i) {
    k.params[i] = k.map_.share[i] * (spread * rng.normal());
  }
  const auto z = static_cast<std::size_t>(k.map_.zero_slot);
  k.params[z] += k.map_.share[z] * center_boost;
  k.bias = 0.0;
  return k;
}

Tensor materialize(const SharedKernel& kernel) {
  const KernelIndexMap& m = kernel.map();
  require(kernel.params.size() == static_cast<std::size_t>(m.param_count()),
          ErrorCode::InvalidArgument, "parameter vector length mismatch");
  const KernelDims& d = m.dims;
  Tensor dense(d.six_d() ? std::vector<int>{d.h, d.w, d.s, d.h, d.w, d.s}
                         : std::vector<int>{d.h, d.w, d.h, d.w});
  for (std::size_t p = 0; p < m.slot.size(); ++p) {
    const std::int32_t s = m.slot[p];
    if (s >= 0) {
      dense[p] = kernel.params[static_cast<std::size_t>(s)] /
                 m.share[static_cast<std::size_t>(s)];
    }
  }
  return dense;
}

std::vector<double> scatter_grad(const SharedKernel& kernel, const Tensor& dense_grad) {
  const KernelIndexMap& m = kernel.map();
  require(dense_grad.size() == m.pair_count(), ErrorCode::InvalidArgument,
          "dense gradient shape mismatch");
  std::vector<double> grad(static_cast<std::size_t>(m.param_count()), 0.0);
  for (std::size_t p = 0; p < m.slot.size(); ++p) {
    const std::int32_t s = m.slot[p];
    if (s >= 0) {
      grad[static_cast<std::size_t>(s)] +=
          dense_grad[p] / m.share[static_cast<std::size_t>(s)];
    }
  }
  return grad;
}

namespace {

// 4D slice of a rank-6 dense kernel at fixed (zs, zps), indices unshifted.
Tensor scale_slice(const Tensor& dense, const KernelDims& d, int zs, int zps) {
  const int rs = d.s / 2;
  Tensor out({d.h, d.w, d.h, d.w});
  for (int a = 0; a < d.h; ++a)
    for (int b = 0; b < d.w; ++b)
      for (int c = 0; c < d.h; ++c)
        for (int e = 0; e < d.w; ++e)
          out(a, b, c, e) = dense(a, b, zs + rs, c, e, zps + rs);
  return out;
}

}  // namespace

std::vector<KernelWeightMap> export_weight_maps(const SharedKernel& kernel) {
  const KernelDims& d = kernel.dims();
  const Tensor dense = materialize(kernel);
  std::vector<KernelWeightMap> maps;
  if (!d.six_d()) {
    maps.push_back({dense, "4d"});
    return maps;
  }
  const int rs = d.s / 2;
  switch (kernel.scheme()) {
    case Scheme::Iso:
      for (int ads = 0; ads <= 2 * rs; ++ads) {
        // Representative scale pair with |zps - zs| == ads.
        maps.push_back({scale_slice(dense, d, -rs, -rs + ads),
                        "|ds|=" + std::to_string(ads)});
      }
      break;
    case Scheme::Psi: {
      std::map<std::array<int, 3>, bool> seen;
      for (int zs = -rs; zs <= rs; ++zs) {
        for (int zps = -rs; zps <= rs; ++zps) {
          const std::array<int, 3> cls = {std::abs(zps - zs),
                                          std::min(std::abs(zs), std::abs(zps)),
                                          std::max(std::abs(zs), std::abs(zps))};
          if (seen.try_emplace(cls, true).second) {
            maps.push_back({scale_slice(dense, d, zs, zps),
                            "|ds|=" + std::to_string(cls[0]) + ",|zs|={" +
                                std::to_string(cls[1]) + "," +
                                std::to_string(cls[2]) + "}"});
          }
        }
      }
      break;
    }
    case Scheme::Full:
    case Scheme::CPFull:
    case Scheme::CPPsi:
      for (int zs = -rs; zs <= rs; ++zs) {
        for (int zps = -rs; zps <= rs; ++zps) {
          if (is_cp(kernel.scheme()) && zs != 0 && zps != 0) continue;  // no support
          maps.push_back({scale_slice(dense, d, zs, zps),
                          "zs=" + std::to_string(zs) + ",zs'=" + std::to_string(zps)});
        }
      }
      break;
  }
  return maps;
}

}  // namespace chm
