#include "core/conv.hpp"

#include <limits>

namespace chm {

namespace {

// A rank-4 input with a 4D kernel shares its row-major layout with a rank-6
// input whose scale dims have extent 1, so one loop nest serves both ranks.
struct LogicalDims {
  int H, W, S, H2, W2, S2;
  int kh, kw, ks;
  int rh, rw, rs;
};

LogicalDims logical(const Tensor& c, const SharedKernel& k) {
  const KernelDims& kd = k.dims();
  if (kd.six_d()) {
    require(c.rank() == 6, ErrorCode::InvalidArgument,
            "6D kernel requires a rank-6 correlation tensor");
    return {c.dim(0), c.dim(1), c.dim(2), c.dim(3), c.dim(4), c.dim(5),
            kd.h,     kd.w,     kd.s,     kd.h / 2, kd.w / 2, kd.s / 2};
  }
  require(c.rank() == 4, ErrorCode::InvalidArgument,
          "4D kernel requires a rank-4 correlation tensor");
  return {c.dim(0), c.dim(1), 1, c.dim(2), c.dim(3), 1,
          kd.h,     kd.w,     1, kd.h / 2, kd.w / 2, 0};
}

bool in_range(int v, int n) {
  return static_cast<unsigned>(v) < static_cast<unsigned>(n);
}

}  // namespace

Tensor conv_dense(const Tensor& c, const SharedKernel& k, std::uint64_t* mac_counter) {
  const LogicalDims d = logical(c, k);
  const Tensor dense = materialize(k);
  const double* K = dense.data();
  const double* C = c.data();
  Tensor out(c.shape());
  double* O = out.data();
  const double bias = k.bias;

  const std::size_t t4 = static_cast<std::size_t>(d.S2);
  const std::size_t t3 = t4 * static_cast<std::size_t>(d.W2);
  const std::size_t t2 = t3 * static_cast<std::size_t>(d.H2);
  const std::size_t t1 = t2 * static_cast<std::size_t>(d.S);
  const std::size_t t0 = t1 * static_cast<std::size_t>(d.W);

  std::uint64_t macs = 0;
  std::size_t oi = 0;
  for (int i = 0; i < d.H; ++i)
    for (int j = 0; j < d.W; ++j)
      for (int m = 0; m < d.S; ++m)
        for (int p = 0; p < d.H2; ++p)
          for (int q = 0; q < d.W2; ++q)
            for (int n = 0; n < d.S2; ++n, ++oi) {
              double acc = bias;
              std::size_t kidx = 0;
              for (int dy = -d.rh; dy <= d.rh; ++dy) {
                const int yi = i + dy;
                const bool vy = in_range(yi, d.H);
                for (int dx = -d.rw; dx <= d.rw; ++dx) {
                  const int xj = j + dx;
                  const bool vx = vy && in_range(xj, d.W);
                  for (int ds = -d.rs; ds <= d.rs; ++ds) {
                    const int sm = m + ds;
                    const bool vs = vx && in_range(sm, d.S);
                    const std::size_t cbase =
                        vs ? (yi * t0 + xj * t1 + sm * t2) : 0;
                    for (int dy2 = -d.rh; dy2 <= d.rh; ++dy2) {
                      const int yp = p + dy2;
                      const bool vy2 = vs && in_range(yp, d.H2);
                      for (int dx2 = -d.rw; dx2 <= d.rw; ++dx2) {
                        const int xq = q + dx2;
                        const bool vx2 = vy2 && in_range(xq, d.W2);
                        for (int ds2 = -d.rs; ds2 <= d.rs; ++ds2, ++kidx) {
                          ++macs;
                          const int sn = n + ds2;
                          if (vx2 && in_range(sn, d.S2)) {
                            acc += C[cbase + yp * t3 + xq * t4 + sn] * K[kidx];
                          }
                        }
                      }
                    }
                  }
                }
              }
              O[oi] = acc;
            }
  if (mac_counter) *mac_counter += macs;
  return out;
}

namespace {

struct CpTables {
  std::vector<double> trg_side;  // k(0, z'): weights of the target-subspace conv
  std::vector<double> src_side;  // k(z, 0): source-subspace conv, center zeroed
  std::vector<int> oy, ox, os;   // decoded half-domain offsets
  int center = 0;
};

CpTables cp_tables(const SharedKernel& k, const LogicalDims& d) {
  const Tensor dense = materialize(k);
  const int vol = k.dims().volume();
  CpTables t;
  t.center = (d.rh * d.kw + d.rw) * d.ks + d.rs;
  t.trg_side.resize(static_cast<std::size_t>(vol));
  t.src_side.resize(static_cast<std::size_t>(vol));
  t.oy.resize(static_cast<std::size_t>(vol));
  t.ox.resize(static_cast<std::size_t>(vol));
  t.os.resize(static_cast<std::size_t>(vol));
  int idx = 0;
  for (int dy = -d.rh; dy <= d.rh; ++dy)
    for (int dx = -d.rw; dx <= d.rw; ++dx)
      for (int ds = -d.rs; ds <= d.rs; ++ds, ++idx) {
        t.oy[static_cast<std::size_t>(idx)] = dy;
        t.ox[static_cast<std::size_t>(idx)] = dx;
        t.os[static_cast<std::size_t>(idx)] = ds;
        t.trg_side[static_cast<std::size_t>(idx)] =
            dense[static_cast<std::size_t>(t.center) * vol + idx];
        t.src_side[static_cast<std::size_t>(idx)] =
            dense[static_cast<std::size_t>(idx) * vol + t.center];
      }
  // The (0,0) weight contributes exactly once, through the target side.
  t.src_side[static_cast<std::size_t>(t.center)] = 0.0;
  return t;
}

void require_cp(const SharedKernel& k) {
  require(k.scheme() == Scheme::CPFull || k.scheme() == Scheme::CPPsi,
          ErrorCode::InvalidArgument,
          "center-pivot engine requires a center-pivot kernel scheme");
}

}  // namespace

Tensor conv_cp(const Tensor& c, const SharedKernel& k, std::uint64_t* mac_counter) {
  require_cp(k);
  const LogicalDims d = logical(c, k);
  const CpTables t = cp_tables(k, d);
  const int vol = k.dims().volume();
  const double* C = c.data();
  Tensor out(c.shape());
  double* O = out.data();
  const double bias = k.bias;

  const std::size_t t4 = static_cast<std::size_t>(d.S2);
  const std::size_t t3 = t4 * static_cast<std::size_t>(d.W2);
  const std::size_t t2 = t3 * static_cast<std::size_t>(d.H2);
  const std::size_t t1 = t2 * static_cast<std::size_t>(d.S);
  const std::size_t t0 = t1 * static_cast<std::size_t>(d.W);

  std::uint64_t macs = 0;
  std::size_t oi = 0;
  for (int i = 0; i < d.H; ++i)
    for (int j = 0; j < d.W; ++j)
      for (int m = 0; m < d.S; ++m) {
        const std::size_t src_base = i * t0 + j * t1 + m * t2;
        for (int p = 0; p < d.H2; ++p)
          for (int q = 0; q < d.W2; ++q)
            for (int n = 0; n < d.S2; ++n, ++oi) {
              double acc = bias;
              for (int idx = 0; idx < vol; ++idx) {
                ++macs;
                const int yp = p + t.oy[static_cast<std::size_t>(idx)];
                const int xq = q + t.ox[static_cast<std::size_t>(idx)];
                const int sn = n + t.os[static_cast<std::size_t>(idx)];
                if (in_range(yp, d.H2) && in_range(xq, d.W2) && in_range(sn, d.S2)) {
                  acc += C[src_base + yp * t3 + xq * t4 + sn] *
                         t.trg_side[static_cast<std::size_t>(idx)];
                }
              }
              const std::size_t trg_off = p * t3 + q * t4 + static_cast<std::size_t>(n);
              for (int idx = 0; idx < vol; ++idx) {
                if (idx == t.center) continue;
                ++macs;
                const int yi = i + t.oy[static_cast<std::size_t>(idx)];
                const int xj = j + t.ox[static_cast<std::size_t>(idx)];
                const int sm = m + t.os[static_cast<std::size_t>(idx)];
                if (in_range(yi, d.H) && in_range(xj, d.W) && in_range(sm, d.S)) {
                  acc += C[yi * t0 + xj * t1 + sm * t2 + trg_off] *
                         t.src_side[static_cast<std::size_t>(idx)];
                }
              }
              O[oi] = acc;
            }
      }
  if (mac_counter) *mac_counter += macs;
  return out;
}

ScaleMaxpool scale_maxpool(const Tensor& c6) {
  require(c6.rank() == 6, ErrorCode::InvalidArgument,
          "scale_maxpool expects a rank-6 tensor");
  const int H = c6.dim(0), W = c6.dim(1), S = c6.dim(2);
  const int H2 = c6.dim(3), W2 = c6.dim(4), S2 = c6.dim(5);
  ScaleMaxpool r;
  r.pooled = Tensor({H, W, H2, W2});
  r.arg_src.assign(r.pooled.size(), 0);
  r.arg_trg.assign(r.pooled.size(), 0);
  r.src_scales = S;
  r.trg_scales = S2;
  std::size_t oi = 0;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      for (int p = 0; p < H2; ++p)
        for (int q = 0; q < W2; ++q, ++oi) {
          double best = -std::numeric_limits<double>::infinity();
          int bm = 0, bn = 0;
          // Ascending scan + strict comparison keeps the smallest (m, n) on ties.
          for (int m = 0; m < S; ++m)
            for (int n = 0; n < S2; ++n) {
              const double v = c6(i, j, m, p, q, n);
              if (v > best) {
                best = v;
                bm = m;
                bn = n;
              }
            }
          r.pooled[oi] = best;
          r.arg_src[oi] = bm;
          r.arg_trg[oi] = bn;
        }
  return r;
}

Tensor scale_maxpool_backward(const ScaleMaxpool& pool, const Tensor& upstream) {
  require(upstream.same_shape(pool.pooled), ErrorCode::InvalidArgument,
          "scale_maxpool_backward upstream shape mismatch");
  const int H = pool.pooled.dim(0), W = pool.pooled.dim(1);
  const int H2 = pool.pooled.dim(2), W2 = pool.pooled.dim(3);
  Tensor g6({H, W, pool.src_scales, H2, W2, pool.trg_scales});
  std::size_t oi = 0;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      for (int p = 0; p < H2; ++p)
        for (int q = 0; q < W2; ++q, ++oi) {
          g6(i, j, pool.arg_src[oi], p, q, pool.arg_trg[oi]) += upstream[oi];
        }
  return g6;
}

namespace {

ConvGrads conv_backward_impl(const Tensor& c, const SharedKernel& k,
                             const Tensor& upstream, bool cp) {
  require(upstream.same_shape(c), ErrorCode::InvalidArgument,
          "conv backward upstream shape mismatch");
  const LogicalDims d = logical(c, k);
  const Tensor dense = materialize(k);
  const double* K = dense.data();
  const double* C = c.data();
  const double* U = upstream.data();

  ConvGrads g;
  g.input = Tensor(c.shape());
  Tensor dense_grad(dense.shape());
  double* GI = g.input.data();
  double* DG = dense_grad.data();

  const std::size_t t4 = static_cast<std::size_t>(d.S2);
  const std::size_t t3 = t4 * static_cast<std::size_t>(d.W2);
  const std::size_t t2 = t3 * static_cast<std::size_t>(d.H2);
  const std::size_t t1 = t2 * static_cast<std::size_t>(d.S);
  const std::size_t t0 = t1 * static_cast<std::size_t>(d.W);
  const int vol = k.dims().volume();
  const int center = (d.rh * d.kw + d.rw) * d.ks + d.rs;

  std::size_t oi = 0;
  for (int i = 0; i < d.H; ++i)
    for (int j = 0; j < d.W; ++j)
      for (int m = 0; m < d.S; ++m)
        for (int p = 0; p < d.H2; ++p)
          for (int q = 0; q < d.W2; ++q)
            for (int n = 0; n < d.S2; ++n, ++oi) {
              const double u = U[oi];
              g.bias += u;
              if (u == 0.0) continue;
              std::size_t kidx = 0;
              for (int dy = -d.rh; dy <= d.rh; ++dy) {
                const int yi = i + dy;
                const bool vy = in_range(yi, d.H);
                for (int dx = -d.rw; dx <= d.rw; ++dx) {
                  const int xj = j + dx;
                  const bool vx = vy && in_range(xj, d.W);
                  for (int ds = -d.rs; ds <= d.rs; ++ds) {
                    const int sm = m + ds;
                    const bool vs = vx && in_range(sm, d.S);
                    const int zi = ((dy + d.rh) * d.kw + (dx + d.rw)) * d.ks + (ds + d.rs);
                    const std::size_t cbase = vs ? (yi * t0 + xj * t1 + sm * t2) : 0;
                    for (int dy2 = -d.rh; dy2 <= d.rh; ++dy2) {
                      const int yp = p + dy2;
                      const bool vy2 = vs && in_range(yp, d.H2);
                      for (int dx2 = -d.rw; dx2 <= d.rw; ++dx2) {
                        const int xq = q + dx2;
                        const bool vx2 = vy2 && in_range(xq, d.W2);
                        for (int ds2 = -d.rs; ds2 <= d.rs; ++ds2, ++kidx) {
                          if (cp && zi != center && kidx % vol != static_cast<std::size_t>(center)) {
                            continue;  // off the center-pivot support
                          }
                          const int sn = n + ds2;
                          if (vx2 && in_range(sn, d.S2)) {
                            const std::size_t coff = cbase + yp * t3 + xq * t4 + sn;
                            GI[coff] += u * K[kidx];
                            DG[kidx] += u * C[coff];
                          }
                        }
                      }
                    }
                  }
                }
              }
            }
  g.params = scatter_grad(k, dense_grad);
  return g;
}

}  // namespace

ConvGrads conv_dense_backward(const Tensor& c, const SharedKernel& k,
                              const Tensor& upstream) {
  return conv_backward_impl(c, k, upstream, false);
}

ConvGrads conv_cp_backward(const Tensor& c, const SharedKernel& k,
                           const Tensor& upstream) {
  require_cp(k);
  return conv_backward_impl(c, k, upstream, true);
}

}  // namespace chm
