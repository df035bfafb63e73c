#include "core/matching.hpp"

#include <cmath>

namespace chm {

Tensor conv3x3_same(const Tensor& in, const ScaleProjection& proj) {
  require(in.rank() == 3, ErrorCode::InvalidArgument,
          "feature map must be [C, h, w]");
  const Tensor& w = proj.weight;
  require(w.rank() == 4 && w.dim(2) == 3 && w.dim(3) == 3,
          ErrorCode::InvalidArgument, "projection weight must be [Cout, Cin, 3, 3]");
  require(w.dim(1) == in.dim(0), ErrorCode::InvalidArgument,
          "projection input-channel mismatch");
  require(static_cast<int>(proj.bias.size()) == w.dim(0),
          ErrorCode::InvalidArgument, "projection bias length mismatch");
  const int co = w.dim(0), ci = in.dim(0), h = in.dim(1), wd = in.dim(2);
  Tensor out({co, h, wd});
  for (int oc = 0; oc < co; ++oc)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < wd; ++x) {
        double acc = proj.bias[static_cast<std::size_t>(oc)];
        for (int ic = 0; ic < ci; ++ic)
          for (int dy = -1; dy <= 1; ++dy) {
            const int yy = y + dy;
            if (yy < 0 || yy >= h) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const int xx = x + dx;
              if (xx < 0 || xx >= wd) continue;
              acc += in(ic, yy, xx) * w(oc, ic, dy + 1, dx + 1);
            }
          }
        out(oc, y, x) = acc;
      }
  return out;
}

Conv3x3Grads conv3x3_backward(const Tensor& in, const ScaleProjection& proj,
                              const Tensor& upstream) {
  const Tensor& w = proj.weight;
  require(upstream.rank() == 3 && upstream.dim(0) == w.dim(0) &&
              upstream.dim(1) == in.dim(1) && upstream.dim(2) == in.dim(2),
          ErrorCode::InvalidArgument, "conv3x3 upstream shape mismatch");
  const int co = w.dim(0), ci = in.dim(0), h = in.dim(1), wd = in.dim(2);
  Conv3x3Grads g;
  g.weight = Tensor(w.shape());
  g.bias.assign(static_cast<std::size_t>(co), 0.0);
  for (int oc = 0; oc < co; ++oc)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < wd; ++x) {
        const double u = upstream(oc, y, x);
        g.bias[static_cast<std::size_t>(oc)] += u;
        if (u == 0.0) continue;
        for (int ic = 0; ic < ci; ++ic)
          for (int dy = -1; dy <= 1; ++dy) {
            const int yy = y + dy;
            if (yy < 0 || yy >= h) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const int xx = x + dx;
              if (xx < 0 || xx >= wd) continue;
              g.weight(oc, ic, dy + 1, dx + 1) += u * in(ic, yy, xx);
            }
          }
      }
  return g;
}

std::vector<ProjectedScale> project_features(const FeatureLevel& level,
                                             const PyramidConfig& cfg,
                                             const ProjectionParams& proj) {
  require(level.tensor.rank() == 3, ErrorCode::InvalidArgument,
          "feature level must be [C, h, w]");
  require(static_cast<int>(proj.scales.size()) == cfg.scale_count,
          ErrorCode::InvalidArgument, "projection scale count mismatch");
  const int h = level.tensor.dim(1), w = level.tensor.dim(2);
  std::vector<ProjectedScale> out;
  out.reserve(static_cast<std::size_t>(cfg.scale_count));
  for (int s = 0; s < cfg.scale_count; ++s) {
    const double f = cfg.scale_factors[static_cast<std::size_t>(s)];
    const int sh = std::max(1, static_cast<int>(std::lround(h * f)));
    const int sw = std::max(1, static_cast<int>(std::lround(w * f)));
    Tensor resized = resize_bilinear_2d(level.tensor, sh, sw);
    Tensor conv = conv3x3_same(resized, proj.scales[static_cast<std::size_t>(s)]);
    Tensor based = resize_bilinear_2d(conv, cfg.base_h, cfg.base_w);
    out.push_back({std::move(resized), std::move(based)});
  }
  return out;
}

namespace {

std::vector<double> feature_norms(const Tensor& f) {
  const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> norms(plane, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    const double* p = f.data() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i) norms[i] += p[i] * p[i];
  }
  for (double& v : norms) v = std::sqrt(v);
  return norms;
}

}  // namespace

Tensor correlation_4d(const Tensor& src, const Tensor& trg) {
  require(src.rank() == 3 && trg.rank() == 3, ErrorCode::InvalidArgument,
          "correlation inputs must be [C, h, w]");
  require(src.dim(0) == trg.dim(0), ErrorCode::InvalidArgument,
          "correlation channel mismatch");
  const int c = src.dim(0);
  const int h1 = src.dim(1), w1 = src.dim(2);
  const int h2 = trg.dim(1), w2 = trg.dim(2);
  const std::size_t p1 = static_cast<std::size_t>(h1) * w1;
  const std::size_t p2 = static_cast<std::size_t>(h2) * w2;
  const auto n1 = feature_norms(src);
  const auto n2 = feature_norms(trg);
  Tensor out({h1, w1, h2, w2});
  double* O = out.data();
  for (std::size_t a = 0; a < p1; ++a) {
    for (std::size_t b = 0; b < p2; ++b) {
      double dot = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        dot += src.data()[ch * p1 + a] * trg.data()[ch * p2 + b];
      }
      const double denom = n1[a] * n2[b];
      double v = denom > 0.0 ? dot / denom : 0.0;  // zero-norm -> no evidence
      O[a * p2 + b] = v > 0.0 ? v : 0.0;
    }
  }
  return out;
}

Tensor correlation_6d(const std::vector<Tensor>& src, const std::vector<Tensor>& trg,
                      const PyramidConfig& cfg) {
  require(!src.empty() && src.size() == trg.size(), ErrorCode::InvalidArgument,
          "correlation_6d needs equal nonempty scale lists");
  const int S = static_cast<int>(src.size());
  const int H = cfg.base_h, W = cfg.base_w;
  Tensor c6({H, W, S, H, W, S});
  for (int m = 0; m < S; ++m) {
    for (int n = 0; n < S; ++n) {
      Tensor slab = correlation_4d(src[static_cast<std::size_t>(m)],
                                   trg[static_cast<std::size_t>(n)]);
      if (slab.dim(0) != H || slab.dim(1) != W || slab.dim(2) != H || slab.dim(3) != W) {
        slab = resize_4d(slab, H, W, H, W);
      }
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int y2 = 0; y2 < H; ++y2)
            for (int x2 = 0; x2 < W; ++x2)
              c6(y, x, m, y2, x2, n) = slab(y, x, y2, x2);
    }
  }
  return c6;
}

void correlation_6d_backward(const std::vector<Tensor>& src,
                             const std::vector<Tensor>& trg,
                             const PyramidConfig& cfg, const Tensor& grad_c6,
                             std::vector<Tensor>& grad_src,
                             std::vector<Tensor>& grad_trg) {
  const int S = static_cast<int>(src.size());
  const int H = cfg.base_h, W = cfg.base_w;
  require(grad_c6.rank() == 6 && grad_c6.dim(2) == S && grad_c6.dim(5) == S,
          ErrorCode::InvalidArgument, "correlation gradient shape mismatch");
  grad_src.clear();
  grad_trg.clear();
  for (int s = 0; s < S; ++s) {
    grad_src.emplace_back(src[static_cast<std::size_t>(s)].shape());
    grad_trg.emplace_back(trg[static_cast<std::size_t>(s)].shape());
  }
  for (int m = 0; m < S; ++m) {
    const Tensor& fs = src[static_cast<std::size_t>(m)];
    const int c = fs.dim(0), h1 = fs.dim(1), w1 = fs.dim(2);
    const std::size_t p1 = static_cast<std::size_t>(h1) * w1;
    const auto n1 = feature_norms(fs);
    for (int n = 0; n < S; ++n) {
      const Tensor& ft = trg[static_cast<std::size_t>(n)];
      const int h2 = ft.dim(1), w2 = ft.dim(2);
      const std::size_t p2 = static_cast<std::size_t>(h2) * w2;
      const auto n2 = feature_norms(ft);

      // Pull this (m,n) slab's gradient out of the 6D tensor, then undo the
      // slab resize if one happened in the forward pass.
      Tensor gslab({H, W, H, W});
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int y2 = 0; y2 < H; ++y2)
            for (int x2 = 0; x2 < W; ++x2)
              gslab(y, x, y2, x2) = grad_c6(y, x, m, y2, x2, n);
      if (h1 != H || w1 != W || h2 != H || w2 != W) {
        gslab = resize_4d_adjoint(gslab, h1, w1, h2, w2);
      }

      Tensor& gs = grad_src[static_cast<std::size_t>(m)];
      Tensor& gt = grad_trg[static_cast<std::size_t>(n)];
      for (std::size_t a = 0; a < p1; ++a) {
        if (n1[a] == 0.0) continue;
        for (std::size_t b = 0; b < p2; ++b) {
          if (n2[b] == 0.0) continue;
          const double g = gslab[a * p2 + b];
          if (g == 0.0) continue;
          double dot = 0.0;
          for (int ch = 0; ch < c; ++ch) {
            dot += fs.data()[ch * p1 + a] * ft.data()[ch * p2 + b];
          }
          const double denom = n1[a] * n2[b];
          const double cosv = dot / denom;
          if (cosv <= 0.0) continue;  // ReLU inactive
          for (int ch = 0; ch < c; ++ch) {
            const double sv = fs.data()[ch * p1 + a];
            const double tv = ft.data()[ch * p2 + b];
            gs.data()[ch * p1 + a] += g * (tv / denom - cosv * sv / (n1[a] * n1[a]));
            gt.data()[ch * p2 + b] += g * (sv / denom - cosv * tv / (n2[b] * n2[b]));
          }
        }
      }
    }
  }
}

ForwardTrace chmnet_forward(const std::vector<LevelPair>& levels,
                            const ChmStack& stack, const PyramidConfig& cfg,
                            const std::vector<ProjectionParams>& proj) {
  require(levels.size() == 1 || levels.size() == 2, ErrorCode::InvalidArgument,
          "pipeline supports 1 or 2 feature levels");
  require(stack.k6d.size() == levels.size(), ErrorCode::InvalidArgument,
          "one 6D kernel required per level");
  require(proj.size() == levels.size(), ErrorCode::InvalidArgument,
          "one projection set required per level");

  ForwardTrace tr;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    LevelTrace lt;
    lt.src_scales = project_features(levels[l].src, cfg, proj[l]);
    lt.trg_scales = project_features(levels[l].trg, cfg, proj[l]);
    std::vector<Tensor> s, t;
    for (const auto& ps : lt.src_scales) s.push_back(ps.features);
    for (const auto& ps : lt.trg_scales) t.push_back(ps.features);
    lt.corr6 = correlation_6d(s, t, cfg);
    lt.conv6 = stack.use_cp ? conv_cp(lt.corr6, stack.k6d[l])
                            : conv_dense(lt.corr6, stack.k6d[l]);
    lt.pool = scale_maxpool(lt.conv6);
    tr.levels.push_back(std::move(lt));
  }

  tr.fused = tr.levels[0].pool.pooled;
  for (std::size_t l = 1; l < tr.levels.size(); ++l) {
    require(tr.levels[l].pool.pooled.same_shape(tr.fused), ErrorCode::InvalidArgument,
            "level outputs disagree in shape");
    for (std::size_t i = 0; i < tr.fused.size(); ++i) {
      tr.fused[i] += tr.levels[l].pool.pooled[i];
    }
  }
  tr.sig = sigmoid(tr.fused);
  tr.up = resize_4d(tr.sig, cfg.up_h, cfg.up_w, cfg.up_h, cfg.up_w);
  tr.refined = stack.use_cp ? conv_cp(tr.up, stack.k4d)
                            : conv_dense(tr.up, stack.k4d);
  return tr;
}

RhmResult rhm_vote(const Tensor& c4, double sigma) {
  require(c4.rank() == 4, ErrorCode::InvalidArgument, "rhm_vote expects a rank-4 tensor");
  const int H = c4.dim(0), W = c4.dim(1), H2 = c4.dim(2), W2 = c4.dim(3);
  const int OH = H + H2 - 1, OW = W + W2 - 1;

  // Mass per observed offset first; the kernel then smears offsets, which is
  // O(offsets^2) instead of O(matches * offsets).
  Tensor obs({OH, OW});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int y2 = 0; y2 < H2; ++y2)
        for (int x2 = 0; x2 < W2; ++x2)
          obs(y2 - y + H - 1, x2 - x + W - 1) += c4(y, x, y2, x2);

  const auto kval = [sigma](int d2) {
    if (sigma <= 0.0) return d2 == 0 ? 1.0 : 0.0;
    return std::exp(-d2 / (2.0 * sigma * sigma));
  };

  RhmResult r;
  r.hough = Tensor({OH, OW});
  for (int hy = 0; hy < OH; ++hy)
    for (int hx = 0; hx < OW; ++hx) {
      double acc = 0.0;
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          const double mass = obs(oy, ox);
          if (mass == 0.0) continue;
          const int dy = oy - hy, dx = ox - hx;
          acc += mass * kval(dy * dy + dx * dx);
        }
      r.hough(hy, hx) = acc;
    }

  r.rescored = Tensor(c4.shape());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int y2 = 0; y2 < H2; ++y2)
        for (int x2 = 0; x2 < W2; ++x2)
          r.rescored(y, x, y2, x2) =
              c4(y, x, y2, x2) * r.hough(y2 - y + H - 1, x2 - x + W - 1);
  return r;
}

double local_vote_oracle(const Tensor& c, std::span<const int> x,
                         std::span<const int> xp, const KernelDims& window,
                         std::span<const int> h,
                         const std::function<double(int, int)>& kiso) {
  window.validate();
  const bool six = window.six_d();
  require(c.rank() == (six ? 6 : 4), ErrorCode::InvalidArgument,
          "window dimensionality does not match the tensor rank");
  const std::size_t nc = six ? 3u : 2u;
  require(x.size() == nc && xp.size() == nc && h.size() == nc,
          ErrorCode::InvalidArgument, "position/offset component count mismatch");

  const int rh = window.h / 2, rw = window.w / 2, rs = six ? window.s / 2 : 0;
  const int H = c.dim(0), W = c.dim(1);
  const int S = six ? c.dim(2) : 1;
  const int H2 = c.dim(six ? 3 : 2), W2 = c.dim(six ? 4 : 3);
  const int S2 = six ? c.dim(5) : 1;
  const int xs = six ? x[2] : 0, xps = six ? xp[2] : 0, hs = six ? h[2] : 0;

  double total = 0.0;
  for (int dy = -rh; dy <= rh; ++dy) {
    const int py = x[0] + dy;
    if (py < 0 || py >= H) continue;
    for (int dx = -rw; dx <= rw; ++dx) {
      const int px = x[1] + dx;
      if (px < 0 || px >= W) continue;
      for (int ds = -rs; ds <= rs; ++ds) {
        const int ps = xs + ds;
        if (ps < 0 || ps >= S) continue;
        for (int dy2 = -rh; dy2 <= rh; ++dy2) {
          const int qy = xp[0] + dy2;
          if (qy < 0 || qy >= H2) continue;
          for (int dx2 = -rw; dx2 <= rw; ++dx2) {
            const int qx = xp[1] + dx2;
            if (qx < 0 || qx >= W2) continue;
            for (int ds2 = -rs; ds2 <= rs; ++ds2) {
              const int qs = xps + ds2;
              if (qs < 0 || qs >= S2) continue;
              const int vy = dy2 - dy - h[0];
              const int vx = dx2 - dx - h[1];
              const int vs = ds2 - ds - hs;
              const double weight = kiso(vy * vy + vx * vx, std::abs(vs));
              total += weight * (six ? c(py, px, ps, qy, qx, qs)
                                     : c(py, px, qy, qx));
            }
          }
        }
      }
    }
  }
  return total;
}

}  // namespace chm
