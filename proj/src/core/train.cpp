#include "core/train.hpp"

#include <algorithm>
#include <cmath>

namespace chm {

std::vector<ParamRef> param_refs(ModelParams& model, bool include_theta) {
  std::vector<ParamRef> refs;
  for (std::size_t l = 0; l < model.stack.k6d.size(); ++l) {
    SharedKernel& k = model.stack.k6d[l];
    refs.push_back({"k6d." + std::to_string(l) + ".params", k.params.data(), k.params.size()});
    refs.push_back({"k6d." + std::to_string(l) + ".bias", &k.bias, 1});
  }
  refs.push_back({"k4d.params", model.stack.k4d.params.data(), model.stack.k4d.params.size()});
  refs.push_back({"k4d.bias", &model.stack.k4d.bias, 1});
  if (include_theta) {
    for (std::size_t l = 0; l < model.proj.size(); ++l) {
      for (std::size_t s = 0; s < model.proj[l].scales.size(); ++s) {
        ScaleProjection& sp = model.proj[l].scales[s];
        const std::string base = "theta." + std::to_string(l) + "." + std::to_string(s);
        refs.push_back({base + ".weight", sp.weight.data(), sp.weight.size()});
        refs.push_back({base + ".bias", sp.bias.data(), sp.bias.size()});
      }
    }
  }
  return refs;
}

PipelineEval pipeline_forward(const TrainingPair& pair, const ModelParams& model,
                              const PyramidConfig& cfg, const FlowParams& fp) {
  PipelineEval ev;
  ev.trace = chmnet_forward(pair.levels, model.stack, cfg, model.proj);
  ev.soft = kernel_soft_argmax(ev.trace.refined, fp.sigma_g);
  ev.flow = form_flow(ev.soft.chat);
  ev.pred = transfer_keypoints(ev.flow, pair.annotations, fp.tau);
  ev.loss = epe_loss(ev.pred, pair.annotations.trg_kps, nullptr);
  require(std::isfinite(ev.loss), ErrorCode::Numeric,
          "pipeline produced a non-finite loss");
  return ev;
}

namespace {

void check_finite(const std::string& name, const std::vector<double>& values) {
  for (double v : values) {
    require(std::isfinite(v), ErrorCode::Numeric,
            "non-finite gradient for " + name);
  }
}

void accumulate(GradientMap& grads, const std::string& name,
                const std::vector<double>& values) {
  auto [it, inserted] = grads.try_emplace(name, values);
  if (!inserted) {
    for (std::size_t i = 0; i < values.size(); ++i) it->second[i] += values[i];
  }
}

}  // namespace

double forward_backward(const TrainingPair& pair, const ModelParams& model,
                        const PyramidConfig& cfg, const FlowParams& fp,
                        bool theta_grads, GradientMap& grads) {
  const PipelineEval ev = pipeline_forward(pair, model, cfg, fp);
  const bool cp = model.stack.use_cp;

  std::vector<std::array<double, 2>> grad_pred;
  epe_loss(ev.pred, pair.annotations.trg_kps, &grad_pred);
  const Tensor grad_coords = transfer_keypoints_backward(
      pair.annotations, fp.tau, cfg.up_h, cfg.up_w, grad_pred);
  const Tensor grad_chat = form_flow_backward(grad_coords, cfg.up_h, cfg.up_w);
  const Tensor grad_refined =
      kernel_soft_argmax_backward(ev.trace.refined, ev.soft, fp.sigma_g, grad_chat);

  const ConvGrads g4 = cp ? conv_cp_backward(ev.trace.up, model.stack.k4d, grad_refined)
                          : conv_dense_backward(ev.trace.up, model.stack.k4d, grad_refined);
  accumulate(grads, "k4d.params", g4.params);
  accumulate(grads, "k4d.bias", {g4.bias});

  const Tensor grad_sig =
      resize_4d_adjoint(g4.input, cfg.base_h, cfg.base_w, cfg.base_h, cfg.base_w);
  const Tensor grad_fused = sigmoid_backward(ev.trace.sig, grad_sig);

  for (std::size_t l = 0; l < ev.trace.levels.size(); ++l) {
    const LevelTrace& lt = ev.trace.levels[l];
    // Level fusion is a plain sum, so each level sees the fused gradient.
    const Tensor grad_conv6 = scale_maxpool_backward(lt.pool, grad_fused);
    const ConvGrads g6 = cp
        ? conv_cp_backward(lt.corr6, model.stack.k6d[l], grad_conv6)
        : conv_dense_backward(lt.corr6, model.stack.k6d[l], grad_conv6);
    const std::string base = "k6d." + std::to_string(l);
    accumulate(grads, base + ".params", g6.params);
    accumulate(grads, base + ".bias", {g6.bias});

    if (theta_grads) {
      std::vector<Tensor> src_feats, trg_feats;
      for (const auto& ps : lt.src_scales) src_feats.push_back(ps.features);
      for (const auto& ps : lt.trg_scales) trg_feats.push_back(ps.features);
      std::vector<Tensor> grad_src, grad_trg;
      correlation_6d_backward(src_feats, trg_feats, cfg, g6.input, grad_src, grad_trg);
      for (std::size_t s = 0; s < lt.src_scales.size(); ++s) {
        const std::string tbase = "theta." + std::to_string(l) + "." + std::to_string(s);
        // Theta is shared between the two images; both contributions add up.
        for (const auto& [scale, gfeat] :
             {std::pair{&lt.src_scales[s], &grad_src[s]},
              std::pair{&lt.trg_scales[s], &grad_trg[s]}}) {
          const Tensor& rin = scale->resized_input;
          const Tensor gconv =
              resize_bilinear_2d_adjoint(*gfeat, rin.dim(1), rin.dim(2));
          const Conv3x3Grads tg =
              conv3x3_backward(rin, model.proj[l].scales[s], gconv);
          accumulate(grads, tbase + ".weight", tg.weight.values());
          accumulate(grads, tbase + ".bias", tg.bias);
        }
      }
    }
  }

  for (const auto& [name, values] : grads) check_finite(name, values);
  return ev.loss;
}

GradReport check_gradients(const TrainingPair& pair, ModelParams& model,
                           const PyramidConfig& cfg, const FlowParams& fp,
                           bool include_theta, double epsilon, double tolerance,
                           const std::vector<std::string>* subset) {
  GradientMap grads;
  forward_backward(pair, model, cfg, fp, include_theta, grads);

  GradReport report;
  report.epsilon = epsilon;
  report.tolerance = tolerance;
  for (ParamRef& ref : param_refs(model, include_theta)) {
    if (subset &&
        std::find(subset->begin(), subset->end(), ref.name) == subset->end()) {
      continue;
    }
    const std::vector<double>& analytic = grads.at(ref.name);
    GradCheckRow row{ref.name, 0.0, true};
    for (std::size_t i = 0; i < ref.size; ++i) {
      const double keep = ref.data[i];
      ref.data[i] = keep + epsilon;
      const double lp = pipeline_forward(pair, model, cfg, fp).loss;
      ref.data[i] = keep - epsilon;
      const double lm = pipeline_forward(pair, model, cfg, fp).loss;
      ref.data[i] = keep;
      const double fd = (lp - lm) / (2.0 * epsilon);
      const double rel = std::abs(fd - analytic[i]) /
                         std::max({std::abs(fd), std::abs(analytic[i]), 1e-12});
      row.max_rel_err = std::max(row.max_rel_err, rel);
    }
    row.pass = row.max_rel_err <= tolerance;
    report.pass = report.pass && row.pass;
    report.rows.push_back(std::move(row));
  }
  return report;
}

TrainResult train(const std::vector<TrainingPair>& pairs, ModelParams& model,
                  const PyramidConfig& cfg, const FlowParams& fp,
                  const OptimizerConfig& opt, int steps) {
  require(!pairs.empty(), ErrorCode::InvalidArgument,
          "training needs at least one pair");
  require(steps >= 0, ErrorCode::InvalidArgument, "negative step count");

  auto refs = param_refs(model, model.train_theta);
  std::vector<std::vector<double>> m1(refs.size()), m2(refs.size());
  for (std::size_t r = 0; r < refs.size(); ++r) {
    m1[r].assign(refs[r].size, 0.0);
    m2[r].assign(refs[r].size, 0.0);
  }

  TrainResult result;
  const double inv_batch = 1.0 / static_cast<double>(pairs.size());
  for (int step = 1; step <= steps; ++step) {
    GradientMap grads;
    double loss = 0.0;
    for (const TrainingPair& pair : pairs) {
      loss += forward_backward(pair, model, cfg, fp, model.train_theta, grads);
    }
    result.loss_trace.push_back(loss * inv_batch);

    const double bc1 = 1.0 - std::pow(opt.beta1, step);
    const double bc2 = 1.0 - std::pow(opt.beta2, step);
    for (std::size_t r = 0; r < refs.size(); ++r) {
      const std::vector<double>& g = grads.at(refs[r].name);
      for (std::size_t i = 0; i < refs[r].size; ++i) {
        const double gi = g[i] * inv_batch;
        m1[r][i] = opt.beta1 * m1[r][i] + (1.0 - opt.beta1) * gi;
        m2[r][i] = opt.beta2 * m2[r][i] + (1.0 - opt.beta2) * gi * gi;
        const double mhat = m1[r][i] / bc1;
        const double vhat = m2[r][i] / bc2;
        refs[r].data[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        require(std::isfinite(refs[r].data[i]), ErrorCode::Numeric,
                "training diverged at step " + std::to_string(step));
      }
    }
  }
  return result;
}

}  // namespace chm
