#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/flow.hpp"
#include "core/matching.hpp"

namespace chm {

struct FlowParams {
  double sigma_g = 5.0;
  double tau = 2.5;
};

// One training example: feature pair per level plus keypoint annotations.
struct TrainingPair {
  std::vector<LevelPair> levels;
  AnnotatedPair annotations;
};

// Every learnable quantity of the pipeline. Projection parameters are kept
// even when frozen; train_theta switches their updates on.
struct ModelParams {
  ChmStack stack;
  std::vector<ProjectionParams> proj;  // one per level, shared by both images
  bool train_theta = false;
};

// Named flat view over a parameter block; order is stable across calls.
struct ParamRef {
  std::string name;
  double* data;
  std::size_t size;
};
std::vector<ParamRef> param_refs(ModelParams& model, bool include_theta);

using GradientMap = std::map<std::string, std::vector<double>>;

struct PipelineEval {
  ForwardTrace trace;
  SoftArgmaxResult soft;
  FlowField flow;
  std::vector<std::array<double, 2>> pred;  // target-image pixels
  double loss = 0.0;
};

PipelineEval pipeline_forward(const TrainingPair& pair, const ModelParams& model,
                              const PyramidConfig& cfg, const FlowParams& fp);

// Loss plus gradients for every kernel parameter and bias (and theta when
// requested). Aborts with a numeric error if anything goes non-finite.
double forward_backward(const TrainingPair& pair, const ModelParams& model,
                        const PyramidConfig& cfg, const FlowParams& fp,
                        bool theta_grads, GradientMap& grads);

struct GradCheckRow {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = true;
};
struct GradReport {
  std::vector<GradCheckRow> rows;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  bool pass = true;
};

// Central finite differences against the analytic gradients, entry by entry.
// `subset` (when non-null) restricts the check to the named parameters; the
// relative error is |a-b| / max(|a|, |b|, 1e-12).
GradReport check_gradients(const TrainingPair& pair, ModelParams& model,
                           const PyramidConfig& cfg, const FlowParams& fp,
                           bool include_theta, double epsilon = 1e-5,
                           double tolerance = 1e-4,
                           const std::vector<std::string>* subset = nullptr);

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainResult {
  std::vector<double> loss_trace;  // full-batch loss before each update
};

// Full-batch adaptive-moment training; deterministic for a fixed seed and
// single-threaded execution. Divergence (non-finite loss, gradient, or
// parameter) aborts with a numeric error.
TrainResult train(const std::vector<TrainingPair>& pairs, ModelParams& model,
                  const PyramidConfig& cfg, const FlowParams& fp,
                  const OptimizerConfig& opt, int steps);

}  // namespace chm
