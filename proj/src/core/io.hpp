#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/kernel.hpp"
#include "core/train.hpp"

namespace chm {

// Binary tensor file: magic "CHT1", u8 rank, rank x u32 little-endian dims,
// then product(dims) x f32 little-endian values, row-major. The declared
// length must match the file size exactly; values are widened to f64 on load.
Tensor load_tensor(const std::string& path);
void save_tensor(const Tensor& t, const std::string& path);

// Run configuration; JSON on disk with strict parsing (unknown keys are
// rejected). The CHM_SEED environment variable overrides the seed at load.
struct RunConfig {
  Scheme scheme = Scheme::Psi;
  KernelDims kernel_6d{5, 5, 3};
  KernelDims kernel_4d{5, 5, 0};
  bool use_cp_engine = false;
  int scale_count = 3;
  std::vector<double> scale_factors = {0.7071067811865475, 1.0, 1.4142135623730951};
  int rho = 4;
  int base_h = 15;
  int base_w = 15;
  int up_h = 30;
  int up_w = 30;
  double sigma_g = 5.0;
  double tau_sampler = 2.5;
  double sigma_rhm = 1.0;
  std::uint64_t seed = 42;
  int levels = 1;
  std::string theta_init = "auto";  // auto | identity | random
  OptimizerConfig optimizer;
  bool train_theta = false;
  double init_spread = 0.05;
  double init_center_boost = 1.0;

  static RunConfig load(const std::string& path);
  void validate() const;
  PyramidConfig pyramid() const;
  FlowParams flow_params() const;
};

// Pair description; JSON on disk, strict. Feature paths are resolved
// relative to the manifest's own directory.
struct PairManifest {
  std::vector<std::string> src_features;
  std::vector<std::string> trg_features;
  AnnotatedPair annotations;

  static PairManifest load(const std::string& path);
};

// Checkpoint directory: manifest.json (scheme, dims, seed, step count, file
// map) plus one tensor file per named parameter block.
void save_checkpoint(const std::string& dir, const RunConfig& cfg,
                     ModelParams& model, int steps);
void load_checkpoint(const std::string& dir, const RunConfig& cfg,
                     ModelParams& model);

}  // namespace chm
