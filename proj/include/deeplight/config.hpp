#pragma once

// Run configuration: one INI document with a section per module.
//
//   [run]         seed, validation_subjects
//   [phantom]     grid, voxel_mm, tr_s, amplitude, noise_sigma, baseline, jitter_voxels,
//                 train_subjects, test_subjects, runs, <state>_center, <state>_radii
//   [preprocess]  fwhm_mm, highpass_cutoff_s, mask_fraction
//   [train]       learning_rate, batch_size, max_epochs, clip_threshold, dropout, patience
//   [lrp]         epsilon, window_lo_s, window_hi_s
//   [glm]         threshold (fdr | p), fdr_rate, p_alpha
//   [searchlight] radius_mm, svm_c, svm_epochs
//   [lasso]       epochs, subjects_per_epoch, batches_per_epoch, batch_size, learning_rate, lambdas
//   [maps]        percentile, fwhm_mm
//
// Lists are comma separated. Unknown sections or keys raise ConfigError.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deeplight/baselines.hpp"
#include "deeplight/lrp.hpp"
#include "deeplight/phantom.hpp"
#include "deeplight/preprocess.hpp"
#include "deeplight/training.hpp"

namespace deeplight {

enum class GlmThreshold { fdr, p };

struct GlmSettings {
  GlmThreshold threshold = GlmThreshold::fdr;
  double fdr_rate = 0.1;
  double p_alpha = 0.005;
};

struct LassoSettings {
  baselines::LassoSgdOptions sgd;
  std::vector<double> lambdas = baselines::group_lambda_grid();
};

struct MapSettings {
  double percentile = 90.0;
  double fwhm_mm = 3.0;
  std::size_t timecourse_run = 2;  // 1-based run whose first block per state feeds the time course
};

struct WindowSettings {
  double lo_s = 5.0;
  double hi_s = 15.0;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t validation_subjects = 1;
  std::size_t init_restarts = 3;
  phantom::PhantomSpec phantom;
  preprocess::PreprocConfig preprocess;
  train::TrainConfig train;
  lrp::LrpConfig lrp;
  WindowSettings window;
  GlmSettings glm;
  baselines::SearchlightConfig searchlight;
  LassoSettings lasso;
  MapSettings maps;

  /// Copies the master seed into every component.
  void apply_seed(std::uint64_t master);
  void validate() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// INI text that parses back to the same configuration.
std::string to_ini(const RunConfig& config);

}  // namespace deeplight
