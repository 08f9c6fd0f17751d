#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "deeplight/volume.hpp"

namespace deeplight::maps {

struct BrainMap {
  Volume3D values;
  std::string method;  // deeplight, glm, searchlight, lasso
  int state = -1;
  std::string level;   // sample, block, subject, group, timepoint
};

/// Smooths each volume (FWHM in mm) and averages; nullopt for an empty set.
std::optional<Volume3D> aggregate_subject(const std::vector<Volume3D>& volumes, double fwhm_mm = 3.0);

/// Voxelwise mean. Throws InputError for an empty set or mismatched grids.
Volume3D aggregate_group(const std::vector<Volume3D>& maps);

/// Linear-interpolation percentile (q in [0, 100]) of a non-empty set.
double percentile(std::vector<double> values, double q);

struct ThresholdedMask {
  std::vector<char> keep;
  double threshold = 0.0;
  std::size_t count = 0;
  bool empty_warning = false;
  std::string rule;
};

/// Keeps positive voxels at or above the q-th percentile of the positive
/// values. `within` (optional) restricts the voxels considered.
ThresholdedMask threshold_percentile(const std::vector<double>& values, double q,
                                     const std::vector<char>* within = nullptr);

/// Benjamini-Hochberg step-up at false discovery rate `rate`.
ThresholdedMask threshold_fdr(const std::vector<double>& p, double rate);

/// Uncorrected: keeps p <= alpha.
ThresholdedMask threshold_p(const std::vector<double>& p, double alpha);

struct F1Report {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool empty = false;  // source or target had no voxels
};

F1Report f1_similarity(const std::vector<char>& source, const std::vector<char>& target);

/// A relevance (or attribution) volume tagged by subject, state and
/// within-block TR index.
struct TimedVolume {
  std::size_t subject = 0;
  int state = -1;
  int offset = -1;
  Volume3D volume;
};

struct TimePoint {
  int offset = 0;
  bool skipped = true;  // no sample at this TR
  std::size_t samples = 0;
  std::vector<double> state_f1;  // NaN where a state has no sample
  double mean_f1 = 0.0;
};

/// Per TR index: per-subject means of smoothed volumes, averaged across
/// subjects, thresholded at the q-th percentile and scored against the
/// state's target mask.
std::vector<TimePoint> time_resolved_maps(const std::vector<TimedVolume>& volumes,
                                          const std::vector<std::vector<char>>& targets, double q = 90.0,
                                          double fwhm_mm = 3.0);

/// Voxelwise sample x coefficient product.
Volume3D coefficient_attribution(const Volume3D& sample, const std::vector<double>& coef);

}  // namespace deeplight::maps
