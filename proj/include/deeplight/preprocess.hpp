#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "deeplight/volume.hpp"

namespace deeplight::preprocess {

struct PreprocConfig {
  double fwhm_mm = 3.0;
  double highpass_cutoff_s = 128.0;
  double mask_fraction = 0.05;

  void validate() const;
};

/// Gaussian sigma in voxels for a kernel of the given FWHM.
double sigma_voxels(double fwhm_mm, double voxel_mm);

/// Normalized 1D kernel truncated at 4 sigma (a single 1 for sigma = 0).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian smoothing with zero padding at the grid border.
Volume3D gaussian_smooth(const Volume3D& volume, double fwhm_mm);
void gaussian_smooth(Volume4D& run, double fwhm_mm);

/// Removes the least-squares line and scales to unit (population) variance.
/// A residual with zero variance becomes all zeros.
std::vector<double> detrend_standardize(const std::vector<double>& series);

/// A biquad: b0 b1 b2 / 1 a1 a2.
struct Section {
  std::array<double, 3> b{};
  std::array<double, 3> a{};
};

/// Digital Butterworth highpass as second-order sections (bilinear
/// transform with pre-warping).
std::vector<Section> butterworth_highpass(std::size_t order, double cutoff_hz, double sample_hz);

/// Forward-backward application with odd-extension padding and steady-state
/// initial conditions. Zero phase.
std::vector<double> sosfiltfilt(const std::vector<Section>& sos, const std::vector<double>& x);

/// Order-5 zero-phase Butterworth highpass at 1/cutoff_s. Throws ConfigError
/// unless cutoff_s > 2*tr_s.
std::vector<double> highpass(const std::vector<double>& series, double cutoff_s, double tr_s);

/// Flags voxels exceeding `fraction` of the maximum over all volumes of all
/// runs (in any volume) and boxes them.
BrainMask compute_mask(const std::vector<const Volume4D*>& runs, double fraction = 0.05);
BrainMask compute_mask(const std::vector<Volume3D>& volumes, double fraction = 0.05);

/// Smoothing, then per-voxel detrend/standardize, then highpass.
Volume4D preprocess_run(const Volume4D& run, const PreprocConfig& config);

/// Applies a time-series operation to every voxel of a run.
template <typename Fn>
void for_each_series(Volume4D& run, Fn&& fn) {
  const std::size_t n = run.shape.voxels();
  const std::size_t t = run.timepoints;
#pragma omp parallel for schedule(static)
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<double> s(t);
    for (std::size_t k = 0; k < t; ++k) s[k] = run.data[k * n + v];
    s = fn(s);
    for (std::size_t k = 0; k < t; ++k) run.data[k * n + v] = static_cast<float>(s[k]);
  }
}

}  // namespace deeplight::preprocess
