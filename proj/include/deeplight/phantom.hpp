#pragma once

// Synthetic block-design fMRI data with one planted region of interest per
// state.

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "deeplight/design.hpp"
#include "deeplight/model.hpp"
#include "deeplight/volume.hpp"

namespace deeplight::phantom {

struct Ellipsoid {
  std::array<double, 3> center{};
  std::array<double, 3> radii{};

  bool contains(double x, double y, double z) const { return distance(x, y, z) <= 1.0; }
  /// Normalized distance: 1 on the surface.
  double distance(double x, double y, double z) const;
};

struct PhantomSpec {
  GridShape grid{24, 28, 20};
  double voxel_mm = 2.0;
  double tr_s = 0.72;
  std::array<Ellipsoid, model::kNumStates> rois{{
      {{6.0, 7.0, 7.0}, {5.0, 5.0, 4.0}},    // body
      {{17.0, 7.0, 12.0}, {5.0, 5.0, 4.0}},  // face
      {{6.0, 20.0, 8.0}, {5.0, 5.0, 4.0}},   // place
      {{17.0, 20.0, 12.0}, {5.0, 5.0, 4.0}}, // tool
  }};
  double amplitude = 1.0;
  double noise_sigma = 1.0;
  double baseline = 100.0;
  int jitter_voxels = 1;
  std::size_t train_subjects = 8;
  std::size_t test_subjects = 4;
  std::size_t runs = 2;
  std::uint64_t seed = 1;

  std::size_t subjects() const noexcept { return train_subjects + test_subjects; }
  /// Head ellipsoid filling the grid.
  Ellipsoid head() const;
  void validate() const;
};

/// Voxel-to-state assignment (-1 outside every ROI). A voxel inside several
/// ellipsoids goes to the one it is deepest in.
std::vector<int> roi_labels(const GridShape& grid, const std::array<Ellipsoid, model::kNumStates>& rois);

/// Boolean target mask per state from the nominal ROIs.
std::vector<std::vector<char>> target_masks(const PhantomSpec& spec);

struct PhantomSubject {
  std::size_t id = 0;
  bool test = false;
  BlockDesign design;
  std::array<Ellipsoid, model::kNumStates> rois{};
  std::vector<Volume4D> runs;
};

/// ROIs of a subject after its random integer shift.
std::array<Ellipsoid, model::kNumStates> subject_rois(const PhantomSpec& spec, std::size_t subject);
BlockDesign subject_design(const PhantomSpec& spec, std::size_t subject);

/// Baseline inside the head, amplitude * (state boxcar * HRF) inside that
/// state's ROI, Gaussian noise everywhere.
PhantomSubject generate_subject(const PhantomSpec& spec, std::size_t subject, const BlockDesign& design);
PhantomSubject generate_subject(const PhantomSpec& spec, std::size_t subject);

/// Subjects 0..train-1 are training subjects, the rest test subjects.
std::vector<PhantomSubject> generate_phantom(const PhantomSpec& spec);

}  // namespace deeplight::phantom
