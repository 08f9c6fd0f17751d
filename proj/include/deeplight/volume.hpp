#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace deeplight {

/// Spatial extents of a voxel grid. Storage order is x fastest, then y, then z.
struct GridShape {
  std::size_t x = 0, y = 0, z = 0;

  std::size_t voxels() const noexcept { return x * y * z; }
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept { return (k * y + j) * x + i; }
  bool operator==(const GridShape&) const = default;
};

/// A single 3D scalar volume.
struct Volume3D {
  GridShape shape;
  double voxel_mm = 2.0;
  std::vector<double> data;

  Volume3D() = default;
  Volume3D(GridShape s, double voxel, double fill = 0.0) : shape(s), voxel_mm(voxel), data(s.voxels(), fill) {}

  double& at(std::size_t i, std::size_t j, std::size_t k) { return data[shape.index(i, j, k)]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return data[shape.index(i, j, k)]; }
};

/// A run: T volumes on one grid. Stored as 32-bit floats, t-major.
struct Volume4D {
  GridShape shape;
  std::size_t timepoints = 0;
  double voxel_mm = 2.0;
  double tr_s = 0.72;
  std::vector<float> data;

  Volume4D() = default;
  Volume4D(GridShape s, std::size_t t, double voxel, double tr)
      : shape(s), timepoints(t), voxel_mm(voxel), tr_s(tr), data(s.voxels() * t, 0.0f) {}

  float* frame(std::size_t t) { return data.data() + t * shape.voxels(); }
  const float* frame(std::size_t t) const { return data.data() + t * shape.voxels(); }
  Volume3D volume(std::size_t t) const;
  void set_volume(std::size_t t, const Volume3D& v);
};

/// Inclusive index range per axis.
struct BoundingBox {
  std::array<std::size_t, 3> lo{};
  std::array<std::size_t, 3> hi{};

  GridShape extent() const { return {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1}; }
  bool contains(std::size_t i, std::size_t j, std::size_t k) const {
    return i >= lo[0] && i <= hi[0] && j >= lo[1] && j <= hi[1] && k >= lo[2] && k <= hi[2];
  }
  bool operator==(const BoundingBox&) const = default;
};

/// Outer brain mask: the voxels passing the intensity criterion and the box
/// enclosing all of them.
struct BrainMask {
  GridShape grid;
  BoundingBox box;
  std::vector<char> flagged;  // over `grid`
};

Volume3D crop(const Volume3D& v, const BoundingBox& box);
Volume4D crop(const Volume4D& v, const BoundingBox& box);

}  // namespace deeplight
