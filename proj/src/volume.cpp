#include "deeplight/volume.hpp"

#include "deeplight/error.hpp"

namespace deeplight {

Volume3D Volume4D::volume(std::size_t t) const {
  if (t >= timepoints) throw InputError("volume index out of range");
  Volume3D v(shape, voxel_mm);
  const float* f = frame(t);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = f[i];
  return v;
}

void Volume4D::set_volume(std::size_t t, const Volume3D& v) {
  if (t >= timepoints || !(v.shape == shape)) throw InputError("set_volume: shape or index mismatch");
  float* f = frame(t);
  for (std::size_t i = 0; i < v.data.size(); ++i) f[i] = static_cast<float>(v.data[i]);
}

namespace {

void check_box(const GridShape& g, const BoundingBox& box) {
  if (box.hi[0] >= g.x || box.hi[1] >= g.y || box.hi[2] >= g.z || box.lo[0] > box.hi[0] || box.lo[1] > box.hi[1] ||
      box.lo[2] > box.hi[2]) {
    throw InputError("bounding box does not fit the grid");
  }
}

}  // namespace

Volume3D crop(const Volume3D& v, const BoundingBox& box) {
  check_box(v.shape, box);
  const GridShape e = box.extent();
  Volume3D out(e, v.voxel_mm);
  for (std::size_t k = 0; k < e.z; ++k)
    for (std::size_t j = 0; j < e.y; ++j)
      for (std::size_t i = 0; i < e.x; ++i) out.at(i, j, k) = v.at(i + box.lo[0], j + box.lo[1], k + box.lo[2]);
  return out;
}

Volume4D crop(const Volume4D& v, const BoundingBox& box) {
  check_box(v.shape, box);
  const GridShape e = box.extent();
  Volume4D out(e, v.timepoints, v.voxel_mm, v.tr_s);
  for (std::size_t t = 0; t < v.timepoints; ++t) {
    const float* src = v.frame(t);
    float* dst = out.frame(t);
    for (std::size_t k = 0; k < e.z; ++k)
      for (std::size_t j = 0; j < e.y; ++j)
        for (std::size_t i = 0; i < e.x; ++i)
          dst[e.index(i, j, k)] = src[v.shape.index(i + box.lo[0], j + box.lo[1], k + box.lo[2])];
  }
  return out;
}

}  // namespace deeplight
