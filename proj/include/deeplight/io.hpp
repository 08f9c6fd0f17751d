#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "deeplight/model.hpp"
#include "deeplight/volume.hpp"

namespace deeplight::io {

namespace fs = std::filesystem;

/// VOL1: "VOL1", u32 X Y Z T, f32 voxel_mm, f32 tr_s, then f32 values with
/// t slowest and x fastest. All little endian.
void write_vol1(const fs::path& path, const Volume4D& run);
void write_vol1(const fs::path& path, const Volume3D& volume);
Volume4D read_vol1(const fs::path& path);
/// Reads a single-volume file (T must be 1).
Volume3D read_vol1_volume(const fs::path& path);

/// DLP1 checkpoint: "DLP1", u32 record count, then per record u32 name
/// length, name bytes, u32 rank, u32 extents, f32 payload. The architecture is
/// stored in the records "arch.slice" and "arch.strides".
void write_checkpoint(const fs::path& path, const model::DeepLightParams& params);
model::DeepLightParams read_checkpoint(const fs::path& path);

/// Binary PGM of all axial slices tiled left to right, top to bottom;
/// values scaled linearly from [lo, hi] to [0, 255].
void write_pgm_montage(const fs::path& path, const Volume3D& volume, double lo, double hi);
void write_pgm_montage(const fs::path& path, const Volume3D& volume);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

/// Throws InputError naming the path when it does not exist.
void require_file(const fs::path& path);

}  // namespace deeplight::io
