#pragma once

#include <filesystem>
#include <string>

#include "affkp/geometry.hpp"

namespace affkp {

// Binary little-endian PLY with properties x,y,z,red,green,blue,nx,ny,nz.
// Colors are quantized to 8 bits on write.
void write_ply(const std::filesystem::path& path, const PointCloudFrame& cloud);
PointCloudFrame read_ply(const std::filesystem::path& path);

// Row-major 32-bit float depth plus a JSON sidecar holding exactly
// {fx, fy, cx, cy, width, height}.
void write_depth_raw(const std::filesystem::path& depth_path,
                     const std::filesystem::path& sidecar_path, const RgbdImage& img,
                     const CameraIntrinsics& k);
RgbdImage read_depth_raw(const std::filesystem::path& depth_path, const CameraIntrinsics& k);
CameraIntrinsics read_intrinsics_sidecar(const std::filesystem::path& sidecar_path);
void write_intrinsics_sidecar(const std::filesystem::path& sidecar_path,
                              const CameraIntrinsics& k);

// Optional color plane for raw captures, row-major float32 H*W*3 in [0,1].
void write_rgb_raw(const std::filesystem::path& path, const RgbdImage& img);
void read_rgb_raw(const std::filesystem::path& path, RgbdImage& img);

}  // namespace affkp
