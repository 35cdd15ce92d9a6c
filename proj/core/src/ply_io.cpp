#include "affkp/ply_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

namespace affkp {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  return f;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for reading: " + path.string());
  return f;
}

std::uint8_t quantize(double v) {
  double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

void write_ply(const std::filesystem::path& path, const PointCloudFrame& cloud) {
  auto f = open_out(path);
  f << "ply\nformat binary_little_endian 1.0\n"
    << "element vertex " << cloud.size() << "\n"
    << "property float x\nproperty float y\nproperty float z\n"
    << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
    << "property float nx\nproperty float ny\nproperty float nz\n"
    << "end_header\n";
  std::vector<char> row(3 * 4 + 3 + 3 * 4);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    float xyz[3] = {static_cast<float>(cloud.xyz[i].x()), static_cast<float>(cloud.xyz[i].y()),
                    static_cast<float>(cloud.xyz[i].z())};
    std::uint8_t col[3] = {quantize(cloud.rgb[i].x()), quantize(cloud.rgb[i].y()),
                           quantize(cloud.rgb[i].z())};
    float nrm[3] = {static_cast<float>(cloud.normal[i].x()),
                    static_cast<float>(cloud.normal[i].y()),
                    static_cast<float>(cloud.normal[i].z())};
    std::memcpy(row.data(), xyz, 12);
    std::memcpy(row.data() + 12, col, 3);
    std::memcpy(row.data() + 15, nrm, 12);
    f.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw DataError("short write: " + path.string());
}

PointCloudFrame read_ply(const std::filesystem::path& path) {
  auto f = open_in(path);
  std::string line;
  std::size_t count = 0;
  bool header_ok = false;
  std::vector<std::string> props;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "element") {
      std::string what;
      ss >> what >> count;
      if (what != "vertex") throw DataError("ply: unsupported element " + what);
    } else if (tok == "property") {
      std::string type, name;
      ss >> type >> name;
      props.push_back(name);
    } else if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "binary_little_endian") throw DataError("ply: expected binary_little_endian");
    } else if (tok == "end_header") {
      header_ok = true;
      break;
    }
  }
  const std::vector<std::string> expected = {"x", "y", "z", "red", "green", "blue", "nx", "ny", "nz"};
  if (!header_ok || props != expected) throw DataError("ply: unexpected header in " + path.string());

  PointCloudFrame cloud;
  cloud.xyz.resize(count);
  cloud.rgb.resize(count);
  cloud.normal.resize(count);
  cloud.pixel_index.assign(count, -1);
  std::vector<char> row(27);
  for (std::size_t i = 0; i < count; ++i) {
    f.read(row.data(), 27);
    if (!f) throw DataError("ply: truncated payload in " + path.string());
    float xyz[3], nrm[3];
    std::uint8_t col[3];
    std::memcpy(xyz, row.data(), 12);
    std::memcpy(col, row.data() + 12, 3);
    std::memcpy(nrm, row.data() + 15, 12);
    cloud.xyz[i] = Vec3(xyz[0], xyz[1], xyz[2]);
    cloud.rgb[i] = Vec3(col[0] / 255.0, col[1] / 255.0, col[2] / 255.0);
    cloud.normal[i] = Vec3(nrm[0], nrm[1], nrm[2]);
  }
  return cloud;
}

void write_intrinsics_sidecar(const std::filesystem::path& sidecar_path,
                              const CameraIntrinsics& k) {
  json j = {{"fx", k.fx},       {"fy", k.fy},        {"cx", k.cx},
            {"cy", k.cy},       {"width", k.width},  {"height", k.height}};
  auto f = open_out(sidecar_path);
  f << j.dump(2) << "\n";
}

CameraIntrinsics read_intrinsics_sidecar(const std::filesystem::path& sidecar_path) {
  auto f = open_in(sidecar_path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw DataError("intrinsics sidecar: " + std::string(e.what()));
  }
  CameraIntrinsics k;
  try {
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
  } catch (const json::exception& e) {
    throw DataError("intrinsics sidecar: missing field (" + std::string(e.what()) + ")");
  }
  k.validate();
  return k;
}

void write_depth_raw(const std::filesystem::path& depth_path,
                     const std::filesystem::path& sidecar_path, const RgbdImage& img,
                     const CameraIntrinsics& k) {
  auto f = open_out(depth_path);
  f.write(reinterpret_cast<const char*>(img.depth.data()),
          static_cast<std::streamsize>(img.depth.size() * sizeof(float)));
  if (!f) throw DataError("short write: " + depth_path.string());
  write_intrinsics_sidecar(sidecar_path, k);
}

RgbdImage read_depth_raw(const std::filesystem::path& depth_path, const CameraIntrinsics& k) {
  auto f = open_in(depth_path);
  RgbdImage img;
  img.width = k.width;
  img.height = k.height;
  std::size_t n = static_cast<std::size_t>(k.width) * k.height;
  img.depth.resize(n);
  f.read(reinterpret_cast<char*>(img.depth.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!f) throw DataError("depth raw: file smaller than width*height floats");
  char extra;
  if (f.read(&extra, 1)) throw DataError("depth raw: file larger than width*height floats");
  img.rgb.assign(3 * n, 0.0f);
  return img;
}

void write_rgb_raw(const std::filesystem::path& path, const RgbdImage& img) {
  auto f = open_out(path);
  f.write(reinterpret_cast<const char*>(img.rgb.data()),
          static_cast<std::streamsize>(img.rgb.size() * sizeof(float)));
  if (!f) throw DataError("short write: " + path.string());
}

void read_rgb_raw(const std::filesystem::path& path, RgbdImage& img) {
  auto f = open_in(path);
  std::size_t n = static_cast<std::size_t>(img.width) * img.height * 3;
  img.rgb.resize(n);
  f.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!f) throw DataError("rgb raw: file smaller than width*height*3 floats");
}

}  // namespace affkp
