#pragma once

#include "splatroom/dataset.hpp"
#include "splatroom/scene.hpp"
#include "splatroom/types.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace splatroom {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- PLY ----------------------------------------------------------------

enum class PlyFormat { Ascii, BinaryLittleEndian };

// Vertices (and optional faces) of a PLY file. Reads ascii and binary
// little-endian files with any scalar property types.
struct PlyData {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;           // [0, 1]; empty when absent
  std::vector<int> match_counts;      // empty when absent
  std::vector<Eigen::Vector3i> faces; // triangulated fan of each polygon
};

PlyData read_ply(const std::string& path);
void write_ply(const std::string& path, const PlyData& data, PlyFormat format = PlyFormat::BinaryLittleEndian);

// Point clouds: match_count defaults to `default_match_count` when absent.
std::vector<SfmPoint> read_point_cloud(const std::string& path, int default_match_count);
void write_point_cloud(const std::string& path, const std::vector<SfmPoint>& points,
                       PlyFormat format = PlyFormat::BinaryLittleEndian);

TriangleMesh read_mesh(const std::string& path);
void write_mesh(const std::string& path, const TriangleMesh& mesh, PlyFormat format = PlyFormat::BinaryLittleEndian);

// ---- PFM ----------------------------------------------------------------

// Little-endian PFM (scale -1), rows stored bottom to top. Values are stored
// as 32-bit floats.
void write_pfm(const std::string& path, const Image1& image);
void write_pfm(const std::string& path, const Image3& image);
Image1 read_pfm1(const std::string& path);
Image3 read_pfm3(const std::string& path);

// ---- PNG ----------------------------------------------------------------

// 8-bit RGB; values are clamped to [0, 1] and rounded to k / 255.
void write_png(const std::string& path, const Image3& image);
// 16-bit grayscale of round(value / scale).
void write_png16(const std::string& path, const Image1& image, double scale);
// Any 8/16-bit gray, gray+alpha, RGB or RGBA PNG, channel values in [0, 1].
Image3 read_png(const std::string& path);
// 16-bit (or 8-bit) single channel as raw integer counts times scale.
Image1 read_png16(const std::string& path, double scale);

// ---- dataset manifest --------------------------------------------------

// Writes images, priors, point cloud and manifest.json under dir.
void save_dataset(const std::string& dir, const Dataset& dataset);

// Loads a manifest and every file it references. All problems found are
// collected and reported together in one IoError.
Dataset load_dataset(const std::string& manifest_path);

// ---- key = value configuration ------------------------------------------

using ConfigMap = std::map<std::string, std::string>;

// '#' starts a comment; blank lines are ignored. Throws IoError with the line
// number on malformed lines.
ConfigMap parse_config(const std::string& text);
ConfigMap read_config_file(const std::string& path);

// Reads a whole file; throws IoError when it cannot be opened.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace splatroom
