#include "splatroom/io.hpp"

#include <json.hpp>
#include <png.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <sstream>

namespace splatroom {

namespace fs = std::filesystem;

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write file: " + path);
  f << text;
  if (!f) throw IoError("cannot write file: " + path);
}

// ---- PLY ----------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "binary readers assume a little-endian host");

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType parse_ply_type(const std::string& t, const std::string& path) {
  if (t == "char" || t == "int8") return PlyType::Int8;
  if (t == "uchar" || t == "uint8") return PlyType::UInt8;
  if (t == "short" || t == "int16") return PlyType::Int16;
  if (t == "ushort" || t == "uint16") return PlyType::UInt16;
  if (t == "int" || t == "int32") return PlyType::Int32;
  if (t == "uint" || t == "uint32") return PlyType::UInt32;
  if (t == "float" || t == "float32") return PlyType::Float32;
  if (t == "double" || t == "float64") return PlyType::Float64;
  throw IoError(path + ": unsupported PLY property type '" + t + "'");
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

// Sequential value source over either ascii tokens or binary bytes.
class PlySource {
 public:
  PlySource(const std::string& body, bool ascii, std::string path)
      : body_(body), ascii_(ascii), path_(std::move(path)), tokens_(ascii ? body : std::string()) {}

  double next(PlyType t) {
    if (ascii_) {
      std::string tok;
      if (!(tokens_ >> tok)) throw IoError(path_ + ": PLY data ends early");
      try {
        return std::stod(tok);
      } catch (const std::exception&) {
        throw IoError(path_ + ": bad PLY value '" + tok + "'");
      }
    }
    const std::size_t n = ply_size(t);
    if (pos_ + n > body_.size()) throw IoError(path_ + ": PLY data ends early");
    const char* p = body_.data() + pos_;
    pos_ += n;
    switch (t) {
      case PlyType::Int8: return double(load<std::int8_t>(p));
      case PlyType::UInt8: return double(load<std::uint8_t>(p));
      case PlyType::Int16: return double(load<std::int16_t>(p));
      case PlyType::UInt16: return double(load<std::uint16_t>(p));
      case PlyType::Int32: return double(load<std::int32_t>(p));
      case PlyType::UInt32: return double(load<std::uint32_t>(p));
      case PlyType::Float32: return double(load<float>(p));
      case PlyType::Float64: return load<double>(p);
    }
    return 0.0;
  }

 private:
  template <class T>
  static T load(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
  }
  const std::string& body_;
  bool ascii_;
  std::string path_;
  std::istringstream tokens_;
  std::size_t pos_ = 0;
};

bool is_color(const std::string& n) {
  return n == "red" || n == "green" || n == "blue" || n == "r" || n == "g" || n == "b";
}

int color_channel(const std::string& n) {
  if (n == "red" || n == "r") return 0;
  if (n == "green" || n == "g") return 1;
  return 2;
}

}  // namespace

PlyData read_ply(const std::string& path) {
  const std::string bytes = read_text_file(path);
  const std::size_t header_end = bytes.find("end_header");
  if (bytes.rfind("ply", 0) != 0 || header_end == std::string::npos) throw IoError(path + ": not a PLY file");
  std::size_t body_start = bytes.find('\n', header_end);
  if (body_start == std::string::npos) body_start = bytes.size();
  else ++body_start;

  std::istringstream header(bytes.substr(0, header_end));
  std::string line;
  bool ascii = false, have_format = false;
  std::vector<PlyElement> elements;
  while (std::getline(header, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") ascii = true;
      else if (fmt != "binary_little_endian") throw IoError(path + ": unsupported PLY format '" + fmt + "'");
      have_format = true;
    } else if (kw == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      if (!ls) throw IoError(path + ": malformed PLY element line");
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) throw IoError(path + ": PLY property before any element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        p.is_list = true;
        p.count_type = parse_ply_type(ct, path);
        p.type = parse_ply_type(it, path);
      } else {
        p.type = parse_ply_type(t, path);
        ls >> p.name;
      }
      elements.back().properties.push_back(p);
    }
  }
  if (!have_format) throw IoError(path + ": PLY header lacks a format line");

  const std::string body = bytes.substr(body_start);
  PlySource src(body, ascii, path);
  PlyData data;
  for (const PlyElement& e : elements) {
    const bool vertex = e.name == "vertex";
    const bool face = e.name == "face";
    bool has_color = false, has_match = false;
    for (const PlyProperty& p : e.properties) {
      has_color |= vertex && is_color(p.name);
      has_match |= vertex && p.name == "match_count";
    }
    for (std::size_t i = 0; i < e.count; ++i) {
      Vec3 pos = Vec3::Zero(), col = Vec3::Zero();
      int match = 0;
      for (const PlyProperty& p : e.properties) {
        if (p.is_list) {
          const auto n = std::int64_t(src.next(p.count_type));
          if (n < 0) throw IoError(path + ": negative PLY list length");
          std::vector<int> idx(static_cast<std::size_t>(n));
          for (auto& v : idx) v = int(src.next(p.type));
          if (face && (p.name == "vertex_indices" || p.name == "vertex_index"))
            for (std::size_t k = 2; k < idx.size(); ++k) data.faces.emplace_back(idx[0], idx[k - 1], idx[k]);
          continue;
        }
        const double v = src.next(p.type);
        if (!vertex) continue;
        if (p.name == "x") pos.x() = v;
        else if (p.name == "y") pos.y() = v;
        else if (p.name == "z") pos.z() = v;
        else if (is_color(p.name)) {
          const bool integral = p.type != PlyType::Float32 && p.type != PlyType::Float64;
          col[color_channel(p.name)] = integral ? v / (p.type == PlyType::UInt16 ? 65535.0 : 255.0) : v;
        } else if (p.name == "match_count") match = int(v);
      }
      if (vertex) {
        data.positions.push_back(pos);
        if (has_color) data.colors.push_back(col);
        if (has_match) data.match_counts.push_back(match);
      }
    }
  }
  for (const auto& f : data.faces)
    for (int k = 0; k < 3; ++k)
      if (f[k] < 0 || std::size_t(f[k]) >= data.positions.size())
        throw IoError(path + ": face index out of range");
  return data;
}

void write_ply(const std::string& path, const PlyData& data, PlyFormat format) {
  const bool ascii = format == PlyFormat::Ascii;
  const bool colors = !data.colors.empty();
  const bool matches = !data.match_counts.empty();
  if ((colors && data.colors.size() != data.positions.size()) ||
      (matches && data.match_counts.size() != data.positions.size()))
    throw std::invalid_argument("write_ply: attribute count does not match vertex count");
  std::ostringstream out;
  out << "ply\nformat " << (ascii ? "ascii" : "binary_little_endian") << " 1.0\n";
  out << "element vertex " << data.positions.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (matches) out << "property int match_count\n";
  if (!data.faces.empty()) out << "element face " << data.faces.size() << "\nproperty list uchar int vertex_indices\n";
  out << "end_header\n";
  auto put = [&](auto v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  auto quant = [](double c) { return std::uint8_t(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); };
  if (ascii) out << std::setprecision(17);
  for (std::size_t i = 0; i < data.positions.size(); ++i) {
    const Vec3& p = data.positions[i];
    if (ascii) {
      out << p.x() << ' ' << p.y() << ' ' << p.z();
      if (colors)
        for (int c = 0; c < 3; ++c) out << ' ' << int(quant(data.colors[i][c]));
      if (matches) out << ' ' << data.match_counts[i];
      out << '\n';
    } else {
      put(p.x());
      put(p.y());
      put(p.z());
      if (colors)
        for (int c = 0; c < 3; ++c) put(quant(data.colors[i][c]));
      if (matches) put(std::int32_t(data.match_counts[i]));
    }
  }
  for (const auto& f : data.faces) {
    if (ascii) {
      out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    } else {
      put(std::uint8_t(3));
      for (int k = 0; k < 3; ++k) put(std::int32_t(f[k]));
    }
  }
  write_text_file(path, out.str());
}

std::vector<SfmPoint> read_point_cloud(const std::string& path, int default_match_count) {
  const PlyData d = read_ply(path);
  std::vector<SfmPoint> pts(d.positions.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i].position = d.positions[i];
    pts[i].match_count = d.match_counts.empty() ? default_match_count : d.match_counts[i];
    if (!d.colors.empty()) pts[i].color = d.colors[i];
  }
  return pts;
}

void write_point_cloud(const std::string& path, const std::vector<SfmPoint>& points, PlyFormat format) {
  PlyData d;
  const bool colors = !points.empty() && std::all_of(points.begin(), points.end(), [](const SfmPoint& p) {
    return p.color.has_value();
  });
  for (const SfmPoint& p : points) {
    d.positions.push_back(p.position);
    d.match_counts.push_back(p.match_count);
    if (colors) d.colors.push_back(*p.color);
  }
  write_ply(path, d, format);
}

TriangleMesh read_mesh(const std::string& path) {
  PlyData d = read_ply(path);
  TriangleMesh m;
  m.vertices = std::move(d.positions);
  m.triangles = std::move(d.faces);
  m.colors = std::move(d.colors);
  return m;
}

void write_mesh(const std::string& path, const TriangleMesh& mesh, PlyFormat format) {
  PlyData d;
  d.positions = mesh.vertices;
  d.colors = mesh.colors;
  d.faces = mesh.triangles;
  write_ply(path, d, format);
}

// ---- PFM ----------------------------------------------------------------

namespace {

template <int C>
void write_pfm_impl(const std::string& path, const Image<C>& image) {
  std::ostringstream out;
  out << (C == 3 ? "PF" : "Pf") << "\n" << image.width << " " << image.height << "\n-1.0\n";
  for (int y = image.height - 1; y >= 0; --y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < C; ++c) {
        const float v = float(image.at(x, y, c));
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
  write_text_file(path, out.str());
}

template <int C>
Image<C> read_pfm_impl(const std::string& path) {
  const std::string bytes = read_text_file(path);
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  in >> magic >> w >> h >> scale;
  if (!in || (magic != "PF" && magic != "Pf")) throw IoError(path + ": not a PFM file");
  const int channels = magic == "PF" ? 3 : 1;
  if (channels != C) throw IoError(path + ": expected a " + std::to_string(C) + "-channel PFM");
  if (w <= 0 || h <= 0 || scale == 0) throw IoError(path + ": bad PFM header");
  const std::size_t start = std::size_t(in.tellg()) + 1;  // single whitespace after the scale
  const std::size_t need = std::size_t(w) * std::size_t(h) * C * sizeof(float);
  if (bytes.size() < start + need) throw IoError(path + ": PFM data truncated");
  const bool big = scale > 0;
  Image<C> image(w, h);
  const char* p = bytes.data() + start;
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < C; ++c, p += sizeof(float)) {
        std::uint32_t bits;
        std::memcpy(&bits, p, sizeof(bits));
        if (big) bits = __builtin_bswap32(bits);
        image.at(x, y, c) = double(std::bit_cast<float>(bits));
      }
  return image;
}

}  // namespace

void write_pfm(const std::string& path, const Image1& image) { write_pfm_impl(path, image); }
void write_pfm(const std::string& path, const Image3& image) { write_pfm_impl(path, image); }
Image1 read_pfm1(const std::string& path) { return read_pfm_impl<1>(path); }
Image3 read_pfm3(const std::string& path) { return read_pfm_impl<3>(path); }

// ---- PNG ----------------------------------------------------------------

namespace {

struct PngRaw {
  int width = 0, height = 0, channels = 0, depth = 0;
  std::vector<std::uint16_t> samples;  // row-major, interleaved
};

void write_png_raw(const std::string& path, const PngRaw& raw) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write file: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  const std::size_t bps = raw.depth == 16 ? 2 : 1;
  std::vector<png_byte> rows(std::size_t(raw.width) * std::size_t(raw.height) * std::size_t(raw.channels) * bps);
  for (std::size_t i = 0; i < raw.samples.size(); ++i) {
    if (bps == 2) {
      rows[2 * i] = png_byte(raw.samples[i] >> 8);
      rows[2 * i + 1] = png_byte(raw.samples[i] & 0xff);
    } else {
      rows[i] = png_byte(raw.samples[i]);
    }
  }
  std::vector<png_bytep> ptrs(std::size_t(raw.height));
  for (int y = 0; y < raw.height; ++y)
    ptrs[std::size_t(y)] = rows.data() + std::size_t(y) * std::size_t(raw.width) * std::size_t(raw.channels) * bps;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(raw.width), png_uint_32(raw.height), raw.depth,
               raw.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

PngRaw read_png_raw(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw IoError("cannot open file: " + path);
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8)) throw IoError(path + ": not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": corrupt PNG");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_png(png, info, PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA, nullptr);
  PngRaw raw;
  raw.width = int(png_get_image_width(png, info));
  raw.height = int(png_get_image_height(png, info));
  raw.depth = png_get_bit_depth(png, info);
  raw.channels = png_get_channels(png, info);
  png_bytepp rows = png_get_rows(png, info);
  const std::size_t n = std::size_t(raw.width) * std::size_t(raw.channels);
  raw.samples.resize(n * std::size_t(raw.height));
  for (int y = 0; y < raw.height; ++y)
    for (std::size_t i = 0; i < n; ++i)
      raw.samples[std::size_t(y) * n + i] =
          raw.depth == 16 ? std::uint16_t(rows[y][2 * i] << 8 | rows[y][2 * i + 1]) : rows[y][i];
  png_destroy_read_struct(&png, &info, nullptr);
  if (raw.channels != 1 && raw.channels != 3) throw IoError(path + ": unsupported PNG channel layout");
  return raw;
}

}  // namespace

void write_png(const std::string& path, const Image3& image) {
  PngRaw raw{image.width, image.height, 3, 8, {}};
  raw.samples.resize(std::size_t(image.size()) * 3);
  for (Eigen::Index i = 0; i < image.size(); ++i)
    for (int c = 0; c < 3; ++c)
      raw.samples[std::size_t(i) * 3 + std::size_t(c)] =
          std::uint16_t(std::lround(std::clamp(image.data(i, c), 0.0, 1.0) * 255.0));
  write_png_raw(path, raw);
}

void write_png16(const std::string& path, const Image1& image, double scale) {
  if (!(scale > 0)) throw std::invalid_argument("write_png16: scale must be positive");
  PngRaw raw{image.width, image.height, 1, 16, {}};
  raw.samples.resize(std::size_t(image.size()));
  for (Eigen::Index i = 0; i < image.size(); ++i)
    raw.samples[std::size_t(i)] = std::uint16_t(std::clamp(std::lround(image.data(i) / scale), 0L, 65535L));
  write_png_raw(path, raw);
}

Image3 read_png(const std::string& path) {
  const PngRaw raw = read_png_raw(path);
  const double max = raw.depth == 16 ? 65535.0 : 255.0;
  Image3 img(raw.width, raw.height);
  for (Eigen::Index i = 0; i < img.size(); ++i)
    for (int c = 0; c < 3; ++c)
      img.data(i, c) = raw.samples[std::size_t(i) * std::size_t(raw.channels) + std::size_t(raw.channels == 3 ? c : 0)] / max;
  return img;
}

Image1 read_png16(const std::string& path, double scale) {
  const PngRaw raw = read_png_raw(path);
  if (raw.channels != 1) throw IoError(path + ": expected a single-channel PNG");
  Image1 img(raw.width, raw.height);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data(i) = raw.samples[std::size_t(i)] * scale;
  return img;
}

// ---- dataset manifest --------------------------------------------------

namespace {

using nlohmann::json;

constexpr const char* kConvention = "x-right y-down z-forward, pixel centers at half-integers";

json to_json(const Camera& c, int id) {
  json j;
  j["id"] = id;
  j["width"] = c.width;
  j["height"] = c.height;
  j["K"] = {c.K(0, 0), c.K(0, 1), c.K(0, 2), c.K(1, 0), c.K(1, 1), c.K(1, 2), c.K(2, 0), c.K(2, 1), c.K(2, 2)};
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(c.R_wc(i, k));
  j["R_wc"] = r;
  j["t_wc"] = {c.t_wc.x(), c.t_wc.y(), c.t_wc.z()};
  return j;
}

Camera camera_from_json(const json& j) {
  Camera c;
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  const auto K = j.at("K").get<std::vector<double>>();
  const auto R = j.at("R_wc").get<std::vector<double>>();
  const auto t = j.at("t_wc").get<std::vector<double>>();
  if (K.size() != 9 || R.size() != 9 || t.size() != 3) throw IoError("camera arrays have wrong lengths");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) {
      c.K(i, k) = K[std::size_t(3 * i + k)];
      c.R_wc(i, k) = R[std::size_t(3 * i + k)];
    }
  c.t_wc = Vec3(t[0], t[1], t[2]);
  return c;
}

std::string frame_stem(std::size_t i) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& dataset) {
  const fs::path root(dir);
  fs::create_directories(root / "images");
  json manifest;
  manifest["version"] = 1;
  manifest["units"] = "meters";
  manifest["camera_convention"] = kConvention;
  manifest["cameras"] = json::array();
  manifest["frames"] = json::array();
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    const Frame& f = dataset.frames[i];
    const std::string stem = frame_stem(i);
    manifest["cameras"].push_back(to_json(f.camera, int(i)));
    json jf;
    jf["name"] = f.name.empty() ? stem : f.name;
    jf["camera"] = int(i);
    jf["image"] = "images/" + stem + ".png";
    write_png((root / "images" / (stem + ".png")).string(), f.image);
    if (f.depth_prior) {
      fs::create_directories(root / "depth");
      jf["depth"] = "depth/" + stem + ".pfm";
      jf["depth_scale"] = 1.0;
      write_pfm((root / "depth" / (stem + ".pfm")).string(), *f.depth_prior);
    }
    if (f.normal_prior) {
      fs::create_directories(root / "normal");
      jf["normal"] = "normal/" + stem + ".pfm";
      jf["normal_frame"] = "camera";
      write_pfm((root / "normal" / (stem + ".pfm")).string(), *f.normal_prior);
    }
    manifest["frames"].push_back(jf);
  }
  manifest["points"] = "points.ply";
  write_point_cloud((root / "points.ply").string(), dataset.points);
  write_text_file((root / "manifest.json").string(), manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::string& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    throw IoError(manifest_path + ": invalid manifest JSON: " + e.what());
  }
  const fs::path root = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& rel) { return (root / rel).string(); };
  std::vector<std::string> errors;
  Dataset ds;
  std::vector<Camera> cameras;
  try {
    if (manifest.contains("units") && manifest.at("units").get<std::string>() != "meters")
      errors.push_back("manifest: units must be meters");
    if (manifest.contains("camera_convention") && manifest.at("camera_convention").get<std::string>() != kConvention)
      errors.push_back("manifest: unsupported camera convention");
    for (const json& jc : manifest.at("cameras")) {
      const int id = jc.at("id").get<int>();
      if (id != int(cameras.size())) throw IoError("manifest: camera ids must be 0, 1, 2, ... in order");
      Camera c = camera_from_json(jc);
      try {
        c.validate();
      } catch (const std::exception& e) {
        errors.push_back("camera " + std::to_string(id) + ": " + e.what());
      }
      cameras.push_back(c);
    }
    const json& frames = manifest.at("frames");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const json& jf = frames[i];
      Frame f;
      f.name = jf.value("name", frame_stem(i));
      const std::string tag = "frame " + f.name + ": ";
      const int cam = jf.at("camera").get<int>();
      if (cam < 0 || cam >= int(cameras.size())) {
        errors.push_back(tag + "unknown camera id " + std::to_string(cam));
        continue;
      }
      f.camera = cameras[std::size_t(cam)];
      bool ok = true;
      try {
        f.image = read_png(resolve(jf.at("image").get<std::string>()));
        if (!f.image.same_shape(f.camera.width, f.camera.height)) {
          errors.push_back(tag + "image size does not match its camera");
          ok = false;
        }
      } catch (const std::exception& e) {
        errors.push_back(tag + e.what());
        ok = false;
      }
      if (jf.contains("depth")) {
        try {
          const std::string p = resolve(jf.at("depth").get<std::string>());
          const double scale = jf.value("depth_scale", 1.0);
          Image1 d = fs::path(p).extension() == ".png" ? read_png16(p, scale) : read_pfm1(p);
          if (fs::path(p).extension() != ".png") d.data *= scale;
          if (!d.same_shape(f.camera.width, f.camera.height)) errors.push_back(tag + "depth prior size mismatch");
          else f.depth_prior = std::move(d);
        } catch (const std::exception& e) {
          errors.push_back(tag + e.what());
        }
      }
      if (jf.contains("normal")) {
        try {
          Image3 n = read_pfm3(resolve(jf.at("normal").get<std::string>()));
          const std::string frame = jf.value("normal_frame", "camera");
          if (frame != "camera" && frame != "world") throw IoError("normal_frame must be camera or world");
          if (!n.same_shape(f.camera.width, f.camera.height)) throw IoError("normal prior size mismatch");
          std::size_t bad = 0;
          for (Eigen::Index k = 0; k < n.size(); ++k) {
            Vec3 v = n.data.row(k).matrix().transpose();
            const double len = v.norm();
            if (len == 0.0) continue;
            if (std::abs(len - 1.0) > 1e-3) ++bad;
            if (frame == "world") n.data.row(k) = (f.camera.R_wc * v).transpose().array();
          }
          if (bad) throw IoError(std::to_string(bad) + " normal prior pixels are not unit length");
          f.normal_prior = std::move(n);
        } catch (const std::exception& e) {
          errors.push_back(tag + e.what());
        }
      }
      if (ok) ds.frames.push_back(std::move(f));
    }
    if (manifest.contains("points")) {
      try {
        // Without match counts every point passes any confidence threshold.
        ds.points =
            read_point_cloud(resolve(manifest.at("points").get<std::string>()), std::numeric_limits<int>::max());
      } catch (const std::exception& e) {
        errors.push_back(std::string("points: ") + e.what());
      }
    }
  } catch (const json::exception& e) {
    errors.push_back(std::string("manifest: ") + e.what());
  } catch (const IoError& e) {
    errors.push_back(e.what());
  }
  if (!errors.empty()) {
    std::ostringstream os;
    os << manifest_path << ": " << errors.size() << " problem(s)";
    for (const std::string& e : errors) os << "\n  " << e;
    throw IoError(os.str());
  }
  return ds;
}

// ---- key = value configuration ------------------------------------------

ConfigMap parse_config(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("config line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw IoError("config line " + std::to_string(number) + ": empty key or value");
    out[key] = value;
  }
  return out;
}

ConfigMap read_config_file(const std::string& path) { return parse_config(read_text_file(path)); }

}  // namespace splatroom
