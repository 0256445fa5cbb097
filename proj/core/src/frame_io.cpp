#include "atomforge/frame_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "atomforge/errors.hpp"
#include "json.hpp"

namespace atomforge::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint16_t>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint16_t>;
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) bits |= static_cast<U>(static_cast<U>(p[b]) << (8 * b));
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(fmt::format("write failed: {}", path.string()));
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json rois_to_json(const std::vector<imaging::Roi>& rois) {
  json arr = json::array();
  for (const auto& r : rois) arr.push_back({{"site", r.site}, {"x0", r.x0}, {"y0", r.y0}, {"size", r.size}});
  return arr;
}

std::vector<imaging::Roi> rois_from_json(const json& arr) {
  std::vector<imaging::Roi> rois;
  for (const auto& r : arr)
    rois.push_back({r.at("site").get<int>(), r.at("x0").get<int>(), r.at("y0").get<int>(), r.at("size").get<int>()});
  return rois;
}

json read_sidecar(const fs::path& raw_path, const char* expected_format) {
  const auto side = sidecar_path(raw_path);
  json j;
  try {
    j = json::parse(read_bytes(side));
  } catch (const json::exception& e) {
    throw IoError(fmt::format("{}: malformed sidecar ({})", side.string(), e.what()));
  }
  if (j.value("format", std::string{}) != expected_format)
    throw IoError(fmt::format("{}: expected format {}", side.string(), expected_format));
  return j;
}

}  // namespace

fs::path sidecar_path(const fs::path& raw_path) {
  fs::path p = raw_path;
  p.replace_extension(".json");
  return p;
}

void write_frame(const fs::path& raw_path, const imaging::Frame& f) {
  std::string bytes;
  bytes.reserve(f.counts.size() * 2);
  for (auto c : f.counts) put_le(bytes, c);
  write_bytes(raw_path, bytes);
  json side = {{"format", "u16le"},           {"width", f.width}, {"height", f.height},
               {"exposure_ms", f.exposure_ms}, {"seed", f.seed},   {"roi_list", rois_to_json(f.rois)}};
  write_bytes(sidecar_path(raw_path), side.dump(2) + "\n");
}

imaging::Frame read_frame(const fs::path& raw_path) {
  const json side = read_sidecar(raw_path, "u16le");
  imaging::Frame f;
  try {
    f.width = side.at("width").get<int>();
    f.height = side.at("height").get<int>();
    f.exposure_ms = side.at("exposure_ms").get<double>();
    f.seed = side.at("seed").get<std::uint64_t>();
    f.rois = rois_from_json(side.at("roi_list"));
  } catch (const json::exception& e) {
    throw IoError(fmt::format("{}: {}", sidecar_path(raw_path).string(), e.what()));
  }
  const std::string bytes = read_bytes(raw_path);
  const std::size_t n = static_cast<std::size_t>(f.width) * f.height;
  if (bytes.size() != 2 * n)
    throw IoError(fmt::format("{}: expected {} bytes, found {}", raw_path.string(), 2 * n, bytes.size()));
  f.counts.resize(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < n; ++i) f.counts[i] = get_le<std::uint16_t>(p + 2 * i);
  return f;
}

void write_image(const fs::path& raw_path, const analysis::AveragedImage& img) {
  std::string bytes;
  bytes.reserve(img.pixels.size() * 8);
  for (double v : img.pixels) put_le(bytes, v);
  write_bytes(raw_path, bytes);
  json side = {{"format", "f64le"},
               {"width", img.width},
               {"height", img.height},
               {"exposure_ms", img.exposure_ms},
               {"roi_list", rois_to_json(img.rois)},
               {"n_frames", img.n_frames},
               {"background_frames", img.background_frames},
               {"offset", img.offset},
               {"scale", img.scale}};
  write_bytes(sidecar_path(raw_path), side.dump(2) + "\n");
}

analysis::AveragedImage read_image(const fs::path& raw_path) {
  const json side = read_sidecar(raw_path, "f64le");
  analysis::AveragedImage img;
  try {
    img.width = side.at("width").get<int>();
    img.height = side.at("height").get<int>();
    img.exposure_ms = side.at("exposure_ms").get<double>();
    img.rois = rois_from_json(side.at("roi_list"));
    img.n_frames = side.at("n_frames").get<int>();
    img.background_frames = side.at("background_frames").get<int>();
    img.offset = side.at("offset").get<double>();
    img.scale = side.at("scale").get<double>();
  } catch (const json::exception& e) {
    throw IoError(fmt::format("{}: {}", sidecar_path(raw_path).string(), e.what()));
  }
  const std::string bytes = read_bytes(raw_path);
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  if (bytes.size() != 8 * n)
    throw IoError(fmt::format("{}: expected {} bytes, found {}", raw_path.string(), 8 * n, bytes.size()));
  img.pixels.resize(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < n; ++i) img.pixels[i] = get_le<double>(p + 8 * i);
  return img;
}

void write_pgm(const fs::path& path, int width, int height, const std::vector<double>& pixels) {
  std::string bytes = fmt::format("P5\n{} {}\n255\n", width, height);
  const auto [lo, hi] = std::minmax_element(pixels.begin(), pixels.end());
  const double span = pixels.empty() ? 0.0 : *hi - *lo;
  for (double v : pixels) {
    const double g = span > 0 ? (v - *lo) / span * 255.0 : 0.0;
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(g))));
  }
  write_bytes(path, bytes);
}

std::vector<fs::path> list_raw_files(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError(fmt::format("not a directory: {}", dir.string()));
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".raw") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace atomforge::io
