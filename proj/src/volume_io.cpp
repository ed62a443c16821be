#include "afl/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "afl/errors.hpp"

namespace afl {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kHeaderSuffix = ".vol.json";
constexpr const char* kPayloadSuffix = ".vol.raw";

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string base_name(const fs::path& path) {
  std::string s = path.string();
  for (const char* suffix : {kHeaderSuffix, kPayloadSuffix}) {
    if (ends_with(s, suffix)) return s.substr(0, s.size() - std::strlen(suffix));
  }
  return s;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& path, const char* bytes, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes, static_cast<std::streamsize>(n));
  if (!out) throw DataError("short write to " + path.string());
}

void write_header(const fs::path& path, const Dims& d, const char* kind, const char* dtype) {
  json h = {{"dims", {d.nz, d.ny, d.nx}}, {"kind", kind}, {"dtype", dtype}, {"byte_order", "little"}};
  const std::string text = h.dump(2) + "\n";
  write_file(header_path(path), text.data(), text.size());
}

double load_f64_le(const char* p) {
  std::uint64_t bits;
  std::memcpy(&bits, p, sizeof bits);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return std::bit_cast<double>(bits);
}

void store_f64_le(double v, char* p) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  std::memcpy(p, &bits, sizeof bits);
}

}  // namespace

fs::path header_path(const fs::path& path) { return base_name(path) + kHeaderSuffix; }
fs::path payload_path(const fs::path& path) { return base_name(path) + kPayloadSuffix; }

AnyVolume read_volume(const fs::path& path) {
  json h;
  try {
    h = json::parse(read_file(header_path(path)));
  } catch (const json::exception& e) {
    throw DataError("malformed header " + header_path(path).string() + ": " + e.what());
  }

  Dims dims;
  std::string kind, dtype;
  try {
    const auto& d = h.at("dims");
    if (!d.is_array() || d.size() != 3) throw DataError("dims must have 3 entries");
    for (const auto& e : d) {
      if (!e.is_number_integer() || e.get<long long>() <= 0) throw DataError("dims must be positive integers");
    }
    dims = {d[0].get<std::size_t>(), d[1].get<std::size_t>(), d[2].get<std::size_t>()};
    kind = h.at("kind").get<std::string>();
    dtype = h.at("dtype").get<std::string>();
    if (h.contains("byte_order") && h["byte_order"] != "little") {
      throw DataError("unsupported byte_order " + h["byte_order"].dump());
    }
  } catch (const json::exception& e) {
    throw DataError("bad header " + header_path(path).string() + ": " + e.what());
  }

  const std::string raw = read_file(payload_path(path));
  if (kind == "mask") {
    if (dtype != "u8") throw DataError("mask payload must be u8, got " + dtype);
    if (raw.size() != dims.size()) {
      throw DataError("payload has " + std::to_string(raw.size()) + " elements, header dims " +
                      dims.str() + " need " + std::to_string(dims.size()));
    }
    std::vector<std::uint8_t> data(raw.begin(), raw.end());
    return MaskVolume(dims, std::move(data));
  }
  if (kind == "image") {
    if (dtype != "f64") throw DataError("image payload must be f64, got " + dtype);
    if (raw.size() != dims.size() * sizeof(double)) {
      throw DataError("payload has " + std::to_string(raw.size() / sizeof(double)) +
                      " elements, header dims " + dims.str() + " need " + std::to_string(dims.size()));
    }
    std::vector<double> data(dims.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = load_f64_le(raw.data() + i * sizeof(double));
    try {
      return Volume3D(dims, std::move(data));
    } catch (const NumericalError& e) {
      throw DataError(payload_path(path).string() + ": " + e.what());
    }
  }
  throw DataError("unknown volume kind '" + kind + "'");
}

Volume3D read_image(const fs::path& path) {
  auto v = read_volume(path);
  if (auto* img = std::get_if<Volume3D>(&v)) return std::move(*img);
  throw DataError(path.string() + " is a mask, expected an image");
}

MaskVolume read_mask(const fs::path& path) {
  auto v = read_volume(path);
  if (auto* m = std::get_if<MaskVolume>(&v)) return std::move(*m);
  throw DataError(path.string() + " is an image, expected a mask");
}

void write_volume(const Volume3D& v, const fs::path& path) {
  std::string raw(v.size() * sizeof(double), '\0');
  for (std::size_t i = 0; i < v.size(); ++i) store_f64_le(v[i], raw.data() + i * sizeof(double));
  write_file(payload_path(path), raw.data(), raw.size());
  write_header(path, v.dims(), "image", "f64");
}

void write_volume(const MaskVolume& m, const fs::path& path) {
  const auto vals = m.values();
  write_file(payload_path(path), reinterpret_cast<const char*>(vals.data()), vals.size());
  write_header(path, m.dims(), "mask", "u8");
}

}  // namespace afl
