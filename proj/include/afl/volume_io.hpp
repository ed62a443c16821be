#pragma once

#include <filesystem>
#include <variant>

#include "afl/volume.hpp"

namespace afl {

// On-disk layout: a JSON header `<name>.vol.json`
//   {"dims": [nz, ny, nx], "kind": "image"|"mask", "dtype": "f64"|"u8", "byte_order": "little"}
// and a sibling payload `<name>.vol.raw` holding exactly nz*ny*nx little-endian
// elements in z-major order. Extra header fields are ignored.

using AnyVolume = std::variant<Volume3D, MaskVolume>;

/// Accepts `<name>`, `<name>.vol.json` or `<name>.vol.raw`; returns the header path.
std::filesystem::path header_path(const std::filesystem::path& path);
std::filesystem::path payload_path(const std::filesystem::path& path);

AnyVolume read_volume(const std::filesystem::path& path);
Volume3D read_image(const std::filesystem::path& path);
MaskVolume read_mask(const std::filesystem::path& path);

void write_volume(const Volume3D& v, const std::filesystem::path& path);
void write_volume(const MaskVolume& m, const std::filesystem::path& path);

}  // namespace afl
