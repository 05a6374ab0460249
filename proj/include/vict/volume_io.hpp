#pragma once

#include <filesystem>

#include "vict/volume.hpp"

namespace vict {

/// `<name>.vhdr` / `<name>.vraw` for any path naming either file or the stem.
std::filesystem::path header_path(const std::filesystem::path& p);
std::filesystem::path raw_path(const std::filesystem::path& p);

/// Writes header and little-endian raw data. Density volumes are stored as float32.
void write_volume(const std::filesystem::path& p, const HuVolume& v);
void write_volume(const std::filesystem::path& p, const FloatVolume& v);
void write_volume(const std::filesystem::path& p, const MaskVolume& v);
void write_volume(const std::filesystem::path& p, const DensityVolume& v);
void write_volume(const std::filesystem::path& p, const AnyVolume& v);

AnyVolume read_volume(const std::filesystem::path& p);

template <class T>
Volume<T> read_volume_as(const std::filesystem::path& p) {
  return expect<T>(read_volume(p), p.string().c_str());
}

/// CRC-32 of a file's bytes, hex-encoded.
std::string file_checksum(const std::filesystem::path& p);

}  // namespace vict
