#include "vict/volume_io.hpp"

#include <boost/crc.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "vict/keyvalue.hpp"

namespace vict {

namespace {

static_assert(std::endian::native == std::endian::little,
              "volume raw files are little-endian; big-endian hosts are not supported");

template <class T>
void write_impl(const std::filesystem::path& p, const Geometry& g, std::span<const T> data,
                const char* dtype) {
  KeyValueWriter w;
  w.put("dims", std::to_string(g.dims[0]) + " " + std::to_string(g.dims[1]) + " " +
                    std::to_string(g.dims[2]));
  w.put("spacing_mm", g.spacing);
  w.put("origin_mm", g.origin);
  std::vector<double> dir;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) dir.push_back(g.direction(r, c));
  }
  w.put_reals("direction", dir);
  w.put("dtype", std::string(dtype));
  w.put("byte_order", std::string("little"));
  w.write(header_path(p));

  std::ofstream out(raw_path(p), std::ios::binary);
  if (!out) throw InputError("cannot write " + raw_path(p).string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size_bytes()));
  if (!out) throw InputError("write failed: " + raw_path(p).string());
}

template <class T>
Volume<T> read_raw(const std::filesystem::path& raw, const Geometry& g) {
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw InputError("cannot open " + raw.string());
  std::vector<T> data(g.voxel_count());
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(T)));
  if (in.gcount() != static_cast<std::streamsize>(data.size() * sizeof(T))) {
    throw InputError(raw.string() + ": raw file shorter than header dims");
  }
  in.peek();
  if (!in.eof()) throw InputError(raw.string() + ": raw file longer than header dims");
  return Volume<T>(g, std::move(data));
}

}  // namespace

std::filesystem::path header_path(const std::filesystem::path& p) {
  auto out = p;
  if (out.extension() == ".vhdr" || out.extension() == ".vraw") out.replace_extension();
  out += ".vhdr";
  return out;
}

std::filesystem::path raw_path(const std::filesystem::path& p) {
  auto out = p;
  if (out.extension() == ".vhdr" || out.extension() == ".vraw") out.replace_extension();
  out += ".vraw";
  return out;
}

void write_volume(const std::filesystem::path& p, const HuVolume& v) {
  write_impl(p, v.geometry(), v.data(), "int16");
}

void write_volume(const std::filesystem::path& p, const FloatVolume& v) {
  write_impl(p, v.geometry(), v.data(), "float32");
}

void write_volume(const std::filesystem::path& p, const MaskVolume& v) {
  write_impl(p, v.geometry(), v.data(), "uint8");
}

void write_volume(const std::filesystem::path& p, const DensityVolume& v) {
  std::vector<float> narrowed(v.data().begin(), v.data().end());
  write_impl(p, v.geometry(), std::span<const float>(narrowed), "float32");
}

void write_volume(const std::filesystem::path& p, const AnyVolume& v) {
  std::visit([&](const auto& vol) { write_volume(p, vol); }, v);
}

AnyVolume read_volume(const std::filesystem::path& p) {
  const auto hdr = header_path(p);
  const auto tree = read_keyvalue_file(hdr);
  Geometry g;
  const auto dims = get_ints(tree, "dims", 3);
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0 || dims[a] > (1 << 20)) throw InputError(hdr.string() + ": bad dims");
    g.dims[a] = static_cast<int>(dims[a]);
  }
  g.spacing = get_vec3(tree, "spacing_mm");
  g.origin = get_vec3(tree, "origin_mm");
  const auto dir = get_reals(tree, "direction", 9);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) g.direction(r, c) = dir[3 * r + c];
  }
  g.validate();
  if (tree.get<std::string>("byte_order", "little") != "little") {
    throw InputError(hdr.string() + ": only little-endian volumes are supported");
  }
  const auto dtype = get_string(tree, "dtype");
  const auto raw = raw_path(p);
  if (dtype == "int16") return read_raw<std::int16_t>(raw, g);
  if (dtype == "float32") return read_raw<float>(raw, g);
  if (dtype == "uint8") {
    auto m = read_raw<std::uint8_t>(raw, g);
    validate_mask(m);
    return m;
  }
  throw InputError(hdr.string() + ": unknown dtype '" + dtype + "'");
}

std::string file_checksum(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open " + p.string());
  boost::crc_32_type crc;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    crc.process_bytes(buf, static_cast<std::size_t>(in.gcount()));
  }
  std::ostringstream out;
  out << std::hex << crc.checksum();
  return out.str();
}

}  // namespace vict
