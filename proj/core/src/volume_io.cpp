#include "bodygraph/volume_io.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace bodygraph {

namespace {

void pack_rows(const std::vector<std::uint8_t>& data, int nx, int ny, int nz,
               std::vector<std::uint8_t>& out) {
  const int row_bytes = (nx + 7) / 8;
  out.assign(static_cast<std::size_t>(row_bytes) * ny * nz, 0);
  std::size_t src = 0;
  std::size_t row_base = 0;
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x, ++src)
        if (data[src]) out[row_base + x / 8] |= static_cast<std::uint8_t>(1u << (x % 8));
      row_base += row_bytes;
    }
}

void unpack_rows(const std::vector<std::uint8_t>& packed, int nx, int ny, int nz,
                 std::vector<std::uint8_t>& out) {
  const int row_bytes = (nx + 7) / 8;
  out.assign(static_cast<std::size_t>(nx) * ny * nz, 0);
  std::size_t dst = 0;
  std::size_t row_base = 0;
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x, ++dst)
        out[dst] = (packed[row_base + x / 8] >> (x % 8)) & 1u;
      row_base += row_bytes;
    }
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot read: " + path);
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  return bytes;
}

void write_header(const std::string& path, int nx, int ny, int nz, double sx, double sy,
                  double sz) {
  nlohmann::json hdr;
  hdr["dims"] = {nx, ny, nz};
  hdr["spacing"] = {sx, sy, sz};
  hdr["encoding"] = "bitpack-x-fastest";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << hdr.dump(2) << "\n";
}

struct Header {
  int nx, ny, nz;
  double sx, sy, sz;
};

Header read_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read: " + path);
  nlohmann::json hdr = nlohmann::json::parse(in);
  if (hdr.at("encoding").get<std::string>() != "bitpack-x-fastest")
    throw std::runtime_error("unsupported volume encoding in " + path);
  Header h{};
  h.nx = hdr.at("dims").at(0).get<int>();
  h.ny = hdr.at("dims").at(1).get<int>();
  h.nz = hdr.at("dims").at(2).get<int>();
  h.sx = hdr.at("spacing").at(0).get<double>();
  h.sy = hdr.at("spacing").at(1).get<double>();
  h.sz = hdr.at("spacing").at(2).get<double>();
  return h;
}

}  // namespace

void save_volume(const std::string& base_path, const VoxelVolume& v) {
  v.check_invariants();
  write_header(base_path + ".volhdr", v.nx, v.ny, v.nz, v.sx, v.sy, v.sz);
  std::vector<std::uint8_t> packed;
  pack_rows(v.data, v.nx, v.ny, v.nz, packed);
  write_file(base_path + ".volraw", packed);
}

VoxelVolume load_volume(const std::string& base_path) {
  const Header h = read_header(base_path + ".volhdr");
  const auto packed = read_file(base_path + ".volraw");
  const std::size_t expected = static_cast<std::size_t>((h.nx + 7) / 8) * h.ny * h.nz;
  if (packed.size() != expected)
    throw std::runtime_error("payload size mismatch for " + base_path + ".volraw");
  VoxelVolume v(h.nx, h.ny, h.nz, h.sx, h.sy, h.sz);
  unpack_rows(packed, h.nx, h.ny, h.nz, v.data);
  return v;
}

void save_silhouette(const std::string& base_path, const Silhouette& s) {
  write_header(base_path + ".volhdr", s.w, s.h, 1, s.sw, s.sh, 1.0);
  std::vector<std::uint8_t> packed;
  pack_rows(s.data, s.w, s.h, 1, packed);
  write_file(base_path + ".volraw", packed);
}

Silhouette load_silhouette(const std::string& base_path, SilhouetteAxis axis) {
  const Header h = read_header(base_path + ".volhdr");
  if (h.nz != 1) throw std::runtime_error("not a silhouette (nz != 1): " + base_path);
  const auto packed = read_file(base_path + ".volraw");
  Silhouette s;
  s.axis = axis;
  s.w = h.nx;
  s.h = h.ny;
  s.sw = h.sx;
  s.sh = h.sy;
  unpack_rows(packed, h.nx, h.ny, 1, s.data);
  return s;
}

}  // namespace bodygraph
