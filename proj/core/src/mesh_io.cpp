#include "bodygraph/mesh_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bodygraph {

void save_obj(const std::string& path, const TriangleMesh& m) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write: " + path);
  for (const auto& v : m.vertices) std::fprintf(f, "v %.6g %.6g %.6g\n", v.x, v.y, v.z);
  for (const auto& face : m.faces)
    std::fprintf(f, "f %d %d %d\n", face[0] + 1, face[1] + 1, face[2] + 1);
  std::fclose(f);
}

TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read: " + path);
  TriangleMesh m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag.empty()) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v.x >> v.y >> v.z))
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed vertex");
      m.vertices.push_back(v);
    } else if (tag == "f") {
      long a, b, c;
      if (!(ss >> a >> b >> c))
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed face");
      const long n = static_cast<long>(m.vertices.size());
      if (a < 1 || a > n || b < 1 || b > n || c < 1 || c > n)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": face index out of range");
      m.faces.push_back({static_cast<std::int32_t>(a - 1), static_cast<std::int32_t>(b - 1),
                         static_cast<std::int32_t>(c - 1)});
    } else {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unsupported directive '" +
                               tag + "' (only v and f are accepted)");
    }
  }
  return m;
}

}  // namespace bodygraph
