// OBJ subset I/O: `v x y z` and `f i j k` lines only, 1-based indices,
// ASCII, 6 significant digits. The reader rejects any other directive.
#pragma once

#include <string>

#include "bodygraph/mesh.hpp"

namespace bodygraph {

void save_obj(const std::string& path, const TriangleMesh& m);
TriangleMesh load_obj(const std::string& path);

}  // namespace bodygraph
