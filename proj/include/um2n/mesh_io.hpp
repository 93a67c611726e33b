#pragma once

#include <iosfwd>
#include <string>

#include "um2n/mesh.hpp"
#include "um2n/text_io.hpp"

namespace um2n {

// Native text format:
//   UM2N-MESH 1
//   <n_vertices> <n_elements>
//   x y tag          (one line per vertex, 17 significant digits)
//   i j k            (one line per element, 0-based)
// The domain polygon is recovered from the corner tags on load.

void write_mesh(std::ostream& out, const Mesh& mesh);
Mesh read_mesh(std::istream& in, const std::string& name = "mesh");

// The vertex and element lines alone, without the header: the same block is
// embedded in dataset records, where the counts come from the record header.
void write_mesh_block(std::ostream& out, const Mesh& mesh);
Mesh read_mesh_block(LineReader& reader, long long n_vertices, long long n_elements);

void save_mesh(const Mesh& mesh, const std::string& path);
Mesh load_mesh(const std::string& path);

// MSH 2.2 ASCII subset: $MeshFormat/$Nodes/$Elements, 3-node triangles only
// (line and point elements are skipped; anything else is rejected).
// Boundary tags and the domain polygon are derived from the boundary loop.
void export_msh(const Mesh& mesh, const std::string& path);
Mesh import_msh(const std::string& path);
Mesh read_msh(std::istream& in, const std::string& name = "msh");

}  // namespace um2n
