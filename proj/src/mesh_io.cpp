#include "um2n/mesh_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include "um2n/errors.hpp"
#include "um2n/text_io.hpp"

namespace um2n {

void write_mesh_block(std::ostream& out, const Mesh& mesh) {
  for (int v = 0; v < mesh.n_vertices(); ++v)
    out << fmt_g17(mesh.xy[v].x) << ' ' << fmt_g17(mesh.xy[v].y) << ' ' << mesh.tag[v] << '\n';
  for (const auto& t : mesh.tri) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

void write_mesh(std::ostream& out, const Mesh& mesh) {
  out << "UM2N-MESH 1\n";
  out << mesh.n_vertices() << ' ' << mesh.n_elements() << '\n';
  write_mesh_block(out, mesh);
}

namespace {

void derive_domain_from_tags(Mesh& mesh, const LineReader& reader) {
  int n_corners = 0;
  for (int t : mesh.tag)
    if (is_corner(t)) n_corners = std::max(n_corners, corner_id(t));
  if (n_corners < 3) reader.fail("mesh needs at least 3 corner tags to define its domain");
  mesh.domain.corners.assign(n_corners, Vec2{});
  std::vector<bool> seen(n_corners, false);
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    const int t = mesh.tag[v];
    if (is_corner(t)) {
      const int c = corner_id(t) - 1;
      if (seen[c]) reader.fail("duplicate corner tag " + std::to_string(t));
      seen[c] = true;
      mesh.domain.corners[c] = mesh.xy[v];
    } else if (t > n_corners) {
      reader.fail("segment tag " + std::to_string(t) + " exceeds corner count");
    }
  }
  for (int c = 0; c < n_corners; ++c)
    if (!seen[c]) reader.fail("missing corner tag " + std::to_string(-(c + 1)));
}

}  // namespace

Mesh read_mesh(std::istream& in, const std::string& name) {
  LineReader reader(in, name);
  {
    TokenLine header(reader.require("header"), reader);
    const std::string magic = header.get_word("format magic");
    if (magic != "UM2N-MESH") throw ParseError(name + ": not a UM2N-MESH file", 1);
    const long long version = header.get_int("format version");
    if (version != 1) throw ParseError(name + ": unsupported mesh format version " + std::to_string(version), 1);
  }
  TokenLine counts(reader.require("vertex/element counts"), reader);
  const long long nv = counts.get_int("vertex count");
  const long long ne = counts.get_int("element count");
  if (nv < 3 || ne < 1) reader.fail("implausible mesh size");
  return read_mesh_block(reader, nv, ne);
}

Mesh read_mesh_block(LineReader& reader, long long nv, long long ne) {
  Mesh mesh;
  mesh.xy.resize(nv);
  mesh.tag.resize(nv);
  for (long long v = 0; v < nv; ++v) {
    TokenLine t(reader.require("vertex line"), reader);
    mesh.xy[v].x = t.get_double("vertex x");
    mesh.xy[v].y = t.get_double("vertex y");
    mesh.tag[v] = static_cast<int>(t.get_int("boundary tag"));
  }
  mesh.tri.resize(ne);
  for (long long e = 0; e < ne; ++e) {
    TokenLine t(reader.require("element line"), reader);
    for (int k = 0; k < 3; ++k) {
      const long long idx = t.get_int("vertex index");
      if (idx < 0 || idx >= nv) reader.fail("vertex index " + std::to_string(idx) + " out of range");
      mesh.tri[e][k] = static_cast<int>(idx);
    }
  }
  derive_domain_from_tags(mesh, reader);
  return mesh;
}

void save_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_mesh(out, mesh);
  if (!out) throw Error("failed writing " + path);
}

Mesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_mesh(in, path);
}

void export_msh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
  out << "$Nodes\n" << mesh.n_vertices() << '\n';
  for (int v = 0; v < mesh.n_vertices(); ++v)
    out << (v + 1) << ' ' << fmt_g17(mesh.xy[v].x) << ' ' << fmt_g17(mesh.xy[v].y) << " 0\n";
  out << "$EndNodes\n$Elements\n" << mesh.n_elements() << '\n';
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto& t = mesh.tri[e];
    out << (e + 1) << " 2 2 0 0 " << (t[0] + 1) << ' ' << (t[1] + 1) << ' ' << (t[2] + 1) << '\n';
  }
  out << "$EndElements\n";
  if (!out) throw Error("failed writing " + path);
}

namespace {

// Boundary tags for an imported mesh: find the boundary loop, orient it CCW,
// mark direction changes as corners, and number segments between them.
void derive_boundary_tags(Mesh& mesh, const LineReader& reader) {
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& t : mesh.tri) {
    for (int k = 0; k < 3; ++k) {
      int a = t[k], b = t[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edge_count[{a, b}];
    }
  }
  std::vector<std::vector<int>> bnd_next(mesh.n_vertices());
  int n_bnd_edges = 0;
  for (const auto& [e, c] : edge_count) {
    if (c == 1) {
      bnd_next[e.first].push_back(e.second);
      bnd_next[e.second].push_back(e.first);
      ++n_bnd_edges;
    } else if (c > 2) {
      reader.fail("non-manifold edge (" + std::to_string(e.first) + "," + std::to_string(e.second) + ")");
    }
  }
  int start = -1;
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    if (bnd_next[v].empty()) continue;
    if (bnd_next[v].size() != 2) reader.fail("boundary is not a simple loop at vertex " + std::to_string(v));
    if (start < 0) start = v;
  }
  if (start < 0) reader.fail("mesh has no boundary");

  std::vector<int> loop{start};
  for (int prev = -1, cur = start;;) {
    const auto& nb = bnd_next[cur];
    const int nxt = (nb[0] == prev) ? nb[1] : nb[0];
    if (nxt == start) break;
    loop.push_back(nxt);
    prev = cur;
    cur = nxt;
  }
  if (static_cast<int>(loop.size()) != n_bnd_edges)
    reader.fail("boundary has more than one loop (holes are not supported)");

  double area2 = 0.0;
  for (size_t i = 0; i < loop.size(); ++i)
    area2 += cross(mesh.xy[loop[i]], mesh.xy[loop[(i + 1) % loop.size()]]);
  if (area2 < 0.0) std::reverse(loop.begin(), loop.end());

  const int L = static_cast<int>(loop.size());
  std::vector<bool> corner(L, false);
  int n_corners = 0;
  for (int i = 0; i < L; ++i) {
    const Vec2 p = mesh.xy[loop[(i + L - 1) % L]], q = mesh.xy[loop[i]], r = mesh.xy[loop[(i + 1) % L]];
    Vec2 din = q - p, dout = r - q;
    const double li = norm(din), lo = norm(dout);
    if (li == 0.0 || lo == 0.0) reader.fail("duplicate boundary vertex positions");
    din = din * (1.0 / li);
    dout = dout * (1.0 / lo);
    if (std::abs(cross(din, dout)) > 1e-9 || dot(din, dout) < 0.0) {
      corner[i] = true;
      ++n_corners;
    }
  }
  if (n_corners < 3) reader.fail("boundary loop has fewer than 3 corners");

  int first = -1;
  for (int i = 0; i < L; ++i) {
    if (!corner[i]) continue;
    if (first < 0 || mesh.xy[loop[i]].x < mesh.xy[loop[first]].x - 1e-15 ||
        (std::abs(mesh.xy[loop[i]].x - mesh.xy[loop[first]].x) <= 1e-15 &&
         mesh.xy[loop[i]].y < mesh.xy[loop[first]].y))
      first = i;
  }

  mesh.tag.assign(mesh.n_vertices(), 0);
  mesh.domain.corners.clear();
  int seg = 0;
  for (int k = 0; k < L; ++k) {
    const int i = (first + k) % L;
    const int v = loop[i];
    if (corner[i]) {
      ++seg;
      mesh.domain.corners.push_back(mesh.xy[v]);
      mesh.tag[v] = -seg;
    } else {
      mesh.tag[v] = seg;
    }
  }
}

}  // namespace

Mesh read_msh(std::istream& in, const std::string& name) {
  LineReader reader(in, name);
  Mesh mesh;
  bool have_nodes = false, have_elements = false;
  std::map<long long, int> node_index;
  std::string line;
  while (reader.next(line)) {
    TokenLine t(line, reader);
    std::string section;
    {
      std::istringstream probe(line);
      if (!(probe >> section)) continue;
    }
    if (section.empty() || section[0] != '$') continue;
    if (section == "$MeshFormat") {
      TokenLine fmt(reader.require("$MeshFormat body"), reader);
      const std::string ver = fmt.get_word("format version");
      if (ver.rfind("2.2", 0) != 0) reader.fail("unsupported MSH version " + ver + " (need 2.2 ASCII)");
      const long long ftype = fmt.get_int("file type");
      if (ftype != 0) reader.fail("binary MSH is not supported");
      if (reader.require("$EndMeshFormat") != "$EndMeshFormat") reader.fail("expected $EndMeshFormat");
    } else if (section == "$Nodes") {
      TokenLine cnt(reader.require("node count"), reader);
      const long long n = cnt.get_int("node count");
      if (n < 3) reader.fail("too few nodes");
      mesh.xy.reserve(n);
      for (long long i = 0; i < n; ++i) {
        TokenLine nd(reader.require("node line"), reader);
        const long long id = nd.get_int("node id");
        const double x = nd.get_double("x"), y = nd.get_double("y");
        nd.get_double("z");
        if (!node_index.emplace(id, static_cast<int>(mesh.xy.size())).second)
          reader.fail("duplicate node id " + std::to_string(id));
        mesh.xy.push_back({x, y});
      }
      if (reader.require("$EndNodes") != "$EndNodes") reader.fail("expected $EndNodes");
      have_nodes = true;
    } else if (section == "$Elements") {
      if (!have_nodes) reader.fail("$Elements before $Nodes");
      TokenLine cnt(reader.require("element count"), reader);
      const long long n = cnt.get_int("element count");
      for (long long i = 0; i < n; ++i) {
        TokenLine el(reader.require("element line"), reader);
        el.get_int("element id");
        const long long type = el.get_int("element type");
        const long long ntags = el.get_int("tag count");
        for (long long k = 0; k < ntags; ++k) el.get_int("tag");
        if (type == 1 || type == 15) continue;  // boundary lines / points carry no 2D cells
        if (type != 2)
          throw UnsupportedElement(name + ": unsupported element type " + std::to_string(type) +
                                       " (only 3-node triangles)",
                                   reader.line_no());
        std::array<int, 3> tri{};
        for (int k = 0; k < 3; ++k) {
          const long long id = el.get_int("node id");
          auto it = node_index.find(id);
          if (it == node_index.end()) reader.fail("unknown node id " + std::to_string(id));
          tri[k] = it->second;
        }
        mesh.tri.push_back(tri);
      }
      if (reader.require("$EndElements") != "$EndElements") reader.fail("expected $EndElements");
      have_elements = true;
    } else {
      const std::string end = "$End" + section.substr(1);
      for (;;) {
        if (!reader.next(line)) throw ParseError(name + ": missing " + end, reader.line_no());
        if (line == end) break;
      }
    }
  }
  if (!have_nodes) throw ParseError(name + ": missing $Nodes section", reader.line_no());
  if (!have_elements) throw ParseError(name + ": missing $Elements section", reader.line_no());
  if (mesh.tri.empty()) throw ParseError(name + ": no triangles", reader.line_no());
  for (auto& t : mesh.tri) {
    if (triangle_area(mesh.xy[t[0]], mesh.xy[t[1]], mesh.xy[t[2]]) < 0.0) std::swap(t[1], t[2]);
  }
  mesh.tag.assign(mesh.n_vertices(), 0);
  derive_boundary_tags(mesh, reader);
  return mesh;
}

Mesh import_msh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_msh(in, path);
}

}  // namespace um2n
