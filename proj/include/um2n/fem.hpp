#pragma once

#include <vector>

#include "um2n/mesh.hpp"
#include "um2n/sparse.hpp"

namespace um2n {

/// P1 stiffness matrix (integral of grad u . grad v), natural boundary
/// conditions (no rows eliminated).
CsrMatrix assemble_stiffness(const Mesh& mesh);

/// P1 consistent mass matrix.
CsrMatrix assemble_mass(const Mesh& mesh);

/// Row-sum lumped mass (one third of the incident element area per vertex).
std::vector<double> lumped_mass(const Mesh& mesh);

}  // namespace um2n
