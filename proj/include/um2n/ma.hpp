#pragma once

#include <vector>

#include "um2n/errors.hpp"
#include "um2n/field.hpp"

namespace um2n {

struct MAParams {
  double pseudo_dt = 0.1;      // initial step; adapted during the run
  int max_iters = 500;
  double rel_tol = 1e-4;       // on |S^-1 r|_2 / theta (the smoothed misfit)
  double smoothing_weight = 1.0;
};

struct MAState {
  std::vector<double> phi;     // zero-mean potential on the computational mesh
  std::vector<Sym2> hessian;   // recovered H(phi)
  double theta = 1.0;
  std::vector<double> residual_history;  // relative residual per iteration
  MeshPtr moved;               // physical coordinates; elements shared with input
  bool converged = false;
};

/// Mesh inverted (or a vertex escaped the domain) and step halving could not
/// recover; `state.moved` is the offending iterate.
struct MATangled : NumericalError {
  MAState state;
  MATangled(std::string msg, MAState s) : NumericalError(std::move(msg)), state(std::move(s)) {}
};

/// Residual still above tolerance at max_iters; `state` is the best iterate.
struct MANotConverged : NumericalError {
  MAState state;
  MANotConverged(std::string msg, MAState s) : NumericalError(std::move(msg)), state(std::move(s)) {}
};

/// Normalization constant: integral of m over the mesh divided by its area.
double compute_theta(const Mesh& mesh, const ScalarField& m);

/// Coefficient of variation (population std / mean) of the monitor-weighted
/// element volumes {mean_e(m) * Vol(e)}; 0 means perfect equidistribution.
double equidistribution_cv(const Mesh& mesh, const ScalarField& m);

/// Relaxation solve of the equidistribution equation for the potential, then
/// vertex movement x = xi + grad(phi) with tangential boundary treatment.
/// `m` lives on the computational mesh `mesh` and is re-read at the current
/// physical coordinates each iteration.
MAState solve_ma(const MeshPtr& mesh, const ScalarField& m, const MAParams& params = {});

}  // namespace um2n
