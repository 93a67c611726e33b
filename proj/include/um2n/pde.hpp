#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "um2n/datagen.hpp"
#include "um2n/field.hpp"
#include "um2n/ma.hpp"
#include "um2n/monitor.hpp"
#include "um2n/net.hpp"

namespace um2n {

/// Advected ring benchmark: a Gaussian ring of radius r0 is transported by a
/// swirling velocity field that reverses direction at t_end/2, so the exact
/// final state equals the initial one.
struct SwirlConfig {
  double r0 = 0.2;
  Vec2 center{0.30, 0.30};
  double sigma = 0.05 / 3.0;
  double t_end = 1.0;
  int n_steps = 200;  // must be even: the velocity reverses between the halves
  MonitorConfig monitor{MonitorKind::combined, 5.0, 10.0, 1e-12};
};

void validate(const SwirlConfig& cfg);

/// -lap(u) + u = f on the mesh with natural (zero-flux) boundary conditions,
/// P1 Galerkin, solved to relative residual 1e-10. `f` holds vertex values.
ScalarField solve_helmholtz(const MeshPtr& mesh, const std::vector<double>& f);
ScalarField solve_helmholtz(const MeshPtr& mesh, const std::function<double(Vec2)>& f);

/// c = 0.9*a(t) * (sin^2(pi x) sin(2 pi y), -sin^2(pi y) sin(2 pi x)) with
/// a(t) = 1 before t_end/2 and -1 from there on. Divergence-free, zero
/// normal component on the unit-square boundary. Defined for 0 <= t < t_end.
Vec2 swirl_velocity(Vec2 p, double t, const SwirlConfig& cfg);

/// Ring profile exp(-(dist(p, center) - r0)^2 / (2 sigma^2)) per vertex.
ScalarField swirl_initial(const MeshPtr& mesh, const SwirlConfig& cfg);

/// One implicit-midpoint step of u_t + c.grad(u) = 0 on the given (current)
/// coordinates, SUPG-stabilized P1. The velocity is evaluated at t + dt/2; a
/// midpoint landing exactly on the reversal instant uses the pre-reversal
/// field. Requires dt * max|c| / min_edge <= 1 (the advective CFL number).
ScalarField advect_step(const MeshPtr& mesh, const ScalarField& u, double t, double dt,
                        const SwirlConfig& cfg);

enum class Problem { helmholtz, swirl };
enum class Mover { none, ma, um2n };

Problem problem_from_string(const std::string& s);
Mover mover_from_string(const std::string& s);
std::string to_string(Problem p);
std::string to_string(Mover m);

/// Which mesh mover the simulation loop applies between time steps.
struct MoverSpec {
  Mover kind = Mover::none;
  MAParams ma;                            // used when kind == ma
  std::shared_ptr<const NetParams> net;   // required when kind == um2n
};

struct MMESConfig {
  SwirlConfig swirl;
  FieldSpec source;              // Helmholtz right-hand side (sum of Gaussians)
  MonitorConfig monitor;         // monitor for Helmholtz runs (swirl has its own)
  bool cumulative_movement = false;  // move the already-moved mesh instead of
                                     // always starting from the initial one
  int ref_refinements = 2;       // reference mesh = this many midpoint refinements
};

void validate(const MMESConfig& cfg);

/// Outcome of a mover-in-the-loop run. Errors are L2 distances to a fixed
/// high-resolution reference run interpolated onto the working mesh; the
/// headline er_percent compares final-time errors.
struct ERReport {
  double e_original = std::numeric_limits<double>::quiet_NaN();
  double e_adapted = std::numeric_limits<double>::quiet_NaN();
  double er_percent = std::numeric_limits<double>::quiet_NaN();  // unset when failed
  double er_percent_time_avg = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  int failed_at = -1;       // step index of the tangling event
  int tangling_events = 0;
  std::vector<double> err_original;  // per-step error of the fixed-mesh run
  std::vector<double> err_adapted;   // per-step error of the adapted run
  std::vector<double> final_u_original;
  std::vector<double> final_u_adapted;
  MeshPtr final_mesh_adapted;
};

/// Simulation loop with mesh movement between steps: solve, compute the
/// monitor, move the mesh, transfer the solution, advance. A tangled moved
/// mesh stops the run and marks it failed. mover none reproduces the plain
/// fixed-mesh solve exactly.
ERReport run_mmes(Problem problem, const MoverSpec& mover, const MeshPtr& mesh,
                  const MMESConfig& cfg);

/// 100 * (e_original - e_adapted) / e_original; requires e_original > 0.
double error_reduction(double e_original, double e_adapted);

}  // namespace um2n
