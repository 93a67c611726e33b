#include "um2n/pde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "um2n/fem.hpp"
#include "um2n/sparse.hpp"
#include "um2n/text_io.hpp"

namespace um2n {

namespace {

constexpr double kSolveTol = 1e-10;

inline Vec2 perp(Vec2 v) { return {v.y, -v.x}; }

void check_working_mesh(const MeshPtr& mesh, const char* who) {
  if (!mesh) throw InvalidArgument(std::string(who) + ": null mesh");
  if (mesh->n_elements() == 0) throw InvalidArgument(std::string(who) + ": empty mesh");
  if (!detect_tangling(*mesh).empty()) throw InvalidArgument(std::string(who) + ": tangled mesh");
}

/// L2 distance between a coarse-run field and the reference-run field,
/// measured on the coarse mesh.
double field_error(const ScalarField& u, const ScalarField& u_ref) {
  return l2_norm_diff(u, interpolate(u_ref, u.mesh));
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

MeshPtr reference_mesh(const MeshPtr& mesh, int refinements) {
  Mesh r = *mesh;
  for (int i = 0; i < refinements; ++i) r = refine_uniform(r);
  return std::make_shared<const Mesh>(std::move(r));
}

/// Moves `base` under the monitor. A tangling abort inside the relaxation
/// solver counts as a failed movement, not an error.
MeshPtr apply_mover(const MoverSpec& mover, const MeshPtr& base, std::vector<double> m,
                    ERReport& rep) {
  switch (mover.kind) {
    case Mover::none:
      return base;
    case Mover::ma:
      try {
        return solve_ma(base, ScalarField{base, std::move(m)}, mover.ma).moved;
      } catch (const MATangled&) {
        rep.failed = true;
        ++rep.tangling_events;
        return base;
      }
    case Mover::um2n:
      return net_forward(*mover.net, base, m);
  }
  throw InvalidArgument("unknown mover");
}

}  // namespace

void validate(const SwirlConfig& cfg) {
  if (!(cfg.r0 > 0.0)) throw InvalidArgument("swirl: r0 must be positive");
  if (!(cfg.sigma > 0.0)) throw InvalidArgument("swirl: sigma must be positive");
  if (!(cfg.t_end > 0.0)) throw InvalidArgument("swirl: t_end must be positive");
  if (cfg.n_steps <= 0 || cfg.n_steps % 2 != 0)
    throw InvalidArgument("swirl: n_steps must be positive and even, got " +
                          std::to_string(cfg.n_steps));
}

void validate(const MMESConfig& cfg) {
  validate(cfg.swirl);
  if (cfg.ref_refinements < 1)
    throw InvalidArgument("mmes: ref_refinements must be >= 1");
}

ScalarField solve_helmholtz(const MeshPtr& mesh, const std::vector<double>& f) {
  check_working_mesh(mesh, "solve_helmholtz");
  const int n = mesh->n_vertices();
  if (static_cast<int>(f.size()) != n)
    throw InvalidArgument("solve_helmholtz: source has " + std::to_string(f.size()) +
                          " values for " + std::to_string(n) + " vertices");

  MatrixBuilder builder(n);
  std::vector<double> b(n, 0.0);
  for (const auto& t : mesh->tri) {
    const Vec2 p0 = mesh->xy[t[0]], p1 = mesh->xy[t[1]], p2 = mesh->xy[t[2]];
    const double area = triangle_area(p0, p1, p2);
    const Vec2 g[3] = {(1.0 / (2.0 * area)) * perp(p1 - p2),
                       (1.0 / (2.0 * area)) * perp(p2 - p0),
                       (1.0 / (2.0 * area)) * perp(p0 - p1)};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const double mass = area / (i == j ? 6.0 : 12.0);
        builder.add(t[i], t[j], area * dot(g[i], g[j]) + mass);
        b[t[i]] += mass * f[t[j]];
      }
    }
  }

  std::vector<double> x(n, 0.0);
  const CsrMatrix A = builder.build();
  const CgResult res = conjugate_gradient(A, b, x, kSolveTol, 100 + 10 * n);
  if (res.rel_residual >= kSolveTol)
    throw NumericalError("solve_helmholtz: stalled at relative residual " +
                         fmt_g17(res.rel_residual));
  return {mesh, std::move(x)};
}

ScalarField solve_helmholtz(const MeshPtr& mesh, const std::function<double(Vec2)>& f) {
  check_working_mesh(mesh, "solve_helmholtz");
  if (!f) throw InvalidArgument("solve_helmholtz: empty source function");
  std::vector<double> fv(mesh->n_vertices());
  for (int v = 0; v < mesh->n_vertices(); ++v) fv[v] = f(mesh->xy[v]);
  return solve_helmholtz(mesh, fv);
}

Vec2 swirl_velocity(Vec2 p, double t, const SwirlConfig& cfg) {
  constexpr double pi = std::numbers::pi;
  const double a = (t < 0.5 * cfg.t_end) ? 1.0 : -1.0;
  const double sx = std::sin(pi * p.x), sy = std::sin(pi * p.y);
  return {0.9 * a * sx * sx * std::sin(2.0 * pi * p.y),
          -0.9 * a * sy * sy * std::sin(2.0 * pi * p.x)};
}

ScalarField swirl_initial(const MeshPtr& mesh, const SwirlConfig& cfg) {
  check_working_mesh(mesh, "swirl_initial");
  validate(cfg);
  std::vector<double> u(mesh->n_vertices());
  for (int v = 0; v < mesh->n_vertices(); ++v) {
    const double d = norm(mesh->xy[v] - cfg.center) - cfg.r0;
    u[v] = std::exp(-d * d / (2.0 * cfg.sigma * cfg.sigma));
  }
  return {mesh, std::move(u)};
}

ScalarField advect_step(const MeshPtr& mesh, const ScalarField& u, double t, double dt,
                        const SwirlConfig& cfg) {
  validate(cfg);
  check_working_mesh(mesh, "advect_step");
  const int n = mesh->n_vertices();
  if (static_cast<int>(u.values.size()) != n)
    throw InvalidArgument("advect_step: field has " + std::to_string(u.values.size()) +
                          " values for " + std::to_string(n) + " vertices");
  if (!std::isfinite(dt) || dt < 0.0) throw InvalidArgument("advect_step: dt must be >= 0");
  if (!(t >= 0.0) || !(t < cfg.t_end))
    throw InvalidArgument("advect_step: t must lie in [0, t_end)");

  // velocity evaluation time: the step midpoint; landing exactly on the
  // reversal instant advects with the pre-reversal field
  double te = t + 0.5 * dt;
  if (te == 0.5 * cfg.t_end) te = std::nextafter(te, 0.0);

  double cmax = 0.0;
  for (const Vec2 p : mesh->xy) cmax = std::max(cmax, norm(swirl_velocity(p, te, cfg)));
  double hmin = std::numeric_limits<double>::infinity();
  for (const auto& tr : mesh->tri)
    for (int e = 0; e < 3; ++e)
      hmin = std::min(hmin, norm(mesh->xy[tr[e]] - mesh->xy[tr[(e + 1) % 3]]));
  const double cfl = dt * cmax / hmin;
  if (cfl > 1.0)
    throw InvalidArgument("advect_step: CFL ratio " + fmt_g17(cfl) +
                          " exceeds 1 (dt too large for this mesh)");

  MatrixBuilder lhs(n), rhs(n);
  for (const auto& tr : mesh->tri) {
    const Vec2 p0 = mesh->xy[tr[0]], p1 = mesh->xy[tr[1]], p2 = mesh->xy[tr[2]];
    const double area = triangle_area(p0, p1, p2);
    const Vec2 g[3] = {(1.0 / (2.0 * area)) * perp(p1 - p2),
                       (1.0 / (2.0 * area)) * perp(p2 - p0),
                       (1.0 / (2.0 * area)) * perp(p0 - p1)};

    // convection with edge-midpoint quadrature (q[i] is opposite vertex i)
    const Vec2 q[3] = {0.5 * (p1 + p2), 0.5 * (p2 + p0), 0.5 * (p0 + p1)};
    Vec2 cq[3];
    for (int k = 0; k < 3; ++k) cq[k] = swirl_velocity(q[k], te, cfg);

    // streamline stabilization with the centroid velocity; tau blends the
    // time-step and transport scales and vanishes as dt -> 0
    const Vec2 cc = swirl_velocity((1.0 / 3.0) * (p0 + p1 + p2), te, cfg);
    const double cn = norm(cc);
    double stream = 0.0;
    for (int i = 0; i < 3; ++i) stream += std::abs(dot(cc, g[i]));
    double tau = 0.0;
    if (dt > 0.0 && cn > 0.0 && stream > 0.0) {
      const double hs = 2.0 * cn / stream;
      const double a = 2.0 / dt, b = 2.0 * cn / hs;
      tau = 1.0 / std::sqrt(a * a + b * b);
    }

    for (int i = 0; i < 3; ++i) {
      const double supg_w = tau * dot(cc, g[i]);  // streamline part of the test function
      for (int j = 0; j < 3; ++j) {
        double conv = 0.0;
        for (int k = 0; k < 3; ++k)
          if (k != i) conv += (area / 3.0) * 0.5 * dot(cq[k], g[j]);
        conv += supg_w * dot(cc, g[j]) * area;
        const double mass = area / (i == j ? 6.0 : 12.0) + supg_w * area / 3.0;
        lhs.add(tr[i], tr[j], mass + 0.5 * dt * conv);
        rhs.add(tr[i], tr[j], mass - 0.5 * dt * conv);
      }
    }
  }

  std::vector<double> b = rhs.build().multiply(u.values);
  std::vector<double> x = u.values;
  const CgResult res = bicgstab(lhs.build(), b, x, kSolveTol, 100 + 10 * n);
  if (res.rel_residual >= kSolveTol)
    throw NumericalError("advect_step: stalled at relative residual " +
                         fmt_g17(res.rel_residual));
  return {mesh, std::move(x)};
}

Problem problem_from_string(const std::string& s) {
  if (s == "helmholtz") return Problem::helmholtz;
  if (s == "swirl") return Problem::swirl;
  throw InvalidArgument("unknown problem '" + s + "' (expected helmholtz or swirl)");
}

Mover mover_from_string(const std::string& s) {
  if (s == "none") return Mover::none;
  if (s == "ma") return Mover::ma;
  if (s == "um2n") return Mover::um2n;
  throw InvalidArgument("unknown mover '" + s + "' (expected none, ma or um2n)");
}

std::string to_string(Problem p) { return p == Problem::helmholtz ? "helmholtz" : "swirl"; }

std::string to_string(Mover m) {
  switch (m) {
    case Mover::none: return "none";
    case Mover::ma: return "ma";
    case Mover::um2n: return "um2n";
  }
  return "none";
}

double error_reduction(double e_original, double e_adapted) {
  if (!(e_original > 0.0))
    throw InvalidArgument("error_reduction: original error must be positive, got " +
                          fmt_g17(e_original));
  return 100.0 * (e_original - e_adapted) / e_original;
}

namespace {

ERReport run_helmholtz(const MoverSpec& mover, const MeshPtr& mesh, const MMESConfig& cfg) {
  validate(cfg.source);
  const auto f = [&cfg](Vec2 p) { return eval_field(cfg.source, p); };
  const MeshPtr ref = reference_mesh(mesh, cfg.ref_refinements);
  const ScalarField u_ref = solve_helmholtz(ref, f);
  const ScalarField u0 = solve_helmholtz(mesh, f);

  ERReport rep;
  rep.e_original = field_error(u0, u_ref);
  rep.err_original = {rep.e_original};
  rep.final_u_original = u0.values;

  if (mover.kind == Mover::none) {
    rep.e_adapted = rep.e_original;
    rep.er_percent = 0.0;
    rep.er_percent_time_avg = 0.0;
    rep.err_adapted = rep.err_original;
    rep.final_u_adapted = u0.values;
    rep.final_mesh_adapted = mesh;
    return rep;
  }

  const ScalarField mon = compute_monitor(u0, cfg.monitor);
  const MeshPtr moved = apply_mover(mover, mesh, mon.values, rep);
  if (!rep.failed && !detect_tangling(*moved).empty()) {
    rep.failed = true;
    ++rep.tangling_events;
  }
  if (rep.failed) {
    rep.failed_at = 0;
    return rep;
  }

  const ScalarField u1 = solve_helmholtz(moved, f);
  rep.e_adapted = field_error(u1, u_ref);
  rep.err_adapted = {rep.e_adapted};
  rep.er_percent = error_reduction(rep.e_original, rep.e_adapted);
  rep.er_percent_time_avg = rep.er_percent;
  rep.final_u_adapted = u1.values;
  rep.final_mesh_adapted = moved;
  return rep;
}

ERReport run_swirl(const MoverSpec& mover, const MeshPtr& mesh, const MMESConfig& cfg) {
  const SwirlConfig& sc = cfg.swirl;
  const double dt = sc.t_end / sc.n_steps;
  const MeshPtr ref = reference_mesh(mesh, cfg.ref_refinements);
  const bool moving = mover.kind != Mover::none;

  ScalarField u_ref = swirl_initial(ref, sc);
  ScalarField u_fix = swirl_initial(mesh, sc);
  MeshPtr x_cur = mesh;
  ScalarField u_ad = moving ? swirl_initial(mesh, sc) : ScalarField{};

  ERReport rep;
  for (int k = 0; k < sc.n_steps; ++k) {
    const double t = k * dt;
    if (moving) {
      // monitor on the current coordinates, movement from the chosen base mesh
      const ScalarField mon = compute_monitor(ScalarField{x_cur, u_ad.values}, sc.monitor);
      const MeshPtr base = cfg.cumulative_movement ? x_cur : mesh;
      std::vector<double> mvals =
          (base == x_cur) ? mon.values : interpolate(mon, base).values;
      const MeshPtr moved = apply_mover(mover, base, std::move(mvals), rep);
      if (!rep.failed && !detect_tangling(*moved).empty()) {
        rep.failed = true;
        ++rep.tangling_events;
      }
      if (rep.failed) {
        rep.failed_at = k;
        break;
      }
      if (moved.get() != x_cur.get()) {
        u_ad = interpolate(ScalarField{x_cur, std::move(u_ad.values)}, moved);
        x_cur = moved;
      }
    }

    u_ref = advect_step(ref, u_ref, t, dt, sc);
    u_fix = advect_step(mesh, u_fix, t, dt, sc);
    rep.err_original.push_back(field_error(u_fix, u_ref));
    if (moving) {
      u_ad = advect_step(x_cur, u_ad, t, dt, sc);
      rep.err_adapted.push_back(field_error(u_ad, u_ref));
    }
  }

  if (!moving) {
    rep.err_adapted = rep.err_original;
    u_ad = u_fix;
    x_cur = mesh;
  }
  rep.final_u_original = u_fix.values;
  rep.final_u_adapted = u_ad.values;
  rep.final_mesh_adapted = x_cur;
  if (!rep.err_original.empty()) rep.e_original = rep.err_original.back();
  if (!rep.failed) {
    rep.e_adapted = rep.err_adapted.back();
    rep.er_percent = error_reduction(rep.e_original, rep.e_adapted);
    rep.er_percent_time_avg =
        error_reduction(mean(rep.err_original), mean(rep.err_adapted));
  }
  return rep;
}

}  // namespace

ERReport run_mmes(Problem problem, const MoverSpec& mover, const MeshPtr& mesh,
                  const MMESConfig& cfg) {
  check_working_mesh(mesh, "run_mmes");
  validate(cfg);
  if (mover.kind == Mover::um2n && !mover.net)
    throw InvalidArgument("run_mmes: mover um2n needs loaded network parameters");
  return problem == Problem::helmholtz ? run_helmholtz(mover, mesh, cfg)
                                       : run_swirl(mover, mesh, cfg);
}

}  // namespace um2n
