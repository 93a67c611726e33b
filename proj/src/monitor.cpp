#include "um2n/monitor.hpp"

#include <algorithm>
#include <cmath>

#include "um2n/errors.hpp"

namespace um2n {

MonitorKind monitor_kind_from_string(const std::string& s) {
  if (s == "hessian") return MonitorKind::hessian;
  if (s == "gradient") return MonitorKind::gradient;
  if (s == "combined") return MonitorKind::combined;
  throw InvalidArgument("unknown monitor kind '" + s + "' (hessian|gradient|combined)");
}

std::string to_string(MonitorKind k) {
  switch (k) {
    case MonitorKind::hessian: return "hessian";
    case MonitorKind::gradient: return "gradient";
    default: return "combined";
  }
}

namespace {

// Normalized per-vertex norms: w / max(w), or all zeros under the guard.
std::vector<double> normalized(std::vector<double> w, double epsilon_max) {
  const double mx = *std::max_element(w.begin(), w.end());
  if (mx < epsilon_max) {
    std::fill(w.begin(), w.end(), 0.0);
    return w;
  }
  for (double& v : w) v /= mx;
  return w;
}

std::vector<double> hessian_norms(const ScalarField& u) {
  const TensorField h = recover_hessian(u);
  std::vector<double> w(h.values.size());
  for (size_t v = 0; v < w.size(); ++v) w[v] = frobenius(h.values[v]);
  return w;
}

std::vector<double> gradient_norms(const ScalarField& u) {
  const VectorField g = recover_gradient(u);
  std::vector<double> w(g.values.size());
  for (size_t v = 0; v < w.size(); ++v) w[v] = norm(g.values[v]);
  return w;
}

}  // namespace

ScalarField hessian_monitor(const ScalarField& u, double alpha, double epsilon_max) {
  if (alpha < 0.0) throw InvalidArgument("monitor alpha must be >= 0");
  auto w = normalized(hessian_norms(u), epsilon_max);
  for (double& v : w) v = 1.0 + alpha * v;
  return {u.mesh, std::move(w)};
}

ScalarField gradient_monitor(const ScalarField& u, double beta, double epsilon_max) {
  if (beta < 0.0) throw InvalidArgument("monitor beta must be >= 0");
  auto w = normalized(gradient_norms(u), epsilon_max);
  for (double& v : w) v = 1.0 + beta * v;
  return {u.mesh, std::move(w)};
}

ScalarField combined_monitor(const ScalarField& u, double alpha, double beta, double epsilon_max) {
  if (alpha < 0.0 || beta < 0.0) throw InvalidArgument("monitor alpha/beta must be >= 0");
  const auto wh = normalized(hessian_norms(u), epsilon_max);
  const auto wg = normalized(gradient_norms(u), epsilon_max);
  std::vector<double> m(wh.size());
  for (size_t v = 0; v < m.size(); ++v) m[v] = 1.0 + std::max(alpha * wh[v], beta * wg[v]);
  return {u.mesh, std::move(m)};
}

ScalarField compute_monitor(const ScalarField& u, const MonitorConfig& cfg) {
  switch (cfg.kind) {
    case MonitorKind::hessian: return hessian_monitor(u, cfg.alpha, cfg.epsilon_max);
    case MonitorKind::gradient: return gradient_monitor(u, cfg.beta, cfg.epsilon_max);
    default: return combined_monitor(u, cfg.alpha, cfg.beta, cfg.epsilon_max);
  }
}

}  // namespace um2n
