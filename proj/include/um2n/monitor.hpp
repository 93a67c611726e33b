#pragma once

#include <string>

#include "um2n/field.hpp"

namespace um2n {

enum class MonitorKind { hessian, gradient, combined };

MonitorKind monitor_kind_from_string(const std::string& s);
std::string to_string(MonitorKind k);

struct MonitorConfig {
  MonitorKind kind = MonitorKind::hessian;
  double alpha = 5.0;
  double beta = 10.0;
  double epsilon_max = 1e-12;  // below this max norm the monitor collapses to 1
};

/// m = 1 + alpha * |H(u)|_F / max|H(u)|_F, per vertex; m == 1 when the max
/// norm is below epsilon_max.
ScalarField hessian_monitor(const ScalarField& u, double alpha, double epsilon_max = 1e-12);

/// m = 1 + beta * |G(u)| / max|G(u)|, per vertex.
ScalarField gradient_monitor(const ScalarField& u, double beta, double epsilon_max = 1e-12);

/// m = 1 + max(normalized Hessian term, normalized gradient term).
ScalarField combined_monitor(const ScalarField& u, double alpha, double beta,
                             double epsilon_max = 1e-12);

ScalarField compute_monitor(const ScalarField& u, const MonitorConfig& cfg);

}  // namespace um2n
