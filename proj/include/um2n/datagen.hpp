#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "um2n/errors.hpp"
#include "um2n/ma.hpp"
#include "um2n/monitor.hpp"
#include "um2n/rng.hpp"

namespace um2n {

/// Superposition of axis-aligned anisotropic Gaussians.
struct FieldSpec {
  struct Gaussian {
    double mux, muy, sx, sy;
  };
  std::vector<Gaussian> gaussians;
};

/// Throws InvalidArgument unless there is at least one component and all
/// widths are positive.
void validate(const FieldSpec& spec);

/// u(p) = sum_k exp(-((x - mux)^2 / sx^2 + (y - muy)^2 / sy^2)).
double eval_field(const FieldSpec& spec, Vec2 p);

struct GenConfig {
  std::uint64_t seed = 0;
  int n_samples = 600;
  std::vector<int> mesh_sizes = {18, 20};
  int n_min = 1, n_max = 6;                  // Gaussian count, inclusive
  double mu_min = 0.2, mu_max = 0.8;         // center range, both axes
  double sigma_min = 0.05, sigma_max = 0.25; // width range, per axis
  MonitorConfig monitor;                     // default: hessian, alpha 5

  /// Canonical key=value description; fnv1a64 of it is the config hash.
  std::string describe() const;
  std::uint64_t hash() const;
};

void validate(const GenConfig& cfg);

/// Draw order is part of the format: count, then per component
/// mux, muy, sx, sy.
FieldSpec sample_field_spec(Rng& rng, const GenConfig& cfg);

struct DatasetSample {
  MeshPtr mesh;                 // input mesh: vertices, elements, tags
  std::vector<double> monitor;  // per vertex, on the input mesh
  std::vector<Vec2> ref_xy;     // reference vertices; elements are mesh->tri
  std::uint64_t seed = 0;       // the per-sample RNG seed
  FieldSpec spec;
  double ma_residual = 0.0;     // final relaxation residual of the label solve
};

/// Checks the stored invariants: consistent sizes, finite values, monitor
/// >= 1, and an untangled reference mesh. Throws InvalidArgument.
void validate(const DatasetSample& sample);

/// Evaluates the field, computes the monitor, and labels the sample with an
/// equidistributed mesh. MATangled / MANotConverged propagate; the caller
/// treats them as a rejected sample.
DatasetSample build_sample(const MeshPtr& mesh, const FieldSpec& spec,
                           const MonitorConfig& monitor_cfg, const MAParams& ma = {});

struct Dataset {
  std::uint64_t config_hash = 0;
  std::vector<DatasetSample> samples;
};

void write_dataset(std::ostream& out, const Dataset& ds);
Dataset read_dataset(std::istream& in, const std::string& name = "dataset");
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// More than half of all attempted samples failed their label solve.
struct DatagenAborted : Error {
  using Error::Error;
};

struct GenSummary {
  int accepted = 0;
  int rejected = 0;
  double rejection_rate = 0.0;  // rejected / (accepted + rejected)
  double seconds = 0.0;
};

/// Builds cfg.n_samples accepted samples and writes them to out_path.
/// Candidate i draws its whole RNG stream from derive_seed(cfg.seed, i), so
/// reruns (and any worker count) produce byte-identical files. Rejected
/// candidates are skipped and counted; once rejections exceed cfg.n_samples
/// the run aborts with DatagenAborted.
GenSummary generate_dataset(const GenConfig& cfg, const std::string& out_path,
                            const MAParams& ma = {}, int n_threads = 1);

}  // namespace um2n
