#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "um2n/datagen.hpp"
#include "um2n/net.hpp"

namespace um2n {

enum class Ablation { none, coord_loss, solution_input };

Ablation ablation_from_string(const std::string& s);
std::string to_string(Ablation a);

struct TrainConfig {
  double lambda_vol = 1.0;
  double lambda_cd = 1.0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 100;
  int batch_size = 1;  // gradient accumulation over this many meshes
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::none;
  bool chamfer_squared = false;  // squared distances instead of plain norms
  int checkpoint_every = 10;     // epochs between periodic checkpoints
  NetConfig net;

  std::string describe() const;
  std::uint64_t hash() const;
};

void validate(const TrainConfig& cfg);

struct SampleLoss {
  double total = 0.0, vol = 0.0, cd = 0.0;
  int inverted = 0;  // elements of the prediction with nonpositive volume
};

/// Aggregates over a batch: total/vol/cd are means over the samples,
/// inverted is the sum. total = lambda_vol * vol + lambda_cd * cd holds per
/// sample and for the aggregate.
struct LossReport {
  double total = 0.0, vol = 0.0, cd = 0.0;
  int inverted = 0;
  std::vector<SampleLoss> per_sample;
};

/// Mean over elements of |signed volume difference|. The meshes must share
/// their element array; an inverted prediction of an element with reference
/// volume v contributes 2v.
double volume_loss(const Mesh& adapted, const Mesh& reference);

/// Bidirectional Chamfer distance: mean nearest-neighbor distance from a to
/// b plus the same from b to a. Plain Euclidean norms by default.
double chamfer_loss(const std::vector<Vec2>& a, const std::vector<Vec2>& b,
                    bool squared = false);

/// Forward pass plus losses against the sample's reference mesh. The volume
/// component is rescaled by the mean reference element volume. Ablations:
/// coord_loss replaces both components with the mean squared coordinate
/// error; solution_input feeds the Gaussian field values instead of the
/// monitor as the vertex input feature.
LossReport total_loss(const NetParams& p, const DatasetSample& sample, const TrainConfig& cfg);

/// Reverse-mode gradient of the summed batch loss, shaped like the
/// parameters. Chamfer nearest-neighbor selections are treated as locally
/// constant (ties to the lowest index). Throws NumericalError naming the
/// first parameter array with a non-finite gradient.
NetParams grad(const NetParams& p, const std::vector<DatasetSample>& samples,
               const TrainConfig& cfg, LossReport* report = nullptr);

struct AdamState {
  long long t = 0;
  std::vector<Tensor> m, v;  // first/second moments, shaped like the params
};

/// Standard bias-corrected Adam update, in place.
void adam_step(NetParams& params, const NetParams& grads, AdamState& state,
               const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double total = 0.0, vol = 0.0, cd = 0.0;
  double val_total = 0.0;  // NaN when the dataset is too small for a split
  int inverted = 0;
};

struct TrainResult {
  std::vector<EpochStats> curve;
  std::string final_checkpoint;
  std::string best_checkpoint;  // empty when there is no validation split
  double best_val = 0.0;
};

/// Seeded shuffled epochs with gradient accumulation, a 10% seeded held-out
/// validation split (none below 10 samples), a loss-curve file with one line
/// `epoch total vol cd val_total inverted_count` per epoch, periodic
/// checkpoints, and best-validation / final checkpoints. Bit-reproducible
/// given the same dataset bytes and config. A non-finite loss aborts with
/// the offending sample index.
TrainResult train_loop(const Dataset& dataset, const TrainConfig& cfg,
                       const std::string& out_dir);

}  // namespace um2n
