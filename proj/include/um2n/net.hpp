#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "um2n/mesh.hpp"
#include "um2n/tensor.hpp"

namespace um2n {

struct NetConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_gat_blocks = 3;
  int hidden = 64;
  Activation activation = Activation::gelu;
  std::uint64_t seed = 0;
};

/// Throws InvalidArgument on nonpositive sizes or d_model not divisible by
/// n_heads.
void validate(const NetConfig& cfg);

struct ParamArray {
  std::string name;
  Tensor t;
};

/// All model weights as named arrays in a fixed order (the checkpoint order).
struct NetParams {
  NetConfig cfg;
  std::vector<ParamArray> arrays;

  Tensor& find(const std::string& name);
  const Tensor& find(const std::string& name) const;
};

/// Deterministic scaled-uniform initialization, gain 1/sqrt(fan_in).
/// Biases and the per-block displacement heads start at zero, so a freshly
/// initialized network is exactly the identity movement.
NetParams init_params(const NetConfig& cfg);

/// Mesh as the network consumes it: vertex features, directed adjacency
/// (both directions of every mesh edge plus a self-loop per vertex, sorted
/// by destination then source), and per-edge geometry features.
struct GraphBatch {
  Tensor x;    // V x 3: (xi_x, xi_y, m)
  Tensor xi;   // V x 2
  std::vector<int> src, dst;  // E directed edges
  std::vector<int> row_ptr;   // V+1; edges of vertex v are [row_ptr[v], row_ptr[v+1])
  Tensor e;    // E x 3: (dx, dy, length) at the input coordinates; zero on self-loops
  std::vector<int> tag;
  Domain domain;
};

GraphBatch build_batch(const Mesh& mesh, const std::vector<double>& m);

/// Optional record of everything the forward pass computed.
struct ForwardTrace {
  Tensor z;                           // V x d_model encoder output
  std::vector<Tensor> encoder_attn;   // per head, V x V rows summing to 1
  std::vector<Tensor> block_features; // f_k, V x d_model
  std::vector<Tensor> block_coords;   // xi_k before boundary projection, V x 2
  std::vector<Tensor> gat_alpha;      // per block, E x 1 attention weights
  Tensor final_coords;                // V x 2 after boundary projection
};

Tensor encode(const NetParams& p, const GraphBatch& batch, ForwardTrace* trace = nullptr);
Tensor decode(const NetParams& p, const Tensor& z, const GraphBatch& batch,
              ForwardTrace* trace = nullptr);

/// Full inference: batch build, encode, decode, boundary projection. The
/// returned mesh keeps the input connectivity and tags. A constant
/// monitor short-circuits to the input mesh: a uniform density asks for no
/// movement, and the equidistribution identity cannot be met to float
/// accuracy by a learned model.
MeshPtr net_forward(const NetParams& p, const MeshPtr& mesh, const std::vector<double>& m,
                    ForwardTrace* trace = nullptr);

/// Differentiable twin of net_forward on an existing tape: param_ids must
/// hold tape inputs matching p.arrays in order and shape. Returns the id of
/// the final (boundary-projected) V x 2 coordinates. Forward values are
/// bit-identical to net_forward.
Tape::Id net_forward_tape(Tape& tape, const std::vector<Tape::Id>& param_ids,
                          const NetConfig& cfg, const GraphBatch& batch);

/// Checkpoint metadata stored alongside the weights.
struct CheckpointInfo {
  std::uint64_t config_hash = 0;
  int epoch = 0;
  double loss = 0.0;
  std::string ablation = "none";
};

/// Text format, hexfloat payload: round-trips bit-exactly.
void save_checkpoint(const std::string& path, const NetParams& p, const CheckpointInfo& info);
NetParams load_checkpoint(const std::string& path, CheckpointInfo* info = nullptr);

}  // namespace um2n
