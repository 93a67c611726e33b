#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "um2n/errors.hpp"

namespace um2n {

/// Dense row-major 2D array. Vectors are 1xN or Nx1, scalars 1x1.
struct Tensor {
  int rows = 0, cols = 0;
  std::vector<double> a;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return a.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

enum class Activation { relu, gelu };

/// Reverse-mode tape over Tensor operations. Forward values are computed
/// eagerly; backward() replays the recorded adjoint updates in reverse.
/// A tape is single-use: build the graph, call backward once, read grads.
class Tape {
 public:
  using Id = int;

  Id input(Tensor v);

  const Tensor& val(Id id) const { return nodes_[id].val; }
  const Tensor& grad(Id id) const { return nodes_[id].grad; }
  Tensor& grad_mut(Id id) { return nodes_[id].grad; }

  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul_elem(Id a, Id b);
  /// a (RxC) scaled per row by w (Rx1).
  Id mul_colvec(Id a, Id w);
  Id mul_scalar(Id a, double s);
  /// bias (1xC) added to every row of a (RxC).
  Id add_rowvec(Id a, Id bias);

  Id matmul(Id a, Id b);
  /// a * b^T without materializing the transpose.
  Id matmul_nt(Id a, Id b);
  Id concat_cols(Id a, Id b);

  Id activation(Id a, Activation act);
  Id leaky_relu(Id a, double slope);
  /// Row-wise (x - mean) / sqrt(var + 1e-5); no learned scale or shift.
  Id layer_norm(Id a);
  Id softmax_rows(Id a);
  /// Softmax over contiguous groups of rows of a column vector (Ex1).
  /// row_ptr has G+1 entries; group g is rows [row_ptr[g], row_ptr[g+1]).
  Id segment_softmax(Id logits, std::vector<int> row_ptr);

  Id gather_rows(Id a, std::vector<int> idx);
  /// out (n_rows x C), out[dst[k]] += a[k] for every row k of a.
  Id scatter_rows(Id a, std::vector<int> dst, int n_rows);

  /// Per-row 2D cross product: d1 (Rx2), d2 (Rx2) -> Rx1.
  Id cross2(Id d1, Id d2);
  /// Per-row Euclidean norm (Rx1). Rows that are exactly zero get zero
  /// gradient (the only zero rows in practice are self-loop edge features,
  /// which are identically zero, so the true derivative is zero too).
  Id row_norm(Id a);
  Id abs(Id a);
  Id sum_all(Id a);
  Id mean_all(Id a);

  /// Escape hatch for domain-specific operations: `back` receives the
  /// output id and must accumulate into grad_mut of the inputs it captured.
  Id custom(Tensor value, std::function<void(Tape&, Id)> back);

  /// Seeds d(out) = 1 (out must be 1x1) and runs all adjoint updates.
  void backward(Id out);

  size_t n_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val, grad;
  };
  std::vector<Node> nodes_;
  std::vector<std::function<void(Tape&)>> ops_;

  Id push(Tensor v, std::function<void(Tape&)> op);
};

// Plain forward kernels, shared by Tape and the no-gradient inference path
// so the two produce bit-identical values.
Tensor tmul(const Tensor& a, const Tensor& b);
Tensor tmul_nt(const Tensor& a, const Tensor& b);
Tensor tconcat_cols(const Tensor& a, const Tensor& b);
Tensor tactivation(const Tensor& a, Activation act);
Tensor tleaky_relu(const Tensor& a, double slope);
Tensor tlayer_norm(const Tensor& a);
Tensor tsoftmax_rows(const Tensor& a);
Tensor tsegment_softmax(const Tensor& logits, const std::vector<int>& row_ptr);
Tensor tgather_rows(const Tensor& a, const std::vector<int>& idx);
Tensor tscatter_rows(const Tensor& a, const std::vector<int>& dst, int n_rows);

double activation_value(double x, Activation act);
Activation activation_from_string(const std::string& s);
std::string activation_to_string(Activation a);

}  // namespace um2n
