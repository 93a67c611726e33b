#include "um2n/tensor.hpp"

#include <cmath>
#include <utility>

namespace um2n {

namespace {

constexpr double kLnEps = 1e-5;  // layer-norm variance floor

void require(bool ok, const char* msg) {
  if (!ok) throw InvalidArgument(msg);
}

}  // namespace

double activation_value(double x, Activation act) {
  if (act == Activation::relu) return x > 0.0 ? x : 0.0;
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  throw InvalidArgument("unknown activation '" + s + "' (expected relu or gelu)");
}

std::string activation_to_string(Activation a) {
  return a == Activation::relu ? "relu" : "gelu";
}

Tensor tmul(const Tensor& a, const Tensor& b) {
  require(a.cols == b.rows, "tmul: inner dimensions differ");
  Tensor c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    double* ci = &c.a[static_cast<size_t>(i) * c.cols];
    const double* ai = &a.a[static_cast<size_t>(i) * a.cols];
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = &b.a[static_cast<size_t>(k) * b.cols];
      for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Tensor tmul_nt(const Tensor& a, const Tensor& b) {
  require(a.cols == b.cols, "tmul_nt: inner dimensions differ");
  Tensor c(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = &a.a[static_cast<size_t>(i) * a.cols];
    double* ci = &c.a[static_cast<size_t>(i) * c.cols];
    for (int j = 0; j < b.rows; ++j) {
      const double* bj = &b.a[static_cast<size_t>(j) * b.cols];
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
      ci[j] = s;
    }
  }
  return c;
}

Tensor tconcat_cols(const Tensor& a, const Tensor& b) {
  require(a.rows == b.rows, "tconcat_cols: row counts differ");
  Tensor c(a.rows, a.cols + b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < a.cols; ++j) c.at(i, j) = a.at(i, j);
    for (int j = 0; j < b.cols; ++j) c.at(i, a.cols + j) = b.at(i, j);
  }
  return c;
}

Tensor tactivation(const Tensor& a, Activation act) {
  Tensor c(a.rows, a.cols);
  for (size_t i = 0; i < a.size(); ++i) c.a[i] = activation_value(a.a[i], act);
  return c;
}

Tensor tleaky_relu(const Tensor& a, double slope) {
  Tensor c(a.rows, a.cols);
  for (size_t i = 0; i < a.size(); ++i) c.a[i] = a.a[i] > 0.0 ? a.a[i] : slope * a.a[i];
  return c;
}

Tensor tlayer_norm(const Tensor& a) {
  Tensor c(a.rows, a.cols);
  for (int i = 0; i < a.rows; ++i) {
    double mean = 0.0;
    for (int j = 0; j < a.cols; ++j) mean += a.at(i, j);
    mean /= a.cols;
    double var = 0.0;
    for (int j = 0; j < a.cols; ++j) {
      const double d = a.at(i, j) - mean;
      var += d * d;
    }
    var /= a.cols;
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    for (int j = 0; j < a.cols; ++j) c.at(i, j) = (a.at(i, j) - mean) * inv;
  }
  return c;
}

Tensor tsoftmax_rows(const Tensor& a) {
  Tensor c(a.rows, a.cols);
  for (int i = 0; i < a.rows; ++i) {
    double mx = a.at(i, 0);
    for (int j = 1; j < a.cols; ++j) mx = std::max(mx, a.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < a.cols; ++j) {
      const double e = std::exp(a.at(i, j) - mx);
      c.at(i, j) = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < a.cols; ++j) c.at(i, j) *= inv;
  }
  return c;
}

Tensor tsegment_softmax(const Tensor& logits, const std::vector<int>& row_ptr) {
  require(logits.cols == 1, "tsegment_softmax: logits must be a column vector");
  require(!row_ptr.empty() && row_ptr.back() == logits.rows,
          "tsegment_softmax: row_ptr does not cover the logits");
  Tensor c(logits.rows, 1);
  for (size_t g = 0; g + 1 < row_ptr.size(); ++g) {
    const int lo = row_ptr[g], hi = row_ptr[g + 1];
    if (lo == hi) continue;
    double mx = logits.a[lo];
    for (int k = lo + 1; k < hi; ++k) mx = std::max(mx, logits.a[k]);
    double sum = 0.0;
    for (int k = lo; k < hi; ++k) {
      const double e = std::exp(logits.a[k] - mx);
      c.a[k] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int k = lo; k < hi; ++k) c.a[k] *= inv;
  }
  return c;
}

Tensor tgather_rows(const Tensor& a, const std::vector<int>& idx) {
  Tensor c(static_cast<int>(idx.size()), a.cols);
  for (size_t k = 0; k < idx.size(); ++k) {
    require(idx[k] >= 0 && idx[k] < a.rows, "tgather_rows: index out of range");
    for (int j = 0; j < a.cols; ++j) c.at(static_cast<int>(k), j) = a.at(idx[k], j);
  }
  return c;
}

Tensor tscatter_rows(const Tensor& a, const std::vector<int>& dst, int n_rows) {
  require(static_cast<int>(dst.size()) == a.rows, "tscatter_rows: dst size mismatch");
  Tensor c(n_rows, a.cols);
  for (size_t k = 0; k < dst.size(); ++k) {
    require(dst[k] >= 0 && dst[k] < n_rows, "tscatter_rows: index out of range");
    for (int j = 0; j < a.cols; ++j) c.at(dst[k], j) += a.at(static_cast<int>(k), j);
  }
  return c;
}

Tape::Id Tape::push(Tensor v, std::function<void(Tape&)> op) {
  nodes_.push_back({std::move(v), Tensor()});
  Node& n = nodes_.back();
  n.grad = Tensor(n.val.rows, n.val.cols);
  if (op) ops_.push_back(std::move(op));
  return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::input(Tensor v) { return push(std::move(v), nullptr); }

Tape::Id Tape::add(Id a, Id b) {
  require(val(a).same_shape(val(b)), "add: shape mismatch");
  Tensor c = val(a);
  for (size_t i = 0; i < c.size(); ++i) c.a[i] += val(b).a[i];
  const Id out = push(std::move(c), nullptr);
  ops_.push_back([a, b, out](Tape& t) {
    const Tensor& g = t.grad(out);
    for (size_t i = 0; i < g.size(); ++i) {
      t.grad_mut(a).a[i] += g.a[i];
      t.grad_mut(b).a[i] += g.a[i];
    }
  });
  return out;
}

Tape::Id Tape::sub(Id a, Id b) {
  require(val(a).same_shape(val(b)), "sub: shape mismatch");
  Tensor c = val(a);
  for (size_t i = 0; i < c.size(); ++i) c.a[i] -= val(b).a[i];
  const Id out = push(std::move(c), nullptr);
  ops_.push_back([a, b, out](Tape& t) {
    const Tensor& g = t.grad(out);
    for (size_t i = 0; i < g.size(); ++i) {
      t.grad_mut(a).a[i] += g.a[i];
      t.grad_mut(b).a[i] -= g.a[i];
    }
  });
  return out;
}

Tape::Id Tape::mul_elem(Id a, Id b) {
  require(val(a).same_shape(val(b)), "mul_elem: shape mismatch");
  Tensor c = val(a);
  for (size_t i = 0; i < c.size(); ++i) c.a[i] *= val(b).a[i];
  const Id out = push(std::move(c), nullptr);
  ops_.push_back([a, b, out](Tape& t) {
    const Tensor& g = t.grad(out);
    for (size_t i = 0; i < g.size(); ++i) {
      t.grad_mut(a).a[i] += g.a[i] * t.val(b).a[i];
      t.grad_mut(b).a[i] += g.a[i] * t.val(a).a[i];
    }
  });
  return out;
}

Tape::Id Tape::mul_colvec(Id a, Id w) {
  require(val(w).cols == 1 && val(w).rows == val(a).rows, "mul_colvec: w must be rows(a) x 1");
  Tensor c = val(a);
  for (int i = 0; i < c.rows; ++i)
    for (int j = 0; j < c.cols; ++j) c.at(i, j) *= val(w).at(i, 0);
  const Id out = push(std::move(c), nullptr);
  ops_.push_back([a, w, out](Tape& t) {
    const Tensor& g = t.grad(out);
    const Tensor& av = t.val(a);
    const Tensor& wv = t.val(w);
    for (int i = 0; i < g.rows; ++i) {
      double acc = 0.0;
      for (int j = 0; j < g.cols; ++j) {
        t.grad_mut(a).at(i, j) += g.at(i, j) * wv.at(i, 0);
        acc += g.at(i, j) * av.at(i, j);
      }
      t.grad_mut(w).at(i, 0) += acc;
    }
  });
  return out;
}

Tape::Id Tape::mul_scalar(Id a, double s) {
  Tensor c = val(a);
  for (double& v : c.a) v *= s;
  const Id out = push(std::move(c), nullptr);
  ops_.push_back([a, s, out](Tape& t) {
    const Tensor& g = t.grad(out);
    for (size_t i = 0; i < g.size(); ++i) t.grad_mut(a).a[i] += s * g.a[i];
  });
  return out;
}

Tape::Id Tape::add_rowvec(Id a, Id bias) {
  require(val(bias).rows == 1 && val(bias).cols == val(a).cols, "add_rowvec: bias must be 1 x cols(a)");
  Tensor c = val(a);
  for (int i = 0; i < c.rows; ++i)
    for (int j = 0; j < c.cols; ++j) c.at(i, j) += val(bias).at(0, j);
  const Id out = push(std::move(c), nullptr);
  ops_.push_back([a, bias, out](Tape& t) {
    const Tensor& g = t.grad(out);
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) {
        t.grad_mut(a).at(i, j) += g.at(i, j);
        t.grad_mut(bias).at(0, j) += g.at(i, j);
      }
  });
  return out;
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Id out = push(tmul(val(a), val(b)), nullptr);
  ops_.push_back([a, b, out](Tape& t) {
    const Tensor& g = t.grad(out);
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    // dA += g * B^T
    Tensor& da = t.grad_mut(a);
    for (int i = 0; i < av.rows; ++i)
      for (int k = 0; k < av.cols; ++k) {
        double s = 0.0;
        for (int j = 0; j < bv.cols; ++j) s += g.at(i, j) * bv.at(k, j);
        da.at(i, k) += s;
      }
    // dB += A^T * g
    Tensor& db = t.grad_mut(b);
    for (int i = 0; i < av.rows; ++i)
      for (int k = 0; k < av.cols; ++k) {
        const double aik = av.at(i, k);
        if (aik == 0.0) continue;
        for (int j = 0; j < bv.cols; ++j) db.at(k, j) += aik * g.at(i, j);
      }
  });
  return out;
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  const Id out = push(tmul_nt(val(a), val(b)), nullptr);
  ops_.push_back([a, b, out](Tape& t) {
    const Tensor& g = t.grad(out);  // rows(a) x rows(b)
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    Tensor& da = t.grad_mut(a);
    Tensor& db = t.grad_mut(b);
    for (int i = 0; i < av.rows; ++i)
      for (int j = 0; j < bv.rows; ++j) {
        const double gij = g.at(i, j);
        if (gij == 0.0) continue;
        for (int k = 0; k < av.cols; ++k) {
          da.at(i, k) += gij * bv.at(j, k);
          db.at(j, k) += gij * av.at(i, k);
        }
      }
  });
  return out;
}

Tape::Id Tape::concat_cols(Id a, Id b) {
  const Id out = push(tconcat_cols(val(a), val(b)), nullptr);
  const int ca = val(a).cols;
  ops_.push_back([a, b, out, ca](Tape& t) {
    const Tensor& g = t.grad(out);
    for (int i = 0; i < g.rows; ++i) {
      for (int j = 0; j < ca; ++j) t.grad_mut(a).at(i, j) += g.at(i, j);
      for (int j = ca; j < g.cols; ++j) t.grad_mut(b).at(i, j - ca) += g.at(i, j);
    }
  });
  return out;
}

Tape::Id Tape::activation(Id a, Activation act) {
  const Id out = push(tactivation(val(a), act), nullptr);
  ops_.push_back([a, act, out](Tape& t) {
    const Tensor& g = t.grad(out);
    const Tensor& x = t.val(a);
    for (size_t i = 0; i < g.size(); ++i) {
      double d;
      if (act == Activation::relu) {
        d = x.a[i] > 0.0 ? 1.0 : 0.0;
      } else {
        const double v = x.a[i];
        d = 0.5 * (1.0 + std::erf(v * M_SQRT1_2)) +
            v * std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
      }
      t.grad_mut(a).a[i] += d * g.a[i];
    }
  });
  return out;
}

Tape::Id Tape::leaky_relu(Id a, double slope) {
  const Id out = push(tleaky_relu(val(a), slope), nullptr);
  ops_.push_back([a, slope, out](Tape& t) {
    const Tensor& g = t.grad(out);
    const Tensor& x = t.val(a);
    for (size_t i = 0; i < g.size(); ++i)
      t.grad_mut(a).a[i] += (x.a[i] > 0.0 ? 1.0 : slope) * g.a[i];
  });
  return out;
}

Tape::Id Tape::layer_norm(Id a) {
  const Id out = push(tlayer_norm(val(a)), nullptr);
  ops_.push_back([a, out](Tape& t) {
    const Tensor& g = t.grad(out);
    const Tensor& y = t.val(out);
    const Tensor& x = t.val(a);
    const int c = x.cols;
    for (int i = 0; i < x.rows; ++i) {
      double mean = 0.0;
      for (int j = 0; j < c; ++j) mean += x.at(i, j);
      mean /= c;
      double var = 0.0;
      for (int j = 0; j < c; ++j) {
        const double d = x.at(i, j) - mean;
        var += d * d;
      }
      var /= c;
      const double inv = 1.0 / std::sqrt(var + kLnEps);
      double gm = 0.0, gym = 0.0;
      for (int j = 0; j < c; ++j) {
        gm += g.at(i, j);
        gym += g.at(i, j) * y.at(i, j);
      }
      gm /= c;
      gym /= c;
      for (int j = 0; j < c; ++j)
        t.grad_mut(a).at(i, j) += inv * (g.at(i, j) - gm - y.at(i, j) * gym);
    }
  });
  return out;
}

Tape::Id Tape::softmax_rows(Id a) {
  const Id out = push(tsoftmax_rows(val(a)), nullptr);
  ops_.push_back([a, out](Tape& t) {
    const Tensor& g = t.grad(out);
    const Tensor& y = t.val(out);
    for (int i = 0; i < y.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < y.cols; ++j) dot += g.at(i, j) * y.at(i, j);
      for (int j = 0; j < y.cols; ++j)
        t.grad_mut(a).at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  });
  return out;
}

Tape::Id Tape::segment_softmax(Id logits, std::vector<int> row_ptr) {
  const Id out = push(tsegment_softmax(val(logits), row_ptr), nullptr);
  ops_.push_back([logits, out, rp = std::move(row_ptr)](Tape& t) {
    const Tensor& g = t.grad(out);
    const Tensor& y = t.val(out);
    for (size_t gi = 0; gi + 1 < rp.size(); ++gi) {
      const int lo = rp[gi], hi = rp[gi + 1];
      double dot = 0.0;
      for (int k = lo; k < hi; ++k) dot += g.a[k] * y.a[k];
      for (int k = lo; k < hi; ++k)
        t.grad_mut(logits).a[k] += y.a[k] * (g.a[k] - dot);
    }
  });
  return out;
}

Tape::Id Tape::gather_rows(Id a, std::vector<int> idx) {
  const Id out = push(tgather_rows(val(a), idx), nullptr);
  ops_.push_back([a, out, ix = std::move(idx)](Tape& t) {
    const Tensor& g = t.grad(out);
    for (size_t k = 0; k < ix.size(); ++k)
      for (int j = 0; j < g.cols; ++j)
        t.grad_mut(a).at(ix[k], j) += g.at(static_cast<int>(k), j);
  });
  return out;
}

Tape::Id Tape::scatter_rows(Id a, std::vector<int> dst, int n_rows) {
  const Id out = push(tscatter_rows(val(a), dst, n_rows), nullptr);
  ops_.push_back([a, out, dx = std::move(dst)](Tape& t) {
    const Tensor& g = t.grad(out);
    for (size_t k = 0; k < dx.size(); ++k)
      for (int j = 0; j < g.cols; ++j)
        t.grad_mut(a).at(static_cast<int>(k), j) += g.at(dx[k], j);
  });
  return out;
}

Tape::Id Tape::cross2(Id d1, Id d2) {
  require(val(d1).cols == 2 && val(d2).cols == 2 && val(d1).rows == val(d2).rows,
          "cross2: operands must be Rx2");
  Tensor c(val(d1).rows, 1);
  for (int i = 0; i < c.rows; ++i)
    c.at(i, 0) = val(d1).at(i, 0) * val(d2).at(i, 1) - val(d1).at(i, 1) * val(d2).at(i, 0);
  const Id out = push(std::move(c), nullptr);
  ops_.push_back([d1, d2, out](Tape& t) {
    const Tensor& g = t.grad(out);
    const Tensor& a = t.val(d1);
    const Tensor& b = t.val(d2);
    for (int i = 0; i < g.rows; ++i) {
      const double gi = g.at(i, 0);
      t.grad_mut(d1).at(i, 0) += gi * b.at(i, 1);
      t.grad_mut(d1).at(i, 1) -= gi * b.at(i, 0);
      t.grad_mut(d2).at(i, 0) -= gi * a.at(i, 1);
      t.grad_mut(d2).at(i, 1) += gi * a.at(i, 0);
    }
  });
  return out;
}

Tape::Id Tape::row_norm(Id a) {
  Tensor c(val(a).rows, 1);
  for (int i = 0; i < c.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < val(a).cols; ++j) s += val(a).at(i, j) * val(a).at(i, j);
    c.at(i, 0) = std::sqrt(s);
  }
  const Id out = push(std::move(c), nullptr);
  ops_.push_back([a, out](Tape& t) {
    const Tensor& g = t.grad(out);
    const Tensor& x = t.val(a);
    const Tensor& n = t.val(out);
    for (int i = 0; i < x.rows; ++i) {
      if (n.at(i, 0) <= 0.0) continue;
      const double s = g.at(i, 0) / n.at(i, 0);
      for (int j = 0; j < x.cols; ++j) t.grad_mut(a).at(i, j) += s * x.at(i, j);
    }
  });
  return out;
}

Tape::Id Tape::abs(Id a) {
  Tensor c = val(a);
  for (double& v : c.a) v = std::fabs(v);
  const Id out = push(std::move(c), nullptr);
  ops_.push_back([a, out](Tape& t) {
    const Tensor& g = t.grad(out);
    const Tensor& x = t.val(a);
    for (size_t i = 0; i < g.size(); ++i) {
      const double s = x.a[i] > 0.0 ? 1.0 : (x.a[i] < 0.0 ? -1.0 : 0.0);
      t.grad_mut(a).a[i] += s * g.a[i];
    }
  });
  return out;
}

Tape::Id Tape::sum_all(Id a) {
  Tensor c(1, 1);
  for (double v : val(a).a) c.a[0] += v;
  const Id out = push(std::move(c), nullptr);
  ops_.push_back([a, out](Tape& t) {
    const double g = t.grad(out).a[0];
    for (double& v : t.grad_mut(a).a) v += g;
  });
  return out;
}

Tape::Id Tape::mean_all(Id a) {
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(val(a).size()));
}

Tape::Id Tape::custom(Tensor value, std::function<void(Tape&, Id)> back) {
  const Id out = push(std::move(value), nullptr);
  ops_.push_back([out, b = std::move(back)](Tape& t) { b(t, out); });
  return out;
}

void Tape::backward(Id out) {
  require(val(out).rows == 1 && val(out).cols == 1, "backward: output must be a scalar");
  grad_mut(out).a[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)(*this);
}

}  // namespace um2n
