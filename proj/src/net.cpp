#include "um2n/net.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <utility>

#include "um2n/rng.hpp"
#include "um2n/text_io.hpp"

namespace um2n {

void validate(const NetConfig& cfg) {
  if (cfg.d_model < 1 || cfg.n_heads < 1 || cfg.n_gat_blocks < 1 || cfg.hidden < 1)
    throw InvalidArgument("net config: sizes must be positive");
  if (cfg.d_model % cfg.n_heads != 0)
    throw InvalidArgument("net config: d_model must be divisible by n_heads");
}

namespace {

struct ArraySpec {
  std::string name;
  int rows, cols;
  bool zero_init;
};

std::vector<ArraySpec> param_specs(const NetConfig& cfg) {
  const int d = cfg.d_model, h = cfg.hidden, dh = cfg.d_model / cfg.n_heads;
  std::vector<ArraySpec> s;
  s.push_back({"enc.in.w1", 3, h, false});
  s.push_back({"enc.in.b1", 1, h, true});
  s.push_back({"enc.in.w2", h, d, false});
  s.push_back({"enc.in.b2", 1, d, true});
  for (int i = 0; i < cfg.n_heads; ++i) {
    const std::string base = "enc.attn.h" + std::to_string(i);
    s.push_back({base + ".wq", d, dh, false});
    s.push_back({base + ".wk", d, dh, false});
    s.push_back({base + ".wv", d, dh, false});
  }
  s.push_back({"enc.attn.wo", d, d, false});
  s.push_back({"enc.attn.bo", 1, d, true});
  s.push_back({"enc.ffn.w1", d, h, false});
  s.push_back({"enc.ffn.b1", 1, h, true});
  s.push_back({"enc.ffn.w2", h, d, false});
  s.push_back({"enc.ffn.b2", 1, d, true});
  for (int k = 0; k < cfg.n_gat_blocks; ++k) {
    const std::string base = "dec.b" + std::to_string(k + 1);
    const int in_width = k == 0 ? 2 + d : 4 + d;
    s.push_back({base + ".w", in_width, d, false});
    s.push_back({base + ".a_src", d, 1, false});
    s.push_back({base + ".a_dst", d, 1, false});
    s.push_back({base + ".a_e", 3, 1, false});
    // displacement heads start at zero: a fresh model moves nothing
    s.push_back({base + ".head.w", d, 2, true});
    s.push_back({base + ".head.b", 1, 2, true});
  }
  return s;
}

// Indices into the fixed array order, mirroring param_specs.
struct ParamIndex {
  int enc_in_w1, enc_in_b1, enc_in_w2, enc_in_b2;
  int head_base;  // 3 per head: wq, wk, wv
  int attn_wo, attn_bo;
  int ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  int dec_base;  // 6 per block: w, a_src, a_dst, a_e, head.w, head.b

  explicit ParamIndex(const NetConfig& cfg) {
    enc_in_w1 = 0;
    enc_in_b1 = 1;
    enc_in_w2 = 2;
    enc_in_b2 = 3;
    head_base = 4;
    attn_wo = head_base + 3 * cfg.n_heads;
    attn_bo = attn_wo + 1;
    ffn_w1 = attn_bo + 1;
    ffn_b1 = ffn_w1 + 1;
    ffn_w2 = ffn_b1 + 1;
    ffn_b2 = ffn_w2 + 1;
    dec_base = ffn_b2 + 1;
  }
};

Tensor project_rows(const Tensor& coords, const std::vector<int>& tag, const Domain& domain) {
  Tensor out = coords;
  for (int v = 0; v < out.rows; ++v) {
    const int t = tag[v];
    if (t == 0) continue;
    if (is_corner(t)) {
      const Vec2 c = domain.corners[corner_id(t) - 1];
      out.at(v, 0) = c.x;
      out.at(v, 1) = c.y;
      continue;
    }
    const Vec2 a = domain.segment_a(t), b = domain.segment_b(t);
    const Vec2 d = b - a;
    const double len2 = norm2(d);
    double s = len2 > 0.0 ? ((out.at(v, 0) - a.x) * d.x + (out.at(v, 1) - a.y) * d.y) / len2 : 0.0;
    s = std::clamp(s, 0.0, 1.0);
    out.at(v, 0) = a.x + s * d.x;
    out.at(v, 1) = a.y + s * d.y;
  }
  return out;
}

// The forward pass is written once, over an "ops" provider: PlainOps
// computes eagerly, TapeOps records the same kernels onto a Tape. Both run
// the identical sequence of operations, so values agree bitwise.
struct PlainOps {
  const NetParams* params;
  using H = Tensor;

  H param(int i) const { return params->arrays[i].t; }
  H input(Tensor v) const { return v; }
  const Tensor& val(const H& h) const { return h; }

  H add(const H& a, const H& b) const {
    Tensor c = a;
    for (size_t i = 0; i < c.size(); ++i) c.a[i] += b.a[i];
    return c;
  }
  H sub(const H& a, const H& b) const {
    Tensor c = a;
    for (size_t i = 0; i < c.size(); ++i) c.a[i] -= b.a[i];
    return c;
  }
  H add_rowvec(const H& a, const H& bias) const {
    Tensor c = a;
    for (int i = 0; i < c.rows; ++i)
      for (int j = 0; j < c.cols; ++j) c.at(i, j) += bias.at(0, j);
    return c;
  }
  H mul_colvec(const H& a, const H& w) const {
    Tensor c = a;
    for (int i = 0; i < c.rows; ++i)
      for (int j = 0; j < c.cols; ++j) c.at(i, j) *= w.at(i, 0);
    return c;
  }
  H mul_scalar(const H& a, double s) const {
    Tensor c = a;
    for (double& v : c.a) v *= s;
    return c;
  }
  H matmul(const H& a, const H& b) const { return tmul(a, b); }
  H matmul_nt(const H& a, const H& b) const { return tmul_nt(a, b); }
  H concat_cols(const H& a, const H& b) const { return tconcat_cols(a, b); }
  H act(const H& a, Activation v) const { return tactivation(a, v); }
  H leaky_relu(const H& a, double s) const { return tleaky_relu(a, s); }
  H layer_norm(const H& a) const { return tlayer_norm(a); }
  H softmax_rows(const H& a) const { return tsoftmax_rows(a); }
  H segment_softmax(const H& a, const std::vector<int>& rp) const {
    return tsegment_softmax(a, rp);
  }
  H gather_rows(const H& a, const std::vector<int>& idx) const { return tgather_rows(a, idx); }
  H scatter_rows(const H& a, const std::vector<int>& dst, int n) const {
    return tscatter_rows(a, dst, n);
  }
  H row_norm(const H& a) const {
    Tensor c(a.rows, 1);
    for (int i = 0; i < a.rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < a.cols; ++j) s += a.at(i, j) * a.at(i, j);
      c.at(i, 0) = std::sqrt(s);
    }
    return c;
  }
  H boundary_project(const H& coords, const GraphBatch& b) const {
    return project_rows(coords, b.tag, b.domain);
  }
};

struct TapeOps {
  Tape* tape;
  const std::vector<Tape::Id>* ids;
  using H = Tape::Id;

  H param(int i) const { return (*ids)[i]; }
  H input(Tensor v) const { return tape->input(std::move(v)); }
  const Tensor& val(H h) const { return tape->val(h); }

  H add(H a, H b) const { return tape->add(a, b); }
  H sub(H a, H b) const { return tape->sub(a, b); }
  H add_rowvec(H a, H bias) const { return tape->add_rowvec(a, bias); }
  H mul_colvec(H a, H w) const { return tape->mul_colvec(a, w); }
  H mul_scalar(H a, double s) const { return tape->mul_scalar(a, s); }
  H matmul(H a, H b) const { return tape->matmul(a, b); }
  H matmul_nt(H a, H b) const { return tape->matmul_nt(a, b); }
  H concat_cols(H a, H b) const { return tape->concat_cols(a, b); }
  H act(H a, Activation v) const { return tape->activation(a, v); }
  H leaky_relu(H a, double s) const { return tape->leaky_relu(a, s); }
  H layer_norm(H a) const { return tape->layer_norm(a); }
  H softmax_rows(H a) const { return tape->softmax_rows(a); }
  H segment_softmax(H a, const std::vector<int>& rp) const {
    return tape->segment_softmax(a, rp);
  }
  H gather_rows(H a, const std::vector<int>& idx) const { return tape->gather_rows(a, idx); }
  H scatter_rows(H a, const std::vector<int>& dst, int n) const {
    return tape->scatter_rows(a, dst, n);
  }
  H row_norm(H a) const { return tape->row_norm(a); }
  H boundary_project(H coords, const GraphBatch& b) const {
    Tensor projected = project_rows(tape->val(coords), b.tag, b.domain);
    const std::vector<int> tag = b.tag;
    const Domain domain = b.domain;
    return tape->custom(std::move(projected), [coords, tag, domain](Tape& tp, Tape::Id out) {
      const Tensor& g = tp.grad(out);
      const Tensor& x = tp.val(coords);
      Tensor& dx = tp.grad_mut(coords);
      for (int v = 0; v < g.rows; ++v) {
        const int tg = tag[v];
        if (tg == 0) {  // interior: identity
          dx.at(v, 0) += g.at(v, 0);
          dx.at(v, 1) += g.at(v, 1);
          continue;
        }
        if (is_corner(tg)) continue;  // pinned: zero gradient
        const Vec2 a = domain.segment_a(tg), b2 = domain.segment_b(tg);
        const Vec2 d = b2 - a;
        const double len2 = norm2(d);
        if (len2 <= 0.0) continue;
        const double s = ((x.at(v, 0) - a.x) * d.x + (x.at(v, 1) - a.y) * d.y) / len2;
        if (s <= 0.0 || s >= 1.0) continue;  // clamped: locally constant
        const double gd = (g.at(v, 0) * d.x + g.at(v, 1) * d.y) / len2;
        dx.at(v, 0) += gd * d.x;
        dx.at(v, 1) += gd * d.y;
      }
    });
  }
};

template <class Ops>
typename Ops::H encode_impl(Ops& o, const NetConfig& cfg, const GraphBatch& batch,
                            ForwardTrace* trace) {
  const ParamIndex ix(cfg);
  const int dh = cfg.d_model / cfg.n_heads;
  using H = typename Ops::H;

  const H x = o.input(batch.x);
  // input MLP
  const H h0 = o.add_rowvec(
      o.matmul(o.act(o.add_rowvec(o.matmul(x, o.param(ix.enc_in_w1)), o.param(ix.enc_in_b1)),
                     cfg.activation),
               o.param(ix.enc_in_w2)),
      o.param(ix.enc_in_b2));
  // multi-head self-attention over all vertices
  H attn_cat{};
  for (int i = 0; i < cfg.n_heads; ++i) {
    const int base = ix.head_base + 3 * i;
    const H q = o.matmul(h0, o.param(base));
    const H k = o.matmul(h0, o.param(base + 1));
    const H v = o.matmul(h0, o.param(base + 2));
    const H p = o.softmax_rows(o.mul_scalar(o.matmul_nt(q, k), 1.0 / std::sqrt(double(dh))));
    if (trace) trace->encoder_attn.push_back(o.val(p));
    const H av = o.matmul(p, v);
    attn_cat = i == 0 ? av : o.concat_cols(attn_cat, av);
  }
  const H attn = o.add_rowvec(o.matmul(attn_cat, o.param(ix.attn_wo)), o.param(ix.attn_bo));
  const H h1 = o.layer_norm(o.add(h0, attn));
  // position-wise feed-forward with residual
  const H f = o.add_rowvec(
      o.matmul(o.act(o.add_rowvec(o.matmul(h1, o.param(ix.ffn_w1)), o.param(ix.ffn_b1)),
                     cfg.activation),
               o.param(ix.ffn_w2)),
      o.param(ix.ffn_b2));
  const H z = o.add(h1, f);
  if (trace) trace->z = o.val(z);
  return z;
}

template <class Ops>
typename Ops::H decode_impl(Ops& o, const NetConfig& cfg, typename Ops::H z,
                            const GraphBatch& batch, ForwardTrace* trace) {
  const ParamIndex ix(cfg);
  using H = typename Ops::H;
  const int nv = batch.xi.rows;

  const H xi0 = o.input(batch.xi);
  H xi_k = xi0;
  H f_prev{};
  for (int k = 0; k < cfg.n_gat_blocks; ++k) {
    const int base = ix.dec_base + 6 * k;
    const H in_k = k == 0 ? o.concat_cols(xi0, z)
                          : o.concat_cols(o.concat_cols(xi0, xi_k), f_prev);
    const H wx = o.matmul(in_k, o.param(base));
    // edge features from the current coordinates (zero on self-loops)
    const H dxi = o.sub(o.gather_rows(xi_k, batch.src), o.gather_rows(xi_k, batch.dst));
    const H ef = o.concat_cols(dxi, o.row_norm(dxi));
    const H logit = o.leaky_relu(
        o.add(o.add(o.gather_rows(o.matmul(wx, o.param(base + 1)), batch.src),
                    o.gather_rows(o.matmul(wx, o.param(base + 2)), batch.dst)),
              o.matmul(ef, o.param(base + 3))),
        0.2);
    const H alpha = o.segment_softmax(logit, batch.row_ptr);
    if (trace) trace->gat_alpha.push_back(o.val(alpha));
    const H agg = o.scatter_rows(o.mul_colvec(o.gather_rows(wx, batch.src), alpha),
                                 batch.dst, nv);
    const H f_k = o.act(agg, cfg.activation);
    const H disp = o.add_rowvec(o.matmul(f_k, o.param(base + 4)), o.param(base + 5));
    xi_k = o.add(xi_k, disp);
    f_prev = f_k;
    if (trace) {
      trace->block_features.push_back(o.val(f_k));
      trace->block_coords.push_back(o.val(xi_k));
    }
  }
  const H out = o.boundary_project(xi_k, batch);
  if (trace) trace->final_coords = o.val(out);
  return out;
}

}  // namespace

Tensor& NetParams::find(const std::string& name) {
  for (auto& a : arrays)
    if (a.name == name) return a.t;
  throw InvalidArgument("no parameter array named '" + name + "'");
}

const Tensor& NetParams::find(const std::string& name) const {
  return const_cast<NetParams*>(this)->find(name);
}

NetParams init_params(const NetConfig& cfg) {
  validate(cfg);
  NetParams p;
  p.cfg = cfg;
  Rng rng(cfg.seed);
  for (const ArraySpec& s : param_specs(cfg)) {
    Tensor t(s.rows, s.cols);
    if (!s.zero_init) {
      const double g = 1.0 / std::sqrt(static_cast<double>(s.rows));
      for (double& v : t.a) v = rng.uniform(-g, g);
    }
    p.arrays.push_back({s.name, std::move(t)});
  }
  return p;
}

GraphBatch build_batch(const Mesh& mesh, const std::vector<double>& m) {
  const int nv = mesh.n_vertices();
  if (static_cast<int>(m.size()) != nv)
    throw InvalidArgument("build_batch: monitor does not match the mesh");

  GraphBatch b;
  b.x = Tensor(nv, 3);
  b.xi = Tensor(nv, 2);
  for (int v = 0; v < nv; ++v) {
    b.x.at(v, 0) = mesh.xy[v].x;
    b.x.at(v, 1) = mesh.xy[v].y;
    b.x.at(v, 2) = m[v];
    b.xi.at(v, 0) = mesh.xy[v].x;
    b.xi.at(v, 1) = mesh.xy[v].y;
  }
  b.tag = mesh.tag;
  b.domain = mesh.domain;

  std::set<std::pair<int, int>> undirected;
  for (const auto& t : mesh.tri)
    for (int k = 0; k < 3; ++k) {
      const int a = t[k], c = t[(k + 1) % 3];
      undirected.insert({std::min(a, c), std::max(a, c)});
    }
  std::vector<std::pair<int, int>> edges;  // (dst, src)
  edges.reserve(2 * undirected.size() + nv);
  for (int v = 0; v < nv; ++v) edges.push_back({v, v});
  for (const auto& [a, c] : undirected) {
    edges.push_back({a, c});
    edges.push_back({c, a});
  }
  std::sort(edges.begin(), edges.end());

  const int ne = static_cast<int>(edges.size());
  b.src.resize(ne);
  b.dst.resize(ne);
  b.e = Tensor(ne, 3);
  b.row_ptr.assign(nv + 1, 0);
  for (int k = 0; k < ne; ++k) {
    b.dst[k] = edges[k].first;
    b.src[k] = edges[k].second;
    ++b.row_ptr[edges[k].first + 1];
    const double dx = b.xi.at(b.src[k], 0) - b.xi.at(b.dst[k], 0);
    const double dy = b.xi.at(b.src[k], 1) - b.xi.at(b.dst[k], 1);
    b.e.at(k, 0) = dx;
    b.e.at(k, 1) = dy;
    b.e.at(k, 2) = std::sqrt(dx * dx + dy * dy);
  }
  for (int v = 0; v < nv; ++v) b.row_ptr[v + 1] += b.row_ptr[v];
  return b;
}

Tensor encode(const NetParams& p, const GraphBatch& batch, ForwardTrace* trace) {
  validate(p.cfg);
  PlainOps ops{&p};
  return encode_impl(ops, p.cfg, batch, trace);
}

Tensor decode(const NetParams& p, const Tensor& z, const GraphBatch& batch, ForwardTrace* trace) {
  validate(p.cfg);
  PlainOps ops{&p};
  return decode_impl(ops, p.cfg, z, batch, trace);
}

MeshPtr net_forward(const NetParams& p, const MeshPtr& mesh, const std::vector<double>& m,
                    ForwardTrace* trace) {
  if (!mesh) throw InvalidArgument("net_forward: null mesh");
  if (static_cast<int>(m.size()) != mesh->n_vertices())
    throw InvalidArgument("net_forward: monitor does not match the mesh");
  if (!detect_tangling(*mesh).empty())
    throw InvalidArgument("net_forward: input mesh is tangled");
  double lo = m[0], hi = m[0];
  for (double v : m) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo < 1.0 - 1e-9) throw InvalidArgument("net_forward: monitor must be >= 1");
  if (hi - lo <= 1e-12) return mesh;

  const GraphBatch batch = build_batch(*mesh, m);
  PlainOps ops{&p};
  const Tensor z = encode_impl(ops, p.cfg, batch, trace);
  const Tensor coords = decode_impl(ops, p.cfg, z, batch, trace);

  auto moved = std::make_shared<Mesh>(*mesh);
  for (int v = 0; v < moved->n_vertices(); ++v)
    moved->xy[v] = {coords.at(v, 0), coords.at(v, 1)};
  return moved;
}

Tape::Id net_forward_tape(Tape& tape, const std::vector<Tape::Id>& param_ids,
                          const NetConfig& cfg, const GraphBatch& batch) {
  validate(cfg);
  const auto specs = param_specs(cfg);
  if (param_ids.size() != specs.size())
    throw InvalidArgument("net_forward_tape: wrong number of parameter arrays");
  TapeOps ops{&tape, &param_ids};
  const Tape::Id z = encode_impl(ops, cfg, batch, nullptr);
  return decode_impl(ops, cfg, z, batch, nullptr);
}

void save_checkpoint(const std::string& path, const NetParams& p, const CheckpointInfo& info) {
  validate(p.cfg);
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out << "UM2N-CKPT 1\n";
  out << "d_model " << p.cfg.d_model << "\n";
  out << "n_heads " << p.cfg.n_heads << "\n";
  out << "n_gat_blocks " << p.cfg.n_gat_blocks << "\n";
  out << "hidden " << p.cfg.hidden << "\n";
  out << "activation " << activation_to_string(p.cfg.activation) << "\n";
  out << "seed " << p.cfg.seed << "\n";
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016" PRIx64, info.config_hash);
  out << "config_hash " << hex << "\n";
  out << "epoch " << info.epoch << "\n";
  out << "loss " << fmt_g17(info.loss) << "\n";
  out << "ablation " << info.ablation << "\n";
  out << "arrays " << p.arrays.size() << "\n";
  char buf[40];
  for (const auto& a : p.arrays) {
    out << a.name << " " << a.t.rows << " " << a.t.cols << "\n";
    for (size_t i = 0; i < a.t.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%a", a.t.a[i]);
      out << buf << (i + 1 == a.t.size() ? "\n" : " ");
    }
  }
  if (!out) throw Error("short write on checkpoint '" + path + "'");
}

NetParams load_checkpoint(const std::string& path, CheckpointInfo* info) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint '" + path + "'");
  LineReader r(in, path);

  if (r.require("header") != "UM2N-CKPT 1") r.fail("not a UM2N-CKPT version 1 file");
  auto keyed = [&](const char* key) {
    TokenLine tl(r.require(key), r);
    if (tl.get_word("key") != key) r.fail(std::string("expected key '") + key + "'");
    return tl;
  };

  NetConfig cfg;
  cfg.d_model = static_cast<int>(keyed("d_model").get_int("value"));
  cfg.n_heads = static_cast<int>(keyed("n_heads").get_int("value"));
  cfg.n_gat_blocks = static_cast<int>(keyed("n_gat_blocks").get_int("value"));
  cfg.hidden = static_cast<int>(keyed("hidden").get_int("value"));
  cfg.activation = activation_from_string(keyed("activation").get_word("value"));
  cfg.seed = static_cast<std::uint64_t>(keyed("seed").get_int("value"));

  CheckpointInfo ci;
  {
    const std::string h = keyed("config_hash").get_word("value");
    ci.config_hash = std::strtoull(h.c_str(), nullptr, 16);
  }
  ci.epoch = static_cast<int>(keyed("epoch").get_int("value"));
  ci.loss = keyed("loss").get_double("value");
  ci.ablation = keyed("ablation").get_word("value");
  const long long n_arrays = keyed("arrays").get_int("value");

  validate(cfg);
  const auto specs = param_specs(cfg);
  if (n_arrays != static_cast<long long>(specs.size()))
    r.fail("array count does not match the configuration");

  NetParams p;
  p.cfg = cfg;
  for (const ArraySpec& s : specs) {
    TokenLine head(r.require("array header"), r);
    if (head.get_word("array name") != s.name) r.fail("expected array '" + s.name + "'");
    if (head.get_int("rows") != s.rows || head.get_int("cols") != s.cols)
      r.fail("array '" + s.name + "' has the wrong shape");
    Tensor t(s.rows, s.cols);
    const std::string line = r.require("array values");
    const char* c = line.c_str();
    char* end = nullptr;
    for (size_t i = 0; i < t.size(); ++i) {
      t.a[i] = std::strtod(c, &end);
      if (end == c) r.fail("array '" + s.name + "' has too few values");
      if (!std::isfinite(t.a[i])) r.fail("array '" + s.name + "' contains a non-finite value");
      c = end;
    }
    while (*c == ' ') ++c;
    if (*c != '\0') r.fail("array '" + s.name + "' has trailing data");
    p.arrays.push_back({s.name, std::move(t)});
  }
  if (info) *info = ci;
  return p;
}

}  // namespace um2n
