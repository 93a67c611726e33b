#include "um2n/train.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "um2n/hash.hpp"
#include "um2n/text_io.hpp"

namespace um2n {

Ablation ablation_from_string(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "coord_loss") return Ablation::coord_loss;
  if (s == "solution_input") return Ablation::solution_input;
  throw InvalidArgument("unknown ablation '" + s + "'");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::coord_loss: return "coord_loss";
    case Ablation::solution_input: return "solution_input";
  }
  throw InvalidArgument("bad ablation value");
}

std::string TrainConfig::describe() const {
  std::ostringstream ss;
  ss << "train lambda_vol=" << fmt_g17(lambda_vol) << " lambda_cd=" << fmt_g17(lambda_cd)
     << " lr=" << fmt_g17(learning_rate) << " beta1=" << fmt_g17(beta1)
     << " beta2=" << fmt_g17(beta2) << " eps=" << fmt_g17(epsilon) << " epochs=" << epochs
     << " batch_size=" << batch_size << " seed=" << seed << " ablation=" << to_string(ablation)
     << " chamfer_squared=" << (chamfer_squared ? 1 : 0)
     << " checkpoint_every=" << checkpoint_every;
  ss << " net d_model=" << net.d_model << " n_heads=" << net.n_heads
     << " n_gat_blocks=" << net.n_gat_blocks << " hidden=" << net.hidden
     << " activation=" << activation_to_string(net.activation) << " net_seed=" << net.seed;
  return ss.str();
}

std::uint64_t TrainConfig::hash() const { return fnv1a64(describe()); }

void validate(const TrainConfig& cfg) {
  if (cfg.lambda_vol < 0.0 || cfg.lambda_cd < 0.0)
    throw InvalidArgument("train config: loss weights must be nonnegative");
  if (cfg.lambda_vol == 0.0 && cfg.lambda_cd == 0.0)
    throw InvalidArgument("train config: at least one loss weight must be positive");
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("train config: learning rate must be positive");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw InvalidArgument("train config: betas must lie in [0, 1)");
  if (!(cfg.epsilon > 0.0)) throw InvalidArgument("train config: epsilon must be positive");
  if (cfg.epochs < 1) throw InvalidArgument("train config: epochs must be at least 1");
  if (cfg.batch_size < 1) throw InvalidArgument("train config: batch size must be at least 1");
  if (cfg.checkpoint_every < 1)
    throw InvalidArgument("train config: checkpoint interval must be at least 1");
  validate(cfg.net);
}

double volume_loss(const Mesh& adapted, const Mesh& reference) {
  if (adapted.tri != reference.tri || adapted.n_vertices() != reference.n_vertices())
    throw InvalidArgument("volume_loss: meshes do not share their topology");
  if (adapted.n_elements() == 0) throw InvalidArgument("volume_loss: empty mesh");
  double sum = 0.0;
  for (int e = 0; e < adapted.n_elements(); ++e)
    sum += std::abs(signed_volume(adapted, e) - signed_volume(reference, e));
  return sum / adapted.n_elements();
}

double chamfer_loss(const std::vector<Vec2>& a, const std::vector<Vec2>& b, bool squared) {
  if (a.empty() || b.empty()) throw InvalidArgument("chamfer_loss: empty point set");
  auto one_way = [squared](const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
    double sum = 0.0;
    for (const Vec2& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec2& q : to) {
        const double dx = p.x - q.x, dy = p.y - q.y;
        best = std::min(best, dx * dx + dy * dy);
      }
      sum += squared ? best : std::sqrt(best);
    }
    return sum / static_cast<double>(from.size());
  };
  return one_way(a, b) + one_way(b, a);
}

namespace {

std::vector<double> network_input(const DatasetSample& s, const TrainConfig& cfg) {
  if (cfg.ablation != Ablation::solution_input) return s.monitor;
  std::vector<double> u(s.mesh->n_vertices());
  for (int v = 0; v < s.mesh->n_vertices(); ++v) u[v] = eval_field(s.spec, s.mesh->xy[v]);
  return u;
}

// Loss of one sample on the tape; fills `out` from the forward values.
Tape::Id sample_loss_on_tape(Tape& tape, const std::vector<Tape::Id>& ids,
                             const DatasetSample& s, const TrainConfig& cfg, SampleLoss* out) {
  const Mesh& mesh = *s.mesh;
  const int nv = mesh.n_vertices();
  const int ne = mesh.n_elements();

  const GraphBatch batch = build_batch(mesh, network_input(s, cfg));
  const Tape::Id coords = net_forward_tape(tape, ids, cfg.net, batch);
  const Tensor& c = tape.val(coords);

  Tensor ref(nv, 2);
  for (int v = 0; v < nv; ++v) {
    ref.at(v, 0) = s.ref_xy[v].x;
    ref.at(v, 1) = s.ref_xy[v].y;
  }

  // predicted signed element volumes, for the loss and the inversion count
  std::vector<int> i0(ne), i1(ne), i2(ne);
  for (int e = 0; e < ne; ++e) {
    i0[e] = mesh.tri[e][0];
    i1[e] = mesh.tri[e][1];
    i2[e] = mesh.tri[e][2];
  }
  const Tape::Id g0 = tape.gather_rows(coords, i0);
  const Tape::Id vols = tape.mul_scalar(
      tape.cross2(tape.sub(tape.gather_rows(coords, i1), g0),
                  tape.sub(tape.gather_rows(coords, i2), g0)),
      0.5);
  int inverted = 0;
  for (int e = 0; e < ne; ++e)
    if (tape.val(vols).at(e, 0) <= 0.0) ++inverted;

  Tape::Id total;
  if (cfg.ablation == Ablation::coord_loss) {
    const Tape::Id d = tape.sub(coords, tape.input(ref));
    const Tape::Id mse = tape.mean_all(tape.mul_elem(d, d));
    total = tape.mul_scalar(mse, cfg.lambda_vol + cfg.lambda_cd);
    out->vol = tape.val(mse).a[0];
    out->cd = tape.val(mse).a[0];
  } else {
    Tensor refv(ne, 1);
    double mean_ref = 0.0;
    for (int e = 0; e < ne; ++e) {
      const Vec2 a = s.ref_xy[i0[e]], b = s.ref_xy[i1[e]], cc = s.ref_xy[i2[e]];
      refv.at(e, 0) = triangle_area(a, b, cc);
      mean_ref += refv.at(e, 0);
    }
    mean_ref /= ne;
    const Tape::Id vol_raw = tape.mean_all(tape.abs(tape.sub(vols, tape.input(refv))));
    const Tape::Id vol_l = tape.mul_scalar(vol_raw, 1.0 / mean_ref);

    // nearest neighbors from the current forward values; the selection is
    // locally constant, ties go to the lowest index
    auto nearest = [](const Tensor& from, const Tensor& to) {
      std::vector<int> idx(from.rows);
      for (int i = 0; i < from.rows; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < to.rows; ++j) {
          const double dx = from.at(i, 0) - to.at(j, 0);
          const double dy = from.at(i, 1) - to.at(j, 1);
          const double d2 = dx * dx + dy * dy;
          if (d2 < best) {
            best = d2;
            idx[i] = j;
          }
        }
      }
      return idx;
    };
    const std::vector<int> fwd = nearest(c, ref);
    const std::vector<int> bwd = nearest(ref, c);
    Tensor ref_sel(nv, 2);
    for (int v = 0; v < nv; ++v) {
      ref_sel.at(v, 0) = ref.at(fwd[v], 0);
      ref_sel.at(v, 1) = ref.at(fwd[v], 1);
    }
    const Tape::Id d1 = tape.sub(coords, tape.input(ref_sel));
    const Tape::Id d2 = tape.sub(tape.input(ref), tape.gather_rows(coords, bwd));
    Tape::Id t1, t2;
    if (cfg.chamfer_squared) {
      Tensor ones(2, 1);
      ones.a = {1.0, 1.0};
      const Tape::Id ones_id = tape.input(ones);
      t1 = tape.mean_all(tape.matmul(tape.mul_elem(d1, d1), ones_id));
      t2 = tape.mean_all(tape.matmul(tape.mul_elem(d2, d2), ones_id));
    } else {
      t1 = tape.mean_all(tape.row_norm(d1));
      t2 = tape.mean_all(tape.row_norm(d2));
    }
    const Tape::Id cd = tape.add(t1, t2);
    total = tape.add(tape.mul_scalar(vol_l, cfg.lambda_vol), tape.mul_scalar(cd, cfg.lambda_cd));
    out->vol = tape.val(vol_l).a[0];
    out->cd = tape.val(cd).a[0];
  }
  out->total = tape.val(total).a[0];
  out->inverted = inverted;
  return total;
}

void aggregate(LossReport& report) {
  report.total = report.vol = report.cd = 0.0;
  report.inverted = 0;
  for (const SampleLoss& s : report.per_sample) {
    report.total += s.total;
    report.vol += s.vol;
    report.cd += s.cd;
    report.inverted += s.inverted;
  }
  const double n = static_cast<double>(report.per_sample.size());
  if (n > 0) {
    report.total /= n;
    report.vol /= n;
    report.cd /= n;
  }
}

}  // namespace

LossReport total_loss(const NetParams& p, const DatasetSample& sample, const TrainConfig& cfg) {
  validate(cfg);
  validate(sample);
  Tape tape;
  std::vector<Tape::Id> ids;
  ids.reserve(p.arrays.size());
  for (const auto& a : p.arrays) ids.push_back(tape.input(a.t));
  LossReport report;
  report.per_sample.emplace_back();
  sample_loss_on_tape(tape, ids, sample, cfg, &report.per_sample.back());
  aggregate(report);
  return report;
}

NetParams grad(const NetParams& p, const std::vector<DatasetSample>& samples,
               const TrainConfig& cfg, LossReport* report) {
  validate(cfg);
  if (samples.empty()) throw InvalidArgument("grad: empty batch");

  NetParams out;
  out.cfg = p.cfg;
  out.arrays.reserve(p.arrays.size());
  for (const auto& a : p.arrays) out.arrays.push_back({a.name, Tensor(a.t.rows, a.t.cols)});

  LossReport rep;
  for (size_t si = 0; si < samples.size(); ++si) {
    const DatasetSample& s = samples[si];
    validate(s);
    Tape tape;
    std::vector<Tape::Id> ids;
    ids.reserve(p.arrays.size());
    for (const auto& a : p.arrays) ids.push_back(tape.input(a.t));
    rep.per_sample.emplace_back();
    const Tape::Id total = sample_loss_on_tape(tape, ids, s, cfg, &rep.per_sample.back());
    if (!std::isfinite(rep.per_sample.back().total))
      throw NumericalError("loss is not finite for sample with seed " + std::to_string(s.seed));
    tape.backward(total);
    for (size_t k = 0; k < out.arrays.size(); ++k) {
      const Tensor& g = tape.grad(ids[k]);
      Tensor& acc = out.arrays[k].t;
      for (size_t i = 0; i < acc.size(); ++i) {
        acc.a[i] += g.a[i];
        if (!std::isfinite(acc.a[i]))
          throw NumericalError("gradient for parameter '" + out.arrays[k].name +
                               "' is not finite");
      }
    }
  }
  aggregate(rep);
  if (report) *report = std::move(rep);
  return out;
}

void adam_step(NetParams& params, const NetParams& grads, AdamState& state,
               const TrainConfig& cfg) {
  if (grads.arrays.size() != params.arrays.size())
    throw InvalidArgument("adam_step: parameter and gradient structures differ");
  if (state.m.empty()) {
    state.m.reserve(params.arrays.size());
    state.v.reserve(params.arrays.size());
    for (const auto& a : params.arrays) {
      state.m.emplace_back(a.t.rows, a.t.cols);
      state.v.emplace_back(a.t.rows, a.t.cols);
    }
  }
  if (state.m.size() != params.arrays.size())
    throw InvalidArgument("adam_step: optimizer state does not match the parameters");

  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t k = 0; k < params.arrays.size(); ++k) {
    Tensor& theta = params.arrays[k].t;
    const Tensor& g = grads.arrays[k].t;
    if (!theta.same_shape(g))
      throw InvalidArgument("adam_step: shape mismatch in '" + params.arrays[k].name + "'");
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (size_t i = 0; i < theta.size(); ++i) {
      m.a[i] = cfg.beta1 * m.a[i] + (1.0 - cfg.beta1) * g.a[i];
      v.a[i] = cfg.beta2 * v.a[i] + (1.0 - cfg.beta2) * g.a[i] * g.a[i];
      const double mhat = m.a[i] / bc1;
      const double vhat = v.a[i] / bc2;
      theta.a[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

namespace {

void fisher_yates(std::vector<int>& idx, Rng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
    std::swap(idx[i], idx[rng.uniform_int(0, i)]);
}

}  // namespace

TrainResult train_loop(const Dataset& dataset, const TrainConfig& cfg,
                       const std::string& out_dir) {
  validate(cfg);
  const int n = static_cast<int>(dataset.samples.size());
  if (n == 0) throw InvalidArgument("train_loop: empty dataset");
  std::filesystem::create_directories(out_dir);

  // seeded split: 10% held out, none for tiny datasets
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(cfg.seed, 0));
  fisher_yates(order, split_rng);
  const int n_val = n >= 10 ? n / 10 : 0;
  const std::vector<int> val_idx(order.begin(), order.begin() + n_val);
  std::vector<int> train_idx(order.begin() + n_val, order.end());

  NetParams params = init_params(cfg.net);
  AdamState opt;

  std::ofstream curve(out_dir + "/loss_curve.txt");
  if (!curve) throw Error("cannot write " + out_dir + "/loss_curve.txt");

  CheckpointInfo info;
  info.config_hash = cfg.hash();
  info.ablation = to_string(cfg.ablation);

  TrainResult res;
  res.best_val = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng epoch_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    fisher_yates(train_idx, epoch_rng);

    EpochStats es;
    es.epoch = epoch;
    int seen = 0;
    for (size_t b0 = 0; b0 < train_idx.size(); b0 += cfg.batch_size) {
      std::vector<DatasetSample> batch;
      for (size_t b = b0; b < train_idx.size() && b < b0 + cfg.batch_size; ++b)
        batch.push_back(dataset.samples[train_idx[b]]);
      LossReport rep;
      const NetParams g = grad(params, batch, cfg, &rep);
      adam_step(params, g, opt, cfg);
      for (const SampleLoss& s : rep.per_sample) {
        es.total += s.total;
        es.vol += s.vol;
        es.cd += s.cd;
        es.inverted += s.inverted;
        ++seen;
      }
    }
    es.total /= seen;
    es.vol /= seen;
    es.cd /= seen;

    if (n_val > 0) {
      double v = 0.0;
      for (int i : val_idx) v += total_loss(params, dataset.samples[i], cfg).total;
      es.val_total = v / n_val;
    } else {
      es.val_total = std::numeric_limits<double>::quiet_NaN();
    }

    curve << epoch << ' ' << fmt_g17(es.total) << ' ' << fmt_g17(es.vol) << ' '
          << fmt_g17(es.cd) << ' ' << fmt_g17(es.val_total) << ' ' << es.inverted << '\n';
    curve.flush();
    res.curve.push_back(es);

    info.epoch = epoch;
    info.loss = es.total;
    if (epoch % cfg.checkpoint_every == 0)
      save_checkpoint(out_dir + "/ckpt_epoch_" + std::to_string(epoch) + ".txt", params, info);
    if (n_val > 0 && es.val_total < res.best_val) {
      res.best_val = es.val_total;
      res.best_checkpoint = out_dir + "/ckpt_best.txt";
      save_checkpoint(res.best_checkpoint, params, info);
    }
  }

  res.final_checkpoint = out_dir + "/ckpt_final.txt";
  save_checkpoint(res.final_checkpoint, params, info);
  if (!curve) throw Error("failed writing " + out_dir + "/loss_curve.txt");
  return res;
}

}  // namespace um2n
