#include "um2n/datagen.hpp"

#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

#include "um2n/hash.hpp"
#include "um2n/mesh_io.hpp"
#include "um2n/text_io.hpp"

namespace um2n {

void validate(const FieldSpec& spec) {
  if (spec.gaussians.empty()) throw InvalidArgument("field spec needs at least one component");
  for (const auto& g : spec.gaussians) {
    if (!(g.sx > 0.0) || !(g.sy > 0.0))
      throw InvalidArgument("field spec widths must be positive");
    if (!std::isfinite(g.mux) || !std::isfinite(g.muy) || !std::isfinite(g.sx) ||
        !std::isfinite(g.sy))
      throw InvalidArgument("field spec contains a non-finite value");
  }
}

double eval_field(const FieldSpec& spec, Vec2 p) {
  double u = 0.0;
  for (const auto& g : spec.gaussians) {
    const double dx = (p.x - g.mux) / g.sx;
    const double dy = (p.y - g.muy) / g.sy;
    u += std::exp(-(dx * dx + dy * dy));
  }
  return u;
}

std::string GenConfig::describe() const {
  std::ostringstream ss;
  ss << "gen seed=" << seed << " n_samples=" << n_samples << " mesh_sizes=";
  for (size_t i = 0; i < mesh_sizes.size(); ++i) ss << (i ? "," : "") << mesh_sizes[i];
  ss << " N=" << n_min << ".." << n_max;
  ss << " mu=" << fmt_g17(mu_min) << ".." << fmt_g17(mu_max);
  ss << " sigma=" << fmt_g17(sigma_min) << ".." << fmt_g17(sigma_max);
  ss << " monitor=" << to_string(monitor.kind) << " alpha=" << fmt_g17(monitor.alpha)
     << " beta=" << fmt_g17(monitor.beta);
  return ss.str();
}

std::uint64_t GenConfig::hash() const { return fnv1a64(describe()); }

void validate(const GenConfig& cfg) {
  if (cfg.n_samples < 1) throw InvalidArgument("gen config: n_samples must be positive");
  if (cfg.mesh_sizes.empty()) throw InvalidArgument("gen config: mesh_sizes is empty");
  for (int n : cfg.mesh_sizes)
    if (n < 2) throw InvalidArgument("gen config: mesh sizes must be at least 2");
  if (cfg.n_min < 1 || cfg.n_min > cfg.n_max)
    throw InvalidArgument("gen config: N range must satisfy 1 <= min <= max");
  if (!(cfg.mu_min <= cfg.mu_max)) throw InvalidArgument("gen config: mu range is reversed");
  if (!(cfg.sigma_min > 0.0) || !(cfg.sigma_min <= cfg.sigma_max))
    throw InvalidArgument("gen config: sigma range must be positive and ordered");
}

FieldSpec sample_field_spec(Rng& rng, const GenConfig& cfg) {
  FieldSpec spec;
  const int n = rng.uniform_int(cfg.n_min, cfg.n_max);
  spec.gaussians.reserve(n);
  for (int k = 0; k < n; ++k) {
    FieldSpec::Gaussian g;
    g.mux = rng.uniform(cfg.mu_min, cfg.mu_max);
    g.muy = rng.uniform(cfg.mu_min, cfg.mu_max);
    g.sx = rng.uniform(cfg.sigma_min, cfg.sigma_max);
    g.sy = rng.uniform(cfg.sigma_min, cfg.sigma_max);
    spec.gaussians.push_back(g);
  }
  return spec;
}

void validate(const DatasetSample& sample) {
  if (!sample.mesh) throw InvalidArgument("dataset sample: null mesh");
  validate(sample.spec);
  const int nv = sample.mesh->n_vertices();
  if (static_cast<int>(sample.monitor.size()) != nv)
    throw InvalidArgument("dataset sample: monitor size does not match the mesh");
  if (static_cast<int>(sample.ref_xy.size()) != nv)
    throw InvalidArgument("dataset sample: reference vertex count does not match the mesh");
  for (double m : sample.monitor)
    if (!std::isfinite(m) || m < 1.0 - 1e-12)
      throw InvalidArgument("dataset sample: monitor values must be finite and >= 1");
  for (const Vec2& p : sample.ref_xy)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw InvalidArgument("dataset sample: non-finite reference vertex");
  if (!std::isfinite(sample.ma_residual) || sample.ma_residual < 0.0)
    throw InvalidArgument("dataset sample: implausible label residual");
  if (!detect_tangling(*sample.mesh).empty())
    throw InvalidArgument("dataset sample: input mesh is tangled");
  Mesh ref = *sample.mesh;
  ref.xy = sample.ref_xy;
  if (!detect_tangling(ref).empty())
    throw InvalidArgument("dataset sample: reference mesh is tangled");
}

DatasetSample build_sample(const MeshPtr& mesh, const FieldSpec& spec,
                           const MonitorConfig& monitor_cfg, const MAParams& ma) {
  if (!mesh) throw InvalidArgument("build_sample: null mesh");
  validate(spec);

  ScalarField u;
  u.mesh = mesh;
  u.values.resize(mesh->n_vertices());
  for (int v = 0; v < mesh->n_vertices(); ++v) u.values[v] = eval_field(spec, mesh->xy[v]);

  const ScalarField m = compute_monitor(u, monitor_cfg);
  const MAState st = solve_ma(mesh, m, ma);

  DatasetSample s;
  s.mesh = mesh;
  s.monitor = m.values;
  s.ref_xy = st.moved->xy;
  s.spec = spec;
  s.ma_residual = st.residual_history.empty() ? 0.0 : st.residual_history.back();
  return s;
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016" PRIx64, ds.config_hash);
  out << "UM2N-DATA 1 " << hex << ' ' << ds.samples.size() << '\n';
  for (const DatasetSample& s : ds.samples) {
    out << "S " << s.mesh->n_vertices() << ' ' << s.mesh->n_elements() << '\n';
    out << "F " << s.seed << ' ' << fmt_g17(s.ma_residual) << ' ' << s.spec.gaussians.size();
    for (const auto& g : s.spec.gaussians)
      out << ' ' << fmt_g17(g.mux) << ' ' << fmt_g17(g.muy) << ' ' << fmt_g17(g.sx) << ' '
          << fmt_g17(g.sy);
    out << '\n';
    write_mesh_block(out, *s.mesh);
    for (size_t v = 0; v < s.monitor.size(); ++v)
      out << (v ? " " : "") << fmt_g17(s.monitor[v]);
    out << '\n';
    for (const Vec2& p : s.ref_xy) out << fmt_g17(p.x) << ' ' << fmt_g17(p.y) << '\n';
  }
}

Dataset read_dataset(std::istream& in, const std::string& name) {
  LineReader reader(in, name);
  Dataset ds;
  long long n_samples = 0;
  {
    TokenLine header(reader.require("header"), reader);
    if (header.get_word("format magic") != "UM2N-DATA")
      throw ParseError(name + ": not a UM2N-DATA file", 1);
    if (header.get_int("format version") != 1)
      throw ParseError(name + ": unsupported dataset format version", 1);
    ds.config_hash = std::strtoull(header.get_word("config hash").c_str(), nullptr, 16);
    n_samples = header.get_int("sample count");
    if (n_samples < 0) reader.fail("negative sample count");
  }
  ds.samples.reserve(n_samples);
  for (long long i = 0; i < n_samples; ++i) {
    DatasetSample s;
    TokenLine rec(reader.require("sample record"), reader);
    if (rec.get_word("record tag") != "S") reader.fail("expected an 'S' record");
    const long long nv = rec.get_int("vertex count");
    const long long ne = rec.get_int("element count");

    TokenLine prov(reader.require("provenance line"), reader);
    if (prov.get_word("provenance tag") != "F") reader.fail("expected an 'F' line");
    s.seed = std::strtoull(prov.get_word("sample seed").c_str(), nullptr, 10);
    s.ma_residual = prov.get_double("label residual");
    const long long ng = prov.get_int("component count");
    for (long long k = 0; k < ng; ++k) {
      FieldSpec::Gaussian g;
      g.mux = prov.get_double("mu x");
      g.muy = prov.get_double("mu y");
      g.sx = prov.get_double("sigma x");
      g.sy = prov.get_double("sigma y");
      s.spec.gaussians.push_back(g);
    }

    s.mesh = std::make_shared<const Mesh>(read_mesh_block(reader, nv, ne));

    TokenLine mline(reader.require("monitor line"), reader);
    s.monitor.resize(nv);
    for (long long v = 0; v < nv; ++v) s.monitor[v] = mline.get_double("monitor value");

    s.ref_xy.resize(nv);
    for (long long v = 0; v < nv; ++v) {
      TokenLine rline(reader.require("reference vertex"), reader);
      s.ref_xy[v].x = rline.get_double("reference x");
      s.ref_xy[v].y = rline.get_double("reference y");
    }
    validate(s);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_dataset(out, ds);
  if (!out) throw Error("failed writing " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_dataset(in, path);
}

namespace {

DatasetSample build_candidate(const GenConfig& cfg, const MAParams& ma, long long index) {
  const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(index));
  Rng rng(seed);
  const int size = cfg.mesh_sizes[rng.uniform_int(0, static_cast<int>(cfg.mesh_sizes.size()) - 1)];
  const FieldSpec spec = sample_field_spec(rng, cfg);
  auto mesh = std::make_shared<const Mesh>(generate_unit_square_mesh(size));
  DatasetSample s = build_sample(mesh, spec, cfg.monitor, ma);
  s.seed = seed;
  return s;
}

}  // namespace

GenSummary generate_dataset(const GenConfig& cfg, const std::string& out_path,
                            const MAParams& ma, int n_threads) {
  validate(cfg);
  if (n_threads < 1) throw InvalidArgument("generate_dataset: n_threads must be positive");
  const auto t0 = std::chrono::steady_clock::now();

  Dataset ds;
  ds.config_hash = cfg.hash();
  int rejected = 0;
  long long next_index = 0;
  while (static_cast<int>(ds.samples.size()) < cfg.n_samples) {
    if (rejected > cfg.n_samples) {
      std::ostringstream msg;
      msg << "dataset generation aborted: " << rejected << " of " << (next_index)
          << " candidate label solves failed (more than half of the requested " << cfg.n_samples
          << " samples)";
      throw DatagenAborted(msg.str());
    }
    const int need = cfg.n_samples - static_cast<int>(ds.samples.size());
    std::vector<std::unique_ptr<DatasetSample>> block(need);  // null = rejected
    const int workers = std::min(n_threads, need);
    std::atomic<int> cursor{0};
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](int tid) {
      try {
        for (int b = cursor.fetch_add(1); b < need; b = cursor.fetch_add(1)) {
          try {
            block[b] = std::make_unique<DatasetSample>(build_candidate(cfg, ma, next_index + b));
          } catch (const MATangled&) {
          } catch (const MANotConverged&) {
          }
        }
      } catch (...) {
        errors[tid] = std::current_exception();
      }
    };
    if (workers == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < workers; ++t) pool.emplace_back(work, t);
      for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
    next_index += need;
    for (auto& s : block) {
      if (s)
        ds.samples.push_back(std::move(*s));
      else
        ++rejected;
    }
  }

  save_dataset(ds, out_path);
  GenSummary summary;
  summary.accepted = static_cast<int>(ds.samples.size());
  summary.rejected = rejected;
  summary.rejection_rate =
      static_cast<double>(rejected) / static_cast<double>(summary.accepted + rejected);
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return summary;
}

}  // namespace um2n
