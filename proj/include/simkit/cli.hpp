#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "simkit/asymptotics.hpp"
#include "simkit/covariance.hpp"
#include "simkit/errors.hpp"
#include "simkit/geometry.hpp"
#include "simkit/integrate.hpp"
#include "simkit/io.hpp"
#include "simkit/manifold.hpp"
#include "simkit/methods.hpp"
#include "simkit/model.hpp"
#include "simkit/variational.hpp"

namespace simkit::cli {

using nlohmann::json;

struct GridSpec {
  double lo = 0.1;
  double hi = 3.0;
  int count = 256;
  std::vector<double> points() const { return uniform_grid(lo, hi, count); }
};

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidInput("cannot parse " + what + " value '" + s + "'");
  }
}

/// "lo:hi:count", count >= 16.
inline GridSpec parse_grid(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 3) throw InvalidInput("grid must be lo:hi:count, got '" + text + "'");
  GridSpec g;
  g.lo = parse_double(parts[0], "grid lo");
  g.hi = parse_double(parts[1], "grid hi");
  const double count = parse_double(parts[2], "grid count");
  if (count != std::floor(count) || count < 16 || count > 1e6)
    throw InvalidInput("grid count must be an integer >= 16");
  g.count = static_cast<int>(count);
  if (!(g.hi > g.lo)) throw InvalidInput("grid requires lo < hi");
  return g;
}

/// "t0:tf".
inline std::pair<double, double> parse_horizon(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 2) throw InvalidInput("horizon must be t0:tf, got '" + text + "'");
  const double t0 = parse_double(parts[0], "horizon t0");
  const double tf = parse_double(parts[1], "horizon tf");
  if (!(tf > t0)) throw InvalidInput("horizon requires t0 < tf");
  return {t0, tf};
}

inline State parse_state(const std::string& text, int dim) {
  const auto parts = split(text, ',');
  if (static_cast<int>(parts.size()) != dim)
    throw InvalidInput("state '" + text + "' must have " + std::to_string(dim) + " comma-separated entries");
  State z(dim);
  for (int i = 0; i < dim; ++i) z[i] = parse_double(parts[static_cast<std::size_t>(i)], "state");
  return z;
}

struct RunConfig {
  std::string command;
  std::string model = "davis-skodje";
  double eps = 1e-2;
  std::string grid = "0.1:3:256";
  std::string method;
  std::string horizon = "0:1";
  double rtol = 1e-10;
  double atol = 1e-12;
  int order = 4;
  std::string out;
  std::string out_dir;
  /// Seed manifold source for the curvature solver.
  std::string seed = "qssa";

  // integrate
  std::string z0 = "1,0.5";
  // sim --method variational
  std::vector<double> z1tf;
  std::string emit_hamiltonian;
  // diagnose
  std::string candidate = "oracle-sim";
  bool curvature = false;
  // advect
  std::string initial = "zero";
  double T = 0.0;
  int snapshots = 5;
  // covariance
  std::optional<double> rotate;
  bool swap = false;
  std::string seed_frame = "native";
  // fig
  int which = 1;

  json to_json() const {
    json j = {{"command", command}, {"model", model},     {"eps", eps},   {"grid", grid},
              {"order", order},     {"rtol", rtol},       {"atol", atol}, {"horizon", horizon},
              {"seed", seed}};
    if (!method.empty()) j["method"] = method;
    if (command == "integrate") j["z0"] = z0;
    if (!z1tf.empty()) j["z1tf"] = z1tf;
    if (!emit_hamiltonian.empty()) j["emit_hamiltonian"] = emit_hamiltonian;
    if (command == "diagnose") {
      j["candidate"] = candidate;
      j["curvature"] = curvature;
    }
    if (command == "advect" || command == "fig") {
      j["initial"] = initial;
      j["T"] = T;
      j["snapshots"] = snapshots;
    }
    if (command == "covariance") {
      j["change"] = swap ? json("swap") : json(rotate ? *rotate : 0.0);
      j["seed_frame"] = seed_frame;
    }
    if (command == "fig") j["which"] = which;
    return j;
  }
};

/// Output channels. The summary goes to `out` unless CSV data took it.
struct Streams {
  std::ostream& out;
  std::ostream& err;
};

namespace detail {

inline ModelSpec load_model(const RunConfig& cfg) {
  if (!(cfg.eps > 0.0) || !std::isfinite(cfg.eps)) throw InvalidInput("eps must be positive");
  return model_by_name(cfg.model, cfg.eps);
}

inline json base_provenance(const ModelSpec& model) {
  return {{"model", model.name()},
          {"jacobian", jacobian_method(model)},
          {"defect_convention", kDefectConvention},
          {"extended_metric", kExtendedMetric}};
}

/// CSV goes to cfg.out with a sidecar, or to stdout when no path is set.
inline void emit_table(const RunConfig& cfg, const std::string& path, const CsvTable& table, const json& provenance,
                       const json& metrics, Streams& io) {
  if (path.empty()) {
    table.write(io.out);
    return;
  }
  write_csv_with_sidecar(path, table, cfg.to_json(), provenance, metrics);
}

inline std::ostream& summary_stream(const RunConfig& cfg, Streams& io) { return cfg.out.empty() ? io.err : io.out; }

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline GraphManifold named_manifold(const std::string& name, const ModelSpec& model, const std::vector<double>& grid,
                                    const RunConfig& cfg) {
  if (const ReferenceGraph* ref = find_reference_graph(model, name))
    return sample_graph(grid, ref->h, model.eps(), cfg.order, ref->name);
  if (name == "zero") return sample_graph(grid, [](double) { return 0.0; }, model.eps(), cfg.order, "zero");
  if (name.rfind("const:", 0) == 0) {
    const double c = parse_double(name.substr(6), "constant profile");
    return sample_graph(grid, [c](double) { return c; }, model.eps(), cfg.order, name);
  }
  MethodOptions opts;
  opts.deriv_order = cfg.order;
  if (name == "curvature" && cfg.seed != "qssa") opts.curvature_seed = named_manifold(cfg.seed, model, grid, cfg);
  return compute_manifold(parse_method(name), model, grid, opts);
}

inline json reference_defects(const ModelSpec& model, const std::vector<double>& grid, int order) {
  json out = json::object();
  for (const ReferenceGraph& ref : model.reference_graphs()) {
    const DefectReport rep = invariance_defect(model, sample_graph(grid, ref.h, model.eps(), order, ref.name));
    out[ref.name] = {{"max_defect", json_number(rep.max_abs)}, {"note", ref.note}};
  }
  return out;
}

inline double max_abs_k(const ModelSpec& model, const GraphManifold& m) {
  return curvature_field(time_derivatives(model, m)).max_abs_K;
}

// ---------------------------------------------------------------------------

inline int cmd_models(const RunConfig&, Streams& io) {
  for (const std::string& name : model_names()) {
    const ModelSpec m = model_by_name(name, 1e-2);
    io.out << name << ": " << m.description() << " (dim " << m.dim() << ", jacobian " << jacobian_method(m)
           << (m.has_fast_split() ? ", fast split" : "") << ")\n";
    for (const ReferenceGraph& ref : m.reference_graphs()) io.out << "  reference " << ref.name << ": " << ref.note << "\n";
  }
  return 0;
}

inline int cmd_integrate(const RunConfig& cfg, Streams& io) {
  const ModelSpec model = load_model(cfg);
  const auto [t0, tf] = parse_horizon(cfg.horizon);
  const State z0 = parse_state(cfg.z0, model.dim());
  const Trajectory traj = integrate(model, z0, t0, tf, cfg.rtol, cfg.atol);
  std::vector<std::string> header{"t"};
  for (int i = 0; i < model.dim(); ++i) header.push_back("z" + std::to_string(i + 1));
  CsvTable table(header);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    std::vector<double> row{traj.times[k]};
    for (int i = 0; i < model.dim(); ++i) row.push_back(traj.states[k][i]);
    table.add(row);
  }
  const json metrics = {{"steps", traj.stats.accepted},
                        {"rejected", traj.stats.rejected},
                        {"rhs_evals", traj.stats.rhs_evals},
                        {"newton_iterations", traj.stats.newton_iterations},
                        {"switched_to_implicit", traj.stats.switched_to_implicit},
                        {"switch_time", json_number(traj.stats.switch_time)}};
  json prov = base_provenance(model);
  prov["integrator"] = "dormand-prince 5(4), tr-bdf2 fallback, cubic hermite dense output";
  emit_table(cfg, cfg.out, table, prov, metrics, io);
  summary_stream(cfg, io) << "integrate: " << traj.stats.accepted << " steps, z(tf) = (" << sci(traj.final_state()[0])
                          << ", " << sci(traj.final_state()[1]) << ")"
                          << (traj.stats.switched_to_implicit ? ", implicit after t=" + sci(traj.stats.switch_time) : "")
                          << "\n";
  return 0;
}

inline int sim_variational_rows(const RunConfig& cfg, const ModelSpec& model, Streams& io) {
  const auto [t0, tf] = parse_horizon(cfg.horizon);
  CsvTable table({"z1", "z2"});
  json rows = json::array();
  std::vector<HamiltonianTrace> traces;
  for (double target : cfg.z1tf) {
    VariationalSpec spec = default_variational_spec(model);
    spec.t0 = t0;
    spec.tf = tf;
    spec.anchor = SlowAnchor::terminal;
    spec.z1_tf = target;
    const VariationalResult res = minimize_fast_ic(model, spec);
    table.add({res.z1_t0, res.z2_0});
    json cands = json::array();
    for (const auto& c : res.candidates)
      cands.push_back({{"name", c.name}, {"value", c.value}, {"gap", c.gap}, {"defect", json_number(c.defect)}});
    json row = {{"z1_tf", target},   {"z1_t0", res.z1_t0},           {"z2_0", res.z2_0},
                {"phi", res.phi},    {"evaluations", res.evaluations}, {"candidates", cands},
                {"nearest", res.nearest_candidate}};
    if (!cfg.emit_hamiltonian.empty()) {
      HamiltonianOptions hopt;
      hopt.enforce_transversality = false;
      HamiltonianTrace tr = hamiltonian_trace(model, spec, res.extremal, hopt);
      row["hamiltonian_drift"] = tr.drift;
      row["transversality_residual"] = tr.transversality_residual;
      row["transversality_ok"] = tr.transversality_ok;
      traces.push_back(std::move(tr));
    }
    rows.push_back(row);
  }
  json prov = base_provenance(model);
  prov["method"] = "variational";
  prov["objective"] = "k1 |F|^2 - k2(z) |z|^2, 4-point gauss-legendre on dense output";
  emit_table(cfg, cfg.out, table, prov, {{"rows", rows}}, io);

  for (std::size_t k = 0; k < traces.size(); ++k) {
    std::string path = cfg.emit_hamiltonian;
    if (traces.size() > 1) {
      const std::filesystem::path p(path);
      path = (p.parent_path() / (p.stem().string() + "_" + std::to_string(k) + p.extension().string())).string();
    }
    CsvTable h({"t", "H"});
    for (std::size_t i = 0; i < traces[k].times.size(); ++i) h.add({traces[k].times[i], traces[k].H_values[i]});
    json hp = prov;
    hp["quantity"] = "H = L + lambda^T F along the extremal";
    write_csv_with_sidecar(path, h, cfg.to_json(), hp,
                           {{"drift", traces[k].drift},
                            {"transversality_residual", traces[k].transversality_residual},
                            {"terminal_slow_costate", traces[k].terminal_slow_costate}});
  }
  summary_stream(cfg, io) << "sim variational: " << cfg.z1tf.size() << " rows, nearest candidate "
                          << rows.front()["nearest"].get<std::string>() << "\n";
  return 0;
}

inline int cmd_sim(const RunConfig& cfg, Streams& io) {
  const Method method = parse_method(cfg.method);
  const ModelSpec model = load_model(cfg);
  if (method == Method::variational && !cfg.z1tf.empty()) return sim_variational_rows(cfg, model, io);
  const std::vector<double> grid = parse_grid(cfg.grid).points();
  const GraphManifold m = named_manifold(cfg.method, model, grid, cfg);
  CsvTable table({"z1", "z2"});
  for (std::size_t j = 0; j < m.size(); ++j) table.add({m.grid[j], m.values[j]});
  const DefectReport defect = invariance_defect(model, m);
  const double k = max_abs_k(model, m);
  json prov = base_provenance(model);
  prov["method"] = m.provenance;
  if (method == Method::curvature) prov["curvature_seed"] = cfg.seed;
  const json metrics = {{"rows", m.size()},
                        {"max_defect", json_number(defect.max_abs)},
                        {"stencil_error_bound", json_number(defect.stencil_error_bound)},
                        {"max_abs_K", json_number(k)},
                        {"boundary_excluded", defect.boundary_excluded}};
  emit_table(cfg, cfg.out, table, prov, metrics, io);
  summary_stream(cfg, io) << "sim " << cfg.method << ": max defect " << sci(defect.max_abs) << ", max |K| " << sci(k)
                          << "\n";
  return 0;
}

inline int cmd_diagnose(const RunConfig& cfg, Streams& io) {
  const ModelSpec model = load_model(cfg);
  const std::vector<double> grid = parse_grid(cfg.grid).points();
  const GraphManifold m = named_manifold(cfg.candidate, model, grid, cfg);
  const DefectReport defect = invariance_defect(model, m);
  std::vector<std::string> header{"z1", "z2", "defect"};
  std::optional<CurvatureReport> curv;
  if (cfg.curvature) {
    curv = curvature_field(time_derivatives(model, m));
    header.push_back("K");
  }
  CsvTable table(header);
  for (std::size_t j = 0; j < m.size(); ++j) {
    std::vector<double> row{m.grid[j], m.values[j], defect.defect[j]};
    if (curv) row.push_back(curv->K[j]);
    table.add(row);
  }
  json metrics = {{"candidate", cfg.candidate},
                  {"max_defect", json_number(defect.max_abs)},
                  {"stencil_error_bound", json_number(defect.stencil_error_bound)},
                  {"boundary_excluded", defect.boundary_excluded},
                  {"reference_candidates", reference_defects(model, grid, cfg.order)}};
  if (curv) {
    metrics["max_abs_K"] = json_number(curv->max_abs_K);
    metrics["curvature_boundary_excluded"] = curv->boundary_excluded;
  }
  json prov = base_provenance(model);
  prov["method"] = m.provenance;
  emit_table(cfg, cfg.out, table, prov, metrics, io);
  auto& s = summary_stream(cfg, io);
  s << "diagnose " << cfg.candidate << ": max defect " << sci(defect.max_abs);
  if (curv) s << ", max |K| " << sci(curv->max_abs_K);
  for (const ReferenceGraph& ref : model.reference_graphs())
    s << "; " << ref.name << " " << sci(metrics["reference_candidates"][ref.name]["max_defect"].get<double>());
  s << "\n";
  return 0;
}

inline int cmd_advect(const RunConfig& cfg, Streams& io) {
  if (cfg.out_dir.empty()) throw InvalidInput("advect needs --out-dir");
  const ModelSpec model = load_model(cfg);
  const std::vector<double> grid = parse_grid(cfg.grid).points();
  const GraphManifold h0 = named_manifold(cfg.initial, model, grid, cfg);
  const double T = cfg.T > 0.0 ? cfg.T : 5.0 * model.eps();
  AdvectOptions opts;
  opts.rtol = cfg.rtol;
  opts.atol = cfg.atol;
  const auto snaps = advect_family(model, h0, T, cfg.snapshots, opts);

  const std::filesystem::path dir(cfg.out_dir);
  json prov = base_provenance(model);
  prov["method"] = "characteristics + monotone cubic regridding";
  prov["initial"] = h0.provenance;
  json ts = json::array(), files = json::array(), trims = json::array();
  const ReferenceGraph* oracle = find_reference_graph(model, "oracle-sim");
  for (std::size_t k = 0; k < snaps.size(); ++k) {
    const auto& s = snaps[k];
    CsvTable table({"z1", "z2"});
    for (std::size_t j = 0; j < s.slice.size(); ++j) table.add({s.slice.grid[j], s.slice.values[j]});
    const std::string name = "snapshot_" + std::to_string(k + 1) + ".csv";
    json metrics = {{"t", s.t}, {"trim_low", s.trim_low}, {"trim_high", s.trim_high}};
    if (oracle) metrics["sup_distance_oracle"] = sup_distance(s.slice, oracle->h);
    write_csv_with_sidecar(dir / name, table, cfg.to_json(), prov, metrics);
    ts.push_back(s.t);
    files.push_back(name);
    trims.push_back({s.trim_low, s.trim_high});
  }
  json metrics = json::object();
  if (oracle) {
    const double rate = attraction_rate(h0, snaps, oracle->h);
    metrics["attraction_rate"] = rate;
    metrics["rate_times_eps"] = rate * model.eps();
  }
  json manifest = sidecar(cfg.to_json(), prov, metrics);
  manifest["t"] = ts;
  manifest["files"] = files;
  manifest["trim"] = trims;
  write_text_file(dir / "manifest.json", dump_json(manifest));
  io.out << "advect " << h0.provenance << ": " << snaps.size() << " snapshots to t=" << sci(T);
  if (oracle) io.out << ", attraction rate x eps " << sci(metrics["rate_times_eps"].get<double>());
  io.out << "\n";
  return 0;
}

inline int cmd_covariance(const RunConfig& cfg, Streams& io) {
  const Method method = parse_method(cfg.method);
  if (cfg.swap == cfg.rotate.has_value()) throw InvalidInput("covariance needs exactly one of --rotate or --swap");
  if (cfg.seed_frame != "native" && cfg.seed_frame != "mapped")
    throw InvalidInput("--seed-frame must be native or mapped");
  const ModelSpec model = load_model(cfg);
  const std::vector<double> grid = parse_grid(cfg.grid).points();
  const CoordinateChange change = cfg.swap ? CoordinateChange::swap() : CoordinateChange::rotation(*cfg.rotate);

  CovarianceOptions opts;
  opts.method.deriv_order = cfg.order;
  opts.curvature_seed = cfg.seed_frame == "mapped" ? SeedFrame::mapped : SeedFrame::native;
  // The swap makes the old fast coordinate the new rpv.
  if (cfg.swap) opts.new_split = std::make_pair(std::vector<int>{0}, std::vector<int>{1});

  json doc = sidecar(cfg.to_json(), base_provenance(model), json::object());
  doc["method"] = to_string(method);
  doc["change"] = change.label();
  int code = 0;
  try {
    const CovarianceReport rep = covariance_gap(method, model, change, grid, opts);
    doc["gap"] = rep.gap;
    doc["spans"] = {rep.span_lo, rep.span_hi};
    doc["status"] = "ok";
    doc["metrics"] = {{"compared_points", rep.compared_points}, {"condition_number", rep.condition_number}};
    io.out << "covariance " << doc["method"].get<std::string>() << " " << change.label() << ": gap " << sci(rep.gap)
           << "\n";
  } catch (const NonGraphError& e) {
    doc["gap"] = nullptr;
    doc["spans"] = nullptr;
    doc["status"] = "non-graph";
    doc["message"] = e.what();
    io.err << "covariance: " << e.what() << "\n";
    code = 1;
  }
  if (cfg.out.empty())
    io.out << dump_json(doc);
  else
    write_text_file(cfg.out, dump_json(doc));
  return code;
}

inline int fig_rpv(const RunConfig& cfg, const ModelSpec& model, const std::filesystem::path& dir, Streams& io) {
  const std::vector<double> grid = parse_grid(cfg.grid).points();
  const double deg = cfg.rotate ? *cfg.rotate : 30.0;
  const CoordinateChange rot = CoordinateChange::rotation(deg);
  const ReferenceGraph* oracle = find_reference_graph(model, "oracle-sim");
  if (!oracle) throw InvalidInput("fig 1 needs a model with an oracle slow graph");
  const GraphManifold o = sample_graph(grid, oracle->h, model.eps(), cfg.order, "oracle-sim");
  const GraphManifold q = qssa(model, grid, cfg.order);
  const ModelSpec moved = transform_model(model, rot);
  const GraphManifold o_rot = map_manifold(o, rot, 0);
  const GraphManifold q_rot_mapped = map_manifold(q, rot, 0);
  const GraphManifold q_rot_native = qssa(moved, o_rot.grid, cfg.order);

  json prov = base_provenance(model);
  prov["figure"] = "rpv dependence of QSSA against the invariant slow graph";
  prov["change"] = rot.label();
  auto emit = [&](const std::string& name, const GraphManifold& m, const char* x, const char* y, json metrics) {
    CsvTable t({x, y});
    for (std::size_t j = 0; j < m.size(); ++j) t.add({m.grid[j], m.values[j]});
    json p = prov;
    p["method"] = m.provenance;
    write_csv_with_sidecar(dir / name, t, cfg.to_json(), p, metrics);
  };
  emit("oracle.csv", o, "z1", "z2", {{"max_defect", invariance_defect(model, o).max_abs}});
  emit("qssa.csv", q, "z1", "z2", {{"max_defect", invariance_defect(model, q).max_abs}});
  emit("oracle_rotated.csv", o_rot, "w1", "w2", {{"max_defect", invariance_defect(moved, o_rot).max_abs}});
  emit("qssa_rotated_mapped.csv", q_rot_mapped, "w1", "w2", json::object());
  double gap = 0.0;
  for (std::size_t j = 0; j < q_rot_native.size(); ++j)
    gap = std::max(gap, std::abs(q_rot_native.values[j] - o_rot.values[j]));
  emit("qssa_rotated_native.csv", q_rot_native, "w1", "w2",
       {{"max_defect", invariance_defect(moved, q_rot_native).max_abs}, {"sup_distance_to_mapped_oracle", gap}});
  io.out << "fig 1: 5 files in " << dir.string() << "\n";
  return 0;
}

inline int fig_trajectories(const RunConfig& cfg, const ModelSpec& model, const std::filesystem::path& dir,
                            Streams& io) {
  const std::vector<double> grid = parse_grid(cfg.grid).points();
  const ReferenceGraph* oracle = find_reference_graph(model, "oracle-sim");
  if (!oracle) throw InvalidInput("fig 2 needs a model with an oracle slow graph");
  const auto [t0, tf] = parse_horizon(cfg.horizon);
  CsvTable traj({"id", "t", "z1", "z2"});
  const std::vector<std::pair<double, double>> starts = {{3.0, 0.0}, {3.0, 1.5}, {2.0, 0.0}, {2.0, 1.5},
                                                         {1.0, 0.0}, {1.0, 1.5}, {0.5, 1.2}, {0.25, 0.0}};
  for (std::size_t k = 0; k < starts.size(); ++k) {
    State z0(2);
    z0 << starts[k].first, starts[k].second;
    const Trajectory t = integrate(model, z0, t0, tf, cfg.rtol, cfg.atol);
    for (std::size_t i = 0; i < t.size(); ++i)
      traj.add({static_cast<double>(k), t.times[i], t.states[i][0], t.states[i][1]});
  }
  json prov = base_provenance(model);
  prov["figure"] = "trajectories attracted to the slow invariant graph";
  write_csv_with_sidecar(dir / "trajectories.csv", traj, cfg.to_json(), prov, {{"trajectories", starts.size()}});
  CsvTable sim({"z1", "z2"});
  for (double s : grid) sim.add({s, oracle->h(s)});
  write_csv_with_sidecar(dir / "sim.csv", sim, cfg.to_json(), prov, json::object());
  io.out << "fig 2: 2 files in " << dir.string() << "\n";
  return 0;
}

inline int fig_extended(const RunConfig& cfg, const ModelSpec& model, const std::filesystem::path& dir, Streams& io) {
  const std::vector<double> grid = parse_grid(cfg.grid).points();
  const GraphManifold h0 = named_manifold(cfg.initial, model, grid, cfg);
  const double T = cfg.T > 0.0 ? cfg.T : 3.0 * model.eps();
  AdvectOptions opts;
  opts.rtol = cfg.rtol;
  opts.atol = cfg.atol;
  const auto snaps = advect_family(model, h0, T, cfg.snapshots, opts);
  CsvTable surf({"z1", "t", "z2", "K"});
  auto add = [&](const GraphManifold& m, double t) {
    const CurvatureReport k = curvature_field(time_derivatives(model, m, t));
    for (std::size_t j = 0; j < m.size(); ++j) surf.add({m.grid[j], t, m.values[j], k.K[j]});
  };
  add(h0, 0.0);
  for (const auto& s : snaps) add(s.slice, s.t);
  json prov = base_provenance(model);
  prov["figure"] = "advected family as a graph over (z1, t) in extended phase space";
  prov["initial"] = h0.provenance;
  write_csv_with_sidecar(dir / "extended.csv", surf, cfg.to_json(), prov, {{"snapshots", snaps.size() + 1}});
  io.out << "fig 3: 1 file in " << dir.string() << "\n";
  return 0;
}

inline int cmd_fig(const RunConfig& cfg, Streams& io) {
  if (cfg.out_dir.empty()) throw InvalidInput("fig needs --out-dir");
  const ModelSpec model = load_model(cfg);
  const std::filesystem::path dir(cfg.out_dir);
  switch (cfg.which) {
    case 1: return fig_rpv(cfg, model, dir, io);
    case 2: return fig_trajectories(cfg, model, dir, io);
    case 3: return fig_extended(cfg, model, dir, io);
    default: throw InvalidInput("--which must be 1, 2 or 3");
  }
}

}  // namespace detail

/// Runs one configured pipeline: 0 success, 1 numerical failure, 2 invalid
/// input.
inline int dispatch(const RunConfig& cfg, Streams io) {
  try {
    if (cfg.order != 2 && cfg.order != 4) throw InvalidInput("--order must be 2 or 4");
    if (cfg.command == "models") return detail::cmd_models(cfg, io);
    if (cfg.command == "integrate") return detail::cmd_integrate(cfg, io);
    if (cfg.command == "sim") return detail::cmd_sim(cfg, io);
    if (cfg.command == "diagnose") return detail::cmd_diagnose(cfg, io);
    if (cfg.command == "advect") return detail::cmd_advect(cfg, io);
    if (cfg.command == "covariance") return detail::cmd_covariance(cfg, io);
    if (cfg.command == "fig") return detail::cmd_fig(cfg, io);
    throw InvalidInput("unknown command '" + cfg.command + "'");
  } catch (const Error& e) {
    io.err << "simkit " << cfg.command << ": " << to_string(e.kind()) << ": " << e.what() << "\n";
    return e.is_input_error() ? 2 : 1;
  } catch (const std::exception& e) {
    io.err << "simkit " << cfg.command << ": " << e.what() << "\n";
    return 1;
  }
}

/// Parses argv-style arguments (without the program name) and dispatches.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Slow invariant manifold toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  RunConfig cfg;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--model", cfg.model, "model name (see `models`)");
    sub->add_option("--eps", cfg.eps, "singular perturbation parameter");
    sub->add_option("--grid", cfg.grid, "slow grid lo:hi:count");
    sub->add_option("--order", cfg.order, "stencil order (2 or 4)");
    sub->add_option("--rtol", cfg.rtol, "integrator relative tolerance");
    sub->add_option("--atol", cfg.atol, "integrator absolute tolerance");
  };

  app.add_subcommand("models", "list built-in models");

  auto* integ = app.add_subcommand("integrate", "integrate one trajectory to CSV t,z1,...");
  common(integ);
  integ->add_option("--z0", cfg.z0, "initial state, comma separated");
  integ->add_option("--horizon", cfg.horizon, "t0:tf");
  integ->add_option("--out", cfg.out, "CSV path (stdout when absent)");

  auto* sim = app.add_subcommand("sim", "compute a slow manifold graph to CSV z1,z2");
  common(sim);
  sim->add_option("--method", cfg.method, "qssa | eps0 | eps1 | curvature | variational")->required();
  sim->add_option("--seed", cfg.seed, "curvature seed: qssa, eps0, eps1, oracle-sim, paper-sim, zero, const:<v>");
  sim->add_option("--horizon", cfg.horizon, "variational horizon t0:tf");
  sim->add_option("--z1tf", cfg.z1tf, "variational terminal slow values (one row each)");
  sim->add_option("--emit-hamiltonian", cfg.emit_hamiltonian, "CSV path for t,H along each extremal");
  sim->add_option("--out", cfg.out, "CSV path (stdout when absent)");

  auto* diag = app.add_subcommand("diagnose", "invariance defect (and curvature) of a candidate graph");
  common(diag);
  diag->add_option("--candidate", cfg.candidate,
                   "oracle-sim | paper-sim | zero | const:<v> | qssa | eps0 | eps1 | curvature | variational");
  diag->add_option("--seed", cfg.seed, "curvature seed");
  diag->add_flag("--curvature", cfg.curvature, "add the time-sectional curvature column");
  diag->add_option("--out", cfg.out, "CSV path (stdout when absent)");

  auto* adv = app.add_subcommand("advect", "transport an initial graph along the flow");
  common(adv);
  adv->add_option("--initial", cfg.initial, "initial graph (as --candidate of diagnose)");
  adv->add_option("--T", cfg.T, "final time (default 5 eps)");
  adv->add_option("--snapshots", cfg.snapshots, "number of snapshots");
  adv->add_option("--out-dir", cfg.out_dir, "directory for snapshot CSVs and manifest.json")->required();

  auto* cov = app.add_subcommand("covariance", "coordinate-change gap of a method");
  common(cov);
  cov->add_option("--method", cfg.method, "qssa | eps0 | eps1 | curvature | variational")->required();
  auto* rot_opt = cov->add_option("--rotate", cfg.rotate, "rotation angle in degrees");
  cov->add_flag("--swap", cfg.swap, "swap the two coordinates")->excludes(rot_opt);
  cov->add_option("--seed-frame", cfg.seed_frame, "curvature seed frame: native | mapped");
  cov->add_option("--out", cfg.out, "JSON path (stdout when absent)");

  auto* fig = app.add_subcommand("fig", "emit figure data bundles");
  common(fig);
  fig->add_option("--which", cfg.which, "1: rpv dependence, 2: trajectories, 3: extended phase space");
  fig->add_option("--horizon", cfg.horizon, "trajectory horizon for --which 2");
  fig->add_option("--rotate", cfg.rotate, "rotation for --which 1 (default 30)");
  fig->add_option("--initial", cfg.initial, "initial graph for --which 3");
  fig->add_option("--T", cfg.T, "final time for --which 3 (default 3 eps)");
  fig->add_option("--snapshots", cfg.snapshots, "snapshots for --which 3");
  fig->add_option("--out-dir", cfg.out_dir, "output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "simkit: " << e.what() << "\n";
    return 2;
  }
  for (CLI::App* sub : app.get_subcommands()) cfg.command = sub->get_name();
  return dispatch(cfg, {out, err});
}

}  // namespace simkit::cli
