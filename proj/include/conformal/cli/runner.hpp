#pragma once

#include "conformal/cli/config.hpp"
#include "conformal/functionals.hpp"
#include "conformal/mesh_gen.hpp"
#include "conformal/mesh_io.hpp"
#include "conformal/stokes.hpp"

#include <cstdio>
#include <iostream>

namespace conformal::cli {

/// Command-line overrides and logging for one invocation.
struct RunOptions {
  std::optional<std::filesystem::path> output_dir;
  std::optional<int> snapshot_every;
  bool quiet = false;
  bool write_artifacts = true;
  std::ostream* log = &std::cerr;
};

inline TriMesh build_mesh(const MeshConfig& m) {
  if (m.generator == "file") return load_mesh(m.file);
  if (m.generator == "disc") return gen_disc(m.radius, m.rings);
  if (m.generator == "annulus") return gen_annulus(m.r_inner, m.r_outer, m.rings);
  if (m.generator == "channel") return gen_channel(m.hole_radius, m.half_width, m.half_height, m.per_ring);
  if (m.generator == "rectangle") return gen_rectangle(m.lo, m.hi, m.nx, m.ny);
  throw ConfigError("mesh.generator '" + m.generator + "' is unknown");
}

inline LevelsetFunction levelset_for(const ProblemConfig& p) {
  if (p.kind == ProblemKind::Clover) return clover(p.clover_a, p.clover_b, p.clover_eps);
  if (p.kind == ProblemKind::Annulus) return annulus_levelset(p.r_prime);
  throw ConfigError("problem.kind has no levelset function");
}

inline Objective levelset_objective(const LevelsetFunction& lf) {
  return [lf](const TriMesh& m) {
    return Evaluation{levelset_value(m, lf), levelset_shape_dual(m, lf).values, std::nullopt};
  };
}

/// Extent along x of the nodes on the given boundary tag.
inline double tagged_x_extent(const TriMesh& mesh, BoundaryTag tag) {
  const auto on = mesh.nodes_with_tags({tag});
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Index i = 0; i < mesh.num_nodes(); ++i)
    if (on[i]) {
      lo = std::min(lo, mesh.nodes[i].x());
      hi = std::max(hi, mesh.nodes[i].x());
    }
  return hi >= lo ? hi - lo : 0.0;
}

struct ConstraintReport {
  double volume_target = 0, volume_final = 0;
  Vec2 barycentre_target = Vec2::Zero(), barycentre_final = Vec2::Zero();
  double volume_relative_residual = 0;
  double barycentre_residual = 0;  // max abs component over channel width
  Eigen::Vector3d lambda = Eigen::Vector3d::Zero();
  double rho = 0;
  int outer_iterations = 0;
  bool satisfied = false;
  double gamma_x_extent_initial = 0, gamma_x_extent_final = 0;
};

/// Everything a finished run produced.
struct RunResult {
  std::string name;
  std::string problem;
  std::string metric;
  std::optional<double> alpha;
  std::int64_t seed = 0;
  TriMesh initial, final_mesh;
  VectorXd displacement;
  std::vector<IterationRecord> history;
  RunStatus status = RunStatus::MaxIterations;
  std::string message;
  int evaluations = 0;
  std::optional<ConstraintReport> constraints;
};

using ProgressCallback = std::function<void(const IterationRecord&, const TriMesh&)>;

/// Augmented-Lagrangian loop for the Stokes obstacle: L-BFGS on the merged
/// objective at fixed multipliers, then a multiplier update. The energy is
/// scaled by its initial value and the residuals by the initial volume and
/// the channel width.
template <DeformationSpace Space>
RunResult run_stokes_augmented(const TriMesh& reference, const Space& space, const Vec2& u_inf,
                               const OptimizerOptions& opt, const ConstraintConfig& cc,
                               const ProgressCallback& progress = {}) {
  const ChannelBox box;
  const ObstacleGeometry g0 = obstacle_geometry(reference, box);
  const double J0 = dissipated_energy(reference, solve_stokes(reference, u_inf));
  if (!(J0 > 0.0)) throw SolverError("initial dissipated energy is not positive");
  const double width = box.width();
  ConstraintState state;
  state.target_volume = g0.volume;
  state.target_barycentre = g0.barycentre;
  state.rho = cc.rho;

  auto scaled_residual = [&](const ObstacleGeometry& g) {
    Eigen::Vector3d c = state.residual(g);
    c[0] /= g0.volume;
    c.tail<2>() /= width;
    return c;
  };

  RunResult res;
  res.initial = reference;
  VectorXd x;
  double previous = std::numeric_limits<double>::infinity();
  ConstraintReport rep;
  rep.volume_target = g0.volume;
  rep.barycentre_target = g0.barycentre;
  rep.gamma_x_extent_initial = tagged_x_extent(reference, BoundaryTag::Gamma);

  for (int outer = 0; outer < cc.max_outer; ++outer) {
    const ConstraintState fixed = state;
    Objective merged = [&, fixed](const TriMesh& m) {
      const StokesSolution sol = solve_stokes(m, u_inf);
      const double J = dissipated_energy(m, sol);
      const VectorXd dJ = stokes_shape_dual(m, sol).values;
      const ObstacleGeometry g = obstacle_geometry(m, box);
      const Eigen::Vector3d c = scaled_residual(g);
      const std::array<VectorXd, 3> dc{g.volume_dual / g0.volume, g.barycentre_dual[0] / width,
                                       g.barycentre_dual[1] / width};
      const MergedObjective mo = augmented_lagrangian(J / J0, dJ / J0, c, dc, fixed);
      return Evaluation{mo.value, mo.dual, J};
    };
    const int offset = static_cast<int>(res.history.size()) - (res.history.empty() ? 0 : 1);
    IterationCallback cb = [&](const IterationRecord& r, const TriMesh& m) {
      if (r.iter == 0 && !res.history.empty()) return;
      IterationRecord shifted = r;
      shifted.iter += offset;
      res.history.push_back(shifted);
      if (progress) progress(shifted, m);
    };
    const OptimRun run = lbfgs_run(reference, space, merged, opt, x, cb);
    x = run.coefficients;
    res.displacement = run.displacement;
    res.status = run.status;
    res.message = run.message;
    res.evaluations += run.evaluations;
    const TriMesh current = run.deformed();
    const Eigen::Vector3d c = scaled_residual(obstacle_geometry(current, box));
    rep.outer_iterations = outer + 1;
    rep.satisfied = std::abs(c[0]) < cc.tolerance && c.tail<2>().cwiseAbs().maxCoeff() < cc.tolerance;
    if (rep.satisfied || run.status == RunStatus::MeshDegenerated) break;
    state = update_multipliers(state, c);
    if (c.norm() > cc.shrink * previous) state.rho *= 2.0;
    previous = c.norm();
  }

  res.final_mesh = apply_displacement(reference, res.displacement);
  const ObstacleGeometry gf = obstacle_geometry(res.final_mesh, box);
  const Eigen::Vector3d cf = scaled_residual(gf);
  rep.volume_final = gf.volume;
  rep.barycentre_final = gf.barycentre;
  rep.volume_relative_residual = std::abs(cf[0]);
  rep.barycentre_residual = cf.tail<2>().cwiseAbs().maxCoeff();
  rep.lambda = state.lambda;
  rep.rho = state.rho;
  rep.gamma_x_extent_final = tagged_x_extent(res.final_mesh, BoundaryTag::Gamma);
  res.constraints = rep;
  return res;
}

namespace detail {

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

inline nlohmann::json eta_json(const ElementQuality& q) {
  return {{"min", q.min()}, {"max", q.max()}, {"frac_gt2", q.fraction_above(2.0)}};
}

inline std::string alpha_label(std::optional<double> alpha) {
  if (!alpha) return "none";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.0e", *alpha);
  return buf;
}

}  // namespace detail

inline std::string convergence_csv(const std::vector<IterationRecord>& history) {
  std::string s = "iter,J,grad_norm,cr_residual,eta_min,eta_max,eta_frac_gt2,step\n";
  using detail::format_number;
  for (const auto& r : history) {
    s += std::to_string(r.iter) + ',' + format_number(r.J) + ',' + format_number(r.grad_norm) + ',' +
         format_number(r.cr_residual) + ',' + format_number(r.eta_min) + ',' + format_number(r.eta_max) + ',' +
         format_number(r.eta_frac_gt2) + ',' + format_number(r.step) + '\n';
  }
  return s;
}

inline std::vector<IterationRecord> parse_convergence_csv(std::istream& in) {
  std::string line;
  std::getline(in, line);
  if (line != "iter,J,grad_norm,cr_residual,eta_min,eta_max,eta_frac_gt2,step")
    throw Error("unexpected convergence log header");
  std::vector<IterationRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw Error("malformed convergence log row");
    IterationRecord r;
    r.iter = std::stoi(cells[0]);
    r.J = std::stod(cells[1]);
    r.grad_norm = std::stod(cells[2]);
    r.cr_residual = std::stod(cells[3]);
    r.eta_min = std::stod(cells[4]);
    r.eta_max = std::stod(cells[5]);
    r.eta_frac_gt2 = std::stod(cells[6]);
    r.step = std::stod(cells[7]);
    out.push_back(r);
  }
  return out;
}

inline nlohmann::json summary_json(const RunResult& r) {
  nlohmann::json j;
  j["name"] = r.name;
  j["problem"] = r.problem;
  j["metric"] = r.metric;
  j["alpha"] = r.alpha ? nlohmann::json(*r.alpha) : nlohmann::json(nullptr);
  j["seed"] = r.seed;
  j["status"] = std::string(to_string(r.status));
  j["message"] = r.message;
  j["iterations"] = r.history.empty() ? 0 : static_cast<int>(r.history.size()) - 1;
  j["evaluations"] = r.evaluations;
  j["num_nodes"] = r.initial.num_nodes();
  j["num_triangles"] = r.initial.num_triangles();
  if (!r.history.empty()) {
    j["J_initial"] = r.history.front().J;
    j["J_final"] = r.history.back().J;
    j["grad_norm_initial"] = r.history.front().grad_norm;
    j["grad_norm_final"] = r.history.back().grad_norm;
    j["cr_residual_final"] = r.history.back().cr_residual;
  }
  j["eta_initial"] = detail::eta_json(element_quality(r.initial));
  j["eta_final"] = detail::eta_json(element_quality(r.final_mesh));
  if (r.constraints) {
    const auto& c = *r.constraints;
    j["constraints"] = {{"volume_target", c.volume_target},
                        {"volume_final", c.volume_final},
                        {"volume_relative_residual", c.volume_relative_residual},
                        {"barycentre_target", {c.barycentre_target.x(), c.barycentre_target.y()}},
                        {"barycentre_final", {c.barycentre_final.x(), c.barycentre_final.y()}},
                        {"barycentre_residual", c.barycentre_residual},
                        {"lambda", {c.lambda[0], c.lambda[1], c.lambda[2]}},
                        {"rho", c.rho},
                        {"outer_iterations", c.outer_iterations},
                        {"satisfied", c.satisfied},
                        {"gamma_x_extent_initial", c.gamma_x_extent_initial},
                        {"gamma_x_extent_final", c.gamma_x_extent_final}};
  }
  return j;
}

/// Writes meshes, histograms, the convergence log and the summary.
inline void write_run_artifacts(const std::filesystem::path& dir, const RunResult& r) {
  std::filesystem::create_directories(dir);
  const ElementQuality q0 = element_quality(r.initial), q1 = element_quality(r.final_mesh);
  save_mesh(dir / "mesh_initial.json", r.initial);
  save_mesh(dir / "mesh_final.json", r.final_mesh);
  export_vtk(dir / "mesh_initial.vtk", r.initial, &q0.eta);
  const VectorField disp = VectorField::from_blocked(r.displacement);
  export_vtk(dir / "mesh_final.vtk", r.final_mesh, &q1.eta, &disp);
  for (const auto& [file, q] : {std::pair{"histogram_initial.csv", &q0}, std::pair{"histogram_final.csv", &q1}}) {
    std::ostringstream os;
    write_histogram_csv(os, quality_histogram(*q, default_histogram_edges()));
    detail::write_text(dir / file, os.str());
  }
  detail::write_text(dir / "convergence.csv", convergence_csv(r.history));
  detail::write_text(dir / "summary.json", summary_json(r).dump(2) + "\n");
}

inline std::filesystem::path output_dir_for(const RunConfig& cfg, const RunOptions& opts) {
  return opts.output_dir ? *opts.output_dir : cfg.output.directory;
}

/// Runs one configuration (ignoring any sweep) and returns the result.
inline RunResult execute(const RunConfig& cfg, const RunOptions& opts = {}) {
  const TriMesh reference = build_mesh(cfg.mesh);
  check_topology(reference);
  if (!validate(reference)) throw MeshError("initial mesh is invalid: " + validate(reference).describe());
  const int snapshot_every = opts.snapshot_every.value_or(cfg.output.snapshot_every);
  const auto dir = output_dir_for(cfg, opts);
  if (opts.write_artifacts && snapshot_every > 0) std::filesystem::create_directories(dir / "snapshots");

  ProgressCallback progress = [&](const IterationRecord& r, const TriMesh& m) {
    if (!opts.quiet && opts.log)
      *opts.log << cfg.name << " iter " << r.iter << " J " << detail::format_number(r.J) << " |g| "
                << detail::format_number(r.grad_norm) << " eta_max " << detail::format_number(r.eta_max) << '\n';
    if (opts.write_artifacts && snapshot_every > 0 && r.iter % snapshot_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "snapshot_%05d.vtk", r.iter);
      const ElementQuality q = element_quality(m);
      export_vtk(dir / "snapshots" / name, m, &q.eta);
    }
  };

  RunResult res;
  auto solve = [&](const auto& space) {
    if (cfg.problem.kind == ProblemKind::Stokes) {
      res = run_stokes_augmented(reference, space, cfg.problem.u_inf, cfg.optimizer, cfg.constraints, progress);
      return;
    }
    const OptimRun run = lbfgs_run(reference, space, levelset_objective(levelset_for(cfg.problem)), cfg.optimizer,
                                   VectorXd(), IterationCallback(progress));
    res.initial = reference;
    res.final_mesh = run.deformed();
    res.displacement = run.displacement;
    res.history = run.history;
    res.status = run.status;
    res.message = run.message;
    res.evaluations = run.evaluations;
  };
  if (cfg.metric.family == MetricFamily::Kernel) {
    solve(KernelSpace(reference, cfg.metric.kernel));
  } else {
    if (is_clamped(cfg.metric.fem.kind)) {
      const auto tags = reference.node_tags();
      for (auto want : cfg.metric.fem.clamped_tags)
        if (std::find(tags.begin(), tags.end(), want) == tags.end())
          throw ConfigError("metric.clamped_tags: mesh has no " + std::string(to_string(want)) + " boundary");
    }
    solve(FemSpace(reference, cfg.metric.fem));
  }
  res.name = cfg.name;
  res.problem = std::string(to_string(cfg.problem.kind));
  res.metric = cfg.metric.label();
  if (cfg.metric.has_cr()) res.alpha = cfg.metric.alpha();
  res.seed = cfg.seed;
  if (opts.write_artifacts) write_run_artifacts(dir, res);
  return res;
}

// ---------------------------------------------------------------------------
// Comparison across metrics

struct CompareRow {
  std::string name;
  std::string metric;
  double final_max_eta = 0;
  double frac_eta_gt2 = 0;
  int iterations = 0;
  double final_J = 0;
  std::string status;

  bool operator==(const CompareRow&) const = default;
};

inline CompareRow compare_row(const nlohmann::json& summary) {
  CompareRow row;
  row.name = summary.at("name").get<std::string>();
  row.metric = summary.at("metric").get<std::string>();
  row.final_max_eta = summary.at("eta_final").at("max").get<double>();
  row.frac_eta_gt2 = summary.at("eta_final").at("frac_gt2").get<double>();
  row.iterations = summary.at("iterations").get<int>();
  row.final_J = summary.value("J_final", 0.0);
  row.status = summary.at("status").get<std::string>();
  return row;
}

inline std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::string s = "name,metric,final_max_eta,frac_eta_gt2,iterations,final_J,status\n";
  for (const auto& r : rows)
    s += r.name + ',' + r.metric + ',' + detail::format_number(r.final_max_eta) + ',' +
         detail::format_number(r.frac_eta_gt2) + ',' + std::to_string(r.iterations) + ',' +
         detail::format_number(r.final_J) + ',' + r.status + '\n';
  return s;
}

inline bool same_problem(const RunConfig& a, const RunConfig& b) {
  const auto& p = a.problem;
  const auto& q = b.problem;
  const auto& m = a.mesh;
  const auto& n = b.mesh;
  return p.kind == q.kind && p.r_prime == q.r_prime && p.u_inf == q.u_inf && p.clover_a == q.clover_a &&
         p.clover_b == q.clover_b && p.clover_eps == q.clover_eps && m.generator == n.generator &&
         std::filesystem::weakly_canonical(m.file) == std::filesystem::weakly_canonical(n.file) &&
         m.radius == n.radius && m.rings == n.rings && m.r_inner == n.r_inner && m.r_outer == n.r_outer &&
         m.hole_radius == n.hole_radius && m.half_width == n.half_width && m.half_height == n.half_height &&
         m.per_ring == n.per_ring && m.lo == n.lo && m.hi == n.hi && m.nx == n.nx && m.ny == n.ny;
}

/// Runs every configuration live; each writes its artifacts under
/// output_dir/<name> and the table goes to output_dir/comparison.csv.
inline std::vector<CompareRow> compare(const std::vector<RunConfig>& configs, const RunOptions& opts = {}) {
  if (configs.empty()) throw ConfigError("compare needs at least one config");
  for (const auto& c : configs)
    if (!same_problem(configs.front(), c))
      throw ConfigError("compare: config '" + c.name + "' does not share the problem and mesh of '" +
                        configs.front().name + "'");
  const auto root = opts.output_dir.value_or("out/compare");
  std::vector<CompareRow> rows;
  for (const auto& c : configs) {
    RunOptions o = opts;
    o.output_dir = root / c.name;
    rows.push_back(compare_row(summary_json(execute(c, o))));
  }
  if (opts.write_artifacts) {
    std::filesystem::create_directories(root);
    detail::write_text(root / "comparison.csv", compare_csv(rows));
  }
  return rows;
}

inline nlohmann::json read_summary(const std::filesystem::path& dir) {
  std::ifstream in(dir / "summary.json");
  if (!in) throw Error("no summary.json in '" + dir.string() + "'");
  return nlohmann::json::parse(in);
}

/// Rebuilds the comparison table from stored run directories.
inline std::vector<CompareRow> compare_from_artifacts(const std::vector<std::filesystem::path>& dirs) {
  std::vector<CompareRow> rows;
  std::optional<std::string> problem;
  for (const auto& d : dirs) {
    const auto s = read_summary(d);
    const auto p = s.at("problem").get<std::string>();
    if (problem && *problem != p) throw ConfigError("compare: '" + d.string() + "' solves a different problem");
    problem = p;
    rows.push_back(compare_row(s));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Alpha sweep

struct SweepRow {
  std::optional<double> alpha;  // empty for the baseline without CR block
  std::string name;
  double final_max_eta = 0, frac_eta_gt2 = 0;
  int iterations = 0;
  double final_grad_norm = 0, final_J = 0;
  std::string status;
  std::vector<double> grad_norms;
};

inline RunConfig baseline_of(const RunConfig& cfg) {
  RunConfig b = cfg;
  b.sweep.reset();
  b.name = cfg.name + "_baseline";
  if (cfg.metric.family == MetricFamily::Kernel) {
    b.metric.kernel.cr = false;
    return b;
  }
  switch (cfg.metric.fem.kind) {
    case MetricKind::CrPlusH1: b.metric.fem.kind = MetricKind::H1Ring; break;
    case MetricKind::CrPlusHsym: b.metric.fem.kind = MetricKind::HsymRing; break;
    default: throw ConfigError("sweep.baseline is undefined for metric.kind " + cfg.metric.label());
  }
  return b;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string s = "alpha,final_max_eta,frac_eta_gt2,iterations,final_grad_norm,final_J,status\n";
  for (const auto& r : rows)
    s += (r.alpha ? detail::format_number(*r.alpha) : std::string("none")) + ',' +
         detail::format_number(r.final_max_eta) + ',' + detail::format_number(r.frac_eta_gt2) + ',' +
         std::to_string(r.iterations) + ',' + detail::format_number(r.final_grad_norm) + ',' +
         detail::format_number(r.final_J) + ',' + r.status + '\n';
  return s;
}

/// Gradient-norm traces side by side, one column per run; short runs leave
/// their cells empty.
inline std::string gradient_traces_csv(const std::vector<SweepRow>& rows) {
  std::string s = "iter";
  std::size_t longest = 0;
  for (const auto& r : rows) {
    s += ',' + r.name;
    longest = std::max(longest, r.grad_norms.size());
  }
  s += '\n';
  for (std::size_t k = 0; k < longest; ++k) {
    s += std::to_string(k);
    for (const auto& r : rows) s += ',' + (k < r.grad_norms.size() ? detail::format_number(r.grad_norms[k]) : "");
    s += '\n';
  }
  return s;
}

/// One run per alpha (and the baseline when requested) with a shared
/// budget; each run writes under output_dir/<run name>.
inline std::vector<SweepRow> alpha_sweep(const RunConfig& cfg, const RunOptions& opts = {}) {
  if (!cfg.sweep) throw ConfigError("config has no sweep table");
  const auto root = output_dir_for(cfg, opts);
  std::vector<RunConfig> runs;
  for (double a : cfg.sweep->alphas) {
    RunConfig c = cfg;
    c.sweep.reset();
    if (c.metric.family == MetricFamily::Kernel) c.metric.kernel.alpha = a;
    else c.metric.fem.alpha = a;
    c.name = cfg.name + "_alpha_" + detail::alpha_label(a);
    runs.push_back(c);
  }
  if (cfg.sweep->baseline) runs.push_back(baseline_of(cfg));
  std::vector<SweepRow> rows;
  for (const auto& c : runs) {
    RunOptions o = opts;
    o.output_dir = root / c.name;
    const RunResult r = execute(c, o);
    SweepRow row;
    row.alpha = r.alpha;
    row.name = c.name;
    const auto s = summary_json(r);
    row.final_max_eta = s["eta_final"]["max"];
    row.frac_eta_gt2 = s["eta_final"]["frac_gt2"];
    row.iterations = s["iterations"];
    row.final_grad_norm = r.history.back().grad_norm;
    row.final_J = r.history.back().J;
    row.status = s["status"];
    for (const auto& h : r.history) row.grad_norms.push_back(h.grad_norm);
    rows.push_back(std::move(row));
  }
  if (opts.write_artifacts) {
    std::filesystem::create_directories(root);
    detail::write_text(root / "sweep.csv", sweep_csv(rows));
    detail::write_text(root / "gradient_traces.csv", gradient_traces_csv(rows));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Exit codes

enum ExitCode : int { ExitOk = 0, ExitUsage = 1, ExitConfig = 2, ExitMesh = 3, ExitSolver = 4, ExitLineSearch = 5 };

/// A run that stops on a bad mesh or an exhausted line search still writes
/// its artifacts but reports the failure class.
inline int exit_code_for(RunStatus s) {
  switch (s) {
    case RunStatus::Converged:
    case RunStatus::MaxIterations: return ExitOk;
    case RunStatus::LineSearchFailed: return ExitLineSearch;
    case RunStatus::MeshDegenerated: return ExitMesh;
  }
  return ExitSolver;
}

/// Maps the current exception to an exit code and prints it.
inline int exit_code_for_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return ExitConfig;
  } catch (const MeshError& e) {
    err << "mesh error: " << e.what() << '\n';
    return ExitMesh;
  } catch (const LineSearchError& e) {
    err << "line search error: " << e.what() << '\n';
    return ExitLineSearch;
  } catch (const SolverError& e) {
    err << "solver error: " << e.what() << '\n';
    return ExitSolver;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return ExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return ExitSolver;
  }
}

}  // namespace conformal::cli
