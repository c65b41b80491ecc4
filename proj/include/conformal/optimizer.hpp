#pragma once

#include "conformal/deformation_space.hpp"

#include <deque>
#include <functional>
#include <optional>

namespace conformal {

/// Objective value and its dual over blocked nodal coefficients of the
/// deformed mesh (same numbering as the reference). `reported` is what the
/// history logs; it defaults to the value.
struct Evaluation {
  double value = 0;
  VectorXd dual;
  std::optional<double> reported;
};

/// Evaluates the objective on a deformed mesh that has already passed
/// validation. May throw MeshError to reject the mesh.
using Objective = std::function<Evaluation(const TriMesh& deformed)>;

enum class RunStatus { Converged, MaxIterations, LineSearchFailed, MeshDegenerated };

inline std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Converged: return "converged";
    case RunStatus::MaxIterations: return "max iterations";
    case RunStatus::LineSearchFailed: return "line search failed";
    case RunStatus::MeshDegenerated: return "mesh degenerated";
  }
  return "?";
}

struct IterationRecord {
  int iter = 0;
  double J = 0;
  double grad_norm = 0;
  double cr_residual = 0;  // of the accumulated displacement, on the reference mesh
  double eta_min = 0, eta_max = 0, eta_frac_gt2 = 0;
  double step = 0;         // metric norm of the accepted increment (0 on the first row)
  double step_cr = 0;      // cr residual of the accepted nodal increment
};

struct OptimizerOptions {
  int max_iters = 100;
  double g_tol = 1e-6;
  double g_rtol = 0.0;          // also stop when |g| <= g_rtol |g_0|
  int memory = 5;
  int max_backtracks = 50;
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;
  double first_step_max_disp = 0.0;  // caps the largest nodal move of the first trial step when positive
  double curvature_eps = 1e-12;
};

/// State of one optimisation: accumulated coefficients on the reference
/// mesh plus history. `increments` are the accepted steps in order.
struct OptimRun {
  TriMesh reference;
  VectorXd coefficients;
  VectorXd displacement;  // nodal, blocked
  std::vector<IterationRecord> history;
  std::vector<VectorXd> increments;
  RunStatus status = RunStatus::MaxIterations;
  std::string message;
  int evaluations = 0;

  TriMesh deformed() const { return apply_displacement(reference, displacement); }
  int iterations() const { return static_cast<int>(history.size()) - 1; }
};

namespace detail {

struct Pair {
  VectorXd s, y;
  double rho;
};

// Two-loop recursion with every inner product taken in the space metric.
template <DeformationSpace Space>
VectorXd lbfgs_direction(const Space& space, const std::deque<Pair>& mem, const VectorXd& grad) {
  VectorXd q = grad;
  std::vector<double> a(mem.size());
  for (std::size_t k = mem.size(); k-- > 0;) {
    a[k] = mem[k].rho * space.inner(mem[k].s, q);
    q -= a[k] * mem[k].y;
  }
  if (!mem.empty()) {
    const auto& last = mem.back();
    const double yy = space.inner(last.y, last.y);
    if (yy > 0.0) q *= 1.0 / (last.rho * yy);
  }
  for (std::size_t k = 0; k < mem.size(); ++k) {
    const double b = mem[k].rho * space.inner(mem[k].y, q);
    q += (a[k] - b) * mem[k].s;
  }
  return -q;
}

inline IterationRecord measure(const OptimRun& run, const TriMesh& deformed, double J, double grad_norm) {
  IterationRecord r;
  r.iter = static_cast<int>(run.history.size());
  r.J = J;
  r.grad_norm = grad_norm;
  r.cr_residual = cr_residual(run.reference, run.displacement);
  const auto q = element_quality(deformed);
  r.eta_min = q.min();
  r.eta_max = q.max();
  r.eta_frac_gt2 = q.fraction_above(2.0);
  return r;
}

}  // namespace detail

using IterationCallback = std::function<void(const IterationRecord&, const TriMesh& deformed)>;

/// L-BFGS over the deformation space, starting from `start` coefficients
/// (zero when empty). The memory always starts empty.
template <DeformationSpace Space>
OptimRun lbfgs_run(const TriMesh& reference, const Space& space, const Objective& objective,
                   const OptimizerOptions& opt, const VectorXd& start = VectorXd(),
                   const IterationCallback& on_iteration = {}) {
  if (opt.memory < 0 || opt.max_iters < 0 || opt.max_backtracks < 1)
    throw ConfigError("optimizer options out of range");
  OptimRun run;
  run.reference = reference;
  run.coefficients = start.size() ? start : VectorXd::Zero(space.dim());
  if (run.coefficients.size() != space.dim()) throw SolverError("start vector has the wrong length");
  run.displacement = space.to_nodal(run.coefficients);

  auto try_eval = [&](const VectorXd& nodal, TriMesh& deformed) -> std::optional<Evaluation> {
    deformed = apply_displacement(reference, nodal);
    if (!validate(deformed)) return std::nullopt;
    ++run.evaluations;
    try {
      return objective(deformed);
    } catch (const MeshError&) {
      return std::nullopt;
    }
  };

  TriMesh current;
  auto ev = try_eval(run.displacement, current);
  if (!ev) throw MeshError("starting mesh is invalid");
  VectorXd dual = space.pull_back(ev->dual);
  VectorXd grad = space.riesz(dual);
  double gnorm = std::sqrt(std::max(0.0, space.inner(grad, grad)));
  const double g0 = gnorm;
  run.history.push_back(detail::measure(run, current, ev->reported.value_or(ev->value), gnorm));
  if (on_iteration) on_iteration(run.history.back(), current);

  std::deque<detail::Pair> mem;
  auto converged = [&](double g) { return g <= opt.g_tol || (opt.g_rtol > 0.0 && g <= opt.g_rtol * g0); };

  for (int it = 0;; ++it) {
    if (converged(gnorm)) {
      run.status = RunStatus::Converged;
      break;
    }
    if (it >= opt.max_iters) {
      run.status = RunStatus::MaxIterations;
      break;
    }
    VectorXd dir = detail::lbfgs_direction(space, mem, grad);
    double slope = dual.dot(dir);
    if (!(slope < 0.0)) {
      mem.clear();
      dir = -grad;
      slope = dual.dot(dir);
      if (!(slope < 0.0)) {
        run.status = RunStatus::LineSearchFailed;
        run.message = "no descent direction";
        break;
      }
    }
    double t = 1.0;
    if (mem.empty() && opt.first_step_max_disp > 0.0) {
      const VectorXd nd = space.to_nodal(dir);
      const Index n = nd.size() / 2;
      double biggest = 0.0;
      for (Index i = 0; i < n; ++i) biggest = std::max(biggest, std::hypot(nd[i], nd[n + i]));
      if (biggest > opt.first_step_max_disp) t = opt.first_step_max_disp / biggest;
    }

    // Backtracking Armijo search; invalid meshes count as failed trials.
    std::optional<Evaluation> trial;
    TriMesh trial_mesh;
    VectorXd x_new, nodal_new;
    bool last_invalid = false;
    int tries = 0;
    for (; tries <= opt.max_backtracks; ++tries, t *= opt.backtrack) {
      x_new = run.coefficients + t * dir;
      nodal_new = space.to_nodal(x_new);
      trial = try_eval(nodal_new, trial_mesh);
      last_invalid = !trial;
      if (trial && trial->value <= ev->value + opt.armijo_c1 * t * slope) break;
      trial.reset();
    }
    if (!trial) {
      run.status = last_invalid ? RunStatus::MeshDegenerated : RunStatus::LineSearchFailed;
      run.message = "no acceptable step after " + std::to_string(opt.max_backtracks) + " backtracks";
      break;
    }

    const VectorXd s = x_new - run.coefficients;
    const VectorXd nodal_step = nodal_new - run.displacement;
    run.coefficients = x_new;
    run.displacement = nodal_new;
    run.increments.push_back(s);
    current = std::move(trial_mesh);
    const VectorXd new_dual = space.pull_back(trial->dual);
    const VectorXd new_grad = space.riesz(new_dual);
    const VectorXd y = new_grad - grad;
    const double sy = space.inner(s, y);
    const double sn = std::sqrt(std::max(0.0, space.inner(s, s)));
    const double yn = std::sqrt(std::max(0.0, space.inner(y, y)));
    if (opt.memory > 0 && sy > opt.curvature_eps * sn * yn) {
      mem.push_back({s, y, 1.0 / sy});
      if (static_cast<int>(mem.size()) > opt.memory) mem.pop_front();
    }
    ev = std::move(trial);
    dual = new_dual;
    grad = new_grad;
    gnorm = std::sqrt(std::max(0.0, space.inner(grad, grad)));
    IterationRecord rec = detail::measure(run, current, ev->reported.value_or(ev->value), gnorm);
    rec.step = sn;
    rec.step_cr = cr_residual(reference, nodal_step);
    run.history.push_back(rec);
    if (on_iteration) on_iteration(run.history.back(), current);
  }
  return run;
}

/// Armijo backtracking along one direction from x, as used inside lbfgs_run.
/// Returns the accepted step length; throws LineSearchError on exhaustion.
template <DeformationSpace Space>
double line_search(const TriMesh& reference, const Space& space, const Objective& objective, const VectorXd& x,
                   const VectorXd& direction, double initial_step = 1.0, const OptimizerOptions& opt = {}) {
  auto value_at = [&](const VectorXd& c) -> std::optional<Evaluation> {
    const TriMesh m = apply_displacement(reference, space.to_nodal(c));
    if (!validate(m)) return std::nullopt;
    try {
      return objective(m);
    } catch (const MeshError&) {
      return std::nullopt;
    }
  };
  const auto base = value_at(x);
  if (!base) throw MeshError("line search starts from an invalid mesh");
  const double slope = space.pull_back(base->dual).dot(direction);
  if (!(slope < 0.0)) throw LineSearchError("direction is not a descent direction");
  double t = initial_step;
  for (int k = 0; k <= opt.max_backtracks; ++k, t *= opt.backtrack) {
    const auto trial = value_at(x + t * direction);
    if (trial && trial->value <= base->value + opt.armijo_c1 * t * slope) return t;
  }
  throw LineSearchError("no acceptable step after " + std::to_string(opt.max_backtracks) + " backtracks");
}

/// Trailing moving average over `window` entries; entry k averages
/// values[k-window+1 .. k] and is only defined for k >= window - 1.
inline std::vector<double> moving_average(const std::vector<double>& values, int window) {
  std::vector<double> out;
  if (window < 1) return out;
  for (std::size_t k = static_cast<std::size_t>(window) - 1; k < values.size(); ++k) {
    double s = 0;
    for (int j = 0; j < window; ++j) s += values[k - j];
    out.push_back(s / window);
  }
  return out;
}

}  // namespace conformal
