#include "conformal/cli/runner.hpp"
#include "conformal/optimizer.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <random>

using namespace conformal;

namespace {

VectorXd random_vector(Index n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> d;
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

VectorXd displacement_of(const TriMesh& reference, const TriMesh& deformed) {
  const Index n = reference.num_nodes();
  VectorXd f(2 * n);
  for (Index i = 0; i < n; ++i) {
    f[i] = deformed.nodes[i].x() - reference.nodes[i].x();
    f[n + i] = deformed.nodes[i].y() - reference.nodes[i].y();
  }
  return f;
}

// J(f) = 1/2 (f, f)_H - b . f on nodal displacements.
Objective quadratic_objective(const TriMesh& reference, const MetricOperator& metric, const VectorXd& b) {
  return [&reference, &metric, b](const TriMesh& m) {
    const VectorXd f = displacement_of(reference, m);
    const VectorXd Af = metric.matrix() * f;
    return Evaluation{0.5 * f.dot(Af) - b.dot(f), Af - b, std::nullopt};
  };
}

// Linear J(f) = -c . f.
Objective linear_objective(const TriMesh& reference, const VectorXd& c) {
  return [&reference, c](const TriMesh& m) { return Evaluation{-c.dot(displacement_of(reference, m)), -c, std::nullopt}; };
}

// Dense metric on R^d for checking the two-loop recursion.
struct DenseSpace {
  Eigen::MatrixXd M;
  Index dim() const { return M.rows(); }
  VectorXd to_nodal(const VectorXd& c) const { return c; }
  VectorXd pull_back(const VectorXd& d) const { return d; }
  VectorXd riesz(const VectorXd& d) const { return M.llt().solve(d); }
  double inner(const VectorXd& a, const VectorXd& b) const { return a.dot(M * b); }
};

// Textbook Euclidean two-loop recursion.
VectorXd euclidean_lbfgs(const std::vector<VectorXd>& S, const std::vector<VectorXd>& Y, const VectorXd& g) {
  VectorXd q = g;
  std::vector<double> a(S.size()), rho(S.size());
  for (std::size_t k = S.size(); k-- > 0;) {
    rho[k] = 1.0 / Y[k].dot(S[k]);
    a[k] = rho[k] * S[k].dot(q);
    q -= a[k] * Y[k];
  }
  q *= S.back().dot(Y.back()) / Y.back().dot(Y.back());
  for (std::size_t k = 0; k < S.size(); ++k) q += (a[k] - rho[k] * Y[k].dot(q)) * S[k];
  return -q;
}

OptimizerOptions clover_options(int iters) {
  OptimizerOptions o;
  o.max_iters = iters;
  o.g_tol = 0.0;
  o.g_rtol = 1e-5;
  o.first_step_max_disp = 0.5;
  return o;
}

}  // namespace

TEST(Evaluate, IdentityMapMatchesShapeDual) {
  const TriMesh m = gen_disc(3.0, 8);
  const auto objective = cli::levelset_objective(clover());
  const Evaluation ev = objective(m);
  EXPECT_EQ(ev.value, levelset_value(m, clover()));
  EXPECT_EQ(ev.dual, levelset_shape_dual(m, clover()).values);
}

TEST(Evaluate, DeformedDualMatchesFiniteDifferences) {
  const TriMesh ref = gen_disc(3.0, 8);
  const FemSpace space(ref, {MetricKind::CrPlusHsym, 1e-2});
  const auto objective = cli::levelset_objective(clover());
  const VectorXd f = 0.05 * random_vector(space.dim(), 3);
  const TriMesh deformed = apply_displacement(ref, f);
  ASSERT_TRUE(validate(deformed));
  const VectorXd dual = objective(deformed).dual;
  const VectorXd v = random_vector(space.dim(), 4);
  const double t = 1e-6;
  const double fd = (objective(apply_displacement(ref, VectorXd(f + t * v))).value -
                     objective(apply_displacement(ref, VectorXd(f - t * v))).value) / (2 * t);
  EXPECT_NEAR(fd, dual.dot(v), 1e-4 * std::abs(dual.dot(v)));
}

TEST(LbfgsRun, QuadraticModelReachesRieszGradient) {
  const TriMesh ref = gen_disc(1.0, 6);
  const FemSpace space(ref, {MetricKind::CrPlusHsym, 1e-2});
  const VectorXd b = 1e-2 * levelset_shape_dual(ref, clover()).values;
  OptimizerOptions o;
  o.g_tol = 1e-12;
  o.max_iters = 3;
  const OptimRun run = lbfgs_run(ref, space, quadratic_objective(ref, space.metric(), b), o);
  const VectorXd target = space.riesz(b);
  EXPECT_LE(run.iterations(), 3);
  EXPECT_LT((run.displacement - target).norm(), 1e-8 * target.norm());
  EXPECT_EQ(run.status, RunStatus::Converged);
}

TEST(LbfgsRun, InfiniteToleranceReturnsImmediately) {
  const TriMesh ref = gen_disc(3.0, 6);
  const FemSpace space(ref, {MetricKind::HsymRing});
  OptimizerOptions o;
  o.g_tol = std::numeric_limits<double>::infinity();
  const OptimRun run = lbfgs_run(ref, space, cli::levelset_objective(clover()), o);
  EXPECT_EQ(run.history.size(), 1u);
  EXPECT_EQ(run.status, RunStatus::Converged);
  EXPECT_EQ(run.evaluations, 1);
}

TEST(LbfgsRun, CloverWithConformalMetric) {
  const TriMesh ref = gen_disc(3.0, 18);
  const FemSpace space(ref, {MetricKind::CrPlusHsym, 1e-2});
  const OptimRun run = lbfgs_run(ref, space, cli::levelset_objective(clover()), clover_options(300));
  ASSERT_EQ(run.status, RunStatus::Converged) << run.message;
  EXPECT_EQ(static_cast<int>(run.history.size()), run.iterations() + 1);
  for (std::size_t k = 1; k < run.history.size(); ++k) EXPECT_LT(run.history[k].J, run.history[k - 1].J) << k;

  const TriMesh final_mesh = run.deformed();
  ASSERT_TRUE(validate(final_mesh));
  const double h = mean_edge_length(final_mesh);
  const auto on_boundary = final_mesh.boundary_nodes();
  double worst = 0.0;
  for (Index i = 0; i < final_mesh.num_nodes(); ++i) {
    if (!on_boundary[i]) continue;
    const Vec2 p = final_mesh.nodes[i];
    const double g = clover_grad(p.x(), p.y()).norm();
    worst = std::max(worst, std::abs(clover_f(p.x(), p.y())) / g);
  }
  EXPECT_LT(worst, h);

  // Increments live on the reference mesh, so the total residual is bounded by the sum.
  double sum = 0.0;
  for (const auto& r : run.history) sum += r.step_cr;
  EXPECT_LE(run.history.back().cr_residual, sum * (1 + 1e-12));
}

TEST(LbfgsRun, EveryIterateIsRieszConsistentDescent) {
  const TriMesh ref = gen_disc(3.0, 10);
  const FemSpace space(ref, {MetricKind::CrPlusH1, 1e-2});
  const auto objective = cli::levelset_objective(clover());
  int checked = 0;
  IterationCallback check = [&](const IterationRecord& rec, const TriMesh& deformed) {
    const VectorXd dual = space.pull_back(objective(deformed).dual);
    const VectorXd g = space.riesz(dual);
    const double gg = space.inner(g, g);
    EXPECT_NEAR(dual.dot(-g), -gg, 1e-9 * gg);
    EXPECT_LT(dual.dot(-g), 0.0);
    EXPECT_NEAR(std::sqrt(gg), rec.grad_norm, 1e-9 * rec.grad_norm);
    ++checked;
  };
  const OptimRun run = lbfgs_run(ref, space, objective, clover_options(8), VectorXd(), check);
  EXPECT_EQ(checked, static_cast<int>(run.history.size()));
}

TEST(LbfgsRun, SplitRunsMatchReplayedSteps) {
  const TriMesh ref = gen_disc(3.0, 10);
  const FemSpace space(ref, {MetricKind::CrPlusHsym, 1e-2});
  const auto objective = cli::levelset_objective(clover());
  const OptimRun first = lbfgs_run(ref, space, objective, clover_options(4));
  const OptimRun second = lbfgs_run(ref, space, objective, clover_options(3), first.coefficients);
  VectorXd replay = VectorXd::Zero(space.dim());
  for (const auto& s : first.increments) replay += s;
  for (const auto& s : second.increments) replay += s;
  EXPECT_LT((replay - second.coefficients).norm(), 1e-12 * second.coefficients.norm());
  const TriMesh a = second.deformed(), b = apply_displacement(ref, replay);
  ASSERT_TRUE(validate(b));
  for (Index i = 0; i < ref.num_nodes(); ++i) EXPECT_LT((a.nodes[i] - b.nodes[i]).norm(), 1e-12);
  // The second run starts where the first ended.
  EXPECT_DOUBLE_EQ(second.history.front().J, first.history.back().J);
}

TEST(LbfgsRun, RejectsBadOptions) {
  const TriMesh ref = gen_disc(1.0, 3);
  const FemSpace space(ref, {MetricKind::HsymRing});
  OptimizerOptions o;
  o.memory = -1;
  EXPECT_THROW(lbfgs_run(ref, space, cli::levelset_objective(clover()), o), ConfigError);
}

TEST(LbfgsDirection, MetricTwoLoopEqualsEuclideanInTransformedCoordinates) {
  const Index d = 20;  // ten nodes, two components
  const Eigen::MatrixXd R = Eigen::MatrixXd::Random(d, d);
  DenseSpace space{R * R.transpose() + d * Eigen::MatrixXd::Identity(d, d)};
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(space.M);
  const Eigen::MatrixXd half = es.operatorSqrt(), half_inv = es.operatorInverseSqrt();

  // Curvature pairs from a convex quadratic with Hessian H, expressed as metric gradients.
  const Eigen::MatrixXd Q = Eigen::MatrixXd::Random(d, d);
  const Eigen::MatrixXd H = Q * Q.transpose() + Eigen::MatrixXd::Identity(d, d);
  std::deque<detail::Pair> mem;
  std::vector<VectorXd> S, Y;
  for (unsigned k = 0; k < 5; ++k) {
    const VectorXd s = random_vector(d, 60 + k);
    const VectorXd y = space.riesz(H * s);
    mem.push_back({s, y, 1.0 / space.inner(s, y)});
    S.push_back(half * s);
    Y.push_back(half * y);
  }
  const VectorXd dual = random_vector(d, 70);
  const VectorXd grad = space.riesz(dual);
  const VectorXd metric_dir = detail::lbfgs_direction(space, mem, grad);
  const VectorXd oracle = half_inv * euclidean_lbfgs(S, Y, half_inv * dual);
  EXPECT_LT((metric_dir - oracle).norm(), 1e-10 * oracle.norm());
  EXPECT_LT(dual.dot(metric_dir), 0.0);
}

TEST(LineSearch, FullStepOnQuadratic) {
  const TriMesh ref = gen_disc(1.0, 5);
  const FemSpace space(ref, {MetricKind::HsymRing});
  const VectorXd b = 1e-2 * levelset_shape_dual(ref, clover()).values;
  const auto objective = quadratic_objective(ref, space.metric(), b);
  const VectorXd x0 = VectorXd::Zero(space.dim());
  EXPECT_EQ(line_search(ref, space, objective, x0, space.riesz(b)), 1.0);
}

TEST(LineSearch, HalvesUntilMeshIsValid) {
  const TriMesh ref = gen_disc(1.0, 4);
  const FemSpace space(ref, {MetricKind::HsymRing});
  const VectorXd swirl = VectorField::sample(ref, [](const Vec2& p) -> Vec2 {
                           return Vec2(-p.y(), p.x()) * (1.0 - p.norm()) * 20.0;
                         }).blocked();
  const auto objective = linear_objective(ref, swirl);
  const VectorXd x0 = VectorXd::Zero(space.dim());
  ASSERT_FALSE(validate(apply_displacement(ref, swirl)));
  const double t = line_search(ref, space, objective, x0, swirl);
  EXPECT_LT(t, 1.0);
  const TriMesh accepted = apply_displacement(ref, VectorXd(t * swirl));
  EXPECT_TRUE(validate(accepted));
  EXPECT_FALSE(validate(apply_displacement(ref, VectorXd(2 * t * swirl))));
  EXPECT_LT(objective(accepted).value, objective(ref).value);
}

TEST(LineSearch, RejectsAscentDirection) {
  const TriMesh ref = gen_disc(1.0, 4);
  const FemSpace space(ref, {MetricKind::HsymRing});
  const VectorXd c = random_vector(space.dim(), 5);
  EXPECT_THROW(line_search(ref, space, linear_objective(ref, c), VectorXd::Zero(space.dim()), VectorXd(-c)),
               LineSearchError);
}

TEST(MovingAverage, TrailingWindow) {
  const std::vector<double> v{1, 2, 3, 4, 5};
  EXPECT_EQ(moving_average(v, 2), (std::vector<double>{1.5, 2.5, 3.5, 4.5}));
  EXPECT_EQ(moving_average(v, 5), (std::vector<double>{3.0}));
  EXPECT_TRUE(moving_average(v, 6).empty());
  EXPECT_TRUE(moving_average(v, 0).empty());
}

TEST(AlphaSweep, EmptyListGivesEmptyTable) {
  auto cfg = cli::parse_config_string(R"(
name = "empty"
[problem]
kind = "clover"
[mesh]
generator = "disc"
radius = 3.0
rings = 6
[metric]
kind = "CR_PLUS_HSYM"
alpha = 1e-2
[sweep]
alphas = []
baseline = false
)");
  cli::RunOptions o;
  o.write_artifacts = false;
  o.quiet = true;
  EXPECT_TRUE(cli::alpha_sweep(cfg, o).empty());
}

TEST(AlphaSweep, HugeAlphaTracksBaseMetric) {
  auto cfg = cli::parse_config_string(R"(
name = "limit"
[problem]
kind = "clover"
[mesh]
generator = "disc"
radius = 3.0
rings = 12
[metric]
kind = "CR_PLUS_HSYM"
alpha = 1e-2
[optimizer]
max_iters = 15
g_tol = 0.0
first_step_max_disp = 0.5
[sweep]
alphas = [1e6]
baseline = true
)");
  cli::RunOptions o;
  o.write_artifacts = false;
  o.quiet = true;
  const auto rows = cli::alpha_sweep(cfg, o);
  ASSERT_EQ(rows.size(), 2u);
  ASSERT_TRUE(rows[0].alpha);
  EXPECT_FALSE(rows[1].alpha);
  EXPECT_EQ(rows[0].iterations, rows[1].iterations);

  cli::RunConfig base = cli::baseline_of(cfg);
  cli::RunConfig huge = cfg;
  huge.sweep.reset();
  huge.metric.fem.alpha = 1e6;
  const auto a = cli::execute(huge, o), b = cli::execute(base, o);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k)
    EXPECT_NEAR(a.history[k].J, b.history[k].J, 0.01 * std::abs(b.history[k].J)) << k;
}
