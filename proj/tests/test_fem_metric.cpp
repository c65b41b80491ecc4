#include "conformal/fem_metric.hpp"
#include "conformal/functionals.hpp"
#include "conformal/mesh_gen.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <random>

using namespace conformal;

namespace {

TriMesh unit_square(int n = 6) { return gen_rectangle({0.0, 0.0}, {1.0, 1.0}, n, n); }

VectorXd field(const TriMesh& m, const std::function<Vec2(const Vec2&)>& f) {
  return VectorField::sample(m, f).blocked();
}

double quad(const SparseMatrix& A, const VectorXd& u) { return u.dot(A * u); }

VectorXd random_vector(Index n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> d;
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

// Elementwise gradient of a P1 field, independent of the assembled matrices.
Mat2 element_gradient(const TriMesh& m, Index t, const VectorXd& u) {
  const Index n = m.num_nodes();
  const Vec2 a = m.vertex(t, 0), b = m.vertex(t, 1), c = m.vertex(t, 2);
  Mat2 E;
  E.col(0) = b - a;
  E.col(1) = c - a;
  Mat2 out;
  for (int comp = 0; comp < 2; ++comp) {
    const auto& tri = m.triangles[t];
    const Vec2 dv(u[comp * n + tri[1]] - u[comp * n + tri[0]], u[comp * n + tri[2]] - u[comp * n + tri[0]]);
    out.row(comp) = E.transpose().inverse() * dv;
  }
  return out;
}

int count_small_eigenvalues(const SparseMatrix& A, double rel) {
  const Eigen::MatrixXd D(A);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D);
  const auto ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  int k = 0;
  for (Index i = 0; i < ev.size(); ++i)
    if (std::abs(ev[i]) < rel * top) ++k;
  return k;
}

}  // namespace

TEST(AssembleH1, ConstantsAreTheKernel) {
  const TriMesh m = gen_disc(1.0, 4);
  const SparseMatrix A = assemble_h1(m);
  EXPECT_TRUE(A.isApprox(SparseMatrix(A.transpose())));
  EXPECT_NEAR(quad(A, field(m, [](const Vec2&) { return Vec2(1.0, 0.0); })), 0.0, 1e-13);
  EXPECT_NEAR(quad(A, field(m, [](const Vec2&) { return Vec2(0.3, -2.0); })), 0.0, 1e-13);
}

TEST(AssembleH1, LinearFieldOnUnitSquare) {
  const TriMesh m = unit_square();
  EXPECT_NEAR(quad(assemble_h1(m), field(m, [](const Vec2& p) { return Vec2(p.x(), 0.0); })), 1.0, 1e-12);
}

TEST(AssembleH1, MatchesElementwiseOracle) {
  const TriMesh m = gen_disc(2.0, 5);
  const VectorXd u = random_vector(2 * m.num_nodes(), 1);
  double expected = 0;
  for (Index t = 0; t < m.num_triangles(); ++t)
    expected += element_gradient(m, t, u).squaredNorm() * std::abs(signed_area(m, t));
  EXPECT_NEAR(quad(assemble_h1(m), u), expected, 1e-10 * expected);
}

TEST(AssembleHsym, RigidMotionsAreTheKernel) {
  const TriMesh m = gen_disc(1.0, 4);
  const SparseMatrix A = assemble_hsym(m);
  EXPECT_NEAR(quad(A, field(m, [](const Vec2& p) { return Vec2(-p.y(), p.x()); })), 0.0, 1e-13);
  EXPECT_NEAR(quad(A, field(m, [](const Vec2&) { return Vec2(1.0, 1.0); })), 0.0, 1e-13);
}

TEST(AssembleHsym, IdentityFieldGivesTwiceTheArea) {
  const TriMesh m = unit_square();
  EXPECT_NEAR(quad(assemble_hsym(m), field(m, [](const Vec2& p) { return p; })), 2.0, 1e-12);
}

TEST(AssembleHsym, SymPlusAsymIsFullGradient) {
  const TriMesh m = gen_disc(1.0, 5);
  const SparseMatrix H1 = assemble_h1(m), S = assemble_hsym(m), K = assemble_asym(m);
  for (unsigned s = 0; s < 5; ++s) {
    const VectorXd u = random_vector(2 * m.num_nodes(), 10 + s);
    const double full = quad(H1, u);
    EXPECT_NEAR(quad(S, u) + quad(K, u), full, 1e-12 * full);
  }
  EXPECT_TRUE((S + K).isApprox(H1, 1e-12));
}

TEST(AssembleCr, HolomorphicFieldsVanish) {
  const TriMesh m = gen_disc(1.0, 4);
  const SparseMatrix A = assemble_cr(m);
  EXPECT_NEAR(quad(A, field(m, [](const Vec2& p) { return p; })), 0.0, 1e-13);
  EXPECT_NEAR(quad(A, field(m, [](const Vec2& p) { return Vec2(-p.y(), p.x()); })), 0.0, 1e-13);
  EXPECT_NEAR(cr_residual(m, field(m, [](const Vec2& p) { return p; })), 0.0, 1e-12);
}

TEST(AssembleCr, ReflectionFieldOnUnitSquare) {
  const TriMesh m = unit_square();
  const VectorXd u = field(m, [](const Vec2& p) { return Vec2(p.x(), -p.y()); });
  EXPECT_NEAR(quad(assemble_cr(m), u), 4.0, 1e-12);
  EXPECT_NEAR(cr_residual(m, u), 2.0, 1e-12);
}

TEST(AssembleCr, ResidualIsSqrtOfQuadraticForm) {
  const TriMesh m = gen_annulus(0.5, 1.0, 4);
  const VectorXd u = random_vector(2 * m.num_nodes(), 5);
  EXPECT_NEAR(cr_residual(m, u), std::sqrt(quad(assemble_cr(m), u)), 1e-12 * cr_residual(m, u));
}

TEST(AssembleCr, HugeEpsilonWeightMatchesUnweighted) {
  const TriMesh m = gen_disc(1.0, 4);
  const SparseMatrix W = assemble_cr(m, true, 1e12), U = assemble_cr(m);
  const Eigen::MatrixXd diff = Eigen::MatrixXd(W) - Eigen::MatrixXd(U);
  EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-9 * Eigen::MatrixXd(U).cwiseAbs().maxCoeff());
}

TEST(WeightMu, FormulaValues) {
  EXPECT_EQ(weight_mu_value(0.0, 0.05), 1.0);
  EXPECT_NEAR(weight_mu_value(0.05, 0.05), 1.0 / std::sqrt(2.0), 1e-15);
  double prev = 1.0;
  for (double d : {0.1, 1.0, 10.0, 1e3, 1e6}) {
    const double mu = weight_mu_value(d, 0.05);
    EXPECT_LT(mu, prev);
    EXPECT_GT(mu, 0.0);
    prev = mu;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(WeightMu, CentroidValuesInUnitInterval) {
  const TriMesh m = gen_disc(3.0, 6);
  const auto mu = weight_mu(m, 0.05);
  ASSERT_EQ(mu.size(), m.triangles.size());
  const auto d = boundary_distance(m, triangle_centroids(m));
  for (std::size_t t = 0; t < mu.size(); ++t) {
    EXPECT_GT(mu[t], 0.0);
    EXPECT_LE(mu[t], 1.0);
    EXPECT_NEAR(mu[t], std::sqrt(0.05 / (d[t] + 0.05)), 1e-15);
  }
}

TEST(BuildMetric, CrPlusHsymMatchesScaledSum) {
  const TriMesh m = gen_disc(1.0, 4);
  const MetricOperator op = build_metric(m, {MetricKind::CrPlusHsym, 1e-2});
  const SparseMatrix expected = 100.0 * assemble_cr(m) + assemble_hsym(m);
  EXPECT_TRUE(op.matrix().isApprox(expected, 1e-14));
  EXPECT_EQ(op.constraints().rows(), 3);
}

TEST(BuildMetric, RingKindsSolveAnyRightHandSide) {
  const TriMesh m = gen_disc(1.0, 4);
  for (auto kind : {MetricKind::H1Ring, MetricKind::HsymRing, MetricKind::CrPlusH1, MetricKind::CrPlusHsym}) {
    const MetricOperator op = build_metric(m, {kind, 0.1});
    const VectorXd g = op.riesz(random_vector(op.size(), 3));
    EXPECT_TRUE(g.allFinite()) << to_string(kind);
    EXPECT_LT((op.constraints() * g).norm(), 1e-10 * g.norm()) << to_string(kind);
  }
}

TEST(BuildMetric, ClampedAnnulusIsPositiveDefinite) {
  const TriMesh m = gen_annulus(0.5, 1.0, 2);
  ASSERT_GE(m.num_nodes(), 30);
  InnerProductSpec spec{MetricKind::CrPlusHsymClamped, 1e-3, true, 0.05};
  const MetricOperator op = build_metric(m, spec);
  const auto& fixed = op.fixed_dofs();
  std::vector<Index> free;
  for (Index i = 0; i < op.size(); ++i)
    if (!fixed[i]) free.push_back(i);
  const Eigen::MatrixXd D(op.matrix());
  Eigen::MatrixXd R(free.size(), free.size());
  for (std::size_t i = 0; i < free.size(); ++i)
    for (std::size_t j = 0; j < free.size(); ++j) R(i, j) = D(free[i], free[j]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  const VectorXd g = op.riesz(random_vector(op.size(), 4));
  for (Index i = 0; i < op.size(); ++i)
    if (fixed[i]) {
      EXPECT_EQ(g[i], 0.0);
    }
}

TEST(BuildMetric, NullSpacesAreExactAndComplete) {
  const TriMesh m = unit_square(6);
  ASSERT_EQ(m.num_nodes(), 49);
  EXPECT_EQ(count_small_eigenvalues(assemble_h1(m), 1e-12), 2);
  EXPECT_EQ(count_small_eigenvalues(assemble_hsym(m), 1e-12), 3);
  const SparseMatrix H1 = assemble_h1(m), S = assemble_hsym(m), CR = assemble_cr(m);
  const VectorXd e1 = field(m, [](const Vec2&) { return Vec2(1, 0); });
  const VectorXd e2 = field(m, [](const Vec2&) { return Vec2(0, 1); });
  const VectorXd id = field(m, [](const Vec2& p) { return p; });
  const VectorXd rot = field(m, [](const Vec2& p) { return Vec2(-p.y(), p.x()); });
  // Relative to the H1 energy of the same field, or to its squared size when that vanishes.
  auto rel = [&](double form, const VectorXd& u) { return std::abs(form) / std::max(h1_form(m, u), u.squaredNorm()); };
  EXPECT_LT(rel(h1_form(m, e1), e1), 1e-24);
  EXPECT_LT(rel(h1_form(m, e2), e2), 1e-24);
  for (const auto* u : {&e1, &e2, &rot}) EXPECT_LT(rel(hsym_form(m, *u), *u), 1e-24);
  for (const auto* u : {&id, &rot}) EXPECT_LT(rel(cr_form(m, *u), *u), 1e-24);
  // The elementwise forms agree with the assembled matrices.
  const VectorXd u = random_vector(2 * m.num_nodes(), 21);
  EXPECT_NEAR(h1_form(m, u), quad(H1, u), 1e-12 * quad(H1, u));
  EXPECT_NEAR(hsym_form(m, u), quad(S, u), 1e-12 * quad(S, u));
  EXPECT_NEAR(cr_form(m, u), quad(CR, u), 1e-12 * quad(CR, u));
}

TEST(BuildMetric, RejectsBadSpecs) {
  const TriMesh m = gen_disc(1.0, 2);
  try {
    build_metric(m, {MetricKind::CrPlusH1, -1.0});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("metric.alpha"), std::string::npos);
  }
  EXPECT_THROW(build_metric(m, {MetricKind::HsymRing, 1.0, true, 0.0}), ConfigError);
  EXPECT_THROW(build_metric(m, {MetricKind::H1Clamped, 1.0, false, 0.05, {BoundaryTag::GammaInf}}), SolverError);
}

TEST(RieszGradient, ZeroDualGivesZero) {
  const TriMesh m = gen_disc(1.0, 3);
  const auto g = riesz_gradient(build_metric(m, {MetricKind::HsymRing}), VectorXd::Zero(2 * m.num_nodes()));
  for (const auto& v : g.values) EXPECT_EQ(v.norm(), 0.0);
}

TEST(RieszGradient, InvertsTheMetricOnConstrainedFields) {
  const TriMesh m = gen_disc(1.0, 5);
  const MetricOperator op = build_metric(m, {MetricKind::H1Ring});
  // Project a random field onto C w = 0 by removing its weighted means.
  VectorXd w = random_vector(op.size(), 8);
  const SparseMatrix& C = op.constraints();
  const Eigen::MatrixXd Cd(C);
  w -= Cd.transpose() * (Cd * Cd.transpose()).ldlt().solve(Cd * w);
  const VectorXd g = op.riesz(op.matrix() * w);
  EXPECT_LT((g - w).norm(), 1e-10 * w.norm());
}

TEST(RieszGradient, DefiningIdentityOnRandomDirections) {
  const TriMesh m = gen_disc(3.0, 6);
  const VectorXd dual = levelset_shape_dual(m, clover()).values;
  for (auto kind : {MetricKind::H1Ring, MetricKind::HsymRing, MetricKind::CrPlusHsym}) {
    const MetricOperator op = build_metric(m, {kind, 1e-2});
    const VectorXd g = op.riesz(dual);
    const Eigen::MatrixXd Cd(op.constraints());
    for (unsigned s = 0; s < 20; ++s) {
      VectorXd v = random_vector(op.size(), 100 + s);
      v -= Cd.transpose() * (Cd * Cd.transpose()).ldlt().solve(Cd * v);
      const double lhs = op.inner(v, g), rhs = dual.dot(v);
      EXPECT_NEAR(lhs, rhs, 1e-10 * (std::abs(rhs) + dual.norm() * v.norm())) << to_string(kind);
    }
    EXPECT_LT(dual.dot(-g), 0.0);
  }
}

TEST(RieszGradient, AlphaLimits) {
  const TriMesh m = gen_disc(3.0, 8);
  const VectorXd dual = levelset_shape_dual(m, clover()).values;
  const MetricOperator base = build_metric(m, {MetricKind::HsymRing});
  const VectorXd g_base = base.riesz(dual);
  const VectorXd g_big = build_metric(m, {MetricKind::CrPlusHsym, 1e6}).riesz(dual);
  EXPECT_LT(base.norm(g_big - g_base) / base.norm(g_base), 1e-3);

  std::vector<double> cr, norms;
  for (int k = 0; k <= 6; ++k) {
    const MetricOperator op = build_metric(m, {MetricKind::CrPlusHsym, std::pow(10.0, -k)});
    const VectorXd g = op.riesz(dual);
    cr.push_back(cr_residual(m, g));
    norms.push_back(op.norm(g));
  }
  for (std::size_t k = 1; k < cr.size(); ++k) EXPECT_LE(cr[k], cr[k - 1]);
  EXPECT_LT(cr.back(), 0.05 * cr.front());
  const double top = *std::max_element(norms.begin(), norms.end());
  for (double n : norms) EXPECT_LE(n, 1.01 * top);
  EXPECT_LE(norms.front(), base.norm(g_base) * (1 + 1e-12));
}

TEST(MatrixMarket, WritesHeaderAndEntries) {
  const TriMesh m = gen_disc(1.0, 1);
  const SparseMatrix A = assemble_h1(m);
  const auto path = std::filesystem::temp_directory_path() / "conformal_h1.mtx";
  write_matrix_market(path, A);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "%%MatrixMarket matrix coordinate real general");
  Index r = 0, c = 0, nnz = 0;
  in >> r >> c >> nnz;
  EXPECT_EQ(r, A.rows());
  EXPECT_EQ(nnz, A.nonZeros());
  std::filesystem::remove(path);
}
