#include "conformal/mesh_gen.hpp"
#include "conformal/mesh_io.hpp"
#include "conformal/stokes.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>

using namespace conformal;

namespace {

const Vec2 kFlow(1.0, 0.0);

VectorXd field(const TriMesh& m, const std::function<Vec2(const Vec2&)>& f) {
  return VectorField::sample(m, f).blocked();
}

double bump(const Vec2& p) {
  const double s = std::max(0.0, 1.0 - (p.norm() - 0.5));
  return s * s;
}

// Smooth fields supported near the obstacle, zero on the channel walls.
std::vector<VectorXd> obstacle_directions(const TriMesh& m, int count, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<VectorXd> out;
  for (int k = 0; k < count; ++k) {
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    out.push_back(field(m, [=](const Vec2& p) -> Vec2 {
      return bump(p) * Vec2(std::sin(3 * a * p.x() + b * p.y() + c), std::cos(2 * d * p.x() - a * p.y() + b));
    }));
  }
  return out;
}

std::vector<Index> mirror_map(const TriMesh& m, int axis) {
  std::vector<Index> mir(m.num_nodes(), -1);
  for (Index i = 0; i < m.num_nodes(); ++i) {
    Vec2 q = m.nodes[i];
    q[axis] = -q[axis];
    for (Index j = 0; j < m.num_nodes(); ++j)
      if ((m.nodes[j] - q).norm() < 1e-12) mir[i] = j;
  }
  return mir;
}

// Boundary-form derivative -1/2 |d_nu u|^2 (X . nu) over GAMMA edges, two-point Gauss per edge.
double boundary_form(const TriMesh& m, const StokesSolution& sol, const std::function<Vec2(const Vec2&)>& X) {
  std::map<std::pair<Index, Index>, Index> owner;
  for (Index t = 0; t < m.num_triangles(); ++t)
    for (int a = 0; a < 3; ++a) {
      Index i = m.triangles[t][a], j = m.triangles[t][(a + 1) % 3];
      owner[{std::min(i, j), std::max(i, j)}] = t;
    }
  const double g = 0.5 / std::sqrt(3.0);
  double s = 0.0;
  for (const auto& edge : m.boundary_edges) {
    if (edge.tag != BoundaryTag::Gamma) continue;
    const Index i = edge.nodes[0], j = edge.nodes[1];
    const Index t = owner.at({std::min(i, j), std::max(i, j)});
    const P1Element e = p1_element(m, t);
    int ai = 0, aj = 0;
    for (int a = 0; a < 3; ++a) {
      if (m.triangles[t][a] == i) ai = a;
      if (m.triangles[t][a] == j) aj = a;
    }
    const Vec2 tangent = m.nodes[j] - m.nodes[i];
    const double len = tangent.norm();
    // Outward normal of the fluid domain: away from the opposite vertex.
    Vec2 nu(tangent.y(), -tangent.x());
    nu /= len;
    const Vec2 opposite = m.vertex(t, 3 - ai - aj);
    if (nu.dot(opposite - m.nodes[i]) > 0) nu = -nu;
    for (double xi : {0.5 - g, 0.5 + g}) {
      std::array<double, 3> l{0, 0, 0};
      l[ai] = 1.0 - xi;
      l[aj] = xi;
      const Vec2 p = (1.0 - xi) * m.nodes[i] + xi * m.nodes[j];
      const Vec2 dnu = sol.gradient(m, t, e, l) * nu;
      s += 0.5 * len * (-0.5 * dnu.squaredNorm() * X(p).dot(nu));
    }
  }
  return s;
}

TriMesh bundled_channel() { return load_mesh(std::filesystem::path(CONFORMAL_SOURCE_DIR) / "data/channel.json"); }

}  // namespace

TEST(SolveStokes, ZeroDataGivesZeroSolution) {
  const TriMesh m = gen_channel(0.5, 3.0, 2.0, 20);
  const StokesSolution sol = solve_stokes(m, Vec2::Zero());
  EXPECT_EQ(sol.velocity.norm(), 0.0);
  EXPECT_EQ(sol.pressure.norm(), 0.0);
  EXPECT_EQ(dissipated_energy(m, sol), 0.0);
  EXPECT_EQ(stokes_shape_dual(m, sol).values.norm(), 0.0);
}

TEST(SolveStokes, BoundaryValuesAndZeroMeanPressure) {
  const TriMesh m = bundled_channel();
  const StokesSolution sol = solve_stokes(m, kFlow);
  const auto tags = m.node_tags();
  const Index n = m.num_nodes();
  double mean = 0.0, area = 0.0;
  for (Index t = 0; t < m.num_triangles(); ++t) {
    const double a = signed_area(m, t);
    area += a;
    for (int k = 0; k < 3; ++k) mean += a / 3.0 * sol.pressure[m.triangles[t][k]];
  }
  EXPECT_LT(std::abs(mean), 1e-10 * area);
  for (Index i = 0; i < n; ++i) {
    if (tags[i] == BoundaryTag::GammaInf) {
      EXPECT_EQ(sol.velocity[i], 1.0);
      EXPECT_EQ(sol.velocity[n + i], 0.0);
    } else if (tags[i] == BoundaryTag::Gamma) {
      EXPECT_EQ(sol.velocity[i], 0.0);
      EXPECT_EQ(sol.velocity[n + i], 0.0);
    }
  }
}

TEST(SolveStokes, DiscreteIncompressibility) {
  const TriMesh m = bundled_channel();
  const StokesSolution sol = solve_stokes(m, kFlow);
  const Index n = m.num_nodes();
  VectorXd r = VectorXd::Zero(n);
  for (Index t = 0; t < m.num_triangles(); ++t) {
    const P1Element e = p1_element(m, t);
    double div = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 2; ++c) div += sol.velocity[c * n + m.triangles[t][a]] * e.grad[a][c];
    for (int a = 0; a < 3; ++a) {
      // integral of lambda_a div(bubble field) = -(9/20)|K| grad_a . b
      const double bubble = -9.0 / 20.0 * e.area * e.grad[a].dot(sol.bubble[t]);
      r[m.triangles[t][a]] += e.area / 3.0 * div + bubble;
    }
  }
  EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(SolveStokes, ConstantFlowInBoxIsExact) {
  const TriMesh box = gen_rectangle({-1, -1}, {1, 1}, 8, 8, BoundaryTag::GammaInf);
  const StokesSolution sol = solve_stokes(box, Vec2(0.3, -0.7));
  const Index n = box.num_nodes();
  for (Index i = 0; i < n; ++i) {
    EXPECT_NEAR(sol.velocity[i], 0.3, 1e-12);
    EXPECT_NEAR(sol.velocity[n + i], -0.7, 1e-12);
  }
  EXPECT_LT(sol.pressure.cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(dissipated_energy(box, sol), 1e-20);
}

TEST(SolveStokes, MissingFarFieldTagIsRejected) {
  EXPECT_THROW(solve_stokes(gen_disc(1.0, 3), kFlow), SolverError);
}

TEST(SolveStokes, EnergyConvergesUnderRefinement) {
  std::vector<double> J;
  for (int per_ring : {20, 40, 80}) {
    const TriMesh m = gen_channel(0.5, 3.0, 2.0, per_ring);
    J.push_back(dissipated_energy(m, solve_stokes(m, kFlow)));
  }
  const double d1 = std::abs(J[1] - J[0]), d2 = std::abs(J[2] - J[1]);
  EXPECT_LT(d2, 0.5 * d1);
  EXPECT_GT(J[2], 0.0);
}

TEST(SolveStokes, PressureMirrorSymmetry) {
  const TriMesh m = bundled_channel();
  const StokesSolution sol = solve_stokes(m, kFlow);
  const auto fore_aft = mirror_map(m, 0), top_bottom = mirror_map(m, 1);
  const double scale = sol.pressure.cwiseAbs().maxCoeff();
  for (Index i = 0; i < m.num_nodes(); ++i) {
    ASSERT_GE(fore_aft[i], 0);
    ASSERT_GE(top_bottom[i], 0);
    EXPECT_NEAR(sol.pressure[i], -sol.pressure[fore_aft[i]], 1e-8 * scale);
    EXPECT_NEAR(sol.pressure[i], sol.pressure[top_bottom[i]], 1e-8 * scale);
  }
}

TEST(DissipatedEnergy, MatchesQuadratureOracle) {
  const TriMesh m = bundled_channel();
  const StokesSolution sol = solve_stokes(m, kFlow);
  double oracle = 0.0;
  for (Index t = 0; t < m.num_triangles(); ++t) {
    const P1Element e = p1_element(m, t);
    for (const auto& q : detail::dunavant4()) oracle += 0.5 * e.area * q.weight * sol.gradient(m, t, e, q.lambda).squaredNorm();
  }
  const double J = dissipated_energy(m, sol);
  EXPECT_GT(J, 0.0);
  EXPECT_NEAR(J, oracle, 1e-12 * oracle);
}

TEST(DissipatedEnergy, EqualsHalfTheBoundaryWork) {
  const TriMesh m = bundled_channel();
  const StokesSolution sol = solve_stokes(m, kFlow);
  const VectorXd reaction = stokes_boundary_reaction(m, kFlow, sol);
  const double work = reaction.dot(sol.velocity);
  const double J = dissipated_energy(m, sol);
  EXPECT_NEAR(0.5 * work, J, 1e-8 * J);
}

TEST(StokesShapeDual, MatchesFiniteDifferencesThroughSolve) {
  const TriMesh m = bundled_channel();
  const VectorXd dual = stokes_shape_dual(m, solve_stokes(m, kFlow)).values;
  auto energy = [](const TriMesh& mm) { return dissipated_energy(mm, solve_stokes(mm, kFlow)); };
  EXPECT_LT(fd_check(energy, dual, m, obstacle_directions(m, 5, 17), 1e-5), 1e-3);
}

TEST(StokesShapeDual, ZeroOnFarFieldNodes) {
  const TriMesh m = bundled_channel();
  const VectorXd dual = stokes_shape_dual(m, solve_stokes(m, kFlow)).values;
  const auto tags = m.node_tags();
  const Index n = m.num_nodes();
  for (Index i = 0; i < n; ++i)
    if (tags[i] == BoundaryTag::GammaInf) {
      EXPECT_EQ(dual[i], 0.0);
      EXPECT_EQ(dual[n + i], 0.0);
    }
}

TEST(StokesShapeDual, VerticalTranslationOfSymmetricObstacle) {
  const TriMesh m = bundled_channel();
  const ShapeDual d = stokes_shape_dual(m, solve_stokes(m, kFlow));
  const double vertical = d.pair(field(m, [](const Vec2& p) -> Vec2 { return Vec2(0.0, bump(p)); }));
  const double expansion = d.pair(field(m, [](const Vec2& p) -> Vec2 { return bump(p) * p; }));
  EXPECT_GT(std::abs(expansion), 1.0);
  EXPECT_LT(std::abs(vertical), 1e-8 * std::abs(expansion));
}

TEST(StokesShapeDual, BoundaryFormAgreementImprovesWithRefinement) {
  auto X = [](const Vec2& p) -> Vec2 { return bump(p) * p; };
  std::vector<double> gap;
  for (int per_ring : {20, 40, 80}) {
    const TriMesh m = gen_channel(0.5, 3.0, 2.0, per_ring);
    const StokesSolution sol = solve_stokes(m, kFlow);
    const double volume = stokes_shape_dual(m, sol).pair(field(m, X));
    gap.push_back(std::abs(volume - boundary_form(m, sol, X)) / std::abs(volume));
  }
  EXPECT_LT(gap[1], gap[0]);
  EXPECT_LT(gap[2], gap[1]);
}

TEST(ObstacleGeometry, InitialCircle) {
  const TriMesh m = bundled_channel();
  const ObstacleGeometry g = obstacle_geometry(m);
  EXPECT_NEAR(g.volume, M_PI / 4, 0.01);
  EXPECT_LT(g.volume, M_PI / 4);
  EXPECT_NEAR(g.barycentre.x(), 0.0, 1e-12);
  EXPECT_NEAR(g.barycentre.y(), 0.0, 1e-12);
  EXPECT_THROW(obstacle_geometry(gen_rectangle({-3, -2}, {3, 2}, 4, 4)), MeshError);
}

TEST(ObstacleGeometry, DualsMatchFiniteDifferences) {
  const TriMesh m = bundled_channel();
  const ObstacleGeometry g = obstacle_geometry(m);
  const auto dirs = obstacle_directions(m, 5, 3);
  EXPECT_LT(fd_check([](const TriMesh& mm) { return obstacle_geometry(mm).volume; }, g.volume_dual, m, dirs, 1e-4), 1e-6);
  for (int k = 0; k < 2; ++k) {
    auto bc = [k](const TriMesh& mm) { return obstacle_geometry(mm).barycentre[k]; };
    EXPECT_LT(fd_check(bc, g.barycentre_dual[k], m, dirs, 1e-4), 1e-6) << k;
  }
}

TEST(AugmentedLagrangian, FormulaExamples) {
  const VectorXd J_dual = VectorXd::LinSpaced(6, 1.0, 6.0);
  const std::array<VectorXd, 3> c_duals{VectorXd::Ones(6), VectorXd::Constant(6, 2.0), VectorXd::Constant(6, -1.0)};
  ConstraintState state;
  state.rho = 1.0;

  const MergedObjective zero = augmented_lagrangian(3.0, J_dual, Eigen::Vector3d::Zero(), c_duals, state);
  EXPECT_EQ(zero.value, 3.0);
  EXPECT_EQ(zero.dual, J_dual);

  const Eigen::Vector3d c(0.1, 0.0, 0.0);
  const MergedObjective m = augmented_lagrangian(3.0, J_dual, c, c_duals, state);
  EXPECT_NEAR(m.value, 3.005, 1e-15);
  EXPECT_TRUE(m.dual.isApprox(J_dual + 0.1 * c_duals[0]));

  const ConstraintState next = update_multipliers(state, c);
  EXPECT_NEAR(next.lambda[0], 0.1, 1e-15);
  EXPECT_EQ(next.lambda[1], 0.0);
  EXPECT_EQ(next.lambda[2], 0.0);

  const MergedObjective later = augmented_lagrangian(3.0, J_dual, c, c_duals, next);
  EXPECT_NEAR(later.value, 3.0 + 0.01 + 0.005, 1e-15);

  state.rho = 0.0;
  EXPECT_THROW(augmented_lagrangian(3.0, J_dual, c, c_duals, state), ConfigError);
}

TEST(ConstraintState, ResidualAgainstTargets) {
  const TriMesh m = bundled_channel();
  const ObstacleGeometry g = obstacle_geometry(m);
  ConstraintState s;
  s.target_volume = g.volume + 0.25;
  s.target_barycentre = Vec2(0.1, -0.2);
  const Eigen::Vector3d r = s.residual(g);
  EXPECT_NEAR(r[0], -0.25, 1e-14);
  EXPECT_NEAR(r[1], -0.1, 1e-12);
  EXPECT_NEAR(r[2], 0.2, 1e-12);
}
