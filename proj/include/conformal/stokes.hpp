#pragma once

#include "conformal/functionals.hpp"
#include "conformal/mesh.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseLU>

namespace conformal {

namespace detail {

// Degree-4 symmetric rule on the triangle: barycentric points and weights
// (weights sum to 1, multiply by the area).
struct QuadPoint {
  std::array<double, 3> lambda;
  double weight;
};

inline const std::array<QuadPoint, 6>& dunavant4() {
  static const std::array<QuadPoint, 6> rule = [] {
    const double a1 = 0.445948490915964886, b1 = 0.108103018168070227, w1 = 0.223381589678011466;
    const double a2 = 0.091576213509770743, b2 = 0.816847572980458513, w2 = 0.109951743655321867;
    return std::array<QuadPoint, 6>{{{{a1, a1, b1}, w1},
                                     {{a1, b1, a1}, w1},
                                     {{b1, a1, a1}, w1},
                                     {{a2, a2, b2}, w2},
                                     {{a2, b2, a2}, w2},
                                     {{b2, a2, a2}, w2}}};
  }();
  return rule;
}

// Gradient of the cubic bubble 27 l1 l2 l3 at barycentric point `l`.
inline Vec2 bubble_gradient(const P1Element& e, const std::array<double, 3>& l) {
  return 27.0 * (l[1] * l[2] * e.grad[0] + l[0] * l[2] * e.grad[1] + l[0] * l[1] * e.grad[2]);
}

// Integral of |grad bubble|^2 over the element.
inline double bubble_stiffness(const P1Element& e) {
  return 81.0 / 20.0 * e.area * (e.grad[0].squaredNorm() + e.grad[1].squaredNorm() + e.grad[2].squaredNorm());
}

// Integral of lambda_a * d_c(bubble) over the element, for vertex a, component c.
inline double bubble_divergence(const P1Element& e, int a, int c) { return -9.0 / 20.0 * e.area * e.grad[a][c]; }

}  // namespace detail

/// Mini-element velocity (P1 nodal values plus one bubble coefficient pair per
/// triangle) and P1 pressure with zero mean.
struct StokesSolution {
  VectorXd velocity;           // blocked, 2N
  std::vector<Vec2> bubble;    // per triangle
  VectorXd pressure;           // N
  double mean_multiplier = 0;  // multiplier of the zero-mean row

  /// Velocity gradient du(c, k) = d_k u_c on triangle t at barycentric point l.
  Mat2 gradient(const TriMesh& mesh, Index t, const P1Element& e, const std::array<double, 3>& l) const {
    const Index n = mesh.num_nodes();
    Mat2 du = Mat2::Zero();
    for (int a = 0; a < 3; ++a) {
      const Index i = mesh.triangles[t][a];
      du.row(0) += velocity[i] * e.grad[a].transpose();
      du.row(1) += velocity[n + i] * e.grad[a].transpose();
    }
    const Vec2 gb = detail::bubble_gradient(e, l);
    du.row(0) += bubble[t].x() * gb.transpose();
    du.row(1) += bubble[t].y() * gb.transpose();
    return du;
  }

  double pressure_at(const TriMesh& mesh, Index t, const std::array<double, 3>& l) const {
    double p = 0;
    for (int a = 0; a < 3; ++a) p += l[a] * pressure[mesh.triangles[t][a]];
    return p;
  }
};

/// Condensed saddle-point system over (u1, u2, p, mean multiplier).
struct StokesSystem {
  SparseMatrix S;                  // full symmetric matrix before Dirichlet elimination
  std::vector<bool> dirichlet;     // per velocity dof
  VectorXd dirichlet_values;       // per velocity dof
  std::vector<Eigen::Matrix<double, 3, 2>> bubble_coupling;  // d_c per triangle, column c
  std::vector<double> bubble_stiffness;
  Index n_nodes = 0;
};

inline StokesSystem assemble_stokes(const TriMesh& mesh, const Vec2& u_inf) {
  const Index n = mesh.num_nodes();
  const auto tags = mesh.node_tags();
  if (std::none_of(tags.begin(), tags.end(), [](BoundaryTag t) { return t == BoundaryTag::GammaInf; }))
    throw SolverError("Stokes solve needs GAMMA_INF boundary edges");
  StokesSystem sys;
  sys.n_nodes = n;
  sys.dirichlet.assign(2 * n, false);
  sys.dirichlet_values = VectorXd::Zero(2 * n);
  for (Index i = 0; i < n; ++i) {
    if (tags[i] == BoundaryTag::None) continue;
    sys.dirichlet[i] = sys.dirichlet[n + i] = true;
    if (tags[i] == BoundaryTag::GammaInf) {
      sys.dirichlet_values[i] = u_inf.x();
      sys.dirichlet_values[n + i] = u_inf.y();
    }
  }
  sys.bubble_coupling.resize(mesh.triangles.size());
  sys.bubble_stiffness.resize(mesh.triangles.size());

  using Local = Eigen::Matrix<double, 9, 9>;  // (u1 a, u2 a, p a)
  std::vector<Local> local(mesh.triangles.size());
  std::vector<Eigen::Vector3d> mass(mesh.triangles.size());
  parallel_for(mesh.num_triangles(), [&](Index t) {
    const P1Element e = p1_element(mesh, t);
    Local L = Local::Zero();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        const double lap = e.area * e.grad[a].dot(e.grad[b]);
        L(a, b) += lap;
        L(3 + a, 3 + b) += lap;
      }
    // -D and -D^T: integral of q_a d_c(phi_b) = |K|/3 grad_b[c].
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 2; ++c) {
          const double d = e.area / 3.0 * e.grad[b][c];
          L(6 + a, 3 * c + b) -= d;
          L(3 * c + b, 6 + a) -= d;
        }
    const double abb = detail::bubble_stiffness(e);
    Eigen::Matrix<double, 3, 2> dc;
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 2; ++c) dc(a, c) = detail::bubble_divergence(e, a, c);
    L.block<3, 3>(6, 6) -= (dc * dc.transpose()) / abb;
    sys.bubble_coupling[t] = dc;
    sys.bubble_stiffness[t] = abb;
    local[t] = L;
    mass[t] = Eigen::Vector3d::Constant(e.area / 3.0);
  });

  auto dof = [n](Index node, int block) { return block * n + node; };  // block 0,1 velocity, 2 pressure
  std::vector<Triplet> trip;
  trip.reserve(81 * mesh.triangles.size() + 6 * mesh.triangles.size());
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int p = 0; p < 9; ++p)
      for (int q = 0; q < 9; ++q) {
        const double v = local[t](p, q);
        if (v != 0.0) trip.emplace_back(dof(tri[p % 3], p / 3), dof(tri[q % 3], q / 3), v);
      }
    for (int a = 0; a < 3; ++a) {
      trip.emplace_back(dof(tri[a], 2), 3 * n, mass[t][a]);
      trip.emplace_back(3 * n, dof(tri[a], 2), mass[t][a]);
    }
  }
  sys.S.resize(3 * n + 1, 3 * n + 1);
  sys.S.setFromTriplets(trip.begin(), trip.end());
  return sys;
}

inline StokesSolution solve_stokes(const TriMesh& mesh, const Vec2& u_inf) {
  const StokesSystem sys = assemble_stokes(mesh, u_inf);
  const Index n = sys.n_nodes, total = 3 * n + 1;
  std::vector<Index> map(total, -1);
  Index free_count = 0;
  for (Index k = 0; k < total; ++k)
    if (!(k < 2 * n && sys.dirichlet[k])) map[k] = free_count++;
  VectorXd full_known = VectorXd::Zero(total);
  full_known.head(2 * n) = sys.dirichlet_values;
  const VectorXd lifted = sys.S * full_known;

  std::vector<Triplet> trip;
  for (Index k = 0; k < sys.S.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(sys.S, k); it; ++it)
      if (map[it.row()] >= 0 && map[it.col()] >= 0) trip.emplace_back(map[it.row()], map[it.col()], it.value());
  SparseMatrix R(free_count, free_count);
  R.setFromTriplets(trip.begin(), trip.end());
  R.makeCompressed();
  VectorXd rhs(free_count);
  for (Index k = 0; k < total; ++k)
    if (map[k] >= 0) rhs[map[k]] = -lifted[k];

  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(R);
  if (lu.info() != Eigen::Success) throw SolverError("Stokes system is singular");
  VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite()) throw SolverError("Stokes solve failed");
  // One step of iterative refinement keeps the residual near machine level.
  x += lu.solve(VectorXd(rhs - R * x));

  VectorXd full = full_known;
  for (Index k = 0; k < total; ++k)
    if (map[k] >= 0) full[k] = x[map[k]];
  StokesSolution sol;
  sol.velocity = full.head(2 * n);
  sol.pressure = full.segment(2 * n, n);
  sol.mean_multiplier = full[3 * n];
  sol.bubble.resize(mesh.triangles.size());
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    Eigen::Vector3d pk;
    for (int a = 0; a < 3; ++a) pk[a] = sol.pressure[mesh.triangles[t][a]];
    const Eigen::Vector2d b = sys.bubble_coupling[t].transpose() * pk / sys.bubble_stiffness[t];
    sol.bubble[t] = b;
  }
  return sol;
}

/// Half the squared L2 norm of the full velocity gradient, bubbles included.
inline double dissipated_energy(const TriMesh& mesh, const StokesSolution& sol) {
  const Index n = mesh.num_nodes();
  double s = 0.0;
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const P1Element e = p1_element(mesh, t);
    for (int c = 0; c < 2; ++c) {
      Vec2 g = Vec2::Zero();
      for (int a = 0; a < 3; ++a) g += sol.velocity[c * n + mesh.triangles[t][a]] * e.grad[a];
      // The P1 gradient is constant and the bubble vanishes on the boundary,
      // so the cross term integrates to zero.
      s += e.area * g.squaredNorm() + detail::bubble_stiffness(e) * sol.bubble[t][c] * sol.bubble[t][c];
    }
  }
  return 0.5 * s;
}

/// Volume-form shape derivative of the dissipated energy. Entries on
/// GAMMA_INF nodes are zero.
inline ShapeDual stokes_shape_dual(const TriMesh& mesh, const StokesSolution& sol) {
  const Index n = mesh.num_nodes();
  std::vector<Mat2> integral(mesh.triangles.size());
  std::vector<P1Element> elems(mesh.triangles.size());
  parallel_for(mesh.num_triangles(), [&](Index t) {
    const P1Element e = p1_element(mesh, t);
    Mat2 acc = Mat2::Zero();
    for (const auto& q : detail::dunavant4()) {
      const Mat2 du = sol.gradient(mesh, t, e, q.lambda);
      const double p = sol.pressure_at(mesh, t, q.lambda);
      const Mat2 S1 = (0.5 * du.squaredNorm() - p * du.trace()) * Mat2::Identity() + p * du.transpose() -
                      du.transpose() * du;
      acc += q.weight * S1;
    }
    integral[t] = e.area * acc;
    elems[t] = e;
  });
  ShapeDual d{VectorXd::Zero(2 * n), "stokes_energy"};
  for (Index t = 0; t < mesh.num_triangles(); ++t)
    for (int a = 0; a < 3; ++a)
      for (int c = 0; c < 2; ++c)
        d.values[c * n + mesh.triangles[t][a]] += integral[t].row(c).dot(elems[t].grad[a]);
  const auto tags = mesh.node_tags();
  for (Index i = 0; i < n; ++i)
    if (tags[i] == BoundaryTag::GammaInf) d.values[i] = d.values[n + i] = 0.0;
  return d;
}

/// Velocity-row residual A u - D^T p on Dirichlet dofs (zero elsewhere up to
/// solver precision). Pairing it with the boundary data gives twice the energy.
inline VectorXd stokes_boundary_reaction(const TriMesh& mesh, const Vec2& u_inf, const StokesSolution& sol) {
  const StokesSystem sys = assemble_stokes(mesh, u_inf);
  const Index n = sys.n_nodes;
  VectorXd full(3 * n + 1);
  full << sol.velocity, sol.pressure, sol.mean_multiplier;
  return (sys.S * full).head(2 * n);
}

// ---------------------------------------------------------------------------
// Obstacle geometry and constraints

struct ChannelBox {
  Vec2 lo{-3.0, -2.0};
  Vec2 hi{3.0, 2.0};

  double area() const { return (hi - lo).prod(); }
  double width() const { return hi.y() - lo.y(); }
};

/// Volume and barycentre of the obstacle (box minus meshed domain), with
/// their shape duals.
struct ObstacleGeometry {
  double volume = 0;
  Vec2 barycentre = Vec2::Zero();
  VectorXd volume_dual;
  std::array<VectorXd, 2> barycentre_dual;
};

inline ObstacleGeometry obstacle_geometry(const TriMesh& mesh, const ChannelBox& box = {}) {
  const Index n = mesh.num_nodes();
  double area = 0;
  Vec2 moment = Vec2::Zero();
  VectorXd d_area = VectorXd::Zero(2 * n);
  std::array<VectorXd, 2> d_moment{VectorXd::Zero(2 * n), VectorXd::Zero(2 * n)};
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const P1Element e = p1_element(mesh, t);
    const Vec2 c = (mesh.vertex(t, 0) + mesh.vertex(t, 1) + mesh.vertex(t, 2)) / 3.0;
    area += e.area;
    moment += e.area * c;
    for (int a = 0; a < 3; ++a) {
      const Index i = mesh.triangles[t][a];
      for (int comp = 0; comp < 2; ++comp) {
        d_area[comp * n + i] += e.area * e.grad[a][comp];
        for (int k = 0; k < 2; ++k)
          d_moment[k][comp * n + i] += e.area * c[k] * e.grad[a][comp] + (k == comp ? e.area / 3.0 : 0.0);
      }
    }
  }
  ObstacleGeometry g;
  g.volume = box.area() - area;
  if (!(g.volume > 0.0)) throw MeshError("obstacle area is not positive");
  const Vec2 box_moment = box.area() * 0.5 * (box.lo + box.hi);
  const Vec2 M = box_moment - moment;
  g.barycentre = M / g.volume;
  g.volume_dual = -d_area;
  for (int k = 0; k < 2; ++k)
    g.barycentre_dual[k] = -d_moment[k] / g.volume - M[k] * g.volume_dual / (g.volume * g.volume);
  return g;
}

/// Augmented-Lagrangian bookkeeping for the volume and barycentre constraints.
struct ConstraintState {
  double target_volume = 0;
  Vec2 target_barycentre = Vec2::Zero();
  Eigen::Vector3d lambda = Eigen::Vector3d::Zero();
  double rho = 10.0;

  Eigen::Vector3d residual(const ObstacleGeometry& g) const {
    return {g.volume - target_volume, g.barycentre.x() - target_barycentre.x(),
            g.barycentre.y() - target_barycentre.y()};
  }
};

struct MergedObjective {
  double value = 0;
  VectorXd dual;
};

/// J + lambda . c + rho/2 |c|^2 and its dual J' + sum (lambda_i + rho c_i) c_i'.
inline MergedObjective augmented_lagrangian(double J, const VectorXd& J_dual, const Eigen::Vector3d& c,
                                            const std::array<VectorXd, 3>& c_duals, const ConstraintState& state) {
  if (!(state.rho > 0.0)) throw ConfigError("augmented_lagrangian.rho must be positive");
  MergedObjective m;
  m.value = J + state.lambda.dot(c) + 0.5 * state.rho * c.squaredNorm();
  m.dual = J_dual;
  for (int i = 0; i < 3; ++i) m.dual += (state.lambda[i] + state.rho * c[i]) * c_duals[i];
  return m;
}

inline ConstraintState update_multipliers(ConstraintState state, const Eigen::Vector3d& c) {
  state.lambda += state.rho * c;
  return state;
}

}  // namespace conformal
