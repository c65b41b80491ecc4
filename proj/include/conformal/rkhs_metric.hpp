#pragma once

#include "conformal/mesh.hpp"

#include <Eigen/SparseCholesky>

#include <memory>

namespace conformal {

/// Lowest-order compactly supported Wendland function (1 - r)_+^4 (4r + 1).
inline double wendland_phi(double r) {
  if (r >= 1.0) return 0.0;
  const double s = 1.0 - r;
  return s * s * s * s * (4.0 * r + 1.0);
}

/// Derivative of wendland_phi, -20 r (1 - r)^3 on [0, 1).
inline double wendland_dphi(double r) {
  if (r >= 1.0) return 0.0;
  const double s = 1.0 - r;
  return -20.0 * r * s * s * s;
}

inline double kernel_value(const Vec2& x, const Vec2& y, double sigma) { return wendland_phi((x - y).norm() / sigma); }

/// Gradient of p -> k(center, p). Smooth at p = center where it vanishes.
inline Vec2 kernel_gradient(const Vec2& center, const Vec2& p, double sigma) {
  const Vec2 d = p - center;
  const double r = d.norm() / sigma;
  if (r >= 1.0) return Vec2::Zero();
  const double s = 1.0 - r;
  return (-20.0 * s * s * s / (sigma * sigma)) * d;
}

namespace detail {

// Uniform bucket grid for fixed-radius neighbour queries.
class PointGrid {
 public:
  PointGrid(const std::vector<Vec2>& pts, double cell) : pts_(pts), cell_(cell) {
    if (pts.empty()) return;
    lo_ = pts.front();
    Vec2 hi = lo_;
    for (const auto& p : pts) {
      lo_ = lo_.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    nx_ = static_cast<Index>((hi.x() - lo_.x()) / cell_) + 1;
    ny_ = static_cast<Index>((hi.y() - lo_.y()) / cell_) + 1;
    buckets_.resize(nx_ * ny_);
    for (Index i = 0; i < static_cast<Index>(pts.size()); ++i) buckets_[bucket(pts[i])].push_back(i);
  }

  /// Indices of stored points within distance < radius of q, ascending.
  std::vector<Index> near(const Vec2& q, double radius) const {
    std::vector<Index> out;
    if (pts_.empty()) return out;
    const Index span = static_cast<Index>(std::ceil(radius / cell_));
    const Index cx = static_cast<Index>(std::floor((q.x() - lo_.x()) / cell_));
    const Index cy = static_cast<Index>(std::floor((q.y() - lo_.y()) / cell_));
    for (Index j = std::max<Index>(0, cy - span); j <= std::min(ny_ - 1, cy + span); ++j)
      for (Index i = std::max<Index>(0, cx - span); i <= std::min(nx_ - 1, cx + span); ++i)
        for (Index k : buckets_[j * nx_ + i])
          if ((pts_[k] - q).norm() < radius) out.push_back(k);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  Index bucket(const Vec2& p) const {
    const Index i = std::min(nx_ - 1, static_cast<Index>((p.x() - lo_.x()) / cell_));
    const Index j = std::min(ny_ - 1, static_cast<Index>((p.y() - lo_.y()) / cell_));
    return j * nx_ + i;
  }

  const std::vector<Vec2>& pts_;
  double cell_;
  Vec2 lo_ = Vec2::Zero();
  Index nx_ = 0, ny_ = 0;
  std::vector<std::vector<Index>> buckets_;
};

inline SparseMatrix block_diag2(const SparseMatrix& M) {
  std::vector<Triplet> trip;
  for (Index k = 0; k < M.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(M, k); it; ++it) {
      trip.emplace_back(it.row(), it.col(), it.value());
      trip.emplace_back(M.rows() + it.row(), M.cols() + it.col(), it.value());
    }
  SparseMatrix out(2 * M.rows(), 2 * M.cols());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

// rows x centers matrix with entry f(center_j, row_point_i) where nonzero.
template <class Fn>
SparseMatrix evaluate_sparse(const std::vector<Vec2>& centers, const std::vector<Vec2>& points, double sigma, Fn&& f) {
  PointGrid grid(centers, sigma);
  std::vector<std::vector<std::pair<Index, double>>> rows(points.size());
  parallel_for(static_cast<Index>(points.size()), [&](Index i) {
    for (Index j : grid.near(points[i], sigma)) {
      const double v = f(centers[j], points[i]);
      if (v != 0.0) rows[i].emplace_back(j, v);
    }
  });
  std::vector<Triplet> trip;
  for (Index i = 0; i < static_cast<Index>(points.size()); ++i)
    for (const auto& [j, v] : rows[i]) trip.emplace_back(i, j, v);
  SparseMatrix M(points.size(), centers.size());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

}  // namespace detail

/// Scalar kernel matrix k(X, X) for pairwise-distinct centers.
inline SparseMatrix kernel_matrix(const std::vector<Vec2>& centers, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("kernel sigma must be positive");
  const double tol = 1e-14 * sigma;
  detail::PointGrid grid(centers, sigma);
  for (Index i = 0; i < static_cast<Index>(centers.size()); ++i)
    for (Index j : grid.near(centers[i], tol))
      if (j != i) throw SolverError("duplicate kernel centers " + std::to_string(i) + " and " + std::to_string(j));
  return detail::evaluate_sparse(centers, centers, sigma,
                                 [sigma](const Vec2& c, const Vec2& p) { return kernel_value(c, p, sigma); });
}

struct CrPointMatrices {
  SparseMatrix B1;  // B1(l, j) = d/dx of k(x_j, .) at p_l
  SparseMatrix B2;  // B2(l, j) = d/dy of k(x_j, .) at p_l
  SparseMatrix B;   // [-B1 B2; B2 B1], maps coefficients to the CR operator at every point
};

inline CrPointMatrices cr_point_matrices(const std::vector<Vec2>& centers, double sigma,
                                         const std::vector<Vec2>& cr_points) {
  CrPointMatrices m;
  m.B1 = detail::evaluate_sparse(centers, cr_points, sigma,
                                 [sigma](const Vec2& c, const Vec2& p) { return kernel_gradient(c, p, sigma).x(); });
  m.B2 = detail::evaluate_sparse(centers, cr_points, sigma,
                                 [sigma](const Vec2& c, const Vec2& p) { return kernel_gradient(c, p, sigma).y(); });
  const Index n = cr_points.size(), N = centers.size();
  std::vector<Triplet> trip;
  auto put = [&](const SparseMatrix& M, Index r0, Index c0, double s) {
    for (Index k = 0; k < M.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(M, k); it; ++it) trip.emplace_back(r0 + it.row(), c0 + it.col(), s * it.value());
  };
  put(m.B1, 0, 0, -1.0);
  put(m.B2, 0, N, 1.0);
  put(m.B2, n, 0, 1.0);
  put(m.B1, n, N, 1.0);
  m.B.resize(2 * n, 2 * N);
  m.B.setFromTriplets(trip.begin(), trip.end());
  return m;
}

/// Maps kernel coefficients (one scalar block) to values at fem_nodes.
inline SparseMatrix interpolation_matrix(const std::vector<Vec2>& centers, double sigma,
                                         const std::vector<Vec2>& fem_nodes) {
  return detail::evaluate_sparse(centers, fem_nodes, sigma,
                                 [sigma](const Vec2& c, const Vec2& p) { return kernel_value(c, p, sigma); });
}

/// Kernel expansion of a planar vector field.
struct KernelModel {
  std::vector<Vec2> centers;
  double sigma = 1.0;
  std::vector<Vec2> cr_points;
  std::vector<double> mu;    // per cr point; empty means 1
  VectorXd coefficients;     // (c1 for every center, then c2)

  Index num_centers() const { return static_cast<Index>(centers.size()); }

  /// Centers and cr points at the mesh nodes, sigma = factor * mean edge length.
  static KernelModel on_mesh(const TriMesh& mesh, double sigma_factor = 4.0) {
    KernelModel m;
    m.centers = mesh.nodes;
    m.cr_points = mesh.nodes;
    m.sigma = sigma_factor * mean_edge_length(mesh);
    m.coefficients = VectorXd::Zero(2 * m.num_centers());
    return m;
  }

  Vec2 evaluate(const Vec2& p) const {
    const Index N = num_centers();
    Vec2 u = Vec2::Zero();
    for (Index j = 0; j < N; ++j) {
      const double k = kernel_value(centers[j], p, sigma);
      u += k * Vec2(coefficients[j], coefficients[N + j]);
    }
    return u;
  }

  /// Cauchy-Riemann operator of the expansion at p.
  Vec2 cr_at(const Vec2& p) const {
    const Index N = num_centers();
    Mat2 du = Mat2::Zero();
    for (Index j = 0; j < N; ++j) {
      const Vec2 g = kernel_gradient(centers[j], p, sigma);
      du.row(0) += coefficients[j] * g.transpose();
      du.row(1) += coefficients[N + j] * g.transpose();
    }
    return {-du(0, 0) + du(1, 1), du(0, 1) + du(1, 0)};
  }
};

/// Assembled matrices for one KernelModel.
struct KernelSystem {
  SparseMatrix K_scalar;  // k(X, X)
  SparseMatrix K;         // block diagonal, 2N x 2N
  CrPointMatrices cr;     // 2n x 2N operator
  VectorXd W;             // mu^2 per row of cr.B
  Index n_points = 0;

  /// (1/n) B^T W B, the discrete CR energy on coefficients.
  SparseMatrix cr_energy() const {
    if (n_points == 0) return SparseMatrix(K.rows(), K.cols());
    SparseMatrix WB = W.asDiagonal() * cr.B;
    SparseMatrix E = SparseMatrix(cr.B.transpose()) * WB;
    return E / static_cast<double>(n_points);
  }
};

inline KernelSystem assemble_kernel_system(const KernelModel& model) {
  if (!model.mu.empty() && model.mu.size() != model.cr_points.size())
    throw ConfigError("kernel weights must match the cr points");
  KernelSystem s;
  s.K_scalar = kernel_matrix(model.centers, model.sigma);
  s.K = detail::block_diag2(s.K_scalar);
  s.cr = cr_point_matrices(model.centers, model.sigma, model.cr_points);
  s.n_points = static_cast<Index>(model.cr_points.size());
  s.W = VectorXd::Ones(2 * s.n_points);
  for (Index l = 0; l < static_cast<Index>(model.mu.size()); ++l) s.W[l] = s.W[s.n_points + l] = model.mu[l] * model.mu[l];
  return s;
}

/// Solves ((1/n) B^T W B + alpha K) c = F.
inline VectorXd solve_kernel_gradient(const KernelSystem& system, double alpha, const VectorXd& F) {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (F.size() != system.K.rows()) throw SolverError("kernel right-hand side has the wrong length");
  SparseMatrix M = system.cr_energy() + alpha * system.K;
  Eigen::SimplicialLLT<SparseMatrix> llt(M);
  if (llt.info() != Eigen::Success) throw SolverError("kernel system Cholesky failed");
  return llt.solve(F);
}

/// Nodal values I c of a kernel expansion, per component.
inline VectorField kernel_field_to_vectorfield(const KernelModel& model, const TriMesh& mesh) {
  const SparseMatrix I = interpolation_matrix(model.centers, model.sigma, mesh.nodes);
  const Index N = model.num_centers();
  if (model.coefficients.size() != 2 * N) throw SolverError("kernel coefficients have the wrong length");
  const VectorXd u1 = I * model.coefficients.head(N);
  const VectorXd u2 = I * model.coefficients.tail(N);
  VectorField f(mesh.num_nodes());
  for (Index i = 0; i < mesh.num_nodes(); ++i) f.values[i] = Vec2(u1[i], u2[i]);
  return f;
}

}  // namespace conformal
