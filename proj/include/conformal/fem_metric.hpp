#pragma once

#include "conformal/mesh.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>

namespace conformal {

enum class MetricKind { H1Ring, HsymRing, CrPlusH1, CrPlusHsym, H1Clamped, CrPlusHsymClamped };

inline std::string_view to_string(MetricKind k) {
  switch (k) {
    case MetricKind::H1Ring: return "H1_RING";
    case MetricKind::HsymRing: return "HSYM_RING";
    case MetricKind::CrPlusH1: return "CR_PLUS_H1";
    case MetricKind::CrPlusHsym: return "CR_PLUS_HSYM";
    case MetricKind::H1Clamped: return "H1_CLAMPED";
    case MetricKind::CrPlusHsymClamped: return "CR_PLUS_HSYM_CLAMPED";
  }
  return "?";
}

inline bool has_cr_block(MetricKind k) {
  return k == MetricKind::CrPlusH1 || k == MetricKind::CrPlusHsym || k == MetricKind::CrPlusHsymClamped;
}
inline bool is_clamped(MetricKind k) { return k == MetricKind::H1Clamped || k == MetricKind::CrPlusHsymClamped; }
inline bool uses_hsym(MetricKind k) {
  return k == MetricKind::HsymRing || k == MetricKind::CrPlusHsym || k == MetricKind::CrPlusHsymClamped;
}

struct InnerProductSpec {
  MetricKind kind = MetricKind::HsymRing;
  double alpha = 1.0;  // the CR block enters with weight 1/alpha
  bool weighted = false;
  double epsilon = 0.05;
  std::vector<BoundaryTag> clamped_tags{BoundaryTag::GammaInf};

  void check() const {
    if (has_cr_block(kind) && !(alpha > 0.0 && std::isfinite(alpha))) throw ConfigError("metric.alpha must be positive");
    if (weighted && !(epsilon > 0.0)) throw ConfigError("metric.epsilon must be positive");
    if (is_clamped(kind) && clamped_tags.empty()) throw ConfigError("metric.clamped_tags must not be empty");
  }
};

// ---------------------------------------------------------------------------
// Element-level assembly

namespace detail {

// A row r of the local 6-vector (u1 at the three vertices, then u2) such that
// r . u_local is one first-order quantity of the field on the element.
using LocalRow = Eigen::Matrix<double, 6, 1>;
using LocalMatrix = Eigen::Matrix<double, 6, 6>;

inline LocalRow row_dx(const P1Element& e, int comp) {
  LocalRow r = LocalRow::Zero();
  for (int a = 0; a < 3; ++a) r[3 * comp + a] = e.grad[a].x();
  return r;
}
inline LocalRow row_dy(const P1Element& e, int comp) {
  LocalRow r = LocalRow::Zero();
  for (int a = 0; a < 3; ++a) r[3 * comp + a] = e.grad[a].y();
  return r;
}

// Sum of w * r r^T over the given rows, times the element area.
template <class RowsFn>
SparseMatrix assemble_rows(const TriMesh& mesh, RowsFn&& rows_of, const std::vector<double>* element_weight = nullptr) {
  const Index n = mesh.num_nodes();
  std::vector<LocalMatrix> local(mesh.triangles.size());
  parallel_for(mesh.num_triangles(), [&](Index t) {
    const P1Element e = p1_element(mesh, t);
    LocalMatrix m = LocalMatrix::Zero();
    for (const auto& [w, r] : rows_of(e)) m.noalias() += w * r * r.transpose();
    const double scale = e.area * (element_weight ? (*element_weight)[t] : 1.0);
    local[t] = scale * m;
  });
  std::vector<Triplet> trip;
  trip.reserve(36 * mesh.triangles.size());
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int p = 0; p < 6; ++p)
      for (int q = 0; q < 6; ++q) {
        const double v = local[t](p, q);
        if (v != 0.0) trip.emplace_back((p / 3) * n + tri[p % 3], (q / 3) * n + tri[q % 3], v);
      }
  }
  SparseMatrix A(2 * n, 2 * n);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

using WeightedRows = std::vector<std::pair<double, LocalRow>>;

}  // namespace detail

/// (grad u, grad v) over the mesh.
inline SparseMatrix assemble_h1(const TriMesh& mesh) {
  return detail::assemble_rows(mesh, [](const P1Element& e) {
    return detail::WeightedRows{{1.0, detail::row_dx(e, 0)},
                                {1.0, detail::row_dy(e, 0)},
                                {1.0, detail::row_dx(e, 1)},
                                {1.0, detail::row_dy(e, 1)}};
  });
}

/// (sym grad u, sym grad v).
inline SparseMatrix assemble_hsym(const TriMesh& mesh) {
  return detail::assemble_rows(mesh, [](const P1Element& e) {
    return detail::WeightedRows{{1.0, detail::row_dx(e, 0)},
                                {1.0, detail::row_dy(e, 1)},
                                {0.5, detail::row_dy(e, 0) + detail::row_dx(e, 1)}};
  });
}

/// (asym grad u, asym grad v); together with the symmetric part it sums to H1.
inline SparseMatrix assemble_asym(const TriMesh& mesh) {
  return detail::assemble_rows(mesh, [](const P1Element& e) {
    return detail::WeightedRows{{0.5, detail::row_dy(e, 0) - detail::row_dx(e, 1)}};
  });
}

/// mu(x) = sqrt(eps / (d(x) + eps)) at each triangle centroid, d the distance
/// to the mesh boundary.
inline std::vector<double> weight_mu(const TriMesh& mesh, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("weight epsilon must be positive");
  auto d = boundary_distance(mesh, triangle_centroids(mesh));
  for (auto& v : d) v = std::sqrt(epsilon / (v + epsilon));
  return d;
}

inline double weight_mu_value(double distance, double epsilon) { return std::sqrt(epsilon / (distance + epsilon)); }

/// (mu Bu, mu Bv) with B the Cauchy-Riemann operator
/// Bu = (-d_x u1 + d_y u2, d_y u1 + d_x u2). `mu` holds one value per triangle.
inline SparseMatrix assemble_cr(const TriMesh& mesh, const std::vector<double>& mu) {
  if (mu.size() != mesh.triangles.size()) throw SolverError("weight has wrong length");
  std::vector<double> mu2(mu.size());
  std::transform(mu.begin(), mu.end(), mu2.begin(), [](double m) { return m * m; });
  return detail::assemble_rows(
      mesh,
      [](const P1Element& e) {
        return detail::WeightedRows{{1.0, -detail::row_dx(e, 0) + detail::row_dy(e, 1)},
                                    {1.0, detail::row_dy(e, 0) + detail::row_dx(e, 1)}};
      },
      &mu2);
}

inline SparseMatrix assemble_cr(const TriMesh& mesh, bool weighted = false, double epsilon = 1.0) {
  if (!weighted) return assemble_cr(mesh, std::vector<double>(mesh.triangles.size(), 1.0));
  return assemble_cr(mesh, weight_mu(mesh, epsilon));
}

/// L2 norm of the Cauchy-Riemann operator applied to a nodal field.
inline double cr_residual(const TriMesh& mesh, const VectorXd& blocked) {
  double s = 0.0;
  const Index n = mesh.num_nodes();
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const P1Element e = p1_element(mesh, t);
    Mat2 du = Mat2::Zero();  // du(c, k) = d_k u_c
    for (int a = 0; a < 3; ++a) {
      const Index i = mesh.triangles[t][a];
      du.row(0) += blocked[i] * e.grad[a].transpose();
      du.row(1) += blocked[n + i] * e.grad[a].transpose();
    }
    const double b1 = -du(0, 0) + du(1, 1);
    const double b2 = du(0, 1) + du(1, 0);
    s += e.area * (b1 * b1 + b2 * b2);
  }
  return std::sqrt(s);
}

inline double cr_residual(const TriMesh& mesh, const VectorField& field) { return cr_residual(mesh, field.blocked()); }

namespace detail {

// Sum over elements of w (r . u_local)^2 times the area, without forming A.
template <class RowsFn>
double evaluate_rows(const TriMesh& mesh, RowsFn&& rows_of, const VectorXd& blocked) {
  const Index n = mesh.num_nodes();
  double s = 0.0;
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const P1Element e = p1_element(mesh, t);
    const auto& tri = mesh.triangles[t];
    LocalRow u;
    for (int p = 0; p < 6; ++p) u[p] = blocked[(p / 3) * n + tri[p % 3]];
    for (const auto& [w, r] : rows_of(e)) {
      const double v = r.dot(u);
      s += e.area * w * v * v;
    }
  }
  return s;
}

}  // namespace detail

/// u^T A u for the H1, symmetric and antisymmetric forms, evaluated per element.
inline double h1_form(const TriMesh& mesh, const VectorXd& blocked) {
  return detail::evaluate_rows(
      mesh,
      [](const P1Element& e) {
        return detail::WeightedRows{{1.0, detail::row_dx(e, 0)},
                                    {1.0, detail::row_dy(e, 0)},
                                    {1.0, detail::row_dx(e, 1)},
                                    {1.0, detail::row_dy(e, 1)}};
      },
      blocked);
}
inline double hsym_form(const TriMesh& mesh, const VectorXd& blocked) {
  return detail::evaluate_rows(
      mesh,
      [](const P1Element& e) {
        return detail::WeightedRows{{1.0, detail::row_dx(e, 0)},
                                    {1.0, detail::row_dy(e, 1)},
                                    {0.5, detail::row_dy(e, 0) + detail::row_dx(e, 1)}};
      },
      blocked);
}
inline double cr_form(const TriMesh& mesh, const VectorXd& blocked) {
  const double r = cr_residual(mesh, blocked);
  return r * r;
}

/// Constraint rows: the means of u1 and u2, plus the mean of
/// d_y u1 - d_x u2 when `rotation` is set.
inline SparseMatrix ring_constraints(const TriMesh& mesh, bool rotation) {
  const Index n = mesh.num_nodes();
  std::vector<Triplet> trip;
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const P1Element e = p1_element(mesh, t);
    const auto& tri = mesh.triangles[t];
    for (int a = 0; a < 3; ++a) {
      trip.emplace_back(0, tri[a], e.area / 3.0);
      trip.emplace_back(1, n + tri[a], e.area / 3.0);
      if (rotation) {
        trip.emplace_back(2, tri[a], e.area * e.grad[a].y());
        trip.emplace_back(2, n + tri[a], -e.area * e.grad[a].x());
      }
    }
  }
  SparseMatrix C(rotation ? 3 : 2, 2 * n);
  C.setFromTriplets(trip.begin(), trip.end());
  return C;
}

// ---------------------------------------------------------------------------
// Metric operator and Riesz solve

/// A symmetric metric on nodal displacement vectors together with the
/// constraints that make it definite and a factorization for Riesz solves.
class MetricOperator {
 public:
  MetricOperator() = default;

  MetricOperator(SparseMatrix A, SparseMatrix C) : A_(std::move(A)), C_(std::move(C)) { factor_saddle(); }

  MetricOperator(SparseMatrix A, std::vector<bool> fixed_dofs) : A_(std::move(A)), fixed_(std::move(fixed_dofs)) {
    factor_clamped();
  }

  const SparseMatrix& matrix() const { return A_; }
  const SparseMatrix& constraints() const { return C_; }
  const std::vector<bool>& fixed_dofs() const { return fixed_; }
  Index size() const { return A_.rows(); }
  bool clamped() const { return !fixed_.empty(); }

  double inner(const VectorXd& u, const VectorXd& v) const { return u.dot(A_ * v); }
  double norm(const VectorXd& u) const { return std::sqrt(std::max(0.0, inner(u, u))); }

  /// Solves (g, v)_A = dual . v for all admissible v. For constrained kinds the
  /// result satisfies C g = 0; for clamped kinds g vanishes on fixed dofs.
  VectorXd riesz(const VectorXd& dual) const {
    if (dual.size() != size()) throw SolverError("dual vector has the wrong length");
    if (clamped()) {
      VectorXd rhs(free_.size());
      for (std::size_t k = 0; k < free_.size(); ++k) rhs[k] = dual[free_[k]];
      VectorXd x = ldlt_->solve(rhs);
      if (ldlt_->info() != Eigen::Success) throw SolverError("clamped metric solve failed");
      for (int pass = 0; pass < kRefinementPasses; ++pass) x += ldlt_->solve(VectorXd(rhs - Aff_ * x));
      VectorXd g = VectorXd::Zero(size());
      for (std::size_t k = 0; k < free_.size(); ++k) g[free_[k]] = x[k];
      return g;
    }
    VectorXd rhs = VectorXd::Zero(size() + C_.rows());
    rhs.head(size()) = dual;
    VectorXd x = lu_->solve(rhs);
    if (lu_->info() != Eigen::Success) throw SolverError("saddle-point solve failed");
    for (int pass = 0; pass < kRefinementPasses; ++pass) x += lu_->solve(VectorXd(rhs - saddle_ * x));
    return x.head(size());
  }

  /// Zeroes the entries of a vector on fixed dofs (no-op for ring kinds).
  void restrict(VectorXd& v) const {
    for (std::size_t i = 0; i < fixed_.size(); ++i)
      if (fixed_[i]) v[i] = 0.0;
  }

 private:
  static constexpr int kRefinementPasses = 2;

  void factor_saddle() {
    const Index n = A_.rows(), m = C_.rows();
    std::vector<Triplet> trip;
    trip.reserve(A_.nonZeros() + 2 * C_.nonZeros());
    for (Index k = 0; k < A_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(A_, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (Index k = 0; k < C_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(C_, k); it; ++it) {
        trip.emplace_back(n + it.row(), it.col(), it.value());
        trip.emplace_back(it.col(), n + it.row(), it.value());
      }
    saddle_.resize(n + m, n + m);
    saddle_.setFromTriplets(trip.begin(), trip.end());
    saddle_.makeCompressed();
    lu_ = std::make_shared<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>>();
    lu_->compute(saddle_);
    if (lu_->info() != Eigen::Success) throw SolverError("singular saddle-point system (missing null-space constraint?)");
    const double logdet = lu_->logAbsDeterminant();
    if (!std::isfinite(logdet)) throw SolverError("singular saddle-point system (missing null-space constraint?)");
  }

  void factor_clamped() {
    const Index n = A_.rows();
    if (static_cast<Index>(fixed_.size()) != n) throw SolverError("fixed dof mask has the wrong length");
    std::vector<Index> map(n, -1);
    for (Index i = 0; i < n; ++i)
      if (!fixed_[i]) {
        map[i] = static_cast<Index>(free_.size());
        free_.push_back(i);
      }
    std::vector<Triplet> trip;
    for (Index k = 0; k < A_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(A_, k); it; ++it)
        if (map[it.row()] >= 0 && map[it.col()] >= 0) trip.emplace_back(map[it.row()], map[it.col()], it.value());
    Aff_.resize(free_.size(), free_.size());
    Aff_.setFromTriplets(trip.begin(), trip.end());
    ldlt_ = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>();
    ldlt_->compute(Aff_);
    if (ldlt_->info() != Eigen::Success) throw SolverError("clamped metric is not positive definite");
    const VectorXd d = ldlt_->vectorD();
    if (d.size() && !(d.minCoeff() > 0.0)) throw SolverError("clamped metric is not positive definite");
  }

  SparseMatrix A_;
  SparseMatrix C_;
  std::vector<bool> fixed_;
  std::vector<Index> free_;
  SparseMatrix saddle_, Aff_;
  std::shared_ptr<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>> lu_;
  std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> ldlt_;
};

/// Base part of the metric (H1 or symmetric gradient) without the CR block.
inline SparseMatrix assemble_base(const TriMesh& mesh, MetricKind kind) {
  return uses_hsym(kind) ? assemble_hsym(mesh) : assemble_h1(mesh);
}

inline std::vector<bool> clamped_dof_mask(const TriMesh& mesh, const std::vector<BoundaryTag>& tags) {
  const auto on = mesh.nodes_with_tags(tags);
  const Index n = mesh.num_nodes();
  std::vector<bool> fixed(2 * n, false);
  for (Index i = 0; i < n; ++i) fixed[i] = fixed[n + i] = on[i];
  return fixed;
}

inline MetricOperator build_metric(const TriMesh& mesh, const InnerProductSpec& spec) {
  spec.check();
  SparseMatrix A = assemble_base(mesh, spec.kind);
  if (has_cr_block(spec.kind)) A += (1.0 / spec.alpha) * assemble_cr(mesh, spec.weighted, spec.epsilon);
  A.makeCompressed();
  if (is_clamped(spec.kind)) {
    auto fixed = clamped_dof_mask(mesh, spec.clamped_tags);
    if (std::none_of(fixed.begin(), fixed.end(), [](bool b) { return b; }))
      throw SolverError("clamped metric: no boundary edge carries a clamped tag");
    return MetricOperator(std::move(A), std::move(fixed));
  }
  return MetricOperator(std::move(A), ring_constraints(mesh, uses_hsym(spec.kind)));
}

inline VectorField riesz_gradient(const MetricOperator& metric, const VectorXd& dual) {
  return VectorField::from_blocked(metric.riesz(dual));
}

/// Coordinate format MatrixMarket dump, one-based indices.
inline void write_matrix_market(const std::filesystem::path& path, const SparseMatrix& A) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << A.rows() << ' ' << A.cols() << ' ' << A.nonZeros() << '\n' << std::setprecision(17);
  for (Index k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it)
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
}

}  // namespace conformal
