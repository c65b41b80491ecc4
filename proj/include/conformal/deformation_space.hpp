#pragma once

#include "conformal/fem_metric.hpp"
#include "conformal/rkhs_metric.hpp"

#include <concepts>

namespace conformal {

/// A linear space of deformations of the reference mesh with a Hilbert
/// metric. Coefficients live in the space; to_nodal maps them to blocked P1
/// displacements and pull_back maps nodal duals back to coefficient duals.
template <class S>
concept DeformationSpace = requires(const S& s, const VectorXd& v) {
  { s.dim() } -> std::convertible_to<Index>;
  { s.to_nodal(v) } -> std::convertible_to<VectorXd>;
  { s.pull_back(v) } -> std::convertible_to<VectorXd>;
  { s.riesz(v) } -> std::convertible_to<VectorXd>;
  { s.inner(v, v) } -> std::convertible_to<double>;
};

/// P1 nodal displacements with a finite-element metric.
class FemSpace {
 public:
  explicit FemSpace(MetricOperator metric) : metric_(std::move(metric)) {}
  FemSpace(const TriMesh& reference, const InnerProductSpec& spec) : metric_(build_metric(reference, spec)) {}

  Index dim() const { return metric_.size(); }
  VectorXd to_nodal(const VectorXd& c) const { return c; }
  VectorXd pull_back(const VectorXd& nodal_dual) const {
    VectorXd d = nodal_dual;
    metric_.restrict(d);
    return d;
  }
  VectorXd riesz(const VectorXd& dual) const { return metric_.riesz(dual); }
  double inner(const VectorXd& a, const VectorXd& b) const { return metric_.inner(a, b); }
  const MetricOperator& metric() const { return metric_; }

 private:
  MetricOperator metric_;
};

struct KernelSpec {
  double alpha = 1e-4;
  bool cr = true;            // add (1/alpha)(1/n) sum |B u(p)|^2 to the kernel norm
  double sigma_factor = 4.0; // sigma = factor * mean edge length
  double sigma = 0.0;        // used instead when positive
  bool weighted = false;
  double epsilon = 0.05;

  void check() const {
    if (cr && !(alpha > 0.0 && std::isfinite(alpha))) throw ConfigError("metric.alpha must be positive");
    if (!(sigma_factor > 0.0) && !(sigma > 0.0)) throw ConfigError("metric.sigma must be positive");
    if (weighted && !(epsilon > 0.0)) throw ConfigError("metric.epsilon must be positive");
  }
};

/// Wendland kernel expansions centred at the reference nodes. Metric is
/// K (+ (1/(alpha n)) B^T W B when the CR term is on).
class KernelSpace {
 public:
  KernelSpace(const TriMesh& reference, const KernelSpec& spec) {
    spec.check();
    model_ = KernelModel::on_mesh(reference, spec.sigma_factor);
    if (spec.sigma > 0.0) model_.sigma = spec.sigma;
    if (spec.weighted) {
      const auto d = boundary_distance(reference, model_.cr_points);
      model_.mu.resize(d.size());
      for (std::size_t i = 0; i < d.size(); ++i) model_.mu[i] = weight_mu_value(d[i], spec.epsilon);
    }
    system_ = assemble_kernel_system(model_);
    const SparseMatrix I = interpolation_matrix(model_.centers, model_.sigma, reference.nodes);
    interp_ = detail::block_diag2(I);
    interp_t_ = interp_.transpose();
    metric_ = system_.K;
    if (spec.cr) metric_ += (1.0 / spec.alpha) * system_.cr_energy();
    metric_.makeCompressed();
    llt_ = std::make_shared<Eigen::SimplicialLLT<SparseMatrix>>(metric_);
    if (llt_->info() != Eigen::Success) throw SolverError("kernel metric Cholesky failed");
  }

  Index dim() const { return metric_.rows(); }
  VectorXd to_nodal(const VectorXd& c) const { return interp_ * c; }
  VectorXd pull_back(const VectorXd& nodal_dual) const { return interp_t_ * nodal_dual; }
  VectorXd riesz(const VectorXd& dual) const {
    VectorXd g = llt_->solve(dual);
    if (llt_->info() != Eigen::Success) throw SolverError("kernel metric solve failed");
    return g;
  }
  double inner(const VectorXd& a, const VectorXd& b) const { return a.dot(metric_ * b); }

  const KernelModel& model() const { return model_; }
  const KernelSystem& system() const { return system_; }
  const SparseMatrix& metric_matrix() const { return metric_; }

 private:
  KernelModel model_;
  KernelSystem system_;
  SparseMatrix interp_, interp_t_;
  SparseMatrix metric_;
  std::shared_ptr<Eigen::SimplicialLLT<SparseMatrix>> llt_;
};

static_assert(DeformationSpace<FemSpace>);
static_assert(DeformationSpace<KernelSpace>);

}  // namespace conformal
