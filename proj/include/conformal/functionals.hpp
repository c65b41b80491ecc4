#pragma once

#include "conformal/mesh.hpp"

#include <functional>
#include <string>

namespace conformal {

/// Scalar field on the plane with its gradient.
struct LevelsetFunction {
  std::string name;
  std::function<double(const Vec2&)> f;
  std::function<Vec2(const Vec2&)> grad;
};

/// Four-lobed clover: the product of four shifted ellipse distances, minus eps.
inline double clover_f(double x, double y, double a = 0.8, double b = 2.0, double eps = 0.001) {
  const double r1 = std::sqrt((x - a) * (x - a) + b * y * y) - 1.0;
  const double r2 = std::sqrt((x + a) * (x + a) + b * y * y) - 1.0;
  const double r3 = std::sqrt(b * x * x + (y - a) * (y - a)) - 1.0;
  const double r4 = std::sqrt(b * x * x + (y + a) * (y + a)) - 1.0;
  return r1 * r2 * r3 * r4 - eps;
}

inline Vec2 clover_grad(double x, double y, double a = 0.8, double b = 2.0) {
  const double s1 = std::sqrt((x - a) * (x - a) + b * y * y);
  const double s2 = std::sqrt((x + a) * (x + a) + b * y * y);
  const double s3 = std::sqrt(b * x * x + (y - a) * (y - a));
  const double s4 = std::sqrt(b * x * x + (y + a) * (y + a));
  const double r1 = s1 - 1.0, r2 = s2 - 1.0, r3 = s3 - 1.0, r4 = s4 - 1.0;
  // Gradients of each root; guarded at the (measure-zero) foci.
  auto safe = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  const Vec2 g1(safe(x - a, s1), safe(b * y, s1));
  const Vec2 g2(safe(x + a, s2), safe(b * y, s2));
  const Vec2 g3(safe(b * x, s3), safe(y - a, s3));
  const Vec2 g4(safe(b * x, s4), safe(y + a, s4));
  return g1 * (r2 * r3 * r4) + g2 * (r1 * r3 * r4) + g3 * (r1 * r2 * r4) + g4 * (r1 * r2 * r3);
}

inline LevelsetFunction clover(double a = 0.8, double b = 2.0, double eps = 0.001) {
  return {"clover", [=](const Vec2& p) { return clover_f(p.x(), p.y(), a, b, eps); },
          [=](const Vec2& p) { return clover_grad(p.x(), p.y(), a, b); }};
}

/// (|x| - 1)(|x| - r'), zero on the circles of radius 1 and r'.
inline double annulus_f(double x, double y, double r_prime) {
  const double r = std::hypot(x, y);
  return (r - 1.0) * (r - r_prime);
}

inline Vec2 annulus_grad(double x, double y, double r_prime) {
  const double r = std::hypot(x, y);
  if (r == 0.0) return Vec2::Zero();
  return ((2.0 * r - 1.0 - r_prime) / r) * Vec2(x, y);
}

inline LevelsetFunction annulus_levelset(double r_prime) {
  if (!(r_prime > 0.0 && r_prime < 1.0)) throw ConfigError("problem.r_prime must lie in (0, 1)");
  return {"annulus", [=](const Vec2& p) { return annulus_f(p.x(), p.y(), r_prime); },
          [=](const Vec2& p) { return annulus_grad(p.x(), p.y(), r_prime); }};
}

inline LevelsetFunction constant_one() {
  return {"one", [](const Vec2&) { return 1.0; }, [](const Vec2&) { return Vec2::Zero(); }};
}

inline LevelsetFunction coordinate(int axis) {
  return {axis == 0 ? "x" : "y", [axis](const Vec2& p) { return p[axis]; },
          [axis](const Vec2&) { return axis == 0 ? Vec2(1.0, 0.0) : Vec2(0.0, 1.0); }};
}

/// Dual vector over the 2N blocked displacement coefficients, labelled with
/// the functional that produced it.
struct ShapeDual {
  VectorXd values;
  std::string source;

  double pair(const VectorXd& blocked) const { return values.dot(blocked); }
};

/// Integral of f over the mesh with the edge-midpoint rule on each triangle.
inline double levelset_value(const TriMesh& mesh, const LevelsetFunction& lf) {
  std::vector<double> part(mesh.triangles.size());
  parallel_for(mesh.num_triangles(), [&](Index t) {
    const Vec2 a = mesh.vertex(t, 0), b = mesh.vertex(t, 1), c = mesh.vertex(t, 2);
    part[t] = signed_area(a, b, c) / 3.0 * (lf.f(0.5 * (a + b)) + lf.f(0.5 * (b + c)) + lf.f(0.5 * (c + a)));
  });
  double s = 0.0;
  for (double v : part) s += v;
  return s;
}

/// Shape derivative X -> integral of f div X + grad f . X, with the same
/// quadrature as levelset_value, so it is the exact derivative of the
/// discrete value under node motion.
inline ShapeDual levelset_shape_dual(const TriMesh& mesh, const LevelsetFunction& lf) {
  const Index n = mesh.num_nodes();
  using Local = Eigen::Matrix<double, 6, 1>;
  std::vector<Local> local(mesh.triangles.size());
  parallel_for(mesh.num_triangles(), [&](Index t) {
    const P1Element e = p1_element(mesh, t);
    Local l = Local::Zero();
    for (int m = 0; m < 3; ++m) {
      // Midpoint of edge (m, m+1): basis m and m+1 equal 1/2 there.
      const int i = m, j = (m + 1) % 3;
      const Vec2 mid = 0.5 * (mesh.vertex(t, i) + mesh.vertex(t, j));
      const double fv = lf.f(mid);
      const Vec2 gv = lf.grad(mid);
      const double w = e.area / 3.0;
      for (int a = 0; a < 3; ++a) {
        const double phi = (a == i || a == j) ? 0.5 : 0.0;
        for (int c = 0; c < 2; ++c) l[3 * c + a] += w * (fv * e.grad[a][c] + gv[c] * phi);
      }
    }
    local[t] = l;
  });
  ShapeDual d{VectorXd::Zero(2 * n), lf.name};
  for (Index t = 0; t < mesh.num_triangles(); ++t)
    for (int c = 0; c < 2; ++c)
      for (int a = 0; a < 3; ++a) d.values[c * n + mesh.triangles[t][a]] += local[t][3 * c + a];
  return d;
}

/// Largest relative gap between central differences of value_fn along each
/// direction and the dual pairing. The denominator is floored at 1e-12.
template <class ValueFn>
double fd_check(ValueFn&& value_fn, const VectorXd& dual, const TriMesh& mesh, const std::vector<VectorXd>& directions,
                double step) {
  double worst = 0.0;
  for (const auto& dir : directions) {
    const TriMesh plus = apply_displacement(mesh, VectorXd(step * dir));
    const TriMesh minus = apply_displacement(mesh, VectorXd(-step * dir));
    if (!validate(plus) || !validate(minus)) throw MeshError("finite-difference step inverts the mesh");
    const double fd = (value_fn(plus) - value_fn(minus)) / (2.0 * step);
    const double exact = dual.dot(dir);
    worst = std::max(worst, std::abs(fd - exact) / std::max(std::abs(exact), 1e-12));
  }
  return worst;
}

}  // namespace conformal
