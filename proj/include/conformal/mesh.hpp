#pragma once

#include "conformal/core.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <utility>

namespace conformal {

struct BoundaryEdge {
  std::array<Index, 2> nodes{};
  BoundaryTag tag = BoundaryTag::None;

  friend bool operator==(const BoundaryEdge&, const BoundaryEdge&) = default;
};

/// Counterclockwise triangle mesh of a planar domain with tagged boundary.
struct TriMesh {
  std::vector<Vec2> nodes;
  std::vector<std::array<Index, 3>> triangles;
  std::vector<BoundaryEdge> boundary_edges;

  Index num_nodes() const { return static_cast<Index>(nodes.size()); }
  Index num_triangles() const { return static_cast<Index>(triangles.size()); }

  /// Per-node tag derived from the boundary edges. GAMMA_INF wins over GAMMA,
  /// which wins over NONE; interior nodes are NONE.
  std::vector<BoundaryTag> node_tags() const {
    std::vector<BoundaryTag> tags(nodes.size(), BoundaryTag::None);
    auto rank = [](BoundaryTag t) { return t == BoundaryTag::GammaInf ? 2 : t == BoundaryTag::Gamma ? 1 : 0; };
    for (const auto& e : boundary_edges)
      for (Index n : e.nodes)
        if (rank(e.tag) > rank(tags[n])) tags[n] = e.tag;
    return tags;
  }

  std::vector<bool> boundary_nodes() const {
    std::vector<bool> on(nodes.size(), false);
    for (const auto& e : boundary_edges) on[e.nodes[0]] = on[e.nodes[1]] = true;
    return on;
  }

  /// Nodes touched by a boundary edge whose tag is in `tags`.
  std::vector<bool> nodes_with_tags(const std::vector<BoundaryTag>& tags) const {
    std::vector<bool> on(nodes.size(), false);
    for (const auto& e : boundary_edges)
      if (std::find(tags.begin(), tags.end(), e.tag) != tags.end()) on[e.nodes[0]] = on[e.nodes[1]] = true;
    return on;
  }

  Vec2 vertex(Index t, int a) const { return nodes[triangles[t][a]]; }

  friend bool operator==(const TriMesh&, const TriMesh&) = default;
};

/// Nodal 2-vector coefficients of a P1 field. The blocked layout used by all
/// matrices is (u1 of every node, then u2 of every node).
struct VectorField {
  std::vector<Vec2> values;

  VectorField() = default;
  explicit VectorField(Index n) : values(n, Vec2::Zero()) {}
  explicit VectorField(std::vector<Vec2> v) : values(std::move(v)) {}

  Index size() const { return static_cast<Index>(values.size()); }

  VectorXd blocked() const {
    const Index n = size();
    VectorXd out(2 * n);
    for (Index i = 0; i < n; ++i) {
      out[i] = values[i].x();
      out[n + i] = values[i].y();
    }
    return out;
  }

  static VectorField from_blocked(const VectorXd& v) {
    const Index n = v.size() / 2;
    VectorField f(n);
    for (Index i = 0; i < n; ++i) f.values[i] = Vec2(v[i], v[n + i]);
    return f;
  }

  template <class Fn>
  static VectorField sample(const TriMesh& mesh, Fn&& fn) {
    VectorField f(mesh.num_nodes());
    for (Index i = 0; i < mesh.num_nodes(); ++i) f.values[i] = fn(mesh.nodes[i]);
    return f;
  }
};

inline double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) { return 0.5 * cross(b - a, c - a); }

inline double signed_area(const TriMesh& mesh, Index t) {
  return signed_area(mesh.vertex(t, 0), mesh.vertex(t, 1), mesh.vertex(t, 2));
}

/// Area and constant gradients of the barycentric coordinates of one triangle.
struct P1Element {
  double area = 0.0;
  std::array<Vec2, 3> grad;
};

inline P1Element p1_element(const TriMesh& mesh, Index t) {
  const Vec2& a = mesh.vertex(t, 0);
  const Vec2& b = mesh.vertex(t, 1);
  const Vec2& c = mesh.vertex(t, 2);
  const double twice = cross(b - a, c - a);
  if (!(std::abs(twice) > 0.0)) throw MeshError("degenerate triangle " + std::to_string(t));
  P1Element e;
  e.area = 0.5 * twice;
  // grad(lambda_i) is the inward normal of the opposite edge scaled by 1/(2|K|).
  const std::array<Vec2, 3> p{a, b, c};
  for (int i = 0; i < 3; ++i) {
    const Vec2 edge = p[(i + 2) % 3] - p[(i + 1) % 3];
    e.grad[i] = Vec2(-edge.y(), edge.x()) / twice;
  }
  return e;
}

inline double mesh_area(const TriMesh& mesh) {
  double s = 0.0;
  for (Index t = 0; t < mesh.num_triangles(); ++t) s += signed_area(mesh, t);
  return s;
}

inline std::pair<Vec2, Vec2> bounding_box(const TriMesh& mesh) {
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  for (const auto& p : mesh.nodes) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return {lo, hi};
}

inline double mean_edge_length(const TriMesh& mesh) {
  double s = 0.0;
  for (Index t = 0; t < mesh.num_triangles(); ++t)
    for (int a = 0; a < 3; ++a) s += (mesh.vertex(t, (a + 1) % 3) - mesh.vertex(t, a)).norm();
  return mesh.num_triangles() ? s / (3.0 * mesh.num_triangles()) : 0.0;
}

/// Checks the topological invariants: valid indices, every boundary edge on
/// exactly one triangle, every other edge on at most two, and every edge used
/// by one triangle listed as a boundary edge. Throws MeshError.
inline void check_topology(const TriMesh& mesh) {
  const Index n = mesh.num_nodes();
  std::map<std::pair<Index, Index>, int> count;
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int a = 0; a < 3; ++a) {
      if (tri[a] < 0 || tri[a] >= n)
        throw MeshError("triangle " + std::to_string(t) + " references missing node " + std::to_string(tri[a]));
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw MeshError("triangle " + std::to_string(t) + " repeats a node");
    for (int a = 0; a < 3; ++a) {
      Index i = tri[a], j = tri[(a + 1) % 3];
      ++count[{std::min(i, j), std::max(i, j)}];
    }
  }
  std::map<std::pair<Index, Index>, int> listed;
  for (const auto& e : mesh.boundary_edges) {
    const Index i = e.nodes[0], j = e.nodes[1];
    if (i < 0 || j < 0 || i >= n || j >= n) throw MeshError("boundary edge references missing node");
    const auto key = std::make_pair(std::min(i, j), std::max(i, j));
    auto it = count.find(key);
    if (it == count.end() || it->second != 1)
      throw MeshError("boundary edge (" + std::to_string(i) + "," + std::to_string(j) +
                      ") does not belong to exactly one triangle");
    ++listed[key];
  }
  for (const auto& [key, c] : count) {
    if (c > 2) throw MeshError("edge shared by more than two triangles");
    if (c == 1 && !listed.count(key))
      throw MeshError("edge (" + std::to_string(key.first) + "," + std::to_string(key.second) +
                      ") lies on the boundary but is not tagged");
  }
}

// ---------------------------------------------------------------------------
// Quality

/// Per-triangle eta(K) = h(K) / (2 rho(K)), where h is the diameter of the
/// smallest enclosing ball and rho the diameter of the inscribed ball.
struct ElementQuality {
  std::vector<double> eta;

  double min() const { return eta.empty() ? 0.0 : *std::min_element(eta.begin(), eta.end()); }
  double max() const { return eta.empty() ? 0.0 : *std::max_element(eta.begin(), eta.end()); }
  double fraction_above(double threshold) const {
    if (eta.empty()) return 0.0;
    const auto n = std::count_if(eta.begin(), eta.end(), [&](double e) { return e > threshold; });
    return static_cast<double>(n) / static_cast<double>(eta.size());
  }
};

inline double triangle_quality(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double la = (b - c).norm(), lb = (c - a).norm(), lc = (a - b).norm();
  const double area = std::abs(signed_area(a, b, c));
  if (!(area > 0.0)) return std::numeric_limits<double>::infinity();
  const double longest = std::max({la, lb, lc});
  // Acute triangles are enclosed by their circumcircle; otherwise the longest
  // edge is a diameter of the smallest enclosing ball.
  const double sq = la * la + lb * lb + lc * lc - longest * longest;
  const double h = (longest * longest < sq) ? la * lb * lc / (2.0 * area) : longest;
  const double inradius = 2.0 * area / (la + lb + lc);
  return h / (4.0 * inradius);
}

inline ElementQuality element_quality(const TriMesh& mesh) {
  ElementQuality q;
  q.eta.resize(mesh.triangles.size());
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const double e = triangle_quality(mesh.vertex(t, 0), mesh.vertex(t, 1), mesh.vertex(t, 2));
    if (!std::isfinite(e)) throw MeshError("degenerate triangle " + std::to_string(t) + " has zero area");
    q.eta[t] = e;
  }
  return q;
}

struct QualityHistogram {
  std::vector<double> edges;
  std::vector<Index> counts;  // counts[i] covers [edges[i], edges[i+1])
};

/// Values below the first edge land in the first bin and values at or above
/// the last edge in the last bin, so counts always sum to the element count.
inline QualityHistogram quality_histogram(const ElementQuality& quality, std::vector<double> edges) {
  if (edges.size() < 2) throw ConfigError("histogram needs at least two bin edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw ConfigError("histogram bin edges must be increasing");
  QualityHistogram h{std::move(edges), {}};
  const std::size_t bins = h.edges.size() - 1;
  h.counts.assign(bins, 0);
  for (double e : quality.eta) {
    const auto it = std::upper_bound(h.edges.begin(), h.edges.end(), e);
    std::size_t bin = it == h.edges.begin() ? 0 : static_cast<std::size_t>(it - h.edges.begin()) - 1;
    bin = std::min(bin, bins - 1);
    ++h.counts[bin];
  }
  return h;
}

inline std::vector<double> default_histogram_edges() {
  std::vector<double> e;
  for (int i = 0; i <= 15; ++i) e.push_back(1.0 + 0.1 * i);
  e.push_back(3.0);
  e.push_back(std::numeric_limits<double>::infinity());
  return e;
}

inline void write_histogram_csv(std::ostream& os, const QualityHistogram& h) {
  os << "bin_lo,bin_hi,count\n";
  os.precision(17);
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    os << h.edges[i] << ',';
    if (std::isinf(h.edges[i + 1])) os << "inf";
    else os << h.edges[i + 1];
    os << ',' << h.counts[i] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Deformation and validity

inline TriMesh apply_displacement(const TriMesh& mesh, const VectorField& field) {
  if (field.size() != mesh.num_nodes())
    throw MeshError("displacement has " + std::to_string(field.size()) + " values for " +
                    std::to_string(mesh.num_nodes()) + " nodes");
  TriMesh out = mesh;
  for (Index i = 0; i < mesh.num_nodes(); ++i) out.nodes[i] += field.values[i];
  return out;
}

/// Same as above with a blocked coefficient vector.
inline TriMesh apply_displacement(const TriMesh& mesh, const VectorXd& blocked) {
  if (blocked.size() != 2 * mesh.num_nodes()) throw MeshError("displacement vector has the wrong length");
  TriMesh out = mesh;
  const Index n = mesh.num_nodes();
  for (Index i = 0; i < n; ++i) out.nodes[i] += Vec2(blocked[i], blocked[n + i]);
  return out;
}

struct ValidationReport {
  bool ok = true;
  double tolerance = 0.0;
  std::vector<Index> bad_triangles;  // inverted or degenerate, ascending

  explicit operator bool() const { return ok; }

  std::string describe() const {
    if (ok) return "ok";
    std::ostringstream s;
    s << bad_triangles.size() << " inverted or degenerate triangle(s); first is " << bad_triangles.front();
    return s.str();
  }
};

/// A triangle passes when its signed area exceeds rel_tol times the area of
/// the mesh bounding box.
inline ValidationReport validate(const TriMesh& mesh, double rel_tol = 1e-14) {
  ValidationReport r;
  const auto [lo, hi] = bounding_box(mesh);
  const Vec2 ext = hi - lo;
  r.tolerance = rel_tol * std::max(ext.x() * ext.y(), 0.0);
  for (Index t = 0; t < mesh.num_triangles(); ++t) {
    const double a = signed_area(mesh, t);
    if (!(a > r.tolerance)) r.bad_triangles.push_back(t);
  }
  r.ok = r.bad_triangles.empty();
  return r;
}

// ---------------------------------------------------------------------------
// Distance to the boundary

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double s = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  return (p - (a + s * ab)).norm();
}

inline std::vector<double> boundary_distance(const TriMesh& mesh, const std::vector<Vec2>& points) {
  std::vector<double> d(points.size(), std::numeric_limits<double>::infinity());
  parallel_for(static_cast<Index>(points.size()), [&](Index i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : mesh.boundary_edges)
      best = std::min(best, point_segment_distance(points[i], mesh.nodes[e.nodes[0]], mesh.nodes[e.nodes[1]]));
    d[i] = best;
  });
  return d;
}

inline std::vector<Vec2> triangle_centroids(const TriMesh& mesh) {
  std::vector<Vec2> c(mesh.triangles.size());
  for (Index t = 0; t < mesh.num_triangles(); ++t)
    c[t] = (mesh.vertex(t, 0) + mesh.vertex(t, 1) + mesh.vertex(t, 2)) / 3.0;
  return c;
}

}  // namespace conformal
