#pragma once

#include "conformal/mesh.hpp"

#include <numbers>

namespace conformal {

namespace detail {

// Triangulates the band between two closed node loops that wind once around
// the origin in the same direction. Each step advances whichever loop has the
// smaller next parameter, so triangles never overlap.
inline void stitch_loops(std::vector<std::array<Index, 3>>& tris, const std::vector<Index>& inner, const std::vector<double>& inner_t,
                         const std::vector<Index>& outer, const std::vector<double>& outer_t) {
  const std::size_t ni = inner.size(), no = outer.size();
  const double period = 2.0 * std::numbers::pi;
  auto param = [&](const std::vector<double>& t, std::size_t k) {
    return t[k % t.size()] + period * static_cast<double>(k / t.size());
  };
  std::size_t i = 0, j = 0;
  while (i < ni || j < no) {
    bool advance_inner;
    if (i == ni) advance_inner = false;
    else if (j == no) advance_inner = true;
    else advance_inner = param(inner_t, i + 1) < param(outer_t, j + 1);
    if (advance_inner) {
      tris.push_back({inner[i % ni], outer[j % no], inner[(i + 1) % ni]});
      ++i;
    } else {
      tris.push_back({inner[i % ni], outer[j % no], outer[(j + 1) % no]});
      ++j;
    }
  }
}

inline void orient_ccw(TriMesh& mesh) {
  for (auto& tri : mesh.triangles)
    if (signed_area(mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]) < 0.0) std::swap(tri[1], tri[2]);
}

// Appends the edges of a closed loop, oriented so that the domain lies to the
// left when `domain_inside` is true.
inline void tag_loop(TriMesh& mesh, const std::vector<Index>& loop, BoundaryTag tag, bool domain_inside) {
  const std::size_t n = loop.size();
  for (std::size_t k = 0; k < n; ++k) {
    Index a = loop[k], b = loop[(k + 1) % n];
    if (!domain_inside) std::swap(a, b);
    mesh.boundary_edges.push_back({{a, b}, tag});
  }
}

}  // namespace detail

/// Concentric-ring triangulation of the disc of given radius centred at the
/// origin. Ring k carries 6k nodes; the outer ring is tagged GAMMA.
inline TriMesh gen_disc(double radius, int n_rings) {
  if (!(radius > 0.0)) throw MeshError("gen_disc: radius must be positive");
  if (n_rings < 1) throw MeshError("gen_disc: n_rings must be at least 1");
  TriMesh mesh;
  mesh.nodes.push_back(Vec2::Zero());
  std::vector<Index> prev{0};
  std::vector<double> prev_t{0.0};
  for (int k = 1; k <= n_rings; ++k) {
    const double r = radius * k / n_rings;
    const int count = 6 * k;
    std::vector<Index> ring;
    std::vector<double> ring_t;
    for (int j = 0; j < count; ++j) {
      const double t = 2.0 * std::numbers::pi * j / count;
      ring.push_back(mesh.num_nodes());
      ring_t.push_back(t);
      mesh.nodes.emplace_back(r * std::cos(t), r * std::sin(t));
    }
    if (k == 1) {
      for (int j = 0; j < count; ++j) mesh.triangles.push_back({0, ring[j], ring[(j + 1) % count]});
    } else {
      detail::stitch_loops(mesh.triangles, prev, prev_t, ring, ring_t);
    }
    prev = std::move(ring);
    prev_t = std::move(ring_t);
  }
  // Exact radius on the boundary.
  for (Index i : prev) mesh.nodes[i] *= radius / mesh.nodes[i].norm();
  detail::orient_ccw(mesh);
  detail::tag_loop(mesh, prev, BoundaryTag::Gamma, true);
  return mesh;
}

/// Annulus r_inner < |x| < r_outer with n_rings radial layers of nearly
/// equilateral triangles. Inner circle tagged GAMMA, outer GAMMA_INF.
inline TriMesh gen_annulus(double r_inner, double r_outer, int n_rings) {
  if (!(r_inner > 0.0) || !(r_outer > r_inner)) throw MeshError("gen_annulus: need 0 < r_inner < r_outer");
  if (n_rings < 1) throw MeshError("gen_annulus: n_rings must be at least 1");
  TriMesh mesh;
  const double dr = (r_outer - r_inner) / n_rings;
  const double spacing = dr * 2.0 / std::sqrt(3.0);
  std::vector<Index> prev, first;
  std::vector<double> prev_t;
  for (int k = 0; k <= n_rings; ++k) {
    const double r = r_inner + k * dr;
    const int count = std::max(6, static_cast<int>(std::lround(2.0 * std::numbers::pi * r / spacing)));
    const double shift = (k % 2) ? 0.5 : 0.0;
    std::vector<Index> ring;
    std::vector<double> ring_t;
    for (int j = 0; j < count; ++j) {
      const double t = 2.0 * std::numbers::pi * (j + shift) / count;
      ring.push_back(mesh.num_nodes());
      ring_t.push_back(t);
      mesh.nodes.emplace_back(r * std::cos(t), r * std::sin(t));
    }
    if (k > 0) detail::stitch_loops(mesh.triangles, prev, prev_t, ring, ring_t);
    if (k == 0) first = ring;
    prev = std::move(ring);
    prev_t = std::move(ring_t);
  }
  detail::orient_ccw(mesh);
  detail::tag_loop(mesh, first, BoundaryTag::Gamma, false);
  detail::tag_loop(mesh, prev, BoundaryTag::GammaInf, true);
  return mesh;
}

/// Structured rectangle [lo, hi] split into nx by ny cells, each cut along
/// alternating diagonals. All boundary edges carry `tag`.
inline TriMesh gen_rectangle(Vec2 lo, Vec2 hi, int nx, int ny, BoundaryTag tag = BoundaryTag::Gamma) {
  if (nx < 1 || ny < 1 || !(hi.x() > lo.x()) || !(hi.y() > lo.y())) throw MeshError("gen_rectangle: bad extent");
  TriMesh mesh;
  auto id = [&](int i, int j) { return static_cast<Index>(j * (nx + 1) + i); };
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      mesh.nodes.emplace_back(lo.x() + (hi.x() - lo.x()) * i / nx, lo.y() + (hi.y() - lo.y()) * j / ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Index a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      if ((i + j) % 2 == 0) {
        mesh.triangles.push_back({a, b, c});
        mesh.triangles.push_back({a, c, d});
      } else {
        mesh.triangles.push_back({a, b, d});
        mesh.triangles.push_back({b, c, d});
      }
    }
  std::vector<Index> loop;
  for (int i = 0; i < nx; ++i) loop.push_back(id(i, 0));
  for (int j = 0; j < ny; ++j) loop.push_back(id(nx, j));
  for (int i = nx; i > 0; --i) loop.push_back(id(i, ny));
  for (int j = ny; j > 0; --j) loop.push_back(id(0, j));
  detail::tag_loop(mesh, loop, tag, true);
  return mesh;
}

/// Channel (-half_width, half_width) x (-half_height, half_height) with a
/// circular hole, built as an O-grid of `per_ring` nodes per layer. The hole
/// is tagged GAMMA and the channel walls GAMMA_INF. Corners are nodes when
/// per_ring is a multiple of 10 for the default 3 x 2 channel.
inline TriMesh gen_channel(double hole_radius = 0.5, double half_width = 3.0, double half_height = 2.0,
                           int per_ring = 60) {
  if (!(hole_radius > 0.0) || hole_radius >= std::min(half_width, half_height))
    throw MeshError("gen_channel: hole must fit inside the channel");
  if (per_ring < 8 || per_ring % 2) throw MeshError("gen_channel: per_ring must be even and at least 8");
  const double perimeter = 4.0 * (half_width + half_height);
  const double two_pi = 2.0 * std::numbers::pi;

  // Rectangle point at arc-length fraction t, starting at (half_width, 0)
  // and running counterclockwise.
  auto wall = [&](double t) -> Vec2 {
    double s = std::fmod(t, 1.0) * perimeter;
    if (s < 0) s += perimeter;
    const double w = half_width, h = half_height;
    if (s <= h) return {w, s};
    s -= h;
    if (s <= 2 * w) return {w - s, h};
    s -= 2 * w;
    if (s <= 2 * h) return {-w, h - s};
    s -= 2 * h;
    if (s <= 2 * w) return {-w + s, -h};
    s -= 2 * w;
    return {w, -h + s};
  };
  auto hole = [&](double t) -> Vec2 { return hole_radius * Vec2(std::cos(two_pi * t), std::sin(two_pi * t)); };

  auto layer = [&](double w, double shift) {
    std::vector<Vec2> pts;
    for (int j = 0; j < per_ring; ++j) {
      const double t = (j + shift) / per_ring;
      pts.push_back((1.0 - w) * hole(t) + w * wall(t));
    }
    return pts;
  };
  auto loop_length = [](const std::vector<Vec2>& pts) {
    double s = 0;
    for (std::size_t k = 0; k < pts.size(); ++k) s += (pts[(k + 1) % pts.size()] - pts[k]).norm();
    return s;
  };
  double gap = 0;
  for (int j = 0; j < per_ring; ++j) gap += (wall(double(j) / per_ring) - hole(double(j) / per_ring)).norm();
  gap /= per_ring;

  // Blend parameters grow with the local tangential spacing so layers stay
  // close to equilateral; the layer count is then rounded to an even number
  // so the outer layer is unshifted.
  std::vector<double> natural{0.0};
  while (natural.back() < 1.0) {
    const double w = natural.back();
    const double step = 0.5 * std::sqrt(3.0) * loop_length(layer(w, 0.0)) / per_ring / gap;
    natural.push_back(w + step);
  }
  const std::size_t m = natural.size() - 1;
  const double frac = (1.0 - natural[m - 1]) / (natural[m] - natural[m - 1]);
  const double layers_exact = static_cast<double>(m - 1) + frac;
  const int layers = std::max(2, 2 * static_cast<int>(std::lround(layers_exact / 2.0)));
  auto blend_at = [&](double s) {
    if (s >= layers_exact) return 1.0;
    const std::size_t k = static_cast<std::size_t>(s);
    const double f = s - static_cast<double>(k);
    return std::min(1.0, natural[k] + f * (natural[k + 1] - natural[k]));
  };

  TriMesh mesh;
  std::vector<Index> prev, first;
  std::vector<double> prev_t;
  for (int k = 0; k <= layers; ++k) {
    const double w = (k == layers) ? 1.0 : blend_at(layers_exact * k / layers);
    const double shift = (k % 2) ? 0.5 : 0.0;
    const auto pts = layer(w, shift);
    std::vector<Index> ring;
    std::vector<double> ring_t;
    for (int j = 0; j < per_ring; ++j) {
      ring.push_back(mesh.num_nodes());
      ring_t.push_back(two_pi * (j + shift) / per_ring);
      mesh.nodes.push_back(pts[j]);
    }
    if (k > 0) detail::stitch_loops(mesh.triangles, prev, prev_t, ring, ring_t);
    if (k == 0) first = ring;
    prev = std::move(ring);
    prev_t = std::move(ring_t);
  }
  // Snap tiny round-off so the walls are exactly straight and mirror pairs match.
  for (auto& p : mesh.nodes)
    for (int c = 0; c < 2; ++c)
      if (std::abs(p[c]) < 1e-15) p[c] = 0.0;
  detail::orient_ccw(mesh);
  detail::tag_loop(mesh, first, BoundaryTag::Gamma, false);
  detail::tag_loop(mesh, prev, BoundaryTag::GammaInf, true);
  return mesh;
}

}  // namespace conformal
