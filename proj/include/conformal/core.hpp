#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace conformal {

using Index = std::ptrdiff_t;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using VectorXd = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Failure classes. The CLI maps each to a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class MeshError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class LineSearchError : public Error {
 public:
  using Error::Error;
};

/// Boundary classification used by meshes, clamping and Stokes data.
enum class BoundaryTag { None, Gamma, GammaInf };

inline std::string_view to_string(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::Gamma:
      return "GAMMA";
    case BoundaryTag::GammaInf:
      return "GAMMA_INF";
    case BoundaryTag::None:
      break;
  }
  return "NONE";
}

inline BoundaryTag boundary_tag_from_string(std::string_view name) {
  if (name == "GAMMA") return BoundaryTag::Gamma;
  if (name == "GAMMA_INF") return BoundaryTag::GammaInf;
  if (name == "NONE") return BoundaryTag::None;
  throw ConfigError("unknown boundary tag '" + std::string(name) + "'");
}

/// Worker count for element loops; CONFORMAL_DEFORM_THREADS caps it.
inline unsigned assembly_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CONFORMAL_DEFORM_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

/// Runs body(i) for i in [0, count). Work is split into contiguous chunks, so
/// callers that write to slot i and reduce afterwards stay bit-reproducible.
template <class Body>
void parallel_for(Index count, Body&& body) {
  const unsigned workers = assembly_threads();
  if (workers <= 1 || count < 2048) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::jthread> pool;
  const Index chunk = (count + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const Index lo = w * chunk;
    const Index hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (Index i = lo; i < hi; ++i) body(i);
    });
  }
}

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace conformal
