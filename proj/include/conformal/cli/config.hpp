#pragma once

#include "conformal/deformation_space.hpp"
#include "conformal/optimizer.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace conformal::cli {

enum class ProblemKind { Clover, Annulus, Stokes };

inline std::string_view to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::Clover: return "clover";
    case ProblemKind::Annulus: return "annulus";
    case ProblemKind::Stokes: return "stokes";
  }
  return "?";
}

struct ProblemConfig {
  ProblemKind kind = ProblemKind::Clover;
  double r_prime = 0.7;
  Vec2 u_inf{1.0, 0.0};
  double clover_a = 0.8, clover_b = 2.0, clover_eps = 0.001;
};

struct MeshConfig {
  std::string generator = "disc";  // disc | annulus | channel | rectangle | file
  std::filesystem::path file;
  double radius = 3.0;
  int rings = 18;
  double r_inner = 0.5, r_outer = 1.0;
  double hole_radius = 0.5, half_width = 3.0, half_height = 2.0;
  int per_ring = 50;
  Vec2 lo{0.0, 0.0}, hi{1.0, 1.0};
  int nx = 10, ny = 10;
};

enum class MetricFamily { Fem, Kernel };

struct MetricConfig {
  MetricFamily family = MetricFamily::Fem;
  InnerProductSpec fem;
  KernelSpec kernel;

  std::string label() const {
    if (family == MetricFamily::Kernel) return kernel.cr ? "CR_PLUS_KERNEL" : "KERNEL";
    return std::string(to_string(fem.kind));
  }
  bool has_cr() const { return family == MetricFamily::Kernel ? kernel.cr : has_cr_block(fem.kind); }
  double alpha() const { return family == MetricFamily::Kernel ? kernel.alpha : fem.alpha; }
};

struct ConstraintConfig {
  double rho = 10.0;
  int max_outer = 10;
  double tolerance = 1e-3;  // on the relative volume and width-relative barycentre residuals
  double shrink = 0.5;      // rho doubles when |c| does not drop below shrink * previous
};

struct SweepConfig {
  std::vector<double> alphas;
  bool baseline = true;  // also run the metric without its CR block
  int window = 5;
};

struct OutputConfig {
  std::filesystem::path directory = "out";
  int snapshot_every = 0;
};

struct RunConfig {
  std::string name = "run";
  ProblemConfig problem;
  MeshConfig mesh;
  MetricConfig metric;
  OptimizerOptions optimizer;
  ConstraintConfig constraints;
  std::optional<SweepConfig> sweep;
  OutputConfig output;
  std::int64_t seed = 0;
};

namespace detail {

// Reads one TOML table, remembering which keys were consumed so leftovers
// can be reported as unknown.
class TableReader {
 public:
  TableReader(const toml::table* table, std::string path) : table_(table), path_(std::move(path)) {}

  std::string key_path(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

  bool has(std::string_view key) const { return table_ && table_->contains(key); }

  const toml::node* node(std::string_view key) {
    if (!table_) return nullptr;
    used_.insert(std::string(key));
    return table_->get(key);
  }

  double number(std::string_view key, double fallback) {
    const auto* n = node(key);
    if (!n) return fallback;
    if (auto v = n->as_floating_point()) return v->get();
    if (auto v = n->as_integer()) return static_cast<double>(v->get());
    throw ConfigError(key_path(key) + " must be a number");
  }

  std::int64_t integer(std::string_view key, std::int64_t fallback) {
    const auto* n = node(key);
    if (!n) return fallback;
    if (auto v = n->as_integer()) return v->get();
    throw ConfigError(key_path(key) + " must be an integer");
  }

  bool boolean(std::string_view key, bool fallback) {
    const auto* n = node(key);
    if (!n) return fallback;
    if (auto v = n->as_boolean()) return v->get();
    throw ConfigError(key_path(key) + " must be a boolean");
  }

  std::string string(std::string_view key, std::string fallback) {
    const auto* n = node(key);
    if (!n) return fallback;
    if (auto v = n->as_string()) return v->get();
    throw ConfigError(key_path(key) + " must be a string");
  }

  std::vector<double> numbers(std::string_view key, std::vector<double> fallback) {
    const auto* n = node(key);
    if (!n) return fallback;
    const auto* arr = n->as_array();
    if (!arr) throw ConfigError(key_path(key) + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : *arr) {
      if (auto v = e.as_floating_point()) out.push_back(v->get());
      else if (auto i = e.as_integer()) out.push_back(static_cast<double>(i->get()));
      else throw ConfigError(key_path(key) + " must be an array of numbers");
    }
    return out;
  }

  std::vector<std::string> strings(std::string_view key, std::vector<std::string> fallback) {
    const auto* n = node(key);
    if (!n) return fallback;
    const auto* arr = n->as_array();
    if (!arr) throw ConfigError(key_path(key) + " must be an array of strings");
    std::vector<std::string> out;
    for (const auto& e : *arr) {
      if (auto v = e.as_string()) out.push_back(v->get());
      else throw ConfigError(key_path(key) + " must be an array of strings");
    }
    return out;
  }

  Vec2 vec2(std::string_view key, Vec2 fallback) {
    if (!has(key)) {
      node(key);
      return fallback;
    }
    const auto v = numbers(key, {});
    if (v.size() != 2) throw ConfigError(key_path(key) + " must have two entries");
    return {v[0], v[1]};
  }

  TableReader sub(std::string_view key) {
    const auto* n = node(key);
    if (!n) return {nullptr, key_path(key)};
    const auto* t = n->as_table();
    if (!t) throw ConfigError(key_path(key) + " must be a table");
    return {t, key_path(key)};
  }

  bool present() const { return table_ != nullptr; }

  void finish() const {
    if (!table_) return;
    for (auto&& [k, v] : *table_)
      if (!used_.count(std::string(k.str()))) throw ConfigError("unknown key " + key_path(k.str()));
  }

 private:
  const toml::table* table_;
  std::string path_;
  std::set<std::string> used_;
};

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

inline MetricKind metric_kind_from_string(const std::string& s) {
  for (auto k : {MetricKind::H1Ring, MetricKind::HsymRing, MetricKind::CrPlusH1, MetricKind::CrPlusHsym,
                 MetricKind::H1Clamped, MetricKind::CrPlusHsymClamped})
    if (s == to_string(k)) return k;
  throw ConfigError("metric.kind '" + s + "' is not a known inner product");
}

}  // namespace detail

/// Parses and validates a configuration. Relative mesh file paths are
/// resolved against base_dir.
inline RunConfig parse_config(const toml::table& root, const std::filesystem::path& base_dir = {}) {
  using detail::require;
  RunConfig cfg;
  detail::TableReader top(&root, "");
  cfg.name = top.string("name", cfg.name);
  require(!cfg.name.empty(), "name must not be empty");
  cfg.seed = top.integer("seed", cfg.seed);

  {
    auto t = top.sub("problem");
    require(t.present(), "problem table is required");
    const auto kind = t.string("kind", "");
    if (kind == "clover") cfg.problem.kind = ProblemKind::Clover;
    else if (kind == "annulus") cfg.problem.kind = ProblemKind::Annulus;
    else if (kind == "stokes") cfg.problem.kind = ProblemKind::Stokes;
    else throw ConfigError("problem.kind must be one of clover, annulus, stokes");
    if (cfg.problem.kind == ProblemKind::Annulus) {
      require(t.has("r_prime"), "problem.r_prime is required for the annulus problem");
      cfg.problem.r_prime = t.number("r_prime", cfg.problem.r_prime);
      require(cfg.problem.r_prime > 0.0 && cfg.problem.r_prime < 1.0, "problem.r_prime must lie in (0, 1)");
    }
    if (cfg.problem.kind == ProblemKind::Clover) {
      cfg.problem.clover_a = t.number("a", cfg.problem.clover_a);
      cfg.problem.clover_b = t.number("b", cfg.problem.clover_b);
      cfg.problem.clover_eps = t.number("eps", cfg.problem.clover_eps);
      require(cfg.problem.clover_b > 0.0, "problem.b must be positive");
    }
    if (cfg.problem.kind == ProblemKind::Stokes) {
      cfg.problem.u_inf = t.vec2("u_inf", cfg.problem.u_inf);
      require(cfg.problem.u_inf.allFinite(), "problem.u_inf must be finite");
    }
    t.finish();
  }

  {
    auto t = top.sub("mesh");
    require(t.present(), "mesh table is required");
    auto& m = cfg.mesh;
    if (t.has("file")) {
      m.generator = "file";
      m.file = t.string("file", "");
      require(!m.file.empty(), "mesh.file must not be empty");
      if (m.file.is_relative() && !base_dir.empty()) m.file = base_dir / m.file;
    } else {
      m.generator = t.string("generator", "");
      if (m.generator == "disc") {
        m.radius = t.number("radius", m.radius);
        m.rings = static_cast<int>(t.integer("rings", m.rings));
        require(m.radius > 0.0, "mesh.radius must be positive");
        require(m.rings >= 1, "mesh.rings must be at least 1");
      } else if (m.generator == "annulus") {
        m.r_inner = t.number("r_inner", m.r_inner);
        m.r_outer = t.number("r_outer", m.r_outer);
        m.rings = static_cast<int>(t.integer("rings", 10));
        require(m.r_inner > 0.0 && m.r_outer > m.r_inner, "mesh.r_inner and mesh.r_outer must satisfy 0 < r_inner < r_outer");
        require(m.rings >= 1, "mesh.rings must be at least 1");
      } else if (m.generator == "channel") {
        m.hole_radius = t.number("hole_radius", m.hole_radius);
        m.half_width = t.number("half_width", m.half_width);
        m.half_height = t.number("half_height", m.half_height);
        m.per_ring = static_cast<int>(t.integer("per_ring", m.per_ring));
        require(m.hole_radius > 0.0 && m.hole_radius < std::min(m.half_width, m.half_height),
                "mesh.hole_radius must fit inside the channel");
        require(m.per_ring >= 8 && m.per_ring % 2 == 0, "mesh.per_ring must be even and at least 8");
      } else if (m.generator == "rectangle") {
        m.lo = t.vec2("lo", m.lo);
        m.hi = t.vec2("hi", m.hi);
        m.nx = static_cast<int>(t.integer("nx", m.nx));
        m.ny = static_cast<int>(t.integer("ny", m.ny));
        require((m.hi - m.lo).minCoeff() > 0.0, "mesh.hi must exceed mesh.lo");
        require(m.nx >= 1 && m.ny >= 1, "mesh.nx and mesh.ny must be at least 1");
      } else {
        throw ConfigError("mesh.generator must be one of disc, annulus, channel, rectangle (or give mesh.file)");
      }
    }
    t.finish();
  }

  {
    auto t = top.sub("metric");
    require(t.present(), "metric table is required");
    const auto kind = t.string("kind", "");
    require(!kind.empty(), "metric.kind is required");
    auto& mc = cfg.metric;
    if (kind == "KERNEL" || kind == "CR_PLUS_KERNEL") {
      mc.family = MetricFamily::Kernel;
      mc.kernel.cr = kind == "CR_PLUS_KERNEL";
      mc.kernel.alpha = t.number("alpha", mc.kernel.alpha);
      mc.kernel.sigma_factor = t.number("sigma_factor", mc.kernel.sigma_factor);
      mc.kernel.sigma = t.number("sigma", mc.kernel.sigma);
      mc.kernel.weighted = t.boolean("weighted", mc.kernel.weighted);
      mc.kernel.epsilon = t.number("epsilon", mc.kernel.epsilon);
      require(mc.kernel.sigma >= 0.0, "metric.sigma must be positive");
      mc.kernel.check();
    } else {
      mc.family = MetricFamily::Fem;
      mc.fem.kind = detail::metric_kind_from_string(kind);
      mc.fem.alpha = t.number("alpha", mc.fem.alpha);
      mc.fem.weighted = t.boolean("weighted", mc.fem.weighted);
      mc.fem.epsilon = t.number("epsilon", mc.fem.epsilon);
      std::vector<BoundaryTag> tags;
      for (const auto& s : t.strings("clamped_tags", {"GAMMA_INF"})) {
        try {
          tags.push_back(boundary_tag_from_string(s));
        } catch (const Error&) {
          throw ConfigError("metric.clamped_tags has unknown tag '" + s + "'");
        }
      }
      mc.fem.clamped_tags = tags;
      mc.fem.check();
    }
    t.finish();
  }

  {
    auto t = top.sub("optimizer");
    auto& o = cfg.optimizer;
    o.max_iters = static_cast<int>(t.integer("max_iters", o.max_iters));
    o.g_tol = t.number("g_tol", o.g_tol);
    o.g_rtol = t.number("g_rtol", o.g_rtol);
    o.memory = static_cast<int>(t.integer("memory", o.memory));
    o.max_backtracks = static_cast<int>(t.integer("max_backtracks", o.max_backtracks));
    o.armijo_c1 = t.number("armijo_c1", o.armijo_c1);
    o.backtrack = t.number("backtrack", o.backtrack);
    o.first_step_max_disp = t.number("first_step_max_disp", o.first_step_max_disp);
    require(o.max_iters >= 0, "optimizer.max_iters must be non-negative");
    require(o.g_tol >= 0.0, "optimizer.g_tol must be non-negative");
    require(o.g_rtol >= 0.0, "optimizer.g_rtol must be non-negative");
    require(o.memory >= 0, "optimizer.memory must be non-negative");
    require(o.max_backtracks >= 1, "optimizer.max_backtracks must be at least 1");
    require(o.armijo_c1 > 0.0 && o.armijo_c1 < 1.0, "optimizer.armijo_c1 must lie in (0, 1)");
    require(o.backtrack > 0.0 && o.backtrack < 1.0, "optimizer.backtrack must lie in (0, 1)");
    require(o.first_step_max_disp >= 0.0, "optimizer.first_step_max_disp must be non-negative");
    t.finish();
  }

  {
    auto t = top.sub("constraints");
    if (t.present() && cfg.problem.kind != ProblemKind::Stokes)
      throw ConfigError("constraints applies to the stokes problem only");
    auto& c = cfg.constraints;
    c.rho = t.number("rho", c.rho);
    c.max_outer = static_cast<int>(t.integer("max_outer", c.max_outer));
    c.tolerance = t.number("tolerance", c.tolerance);
    c.shrink = t.number("shrink", c.shrink);
    require(c.rho > 0.0, "constraints.rho must be positive");
    require(c.max_outer >= 1, "constraints.max_outer must be at least 1");
    require(c.tolerance > 0.0, "constraints.tolerance must be positive");
    require(c.shrink > 0.0 && c.shrink < 1.0, "constraints.shrink must lie in (0, 1)");
    t.finish();
  }

  {
    auto t = top.sub("sweep");
    if (t.present()) {
      SweepConfig s;
      s.alphas = t.numbers("alphas", {});
      s.baseline = t.boolean("baseline", s.baseline);
      s.window = static_cast<int>(t.integer("window", s.window));
      for (double a : s.alphas) require(a > 0.0 && std::isfinite(a), "sweep.alphas must be positive");
      require(s.window >= 1, "sweep.window must be at least 1");
      require(cfg.metric.has_cr(), "sweep needs a metric with a CR block");
      cfg.sweep = s;
    }
    t.finish();
  }

  {
    auto t = top.sub("output");
    cfg.output.directory = t.string("directory", cfg.output.directory.string());
    cfg.output.snapshot_every = static_cast<int>(t.integer("snapshot_every", cfg.output.snapshot_every));
    require(cfg.output.snapshot_every >= 0, "output.snapshot_every must be non-negative");
    t.finish();
  }
  top.finish();

  if (cfg.problem.kind == ProblemKind::Stokes) {
    require(cfg.metric.family == MetricFamily::Fem && is_clamped(cfg.metric.fem.kind),
            "metric.kind must be a clamped inner product for the stokes problem");
  } else if (cfg.metric.family == MetricFamily::Fem) {
    require(!is_clamped(cfg.metric.fem.kind), "metric.kind must not be clamped for levelset problems");
  }
  return cfg;
}

inline RunConfig parse_config_string(std::string_view text, const std::filesystem::path& base_dir = {}) {
  try {
    return parse_config(toml::parse(text), base_dir);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config parse error at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_string(ss.str(), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace conformal::cli
