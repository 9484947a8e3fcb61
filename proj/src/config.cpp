#include "heatlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "heatlab/unique_continuation.hpp"

namespace heatlab {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw config_error(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw config_error("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw config_error(where + "." + key + " has the wrong type");
  }
}

Point read_point(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || j.size() > 2) throw config_error(where + " must be a list of 1 or 2 numbers");
  Point p{};
  for (std::size_t a = 0; a < j.size(); ++a) {
    if (!j[a].is_number()) throw config_error(where + " must be a list of 1 or 2 numbers");
    p[a] = j[a].get<double>();
  }
  return p;
}

json point_json(const Point& p) { return json::array({p[0], p[1]}); }

Face parse_face(const std::string& s) {
  if (s == "x_low") return Face::x_low;
  if (s == "x_high") return Face::x_high;
  if (s == "y_low") return Face::y_low;
  if (s == "y_high") return Face::y_high;
  throw config_error("unknown face '" + s + "'");
}

std::string face_name(Face f) {
  switch (f) {
    case Face::x_low:
      return "x_low";
    case Face::x_high:
      return "x_high";
    case Face::y_low:
      return "y_low";
    case Face::y_high:
      return "y_high";
  }
  return "x_low";
}

template <class F>
void collect(std::vector<std::string>& out, const std::string& prefix, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    out.push_back(prefix + e.what());
  }
}

bool positive_list(const std::vector<double>& v) {
  if (v.empty()) return false;
  for (double x : v) {
    if (!(x > 0) || !std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

RegionSpec region_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "whole") return region::Whole{};
    throw config_error("unknown region '" + j.get<std::string>() + "'");
  }
  if (!j.is_object() || j.size() != 1) throw config_error("a region is an object with exactly one kind key");
  const auto& [kind, body] = *j.items().begin();
  if (kind == "ball") {
    reject_unknown(body, {"center", "radius"}, "ball");
    region::Ball b;
    b.center = read_point(body.at("center"), "ball.center");
    read(body, "radius", b.radius, "ball");
    return b;
  }
  if (kind == "box" || kind == "boundary_box") {
    reject_unknown(body, {"low", "high"}, kind);
    const Point lo = read_point(body.at("low"), kind + ".low");
    const Point hi = read_point(body.at("high"), kind + ".high");
    if (kind == "box") return region::Box{lo, hi};
    return region::BoundaryBox{lo, hi};
  }
  if (kind == "band") {
    reject_unknown(body, {"delta", "near"}, "band");
    region::Band b;
    read(body, "delta", b.delta, "band");
    read(body, "near", b.near, "band");
    return b;
  }
  if (kind == "whole") return region::Whole{};
  if (kind == "faces") {
    if (!body.is_array()) throw config_error("faces must be a list of face names");
    region::Faces f;
    for (const auto& s : body) f.faces.push_back(parse_face(s.get<std::string>()));
    return f;
  }
  throw config_error("unknown region kind '" + kind + "'");
}

json region_to_json(const RegionSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, region::Ball>) {
          return {{"ball", {{"center", point_json(s.center)}, {"radius", s.radius}}}};
        } else if constexpr (std::is_same_v<T, region::Box>) {
          return {{"box", {{"low", point_json(s.low)}, {"high", point_json(s.high)}}}};
        } else if constexpr (std::is_same_v<T, region::BoundaryBox>) {
          return {{"boundary_box", {{"low", point_json(s.low)}, {"high", point_json(s.high)}}}};
        } else if constexpr (std::is_same_v<T, region::Band>) {
          return {{"band", {{"delta", s.delta}, {"near", s.near}}}};
        } else if constexpr (std::is_same_v<T, region::Faces>) {
          json f = json::array();
          for (Face face : s.faces) f.push_back(face_name(face));
          return {{"faces", f}};
        } else {
          return "whole";
        }
      },
      spec);
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  reject_unknown(j, {"grid", "potential", "admissibility", "masks", "window", "stability", "ensemble", "params",
                     "seed", "output"},
                 "config");
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    reject_unknown(g, {"dim", "cells", "extents"}, "grid");
    read(g, "dim", c.grid.dim, "grid");
    read(g, "cells", c.grid.cells, "grid");
    read(g, "extents", c.grid.extents, "grid");
  }
  if (j.contains("potential")) {
    const json& p = j.at("potential");
    reject_unknown(p, {"kind", "amplitude", "count", "gamma", "seed"}, "potential");
    read(p, "kind", c.potential.kind, "potential");
    read(p, "amplitude", c.potential.amplitude, "potential");
    read(p, "count", c.potential.count, "potential");
    read(p, "gamma", c.potential.gamma, "potential");
    read(p, "seed", c.potential.seed, "potential");
  }
  if (j.contains("admissibility")) {
    const json& a = j.at("admissibility");
    reject_unknown(a, {"vartheta", "sigma"}, "admissibility");
    if (a.contains("vartheta") && !a.at("vartheta").is_null()) c.vartheta = a.at("vartheta").get<double>();
    if (a.contains("sigma") && !a.at("sigma").is_null()) c.sigma = a.at("sigma").get<double>();
  }
  if (j.contains("masks")) {
    const json& m = j.at("masks");
    reject_unknown(m, {"omega", "gamma0", "gamma1", "omega0"}, "masks");
    if (m.contains("omega")) c.masks.omega = region_from_json(m.at("omega"));
    if (m.contains("gamma0")) c.masks.gamma0 = region_from_json(m.at("gamma0"));
    if (m.contains("gamma1")) c.masks.gamma1 = region_from_json(m.at("gamma1"));
    if (m.contains("omega0")) c.masks.omega0 = region_from_json(m.at("omega0"));
  }
  if (j.contains("window")) {
    const json& w = j.at("window");
    reject_unknown(w, {"t0", "t_star", "epsilon", "t_frak"}, "window");
    read(w, "t0", c.window.t0, "window");
    read(w, "t_star", c.window.t_star, "window");
    read(w, "epsilon", c.window.epsilon, "window");
    read(w, "t_frak", c.window.t_frak, "window");
  }
  if (j.contains("stability")) {
    const json& s = j.at("stability");
    reject_unknown(s, {"s", "beta", "rho0", "rho_hat", "c_hat", "varsigma"}, "stability");
    read(s, "s", c.stability.s, "stability");
    read(s, "beta", c.stability.beta, "stability");
    read(s, "rho0", c.stability.rho0, "stability");
    read(s, "rho_hat", c.stability.rho_hat, "stability");
    read(s, "c_hat", c.stability.c_hat, "stability");
    read(s, "varsigma", c.stability.varsigma, "stability");
  }
  if (j.contains("ensemble")) {
    const json& e = j.at("ensemble");
    reject_unknown(e, {"samples", "modes", "time_steps", "probes"}, "ensemble");
    read(e, "samples", c.ensemble.samples, "ensemble");
    read(e, "modes", c.ensemble.modes, "ensemble");
    read(e, "time_steps", c.ensemble.time_steps, "ensemble");
    read(e, "probes", c.ensemble.probes, "ensemble");
  }
  if (j.contains("params")) {
    const json& p = j.at("params");
    reject_unknown(p, {"spectrum_modes", "semigroup_times", "distinguish_deltas", "reconstruct_knots",
                       "reconstruct_tau", "stability_lambdas", "quc_rhos", "three_ball_radii", "exponent_side",
                       "chain_deltas", "chain_pairs"},
                   "params");
    ExperimentParams& q = c.params;
    read(p, "spectrum_modes", q.spectrum_modes, "params");
    read(p, "semigroup_times", q.semigroup_times, "params");
    read(p, "distinguish_deltas", q.distinguish_deltas, "params");
    read(p, "reconstruct_knots", q.reconstruct_knots, "params");
    read(p, "reconstruct_tau", q.reconstruct_tau, "params");
    read(p, "stability_lambdas", q.stability_lambdas, "params");
    read(p, "quc_rhos", q.quc_rhos, "params");
    read(p, "three_ball_radii", q.three_ball_radii, "params");
    read(p, "exponent_side", q.exponent_side, "params");
    read(p, "chain_deltas", q.chain_deltas, "params");
    read(p, "chain_pairs", q.chain_pairs, "params");
  }
  read(j, "seed", c.seed, "config");
  read(j, "output", c.output, "config");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw config_error("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["grid"] = {{"dim", c.grid.dim}, {"cells", c.grid.cells}, {"extents", c.grid.extents}};
  j["potential"] = {{"kind", c.potential.kind},
                    {"amplitude", c.potential.amplitude},
                    {"count", c.potential.count},
                    {"gamma", c.potential.gamma},
                    {"seed", c.potential.seed}};
  j["admissibility"] = {{"vartheta", c.vartheta ? json(*c.vartheta) : json(nullptr)},
                        {"sigma", c.sigma ? json(*c.sigma) : json(nullptr)}};
  j["masks"] = {{"omega", region_to_json(c.masks.omega)},
                {"gamma0", region_to_json(c.masks.gamma0)},
                {"gamma1", region_to_json(c.masks.gamma1)},
                {"omega0", region_to_json(c.masks.omega0)}};
  j["window"] = {{"t0", c.window.t0}, {"t_star", c.window.t_star}, {"epsilon", c.window.epsilon},
                 {"t_frak", c.window.t_frak}};
  j["stability"] = {{"s", c.stability.s},         {"beta", c.stability.beta},   {"rho0", c.stability.rho0},
                    {"rho_hat", c.stability.rho_hat}, {"c_hat", c.stability.c_hat}, {"varsigma", c.stability.varsigma}};
  j["ensemble"] = {{"samples", c.ensemble.samples},
                   {"modes", c.ensemble.modes},
                   {"time_steps", c.ensemble.time_steps},
                   {"probes", c.ensemble.probes}};
  const ExperimentParams& q = c.params;
  j["params"] = {{"spectrum_modes", q.spectrum_modes},       {"semigroup_times", q.semigroup_times},
                 {"distinguish_deltas", q.distinguish_deltas}, {"reconstruct_knots", q.reconstruct_knots},
                 {"reconstruct_tau", q.reconstruct_tau},     {"stability_lambdas", q.stability_lambdas},
                 {"quc_rhos", q.quc_rhos},                   {"three_ball_radii", q.three_ball_radii},
                 {"exponent_side", q.exponent_side},         {"chain_deltas", q.chain_deltas},
                 {"chain_pairs", q.chain_pairs}};
  j["seed"] = c.seed;
  j["output"] = c.output;
  return j;
}

Grid ExperimentConfig::build_grid() const {
  std::vector<std::pair<double, double>> ext = grid.extents;
  if (ext.empty()) ext.assign(static_cast<std::size_t>(std::max(grid.dim, 0)), {0.0, 1.0});
  if (static_cast<int>(ext.size()) != grid.dim) throw config_error("grid.extents needs one pair per dimension");
  return heatlab::build_grid(grid.dim, ext, std::vector<int>(ext.size(), grid.cells));
}

Potential ExperimentConfig::build_potential(const Grid& g) const {
  if (potential.kind == "zero") return zero_potential(g);
  if (potential.kind == "constant") return constant_potential(g, potential.amplitude);
  if (potential.kind == "rough") {
    if (potential.seed < 0) throw config_error("potential.seed must be nonnegative");
    return rough_potential(g, {potential.count, potential.amplitude, potential.gamma,
                               static_cast<std::uint64_t>(potential.seed)});
  }
  throw config_error("unknown potential kind '" + potential.kind + "'");
}

StabilityConfig ExperimentConfig::stability_for(const Grid& g) const {
  StabilityConfig s = stability;
  s.dim = g.dim();
  s.diameter = g.diameter();
  s.window = window;
  return s;
}

std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> v;
  if (c.seed < 0) v.push_back("seed must be nonnegative");
  if (c.potential.seed < 0) v.push_back("potential.seed must be nonnegative");
  if (c.output.empty()) v.push_back("output directory must be nonempty");

  std::optional<Grid> grid;
  collect(v, "grid: ", [&] { grid = c.build_grid(); });
  for (const std::string& w : c.window.violations()) v.push_back(w);

  if (grid) {
    for (const std::string& w : c.stability_for(*grid).violations()) {
      if (w.rfind("window:", 0) != 0) v.push_back("stability: " + w);
    }
    std::optional<Potential> pot;
    collect(v, "potential: ", [&] { pot = c.build_potential(*grid); });
    if (pot && !pot->values.allFinite()) v.push_back("potential: non-finite values");

    auto check_mask = [&](const RegionSpec& spec, MaskKind kind, const std::string& name) {
      collect(v, "masks." + name + ": ", [&] {
        const Mask m = make_mask(*grid, spec);
        if (m.kind != kind) {
          throw config_error(kind == MaskKind::interior ? "must be an interior region" : "must be a boundary region");
        }
      });
    };
    check_mask(c.masks.omega, MaskKind::interior, "omega");
    check_mask(c.masks.gamma0, MaskKind::boundary, "gamma0");
    check_mask(c.masks.gamma1, MaskKind::boundary, "gamma1");
    check_mask(c.masks.omega0, MaskKind::interior, "omega0");

    if (pot && (c.vartheta || c.sigma)) {
      collect(v, "admissibility: ", [&] {
        const double sigma = c.sigma ? *c.sigma : sobolev_constant(*grid).sigma;
        const AdmissibilityCertificate cert = check_admissible(*pot, c.vartheta, sigma);
        if (!(cert.product_check < 1)) {
          std::ostringstream os;
          os << "2 vartheta sigma^2 < 1 violated (2 vartheta sigma^2 = " << cert.product_check << ")";
          throw config_error(os.str());
        }
        if (!(cert.potential_norm <= cert.vartheta)) throw config_error("||V||_r <= vartheta violated");
      });
    }

    double hmax = 0;
    for (int a = 0; a < grid->dim(); ++a) hmax = std::max(hmax, grid->axis(a).h);
    for (double r : c.params.three_ball_radii) {
      if (r < hmax) v.push_back("params.three_ball_radii must be at least the grid spacing");
      if (3 * r > connectivity_radius(*grid)) v.push_back("params.three_ball_radii: B(center, 3r) must lie inside the domain");
    }
    for (double d : c.params.chain_deltas) {
      if (d < hmax) v.push_back("params.chain_deltas must be at least the grid spacing");
      if (!(d < connectivity_radius(*grid) / 4)) v.push_back("params.chain_deltas must be below delta0 / 4");
    }
    if (c.ensemble.time_steps >= 3 && c.window.violations().empty()) {
      const double dt = c.window.t_frak / c.ensemble.time_steps;
      for (double t : {c.window.t0, c.window.t_star, c.window.input_end()}) {
        if (std::abs(t / dt - std::round(t / dt)) > 1e-9) {
          v.push_back("window times must be knots of the time grid (t_frak / ensemble.time_steps)");
          break;
        }
      }
    }
  }

  if (c.ensemble.samples < 1) v.push_back("ensemble.samples >= 1 violated");
  if (c.ensemble.modes < 1) v.push_back("ensemble.modes >= 1 violated");
  if (c.ensemble.time_steps < 3) v.push_back("ensemble.time_steps >= 3 violated");
  if (c.ensemble.probes < 1) v.push_back("ensemble.probes >= 1 violated");
  if (c.params.spectrum_modes < 0) v.push_back("params.spectrum_modes >= 0 violated");
  if (!positive_list(c.params.semigroup_times)) v.push_back("params.semigroup_times must be positive");
  if (!positive_list(c.params.distinguish_deltas)) v.push_back("params.distinguish_deltas must be positive");
  if (c.params.reconstruct_knots < 1) v.push_back("params.reconstruct_knots >= 1 violated");
  if (!(c.params.reconstruct_tau > 0 && c.params.reconstruct_tau < 1)) {
    v.push_back("params.reconstruct_tau in (0, 1) violated");
  }
  if (!positive_list(c.params.stability_lambdas)) v.push_back("params.stability_lambdas must be positive");
  if (!positive_list(c.params.quc_rhos)) v.push_back("params.quc_rhos must be positive");
  if (!positive_list(c.params.three_ball_radii)) v.push_back("params.three_ball_radii must be positive");
  if (!positive_list(c.params.chain_deltas)) v.push_back("params.chain_deltas must be positive");
  if (c.params.chain_pairs < 1) v.push_back("params.chain_pairs >= 1 violated");
  collect(v, "params.exponent_side: ", [&] { parse_exponent_side(c.params.exponent_side); });
  return v;
}

}  // namespace heatlab
