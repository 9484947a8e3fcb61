#include "heatlab/unique_continuation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/SparseLU>

#include "heatlab/random.hpp"

namespace heatlab {

namespace {

double safe_log(double x) { return x > 0 ? std::log(x) : -std::numeric_limits<double>::infinity(); }

std::string tag(const char* name, Index i) { return std::string(name) + std::to_string(i); }

double distance(const Point& a, const Point& b, int dim) {
  double s = 0;
  for (int k = 0; k < dim; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

std::string format_double(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

Potential negated(const Potential& v) { return {v.grid, -v.values}; }

double operator_scale(const Grid& grid, const Potential& v) {
  double s = 0;
  for (int a = 0; a < grid.dim(); ++a) s += 4.0 / (grid.axis(a).h * grid.axis(a).h);
  return s + (v.values.size() > 0 ? v.values.cwiseAbs().maxCoeff() : 0.0);
}

}  // namespace

struct HarmonicSolver::Impl {
  Grid grid;
  Eigen::VectorXd minus_v;
  Eigen::SparseMatrix<double> a;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
};

namespace {

// Rayleigh quotient of the smallest-magnitude eigenvalue by inverse iteration.
template <class Solver>
double inverse_iteration(const Solver& lu, Index n) {
  Eigen::VectorXd x(n);
  for (Index i = 0; i < n; ++i) x[i] = 1.0 + 0.37 * std::sin(1.3 * static_cast<double>(i));
  x.normalize();
  double mu = 0;
  for (int it = 0; it < 60; ++it) {
    const Eigen::VectorXd y = lu.solve(x);
    const double yy = y.squaredNorm();
    if (!(yy > 0) || !std::isfinite(yy)) return 0.0;
    mu = x.dot(y) / yy;
    x = y / std::sqrt(yy);
  }
  return mu;
}

}  // namespace

HarmonicSolver::HarmonicSolver(const Grid& grid, const Potential& v) : impl_(std::make_unique<Impl>()) {
  if (!(v.grid == grid) || v.values.size() != grid.size()) {
    throw config_error("potential grid does not match the harmonic grid");
  }
  if (!v.values.allFinite()) throw config_error("potential has non-finite values");
  impl_->grid = grid;
  impl_->minus_v = -v.values;
  impl_->a = assemble_sparse(grid, negated(v));
  impl_->a.makeCompressed();
  impl_->lu.compute(impl_->a);
  const double scale = operator_scale(grid, v);
  if (impl_->lu.info() != Eigen::Success) {
    const double sigma = 1e-6 * scale;
    Eigen::SparseMatrix<double> shifted = impl_->a;
    for (Index i = 0; i < grid.size(); ++i) shifted.coeffRef(i, i) += sigma;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> slu(shifted);
    const double lambda = slu.info() == Eigen::Success ? inverse_iteration(slu, grid.size()) - sigma : 0.0;
    throw solver_error("singular harmonic system: -Lap_h - V has eigenvalue " + format_double(lambda) +
                       " near zero");
  }
  smallest_ = inverse_iteration(impl_->lu, grid.size());
  if (std::abs(smallest_) <= 1e-10 * scale) {
    throw solver_error("singular harmonic system: -Lap_h - V has eigenvalue " + format_double(smallest_) +
                       " near zero");
  }
}

HarmonicSolver::~HarmonicSolver() = default;
HarmonicSolver::HarmonicSolver(HarmonicSolver&&) noexcept = default;
HarmonicSolver& HarmonicSolver::operator=(HarmonicSolver&&) noexcept = default;

HarmonicSample HarmonicSolver::solve(const Eigen::VectorXd& boundary) const {
  const Grid& g = impl_->grid;
  if (boundary.size() != g.boundary_size()) {
    throw config_error("boundary data must have one value per boundary node");
  }
  if (!boundary.allFinite()) throw config_error("boundary data has non-finite values");
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(g.size());
  const Eigen::VectorXd rhs = -apply_operator(g, impl_->minus_v, zero, boundary);
  Eigen::VectorXd u = impl_->lu.solve(rhs);
  const double scale = std::max(rhs.norm(), std::numeric_limits<double>::min());
  Eigen::VectorXd res = apply_operator(g, impl_->minus_v, u, boundary);
  double rel = rhs.norm() > 0 ? res.norm() / scale : res.norm();
  if (rel > kHarmonicResidualTolerance) {
    u -= impl_->lu.solve(res);
    res = apply_operator(g, impl_->minus_v, u, boundary);
    rel = rhs.norm() > 0 ? res.norm() / scale : res.norm();
  }
  if (rel > kHarmonicResidualTolerance) {
    throw solver_error("harmonic solve residual " + format_double(rel) + " exceeds tolerance");
  }
  return {Field(g, std::move(u)), boundary, rel};
}

HarmonicSample harmonic_sample(const Grid& grid, const Potential& v, const Eigen::VectorXd& boundary) {
  return HarmonicSolver(grid, v).solve(boundary);
}

HarmonicSample harmonic_sample(const Grid& grid, const Potential& v,
                               const std::function<double(const Point&)>& boundary) {
  Eigen::VectorXd b(grid.boundary_size());
  for (Index i = 0; i < grid.boundary_size(); ++i) b[i] = boundary(grid.boundary_node(i).coord);
  return harmonic_sample(grid, v, b);
}

HarmonicSample harmonic_sample(const Grid& grid, const Potential& v, std::uint64_t seed) {
  return harmonic_sample(grid, v, random_boundary_data(grid, seed));
}

Eigen::VectorXd random_boundary_data(const Grid& grid, std::uint64_t seed, int modes) {
  if (modes < 1) throw config_error("random boundary data needs at least one mode");
  Rng rng(seed);
  std::vector<double> a(modes), b(modes);
  for (int m = 0; m < modes; ++m) {
    a[m] = rng.normal();
    b[m] = rng.normal();
  }
  const double c0 = rng.normal();
  const Axis& ax = grid.axis(0);
  const double w = ax.high - ax.low;
  const double h = grid.dim() == 2 ? grid.axis(1).high - grid.axis(1).low : 0.0;
  const double perimeter = grid.dim() == 2 ? 2 * (w + h) : 1.0;
  Eigen::VectorXd out(grid.boundary_size());
  for (Index i = 0; i < grid.boundary_size(); ++i) {
    const BoundaryNode& n = grid.boundary_node(i);
    double s = 0;
    if (grid.dim() == 1) {
      s = n.face == Face::x_low ? 0.0 : 0.5;
    } else {
      const Axis& ay = grid.axis(1);
      switch (n.face) {
        case Face::y_low:
          s = n.coord[0] - ax.low;
          break;
        case Face::x_high:
          s = w + (n.coord[1] - ay.low);
          break;
        case Face::y_high:
          s = w + h + (ax.high - n.coord[0]);
          break;
        case Face::x_low:
          s = 2 * w + h + (ay.high - n.coord[1]);
          break;
      }
      s /= perimeter;
    }
    double v = c0;
    for (int m = 1; m <= modes; ++m) {
      const double arg = 2 * std::numbers::pi * m * s;
      v += (a[m - 1] * std::cos(arg) + b[m - 1] * std::sin(arg)) / m;
    }
    out[i] = v;
  }
  return out;
}

std::vector<HarmonicSample> harmonic_ensemble(const Grid& grid, const Potential& v, Index count,
                                              std::uint64_t seed) {
  if (count < 0) throw config_error("ensemble size must be nonnegative");
  const HarmonicSolver solver(grid, v);
  std::vector<HarmonicSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    out.push_back(solver.solve(random_boundary_data(grid, split_seed(seed, 2, static_cast<std::uint64_t>(i)))));
  }
  return out;
}

double harmonic_defect(const HarmonicSample& s, const Potential& v) {
  const Grid& g = s.u.grid;
  const Eigen::VectorXd r = apply_operator(g, -v.values, s.u.values, s.boundary);
  return lp_norm(g, r, lebesgue_exponents(g.dim()).dual);
}

double mask_distance(const Grid& grid, const Mask& inner, const Mask& outer) {
  std::vector<char> in_outer(static_cast<std::size_t>(grid.size()), 0);
  for (Index i : outer.indices) in_outer[static_cast<std::size_t>(i)] = 1;
  std::vector<Point> outside;
  for (Index i = 0; i < grid.size(); ++i) {
    if (!in_outer[static_cast<std::size_t>(i)]) outside.push_back(grid.coord(i));
  }
  double d = std::numeric_limits<double>::infinity();
  for (Index i : inner.indices) {
    const Point x = grid.coord(i);
    d = std::min(d, grid.distance_to_boundary(x));
    for (const Point& y : outside) d = std::min(d, distance(x, y, grid.dim()));
  }
  return d;
}

AuditReport caccioppoli_check(const std::vector<HarmonicSample>& ensemble, const Potential& v,
                              const Mask& omega0, const Mask& omega1, double d) {
  if (omega0.kind != MaskKind::interior || omega1.kind != MaskKind::interior) {
    throw config_error("Caccioppoli masks must be interior masks");
  }
  if (!omega0.subset_of(omega1)) throw config_error("Caccioppoli masks are not nested: omega0 not in omega1");
  if (!(d > 0)) throw config_error("Caccioppoli distance d must be positive");
  const Grid& grid = v.grid;
  const double md = mask_distance(grid, omega0, omega1);
  if (d > md * (1 + 1e-12)) {
    throw config_error("Caccioppoli distance d exceeds the mask distance " + format_double(md));
  }
  AuditReport r("caccioppoli");
  double skipped = 0;
  for (std::size_t c = 0; c < ensemble.size(); ++c) {
    const HarmonicSample& s = ensemble[c];
    if (!(s.u.grid == grid)) throw config_error("sample grid does not match the potential");
    const auto g = gradient(grid, s.u.values);
    double grad2 = 0;
    for (const auto& ga : g) {
      const double n = l2_norm(grid, ga, &omega0);
      grad2 += n * n;
    }
    const double defect = harmonic_defect(s, v);
    const double local = l2_norm(grid, s.u.values, &omega1);
    const double denom = defect + local / d;
    if (denom == 0) {
      skipped += 1;
      continue;
    }
    AuditSample& a = r.add(tag("u", static_cast<Index>(c)), std::sqrt(grad2), denom);
    a.metadata["defect"] = defect;
    a.metadata["local_norm"] = local;
  }
  const AuditSummary sum = r.summary();
  r.scalars["d"] = d;
  r.scalars["mask_distance"] = md;
  r.scalars["skipped"] = skipped;
  r.scalars["fitted_min"] = sum.fitted_min;
  r.scalars["fitted_median"] = sum.fitted_median;
  r.scalars["fitted_max"] = sum.fitted_max;
  return r;
}

ExponentSide parse_exponent_side(const std::string& name) {
  if (name == "large-ball" || name == "large_ball") return ExponentSide::large_ball;
  if (name == "small-ball" || name == "small_ball") return ExponentSide::small_ball;
  throw config_error("unknown exponent side '" + name + "'");
}

std::string to_string(ExponentSide side) {
  return side == ExponentSide::large_ball ? "large-ball" : "small-ball";
}

AuditReport three_ball_check(const Grid& grid, const std::vector<Eigen::VectorXd>& ensemble, const Point& x0,
                             double r, double varsigma, ExponentSide side) {
  if (!(r > 0)) throw config_error("three-ball radius must be positive");
  if (!(varsigma > 0 && varsigma < 1)) throw config_error("varsigma in (0, 1) violated");
  if (!(grid.distance_to_boundary(x0) >= 3 * r * (1 - 1e-12))) {
    throw config_error("ball B(x0, 3r) is not inside the domain");
  }
  const Mask b1 = make_mask(grid, region::Ball{x0, r});
  const Mask b2 = make_mask(grid, region::Ball{x0, 2 * r});
  const Mask b3 = make_mask(grid, region::Ball{x0, 3 * r});
  const double e1 = side == ExponentSide::large_ball ? varsigma : 1 - varsigma;
  const double e2 = 1 - e1;
  AuditReport rep("three-ball");
  double skipped = 0;
  for (std::size_t c = 0; c < ensemble.size(); ++c) {
    const Eigen::VectorXd& u = ensemble[c];
    if (u.size() != grid.size()) throw config_error("sample length does not match the grid");
    const double n1 = l2_norm(grid, u, &b1);
    const double n2 = l2_norm(grid, u, &b2);
    const double n3 = l2_norm(grid, u, &b3);
    if (n3 == 0) {
      skipped += 1;
      continue;
    }
    if (n1 == 0 && n2 > 0) {
      rep.anomalies.push_back(tag("u", static_cast<Index>(c)) +
                              ": unique-continuation violation, ||u||_{Br} = 0 but ||u||_{B2r} > 0");
      rep.violations += 1;
      continue;
    }
    AuditSample& s = rep.add_log(tag("u", static_cast<Index>(c)), 2 * std::log(r) + safe_log(n2),
                                 e1 * safe_log(n3) + e2 * safe_log(n1), 0.0);
    s.rhs_loglog = s.log_rhs > 0 ? std::log(s.log_rhs) : -std::numeric_limits<double>::infinity();
    s.metadata["norm_r"] = n1;
    s.metadata["norm_2r"] = n2;
    s.metadata["norm_3r"] = n3;
  }
  const AuditSummary sum = rep.summary();
  rep.scalars["r"] = r;
  rep.scalars["varsigma"] = varsigma;
  rep.scalars["exponent_large"] = e1;
  rep.scalars["exponent_small"] = e2;
  rep.scalars["skipped"] = skipped;
  rep.scalars["fitted_min"] = sum.fitted_min;
  rep.scalars["fitted_median"] = sum.fitted_median;
  rep.scalars["fitted_max"] = sum.fitted_max;
  return rep;
}

PropagationConstants PropagationConstants::make(double varsigma, int dim, double diameter) {
  if (!(varsigma > 0 && varsigma < 1)) throw config_error("varsigma in (0, 1) violated");
  if (dim < 1) throw config_error("dimension must be positive");
  if (!(diameter > 0)) throw config_error("diameter must be positive");
  PropagationConstants p;
  p.varsigma = varsigma;
  p.dim = dim;
  p.diameter = diameter;
  const double l = std::abs(std::log(varsigma));
  p.c0 = varsigma * std::exp(-std::pow(2.0, dim - 0.5) * l);
  p.c1 = std::pow(2.0, dim / 2.0 - 0.5) * l * std::pow(diameter, dim);
  return p;
}

double PropagationConstants::nu(double s) const {
  return dim + 2 + (dim + 2 + s) * std::log(4.0) / std::log(2.0) + 2 / (1 - varsigma);
}

double connectivity_radius(const Grid& grid) {
  double r = std::numeric_limits<double>::infinity();
  for (int a = 0; a < grid.dim(); ++a) r = std::min(r, 0.5 * (grid.axis(a).high - grid.axis(a).low));
  return r;
}

namespace {

struct CubeGeometry {
  int dim;
  int k;
  double side;
  Point origin;

  std::array<int, 2> unflatten(Index c) const {
    return {static_cast<int>(c % k), dim == 2 ? static_cast<int>(c / k) : 0};
  }
  Index flatten(int i0, int i1) const { return i0 + static_cast<Index>(k) * i1; }
  Point center(Index c) const {
    const auto m = unflatten(c);
    Point p{};
    for (int a = 0; a < dim; ++a) p[a] = origin[a] + (m[a] + 0.5) * side;
    return p;
  }
  Index locate(const Point& p) const {
    std::array<int, 2> m{0, 0};
    for (int a = 0; a < dim; ++a) {
      m[a] = std::clamp(static_cast<int>(std::floor((p[a] - origin[a]) / side)), 0, k - 1);
    }
    return flatten(m[0], m[1]);
  }
};

bool face_adjacent(const CubeGeometry& geo, Index a, Index b) {
  const auto ma = geo.unflatten(a);
  const auto mb = geo.unflatten(b);
  int diff = 0;
  for (int k = 0; k < geo.dim; ++k) diff += std::abs(ma[k] - mb[k]);
  return diff == 1;
}

// Successive exit points from B(center, delta) along the polyline.
std::vector<Point> exit_points(const std::vector<Point>& poly, double delta, int dim) {
  std::vector<Point> out;
  Point c = poly.front();
  Point q = c;
  std::size_t seg = 0;
  while (seg + 1 < poly.size()) {
    const Point& b = poly[seg + 1];
    double aa = 0, bb = 0, cc = -delta * delta;
    for (int k = 0; k < dim; ++k) {
      const double dir = b[k] - q[k];
      const double off = q[k] - c[k];
      aa += dir * dir;
      bb += 2 * off * dir;
      cc += off * off;
    }
    if (aa == 0) {
      ++seg;
      continue;
    }
    const double tau = (-bb + std::sqrt(std::max(bb * bb - 4 * aa * cc, 0.0))) / (2 * aa);
    if (tau <= 1) {
      Point e{};
      for (int k = 0; k < dim; ++k) e[k] = q[k] + tau * (b[k] - q[k]);
      out.push_back(e);
      c = e;
      q = e;
      if (tau == 1) ++seg;
    } else {
      q = b;
      ++seg;
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> Chain::violations(const Grid& grid) const {
  std::vector<std::string> v;
  const double tol = 1e-12;
  Index expect = 1;
  for (int a = 0; a < dim; ++a) expect *= cubes_per_axis;
  if (cube_count != expect) v.push_back("m_delta differs from the sub-cube count");
  if (centers.empty()) v.push_back("chain has no centers");
  const bool trivial = centers.size() == 1;
  if (!trivial && static_cast<Index>(centers.size()) != p_delta + 2) {
    v.push_back("chain length differs from p_delta + 2");
  }
  for (std::size_t j = 0; j < centers.size(); ++j) {
    if (grid.distance_to_boundary(centers[j]) < 3 * delta * (1 - tol)) {
      v.push_back(tag("B(x_j, 3 delta) not inside the domain at j=", static_cast<Index>(j)));
    }
    if (j + 1 < centers.size()) {
      const double step = distance(centers[j], centers[j + 1], dim);
      if (step > delta * (1 + tol)) v.push_back(tag("|x_{j+1} - x_j| > delta at j=", static_cast<Index>(j)));
      if (step + delta > 2 * delta * (1 + tol)) {
        v.push_back(tag("B(x_{j+1}, delta) not inside B(x_j, 2 delta) at j=", static_cast<Index>(j)));
      }
    }
  }
  if (static_cast<double>(p_delta) > std::sqrt(static_cast<double>(dim)) * static_cast<double>(cube_count)) {
    v.push_back("p_delta > sqrt(n) m_delta");
  }
  const CubeGeometry geo{dim, cubes_per_axis, cube_side, origin};
  for (std::size_t j = 0; j < cube_path.size(); ++j) {
    if (!std::binary_search(kept.begin(), kept.end(), cube_path[j])) v.push_back("path leaves the kept cubes");
    if (j + 1 < cube_path.size() && !face_adjacent(geo, cube_path[j], cube_path[j + 1])) {
      v.push_back("path cubes are not face neighbours");
    }
  }
  return v;
}

Chain build_chain(const Grid& grid, double delta, const Point& x, const Point& y) {
  return build_chain(grid, delta, x, y, connectivity_radius(grid));
}

Chain build_chain(const Grid& grid, double delta, const Point& x, const Point& y, double delta0) {
  const int n = grid.dim();
  if (!(delta > 0)) throw config_error("chain delta must be positive");
  if (!(delta < delta0 / 4)) throw config_error("chain needs delta < delta0 / 4");
  if (!(grid.distance_to_boundary(x) > 4 * delta)) throw config_error("x is not in Omega^{4 delta}");
  if (!(grid.distance_to_boundary(y) > 4 * delta)) throw config_error("y is not in Omega^{4 delta}");

  Chain ch;
  ch.delta = delta;
  ch.dim = n;
  const double dm = grid.diameter();
  ch.cubes_per_axis = static_cast<int>(std::floor(dm / (std::sqrt(static_cast<double>(n)) * delta))) + 1;
  ch.cube_side = dm / ch.cubes_per_axis;
  ch.cube_count = 1;
  for (int a = 0; a < n; ++a) {
    ch.cube_count *= ch.cubes_per_axis;
    ch.origin[a] = 0.5 * (grid.axis(a).low + grid.axis(a).high) - 0.5 * dm;
  }
  const CubeGeometry geo{n, ch.cubes_per_axis, ch.cube_side, ch.origin};

  std::vector<char> keep(static_cast<std::size_t>(ch.cube_count), 0);
  for (Index c = 0; c < ch.cube_count; ++c) {
    const auto m = geo.unflatten(c);
    bool meets = true;
    for (int a = 0; a < n; ++a) {
      const double lo = ch.origin[a] + m[a] * ch.cube_side;
      const double hi = lo + ch.cube_side;
      const double core_lo = grid.axis(a).low + 4 * delta;
      const double core_hi = grid.axis(a).high - 4 * delta;
      meets = meets && hi >= core_lo && lo <= core_hi;
    }
    if (meets) {
      keep[static_cast<std::size_t>(c)] = 1;
      ch.kept.push_back(c);
    }
  }

  const Index start = geo.locate(x);
  const Index goal = geo.locate(y);
  std::vector<Index> parent(static_cast<std::size_t>(ch.cube_count), -1);
  std::deque<Index> queue{start};
  parent[static_cast<std::size_t>(start)] = start;
  while (!queue.empty()) {
    const Index c = queue.front();
    queue.pop_front();
    if (c == goal) break;
    const auto m = geo.unflatten(c);
    for (int a = 0; a < n; ++a) {
      for (int step : {-1, 1}) {
        auto mm = m;
        mm[a] += step;
        if (mm[a] < 0 || mm[a] >= ch.cubes_per_axis) continue;
        const Index nb = geo.flatten(mm[0], mm[1]);
        if (!keep[static_cast<std::size_t>(nb)] || parent[static_cast<std::size_t>(nb)] >= 0) continue;
        parent[static_cast<std::size_t>(nb)] = c;
        queue.push_back(nb);
      }
    }
  }
  if (parent[static_cast<std::size_t>(goal)] < 0) {
    throw config_error("x and y lie in different connected components of the kept cubes");
  }
  for (Index c = goal; c != start; c = parent[static_cast<std::size_t>(c)]) ch.cube_path.push_back(c);
  ch.cube_path.push_back(start);
  std::reverse(ch.cube_path.begin(), ch.cube_path.end());

  if (distance(x, y, n) == 0) {
    ch.centers = {x};
    ch.p_delta = 0;
  } else {
    std::vector<Point> poly{x};
    for (std::size_t j = 1; j + 1 < ch.cube_path.size(); ++j) poly.push_back(geo.center(ch.cube_path[j]));
    poly.push_back(y);
    ch.centers = {x};
    for (const Point& p : exit_points(poly, delta, n)) ch.centers.push_back(p);
    ch.p_delta = static_cast<Index>(ch.centers.size()) - 1;
    ch.centers.push_back(y);
  }

  const auto v = ch.violations(grid);
  if (!v.empty()) throw std::logic_error("chain invariant failed: " + v.front());
  return ch;
}

nlohmann::json to_json(const Chain& chain) {
  nlohmann::json j;
  j["delta"] = chain.delta;
  j["dim"] = chain.dim;
  j["m_delta"] = chain.cube_count;
  j["cubes_per_axis"] = chain.cubes_per_axis;
  j["cube_side"] = chain.cube_side;
  j["p_delta"] = chain.p_delta;
  j["kept_count"] = chain.kept.size();
  j["cube_path"] = chain.cube_path;
  nlohmann::json centers = nlohmann::json::array();
  for (const Point& p : chain.centers) {
    nlohmann::json c = nlohmann::json::array();
    for (int a = 0; a < chain.dim; ++a) c.push_back(p[a]);
    centers.push_back(c);
  }
  j["centers"] = centers;
  return j;
}

AuditReport propagate_smallness(const Grid& grid, const Eigen::VectorXd& u, const Chain& chain,
                                double varsigma) {
  if (u.size() != grid.size()) throw config_error("field length does not match the grid");
  const auto broken = chain.violations(grid);
  if (!broken.empty()) throw config_error("invalid chain: " + broken.front());
  const double total = l2_norm(grid, u);
  if (!(total > 0)) throw domain_error("smallness propagation needs a nonzero field");
  const Eigen::VectorXd w = u / total;
  const double delta = chain.delta;
  const auto constants = PropagationConstants::make(varsigma, grid.dim(), grid.diameter());

  std::vector<double> norms;
  for (const Point& c : chain.centers) {
    const Mask ball = make_mask(grid, region::Ball{c, delta});
    norms.push_back(l2_norm(grid, w, &ball));
  }
  AuditReport r("smallness-propagation");
  double degenerate = 0;
  for (std::size_t j = 0; j + 1 < norms.size(); ++j) {
    if (norms[j] == 0) {
      degenerate += 1;
      r.anomalies.push_back(tag("link", static_cast<Index>(j)) + ": ||u||_{B(x_j, delta)} = 0");
      continue;
    }
    AuditSample& s = r.add_log(tag("link", static_cast<Index>(j)), 2 * std::log(delta) + safe_log(norms[j + 1]),
                               varsigma * std::log(norms[j]), -std::numeric_limits<double>::infinity());
    if (s.log_rhs > 0) s.rhs_loglog = std::log(s.log_rhs);
    s.metadata["norm_from"] = norms[j];
    s.metadata["norm_to"] = norms[j + 1];
  }

  const double nx = norms.front();
  const double ny = norms.back();
  double gamma_hat = std::numeric_limits<double>::quiet_NaN();
  if (norms.size() == 1) {
    gamma_hat = 1.0;
  } else if (nx > 0 && nx < 1 && ny > 0 && ny < 1) {
    gamma_hat = std::log(ny) / std::log(nx);
  } else {
    degenerate += 1;
    r.anomalies.push_back("end-point ball norms outside (0, 1); gamma_hat undefined");
  }
  const double log_eta = constants.log_eta(delta);
  if (!std::isnan(gamma_hat) && !(std::log(gamma_hat) >= log_eta)) r.violations += 1;

  r.scalars["delta"] = delta;
  r.scalars["p_delta"] = static_cast<double>(chain.p_delta);
  r.scalars["gamma_hat"] = gamma_hat;
  r.scalars["gamma_delta"] = std::pow(varsigma, static_cast<double>(chain.p_delta + 1));
  r.scalars["log_eta_delta"] = log_eta;
  r.scalars["eta_delta"] = std::exp(log_eta);
  r.scalars["c0_chain"] = constants.c0;
  r.scalars["c1_chain"] = constants.c1;
  r.scalars["norm_x"] = nx;
  r.scalars["norm_y"] = ny;
  r.scalars["degenerate"] = degenerate;
  r.scalars["link_fitted_max"] = r.samples.empty() ? 0.0 : r.summary().fitted_max;
  return r;
}

AuditReport global_quc_audit(const Grid& grid, const std::vector<Eigen::VectorXd>& ensemble, const Mask& omega,
                             const std::vector<double>& rhos, const StabilityFunctions& fns, double varsigma) {
  if (omega.kind != MaskKind::interior) throw config_error("omega must be an interior mask");
  const StabilityConfig& cfg = fns.config();
  const auto constants = PropagationConstants::make(varsigma, grid.dim(), grid.diameter());
  const double nu = constants.nu(cfg.s);
  std::vector<double> sorted = rhos;
  std::sort(sorted.begin(), sorted.end());

  AuditReport r("global-unique-continuation");
  std::vector<double> worst(sorted.size(), -std::numeric_limits<double>::infinity());
  bool overflow_free = true;
  bool monotone = true;
  for (std::size_t c = 0; c < ensemble.size(); ++c) {
    const Eigen::VectorXd& u = ensemble[c];
    if (u.size() != grid.size()) throw config_error("sample length does not match the grid");
    const double norm = l2_norm(grid, u);
    const double local = l2_norm(grid, u, &omega);
    const double h1 = h1_norm(grid, u);
    if (norm > 0 && local == 0) {
      r.anomalies.push_back(tag("u", static_cast<Index>(c)) + ": nonzero harmonic field vanishes on omega");
      r.violations += 1;
    }
    double best_rho = sorted.empty() ? 0.0 : sorted.front();
    double best = -std::numeric_limits<double>::infinity();
    LogMagnitude previous;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const double rho = sorted[i];
      const LogMagnitude rhs = fns.h(rho) * LogMagnitude::from_value(local) +
                               LogMagnitude::from_log(cfg.s * std::log(rho)) * LogMagnitude::from_value(h1);
      if (std::isnan(rhs.loglog) || (rhs.overflowed() && std::isinf(rhs.loglog))) overflow_free = false;
      if (i > 0 && previous < rhs) monotone = false;
      previous = rhs;
      AuditSample& s = r.add_log(tag("u", static_cast<Index>(c)) + "/rho=" + format_double(rho),
                                 safe_log(norm), rhs.log, rhs.loglog);
      s.metadata["rho"] = rho;
      s.metadata["sample"] = static_cast<double>(c);
      s.metadata["log_epsilon"] = (cfg.s + nu) * (1 - constants.eta(rho / 8)) * std::log(rho);
      s.metadata["log_H_rho_loglog"] = fns.h(rho).loglog;
      worst[i] = std::max(worst[i], s.log_fitted);
      if (s.log_fitted > best) {
        best = s.log_fitted;
        best_rho = rho;
      }
    }
    r.scalars["best_rho/" + tag("u", static_cast<Index>(c))] = best_rho;
  }
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    r.scalars["fitted/rho=" + format_double(sorted[i])] = std::exp(worst[i]);
  }
  r.scalars["nu"] = nu;
  r.scalars["overflow_free"] = overflow_free ? 1 : 0;
  r.scalars["monotone_blowup"] = monotone ? 1 : 0;
  r.scalars["fitted_max"] = r.samples.empty() ? 0.0 : r.summary().fitted_max;
  return r;
}

}  // namespace heatlab
