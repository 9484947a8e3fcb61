#include "heatlab/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace heatlab {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Squared distance over the first `dim` coordinates.
double dist2(const Point& a, const Point& b, int dim) {
  double s = 0;
  for (int k = 0; k < dim; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

}  // namespace

Grid build_grid(int dim, const std::vector<std::pair<double, double>>& extents,
                const std::vector<int>& n_cells) {
  if (dim < 1 || dim > 2) {
    throw config_error("grid dimension must be 1 or 2 (got " + std::to_string(dim) + ")");
  }
  if (static_cast<int>(extents.size()) != dim || static_cast<int>(n_cells.size()) != dim) {
    throw config_error("grid extents and n_cells must have one entry per axis");
  }
  Grid g;
  g.dim_ = dim;
  g.size_ = 1;
  for (int a = 0; a < dim; ++a) {
    const auto [lo, hi] = extents[a];
    if (!(std::isfinite(lo) && std::isfinite(hi)) || !(hi > lo)) {
      throw config_error("degenerate extent on axis " + std::to_string(a));
    }
    if (n_cells[a] < 5) {
      throw config_error("n_cells must be >= 5 on every axis (axis " + std::to_string(a) +
                         " has " + std::to_string(n_cells[a]) + ")");
    }
    g.axes_[a] = Axis{lo, hi, n_cells[a], (hi - lo) / n_cells[a]};
    g.size_ *= n_cells[a] - 1;
  }
  if (dim == 1) {
    g.axes_[1] = Axis{0.0, 0.0, 2, 0.0};
  }

  const Axis& ax = g.axes_[0];
  if (dim == 1) {
    const Index n = ax.interior_count();
    g.boundary_.push_back({Face::x_low, 0, {ax.low, 0.0}, 0, 1, ax.h, 1.0});
    g.boundary_.push_back({Face::x_high, 0, {ax.high, 0.0}, n - 1, n - 2, ax.h, 1.0});
    return g;
  }
  const Axis& ay = g.axes_[1];
  const int nx = ax.interior_count();
  const int ny = ay.interior_count();
  for (int j = 0; j < ny; ++j) {
    g.boundary_.push_back({Face::x_low, j, {ax.low, ay.node(j)}, g.flat(0, j), g.flat(1, j), ax.h, ay.h});
  }
  for (int j = 0; j < ny; ++j) {
    g.boundary_.push_back(
        {Face::x_high, j, {ax.high, ay.node(j)}, g.flat(nx - 1, j), g.flat(nx - 2, j), ax.h, ay.h});
  }
  for (int i = 0; i < nx; ++i) {
    g.boundary_.push_back({Face::y_low, i, {ax.node(i), ay.low}, g.flat(i, 0), g.flat(i, 1), ay.h, ax.h});
  }
  for (int i = 0; i < nx; ++i) {
    g.boundary_.push_back(
        {Face::y_high, i, {ax.node(i), ay.high}, g.flat(i, ny - 1), g.flat(i, ny - 2), ay.h, ax.h});
  }
  return g;
}

Grid unit_grid(int dim, int n_cells) {
  std::vector<std::pair<double, double>> ext(dim, {0.0, 1.0});
  return build_grid(dim, ext, std::vector<int>(dim, n_cells));
}

double Grid::cell_volume() const {
  return dim_ == 1 ? axes_[0].h : axes_[0].h * axes_[1].h;
}

double Grid::diameter() const {
  double s = 0;
  for (int a = 0; a < dim_; ++a) {
    const double w = axes_[a].high - axes_[a].low;
    s += w * w;
  }
  return std::sqrt(s);
}

Point Grid::coord(Index i) const {
  const auto [ix, iy] = multi_index(i);
  return {axes_[0].node(ix), dim_ == 2 ? axes_[1].node(iy) : 0.0};
}

std::array<int, 2> Grid::multi_index(Index i) const {
  const int nx = axes_[0].interior_count();
  return {static_cast<int>(i % nx), static_cast<int>(i / nx)};
}

Index Grid::flat(int ix, int iy) const {
  return static_cast<Index>(ix) + static_cast<Index>(axes_[0].interior_count()) * iy;
}

Index Grid::boundary_index(Face face, int tangential) const {
  if (dim_ == 1) return face == Face::x_low ? 0 : 1;
  const Index nx = axes_[0].interior_count();
  const Index ny = axes_[1].interior_count();
  switch (face) {
    case Face::x_low:
      return tangential;
    case Face::x_high:
      return ny + tangential;
    case Face::y_low:
      return 2 * ny + tangential;
    case Face::y_high:
      return 2 * ny + nx + tangential;
  }
  return 0;
}

double Grid::distance_to_boundary(const Point& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (int a = 0; a < dim_; ++a) {
    d = std::min({d, p[a] - axes_[a].low, axes_[a].high - p[a]});
  }
  return d;
}

bool Grid::contains(const Point& p) const { return distance_to_boundary(p) > 0.0; }

bool Grid::operator==(const Grid& o) const {
  if (dim_ != o.dim_) return false;
  for (int a = 0; a < dim_; ++a) {
    if (axes_[a].low != o.axes_[a].low || axes_[a].high != o.axes_[a].high ||
        axes_[a].n_cells != o.axes_[a].n_cells) {
      return false;
    }
  }
  return true;
}

bool Mask::contains(Index i) const {
  return std::binary_search(indices.begin(), indices.end(), i);
}

bool Mask::subset_of(const Mask& other) const {
  return kind == other.kind &&
         std::includes(other.indices.begin(), other.indices.end(), indices.begin(), indices.end());
}

Mask make_mask(const Grid& grid, const RegionSpec& spec) {
  Mask m;
  auto interior = [&](auto pred) {
    m.kind = MaskKind::interior;
    for (Index i = 0; i < grid.size(); ++i) {
      if (pred(grid.coord(i))) m.indices.push_back(i);
    }
  };
  auto boundary = [&](auto pred) {
    m.kind = MaskKind::boundary;
    for (Index b = 0; b < grid.boundary_size(); ++b) {
      if (pred(grid.boundary_node(b))) m.indices.push_back(b);
    }
  };
  const int dim = grid.dim();
  std::visit(overloaded{
                 [&](const region::Ball& s) {
                   double hmin = grid.axis(0).h;
                   for (int a = 1; a < dim; ++a) hmin = std::min(hmin, grid.axis(a).h);
                   if (!(s.radius >= hmin)) {
                     throw config_error("mask is empty: ball radius is below the grid spacing");
                   }
                   interior([&](const Point& x) { return dist2(x, s.center, dim) < s.radius * s.radius; });
                 },
                 [&](const region::Box& s) {
                   interior([&](const Point& x) {
                     for (int a = 0; a < dim; ++a) {
                       if (!(x[a] > s.low[a] && x[a] < s.high[a])) return false;
                     }
                     return true;
                   });
                 },
                 [&](const region::Band& s) {
                   interior([&](const Point& x) {
                     const double d = grid.distance_to_boundary(x);
                     return s.near ? d < s.delta : d > s.delta;
                   });
                 },
                 [&](const region::Whole&) { interior([](const Point&) { return true; }); },
                 [&](const region::Faces& s) {
                   boundary([&](const BoundaryNode& b) {
                     return std::find(s.faces.begin(), s.faces.end(), b.face) != s.faces.end();
                   });
                 },
                 [&](const region::BoundaryBox& s) {
                   boundary([&](const BoundaryNode& b) {
                     for (int a = 0; a < dim; ++a) {
                       if (b.coord[a] < s.low[a] || b.coord[a] > s.high[a]) return false;
                     }
                     return true;
                   });
                 },
             },
             spec);
  if (m.indices.empty()) {
    throw config_error("mask is empty: the region contains no grid node");
  }
  return m;
}

Mask whole_mask(const Grid& grid) { return make_mask(grid, region::Whole{}); }

Mask full_boundary_mask(const Grid& grid) {
  Mask m{MaskKind::boundary, {}};
  m.indices.resize(grid.boundary_size());
  for (Index b = 0; b < grid.boundary_size(); ++b) m.indices[b] = b;
  return m;
}

Field::Field(Grid g, Eigen::VectorXd v) : grid(std::move(g)), values(std::move(v)) {
  if (values.size() != grid.size()) {
    throw config_error("field length does not match the interior node count");
  }
  if (!values.allFinite()) {
    throw config_error("field has non-finite values");
  }
}

Field sample_field(const Grid& grid, const std::function<double(const Point&)>& fn) {
  Eigen::VectorXd v(grid.size());
  for (Index i = 0; i < grid.size(); ++i) v[i] = fn(grid.coord(i));
  return Field(grid, std::move(v));
}

std::vector<Eigen::VectorXd> gradient(const Grid& grid, const Eigen::VectorXd& u) {
  std::vector<Eigen::VectorXd> g(grid.dim(), Eigen::VectorXd(grid.size()));
  for (Index i = 0; i < grid.size(); ++i) {
    const auto mi = grid.multi_index(i);
    for (int a = 0; a < grid.dim(); ++a) {
      const int n = grid.axis(a).interior_count();
      const double h = grid.axis(a).h;
      const Index stride = a == 0 ? 1 : grid.axis(0).interior_count();
      const int k = mi[a];
      if (k > 0 && k < n - 1) {
        g[a][i] = (u[i + stride] - u[i - stride]) / (2 * h);
      } else if (k == 0) {
        g[a][i] = (u[i + stride] - u[i]) / h;
      } else {
        g[a][i] = (u[i] - u[i - stride]) / h;
      }
    }
  }
  return g;
}

namespace {

template <class F>
double masked_sum(const Grid& grid, const Mask* mask, F term) {
  double s = 0;
  if (mask == nullptr) {
    for (Index i = 0; i < grid.size(); ++i) s += term(i);
  } else {
    if (mask->kind != MaskKind::interior) {
      throw config_error("norms need an interior mask");
    }
    for (Index i : mask->indices) s += term(i);
  }
  return s;
}

}  // namespace

double l2_norm(const Grid& grid, const Eigen::VectorXd& u, const Mask* mask) {
  return std::sqrt(grid.cell_volume() * masked_sum(grid, mask, [&](Index i) { return u[i] * u[i]; }));
}

double h1_norm(const Grid& grid, const Eigen::VectorXd& u, const Mask* mask) {
  const auto g = gradient(grid, u);
  const double s = masked_sum(grid, mask, [&](Index i) {
    double t = u[i] * u[i];
    for (const auto& ga : g) t += ga[i] * ga[i];
    return t;
  });
  return std::sqrt(grid.cell_volume() * s);
}

double lp_norm(const Grid& grid, const Eigen::VectorXd& u, double p, const Mask* mask) {
  if (!(p >= 1.0)) {
    throw domain_error("Lp norm needs p >= 1");
  }
  if (std::isinf(p)) {
    double m = 0;
    masked_sum(grid, mask, [&](Index i) {
      m = std::max(m, std::abs(u[i]));
      return 0.0;
    });
    return m;
  }
  const double s = masked_sum(grid, mask, [&](Index i) { return std::pow(std::abs(u[i]), p); });
  return std::pow(grid.cell_volume() * s, 1.0 / p);
}

double discrete_norm(const Grid& grid, const Eigen::VectorXd& u, NormSpec which, const Mask* mask) {
  switch (which.kind) {
    case NormKind::L2:
      return l2_norm(grid, u, mask);
    case NormKind::H1:
      return h1_norm(grid, u, mask);
    case NormKind::Lp:
      return lp_norm(grid, u, which.p, mask);
  }
  return 0.0;
}

double discrete_norm(const Field& u, NormSpec which, const Mask* mask) {
  return discrete_norm(u.grid, u.values, which, mask);
}

double inner(const Grid& grid, const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  return grid.cell_volume() * u.dot(v);
}

namespace {

void require_boundary(const Mask& m) {
  if (m.kind != MaskKind::boundary) {
    throw config_error("normal trace needs a boundary mask");
  }
}

}  // namespace

BoundaryData trace_neumann(const Field& u, const Mask& boundary_mask) {
  require_boundary(boundary_mask);
  BoundaryData out{u.grid, boundary_mask, Eigen::VectorXd(boundary_mask.size())};
  for (Index j = 0; j < boundary_mask.size(); ++j) {
    const BoundaryNode& b = u.grid.boundary_node(boundary_mask.indices[j]);
    out.values[j] = (-4.0 * u.values[b.adjacent] + u.values[b.second]) / (2.0 * b.h_normal);
  }
  return out;
}

BoundaryData trace_neumann_flux(const Field& u, const Mask& boundary_mask) {
  require_boundary(boundary_mask);
  BoundaryData out{u.grid, boundary_mask, Eigen::VectorXd(boundary_mask.size())};
  for (Index j = 0; j < boundary_mask.size(); ++j) {
    const BoundaryNode& b = u.grid.boundary_node(boundary_mask.indices[j]);
    out.values[j] = -u.values[b.adjacent] / b.h_normal;
  }
  return out;
}

}  // namespace heatlab
