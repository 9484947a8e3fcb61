#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace heatlab {

using Index = Eigen::Index;
using Point = std::array<double, 2>;

/// Raised for malformed grids, masks and experiment configuration.
class config_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation is evaluated outside its domain (Re z < 0, l <= 0, ...).
class domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Axis {
  double low = 0.0;
  double high = 1.0;
  int n_cells = 0;
  double h = 0.0;

  int interior_count() const { return n_cells - 1; }
  double node(int i) const { return low + (i + 1) * h; }
};

enum class Face : std::uint8_t { x_low = 0, x_high = 1, y_low = 2, y_high = 3 };

/// A boundary node sits on a face at the tangential position of an interior
/// grid line. Box corners carry no normal and are not boundary nodes.
struct BoundaryNode {
  Face face;
  int tangential = 0;   // interior index along the face (0 in 1D)
  Point coord{};
  Index adjacent = 0;   // first interior node along the inward normal
  Index second = 0;     // second interior node along the inward normal
  double h_normal = 0;  // spacing along the normal
  double measure = 1;   // surface cell measure h^{dim-1}
};

/// Uniform tensor grid on a box in dimension 1 or 2.
///
/// Interior nodes are enumerated row-major with y as the row index and x
/// varying fastest: index = ix + (nx - 1) * iy. Boundary nodes are enumerated
/// face by face in the order x_low, x_high, y_low, y_high and, within a face,
/// by increasing tangential index.
class Grid {
 public:
  Grid() = default;

  int dim() const { return dim_; }
  const Axis& axis(int a) const { return axes_[a]; }
  Index size() const { return size_; }
  Index boundary_size() const { return static_cast<Index>(boundary_.size()); }

  double cell_volume() const;
  double diameter() const;

  Point coord(Index i) const;
  std::array<int, 2> multi_index(Index i) const;
  Index flat(int ix, int iy = 0) const;

  const BoundaryNode& boundary_node(Index b) const { return boundary_[b]; }
  /// Index of the boundary node on `face` at tangential position `tangential`.
  Index boundary_index(Face face, int tangential = 0) const;

  /// Distance from a point to the box boundary (concave in the point).
  double distance_to_boundary(const Point& p) const;
  bool contains(const Point& p) const;

  bool operator==(const Grid& other) const;

  friend Grid build_grid(int dim, const std::vector<std::pair<double, double>>& extents,
                         const std::vector<int>& n_cells);

 private:
  int dim_ = 0;
  std::array<Axis, 2> axes_{};
  Index size_ = 0;
  std::vector<BoundaryNode> boundary_;
};

/// Throws config_error for dim outside {1,2}, fewer than 5 cells on an axis,
/// or a degenerate extent.
Grid build_grid(int dim, const std::vector<std::pair<double, double>>& extents,
                const std::vector<int>& n_cells);

/// Unit-interval (dim 1) or unit-square (dim 2) grid with n cells per axis.
Grid unit_grid(int dim, int n_cells);

enum class MaskKind : std::uint8_t { interior, boundary };

struct Mask {
  MaskKind kind = MaskKind::interior;
  std::vector<Index> indices;  // sorted, distinct

  Index size() const { return static_cast<Index>(indices.size()); }
  bool contains(Index i) const;
  bool subset_of(const Mask& other) const;
};

namespace region {
/// Open ball, node-center membership. Radii below the grid spacing are
/// unresolved and rejected as empty.
struct Ball {
  Point center{};
  double radius = 0;
};
/// Open box lo < x < hi.
struct Box {
  Point low{};
  Point high{};
};
/// Distance band: interior nodes with dist(x, boundary) > delta (far) or < delta (near).
struct Band {
  double delta = 0;
  bool near = false;
};
struct Whole {};
/// Boundary nodes on the listed faces.
struct Faces {
  std::vector<Face> faces;
};
/// Boundary nodes inside the closed box [low, high].
struct BoundaryBox {
  Point low{};
  Point high{};
};
}  // namespace region

using RegionSpec = std::variant<region::Ball, region::Box, region::Band, region::Whole,
                                region::Faces, region::BoundaryBox>;

/// Deterministic index set of the nodes satisfying the region predicate.
/// Throws config_error if no node qualifies.
Mask make_mask(const Grid& grid, const RegionSpec& spec);

Mask whole_mask(const Grid& grid);
Mask full_boundary_mask(const Grid& grid);

struct Field {
  Grid grid;
  Eigen::VectorXd values;

  Field() = default;
  Field(Grid g, Eigen::VectorXd v);
};

struct BoundaryData {
  Grid grid;
  Mask mask;
  Eigen::VectorXd values;
};

Field sample_field(const Grid& grid, const std::function<double(const Point&)>& fn);

enum class NormKind : std::uint8_t { L2, H1, Lp };

struct NormSpec {
  NormKind kind = NormKind::L2;
  double p = 2.0;  // used by Lp; infinity selects the max norm
};

/// Grid gradient: centered differences, one-sided at boundary-adjacent nodes.
std::vector<Eigen::VectorXd> gradient(const Grid& grid, const Eigen::VectorXd& u);

double discrete_norm(const Grid& grid, const Eigen::VectorXd& u, NormSpec which,
                     const Mask* mask = nullptr);
double discrete_norm(const Field& u, NormSpec which, const Mask* mask = nullptr);

double l2_norm(const Grid& grid, const Eigen::VectorXd& u, const Mask* mask = nullptr);
double h1_norm(const Grid& grid, const Eigen::VectorXd& u, const Mask* mask = nullptr);
double lp_norm(const Grid& grid, const Eigen::VectorXd& u, double p, const Mask* mask = nullptr);

/// Cell-volume weighted inner product.
double inner(const Grid& grid, const Eigen::VectorXd& u, const Eigen::VectorXd& v);

/// Outward normal derivative with the second-order one-sided formula
/// (3*0 - 4 u_1 + u_2) / (2h), the field extended by zero on the boundary.
BoundaryData trace_neumann(const Field& u, const Mask& boundary_mask);

/// Outward normal derivative -u_1 / h. This is the flux that makes the
/// discrete Green identity of the 3/5-point stencil exact, so it is the
/// pairing used by the boundary-driven solver. For Dirichlet eigenvectors it
/// is second-order accurate because the curvature vanishes on the boundary.
BoundaryData trace_neumann_flux(const Field& u, const Mask& boundary_mask);

}  // namespace heatlab
