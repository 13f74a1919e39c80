#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "membrane_id/error.hpp"

namespace membrane_id {

/// Nodal values of a P1 function. Length is always Grid::num_nodes().
using NodalField = Eigen::VectorXd;

/// Per-node boolean flags (contact sets, observation regions).
using NodeMask = std::vector<std::uint8_t>;

/// Uniform triangulation of the unit square with n nodes per axis.
///
/// Node (i, j) sits at (i * spacing, j * spacing) and has index j * n + i.
/// Each cell is split along the diagonal (i, j) -> (i+1, j+1) into a lower
/// triangle {(i,j), (i+1,j), (i+1,j+1)} and an upper triangle
/// {(i,j), (i+1,j+1), (i,j+1)}, both positively oriented.
class Grid {
 public:
  using Triangle = std::array<int, 3>;

  explicit Grid(int n) : n_(n) {
    require(n >= 2, "grid needs at least 2 nodes per axis, got " + std::to_string(n));
    spacing_ = 1.0 / (n - 1);
    boundary_.assign(static_cast<std::size_t>(n) * n, 0);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const bool on_boundary = i == 0 || j == 0 || i == n - 1 || j == n - 1;
        boundary_[index(i, j)] = on_boundary;
        (on_boundary ? boundary_nodes_ : free_nodes_).push_back(index(i, j));
      }
    }
    triangles_.reserve(static_cast<std::size_t>(2) * (n - 1) * (n - 1));
    for (int j = 0; j + 1 < n; ++j) {
      for (int i = 0; i + 1 < n; ++i) {
        triangles_.push_back({index(i, j), index(i + 1, j), index(i + 1, j + 1)});
        triangles_.push_back({index(i, j), index(i + 1, j + 1), index(i, j + 1)});
      }
    }
  }

  int n() const noexcept { return n_; }
  double spacing() const noexcept { return spacing_; }
  int num_nodes() const noexcept { return n_ * n_; }
  int num_triangles() const noexcept { return static_cast<int>(triangles_.size()); }

  int index(int i, int j) const noexcept { return j * n_ + i; }
  int col(int node) const noexcept { return node % n_; }
  int row(int node) const noexcept { return node / n_; }
  double x(int node) const noexcept { return col(node) * spacing_; }
  double y(int node) const noexcept { return row(node) * spacing_; }

  bool is_boundary(int node) const noexcept { return boundary_[node] != 0; }
  const std::vector<int>& boundary_nodes() const noexcept { return boundary_nodes_; }
  const std::vector<int>& free_nodes() const noexcept { return free_nodes_; }
  const std::vector<Triangle>& triangles() const noexcept { return triangles_; }

  /// Lower triangles have even index; their element matrix differs from upper ones.
  static bool is_lower(int triangle) noexcept { return triangle % 2 == 0; }

  double signed_area(const Triangle& t) const noexcept {
    const double x0 = x(t[0]), y0 = y(t[0]);
    return 0.5 * ((x(t[1]) - x0) * (y(t[2]) - y0) - (x(t[2]) - x0) * (y(t[1]) - y0));
  }

  bool operator==(const Grid& other) const noexcept { return n_ == other.n_; }

 private:
  int n_;
  double spacing_;
  NodeMask boundary_;
  std::vector<int> boundary_nodes_;
  std::vector<int> free_nodes_;
  std::vector<Triangle> triangles_;
};

inline Grid build_grid(int n) { return Grid(n); }

/// Homogeneous Dirichlet data on the whole boundary of the square.
struct BoundaryCondition {
  std::vector<int> nodes;

  static BoundaryCondition homogeneous(const Grid& grid) { return {grid.boundary_nodes()}; }
};

/// Samples fn(x1, x2) at every node.
template <typename Fn>
NodalField interpolate(const Grid& grid, Fn&& fn) {
  NodalField out(grid.num_nodes());
  for (int k = 0; k < grid.num_nodes(); ++k) out[k] = fn(grid.x(k), grid.y(k));
  return out;
}

inline NodalField constant_field(const Grid& grid, double value) {
  return NodalField::Constant(grid.num_nodes(), value);
}

inline void check_field(const Grid& grid, const NodalField& field, const char* name) {
  if (field.size() != grid.num_nodes()) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(name) + " has " + std::to_string(field.size()) + " entries, grid has " +
                    std::to_string(grid.num_nodes()) + " nodes");
  }
  if (!field.allFinite()) throw Error(ErrorCode::InvalidArgument, std::string(name) + " has non-finite entries");
}

inline int count(const NodeMask& mask) {
  int c = 0;
  for (auto m : mask) c += m != 0;
  return c;
}

}  // namespace membrane_id
