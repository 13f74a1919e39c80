#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "membrane_id/error.hpp"
#include "membrane_id/grid.hpp"

namespace membrane_id {

using SparseMatrix = Eigen::SparseMatrix<double>;

namespace element {

// Unit-coefficient P1 stiffness of the two reference triangles. Both are
// independent of the spacing in 2D.
inline constexpr double kLower[3][3] = {{0.5, -0.5, 0.0}, {-0.5, 1.0, -0.5}, {0.0, -0.5, 0.5}};
inline constexpr double kUpper[3][3] = {{0.5, 0.0, -0.5}, {0.0, 0.5, -0.5}, {-0.5, -0.5, 1.0}};

inline const double (&stiffness(int triangle))[3][3] { return Grid::is_lower(triangle) ? kLower : kUpper; }

inline double mean_coefficient(const Grid::Triangle& t, const NodalField& a) {
  return (a[t[0]] + a[t[1]] + a[t[2]]) / 3.0;
}

}  // namespace element

/// Symmetric sparse operator over all n^2 nodes. `eliminated` lists the rows
/// (and columns) that were replaced by identity rows.
struct SparseSymOperator {
  SparseMatrix matrix;
  std::vector<int> eliminated;

  int dimension() const { return static_cast<int>(matrix.rows()); }
  double entry(int row, int col) const { return matrix.coeff(row, col); }
  NodalField apply(const NodalField& v) const { return matrix * v; }
};

namespace detail {

// No sign check on the coefficient: derivative directions may be negative.
inline SparseMatrix assemble(const Grid& grid, const NodalField& coeff) {
  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> upper;
  upper.reserve(static_cast<std::size_t>(grid.num_triangles()) * 6);
  const auto& tris = grid.triangles();
  for (int t = 0; t < grid.num_triangles(); ++t) {
    const auto& tri = tris[t];
    const auto& ke = element::stiffness(t);
    const double abar = element::mean_coefficient(tri, coeff);
    for (int p = 0; p < 3; ++p) {
      for (int q = 0; q < 3; ++q) {
        if (ke[p][q] == 0.0 || tri[p] > tri[q]) continue;
        upper.emplace_back(tri[p], tri[q], abar * ke[p][q]);
      }
    }
  }
  const int dim = grid.num_nodes();
  SparseMatrix summed(dim, dim);
  summed.setFromTriplets(upper.begin(), upper.end());

  std::vector<Triplet> full;
  full.reserve(static_cast<std::size_t>(summed.nonZeros()) * 2);
  for (int c = 0; c < summed.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(summed, c); it; ++it) {
      full.emplace_back(it.row(), it.col(), it.value());
      if (it.row() != it.col()) full.emplace_back(it.col(), it.row(), it.value());
    }
  }
  SparseMatrix out(dim, dim);
  out.setFromTriplets(full.begin(), full.end());
  return out;
}

}  // namespace detail

/// Coefficient-weighted P1 stiffness K(a), element coefficient = vertex mean.
/// No boundary treatment; see apply_dirichlet.
inline SparseSymOperator assemble_stiffness(const Grid& grid, const NodalField& a) {
  check_field(grid, a, "coefficient");
  if ((a.array() <= 0.0).any()) throw Error(ErrorCode::InvalidArgument, "coefficient must be strictly positive");
  return {detail::assemble(grid, a), {}};
}

/// K(coeff) * u without forming K. Any sign of coeff is allowed.
inline NodalField apply_stiffness(const Grid& grid, const NodalField& coeff, const NodalField& u) {
  NodalField out = NodalField::Zero(grid.num_nodes());
  const auto& tris = grid.triangles();
  for (int t = 0; t < grid.num_triangles(); ++t) {
    const auto& tri = tris[t];
    const auto& ke = element::stiffness(t);
    const double abar = element::mean_coefficient(tri, coeff);
    for (int p = 0; p < 3; ++p) {
      double acc = 0.0;
      for (int q = 0; q < 3; ++q) acc += ke[p][q] * u[tri[q]];
      out[tri[p]] += abar * acc;
    }
  }
  return out;
}

/// g_k = w^T K(e_k) u, i.e. the gradient of the bilinear form w^T K(a) u with
/// respect to the nodal coefficient values.
inline NodalField stiffness_coefficient_gradient(const Grid& grid, const NodalField& u, const NodalField& w) {
  NodalField g = NodalField::Zero(grid.num_nodes());
  const auto& tris = grid.triangles();
  for (int t = 0; t < grid.num_triangles(); ++t) {
    const auto& tri = tris[t];
    const auto& ke = element::stiffness(t);
    double s = 0.0;
    for (int p = 0; p < 3; ++p) {
      double acc = 0.0;
      for (int q = 0; q < 3; ++q) acc += ke[p][q] * u[tri[q]];
      s += w[tri[p]] * acc;
    }
    s /= 3.0;
    for (int p = 0; p < 3; ++p) g[tri[p]] += s;
  }
  return g;
}

/// Lumped-mass load: each triangle gives area/3 * f_i to its vertices.
inline NodalField assemble_load(const Grid& grid, const NodalField& f) {
  check_field(grid, f, "load density");
  NodalField patch = NodalField::Zero(grid.num_nodes());
  const double third_area = grid.spacing() * grid.spacing() / 6.0;
  for (const auto& tri : grid.triangles()) {
    for (int v : tri) patch[v] += third_area;
  }
  return f.cwiseProduct(patch);
}

/// Symmetric elimination of homogeneous Dirichlet rows: identity row/column,
/// zero right-hand side. Idempotent.
inline std::pair<SparseSymOperator, NodalField> apply_dirichlet(const SparseSymOperator& op, const NodalField& rhs,
                                                                const BoundaryCondition& bc) {
  require(rhs.size() == op.dimension(), "rhs length does not match operator dimension");
  std::vector<std::uint8_t> fixed(static_cast<std::size_t>(op.dimension()), 0);
  for (int k : bc.nodes) {
    require(k >= 0 && k < op.dimension(), "boundary node out of range");
    fixed[k] = 1;
  }
  SparseSymOperator out;
  out.matrix = op.matrix;
  for (int c = 0; c < out.matrix.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(out.matrix, c); it; ++it) {
      if (fixed[it.row()] || fixed[it.col()]) it.valueRef() = it.row() == it.col() ? 1.0 : 0.0;
    }
  }
  for (int k : bc.nodes) {
    if (out.matrix.coeff(k, k) != 1.0) out.matrix.coeffRef(k, k) = 1.0;
  }
  out.matrix.prune(0.0);
  out.eliminated = op.eliminated;
  for (int k : bc.nodes) {
    if (std::find(out.eliminated.begin(), out.eliminated.end(), k) == out.eliminated.end()) out.eliminated.push_back(k);
  }
  std::sort(out.eliminated.begin(), out.eliminated.end());
  NodalField b = rhs;
  for (int k : bc.nodes) b[k] = 0.0;
  return {std::move(out), std::move(b)};
}

/// Stiffness with the full boundary eliminated, as used by every solver.
inline SparseSymOperator dirichlet_stiffness(const Grid& grid, const NodalField& a) {
  auto [op, rhs] = apply_dirichlet(assemble_stiffness(grid, a), NodalField::Zero(grid.num_nodes()),
                                   BoundaryCondition::homogeneous(grid));
  return std::move(op);
}

/// Sparse Cholesky with a reusable symbolic analysis. Successive factorize()
/// calls must share the sparsity pattern given at construction.
class SpdSolver {
 public:
  static constexpr double kRelativeTolerance = 1e-10;

  SpdSolver() = default;
  explicit SpdSolver(const SparseMatrix& matrix) {
    llt_.analyzePattern(matrix);
    analyzed_ = true;
    factorize(matrix);
  }

  void factorize(const SparseMatrix& matrix) {
    if (!analyzed_) {
      llt_.analyzePattern(matrix);
      analyzed_ = true;
    }
    llt_.factorize(matrix);
    if (llt_.info() != Eigen::Success) {
      throw Error(ErrorCode::NumericalFailure,
                  "Cholesky factorization failed (matrix not positive definite), dimension " +
                      std::to_string(matrix.rows()));
    }
    matrix_ = matrix;
  }

  NodalField solve(const NodalField& rhs) const {
    require(rhs.size() == matrix_.rows(), "rhs length does not match factorized operator");
    NodalField x = llt_.solve(rhs);
    const double bound = kRelativeTolerance * (1.0 + rhs.norm());
    NodalField r = rhs - matrix_ * x;
    for (int refine = 0; refine < 3 && !(r.norm() <= bound); ++refine) {
      x += llt_.solve(r);
      r = rhs - matrix_ * x;
    }
    if (!(r.norm() <= bound)) {
      throw Error(ErrorCode::NumericalFailure, "linear solve residual " + std::to_string(r.norm()) +
                                                   " exceeds bound " + std::to_string(bound));
    }
    return x;
  }

  const SparseMatrix& matrix() const { return matrix_; }

 private:
  Eigen::SimplicialLLT<SparseMatrix> llt_;
  SparseMatrix matrix_;
  bool analyzed_ = false;
};

inline NodalField solve_spd(const SparseSymOperator& op, const NodalField& rhs) {
  return SpdSolver(op.matrix).solve(rhs);
}

struct Norms {
  double linf = 0.0;
  double l2 = 0.0;
  double h1_semi = 0.0;
};

/// Unit-coefficient Dirichlet energy sum_T v_T^T K_T v_T over the triangles
/// selected by keep(triangle_index).
template <typename Keep>
double h1_seminorm_squared_where(const Grid& grid, const NodalField& v, Keep&& keep) {
  double total = 0.0;
  const auto& tris = grid.triangles();
  for (int t = 0; t < grid.num_triangles(); ++t) {
    if (!keep(t)) continue;
    const auto& tri = tris[t];
    const auto& ke = element::stiffness(t);
    for (int p = 0; p < 3; ++p) {
      for (int q = 0; q < 3; ++q) total += v[tri[p]] * ke[p][q] * v[tri[q]];
    }
  }
  return std::max(total, 0.0);
}

inline double h1_seminorm(const Grid& grid, const NodalField& v) {
  return std::sqrt(h1_seminorm_squared_where(grid, v, [](int) { return true; }));
}

inline Norms norms(const Grid& grid, const NodalField& field) {
  check_field(grid, field, "field");
  Norms out;
  out.linf = field.size() ? field.cwiseAbs().maxCoeff() : 0.0;
  out.l2 = field.norm();
  out.h1_semi = h1_seminorm(grid, field);
  return out;
}

/// Nodal sampling of a fine-grid field at the nodes of a nested coarse grid.
inline NodalField restrict_field(const NodalField& fine, const Grid& fine_grid, const Grid& coarse_grid) {
  check_field(fine_grid, fine, "fine field");
  const int fine_cells = fine_grid.n() - 1;
  const int coarse_cells = coarse_grid.n() - 1;
  if (fine_cells % coarse_cells != 0) {
    throw Error(ErrorCode::InvalidArgument, "grids are not nested: " + std::to_string(fine_grid.n()) + " -> " +
                                                std::to_string(coarse_grid.n()));
  }
  const int stride = fine_cells / coarse_cells;
  NodalField out(coarse_grid.num_nodes());
  for (int j = 0; j < coarse_grid.n(); ++j) {
    for (int i = 0; i < coarse_grid.n(); ++i) out[coarse_grid.index(i, j)] = fine[fine_grid.index(i * stride, j * stride)];
  }
  return out;
}

/// P1 interpolation of a coarse field at the nodes of a nested fine grid.
inline NodalField prolongate(const NodalField& coarse, const Grid& coarse_grid, const Grid& fine_grid) {
  check_field(coarse_grid, coarse, "coarse field");
  const int fine_cells = fine_grid.n() - 1;
  const int coarse_cells = coarse_grid.n() - 1;
  if (fine_cells % coarse_cells != 0) {
    throw Error(ErrorCode::InvalidArgument, "grids are not nested: " + std::to_string(coarse_grid.n()) + " -> " +
                                                std::to_string(fine_grid.n()));
  }
  const int stride = fine_cells / coarse_cells;
  NodalField out(fine_grid.num_nodes());
  for (int fj = 0; fj < fine_grid.n(); ++fj) {
    for (int fi = 0; fi < fine_grid.n(); ++fi) {
      const int i = std::min(fi / stride, coarse_cells - 1);
      const int j = std::min(fj / stride, coarse_cells - 1);
      const double xi = static_cast<double>(fi - i * stride) / stride;
      const double eta = static_cast<double>(fj - j * stride) / stride;
      const double v00 = coarse[coarse_grid.index(i, j)];
      const double v11 = coarse[coarse_grid.index(i + 1, j + 1)];
      double value;
      if (xi >= eta) {
        value = (1.0 - xi) * v00 + (xi - eta) * coarse[coarse_grid.index(i + 1, j)] + eta * v11;
      } else {
        value = (1.0 - eta) * v00 + xi * v11 + (eta - xi) * coarse[coarse_grid.index(i, j + 1)];
      }
      out[fine_grid.index(fi, fj)] = value;
    }
  }
  return out;
}

}  // namespace membrane_id
