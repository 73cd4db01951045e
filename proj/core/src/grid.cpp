#include "robusto/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace robusto {

StructuredGrid::StructuredGrid(int nx_, int ny_, double width_, double height_)
    : nx(nx_), ny(ny_), width(width_), height(height_) {
  if (nx < 1 || ny < 1) {
    throw std::invalid_argument("grid must have at least 1x1 elements, got " +
                                std::to_string(nx) + "x" + std::to_string(ny));
  }
  if (!(width > 0.0) || !(height > 0.0)) {
    throw std::invalid_argument("grid domain must have positive extents, got " +
                                std::to_string(width) + " x " + std::to_string(height));
  }
}

std::array<int, 4> StructuredGrid::elem_nodes(int e) const {
  const int ex = elem_x(e), ey = elem_y(e);
  return {node_id(ex, ey), node_id(ex + 1, ey), node_id(ex + 1, ey + 1), node_id(ex, ey + 1)};
}

std::array<int, 8> StructuredGrid::elem_dofs(int e) const {
  const auto n = elem_nodes(e);
  return {2 * n[0], 2 * n[0] + 1, 2 * n[1], 2 * n[1] + 1,
          2 * n[2], 2 * n[2] + 1, 2 * n[3], 2 * n[3] + 1};
}

void LoadCase::validate(const StructuredGrid& grid) const {
  const int ndof = grid.num_dofs();
  if (force.size() != ndof) {
    throw std::invalid_argument("force vector length " + std::to_string(force.size()) +
                                " does not match " + std::to_string(ndof) + " DOFs");
  }
  int prev = -1;
  for (int d : fixed_dofs) {
    if (d < 0 || d >= ndof) {
      throw std::invalid_argument("fixed DOF " + std::to_string(d) + " out of range [0, " +
                                  std::to_string(ndof) + ")");
    }
    if (d <= prev) throw std::invalid_argument("fixed DOFs must be sorted and unique");
    prev = d;
    if (force[d] != 0.0) {
      throw std::invalid_argument("nonzero force on fixed DOF " + std::to_string(d));
    }
  }
}

LoadCase cantilever_load(const StructuredGrid& grid, double load_extent) {
  if (!(load_extent > 0.0 && load_extent <= 1.0)) {
    throw std::invalid_argument("load_extent must be in (0, 1], got " +
                                std::to_string(load_extent));
  }
  LoadCase lc;
  lc.force = Eigen::VectorXd::Zero(grid.num_dofs());

  for (int iy = 0; iy <= grid.ny; ++iy) {
    const int n = grid.node_id(0, iy);
    lc.fixed_dofs.push_back(2 * n);
    lc.fixed_dofs.push_back(2 * n + 1);
  }
  std::sort(lc.fixed_dofs.begin(), lc.fixed_dofs.end());

  // Uniform downward traction on the lowest k element edges of the right
  // boundary, total magnitude 1. Consistent lumping of a constant edge load
  // on linear edges: interior nodes get a full edge share, the two end nodes
  // half an edge share each.
  const int k = std::max(1, (int)std::lround(load_extent * grid.ny));
  const double per_edge = 1.0 / k;
  for (int iy = 0; iy < k; ++iy) {
    const int lo = grid.node_id(grid.nx, iy);
    const int hi = grid.node_id(grid.nx, iy + 1);
    lc.force[2 * lo + 1] -= 0.5 * per_edge;
    lc.force[2 * hi + 1] -= 0.5 * per_edge;
  }
  return lc;
}

}  // namespace robusto
