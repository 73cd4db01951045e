#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

namespace robusto {

// Structured grid of nx-by-ny identical rectangular bilinear elements over a
// width-by-height domain. Nodes are numbered column-major (id = ix*(ny+1)+iy,
// iy growing upward), elements row-major bottom-to-top (id = ey*nx + ex).
// Node n carries DOFs 2n (x) and 2n+1 (y).
struct StructuredGrid {
  int nx = 0;
  int ny = 0;
  double width = 0.0;
  double height = 0.0;

  StructuredGrid() = default;
  StructuredGrid(int nx_, int ny_, double width_, double height_);

  int num_nodes() const { return (nx + 1) * (ny + 1); }
  int num_dofs() const { return 2 * num_nodes(); }
  int num_elems() const { return nx * ny; }

  double elem_w() const { return width / nx; }
  double elem_h() const { return height / ny; }
  double elem_volume() const { return elem_w() * elem_h(); }
  double domain_volume() const { return width * height; }

  int node_id(int ix, int iy) const { return ix * (ny + 1) + iy; }
  int elem_id(int ex, int ey) const { return ey * nx + ex; }
  int elem_x(int e) const { return e % nx; }
  int elem_y(int e) const { return e / nx; }

  // Corner nodes counterclockwise from bottom-left.
  std::array<int, 4> elem_nodes(int e) const;
  // The 8 global DOFs of an element, (x,y) per corner in elem_nodes order.
  std::array<int, 8> elem_dofs(int e) const;
};

// One static load case: homogeneous Dirichlet DOFs plus a nodal force vector.
struct LoadCase {
  std::vector<int> fixed_dofs;  // sorted, unique, in range
  Eigen::VectorXd force;        // length grid.num_dofs()

  // Throws std::invalid_argument on out-of-range/duplicate fixed DOFs,
  // wrong force length, or nonzero force on a fixed DOF.
  void validate(const StructuredGrid& grid) const;
};

// Cantilever: left edge fully clamped, unit total downward load spread over
// the bottom `load_extent` fraction of the right edge (consistent nodal
// forces of a uniform edge traction; at least one element's edge).
LoadCase cantilever_load(const StructuredGrid& grid, double load_extent = 0.05);

}  // namespace robusto
