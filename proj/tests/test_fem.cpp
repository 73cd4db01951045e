#include <doctest.h>

#include <robusto/fem.hpp>
#include <robusto/grid.hpp>
#include <robusto/material.hpp>
#include <robusto/oracle.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "test_util.hpp"

using robusto::LoadCase;
using robusto::MaterialParams;
using robusto::SparseSpdSystem;
using robusto::StateSolver;
using robusto::StructuredGrid;

TEST_CASE("grid numbering walks columns for nodes and rows for elements") {
  StructuredGrid grid(3, 2, 3.0, 2.0);
  CHECK(grid.num_nodes() == 12);
  CHECK(grid.num_dofs() == 24);
  CHECK(grid.num_elems() == 6);
  CHECK(grid.node_id(0, 0) == 0);
  CHECK(grid.node_id(0, 2) == 2);
  CHECK(grid.node_id(1, 0) == 3);
  CHECK(grid.elem_id(0, 0) == 0);
  CHECK(grid.elem_id(2, 0) == 2);
  CHECK(grid.elem_id(0, 1) == 3);
  CHECK(grid.elem_x(5) == 2);
  CHECK(grid.elem_y(5) == 1);

  // Element (1,0): corners CCW from bottom-left.
  const auto nodes = grid.elem_nodes(grid.elem_id(1, 0));
  CHECK(nodes[0] == grid.node_id(1, 0));
  CHECK(nodes[1] == grid.node_id(2, 0));
  CHECK(nodes[2] == grid.node_id(2, 1));
  CHECK(nodes[3] == grid.node_id(1, 1));
  const auto dofs = grid.elem_dofs(grid.elem_id(1, 0));
  for (int c = 0; c < 4; ++c) {
    CHECK(dofs[2 * c] == 2 * nodes[c]);
    CHECK(dofs[2 * c + 1] == 2 * nodes[c] + 1);
  }

  CHECK(grid.elem_w() == doctest::Approx(1.0));
  CHECK(grid.elem_h() == doctest::Approx(1.0));
  CHECK(grid.elem_volume() == doctest::Approx(1.0));
  CHECK(grid.domain_volume() == doctest::Approx(6.0));
}

TEST_CASE("unit-square plane-strain stiffness corner entry") {
  StructuredGrid grid(1, 1, 1.0, 1.0);
  MaterialParams mat;
  const auto ke = robusto::element_stiffness_template(grid, mat);
  // Closed form for the bilinear square at E=1, nu=0.3 (plane strain):
  // K(0,0) = (C00 + C22) / 3 = (35/26 + 10/26) / 3 = 15/26.
  CHECK(ke(0, 0) == doctest::Approx(15.0 / 26.0).epsilon(1e-14));
  CHECK((ke - ke.transpose()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("stiffness template agrees with the independent dense quadrature") {
  MaterialParams mat;
  SUBCASE("square element") {
    StructuredGrid grid(2, 2, 2.0, 2.0);
    const auto ke = robusto::element_stiffness_template(grid, mat);
    const auto ref = robusto::oracle::dense_element_matrix(1.0, 1.0, mat);
    CHECK((ke - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("wide element, plane stress") {
    mat.plane_model = robusto::PlaneModel::Stress;
    StructuredGrid grid(4, 2, 8.0, 2.0);
    const auto ke = robusto::element_stiffness_template(grid, mat);
    const auto ref = robusto::oracle::dense_element_matrix(2.0, 1.0, mat);
    CHECK((ke - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("stiffness template has exactly the three rigid-body modes") {
  StructuredGrid grid(1, 1, 1.5, 0.75);
  MaterialParams mat;
  const auto ke = robusto::element_stiffness_template(grid, mat);

  Eigen::Matrix<double, 8, 1> tx, ty, rot;
  const double xs[4] = {0.0, 1.5, 1.5, 0.0};
  const double ys[4] = {0.0, 0.0, 0.75, 0.75};
  for (int c = 0; c < 4; ++c) {
    tx[2 * c] = 1.0;
    tx[2 * c + 1] = 0.0;
    ty[2 * c] = 0.0;
    ty[2 * c + 1] = 1.0;
    rot[2 * c] = -ys[c];
    rot[2 * c + 1] = xs[c];
  }
  CHECK((ke * tx).norm() < 1e-13);
  CHECK((ke * ty).norm() < 1e-13);
  CHECK((ke * rot).norm() < 1e-13);

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 8, 8>> es(ke);
  const auto ev = es.eigenvalues();
  CHECK(ev[0] > -1e-13);
  CHECK(ev[2] < 1e-12);
  CHECK(ev[3] > 1e-3);
}

TEST_CASE("dof map reduces and expands consistently") {
  StructuredGrid grid(2, 2, 2.0, 2.0);
  std::vector<int> fixed = {0, 1, 5, 10};
  robusto::DofMap dm(grid, fixed);
  CHECK(dm.num_free() == grid.num_dofs() - 4);
  for (int d : fixed) CHECK(dm.to_reduced(d) == -1);

  int seen = 0;
  for (int d = 0; d < grid.num_dofs(); ++d) {
    const int r = dm.to_reduced(d);
    if (r >= 0) {
      CHECK(dm.to_full(r) == d);
      ++seen;
    }
  }
  CHECK(seen == dm.num_free());

  const Eigen::VectorXd full = testutil::random_vector(grid.num_dofs(), 7u);
  const Eigen::VectorXd red = dm.reduce(full);
  CHECK(red.size() == dm.num_free());
  const Eigen::VectorXd back = dm.expand(red);
  for (int d : fixed) CHECK(back[d] == 0.0);
  for (int r = 0; r < dm.num_free(); ++r) CHECK(back[dm.to_full(r)] == full[dm.to_full(r)]);
}

TEST_CASE("assembled stiffness scales exactly with the density power law") {
  StructuredGrid grid(3, 2, 3.0, 2.0);
  MaterialParams mat;
  LoadCase load = robusto::cantilever_load(grid, 0.5);
  SparseSpdSystem sys(grid, load.fixed_dofs);

  const Eigen::VectorXd delta = Eigen::VectorXd::Constant(grid.num_elems(), 0.5);
  sys.assemble(Eigen::VectorXd::Ones(grid.num_elems()), delta, mat);
  const Eigen::SparseMatrix<double> k1 = sys.matrix();
  sys.assemble(Eigen::VectorXd::Constant(grid.num_elems(), 0.5), delta, mat);
  const Eigen::SparseMatrix<double> khalf = sys.matrix();

  // rho = 0.5 scales every element by 0.5^5 = 0.03125 exactly.
  const Eigen::MatrixXd diff = Eigen::MatrixXd(khalf) - 0.03125 * Eigen::MatrixXd(k1);
  CHECK(diff.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("defect field rescales stiffness through the effective modulus") {
  StructuredGrid grid(2, 2, 2.0, 2.0);
  MaterialParams mat;
  LoadCase load = robusto::cantilever_load(grid, 0.5);
  SparseSpdSystem sys(grid, load.fixed_dofs);
  const Eigen::VectorXd rho = testutil::random_density(grid.num_elems(), 3u, 0.2, 1.0);

  sys.assemble(rho, Eigen::VectorXd::Zero(grid.num_elems()), mat);
  const Eigen::MatrixXd k0 = Eigen::MatrixXd(sys.matrix());
  sys.assemble(rho, Eigen::VectorXd::Constant(grid.num_elems(), 0.5), mat);
  const Eigen::MatrixXd kh = Eigen::MatrixXd(sys.matrix());
  CHECK((kh - (6.0 / 7.0) * k0).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("sparse state solve matches the dense reference on a 4x2 cantilever") {
  StructuredGrid grid(4, 2, 2.0, 1.0);
  MaterialParams mat;
  LoadCase load = robusto::cantilever_load(grid, 0.5);
  load.validate(grid);

  const Eigen::VectorXd rho = testutil::random_density(grid.num_elems(), 11u, 0.3, 1.0);
  const Eigen::VectorXd delta = testutil::random_density(grid.num_elems(), 12u, 0.1, 0.9);

  SparseSpdSystem sys(grid, load.fixed_dofs);
  sys.assemble(rho, delta, mat);
  const Eigen::VectorXd u = robusto::solve_state(sys, load);

  const auto inst = robusto::oracle::TinyInstance::from(grid, load, mat);
  const auto ref = robusto::oracle::dense_solve(inst, rho, delta);

  CHECK((u - ref.u).cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, ref.u.cwiseAbs().maxCoeff()));
  CHECK(robusto::compliance(load, u) == doctest::Approx(ref.compliance).epsilon(1e-10));
}

TEST_CASE("equilibrium identities tie compliance, energy, and element sums") {
  StructuredGrid grid(5, 3, 2.5, 1.5);
  MaterialParams mat;
  LoadCase load = robusto::cantilever_load(grid, 0.4);
  const Eigen::VectorXd rho = testutil::random_density(grid.num_elems(), 21u, 0.2, 1.0);
  const Eigen::VectorXd delta = testutil::random_density(grid.num_elems(), 22u, 0.2, 0.8);

  SparseSpdSystem sys(grid, load.fixed_dofs);
  sys.assemble(rho, delta, mat);
  const Eigen::VectorXd u = robusto::solve_state(sys, load);

  const double c = robusto::compliance(load, u);
  CHECK(c == doctest::Approx(load.force.dot(u)).epsilon(1e-14));

  const Eigen::VectorXd q = robusto::element_energies(grid, rho, delta, u, mat);
  CHECK(q.minCoeff() >= 0.0);
  CHECK(q.sum() == doctest::Approx(c).epsilon(1e-10));

  // Scaled template energies reproduce the full element energies.
  const Eigen::VectorXd qbar =
      robusto::element_template_energies(grid, sys.elem_template(), u);
  for (int e = 0; e < grid.num_elems(); ++e) {
    const double scale =
        robusto::simp_scale(rho[e], mat) * robusto::effective_modulus(delta[e], mat);
    CHECK(q[e] == doctest::Approx(scale * qbar[e]).epsilon(1e-12));
  }
}

TEST_CASE("direct and conjugate-gradient paths agree") {
  StructuredGrid grid(12, 6, 2.0, 1.0);
  MaterialParams mat;
  LoadCase load = robusto::cantilever_load(grid, 0.2);
  const Eigen::VectorXd rho = testutil::random_density(grid.num_elems(), 31u, 0.3, 1.0);
  const Eigen::VectorXd delta = Eigen::VectorXd::Constant(grid.num_elems(), 0.5);

  SparseSpdSystem sys(grid, load.fixed_dofs);
  sys.assemble(rho, delta, mat);
  const Eigen::VectorXd ud = robusto::solve_state(sys, load, StateSolver::Direct);
  const Eigen::VectorXd uc = robusto::solve_state(sys, load, StateSolver::Cg);
  CHECK((ud - uc).norm() < 1e-8 * ud.norm());
}

TEST_CASE("state solve residual is enforced, not hoped for") {
  StructuredGrid grid(8, 4, 2.0, 1.0);
  MaterialParams mat;
  LoadCase load = robusto::cantilever_load(grid, 0.3);
  SparseSpdSystem sys(grid, load.fixed_dofs);
  sys.assemble(testutil::random_density(grid.num_elems(), 41u, 0.1, 1.0),
               testutil::random_density(grid.num_elems(), 42u, 0.05, 0.95), mat);
  const Eigen::VectorXd u = robusto::solve_state(sys, load);

  const Eigen::VectorXd fr = sys.dofs().reduce(load.force);
  const Eigen::VectorXd ur = sys.dofs().reduce(u);
  const double res = (sys.matrix() * ur - fr).norm();
  CHECK(res <= 1e-10 * std::max(1.0, fr.norm()));
}

TEST_CASE("load validation rejects malformed cases") {
  StructuredGrid grid(2, 2, 2.0, 2.0);
  LoadCase ok = robusto::cantilever_load(grid, 0.5);
  CHECK_NOTHROW(ok.validate(grid));

  LoadCase wrong_len = ok;
  wrong_len.force = Eigen::VectorXd::Zero(grid.num_dofs() - 1);
  CHECK_THROWS_AS(wrong_len.validate(grid), std::invalid_argument);

  LoadCase dup = ok;
  dup.fixed_dofs.push_back(dup.fixed_dofs.front());
  std::sort(dup.fixed_dofs.begin(), dup.fixed_dofs.end());
  CHECK_THROWS_AS(dup.validate(grid), std::invalid_argument);

  LoadCase range = ok;
  range.fixed_dofs.push_back(grid.num_dofs());
  CHECK_THROWS_AS(range.validate(grid), std::invalid_argument);

  LoadCase clash = ok;
  clash.force[clash.fixed_dofs.front()] = 1.0;
  CHECK_THROWS_AS(clash.validate(grid), std::invalid_argument);
}

TEST_CASE("cantilever load clamps the left edge and pulls down a unit force") {
  StructuredGrid grid(20, 10, 2.0, 1.0);
  LoadCase load = robusto::cantilever_load(grid, 0.05);
  CHECK_NOTHROW(load.validate(grid));

  // Both DOFs of every left-edge node are fixed, nothing else.
  std::vector<int> expect;
  for (int iy = 0; iy <= grid.ny; ++iy) {
    expect.push_back(2 * grid.node_id(0, iy));
    expect.push_back(2 * grid.node_id(0, iy) + 1);
  }
  std::sort(expect.begin(), expect.end());
  CHECK(load.fixed_dofs == expect);

  CHECK(load.force.sum() == doctest::Approx(-1.0).epsilon(1e-12));
  for (int n = 0; n < grid.num_nodes(); ++n) CHECK(load.force[2 * n] == 0.0);
  // Load lives on the bottom of the right edge only.
  for (int ix = 0; ix < grid.nx; ++ix)
    for (int iy = 0; iy <= grid.ny; ++iy)
      CHECK(load.force[2 * grid.node_id(ix, iy) + 1] == 0.0);
  CHECK(load.force[2 * grid.node_id(grid.nx, 0) + 1] < 0.0);
  CHECK(load.force[2 * grid.node_id(grid.nx, grid.ny) + 1] == 0.0);
}

TEST_CASE("tiny load extent still covers one element edge") {
  StructuredGrid grid(4, 2, 2.0, 1.0);
  LoadCase load = robusto::cantilever_load(grid, 1e-4);
  CHECK(load.force.sum() == doctest::Approx(-1.0).epsilon(1e-12));
  // One element edge: exactly the two lowest right-edge nodes carry force.
  CHECK(load.force[2 * grid.node_id(4, 0) + 1] < 0.0);
  CHECK(load.force[2 * grid.node_id(4, 1) + 1] < 0.0);
  CHECK(load.force[2 * grid.node_id(4, 2) + 1] == 0.0);
}

TEST_CASE("grid constructor rejects degenerate shapes") {
  CHECK_THROWS_AS(StructuredGrid(0, 2, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(StructuredGrid(2, -1, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(StructuredGrid(2, 2, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(StructuredGrid(2, 2, 1.0, -3.0), std::invalid_argument);
}
