#include <doctest.h>

#include <robusto/density_filter.hpp>
#include <robusto/grid.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "test_util.hpp"

using robusto::FilterOperator;
using robusto::StructuredGrid;

TEST_CASE("center row of a 5x5 radius-2 filter carries the cone weights") {
  StructuredGrid grid(5, 5, 5.0, 5.0);
  const auto filt = FilterOperator::build(grid, 2.0);
  const auto& w = filt.weights();
  const int center = grid.elem_id(2, 2);

  // Cone weights before normalization: self 2, axial 1, diagonal 2 - sqrt(2);
  // normalizer 6 + 4 * (2 - sqrt(2)).
  const double self = 0.23971773474990707;
  const double axial = 0.11985886737495353;
  const double diag = 0.070211698937569678;

  int nnz = 0;
  for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(w, center); it; ++it) {
    ++nnz;
    const int jx = grid.elem_x(it.col()), jy = grid.elem_y(it.col());
    const int manhattan = std::abs(jx - 2) + std::abs(jy - 2);
    const double expect = manhattan == 0 ? self : (manhattan == 1 ? axial : diag);
    CHECK(it.value() == doctest::Approx(expect).epsilon(1e-14));
  }
  CHECK(nnz == 9);

  // A unit spike at the center spreads with the same weights (the full
  // 9-neighborhood of every involved element lies inside the grid).
  Eigen::VectorXd spike = Eigen::VectorXd::Zero(grid.num_elems());
  spike[center] = 1.0;
  const Eigen::VectorXd blurred = filt.apply(spike);
  CHECK(blurred[center] == doctest::Approx(self).epsilon(1e-14));
  CHECK(blurred[grid.elem_id(1, 2)] == doctest::Approx(axial).epsilon(1e-14));
  CHECK(blurred[grid.elem_id(3, 3)] == doctest::Approx(diag).epsilon(1e-14));
  CHECK(blurred[grid.elem_id(0, 0)] == 0.0);
}

TEST_CASE("every row sums to one, boundary rows included") {
  for (const auto& [nx, ny, r] : {std::tuple{5, 5, 2.0}, {12, 7, 2.1}, {3, 9, 3.5}, {20, 10, 1.4}}) {
    StructuredGrid grid(nx, ny, (double)nx, (double)ny);
    const auto filt = FilterOperator::build(grid, r);
    const Eigen::VectorXd sums = filt.apply(Eigen::VectorXd::Ones(grid.num_elems()));
    for (int e = 0; e < grid.num_elems(); ++e) {
      CHECK(std::abs(sums[e] - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("radius at the element pitch degenerates to the identity") {
  StructuredGrid grid(6, 4, 6.0, 4.0);
  const auto filt = FilterOperator::build(grid, 1.0);
  CHECK(filt.weights().nonZeros() == grid.num_elems());
  const Eigen::VectorXd x = testutil::random_density(grid.num_elems(), 5u);
  CHECK((filt.apply(x) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("chain rule is the exact adjoint of apply") {
  StructuredGrid grid(9, 6, 3.0, 2.0);
  const auto filt = FilterOperator::build(grid, 2.4);
  for (unsigned seed = 0; seed < 5; ++seed) {
    const Eigen::VectorXd x = testutil::random_vector(grid.num_elems(), 100 + seed);
    const Eigen::VectorXd y = testutil::random_vector(grid.num_elems(), 200 + seed);
    const double lhs = filt.apply(x).dot(y);
    const double rhs = x.dot(filt.chain_rule(y));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
  }
}

TEST_CASE("filtering is an averaging map: bounds hold and contrast shrinks") {
  StructuredGrid grid(8, 8, 8.0, 8.0);
  const auto filt = FilterOperator::build(grid, 2.0);

  Eigen::VectorXd checker(grid.num_elems());
  for (int e = 0; e < grid.num_elems(); ++e) {
    checker[e] = ((grid.elem_x(e) + grid.elem_y(e)) % 2 == 0) ? 1.0 : 0.0;
  }
  const Eigen::VectorXd smooth = filt.apply(checker);
  CHECK(smooth.minCoeff() >= 0.0);
  CHECK(smooth.maxCoeff() <= 1.0);
  CHECK((smooth.array() - 0.5).abs().maxCoeff() <
        (checker.array() - 0.5).abs().maxCoeff());

  // Total variation along rows strictly drops for the checkerboard.
  auto tv = [&](const Eigen::VectorXd& v) {
    double s = 0.0;
    for (int ey = 0; ey < grid.ny; ++ey)
      for (int ex = 0; ex + 1 < grid.nx; ++ex)
        s += std::abs(v[grid.elem_id(ex + 1, ey)] - v[grid.elem_id(ex, ey)]);
    return s;
  };
  CHECK(tv(smooth) < 0.2 * tv(checker));

  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(grid.num_elems(), 0.37);
  CHECK((filt.apply(flat).array() - 0.37).abs().maxCoeff() < 1e-13);
}

TEST_CASE("anisotropic element pitch uses physical distances") {
  // Elements twice as tall as wide: radius 1.5 (x-pitch units) reaches the
  // horizontal neighbors but not the vertical ones.
  StructuredGrid grid(5, 5, 5.0, 10.0);
  const auto filt = FilterOperator::build(grid, 1.5);
  Eigen::VectorXd spike = Eigen::VectorXd::Zero(grid.num_elems());
  spike[grid.elem_id(2, 2)] = 1.0;
  const Eigen::VectorXd blurred = filt.apply(spike);
  CHECK(blurred[grid.elem_id(1, 2)] > 0.0);
  CHECK(blurred[grid.elem_id(3, 2)] > 0.0);
  CHECK(blurred[grid.elem_id(2, 1)] == 0.0);
  CHECK(blurred[grid.elem_id(2, 3)] == 0.0);
}

TEST_CASE("nonpositive radius is rejected") {
  StructuredGrid grid(3, 3, 3.0, 3.0);
  CHECK_THROWS_AS(FilterOperator::build(grid, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(FilterOperator::build(grid, -1.0), std::invalid_argument);
}
