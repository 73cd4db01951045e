#include <doctest.h>

#include <robusto/material.hpp>

#include <cmath>
#include <stdexcept>
#include <string>

using robusto::MaterialParams;
using robusto::PlaneModel;

TEST_CASE("effective modulus endpoints and midpoint") {
  MaterialParams mat;  // E0 = 1, ED = 0.75
  CHECK(robusto::effective_modulus(0.0, mat) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(robusto::effective_modulus(1.0, mat) == doctest::Approx(0.75).epsilon(1e-15));
  // 1/E(0.5) = 0.5/1 + 0.5/0.75 = 7/6
  CHECK(robusto::effective_modulus(0.5, mat) ==
        doctest::Approx(6.0 / 7.0).epsilon(1e-14));
}

TEST_CASE("effective modulus derivatives at the midpoint") {
  MaterialParams mat;
  const auto d = robusto::effective_modulus_derivatives(0.5, mat);
  // E(delta) = 1/(1 + delta/3): E'(0.5) = -12/49, E''(0.5) = 48/343
  CHECK(d.dE == doctest::Approx(-12.0 / 49.0).epsilon(1e-13));
  CHECK(d.d2E == doctest::Approx(48.0 / 343.0).epsilon(1e-13));
}

TEST_CASE("derivatives match central differences along [0,1]") {
  MaterialParams mat;
  mat.ED = 0.6;
  const double h = 1e-6;
  for (int i = 0; i <= 100; ++i) {
    const double delta = 0.005 + 0.99 * i / 100.0;
    const double ep = robusto::effective_modulus(delta + h, mat);
    const double em = robusto::effective_modulus(delta - h, mat);
    const double e0 = robusto::effective_modulus(delta, mat);
    const auto d = robusto::effective_modulus_derivatives(delta, mat);
    CHECK(d.dE == doctest::Approx((ep - em) / (2 * h)).epsilon(1e-7));
    CHECK(d.d2E == doctest::Approx((ep - 2 * e0 + em) / (h * h)).epsilon(1e-3));
  }
}

TEST_CASE("harmonic blend never exceeds the arithmetic blend") {
  MaterialParams mat;
  mat.ED = 0.4;
  for (int i = 0; i <= 50; ++i) {
    const double delta = i / 50.0;
    const double harmonic = robusto::effective_modulus(delta, mat);
    const double linear = (1.0 - delta) * mat.E0 + delta * mat.ED;
    CHECK(harmonic <= linear + 1e-15);
  }
}

TEST_CASE("reciprocal modulus is affine in the defect fraction") {
  MaterialParams mat;
  mat.ED = 0.55;
  auto inv = [&](double delta) { return 1.0 / robusto::effective_modulus(delta, mat); };
  for (int i = 0; i < 20; ++i) {
    const double a = 0.03 * i, b = 1.0 - 0.021 * i;
    CHECK(inv(0.5 * (a + b)) == doctest::Approx(0.5 * (inv(a) + inv(b))).epsilon(1e-13));
  }
}

TEST_CASE("modulus decreases and stays convex when the defect softens") {
  MaterialParams mat;
  double prev = robusto::effective_modulus(0.0, mat);
  for (int i = 1; i <= 40; ++i) {
    const double delta = i / 40.0;
    const double e = robusto::effective_modulus(delta, mat);
    CHECK(e < prev);
    CHECK(robusto::effective_modulus_derivatives(delta, mat).d2E > 0.0);
    prev = e;
  }
}

TEST_CASE("modulus domain clamps tiny excursions and rejects real ones") {
  MaterialParams mat;
  CHECK(robusto::effective_modulus(-1e-13, mat) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(robusto::effective_modulus(1.0 + 1e-13, mat) ==
        doctest::Approx(0.75).epsilon(1e-12));
  CHECK_THROWS_AS(robusto::effective_modulus(-1e-3, mat), std::domain_error);
  CHECK_THROWS_AS(robusto::effective_modulus(1.001, mat), std::domain_error);
}

TEST_CASE("simp scale is a plain power law") {
  MaterialParams mat;  // p = 5
  CHECK(robusto::simp_scale(0.5, mat) == 0.03125);
  CHECK(robusto::simp_scale(0.4, mat) == doctest::Approx(0.01024).epsilon(1e-15));
  CHECK(robusto::simp_scale(1.0, mat) == 1.0);
  mat.p = 3.0;
  CHECK(robusto::simp_scale(0.5, mat) == 0.125);
}

TEST_CASE("simp scale domain honours rho_min with tiny slack") {
  MaterialParams mat;
  CHECK(robusto::simp_scale(mat.rho_min, mat) ==
        doctest::Approx(std::pow(mat.rho_min, mat.p)).epsilon(1e-14));
  CHECK(robusto::simp_scale(mat.rho_min - 1e-13, mat) ==
        doctest::Approx(std::pow(mat.rho_min, mat.p)).epsilon(1e-9));
  CHECK(robusto::simp_scale(1.0 + 1e-13, mat) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(robusto::simp_scale(0.0, mat), std::domain_error);
  CHECK_THROWS_AS(robusto::simp_scale(1.1, mat), std::domain_error);
}

TEST_CASE("plane strain constitutive matrix for the default material") {
  MaterialParams mat;
  const Eigen::Matrix3d c = robusto::plane_tensor(mat);
  // E=1, nu=0.3: diag 35/26, coupling 15/26, shear 5/13.
  CHECK(c(0, 0) == doctest::Approx(35.0 / 26.0).epsilon(1e-14));
  CHECK(c(1, 1) == doctest::Approx(35.0 / 26.0).epsilon(1e-14));
  CHECK(c(0, 1) == doctest::Approx(15.0 / 26.0).epsilon(1e-14));
  CHECK(c(1, 0) == doctest::Approx(15.0 / 26.0).epsilon(1e-14));
  CHECK(c(2, 2) == doctest::Approx(5.0 / 13.0).epsilon(1e-14));
  CHECK(c(0, 2) == 0.0);
  CHECK(c(1, 2) == 0.0);
  CHECK(c(2, 0) == 0.0);
  CHECK(c(2, 1) == 0.0);
}

TEST_CASE("plane stress constitutive matrix") {
  MaterialParams mat;
  mat.plane_model = PlaneModel::Stress;
  const Eigen::Matrix3d c = robusto::plane_tensor(mat);
  CHECK(c(0, 0) == doctest::Approx(1.0 / 0.91).epsilon(1e-14));
  CHECK(c(0, 1) == doctest::Approx(0.3 / 0.91).epsilon(1e-14));
  CHECK(c(2, 2) == doctest::Approx(0.35 / 0.91).epsilon(1e-14));
}

TEST_CASE("plane tensor is symmetric positive definite for both models") {
  for (PlaneModel model : {PlaneModel::Strain, PlaneModel::Stress}) {
    MaterialParams mat;
    mat.plane_model = model;
    const Eigen::Matrix3d c = robusto::plane_tensor(mat);
    CHECK((c - c.transpose()).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(c);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("parameter validation reports every violation at once") {
  MaterialParams mat;
  CHECK_NOTHROW(mat.validate());

  mat.ED = 2.0;   // above E0
  mat.nu = 0.6;   // outside (-1, 0.5)
  mat.p = 0.5;    // below 1
  try {
    mat.validate();
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("ED") != std::string::npos);
    CHECK(msg.find("nu") != std::string::npos);
    CHECK(msg.find("p") != std::string::npos);
  }

  MaterialParams bad;
  bad.E0 = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  MaterialParams badrho;
  badrho.rho_min = 0.0;
  CHECK_THROWS_AS(badrho.validate(), std::invalid_argument);
}
