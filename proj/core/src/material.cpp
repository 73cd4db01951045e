#include "robusto/material.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace robusto {

namespace {

constexpr double kBoxSlack = 1e-12;

double clamp_unit(double x, const char* what) {
  if (x < 0.0) {
    if (x < -kBoxSlack) {
      throw std::domain_error(std::string(what) + " = " + std::to_string(x) +
                              " outside [0, 1]");
    }
    return 0.0;
  }
  if (x > 1.0) {
    if (x > 1.0 + kBoxSlack) {
      throw std::domain_error(std::string(what) + " = " + std::to_string(x) +
                              " outside [0, 1]");
    }
    return 1.0;
  }
  return x;
}

}  // namespace

void MaterialParams::validate() const {
  std::ostringstream bad;
  auto flag = [&bad](const std::string& msg) {
    if (bad.tellp() > 0) bad << "; ";
    bad << msg;
  };
  if (!(E0 > 0.0)) flag("E0 must be > 0, got " + std::to_string(E0));
  if (!(ED > 0.0)) flag("ED must be > 0, got " + std::to_string(ED));
  if (ED > E0) flag("ED must be <= E0, got ED=" + std::to_string(ED) + " > E0=" + std::to_string(E0));
  if (!(nu >= 0.0 && nu < 0.5)) flag("nu must be in [0, 0.5), got " + std::to_string(nu));
  if (!(p >= 1.0)) flag("p must be >= 1, got " + std::to_string(p));
  if (!(rho_min > 0.0 && rho_min < 1.0)) flag("rho_min must be in (0, 1), got " + std::to_string(rho_min));
  if (bad.tellp() > 0) throw std::invalid_argument("invalid material parameters: " + bad.str());
}

double effective_modulus(double delta, const MaterialParams& mat) {
  delta = clamp_unit(delta, "delta");
  return 1.0 / ((1.0 - delta) / mat.E0 + delta / mat.ED);
}

ModulusDerivs effective_modulus_derivatives(double delta, const MaterialParams& mat) {
  delta = clamp_unit(delta, "delta");
  const double slope = 1.0 / mat.ED - 1.0 / mat.E0;  // d(1/E_eff)/ddelta, >= 0
  const double E = 1.0 / ((1.0 - delta) / mat.E0 + delta / mat.ED);
  return {-slope * E * E, 2.0 * slope * slope * E * E * E};
}

double simp_scale(double rho, const MaterialParams& mat) {
  if (rho < mat.rho_min) {
    if (rho < mat.rho_min - kBoxSlack) {
      throw std::domain_error("rho = " + std::to_string(rho) + " below rho_min = " +
                              std::to_string(mat.rho_min));
    }
    rho = mat.rho_min;
  }
  rho = clamp_unit(rho, "rho");
  return std::pow(rho, mat.p);
}

Eigen::Matrix3d plane_tensor(const MaterialParams& mat) {
  Eigen::Matrix3d C = Eigen::Matrix3d::Zero();
  const double nu = mat.nu;
  if (mat.plane_model == PlaneModel::Strain) {
    const double c = 1.0 / ((1.0 + nu) * (1.0 - 2.0 * nu));
    C(0, 0) = C(1, 1) = c * (1.0 - nu);
    C(0, 1) = C(1, 0) = c * nu;
    C(2, 2) = 0.5 / (1.0 + nu);
  } else {
    const double c = 1.0 / (1.0 - nu * nu);
    C(0, 0) = C(1, 1) = c;
    C(0, 1) = C(1, 0) = c * nu;
    C(2, 2) = 0.5 * (1.0 - nu) * c;
  }
  return C;
}

}  // namespace robusto
