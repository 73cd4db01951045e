#pragma once

#include <Eigen/Dense>

namespace robusto {

enum class PlaneModel { Strain, Stress };

// Isotropic base material plus the penalization and defect-modulus knobs.
// E0 is the nominal Young's modulus, ED the fully defective one (ED <= E0).
struct MaterialParams {
  double E0 = 1.0;
  double ED = 0.75;
  double nu = 0.3;
  double p = 5.0;
  double rho_min = 1e-3;
  PlaneModel plane_model = PlaneModel::Strain;

  // Throws std::invalid_argument listing every violated range at once.
  void validate() const;
};

// Effective modulus of an element with local defect fraction delta in [0,1]:
// harmonic (series) blend of pristine and defective stiffness,
//   E_eff(delta) = ((1 - delta)/E0 + delta/ED)^(-1).
// Inputs within 1e-12 outside [0,1] are clamped; anything further throws
// std::domain_error.
double effective_modulus(double delta, const MaterialParams& mat);

struct ModulusDerivs {
  double dE;   // dE_eff/ddelta
  double d2E;  // d^2E_eff/ddelta^2
};
ModulusDerivs effective_modulus_derivatives(double delta, const MaterialParams& mat);

// SIMP stiffness scale rho^p for a physical density in [rho_min, 1]
// (1e-12 slack, clamp inside, throw beyond).
double simp_scale(double rho, const MaterialParams& mat);

// Constitutive matrix for unit Young's modulus in Voigt order (xx, yy, xy).
// Plane strain or plane stress per mat.plane_model.
Eigen::Matrix3d plane_tensor(const MaterialParams& mat);

}  // namespace robusto
