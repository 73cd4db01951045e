#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "robusto/grid.hpp"

namespace robusto {

// Cone (linearly decaying) density filter. Row i holds weights proportional
// to max(0, R - d(i,j)) over element-centroid distances d, renormalized so
// every row sums to 1 (boundary rows included).
class FilterOperator {
 public:
  static FilterOperator build(const StructuredGrid& grid, double radius_elements);

  Eigen::VectorXd apply(const Eigen::VectorXd& rho_design) const { return W_ * rho_design; }
  Eigen::VectorXd chain_rule(const Eigen::VectorXd& grad_wrt_phys) const {
    return W_.transpose() * grad_wrt_phys;
  }

  const Eigen::SparseMatrix<double, Eigen::RowMajor>& weights() const { return W_; }
  double radius_elements() const { return radius_elements_; }

 private:
  Eigen::SparseMatrix<double, Eigen::RowMajor> W_;
  double radius_elements_ = 0.0;
};

}  // namespace robusto
