#include "robusto/oracle.hpp"

#include <Eigen/Sparse>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace robusto::oracle {
namespace {

Eigen::Matrix3d elasticity_tensor(const MaterialParams& mat) {
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
    C(2, 2) = 0.5 / (1.0 + nu);
  }
  return C;
}

double harmonic_modulus(const MaterialParams& mat, double delta) {
  return 1.0 / ((1.0 - delta) / mat.E0 + delta / mat.ED);
}

}  // namespace

TinyInstance TinyInstance::from(const StructuredGrid& grid, const LoadCase& load,
                                const MaterialParams& mat) {
  TinyInstance inst;
  inst.nx = grid.nx;
  inst.ny = grid.ny;
  inst.elem_w = grid.elem_w();
  inst.elem_h = grid.elem_h();
  inst.mat = mat;
  inst.fixed = load.fixed_dofs;
  inst.force = load.force;
  if (inst.num_dofs() > 50) {
    throw std::invalid_argument("oracle instance too large: " + std::to_string(inst.num_dofs()) +
                                " DOFs (limit 50)");
  }
  return inst;
}

Eigen::Matrix<double, 8, 8> dense_element_matrix(double w, double h, const MaterialParams& mat) {
  const Eigen::Matrix3d C = elasticity_tensor(mat);
  // Corner coordinates, counterclockwise from the bottom-left node.
  const double xs[4] = {0.0, w, w, 0.0};
  const double ys[4] = {0.0, 0.0, h, h};
  const double xi_n[4] = {-1.0, 1.0, 1.0, -1.0};
  const double eta_n[4] = {-1.0, -1.0, 1.0, 1.0};
  const double gp[3] = {-std::sqrt(3.0 / 5.0), 0.0, std::sqrt(3.0 / 5.0)};
  const double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

  Eigen::Matrix<double, 8, 8> Ke = Eigen::Matrix<double, 8, 8>::Zero();
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      const double xi = gp[a], eta = gp[b];
      Eigen::Matrix<double, 2, 4> dN;  // d/dxi, d/deta of each shape function
      for (int i = 0; i < 4; ++i) {
        dN(0, i) = 0.25 * xi_n[i] * (1.0 + eta * eta_n[i]);
        dN(1, i) = 0.25 * eta_n[i] * (1.0 + xi * xi_n[i]);
      }
      Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
      for (int i = 0; i < 4; ++i) {
        J(0, 0) += dN(0, i) * xs[i];
        J(0, 1) += dN(0, i) * ys[i];
        J(1, 0) += dN(1, i) * xs[i];
        J(1, 1) += dN(1, i) * ys[i];
      }
      const double detJ = J.determinant();
      const Eigen::Matrix<double, 2, 4> dNxy = J.inverse() * dN;
      Eigen::Matrix<double, 3, 8> B = Eigen::Matrix<double, 3, 8>::Zero();
      for (int i = 0; i < 4; ++i) {
        B(0, 2 * i) = dNxy(0, i);
        B(1, 2 * i + 1) = dNxy(1, i);
        B(2, 2 * i) = dNxy(1, i);
        B(2, 2 * i + 1) = dNxy(0, i);
      }
      Ke += gw[a] * gw[b] * detJ * (B.transpose() * C * B);
    }
  }
  return 0.5 * (Ke + Ke.transpose());
}

DenseSolveResult dense_solve(const TinyInstance& inst, const Eigen::VectorXd& rho,
                             const Eigen::VectorXd& delta) {
  const int n = inst.num_elems();
  if (rho.size() != n || delta.size() != n) {
    throw std::invalid_argument("dense_solve: field length mismatch");
  }
  const int ndof = inst.num_dofs();
  const Eigen::Matrix<double, 8, 8> Ke = dense_element_matrix(inst.elem_w, inst.elem_h, inst.mat);

  const auto node = [&](int ix, int iy) { return ix * (inst.ny + 1) + iy; };
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(ndof, ndof);
  for (int ey = 0; ey < inst.ny; ++ey) {
    for (int ex = 0; ex < inst.nx; ++ex) {
      const int e = ey * inst.nx + ex;
      const double scale =
          std::pow(rho[e], inst.mat.p) * harmonic_modulus(inst.mat, delta[e]);
      const int nodes[4] = {node(ex, ey), node(ex + 1, ey), node(ex + 1, ey + 1),
                            node(ex, ey + 1)};
      int dofs[8];
      for (int i = 0; i < 4; ++i) {
        dofs[2 * i] = 2 * nodes[i];
        dofs[2 * i + 1] = 2 * nodes[i] + 1;
      }
      for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
          K(dofs[i], dofs[j]) += scale * Ke(i, j);
        }
      }
    }
  }

  std::vector<char> is_fixed(ndof, 0);
  for (int d : inst.fixed) is_fixed[d] = 1;
  std::vector<int> free_dofs;
  free_dofs.reserve(ndof);
  for (int d = 0; d < ndof; ++d) {
    if (!is_fixed[d]) free_dofs.push_back(d);
  }
  const int nf = static_cast<int>(free_dofs.size());
  Eigen::MatrixXd Kff(nf, nf);
  Eigen::VectorXd ff(nf);
  for (int i = 0; i < nf; ++i) {
    ff[i] = inst.force[free_dofs[i]];
    for (int j = 0; j < nf; ++j) Kff(i, j) = K(free_dofs[i], free_dofs[j]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(Kff);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("dense_solve: stiffness matrix is not positive definite");
  }
  const Eigen::VectorXd uf = llt.solve(ff);

  DenseSolveResult out;
  out.u = Eigen::VectorXd::Zero(ndof);
  for (int i = 0; i < nf; ++i) out.u[free_dofs[i]] = uf[i];
  out.compliance = inst.force.dot(out.u);
  return out;
}

BruteForceResult brute_force_worst_case(const TinyInstance& inst, const Eigen::VectorXd& rho,
                                        double D, int resolution, MeanNorm norm) {
  const int n = inst.num_elems();
  if (n < 2 || n > 4) {
    throw std::invalid_argument("brute_force_worst_case supports 2 to 4 elements");
  }
  if (!(D > 0.0 && D < 0.25)) {
    throw std::invalid_argument("brute_force_worst_case: D must lie in (0, 0.25)");
  }
  if (resolution < 2) {
    throw std::invalid_argument("brute_force_worst_case: resolution must be at least 2");
  }

  const double ve = inst.elem_w * inst.elem_h;
  const double domain = ve * n;
  Eigen::VectorXd a(n), m(n);
  double wnorm = 0.0;
  for (int e = 0; e < n; ++e) {
    const double wgt = ve * std::pow(rho[e], inst.mat.p);
    a[e] = wgt;
    wnorm += (norm == MeanNorm::Material) ? wgt : 0.0;
  }
  if (norm == MeanNorm::Domain) wnorm = domain;
  a /= wnorm;
  for (int e = 0; e < n; ++e) m[e] = ve / domain;

  // Solve a.y = t, y^T M y = D over y = delta - 1/2 with M = diag(m).
  const double t = 0.5 * (1.0 - a.sum());
  Eigen::VectorXd yp(n);
  {
    double denom = 0.0;
    for (int e = 0; e < n; ++e) denom += a[e] * a[e] / m[e];
    for (int e = 0; e < n; ++e) yp[e] = t * (a[e] / m[e]) / denom;
  }
  double rsq = D;
  for (int e = 0; e < n; ++e) rsq -= m[e] * yp[e] * yp[e];
  if (rsq <= 0.0) {
    throw InfeasibleBudgetError(
        "defect budget infeasible: the mean constraint alone exhausts the variance budget");
  }
  const double r = std::sqrt(rsq);

  // M-orthonormal basis of the hyperplane a.y = 0 (also M-orthogonal to yp).
  std::vector<Eigen::VectorXd> basis;
  const double a2 = a.squaredNorm();
  for (int i = 0; i < n && static_cast<int>(basis.size()) < n - 1; ++i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    v[i] = 1.0;
    v -= a * (a[i] / a2);
    for (const auto& b : basis) {
      double proj = 0.0;
      for (int e = 0; e < n; ++e) proj += v[e] * m[e] * b[e];
      v -= proj * b;
    }
    double nm = 0.0;
    for (int e = 0; e < n; ++e) nm += v[e] * m[e] * v[e];
    nm = std::sqrt(nm);
    if (nm > 1e-10) basis.push_back(v / nm);
  }
  if (static_cast<int>(basis.size()) != n - 1) {
    throw std::runtime_error("brute_force_worst_case: degenerate constraint geometry");
  }

  std::vector<Eigen::VectorXd> candidates;
  if (n == 2) {
    candidates.push_back(yp + r * basis[0]);
    candidates.push_back(yp - r * basis[0]);
  } else if (n == 3) {
    for (int k = 0; k < resolution; ++k) {
      const double th = 2.0 * std::numbers::pi * k / resolution;
      candidates.push_back(yp + r * (std::cos(th) * basis[0] + std::sin(th) * basis[1]));
    }
  } else {
    for (int j = 0; j < resolution; ++j) {
      const double ph = std::numbers::pi * j / (resolution - 1);
      for (int k = 0; k < resolution; ++k) {
        const double th = 2.0 * std::numbers::pi * k / resolution;
        candidates.push_back(yp + r * (std::sin(ph) * std::cos(th) * basis[0] +
                                       std::sin(ph) * std::sin(th) * basis[1] +
                                       std::cos(ph) * basis[2]));
      }
    }
  }

  BruteForceResult best;
  best.compliance = -std::numeric_limits<double>::infinity();
  for (const auto& y : candidates) {
    bool inside = true;
    for (int e = 0; e < n; ++e) {
      const double d = y[e] + 0.5;
      if (!(d > 1e-12 && d < 1.0 - 1e-12)) {
        inside = false;
        break;
      }
    }
    if (!inside) continue;
    const Eigen::VectorXd delta = y.array() + 0.5;
    const double c = dense_solve(inst, rho, delta).compliance;
    ++best.candidates;
    if (c > best.compliance) {
      best.compliance = c;
      best.delta = delta;
    }
  }
  if (best.candidates == 0) {
    throw InfeasibleBudgetError(
        "defect budget infeasible: no constraint-manifold point lies inside (0,1)^n");
  }
  return best;
}

std::vector<double> fd_gradient(const std::function<double(const Eigen::VectorXd&)>& J,
                                const Eigen::VectorXd& x, const std::vector<int>& probes,
                                double h) {
  if (!(h >= 1e-8 && h <= 1e-4)) {
    throw std::invalid_argument("fd_gradient: step must lie in [1e-8, 1e-4]");
  }
  std::vector<double> out;
  out.reserve(probes.size());
  for (int idx : probes) {
    if (idx < 0 || idx >= x.size()) {
      throw std::invalid_argument("fd_gradient: probe index out of range");
    }
    Eigen::VectorXd xp = x, xm = x;
    xp[idx] += h;
    xm[idx] -= h;
    out.push_back((J(xp) - J(xm)) / (2.0 * h));
  }
  return out;
}

OcResult simp_reference(int nx, int ny, double width, double height, double volfrac, double p,
                        double radius_elements, double load_extent, int max_iters,
                        double change_tol) {
  if (nx < 1 || ny < 1 || volfrac <= 0.0 || volfrac > 1.0) {
    throw std::invalid_argument("simp_reference: bad grid or volume fraction");
  }
  const int n = nx * ny;
  const double ew = width / nx, eh = height / ny;
  MaterialParams mat;  // defaults; only nu and the plane model matter here
  const Eigen::Matrix<double, 8, 8> Ke = dense_element_matrix(ew, eh, mat);
  const double rho_lo = 1e-3;

  const auto node = [&](int ix, int iy) { return ix * (ny + 1) + iy; };
  const int ndof = 2 * (nx + 1) * (ny + 1);

  // Clamp the left edge, pull down on the lower part of the right edge.
  std::vector<char> is_fixed(ndof, 0);
  for (int iy = 0; iy <= ny; ++iy) {
    is_fixed[2 * node(0, iy)] = 1;
    is_fixed[2 * node(0, iy) + 1] = 1;
  }
  Eigen::VectorXd f = Eigen::VectorXd::Zero(ndof);
  const int k_edges = std::max(1L, std::lround(load_extent * ny));
  const double per_edge = 1.0 / k_edges;
  for (int iy = 0; iy < k_edges; ++iy) {
    f[2 * node(nx, iy) + 1] += -0.5 * per_edge;
    f[2 * node(nx, iy + 1) + 1] += -0.5 * per_edge;
  }

  std::vector<int> free_dofs;
  for (int d = 0; d < ndof; ++d) {
    if (!is_fixed[d]) free_dofs.push_back(d);
  }
  std::vector<int> full_to_free(ndof, -1);
  for (size_t i = 0; i < free_dofs.size(); ++i) full_to_free[free_dofs[i]] = static_cast<int>(i);
  const int nf = static_cast<int>(free_dofs.size());
  Eigen::VectorXd ff(nf);
  for (int i = 0; i < nf; ++i) ff[i] = f[free_dofs[i]];

  // Linearly decaying filter weights over centroid distances, row-normalized.
  struct Neighbor {
    int elem;
    double weight;
  };
  std::vector<std::vector<Neighbor>> nbrs(n);
  {
    const double R = radius_elements * ew;
    const int rx = static_cast<int>(std::ceil(R / ew));
    const int ry = static_cast<int>(std::ceil(R / eh));
    for (int ey = 0; ey < ny; ++ey) {
      for (int ex = 0; ex < nx; ++ex) {
        auto& row = nbrs[ey * nx + ex];
        double sum = 0.0;
        for (int jy = std::max(0, ey - ry); jy <= std::min(ny - 1, ey + ry); ++jy) {
          for (int jx = std::max(0, ex - rx); jx <= std::min(nx - 1, ex + rx); ++jx) {
            const double dist = std::hypot((jx - ex) * ew, (jy - ey) * eh);
            const double w = R - dist;
            if (w > 0.0) {
              row.push_back({jy * nx + jx, w});
              sum += w;
            }
          }
        }
        for (auto& nb : row) nb.weight /= sum;
      }
    }
  }
  const auto filter_apply = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd out(n);
    for (int e = 0; e < n; ++e) {
      double acc = 0.0;
      for (const auto& nb : nbrs[e]) acc += nb.weight * x[nb.elem];
      out[e] = acc;
    }
    return out;
  };
  const auto filter_chain = [&](const Eigen::VectorXd& g) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (int e = 0; e < n; ++e) {
      for (const auto& nb : nbrs[e]) out[nb.elem] += nb.weight * g[e];
    }
    return out;
  };

  std::vector<std::array<int, 8>> elem_dofs(n);
  for (int ey = 0; ey < ny; ++ey) {
    for (int ex = 0; ex < nx; ++ex) {
      const int nodes[4] = {node(ex, ey), node(ex + 1, ey), node(ex + 1, ey + 1),
                            node(ex, ey + 1)};
      auto& dofs = elem_dofs[ey * nx + ex];
      for (int i = 0; i < 4; ++i) {
        dofs[2 * i] = 2 * nodes[i];
        dofs[2 * i + 1] = 2 * nodes[i] + 1;
      }
    }
  }

  Eigen::SparseMatrix<double> Kff(nf, nf);
  std::vector<Eigen::Triplet<double>> trips;
  const auto assemble_solve = [&](const Eigen::VectorXd& xphys) {
    trips.clear();
    for (int e = 0; e < n; ++e) {
      const double scale = std::pow(xphys[e], p);
      for (int i = 0; i < 8; ++i) {
        const int gi = full_to_free[elem_dofs[e][i]];
        if (gi < 0) continue;
        for (int j = 0; j < 8; ++j) {
          const int gj = full_to_free[elem_dofs[e][j]];
          if (gj >= 0) trips.emplace_back(gi, gj, scale * Ke(i, j));
        }
      }
    }
    Kff.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(Kff);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("simp_reference: factorization failed");
    }
    const Eigen::VectorXd uf = llt.solve(ff);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(ndof);
    for (int i = 0; i < nf; ++i) u[free_dofs[i]] = uf[i];
    return u;
  };

  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, volfrac);
  Eigen::VectorXd xphys = filter_apply(x);
  const Eigen::VectorXd dv = filter_chain(Eigen::VectorXd::Constant(n, 1.0 / n));

  OcResult res;
  const double move = 0.2;
  for (int it = 1; it <= max_iters; ++it) {
    const Eigen::VectorXd u = assemble_solve(xphys);
    Eigen::VectorXd dc(n);
    for (int e = 0; e < n; ++e) {
      Eigen::Matrix<double, 8, 1> ue;
      for (int i = 0; i < 8; ++i) ue[i] = u[elem_dofs[e][i]];
      dc[e] = -p * std::pow(xphys[e], p - 1.0) * ue.dot(Ke * ue);
    }
    const Eigen::VectorXd dcd = filter_chain(dc);

    double l1 = 0.0, l2 = 1e9;
    Eigen::VectorXd xnew(n);
    while ((l2 - l1) / (l1 + l2) > 1e-6) {
      const double lmid = 0.5 * (l1 + l2);
      for (int e = 0; e < n; ++e) {
        const double be = std::max(0.0, -dcd[e] / (lmid * dv[e]));
        double xe = x[e] * std::sqrt(be);
        xe = std::clamp(xe, x[e] - move, x[e] + move);
        xnew[e] = std::clamp(xe, rho_lo, 1.0);
      }
      if (filter_apply(xnew).mean() > volfrac) {
        l1 = lmid;
      } else {
        l2 = lmid;
      }
    }
    const double change = (xnew - x).lpNorm<Eigen::Infinity>();
    x = xnew;
    xphys = filter_apply(x);
    res.iterations = it;
    if (change < change_tol) break;
  }

  const Eigen::VectorXd u = assemble_solve(xphys);
  res.rho_design = x;
  res.rho_phys = xphys;
  res.compliance = f.dot(u);
  return res;
}

}  // namespace robusto::oracle
