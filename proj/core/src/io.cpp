#include "robusto/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace robusto {
namespace {

std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  return out;
}

unsigned char to_byte(double v) {
  const double scaled = std::lround(255.0 * std::clamp(v, 0.0, 1.0));
  return static_cast<unsigned char>(scaled);
}

}  // namespace

void write_density_txt(const std::string& path, int nx, int ny, const Eigen::VectorXd& field) {
  if (field.size() != static_cast<Eigen::Index>(nx) * ny) {
    throw std::invalid_argument("write_density_txt: field length does not match nx*ny");
  }
  auto out = open_out(path);
  out << nx << " " << ny << "\n";
  for (int ey = 0; ey < ny; ++ey) {
    for (int ex = 0; ex < nx; ++ex) {
      if (ex) out << " ";
      out << format_g17(field[static_cast<Eigen::Index>(ey) * nx + ex]);
    }
    out << "\n";
  }
  if (!out) {
    throw std::runtime_error("write failed for '" + path + "'");
  }
}

Eigen::VectorXd read_density_txt(const std::string& path, int expect_nx, int expect_ny) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open density file '" + path + "'");
  }
  int nx = 0, ny = 0;
  if (!(in >> nx >> ny)) {
    throw std::runtime_error("density file '" + path + "': missing 'nx ny' header");
  }
  if (nx != expect_nx || ny != expect_ny) {
    std::ostringstream msg;
    msg << "density file '" << path << "' is " << nx << "x" << ny << ", expected " << expect_nx
        << "x" << expect_ny;
    throw std::runtime_error(msg.str());
  }
  const Eigen::Index n = static_cast<Eigen::Index>(nx) * ny;
  Eigen::VectorXd field(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(in >> field[i])) {
      throw std::runtime_error("density file '" + path + "': expected " + std::to_string(n) +
                               " values, got " + std::to_string(i));
    }
  }
  double extra;
  if (in >> extra) {
    throw std::runtime_error("density file '" + path + "': trailing values beyond nx*ny");
  }
  return field;
}

void write_density_pgm(const std::string& path, int nx, int ny, const Eigen::VectorXd& rho) {
  if (rho.size() != static_cast<Eigen::Index>(nx) * ny) {
    throw std::invalid_argument("write_density_pgm: field length does not match nx*ny");
  }
  auto out = open_out(path, std::ios::out | std::ios::binary);
  out << "P5 " << nx << " " << ny << " 255\n";
  std::vector<unsigned char> row(nx);
  for (int ey = ny - 1; ey >= 0; --ey) {
    for (int ex = 0; ex < nx; ++ex) {
      row[ex] = to_byte(1.0 - rho[static_cast<Eigen::Index>(ey) * nx + ex]);
    }
    out.write(reinterpret_cast<const char*>(row.data()), nx);
  }
  if (!out) {
    throw std::runtime_error("write failed for '" + path + "'");
  }
}

void write_defects_pgm(const std::string& path, int nx, int ny, const Eigen::VectorXd& rho_phys,
                       const Eigen::VectorXd& delta) {
  const Eigen::Index n = static_cast<Eigen::Index>(nx) * ny;
  if (rho_phys.size() != n || delta.size() != n) {
    throw std::invalid_argument("write_defects_pgm: field length does not match nx*ny");
  }
  auto out = open_out(path, std::ios::out | std::ios::binary);
  out << "P5 " << nx << " " << ny << " 255\n";
  std::vector<unsigned char> row(nx);
  for (int ey = ny - 1; ey >= 0; --ey) {
    for (int ex = 0; ex < nx; ++ex) {
      const Eigen::Index e = static_cast<Eigen::Index>(ey) * nx + ex;
      row[ex] = rho_phys[e] >= 0.4 ? to_byte(delta[e]) : static_cast<unsigned char>(128);
    }
    out.write(reinterpret_cast<const char*>(row.data()), nx);
  }
  if (!out) {
    throw std::runtime_error("write failed for '" + path + "'");
  }
}

void write_convergence_csv(const std::string& path, const std::vector<ConvergenceRow>& rows) {
  auto out = open_out(path);
  out << "iter,objective,worst_case_compliance,volume,design_change_inf,"
         "inner_newton_iters,inner_kkt_residual\n";
  for (const auto& r : rows) {
    out << r.iter << "," << format_g17(r.objective) << "," << format_g17(r.worst_case_compliance)
        << "," << format_g17(r.volume) << "," << format_g17(r.design_change_inf) << ","
        << r.inner_newton_iters << "," << format_g17(r.inner_kkt_residual) << "\n";
  }
  if (!out) {
    throw std::runtime_error("write failed for '" + path + "'");
  }
}

}  // namespace robusto
