#include "robusto/density_filter.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace robusto {

FilterOperator FilterOperator::build(const StructuredGrid& grid, double radius_elements) {
  if (!(radius_elements > 0.0)) {
    throw std::invalid_argument("filter radius must be positive, got " +
                                std::to_string(radius_elements));
  }
  FilterOperator op;
  op.radius_elements_ = radius_elements;

  // Centroid distances in physical units; the radius is given in element
  // lengths with the x-pitch as the unit (all presets use square elements).
  const double w = grid.elem_w(), h = grid.elem_h();
  const double R = radius_elements * w;
  const int reach_x = (int)std::ceil(R / w);
  const int reach_y = (int)std::ceil(R / h);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve((size_t)grid.num_elems() * (2 * reach_x + 1) * (2 * reach_y + 1) / 2);
  for (int ey = 0; ey < grid.ny; ++ey) {
    for (int ex = 0; ex < grid.nx; ++ex) {
      const int i = grid.elem_id(ex, ey);
      double wsum = 0.0;
      const size_t first = trips.size();
      for (int dy = -reach_y; dy <= reach_y; ++dy) {
        const int jy = ey + dy;
        if (jy < 0 || jy >= grid.ny) continue;
        for (int dx = -reach_x; dx <= reach_x; ++dx) {
          const int jx = ex + dx;
          if (jx < 0 || jx >= grid.nx) continue;
          const double d = std::hypot(dx * w, dy * h);
          const double weight = R - d;
          if (weight <= 0.0) continue;
          trips.emplace_back(i, grid.elem_id(jx, jy), weight);
          wsum += weight;
        }
      }
      for (size_t t = first; t < trips.size(); ++t) {
        trips[t] = {trips[t].row(), trips[t].col(), trips[t].value() / wsum};
      }
    }
  }
  op.W_.resize(grid.num_elems(), grid.num_elems());
  op.W_.setFromTriplets(trips.begin(), trips.end());
  return op;
}

}  // namespace robusto
