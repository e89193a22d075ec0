#include "chinv/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "chinv/errors.hpp"

namespace chinv::mesh {

GridHierarchy::GridHierarchy(int fine_n, int coarse_n)
    : fine_n_(fine_n), coarse_n_(coarse_n) {
  if (coarse_n < 2)
    throw ConfigError("grid hierarchy: coarse_n must be >= 2, got " +
                      std::to_string(coarse_n));
  if (fine_n < coarse_n || fine_n % coarse_n != 0)
    throw ConfigError("grid hierarchy: fine_n (" + std::to_string(fine_n) +
                      ") must be a positive multiple of coarse_n (" +
                      std::to_string(coarse_n) + ")");

  const int r = fine_n / coarse_n;
  nbhd_.resize(n_coarse_nodes());
  for (int cj = 0; cj <= coarse_n_; ++cj) {
    for (int ci = 0; ci <= coarse_n_; ++ci) {
      CoarseNeighborhood& nb = nbhd_[coarse_node(ci, cj)];
      nb.node_id = coarse_node(ci, cj);
      for (int dj = -1; dj <= 0; ++dj) {
        for (int di = -1; di <= 0; ++di) {
          const int cci = ci + di, ccj = cj + dj;
          if (cci < 0 || cci >= coarse_n_ || ccj < 0 || ccj >= coarse_n_)
            continue;
          nb.cells.push_back(coarse_cell(cci, ccj));
        }
      }
      nb.i_lo = std::max(0, (ci - 1) * r);
      nb.i_hi = std::min(fine_n_, (ci + 1) * r);
      nb.j_lo = std::max(0, (cj - 1) * r);
      nb.j_hi = std::min(fine_n_, (cj + 1) * r);

      for (int j = nb.j_lo; j <= nb.j_hi; ++j) {
        for (int i = nb.i_lo; i <= nb.i_hi; ++i) {
          const int id = fine_node(i, j);
          nb.fine_nodes.push_back(id);
          const bool on_boundary =
              i == nb.i_lo || i == nb.i_hi || j == nb.j_lo || j == nb.j_hi;
          (on_boundary ? nb.boundary_nodes : nb.interior_nodes).push_back(id);
        }
      }
      for (int j = nb.j_lo; j < nb.j_hi; ++j)
        for (int i = nb.i_lo; i < nb.i_hi; ++i)
          nb.fine_cells.push_back(fine_cell(i, j));
    }
  }
}

std::vector<int> GridHierarchy::coarse_cells_containing_fine_node(
    int fine_node_id) const {
  const int r = ratio();
  const int i = fine_node_id % (fine_n_ + 1), j = fine_node_id / (fine_n_ + 1);
  // A fine node on a coarse gridline belongs to the cells on both sides.
  const int ci_hi = i / r, ci_lo = (i % r == 0) ? ci_hi - 1 : ci_hi;
  const int cj_hi = j / r, cj_lo = (j % r == 0) ? cj_hi - 1 : cj_hi;
  std::vector<int> out;
  for (int cj = cj_lo; cj <= cj_hi; ++cj) {
    for (int ci = ci_lo; ci <= ci_hi; ++ci) {
      if (ci < 0 || ci >= coarse_n_ || cj < 0 || cj >= coarse_n_) continue;
      out.push_back(coarse_cell(ci, cj));
    }
  }
  return out;
}

GridHierarchy build_hierarchy(int fine_n, int coarse_n) {
  return GridHierarchy(fine_n, coarse_n);
}

namespace {

// 1D hat centered at coarse node c, width H, evaluated at x.
double hat1(double x, double c, double H) {
  return std::max(0.0, 1.0 - std::abs(x - c) / H);
}

// Derivative of the 1D hat at a point strictly inside one of its legs.
double dhat1(double x, double c, double H) {
  if (x < c - H || x > c + H) return 0.0;
  return x < c ? 1.0 / H : -1.0 / H;
}

}  // namespace

PartitionOfUnity partition_of_unity(const GridHierarchy& g) {
  PartitionOfUnity pou;
  const int n_nodes = g.n_coarse_nodes();
  const double H = g.H();
  pou.values.resize(n_nodes);
  pou.grad_cells.resize(n_nodes);
  pou.grads.resize(n_nodes);
  pou.grad_sq_sum = Eigen::VectorXd::Zero(g.n_fine_cells());

  for (int id = 0; id < n_nodes; ++id) {
    const auto [cx, cy] = g.coarse_node_xy(id);
    const CoarseNeighborhood& nb = g.neighborhood(id);

    Eigen::VectorXd vals = Eigen::VectorXd::Zero(g.n_fine_nodes());
    for (int fn : nb.fine_nodes) {
      const auto [x, y] = g.fine_node_xy(fn);
      vals[fn] = hat1(x, cx, H) * hat1(y, cy, H);
    }
    pou.values[id] = std::move(vals);

    pou.grad_cells[id] = nb.fine_cells;
    Eigen::Matrix2Xd gr(2, nb.fine_cells.size());
    for (std::size_t k = 0; k < nb.fine_cells.size(); ++k) {
      const auto [x, y] = g.fine_cell_center(nb.fine_cells[k]);
      gr(0, k) = dhat1(x, cx, H) * hat1(y, cy, H);
      gr(1, k) = hat1(x, cx, H) * dhat1(y, cy, H);
      pou.grad_sq_sum[nb.fine_cells[k]] += gr.col(k).squaredNorm();
    }
    pou.grads[id] = std::move(gr);
  }
  return pou;
}

}  // namespace chinv::mesh
