#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace chinv::mesh {

/// Union of the coarse cells sharing one coarse node, with its fine-scale
/// node bookkeeping. Interior nodes own a 2x2 coarse-cell patch, edge nodes
/// 2 cells, corner nodes 1.
struct CoarseNeighborhood {
  int node_id = -1;
  std::vector<int> cells;  // coarse cell ids

  // Inclusive fine-node index box covering the patch.
  int i_lo = 0, i_hi = 0, j_lo = 0, j_hi = 0;

  std::vector<int> fine_nodes;      // all fine nodes in the patch, row-major
  std::vector<int> boundary_nodes;  // fine nodes on the patch boundary
  std::vector<int> interior_nodes;  // fine nodes strictly inside
  std::vector<int> fine_cells;      // fine cell ids covered by the patch

  int n_local() const { return static_cast<int>(fine_nodes.size()); }
};

/// Nested uniform quad grids on the unit square. The fine grid is a
/// conforming refinement of the coarse one.
class GridHierarchy {
 public:
  GridHierarchy(int fine_n, int coarse_n);

  int fine_n() const { return fine_n_; }
  int coarse_n() const { return coarse_n_; }
  int ratio() const { return fine_n_ / coarse_n_; }
  double h() const { return 1.0 / fine_n_; }
  double H() const { return 1.0 / coarse_n_; }

  int n_fine_nodes() const { return (fine_n_ + 1) * (fine_n_ + 1); }
  int n_fine_cells() const { return fine_n_ * fine_n_; }
  int n_coarse_nodes() const { return (coarse_n_ + 1) * (coarse_n_ + 1); }
  int n_coarse_cells() const { return coarse_n_ * coarse_n_; }

  int fine_node(int i, int j) const { return j * (fine_n_ + 1) + i; }
  int fine_cell(int i, int j) const { return j * fine_n_ + i; }
  int coarse_node(int ci, int cj) const { return cj * (coarse_n_ + 1) + ci; }
  int coarse_cell(int ci, int cj) const { return cj * coarse_n_ + ci; }

  std::pair<double, double> fine_node_xy(int id) const {
    const int i = id % (fine_n_ + 1), j = id / (fine_n_ + 1);
    return {i * h(), j * h()};
  }
  std::pair<double, double> fine_cell_center(int id) const {
    const int i = id % fine_n_, j = id / fine_n_;
    return {(i + 0.5) * h(), (j + 0.5) * h()};
  }
  std::pair<double, double> coarse_node_xy(int id) const {
    const int ci = id % (coarse_n_ + 1), cj = id / (coarse_n_ + 1);
    return {ci * H(), cj * H()};
  }

  /// Coarse cells whose closure contains the given fine node (1 to 4).
  std::vector<int> coarse_cells_containing_fine_node(int fine_node_id) const;

  const CoarseNeighborhood& neighborhood(int coarse_node_id) const {
    return nbhd_[coarse_node_id];
  }
  const std::vector<CoarseNeighborhood>& neighborhoods() const { return nbhd_; }

 private:
  int fine_n_;
  int coarse_n_;
  std::vector<CoarseNeighborhood> nbhd_;
};

GridHierarchy build_hierarchy(int fine_n, int coarse_n);

/// Coarse bilinear hat functions evaluated on the fine grid. values[i] is a
/// full fine-node vector (zero outside omega_i); gradients are sampled at the
/// midpoints of the fine cells inside omega_i.
struct PartitionOfUnity {
  std::vector<Eigen::VectorXd> values;

  // Per coarse node: the cells of omega_i and the constant-per-cell gradient
  // of chi_i on them (columns match grad_cells entries).
  std::vector<std::vector<int>> grad_cells;
  std::vector<Eigen::Matrix2Xd> grads;

  // sum_j |grad chi_j|^2 per fine cell; the weight in the spectral mass form.
  Eigen::VectorXd grad_sq_sum;
};

PartitionOfUnity partition_of_unity(const GridHierarchy& g);

}  // namespace chinv::mesh
