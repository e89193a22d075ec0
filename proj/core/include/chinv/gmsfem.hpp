#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "chinv/fem.hpp"
#include "chinv/field.hpp"
#include "chinv/mesh.hpp"

namespace chinv::gmsfem {

/// Harmonic extensions of the boundary deltas of one coarse neighborhood.
/// Columns follow the neighborhood's boundary-node order; rows follow its
/// fine_nodes order. Boundary rows carry the identity pattern.
struct SnapshotEntry {
  Eigen::MatrixXd basis;  // n_local x n_snap
  int n_snap() const { return static_cast<int>(basis.cols()); }
};

SnapshotEntry build_snapshots(const field::PermeabilityField& kappa,
                              const mesh::GridHierarchy& g, int nbhd_id);

/// Spectrally selected conforming basis for one neighborhood: the smallest-
/// eigenvalue modes of the local diffusion/weighted-mass pencil, multiplied
/// by the partition-of-unity hat.
struct OfflineEntry {
  Eigen::VectorXd eigenvalues;  // ascending, one per snapshot
  Eigen::MatrixXd basis;        // n_local x Li
  int Li = 0;
};

OfflineEntry build_offline(const SnapshotEntry& snap,
                           const mesh::PartitionOfUnity& pou,
                           const field::PermeabilityField& kappa,
                           const mesh::GridHierarchy& g, int nbhd_id, int Li);

/// LRU cache of per-neighborhood offline bases keyed by the coefficient
/// restricted to the neighborhood. A lattice move touches few neighborhoods,
/// so most bases of a proposal are reused. Shared across solver levels; a
/// level with smaller basis count takes a column prefix.
class BasisCache {
 public:
  BasisCache(const mesh::GridHierarchy* g, const mesh::PartitionOfUnity* pou,
             int max_basis_per_node, std::size_t capacity = 50000);

  struct Entry {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd basis;  // n_local x min(max_basis, n_snap)
  };

  /// Reference valid until the next get() call.
  const Entry& get(const field::PermeabilityField& kappa, int nbhd_id);

  int max_basis_per_node() const { return max_basis_; }
  std::size_t size() const;
  long builds() const { return builds_; }

 private:
  const mesh::GridHierarchy* grid_;
  const mesh::PartitionOfUnity* pou_;
  int max_basis_;
  std::size_t capacity_;

  struct Item {
    std::uint64_t key;
    Entry entry;
  };
  mutable std::mutex mu_;
  std::list<Item> lru_;  // front = most recent
  std::unordered_map<std::uint64_t, std::list<Item>::iterator> index_;
  long builds_ = 0;
};

/// One level of the forward-solver hierarchy: Galerkin solve of the parabolic
/// problem in the global offline space with a fixed basis count per node.
class CoarseSolver {
 public:
  CoarseSolver(const mesh::GridHierarchy* g, const mesh::PartitionOfUnity* pou,
               fem::ProblemSpec spec, int basis_per_node,
               std::shared_ptr<BasisCache> cache = nullptr);

  const fem::WellObservation& observe(const field::PermeabilityField& kappa);

  /// Uncached single solve; also usable without touching the memo.
  fem::WellObservation solve(const field::PermeabilityField& kappa) const;

  int basis_per_node() const { return basis_per_node_; }
  long evals() const { return evals_; }
  const fem::ProblemSpec& spec() const { return spec_; }
  std::shared_ptr<BasisCache> cache() const { return cache_; }

 private:
  const mesh::GridHierarchy* grid_;
  const mesh::PartitionOfUnity* pou_;
  fem::ProblemSpec spec_;
  int basis_per_node_;
  std::shared_ptr<BasisCache> cache_;
  std::unordered_map<std::uint64_t, fem::WellObservation> obs_cache_;
  long evals_ = 0;
};

std::uint64_t local_kappa_hash(const field::PermeabilityField& kappa,
                               const mesh::CoarseNeighborhood& nb);

}  // namespace chinv::gmsfem
