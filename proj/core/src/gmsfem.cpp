#include "chinv/gmsfem.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "chinv/errors.hpp"

namespace chinv::gmsfem {

namespace {

// Dense kappa-weighted stiffness restricted to a neighborhood patch. Rows and
// columns follow nb.fine_nodes order.
Eigen::MatrixXd local_stiffness(const field::PermeabilityField& kappa,
                                const mesh::GridHierarchy& g,
                                const mesh::CoarseNeighborhood& nb) {
  const int nx = nb.i_hi - nb.i_lo + 1;
  const int nn = g.fine_n() + 1;
  auto loc = [&](int node) {
    return (node / nn - nb.j_lo) * nx + (node % nn - nb.i_lo);
  };
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nb.n_local(), nb.n_local());
  for (int cell : nb.fine_cells) {
    const int ci = cell % g.fine_n(), cj = cell / g.fine_n();
    const double k = kappa.kappa[cell];
    const int l[4] = {loc(g.fine_node(ci, cj)), loc(g.fine_node(ci + 1, cj)),
                      loc(g.fine_node(ci + 1, cj + 1)),
                      loc(g.fine_node(ci, cj + 1))};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) a(l[r], l[c]) += k * fem::kElemStiff[r][c];
  }
  return a;
}

// Mass form weighted by kappa * sum_j |grad chi_j|^2, same layout.
Eigen::MatrixXd local_weighted_mass(const field::PermeabilityField& kappa,
                                    const mesh::PartitionOfUnity& pou,
                                    const mesh::GridHierarchy& g,
                                    const mesh::CoarseNeighborhood& nb) {
  const int nx = nb.i_hi - nb.i_lo + 1;
  const int nn = g.fine_n() + 1;
  const double h2 = g.h() * g.h();
  auto loc = [&](int node) {
    return (node / nn - nb.j_lo) * nx + (node % nn - nb.i_lo);
  };
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(nb.n_local(), nb.n_local());
  for (int cell : nb.fine_cells) {
    const int ci = cell % g.fine_n(), cj = cell / g.fine_n();
    const double w = kappa.kappa[cell] * pou.grad_sq_sum[cell] * h2;
    const int l[4] = {loc(g.fine_node(ci, cj)), loc(g.fine_node(ci + 1, cj)),
                      loc(g.fine_node(ci + 1, cj + 1)),
                      loc(g.fine_node(ci, cj + 1))};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) s(l[r], l[c]) += w * fem::kElemMass[r][c];
  }
  return s;
}

std::vector<int> local_indices(const mesh::GridHierarchy& g,
                               const mesh::CoarseNeighborhood& nb,
                               const std::vector<int>& global_nodes) {
  const int nx = nb.i_hi - nb.i_lo + 1;
  const int nn = g.fine_n() + 1;
  std::vector<int> out;
  out.reserve(global_nodes.size());
  for (int node : global_nodes)
    out.push_back((node / nn - nb.j_lo) * nx + (node % nn - nb.i_lo));
  return out;
}

// Flip so the largest-magnitude entry (first on ties) is positive.
void canonicalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  if (v[best] < 0) v = -v;
}

bool lexi_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (int i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

}  // namespace

std::uint64_t local_kappa_hash(const field::PermeabilityField& kappa,
                               const mesh::CoarseNeighborhood& nb) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t bits) {
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffULL;
      h *= 1099511628211ULL;
    }
  };
  for (int cell : nb.fine_cells) {
    std::uint64_t bits;
    static_assert(sizeof(double) == sizeof(bits));
    std::memcpy(&bits, &kappa.kappa[cell], sizeof(bits));
    mix(bits);
  }
  return h;
}

SnapshotEntry build_snapshots(const field::PermeabilityField& kappa,
                              const mesh::GridHierarchy& g, int nbhd_id) {
  const mesh::CoarseNeighborhood& nb = g.neighborhood(nbhd_id);
  const Eigen::MatrixXd a = local_stiffness(kappa, g, nb);
  const std::vector<int> bnd = local_indices(g, nb, nb.boundary_nodes);
  const std::vector<int> itr = local_indices(g, nb, nb.interior_nodes);
  const int n_snap = static_cast<int>(bnd.size());

  SnapshotEntry out;
  out.basis = Eigen::MatrixXd::Zero(nb.n_local(), n_snap);
  for (int l = 0; l < n_snap; ++l) out.basis(bnd[l], l) = 1.0;
  if (itr.empty()) return out;

  // Harmonic extension: A_II psi_I = -A_IB on each boundary delta.
  Eigen::MatrixXd a_ii = a(itr, itr);
  Eigen::MatrixXd a_ib = a(itr, bnd);
  Eigen::LLT<Eigen::MatrixXd> llt(a_ii);
  if (llt.info() != Eigen::Success)
    throw NumericalError("build_snapshots: interior stiffness not SPD on neighborhood " +
                         std::to_string(nbhd_id));
  Eigen::MatrixXd interior = llt.solve(-a_ib);
  for (std::size_t m = 0; m < itr.size(); ++m)
    out.basis.row(itr[m]) = interior.row(static_cast<int>(m));
  return out;
}

OfflineEntry build_offline(const SnapshotEntry& snap,
                           const mesh::PartitionOfUnity& pou,
                           const field::PermeabilityField& kappa,
                           const mesh::GridHierarchy& g, int nbhd_id, int Li) {
  const mesh::CoarseNeighborhood& nb = g.neighborhood(nbhd_id);
  const int n_snap = snap.n_snap();
  if (Li < 1 || Li > n_snap)
    throw ContractError("build_offline: basis count " + std::to_string(Li) +
                        " outside [1, " + std::to_string(n_snap) +
                        "] on neighborhood " + std::to_string(nbhd_id));

  const Eigen::MatrixXd a = local_stiffness(kappa, g, nb);
  const Eigen::MatrixXd s = local_weighted_mass(kappa, pou, g, nb);
  Eigen::MatrixXd sa = snap.basis.transpose() * a * snap.basis;
  Eigen::MatrixXd ss = snap.basis.transpose() * s * snap.basis;
  sa = 0.5 * (sa + sa.transpose()).eval();
  ss = 0.5 * (ss + ss.transpose()).eval();

  if (Eigen::LLT<Eigen::MatrixXd>(ss).info() != Eigen::Success)
    throw NumericalError("build_offline: weighted mass form not SPD on neighborhood " +
                         std::to_string(nbhd_id));
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(sa, ss);
  if (es.info() != Eigen::Success)
    throw NumericalError("build_offline: eigensolve failed on neighborhood " +
                         std::to_string(nbhd_id));

  Eigen::MatrixXd vecs = es.eigenvectors();
  for (int k = 0; k < vecs.cols(); ++k) canonicalize_sign(vecs.col(k));

  // Ascending eigenvalues; numerically equal clusters ordered by vector
  // content so the selection is reproducible across runs.
  std::vector<int> order(n_snap);
  std::iota(order.begin(), order.end(), 0);
  const Eigen::VectorXd& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    const double tol = 1e-10 * std::max({1.0, std::abs(ev[x]), std::abs(ev[y])});
    if (std::abs(ev[x] - ev[y]) > tol) return ev[x] < ev[y];
    return lexi_less(vecs.col(x), vecs.col(y));
  });

  Eigen::VectorXd chi(nb.n_local());
  for (int m = 0; m < nb.n_local(); ++m)
    chi[m] = pou.values[nbhd_id][nb.fine_nodes[m]];

  OfflineEntry out;
  out.Li = Li;
  out.eigenvalues.resize(n_snap);
  out.basis.resize(nb.n_local(), Li);
  for (int k = 0; k < n_snap; ++k) out.eigenvalues[k] = ev[order[k]];
  for (int k = 0; k < Li; ++k)
    out.basis.col(k) = chi.cwiseProduct(snap.basis * vecs.col(order[k]));
  return out;
}

BasisCache::BasisCache(const mesh::GridHierarchy* g,
                       const mesh::PartitionOfUnity* pou, int max_basis_per_node,
                       std::size_t capacity)
    : grid_(g), pou_(pou), max_basis_(max_basis_per_node), capacity_(capacity) {
  if (max_basis_ < 1) throw ContractError("BasisCache: max basis must be >= 1");
  if (capacity_ < 1) throw ContractError("BasisCache: capacity must be >= 1");
}

std::size_t BasisCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return index_.size();
}

const BasisCache::Entry& BasisCache::get(const field::PermeabilityField& kappa,
                                         int nbhd_id) {
  const mesh::CoarseNeighborhood& nb = grid_->neighborhood(nbhd_id);
  const std::uint64_t key =
      local_kappa_hash(kappa, nb) ^
      (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(nbhd_id + 1));

  std::lock_guard<std::mutex> lock(mu_);
  auto it = index_.find(key);
  if (it != index_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second);
    return lru_.front().entry;
  }

  const SnapshotEntry snap = build_snapshots(kappa, *grid_, nbhd_id);
  const int li = std::min(max_basis_, snap.n_snap());
  const OfflineEntry off = build_offline(snap, *pou_, kappa, *grid_, nbhd_id, li);
  ++builds_;

  lru_.push_front(Item{key, Entry{off.eigenvalues, off.basis}});
  index_[key] = lru_.begin();
  if (index_.size() > capacity_) {
    index_.erase(lru_.back().key);
    lru_.pop_back();
  }
  return lru_.front().entry;
}

CoarseSolver::CoarseSolver(const mesh::GridHierarchy* g,
                           const mesh::PartitionOfUnity* pou,
                           fem::ProblemSpec spec, int basis_per_node,
                           std::shared_ptr<BasisCache> cache)
    : grid_(g), pou_(pou), spec_(std::move(spec)), basis_per_node_(basis_per_node),
      cache_(std::move(cache)) {
  if (basis_per_node_ < 1)
    throw ContractError("CoarseSolver: basis count must be >= 1");
  if (!cache_)
    cache_ = std::make_shared<BasisCache>(g, pou, basis_per_node_);
  if (cache_->max_basis_per_node() < basis_per_node_)
    throw ContractError("CoarseSolver: shared cache holds fewer basis columns than requested");
}

fem::WellObservation CoarseSolver::solve(const field::PermeabilityField& kappa) const {
  const fem::ProblemSpec& spec = spec_;
  if (spec.nt < 1 || !(spec.t_final > 0))
    throw ContractError("CoarseSolver: need nt >= 1 and t_final > 0");
  const mesh::GridHierarchy& g = *grid_;
  const fem::Forms forms = fem::assemble_forms(kappa, g);

  // Global reduced basis: per-node column blocks, nodes in id order.
  const int n_nodes = g.n_coarse_nodes();
  std::vector<int> offset(n_nodes + 1, 0);
  for (int id = 0; id < n_nodes; ++id) {
    const int n_snap = static_cast<int>(g.neighborhood(id).boundary_nodes.size());
    offset[id + 1] = offset[id] + std::min(basis_per_node_, n_snap);
  }
  const int n_dof = offset[n_nodes];

  std::vector<Eigen::Triplet<double>> tp;
  for (int id = 0; id < n_nodes; ++id) {
    const mesh::CoarseNeighborhood& nb = g.neighborhood(id);
    const BasisCache::Entry& entry = cache_->get(kappa, id);
    const int take = offset[id + 1] - offset[id];
    for (int k = 0; k < take; ++k)
      for (int m = 0; m < nb.n_local(); ++m)
        if (entry.basis(m, k) != 0.0)
          tp.emplace_back(nb.fine_nodes[m], offset[id] + k, entry.basis(m, k));
  }
  Eigen::SparseMatrix<double> p(g.n_fine_nodes(), n_dof);
  p.setFromTriplets(tp.begin(), tp.end());

  const Eigen::MatrixXd ac = Eigen::MatrixXd(p.transpose() * forms.stiffness * p);
  const Eigen::MatrixXd mc = Eigen::MatrixXd(p.transpose() * forms.mass * p);
  const double dt = spec.t_final / spec.nt;
  const Eigen::MatrixXd sys = mc + dt * ac;

  // The reduced space can contain linear dependencies (e.g. when it spans the
  // whole fine space); fall back to a rank-revealing solve in that case.
  Eigen::LLT<Eigen::MatrixXd> llt(sys);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  const bool spd = llt.info() == Eigen::Success;
  if (!spd) cod.compute(sys);
  auto step_solve = [&](const Eigen::VectorXd& rhs) {
    return spd ? Eigen::VectorXd(llt.solve(rhs)) : Eigen::VectorXd(cod.solve(rhs));
  };

  Eigen::VectorXd u0 = spec.g_nodes.size() > 0
                           ? spec.g_nodes
                           : Eigen::VectorXd::Constant(g.n_fine_nodes(), spec.g_const);
  if (u0.size() != g.n_fine_nodes())
    throw ContractError("CoarseSolver: initial condition has wrong size");
  Eigen::VectorXd uc;
  if (u0.isZero(0.0)) {
    uc = Eigen::VectorXd::Zero(n_dof);
  } else {
    // Mass projection of the initial data onto the reduced space.
    Eigen::LLT<Eigen::MatrixXd> mllt(mc);
    Eigen::VectorXd rhs = p.transpose() * (forms.mass * u0);
    if (mllt.info() == Eigen::Success) {
      uc = mllt.solve(rhs);
    } else {
      uc = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(mc).solve(rhs);
    }
  }

  const bool time_dep = static_cast<bool>(spec.source_fn);
  const Eigen::VectorXd neumann = fem::assemble_neumann_load(spec.neumann_flux, g);
  Eigen::VectorXd bc;
  if (!time_dep)
    bc = p.transpose() * Eigen::VectorXd(fem::assemble_box_load(spec.source, g) + neumann);

  const int n_wells = static_cast<int>(spec.source.boxes.size());
  Eigen::MatrixXd wc(n_dof, n_wells);
  for (int k = 0; k < n_wells; ++k)
    wc.col(k) = p.transpose() * fem::well_weights(spec.source.boxes[k], g);

  fem::WellObservation obs;
  obs.values.resize(n_wells, spec.nt);
  obs.well_defs = spec.source.boxes;
  for (int step = 0; step < spec.nt; ++step) {
    if (time_dep)
      bc = p.transpose() *
           Eigen::VectorXd(fem::assemble_fn_load(spec.source_fn, (step + 1) * dt, g) +
                           neumann);
    uc = step_solve(mc * uc + dt * bc);
    for (int k = 0; k < n_wells; ++k) obs.values(k, step) = wc.col(k).dot(uc);
  }
  return obs;
}

const fem::WellObservation& CoarseSolver::observe(const field::PermeabilityField& kappa) {
  const std::uint64_t key = field::kappa_hash(kappa);
  auto it = obs_cache_.find(key);
  if (it != obs_cache_.end()) return it->second;
  ++evals_;
  return obs_cache_.emplace(key, solve(kappa)).first->second;
}

}  // namespace chinv::gmsfem
