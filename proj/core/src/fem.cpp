#include "chinv/fem.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>
#include <string>

#include "chinv/errors.hpp"

namespace chinv::fem {

const double kElemStiff[4][4] = {
    {4 / 6.0, -1 / 6.0, -2 / 6.0, -1 / 6.0},
    {-1 / 6.0, 4 / 6.0, -1 / 6.0, -2 / 6.0},
    {-2 / 6.0, -1 / 6.0, 4 / 6.0, -1 / 6.0},
    {-1 / 6.0, -2 / 6.0, -1 / 6.0, 4 / 6.0},
};
const double kElemMass[4][4] = {
    {4 / 36.0, 2 / 36.0, 1 / 36.0, 2 / 36.0},
    {2 / 36.0, 4 / 36.0, 2 / 36.0, 1 / 36.0},
    {1 / 36.0, 2 / 36.0, 4 / 36.0, 2 / 36.0},
    {2 / 36.0, 1 / 36.0, 2 / 36.0, 4 / 36.0},
};

namespace {

void cell_corner_nodes(const mesh::GridHierarchy& g, int ci, int cj,
                       int out[4]) {
  out[0] = g.fine_node(ci, cj);
  out[1] = g.fine_node(ci + 1, cj);
  out[2] = g.fine_node(ci + 1, cj + 1);
  out[3] = g.fine_node(ci, cj + 1);
}

// Integrals of the two 1D linear shape factors over [a,b] within [lo, lo+h],
// in physical units. part0 multiplies the "near lo" factor, part1 the other.
void linear_factor_integrals(double lo, double h, double a, double b,
                             double& part0, double& part1) {
  const double xa = std::max(0.0, std::min(1.0, (a - lo) / h));
  const double xb = std::max(0.0, std::min(1.0, (b - lo) / h));
  part1 = h * 0.5 * (xb * xb - xa * xa);
  part0 = h * (xb - xa) - part1;
}

}  // namespace

double misfit(const WellObservation& a, const WellObservation& b) {
  if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols())
    throw ContractError("misfit: observation shapes differ (" +
                        std::to_string(a.values.rows()) + "x" +
                        std::to_string(a.values.cols()) + " vs " +
                        std::to_string(b.values.rows()) + "x" +
                        std::to_string(b.values.cols()) + ")");
  return (a.values - b.values).norm();
}

Forms assemble_forms(const field::PermeabilityField& kappa,
                     const mesh::GridHierarchy& g) {
  if (kappa.kappa.size() != g.n_fine_cells())
    throw ContractError("assemble_forms: coefficient size mismatch");
  const int n = g.fine_n();
  const double h = g.h();
  std::vector<Eigen::Triplet<double>> ta, tm;
  ta.reserve(static_cast<std::size_t>(16) * g.n_fine_cells());
  tm.reserve(static_cast<std::size_t>(16) * g.n_fine_cells());
  for (int cj = 0; cj < n; ++cj) {
    for (int ci = 0; ci < n; ++ci) {
      const double k = kappa.kappa[g.fine_cell(ci, cj)];
      if (!(k > 0.0))
        throw NumericalError("assemble_forms: nonpositive coefficient at cell (" +
                             std::to_string(ci) + "," + std::to_string(cj) + ")");
      int nodes[4];
      cell_corner_nodes(g, ci, cj, nodes);
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
          ta.emplace_back(nodes[r], nodes[c], k * kElemStiff[r][c]);
          tm.emplace_back(nodes[r], nodes[c], h * h * kElemMass[r][c]);
        }
      }
    }
  }
  Forms f;
  f.stiffness.resize(g.n_fine_nodes(), g.n_fine_nodes());
  f.mass.resize(g.n_fine_nodes(), g.n_fine_nodes());
  f.stiffness.setFromTriplets(ta.begin(), ta.end());
  f.mass.setFromTriplets(tm.begin(), tm.end());
  return f;
}

Eigen::VectorXd assemble_box_load(const SourceSpec& source,
                                  const mesh::GridHierarchy& g) {
  const int n = g.fine_n();
  const double h = g.h();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(g.n_fine_nodes());
  for (const SourceBox& box : source.boxes) {
    const int ci_lo = std::max(0, static_cast<int>(std::floor(box.x0 / h)));
    const int ci_hi = std::min(n - 1, static_cast<int>(std::ceil(box.x1 / h)) - 1);
    const int cj_lo = std::max(0, static_cast<int>(std::floor(box.y0 / h)));
    const int cj_hi = std::min(n - 1, static_cast<int>(std::ceil(box.y1 / h)) - 1);
    for (int cj = cj_lo; cj <= cj_hi; ++cj) {
      for (int ci = ci_lo; ci <= ci_hi; ++ci) {
        const double ax = std::max(box.x0, ci * h), bx = std::min(box.x1, (ci + 1) * h);
        const double ay = std::max(box.y0, cj * h), by = std::min(box.y1, (cj + 1) * h);
        if (bx <= ax || by <= ay) continue;
        double ix0, ix1, iy0, iy1;
        linear_factor_integrals(ci * h, h, ax, bx, ix0, ix1);
        linear_factor_integrals(cj * h, h, ay, by, iy0, iy1);
        int nodes[4];
        cell_corner_nodes(g, ci, cj, nodes);
        b[nodes[0]] += box.amplitude * ix0 * iy0;
        b[nodes[1]] += box.amplitude * ix1 * iy0;
        b[nodes[2]] += box.amplitude * ix1 * iy1;
        b[nodes[3]] += box.amplitude * ix0 * iy1;
      }
    }
  }
  return b;
}

Eigen::VectorXd assemble_fn_load(const SourceFn& f, double t,
                                 const mesh::GridHierarchy& g) {
  if (!f) throw ContractError("assemble_fn_load: empty source function");
  const int n = g.fine_n();
  const double h = g.h();
  const double gp = 0.5 / std::sqrt(3.0);  // 2x2 Gauss on the unit square
  const double q[2] = {0.5 - gp, 0.5 + gp};
  Eigen::VectorXd b = Eigen::VectorXd::Zero(g.n_fine_nodes());
  for (int cj = 0; cj < n; ++cj) {
    for (int ci = 0; ci < n; ++ci) {
      int nodes[4];
      cell_corner_nodes(g, ci, cj, nodes);
      for (int qj = 0; qj < 2; ++qj) {
        for (int qi = 0; qi < 2; ++qi) {
          const double xi = q[qi], eta = q[qj];
          const double x = (ci + xi) * h, y = (cj + eta) * h;
          const double fv = f(x, y, t) * h * h * 0.25;  // weight 1/4 per point
          b[nodes[0]] += fv * (1 - xi) * (1 - eta);
          b[nodes[1]] += fv * xi * (1 - eta);
          b[nodes[2]] += fv * xi * eta;
          b[nodes[3]] += fv * (1 - xi) * eta;
        }
      }
    }
  }
  return b;
}

Eigen::VectorXd assemble_neumann_load(double flux,
                                      const mesh::GridHierarchy& g) {
  const int n = g.fine_n();
  const double h = g.h();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(g.n_fine_nodes());
  if (flux == 0.0) return b;
  // Each boundary edge contributes flux*h/2 to both endpoints.
  for (int i = 0; i < n; ++i) {
    for (int side = 0; side < 4; ++side) {
      int n0, n1;
      switch (side) {
        case 0: n0 = g.fine_node(i, 0); n1 = g.fine_node(i + 1, 0); break;
        case 1: n0 = g.fine_node(i, n); n1 = g.fine_node(i + 1, n); break;
        case 2: n0 = g.fine_node(0, i); n1 = g.fine_node(0, i + 1); break;
        default: n0 = g.fine_node(n, i); n1 = g.fine_node(n, i + 1); break;
      }
      b[n0] += flux * h * 0.5;
      b[n1] += flux * h * 0.5;
    }
  }
  return b;
}

Eigen::VectorXd well_weights(const SourceBox& box,
                             const mesh::GridHierarchy& g) {
  const double area = (box.x1 - box.x0) * (box.y1 - box.y0);
  if (!(area > 0.0)) throw ContractError("well_weights: empty well box");
  SourceSpec unit;
  unit.boxes.push_back(box);
  unit.boxes.back().amplitude = 1.0 / area;
  return assemble_box_load(unit, g);
}

ParabolicResult solve_parabolic(const field::PermeabilityField& kappa,
                                const ProblemSpec& spec,
                                const mesh::GridHierarchy& g) {
  if (spec.nt < 1 || !(spec.t_final > 0))
    throw ContractError("solve_parabolic: need nt >= 1 and t_final > 0");
  const Forms forms = assemble_forms(kappa, g);
  const double dt = spec.t_final / spec.nt;

  Eigen::SparseMatrix<double> sys = forms.mass + dt * forms.stiffness;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  solver.compute(sys);
  if (solver.info() != Eigen::Success)
    throw NumericalError("solve_parabolic: time-step matrix factorization failed");

  Eigen::VectorXd u = spec.g_nodes.size() > 0
                          ? spec.g_nodes
                          : Eigen::VectorXd::Constant(g.n_fine_nodes(), spec.g_const);
  if (u.size() != g.n_fine_nodes())
    throw ContractError("solve_parabolic: initial condition has wrong size");

  const bool time_dep = static_cast<bool>(spec.source_fn);
  Eigen::VectorXd load = time_dep ? Eigen::VectorXd()
                                  : Eigen::VectorXd(assemble_box_load(spec.source, g) +
                                                    assemble_neumann_load(spec.neumann_flux, g));

  const int n_wells = static_cast<int>(spec.source.boxes.size());
  std::vector<Eigen::VectorXd> w(n_wells);
  for (int k = 0; k < n_wells; ++k) w[k] = well_weights(spec.source.boxes[k], g);

  ParabolicResult out;
  out.history.resize(g.n_fine_nodes(), spec.nt + 1);
  out.history.col(0) = u;
  out.obs.values.resize(n_wells, spec.nt);
  out.obs.well_defs = spec.source.boxes;

  for (int step = 0; step < spec.nt; ++step) {
    if (time_dep)
      load = assemble_fn_load(spec.source_fn, (step + 1) * dt, g) +
             assemble_neumann_load(spec.neumann_flux, g);
    Eigen::VectorXd rhs = forms.mass * u + dt * load;
    u = solver.solve(rhs);
    if (solver.info() != Eigen::Success)
      throw NumericalError("solve_parabolic: solve failed at step " +
                           std::to_string(step + 1));
    out.history.col(step + 1) = u;
    for (int k = 0; k < n_wells; ++k) out.obs.values(k, step) = w[k].dot(u);
  }
  return out;
}

const WellObservation& FineSolver::observe(const field::PermeabilityField& kappa) {
  const std::uint64_t key = field::kappa_hash(kappa);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  ++evals_;
  WellObservation obs = solve_parabolic(kappa, spec_, *grid_).obs;
  return cache_.emplace(key, std::move(obs)).first->second;
}

}  // namespace chinv::fem
