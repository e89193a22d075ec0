#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "chinv/field.hpp"
#include "chinv/mesh.hpp"

namespace chinv::fem {

/// Box source/well: piecewise-constant amplitude on an axis-aligned rectangle
/// in physical coordinates. The source boxes double as the observation wells.
struct SourceBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double amplitude = 0;
  bool operator==(const SourceBox&) const = default;
};

struct SourceSpec {
  std::vector<SourceBox> boxes;
  bool operator==(const SourceSpec&) const = default;
};

/// Optional analytic source f(x, y, t); overrides the box source when set.
using SourceFn = std::function<double(double, double, double)>;

struct ProblemSpec {
  double t_final = 1.0;
  int nt = 20;
  double g_const = 0.0;        // constant initial condition
  Eigen::VectorXd g_nodes;     // nodal initial condition, overrides g_const when sized
  double neumann_flux = 0.0;   // constant boundary flux
  SourceSpec source;
  SourceFn source_fn;
};

/// Per-well pressure traces: values(w, n) is the area-average of the solution
/// over well w at time step n+1.
struct WellObservation {
  Eigen::MatrixXd values;
  std::vector<SourceBox> well_defs;
};

/// Euclidean norm of the difference over all wells and steps.
double misfit(const WellObservation& a, const WellObservation& b);

struct Forms {
  Eigen::SparseMatrix<double> stiffness;
  Eigen::SparseMatrix<double> mass;
};

/// Q1 element matrices on a square cell, corner order (0,0),(1,0),(1,1),(0,1).
/// Stiffness is side-length independent in 2D; mass scales by h*h.
extern const double kElemStiff[4][4];
extern const double kElemMass[4][4];

/// Q1 assembly of the diffusion and mass forms on the fine grid.
Forms assemble_forms(const field::PermeabilityField& kappa,
                     const mesh::GridHierarchy& g);

/// Load vector for the box source; box/cell overlaps are integrated exactly.
Eigen::VectorXd assemble_box_load(const SourceSpec& source,
                                  const mesh::GridHierarchy& g);

/// Load vector for an analytic source at time t (2x2 Gauss per cell).
Eigen::VectorXd assemble_fn_load(const SourceFn& f, double t,
                                 const mesh::GridHierarchy& g);

/// Boundary load for a constant Neumann flux.
Eigen::VectorXd assemble_neumann_load(double flux,
                                      const mesh::GridHierarchy& g);

/// Nodal weights w such that w.dot(u) is the area-average of u over the box.
Eigen::VectorXd well_weights(const SourceBox& box,
                             const mesh::GridHierarchy& g);

struct ParabolicResult {
  Eigen::MatrixXd history;  // n_fine_nodes x (nt + 1), column 0 = initial data
  WellObservation obs;
};

/// Backward Euler on (M + dt A) u^{n+1} = M u^n + dt b with pure Neumann data.
ParabolicResult solve_parabolic(const field::PermeabilityField& kappa,
                                const ProblemSpec& spec,
                                const mesh::GridHierarchy& g);

/// Fine-scale forward model with per-coefficient observation memoization.
class FineSolver {
 public:
  FineSolver(const mesh::GridHierarchy* g, ProblemSpec spec)
      : grid_(g), spec_(std::move(spec)) {}

  const WellObservation& observe(const field::PermeabilityField& kappa);
  long evals() const { return evals_; }
  const ProblemSpec& spec() const { return spec_; }

 private:
  const mesh::GridHierarchy* grid_;
  ProblemSpec spec_;
  std::unordered_map<std::uint64_t, WellObservation> cache_;
  long evals_ = 0;
};

}  // namespace chinv::fem
