// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "peds/geometry.hpp"
#include "peds/solvers.hpp"

namespace peds {

// Solver configurations used for each family.
HelmholtzConfig low_fidelity_helmholtz(const GeometryParams& p);
HelmholtzConfig high_fidelity_helmholtz(const GeometryParams& p);
ReactionDiffusionProblem high_fidelity_reaction_diffusion(MaterialGrid grid);

// A low-fidelity property evaluation that keeps what the adjoint pass needs.
struct PropertyEvaluation {
  Physics physics = Physics::Diffusion;
  std::vector<double> value;  // [kappa] or [Re t, Im t]
  DiffusionProblem diffusion;
  DiffusionSolution diffusion_solution;
  HelmholtzProblem helmholtz;
  HelmholtzSolution helmholtz_solution;
};

// Linear low-fidelity solve on a coarse grid. Reaction-diffusion families use
// the diffusion solver (the nonlinear term is dropped at low fidelity).
PropertyEvaluation evaluate_low_fidelity(const MaterialGrid& grid, const GeometryParams& p);

// Gradient of <cotangent, value> with respect to the grid values.
std::vector<double> low_fidelity_vjp(const PropertyEvaluation& eval, std::span<const double> cotangent);

// f^lf(downsample(p)) without any generator.
std::vector<double> low_fidelity_baseline(const GeometryParams& p);

// Target of the expensive solver at the family's high-fidelity resolution
// (or at `resolution` when positive).
std::vector<double> high_fidelity(const GeometryParams& p, int resolution = 0);

}  // namespace peds
