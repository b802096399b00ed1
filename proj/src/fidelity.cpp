// SPDX-License-Identifier: Apache-2.0

#include "peds/fidelity.hpp"

#include "peds/error.hpp"

namespace peds {

HelmholtzConfig low_fidelity_helmholtz(const GeometryParams& p) {
  HelmholtzConfig cfg;
  cfg.wavelength = p.wavelength();
  cfg.stencil = FdfdStencil::Standard;
  return cfg;
}

HelmholtzConfig high_fidelity_helmholtz(const GeometryParams& p) {
  HelmholtzConfig cfg;
  cfg.wavelength = p.wavelength();
  cfg.stencil = FdfdStencil::Compact;
  return cfg;
}

ReactionDiffusionProblem high_fidelity_reaction_diffusion(MaterialGrid grid) {
  ReactionDiffusionProblem prob;
  prob.grid = std::move(grid);
  return prob;
}

PropertyEvaluation evaluate_low_fidelity(const MaterialGrid& grid, const GeometryParams& p) {
  PropertyEvaluation eval;
  eval.physics = family_info(p.family).physics;
  if (eval.physics == Physics::Helmholtz) {
    eval.helmholtz = {grid, low_fidelity_helmholtz(p)};
    eval.helmholtz_solution = solve_helmholtz(eval.helmholtz);
    eval.value = {eval.helmholtz_solution.t.real(), eval.helmholtz_solution.t.imag()};
  } else {
    eval.diffusion = {grid, 0.5};
    eval.diffusion_solution = solve_diffusion(eval.diffusion);
    eval.value = {eval.diffusion_solution.kappa};
  }
  return eval;
}

std::vector<double> low_fidelity_vjp(const PropertyEvaluation& eval, std::span<const double> cotangent) {
  if (cotangent.size() != eval.value.size()) throw ValidationError("low-fidelity cotangent has wrong size");
  if (eval.physics == Physics::Helmholtz) {
    return helmholtz_vjp(eval.helmholtz, eval.helmholtz_solution, cotangent[0], cotangent[1]);
  }
  return diffusion_vjp(eval.diffusion, eval.diffusion_solution, cotangent[0]);
}

std::vector<double> low_fidelity_baseline(const GeometryParams& p) {
  const auto grid = project(rasterize(p, family_info(p.family).lf_resolution), default_projection(p.family));
  return evaluate_low_fidelity(grid, p).value;
}

std::vector<double> high_fidelity(const GeometryParams& p, int resolution) {
  const auto& info = family_info(p.family);
  const int res = resolution > 0 ? resolution : info.hf_resolution;
  auto grid = rasterize(p, res);
  switch (info.physics) {
    case Physics::Diffusion:
      return {solve_diffusion({std::move(grid), 0.5}).kappa};
    case Physics::ReactionDiffusion:
      return {solve_reaction_diffusion(high_fidelity_reaction_diffusion(std::move(grid))).kappa};
    case Physics::Helmholtz: {
      const auto sol = solve_helmholtz({std::move(grid), high_fidelity_helmholtz(p)});
      return {sol.t.real(), sol.t.imag()};
    }
  }
  throw ValidationError("unknown physics");
}

}  // namespace peds
