// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <span>
#include <vector>

#include "peds/geometry.hpp"
#include "peds/linalg.hpp"

namespace peds {

// ---------------------------------------------------------------------------
// Diffusion: div(D grad u) = 0 on the unit cell, u = 1 on the bottom edge,
// u = 0 on the top edge, periodic in x. Cell-centred unknowns with
// harmonically averaged face conductivities.

struct DiffusionProblem {
  MaterialGrid grid;          // conductivity D, all values > 0
  double flux_plane_y = 0.5;  // snapped to the nearest row of cell faces
};

struct DiffusionSolution {
  std::vector<double> field;  // u at cell centres, same layout as the grid
  double kappa = 0.0;
  std::shared_ptr<const SparseLu<double>> factorization;
};

// Index of the horizontal face plane nearest to y (0 = bottom edge, ny = top edge).
int flux_plane_index(const MaterialGrid& grid, double y);

SparseMatrix<double> assemble_diffusion(const MaterialGrid& grid, std::vector<double>& rhs);

// Normalized upward flux through face plane `plane`; a uniform medium D = c gives c.
double diffusion_flux(const MaterialGrid& grid, std::span<const double> field, int plane);

DiffusionSolution solve_diffusion(const DiffusionProblem& problem);

// d(kappa)/d(grid values) scaled by `cotangent`, using one transposed solve.
std::vector<double> diffusion_vjp(const DiffusionProblem& problem, const DiffusionSolution& solution,
                                  double cotangent);

// ---------------------------------------------------------------------------
// Reaction-diffusion: div(D grad u) + k u (1 - u) = 0 with the same boundary
// conditions, solved by Newton's method along a geometric continuation in k.

struct ReactionDiffusionProblem {
  MaterialGrid grid;
  double k = 10.0;
  double k_start = 0.1;
  int continuation_steps = 5;  // geometric schedule k_start .. k, inclusive
  double flux_plane_y = 0.5;
  int max_newton_iterations = 50;
  double tolerance = 1e-10;  // on ||F(u)||_inf
};

struct NewtonStep {
  double k = 0.0;
  std::vector<double> residual_history;  // ||F||_inf before each iteration and at exit
};

struct ReactionDiffusionSolution {
  std::vector<double> field;
  double kappa = 0.0;
  double final_residual = 0.0;
  std::vector<NewtonStep> steps;
};

std::vector<double> continuation_schedule(const ReactionDiffusionProblem& problem);

// Cell-integrated residual F(u) = b - A u + k |cell| u (1 - u).
std::vector<double> reaction_diffusion_residual(const MaterialGrid& grid, double k, std::span<const double> u);

ReactionDiffusionSolution solve_reaction_diffusion(const ReactionDiffusionProblem& problem);

// ---------------------------------------------------------------------------
// Scalar Helmholtz: lap(u) + omega^2 eps u = s. The material grid covers the
// structure only; air gaps and quadratic-profile PMLs are added above and
// below. Periodic in x. A uniform line source below the structure launches a
// normally incident plane wave; transmission is the monitor-line mean field
// divided by that of an empty (eps = 1) run on the same mesh.

enum class FdfdStencil {
  Standard,  // 5-point Laplacian, diagonal mass term
  Compact,   // fourth-order (Numerov) mass distribution along y
};

struct HelmholtzConfig {
  double wavelength = 1.0;
  double pml_thickness = 1.0;  // in units of the largest wavelength
  double air_gap = 1.0;        // between structure and PML, holds source/monitor
  double pml_reflection = 1e-4;
  FdfdStencil stencil = FdfdStencil::Standard;
};

struct HelmholtzProblem {
  MaterialGrid grid;  // permittivity of the structure region
  HelmholtzConfig config;
};

// Row layout of the padded computational domain.
struct HelmholtzLayout {
  int nx = 0;
  int ny_total = 0;
  int pml_rows = 0;
  int gap_rows = 0;
  int structure_row0 = 0;
  int structure_rows = 0;
  int source_row = 0;
  int monitor_row = 0;
  double dx = 0.0;
  double dy = 0.0;
};

HelmholtzLayout helmholtz_layout(const MaterialGrid& grid, const HelmholtzConfig& config);

struct HelmholtzSolution {
  Complex t;
  HelmholtzLayout layout;
  std::vector<Complex> field;
  Complex calibration;  // mean monitor field of the empty run
  std::shared_ptr<const SparseLu<Complex>> factorization;
};

HelmholtzSolution solve_helmholtz(const HelmholtzProblem& problem);

// Gradient of cot_re * Re(t) + cot_im * Im(t) with respect to the grid values.
std::vector<double> helmholtz_vjp(const HelmholtzProblem& problem, const HelmholtzSolution& solution, double cot_re,
                                  double cot_im);

// Number of cached empty-run calibrations (for tests).
std::size_t helmholtz_calibration_cache_size();

}  // namespace peds
