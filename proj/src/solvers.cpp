// SPDX-License-Identifier: Apache-2.0

#include "peds/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <tuple>

#include "peds/error.hpp"

namespace peds {
namespace {

// One conductance link of the diffusion operator. `b < 0` marks a Dirichlet
// boundary face carrying `boundary_value`.
struct Face {
  int a;
  int b;
  double boundary_value;
  double geom;  // face length / centre distance (for boundary faces: half distance)
  int plane;    // horizontal face plane index, or -1 for vertical faces
};

std::vector<Face> diffusion_faces(const MaterialGrid& g) {
  std::vector<Face> faces;
  faces.reserve(static_cast<std::size_t>(2 * g.nx * (g.ny + 1)));
  const double gx = g.cell_y / g.cell_x;
  const double gy = g.cell_x / g.cell_y;
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      const int a = iy * g.nx + ix;
      if (g.nx > 1) faces.push_back({a, iy * g.nx + (ix + 1) % g.nx, 0.0, gx, -1});
      if (iy + 1 < g.ny) faces.push_back({a, a + g.nx, 0.0, gy, iy + 1});
    }
  }
  for (int ix = 0; ix < g.nx; ++ix) {
    faces.push_back({ix, -1, 1.0, 2.0 * gy, 0});
    faces.push_back({(g.ny - 1) * g.nx + ix, -1, 0.0, 2.0 * gy, g.ny});
  }
  return faces;
}

double conductance(const Face& f, std::span<const double> d) {
  if (f.b < 0) return f.geom * d[f.a];
  return f.geom * 2.0 * d[f.a] * d[f.b] / (d[f.a] + d[f.b]);
}

// (dc/dD_a, dc/dD_b)
std::pair<double, double> conductance_partials(const Face& f, std::span<const double> d) {
  if (f.b < 0) return {f.geom, 0.0};
  const double s = d[f.a] + d[f.b];
  return {f.geom * 2.0 * d[f.b] * d[f.b] / (s * s), f.geom * 2.0 * d[f.a] * d[f.a] / (s * s)};
}

void check_positive(const MaterialGrid& g) {
  for (double v : g.values) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("diffusion coefficients must be finite and > 0");
  }
}

double flux_normalization(const MaterialGrid& g) { return (g.ny * g.cell_y) / (g.nx * g.cell_x); }

}  // namespace

int flux_plane_index(const MaterialGrid& grid, double y) {
  if (!(y >= 0.0 && y <= 1.0)) throw ValidationError("flux plane must lie in [0, 1]");
  return std::clamp(static_cast<int>(std::lround(y * grid.ny)), 0, grid.ny);
}

SparseMatrix<double> assemble_diffusion(const MaterialGrid& grid, std::vector<double>& rhs) {
  check_positive(grid);
  const int n = grid.nx * grid.ny;
  rhs.assign(static_cast<std::size_t>(n), 0.0);
  TripletBuilder<double> builder(n);
  const auto faces = diffusion_faces(grid);
  builder.reserve(faces.size() * 4);
  for (const auto& f : faces) {
    const double c = conductance(f, grid.values);
    builder.add(f.a, f.a, c);
    if (f.b < 0) {
      rhs[f.a] += c * f.boundary_value;
    } else {
      builder.add(f.b, f.b, c);
      builder.add(f.a, f.b, -c);
      builder.add(f.b, f.a, -c);
    }
  }
  return builder.build();
}

double diffusion_flux(const MaterialGrid& grid, std::span<const double> field, int plane) {
  if (plane < 0 || plane > grid.ny) throw ValidationError("flux plane index out of range");
  double flux = 0.0;
  for (const auto& f : diffusion_faces(grid)) {
    if (f.plane != plane) continue;
    const double c = conductance(f, grid.values);
    if (f.b >= 0) {
      flux += c * (field[f.a] - field[f.b]);
    } else if (plane == 0) {
      flux += c * (f.boundary_value - field[f.a]);
    } else {
      flux += c * (field[f.a] - f.boundary_value);
    }
  }
  return flux * flux_normalization(grid);
}

DiffusionSolution solve_diffusion(const DiffusionProblem& problem) {
  std::vector<double> rhs;
  const auto a = assemble_diffusion(problem.grid, rhs);
  auto lin = solve<double>(a, rhs);
  const double scale = 1.0 + inf_norm<double>(rhs);
  if (lin.residual_norm > 1e-10 * scale) {
    std::ostringstream msg;
    msg << "diffusion solve residual " << lin.residual_norm << " above tolerance";
    throw SolverError(msg.str());
  }
  DiffusionSolution out;
  out.field = std::move(lin.x);
  out.kappa = diffusion_flux(problem.grid, out.field, flux_plane_index(problem.grid, problem.flux_plane_y));
  out.factorization = std::move(lin.factorization);
  return out;
}

std::vector<double> diffusion_vjp(const DiffusionProblem& problem, const DiffusionSolution& solution,
                                  double cotangent) {
  const auto& g = problem.grid;
  std::vector<double> grad(g.size(), 0.0);
  if (cotangent == 0.0) return grad;
  const int plane = flux_plane_index(g, problem.flux_plane_y);
  const double norm = flux_normalization(g);
  const auto faces = diffusion_faces(g);
  const auto& u = solution.field;

  // kappa = q(u, D); A(D) u = b(D). dkappa/dD = dq/dD + lambda^T (db/dD - dA/dD u), A^T lambda = dq/du.
  std::vector<double> dq_du(g.size(), 0.0);
  for (const auto& f : faces) {
    if (f.plane != plane) continue;
    const double c = conductance(f, g.values) * norm;
    const auto [pa, pb] = conductance_partials(f, g.values);
    double drop;  // u_below - u_above across this face
    if (f.b >= 0) {
      drop = u[f.a] - u[f.b];
      dq_du[f.a] += c;
      dq_du[f.b] -= c;
    } else if (plane == 0) {
      drop = f.boundary_value - u[f.a];
      dq_du[f.a] -= c;
    } else {
      drop = u[f.a] - f.boundary_value;
      dq_du[f.a] += c;
    }
    grad[f.a] += norm * pa * drop;
    if (f.b >= 0) grad[f.b] += norm * pb * drop;
  }

  std::vector<double> lambda;
  if (solution.factorization) {
    lambda = solution.factorization->solve_transposed(dq_du);
  } else {
    std::vector<double> rhs;
    lambda = solve_transposed<double>(assemble_diffusion(g, rhs), dq_du);
  }

  // Residual r = b - A u; each face contributes to rows a (and b).
  for (const auto& f : faces) {
    const auto [pa, pb] = conductance_partials(f, g.values);
    double sens;  // lambda^T d(b - A u)/dc
    if (f.b >= 0) {
      sens = -(lambda[f.a] - lambda[f.b]) * (u[f.a] - u[f.b]);
    } else {
      sens = lambda[f.a] * (f.boundary_value - u[f.a]);
    }
    grad[f.a] += pa * sens;
    if (f.b >= 0) grad[f.b] += pb * sens;
  }
  for (double& v : grad) v *= cotangent;
  return grad;
}

// ---------------------------------------------------------------------------

std::vector<double> continuation_schedule(const ReactionDiffusionProblem& p) {
  if (p.k == 0.0) return {};
  if (p.continuation_steps < 1 || !(p.k_start > 0.0) || !(p.k >= p.k_start)) {
    throw ValidationError("invalid continuation schedule");
  }
  if (p.continuation_steps == 1) return {p.k};
  std::vector<double> ks(static_cast<std::size_t>(p.continuation_steps));
  const double ratio = std::log(p.k / p.k_start) / (p.continuation_steps - 1);
  for (int s = 0; s < p.continuation_steps; ++s) ks[s] = p.k_start * std::exp(ratio * s);
  ks.back() = p.k;
  return ks;
}

std::vector<double> reaction_diffusion_residual(const MaterialGrid& grid, double k, std::span<const double> u) {
  std::vector<double> rhs;
  const auto a = assemble_diffusion(grid, rhs);
  const auto au = a.multiply(u);
  const double area = grid.cell_x * grid.cell_y;
  std::vector<double> f(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) f[i] = rhs[i] - au[i] + k * area * u[i] * (1.0 - u[i]);
  return f;
}

ReactionDiffusionSolution solve_reaction_diffusion(const ReactionDiffusionProblem& problem) {
  const auto& g = problem.grid;
  const int plane = flux_plane_index(g, problem.flux_plane_y);
  ReactionDiffusionSolution out;

  const auto linear = solve_diffusion({g, problem.flux_plane_y});
  out.field = linear.field;
  out.kappa = linear.kappa;
  const auto schedule = continuation_schedule(problem);
  if (schedule.empty()) return out;

  std::vector<double> rhs;
  const auto a = assemble_diffusion(g, rhs);
  const double area = g.cell_x * g.cell_y;
  std::vector<std::ptrdiff_t> diagonal(g.size());
  for (int i = 0; i < a.n; ++i) diagonal[i] = a.find(i, i);

  auto residual = [&](std::span<const double> u, double k) {
    auto au = a.multiply(u);
    std::vector<double> f(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) f[i] = rhs[i] - au[i] + k * area * u[i] * (1.0 - u[i]);
    return f;
  };

  std::unique_ptr<SparseLu<double>> lu;
  SparseMatrix<double> jac = a;
  auto& u = out.field;
  for (double k : schedule) {
    NewtonStep step;
    step.k = k;
    auto f = residual(u, k);
    double norm = inf_norm<double>(f);
    step.residual_history.push_back(norm);
    int iter = 0;
    while (norm > problem.tolerance) {
      if (iter++ >= problem.max_newton_iterations) {
        std::ostringstream msg;
        msg << "Newton did not converge at k=" << k << " after " << problem.max_newton_iterations
            << " iterations; last residual " << norm;
        throw SolverError(msg.str());
      }
      // (A - diag(k |cell| (1 - 2u))) delta = F  <=>  J delta = -F.
      for (int i = 0; i < a.n; ++i) jac.values[diagonal[i]] = a.values[diagonal[i]] - k * area * (1.0 - 2.0 * u[i]);
      if (!lu) {
        lu = std::make_unique<SparseLu<double>>(jac);
      } else {
        lu->refactor(jac);
      }
      const auto delta = lu->solve(f);

      double alpha = 1.0;
      bool accepted = false;
      std::vector<double> trial(u.size());
      for (int halving = 0; halving < 30; ++halving, alpha *= 0.5) {
        for (std::size_t i = 0; i < u.size(); ++i) trial[i] = u[i] + alpha * delta[i];
        auto f_trial = residual(trial, k);
        const double n_trial = inf_norm<double>(f_trial);
        if (std::isfinite(n_trial) && n_trial < norm) {
          u.swap(trial);
          f.swap(f_trial);
          norm = n_trial;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        std::ostringstream msg;
        msg << "Newton line search stalled at k=" << k << " with residual " << norm;
        throw SolverError(msg.str());
      }
      step.residual_history.push_back(norm);
    }
    out.steps.push_back(std::move(step));
  }
  out.final_residual = out.steps.back().residual_history.back();
  out.kappa = diffusion_flux(g, u, plane);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Stretch {
  std::vector<Complex> centre;  // s at row centres, size ny_total
  std::vector<Complex> face;    // s at the face below row j, size ny_total + 1
};

Stretch pml_stretch(const HelmholtzLayout& L, const HelmholtzConfig& cfg, double omega) {
  Stretch s;
  s.centre.assign(static_cast<std::size_t>(L.ny_total), Complex(1.0, 0.0));
  s.face.assign(static_cast<std::size_t>(L.ny_total) + 1, Complex(1.0, 0.0));
  if (L.pml_rows == 0) return s;
  const double thickness = L.pml_rows * L.dy;
  const double sigma_max = -3.0 * std::log(cfg.pml_reflection) / (2.0 * thickness);
  const double top = L.ny_total * L.dy;
  auto depth = [&](double y) {
    if (y < thickness) return thickness - y;
    if (y > top - thickness) return y - (top - thickness);
    return 0.0;
  };
  auto value = [&](double y) {
    const double d = depth(y) / thickness;
    return Complex(1.0, sigma_max * d * d / omega);
  };
  for (int j = 0; j < L.ny_total; ++j) s.centre[j] = value((j + 0.5) * L.dy);
  for (int j = 0; j <= L.ny_total; ++j) s.face[j] = value(j * L.dy);
  return s;
}

std::pair<double, double> mass_weights(FdfdStencil stencil) {
  return stencil == FdfdStencil::Compact ? std::pair{10.0 / 12.0, 1.0 / 12.0} : std::pair{1.0, 0.0};
}

// Permittivity on the padded domain, row-major.
std::vector<double> padded_permittivity(const MaterialGrid& g, const HelmholtzLayout& L) {
  std::vector<double> eps(static_cast<std::size_t>(L.nx) * L.ny_total, 1.0);
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      eps[static_cast<std::size_t>(L.structure_row0 + iy) * L.nx + ix] = g.at(ix, iy);
    }
  }
  return eps;
}

SparseMatrix<Complex> assemble_helmholtz(const HelmholtzLayout& L, const HelmholtzConfig& cfg,
                                         std::span<const double> eps, std::vector<Complex>& rhs) {
  const double omega = 2.0 * std::numbers::pi / cfg.wavelength;
  const double w2 = omega * omega;
  const auto s = pml_stretch(L, cfg, omega);
  const auto [wc, wn] = mass_weights(cfg.stencil);
  const int n = L.nx * L.ny_total;
  const double idy2 = 1.0 / (L.dy * L.dy);
  const double idx2 = 1.0 / (L.dx * L.dx);

  TripletBuilder<Complex> builder(n);
  builder.reserve(static_cast<std::size_t>(n) * 7);
  rhs.assign(static_cast<std::size_t>(n), Complex{});
  for (int j = 0; j < L.ny_total; ++j) {
    const Complex sc = s.centre[j];
    const Complex up = idy2 / s.face[j + 1];
    const Complex down = idy2 / s.face[j];
    for (int i = 0; i < L.nx; ++i) {
      const int row = j * L.nx + i;
      // Row scaled by s_centre: d/dy (1/s d/dy u) + s (d2/dx2 u + omega^2 eps u).
      builder.add(row, row, -(up + down));
      if (j + 1 < L.ny_total) builder.add(row, row + L.nx, up);
      if (j > 0) builder.add(row, row - L.nx, down);
      if (L.nx > 1) {
        builder.add(row, row, -2.0 * sc * idx2);
        builder.add(row, j * L.nx + (i + 1) % L.nx, sc * idx2);
        builder.add(row, j * L.nx + (i + L.nx - 1) % L.nx, sc * idx2);
      }
      builder.add(row, row, sc * w2 * wc * eps[row]);
      if (wn != 0.0) {
        if (j + 1 < L.ny_total) builder.add(row, row + L.nx, sc * w2 * wn * eps[row + L.nx]);
        if (j > 0) builder.add(row, row - L.nx, sc * w2 * wn * eps[row - L.nx]);
      }
    }
  }
  const Complex amplitude = s.centre[L.source_row] / L.dy;
  for (int i = 0; i < L.nx; ++i) rhs[static_cast<std::size_t>(L.source_row) * L.nx + i] = amplitude;
  return builder.build();
}

Complex monitor_mean(const HelmholtzLayout& L, std::span<const Complex> field) {
  Complex acc{};
  for (int i = 0; i < L.nx; ++i) acc += field[static_cast<std::size_t>(L.monitor_row) * L.nx + i];
  return acc / static_cast<double>(L.nx);
}

void check_field(std::span<const Complex> field) {
  for (const auto& v : field) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw SolverError("Helmholtz field is not finite");
  }
}

// Everything the empty run depends on.
using CalibrationKey = std::tuple<int, int, int, int, double, double, double, double, int>;
std::mutex calibration_mutex;
std::map<CalibrationKey, Complex> calibration_cache;

Complex empty_run_calibration(const HelmholtzLayout& L, const HelmholtzConfig& cfg) {
  const CalibrationKey key{L.nx,  L.ny_total,     L.structure_rows,         L.gap_rows,
                           L.dx,  L.dy,           cfg.wavelength,           cfg.pml_reflection,
                           static_cast<int>(cfg.stencil)};
  {
    std::lock_guard lock(calibration_mutex);
    if (auto it = calibration_cache.find(key); it != calibration_cache.end()) return it->second;
  }
  const std::vector<double> vacuum(static_cast<std::size_t>(L.nx) * L.ny_total, 1.0);
  std::vector<Complex> rhs;
  const auto a = assemble_helmholtz(L, cfg, vacuum, rhs);
  const auto lin = solve<Complex>(a, rhs);
  check_field(lin.x);
  const Complex c = monitor_mean(L, lin.x);
  if (std::abs(c) == 0.0) throw SolverError("empty-run calibration field vanished at the monitor");
  std::lock_guard lock(calibration_mutex);
  calibration_cache.emplace(key, c);
  return c;
}

}  // namespace

HelmholtzLayout helmholtz_layout(const MaterialGrid& grid, const HelmholtzConfig& config) {
  HelmholtzLayout L;
  L.nx = grid.nx;
  L.dx = grid.cell_x;
  L.dy = grid.cell_y;
  L.pml_rows = static_cast<int>(std::lround(config.pml_thickness / L.dy));
  L.gap_rows = std::max(2, static_cast<int>(std::lround(config.air_gap / L.dy)));
  L.structure_rows = grid.ny;
  L.structure_row0 = L.pml_rows + L.gap_rows;
  L.ny_total = 2 * (L.pml_rows + L.gap_rows) + grid.ny;
  L.source_row = L.pml_rows + L.gap_rows / 2;
  L.monitor_row = L.structure_row0 + grid.ny + L.gap_rows / 2;
  return L;
}

HelmholtzSolution solve_helmholtz(const HelmholtzProblem& problem) {
  const auto& g = problem.grid;
  const auto& cfg = problem.config;
  if (!(cfg.wavelength > 0.0)) throw ValidationError("wavelength must be positive");
  // At least 8 pixels per wavelength in vacuum along both axes.
  if (cfg.wavelength / std::max(g.cell_x, g.cell_y) < 8.0 - 1e-9) {
    throw ValidationError("Helmholtz resolution below 8 pixels per wavelength");
  }
  for (double v : g.values) {
    if (!std::isfinite(v) || v <= 0.0) throw ValidationError("permittivity must be finite and > 0");
  }
  HelmholtzSolution out;
  out.layout = helmholtz_layout(g, cfg);
  const auto eps = padded_permittivity(g, out.layout);
  std::vector<Complex> rhs;
  const auto a = assemble_helmholtz(out.layout, cfg, eps, rhs);
  auto lin = solve<Complex>(a, rhs);
  check_field(lin.x);
  out.calibration = empty_run_calibration(out.layout, cfg);
  out.t = monitor_mean(out.layout, lin.x) / out.calibration;
  out.field = std::move(lin.x);
  out.factorization = std::move(lin.factorization);
  return out;
}

std::vector<double> helmholtz_vjp(const HelmholtzProblem& problem, const HelmholtzSolution& solution, double cot_re,
                                  double cot_im) {
  const auto& g = problem.grid;
  const auto& L = solution.layout;
  std::vector<double> grad(g.size(), 0.0);
  if (cot_re == 0.0 && cot_im == 0.0) return grad;

  // t = q^T u with q = monitor averaging / calibration. With A^T lambda = q,
  // dt/d(eps_p) = -lambda^T (dA/d eps_p) u.
  std::vector<Complex> q(static_cast<std::size_t>(L.nx) * L.ny_total, Complex{});
  const Complex weight = 1.0 / (static_cast<double>(L.nx) * solution.calibration);
  for (int i = 0; i < L.nx; ++i) q[static_cast<std::size_t>(L.monitor_row) * L.nx + i] = weight;

  std::vector<Complex> lambda;
  if (solution.factorization) {
    lambda = solution.factorization->solve_transposed(q);
  } else {
    const auto eps = padded_permittivity(g, L);
    std::vector<Complex> rhs;
    lambda = solve_transposed<Complex>(assemble_helmholtz(L, problem.config, eps, rhs), q);
  }

  const double omega = 2.0 * std::numbers::pi / problem.config.wavelength;
  const double w2 = omega * omega;
  const auto s = pml_stretch(L, problem.config, omega);
  const auto [wc, wn] = mass_weights(problem.config.stencil);
  const Complex cot(cot_re, cot_im);
  const auto& u = solution.field;
  for (int iy = 0; iy < g.ny; ++iy) {
    const int j = L.structure_row0 + iy;
    for (int ix = 0; ix < g.nx; ++ix) {
      const std::size_t p = static_cast<std::size_t>(j) * L.nx + ix;
      // eps_p sits in column p: rows p (centre weight) and p +- nx (neighbour weight).
      Complex pairing = wc * s.centre[j] * lambda[p];
      if (wn != 0.0) pairing += wn * (s.centre[j + 1] * lambda[p + L.nx] + s.centre[j - 1] * lambda[p - L.nx]);
      const Complex dt = -w2 * pairing * u[p];
      grad[static_cast<std::size_t>(iy) * g.nx + ix] = (std::conj(cot) * dt).real();
    }
  }
  return grad;
}

std::size_t helmholtz_calibration_cache_size() {
  std::lock_guard lock(calibration_mutex);
  return calibration_cache.size();
}

}  // namespace peds
