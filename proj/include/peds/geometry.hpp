// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "peds/random.hpp"

namespace peds {

enum class Family { Fourier16, Fourier25, Fisher16, Fisher25, Maxwell10 };

enum class Physics { Diffusion, ReactionDiffusion, Helmholtz };

// Static description of one surrogate family: lattice, materials and the
// two solver resolutions (pixels per unit height, or per wavelength).
struct FamilyInfo {
  Family family;
  std::string_view name;
  Physics physics;
  int hole_count;
  int lattice;  // holes per side for the square lattices, 0 for Maxwell
  double hole_value;
  double medium_value;
  int hf_resolution;
  int lf_resolution;
  int frequency_count;  // 0 unless the input carries a frequency one-hot
  int target_dim;
};

const FamilyInfo& family_info(Family family);
Family parse_family(std::string_view name);
std::string_view family_name(Family family);
const std::vector<Family>& all_families();

// Maxwell unit cell, in units of the largest vacuum wavelength.
namespace maxwell_cell {
inline constexpr double kPeriod = 0.95;
inline constexpr double kThickness = 11.0;
inline constexpr double kHoleHeight = 0.75;
inline constexpr double kInterstice = 0.35;
inline constexpr int kLayers = 10;
inline constexpr int kFrequencies = 3;
// Vacuum wavelengths selected by the frequency one-hot.
inline constexpr double kWavelengths[kFrequencies] = {1.0, 0.9, 0.8};
}  // namespace maxwell_cell

struct GeometryParams {
  Family family = Family::Fourier16;
  std::vector<double> widths;
  std::optional<int> freq_index;  // Maxwell10 only

  // Throws ValidationError when the invariants do not hold.
  void validate() const;
  // Network input: widths, followed by the frequency one-hot for Maxwell.
  std::vector<double> features() const;
  std::vector<double> freq_onehot() const;
  double wavelength() const;
};

void to_json(nlohmann::json& j, const GeometryParams& p);
void from_json(const nlohmann::json& j, GeometryParams& p);

// Row-major pixel grid, x fastest; iy = 0 is the bottom row.
struct MaterialGrid {
  int nx = 0;
  int ny = 0;
  double cell_x = 0.0;
  double cell_y = 0.0;
  std::vector<double> values;

  MaterialGrid() = default;
  MaterialGrid(int nx, int ny, double cell_x, double cell_y, double fill);

  std::size_t size() const { return values.size(); }
  double& at(int ix, int iy) { return values[static_cast<std::size_t>(iy) * nx + ix]; }
  double at(int ix, int iy) const { return values[static_cast<std::size_t>(iy) * nx + ix]; }
  bool same_shape(const MaterialGrid& other) const { return nx == other.nx && ny == other.ny; }
  double mean() const;
};

struct ProjectionConfig {
  bool mirror_x = false;
  double clamp_lo = 0.0;
  double clamp_hi = 1.0;
};

ProjectionConfig default_projection(Family family);

// Grid dimensions that rasterize() produces for a family at a resolution.
std::pair<int, int> grid_shape(Family family, int resolution);

// Exact area-weighted average of the material coefficient over each pixel.
MaterialGrid rasterize(const GeometryParams& p, int resolution);

// d(pixel values)/d(widths[hole]) of rasterize(), piecewise analytic.
MaterialGrid rasterize_width_derivative(const GeometryParams& p, int resolution, int hole);

// Optional mirror averaging in x, then clamping to [clamp_lo, clamp_hi].
MaterialGrid project(const MaterialGrid& g, const ProjectionConfig& cfg);

// Cotangent of project() with respect to its input, evaluated at `input`.
std::vector<double> project_vjp(const MaterialGrid& input, const ProjectionConfig& cfg,
                                std::span<const double> cotangent);

// w * gen + (1 - w) * down.
MaterialGrid mix(const MaterialGrid& gen, const MaterialGrid& down, double w);

// Upper end of the sampled width range, as a fraction of the pitch.
inline constexpr double kMaxSampledWidth = 0.8;

// Draws widths i.i.d. uniform on [0, kMaxSampledWidth] (and a uniform
// frequency for Maxwell).
GeometryParams sample_params(Family family, Rng& rng);

}  // namespace peds
