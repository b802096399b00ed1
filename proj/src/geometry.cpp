// SPDX-License-Identifier: Apache-2.0

#include "peds/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "peds/error.hpp"

namespace peds {
namespace {

const std::array<FamilyInfo, 5> kFamilies = {{
    {Family::Fourier16, "fourier16", Physics::Diffusion, 16, 4, 0.1, 1.0, 100, 4, 0, 1},
    {Family::Fourier25, "fourier25", Physics::Diffusion, 25, 5, 0.1, 1.0, 100, 5, 0, 1},
    {Family::Fisher16, "fisher16", Physics::ReactionDiffusion, 16, 4, 0.1, 1.0, 100, 4, 0, 1},
    {Family::Fisher25, "fisher25", Physics::ReactionDiffusion, 25, 5, 0.1, 1.0, 100, 5, 0, 1},
    {Family::Maxwell10, "maxwell10", Physics::Helmholtz, maxwell_cell::kLayers, 0, 1.0, 2.1, 40,
     10, maxwell_cell::kFrequencies, 2},
}};

struct Rect {
  double x0, x1, y0, y1;
};

// Hole footprint and the rate at which each edge moves per unit width.
struct HoleShape {
  Rect rect;
  double dx_dw;  // d(x1)/dw = -d(x0)/dw
  double dy_dw;  // d(y1)/dw = -d(y0)/dw
};

HoleShape hole_shape(Family family, int hole, double width) {
  const auto& info = family_info(family);
  if (info.physics == Physics::Helmholtz) {
    using namespace maxwell_cell;
    const double half = 0.5 * width * kPeriod;
    const double margin = 0.5 * (kThickness - kLayers * kHoleHeight - (kLayers - 1) * kInterstice);
    const double y0 = margin + hole * (kHoleHeight + kInterstice);
    return {{0.5 * kPeriod - half, 0.5 * kPeriod + half, y0, y0 + kHoleHeight},
            0.5 * kPeriod,
            0.0};
  }
  const int n = info.lattice;
  const double pitch = 1.0 / n;
  const double cx = (hole % n + 0.5) * pitch;
  const double cy = (hole / n + 0.5) * pitch;
  const double half = 0.5 * width * pitch;
  return {{cx - half, cx + half, cy - half, cy + half}, 0.5 * pitch, 0.5 * pitch};
}

double domain_width(Family family) {
  return family_info(family).physics == Physics::Helmholtz ? maxwell_cell::kPeriod : 1.0;
}

double domain_height(Family family) {
  return family_info(family).physics == Physics::Helmholtz ? maxwell_cell::kThickness : 1.0;
}

double overlap(double a, double b, double c, double d) { return std::max(0.0, std::min(b, d) - std::max(a, c)); }

// Derivative of overlap([a,b],[c,d]) when a = m - h, b = m + h, per unit dh.
double overlap_rate(double a, double b, double c, double d) {
  if (overlap(a, b, c, d) <= 0.0) return 0.0;
  return (b < d ? 1.0 : 0.0) + (a > c ? 1.0 : 0.0);
}

std::pair<int, int> pixel_span(double lo, double hi, double cell, int n) {
  const int first = std::max(0, static_cast<int>(std::floor(lo / cell)));
  const int last = std::min(n - 1, static_cast<int>(std::ceil(hi / cell)) - 1);
  return {first, last};
}

}  // namespace

const FamilyInfo& family_info(Family family) { return kFamilies[static_cast<std::size_t>(family)]; }

Family parse_family(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  lower.erase(std::remove_if(lower.begin(), lower.end(),
                             [](char c) { return c == '(' || c == ')' || c == '_' || c == '-'; }),
              lower.end());
  for (const auto& info : kFamilies) {
    if (lower == info.name) return info.family;
  }
  throw ValidationError("unknown family '" + std::string(name) + "'");
}

std::string_view family_name(Family family) { return family_info(family).name; }

const std::vector<Family>& all_families() {
  static const std::vector<Family> families = {Family::Fourier16, Family::Fourier25, Family::Fisher16,
                                               Family::Fisher25, Family::Maxwell10};
  return families;
}

void GeometryParams::validate() const {
  const auto& info = family_info(family);
  if (static_cast<int>(widths.size()) != info.hole_count) {
    throw ValidationError(std::string(info.name) + " expects " + std::to_string(info.hole_count) +
                          " widths, got " + std::to_string(widths.size()));
  }
  for (double w : widths) {
    if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("width outside [0, 1]: " + std::to_string(w));
  }
  if (info.frequency_count > 0) {
    if (!freq_index || *freq_index < 0 || *freq_index >= info.frequency_count) {
      throw ValidationError("maxwell10 requires freq_index in [0, " +
                            std::to_string(info.frequency_count) + ")");
    }
  } else if (freq_index) {
    throw ValidationError(std::string(info.name) + " does not take a frequency");
  }
}

std::vector<double> GeometryParams::freq_onehot() const {
  const int count = family_info(family).frequency_count;
  std::vector<double> onehot(static_cast<std::size_t>(count), 0.0);
  if (freq_index && *freq_index >= 0 && *freq_index < count) onehot[*freq_index] = 1.0;
  return onehot;
}

std::vector<double> GeometryParams::features() const {
  std::vector<double> x = widths;
  const auto onehot = freq_onehot();
  x.insert(x.end(), onehot.begin(), onehot.end());
  return x;
}

double GeometryParams::wavelength() const {
  if (!freq_index) throw ValidationError("geometry has no frequency");
  return maxwell_cell::kWavelengths[*freq_index];
}

void to_json(nlohmann::json& j, const GeometryParams& p) {
  j = nlohmann::json{{"family", family_name(p.family)}, {"widths", p.widths}};
  if (p.freq_index) {
    j["freq_index"] = *p.freq_index;
  } else {
    j["freq_index"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, GeometryParams& p) {
  p.family = parse_family(j.at("family").get<std::string>());
  p.widths = j.at("widths").get<std::vector<double>>();
  p.freq_index.reset();
  if (j.contains("freq_index") && !j["freq_index"].is_null()) p.freq_index = j["freq_index"].get<int>();
  p.validate();
}

MaterialGrid::MaterialGrid(int nx_, int ny_, double cell_x_, double cell_y_, double fill)
    : nx(nx_), ny(ny_), cell_x(cell_x_), cell_y(cell_y_),
      values(static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_), fill) {
  if (nx < 1 || ny < 1) throw ValidationError("material grid needs nx, ny >= 1");
}

double MaterialGrid::mean() const {
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

ProjectionConfig default_projection(Family family) {
  const auto& info = family_info(family);
  return {false, std::min(info.hole_value, info.medium_value), std::max(info.hole_value, info.medium_value)};
}

std::pair<int, int> grid_shape(Family family, int resolution) {
  if (resolution < 1) throw ValidationError("resolution must be >= 1");
  if (family_info(family).physics == Physics::Helmholtz) {
    const int nx = std::max(1, static_cast<int>(std::lround(maxwell_cell::kPeriod * resolution)));
    const int ny = std::max(1, static_cast<int>(std::lround(maxwell_cell::kThickness * resolution)));
    return {nx, ny};
  }
  return {resolution, resolution};
}

MaterialGrid rasterize(const GeometryParams& p, int resolution) {
  p.validate();
  const auto& info = family_info(p.family);
  const auto [nx, ny] = grid_shape(p.family, resolution);
  const double dx = domain_width(p.family) / nx;
  const double dy = domain_height(p.family) / ny;
  MaterialGrid fraction(nx, ny, dx, dy, 0.0);
  const double inv_area = 1.0 / (dx * dy);

  for (int hole = 0; hole < info.hole_count; ++hole) {
    const Rect r = hole_shape(p.family, hole, p.widths[hole]).rect;
    if (r.x1 <= r.x0 || r.y1 <= r.y0) continue;
    const auto [ix0, ix1] = pixel_span(r.x0, r.x1, dx, nx);
    const auto [iy0, iy1] = pixel_span(r.y0, r.y1, dy, ny);
    for (int iy = iy0; iy <= iy1; ++iy) {
      const double oy = overlap(r.y0, r.y1, iy * dy, (iy + 1) * dy);
      if (oy <= 0.0) continue;
      for (int ix = ix0; ix <= ix1; ++ix) {
        fraction.at(ix, iy) += oy * overlap(r.x0, r.x1, ix * dx, (ix + 1) * dx) * inv_area;
      }
    }
  }

  const double lo = std::min(info.hole_value, info.medium_value);
  const double hi = std::max(info.hole_value, info.medium_value);
  MaterialGrid out = fraction;
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    const double f = std::clamp(fraction.values[k], 0.0, 1.0);
    out.values[k] = std::clamp(info.medium_value + (info.hole_value - info.medium_value) * f, lo, hi);
  }
  return out;
}

MaterialGrid rasterize_width_derivative(const GeometryParams& p, int resolution, int hole) {
  p.validate();
  const auto& info = family_info(p.family);
  if (hole < 0 || hole >= info.hole_count) throw ValidationError("hole index out of range");
  const auto [nx, ny] = grid_shape(p.family, resolution);
  const double dx = domain_width(p.family) / nx;
  const double dy = domain_height(p.family) / ny;
  MaterialGrid d(nx, ny, dx, dy, 0.0);

  const HoleShape shape = hole_shape(p.family, hole, p.widths[hole]);
  const Rect& r = shape.rect;
  const double scale = (info.hole_value - info.medium_value) / (dx * dy);
  const auto [ix0, ix1] = pixel_span(r.x0, r.x1, dx, nx);
  const auto [iy0, iy1] = pixel_span(r.y0, r.y1, dy, ny);
  for (int iy = iy0; iy <= iy1; ++iy) {
    const double cy0 = iy * dy, cy1 = (iy + 1) * dy;
    const double oy = overlap(r.y0, r.y1, cy0, cy1);
    const double doy = shape.dy_dw * overlap_rate(r.y0, r.y1, cy0, cy1);
    for (int ix = ix0; ix <= ix1; ++ix) {
      const double cx0 = ix * dx, cx1 = (ix + 1) * dx;
      const double ox = overlap(r.x0, r.x1, cx0, cx1);
      const double dox = shape.dx_dw * overlap_rate(r.x0, r.x1, cx0, cx1);
      d.at(ix, iy) = scale * (dox * oy + ox * doy);
    }
  }
  return d;
}

MaterialGrid project(const MaterialGrid& g, const ProjectionConfig& cfg) {
  MaterialGrid out = g;
  if (cfg.mirror_x) {
    for (int iy = 0; iy < g.ny; ++iy) {
      for (int ix = 0; ix < g.nx; ++ix) {
        out.at(ix, iy) = 0.5 * (g.at(ix, iy) + g.at(g.nx - 1 - ix, iy));
      }
    }
  }
  for (double& v : out.values) v = std::clamp(v, cfg.clamp_lo, cfg.clamp_hi);
  return out;
}

std::vector<double> project_vjp(const MaterialGrid& input, const ProjectionConfig& cfg,
                                std::span<const double> cotangent) {
  if (cotangent.size() != input.size()) throw ValidationError("projection cotangent has wrong size");
  // Clamp passes gradients only where the pre-clamp value is inside the box.
  std::vector<double> upstream(cotangent.begin(), cotangent.end());
  for (int iy = 0; iy < input.ny; ++iy) {
    for (int ix = 0; ix < input.nx; ++ix) {
      const double v = cfg.mirror_x ? 0.5 * (input.at(ix, iy) + input.at(input.nx - 1 - ix, iy))
                                    : input.at(ix, iy);
      if (v < cfg.clamp_lo || v > cfg.clamp_hi) upstream[static_cast<std::size_t>(iy) * input.nx + ix] = 0.0;
    }
  }
  if (!cfg.mirror_x) return upstream;
  std::vector<double> out(upstream.size());
  for (int iy = 0; iy < input.ny; ++iy) {
    const std::size_t row = static_cast<std::size_t>(iy) * input.nx;
    for (int ix = 0; ix < input.nx; ++ix) {
      out[row + ix] = 0.5 * (upstream[row + ix] + upstream[row + (input.nx - 1 - ix)]);
    }
  }
  return out;
}

MaterialGrid mix(const MaterialGrid& gen, const MaterialGrid& down, double w) {
  if (!gen.same_shape(down)) throw ValidationError("mix: grid shapes differ");
  if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("mix: w outside [0, 1]");
  if (w == 1.0) return gen;
  MaterialGrid out = down;
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    out.values[k] = down.values[k] + w * (gen.values[k] - down.values[k]);
  }
  return out;
}

GeometryParams sample_params(Family family, Rng& rng) {
  const auto& info = family_info(family);
  GeometryParams p;
  p.family = family;
  p.widths.resize(static_cast<std::size_t>(info.hole_count));
  for (double& w : p.widths) w = kMaxSampledWidth * uniform01(rng);
  if (info.frequency_count > 0) {
    p.freq_index = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(info.frequency_count)));
  }
  return p;
}

}  // namespace peds
