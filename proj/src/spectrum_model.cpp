#include "spsa/spectrum_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace spsa {

namespace {

constexpr double kFourLn2 = 2.772588722239781; // 4 ln 2

double energy_tolerance(double e) { return 1e-9 * std::max(1.0, std::abs(e)); }

void require(bool ok, const char* key, const char* what)
{
  if (!ok)
    throw ConfigError(key, what);
}

} // namespace

// --- EnergyGrid ------------------------------------------------------------

void EnergyGrid::validate() const
{
  require(std::isfinite(start_ev), "grid.start_ev", "must be finite");
  require(std::isfinite(stop_ev), "grid.stop_ev", "must be finite");
  require(std::isfinite(step_ev) && step_ev > 0, "grid.step_ev", "must be finite and > 0");
  require(start_ev < stop_ev, "grid.stop_ev", "must be greater than grid.start_ev");
  require((stop_ev - start_ev) / step_ev < 1e7, "grid.step_ev", "grid exceeds 10^7 bins");
}

Index EnergyGrid::size() const
{
  return static_cast<Index>(std::llround((stop_ev - start_ev) / step_ev)) + 1;
}

Eigen::VectorXd EnergyGrid::energies() const
{
  Eigen::VectorXd e(size());
  for (Index k = 0; k < e.size(); ++k)
    e[k] = energy(k);
  return e;
}

Index EnergyGrid::snap(double energy_ev) const
{
  const auto bin = static_cast<Index>(std::llround((energy_ev - start_ev) / step_ev));
  const Index clamped = std::clamp<Index>(bin, 0, size() - 1);
  if (std::abs(energy(clamped) - energy_ev) > 0.5 * step_ev + energy_tolerance(energy_ev))
    throw ConfigError("experiment.control_points",
                      "energy " + std::to_string(energy_ev) + " eV is not on the grid");
  return clamped;
}

// --- DOS -------------------------------------------------------------------

double Peak::operator()(double energy_ev) const
{
  const double x = (energy_ev - center_ev) / width_ev;
  switch (shape)
  {
  case PeakShape::Gaussian:
    return amplitude * std::exp(-kFourLn2 * x * x);
  case PeakShape::Lorentzian:
    return amplitude / (1.0 + 4.0 * x * x);
  }
  return 0.0;
}

void DOSModel::validate() const
{
  for (const auto& p : peaks)
  {
    require(std::isfinite(p.center_ev), "dos.peaks", "peak center must be finite");
    require(std::isfinite(p.width_ev) && p.width_ev > 0, "dos.peaks", "peak width must be > 0");
    require(std::isfinite(p.amplitude) && p.amplitude > 0, "dos.peaks",
            "peak amplitude must be > 0");
  }
  require(std::isfinite(background) && background >= 0, "dos.background", "must be >= 0");
  require(std::isfinite(scale_const) && scale_const > 0, "dos.scale_const", "must be > 0");
}

double DOSModel::density(double energy_ev) const
{
  double d = background;
  for (const auto& p : peaks)
    d += p(energy_ev);
  return d;
}

DOSModel default_dos_model()
{
  DOSModel dos;
  dos.background = 0.5;
  dos.scale_const = 1.0;
  dos.peaks = {
      Peak{34.2, 2.1, 1.0, PeakShape::Gaussian},
      Peak{31.4, 2.6, 0.7, PeakShape::Gaussian},
  };
  return dos;
}

Eigen::VectorXd eval_theta_bar(const DOSModel& dos, const EnergyGrid& grid)
{
  dos.validate();
  grid.validate();
  Eigen::VectorXd theta(grid.size());
  for (Index k = 0; k < theta.size(); ++k)
    theta[k] = dos.scale_const * dos.density(grid.energy(k));
  return theta;
}

// --- Intensity ---------------------------------------------------------------

void IntensityModel::validate() const
{
  require(std::isfinite(mean) && mean > 0, "intensity.mean", "must be > 0");
  require(half_width_frac > 0 && half_width_frac < 1, "intensity.half_width_frac",
          "must lie in (0, 1)");
  if (distribution == IntensityDistribution::TruncatedGaussian)
    require(std::isfinite(gaussian_sigma_frac) && gaussian_sigma_frac > 0,
            "intensity.gaussian_sigma_frac", "must be > 0");
}

double implied_dispersion(const IntensityModel& model)
{
  const double a = model.half_width_frac * model.mean;
  switch (model.distribution)
  {
  case IntensityDistribution::Uniform:
    return a * a / 3.0;
  case IntensityDistribution::TruncatedGaussian: {
    // Symmetric truncation at +-a of N(0, s^2).
    const double s = model.gaussian_sigma_frac * a;
    if (s == 0.0)
      return 0.0;
    const double alpha = a / s;
    const double pdf = std::exp(-0.5 * alpha * alpha) / std::sqrt(2.0 * std::numbers::pi);
    const double mass = std::erf(alpha / std::numbers::sqrt2);
    return s * s * (1.0 - 2.0 * alpha * pdf / mass);
  }
  }
  return 0.0;
}

ScanRng::ScanRng(std::uint64_t seed, std::uint64_t scan_index, Stream stream)
{
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(scan_index),
                    static_cast<std::uint32_t>(scan_index >> 32),
                    static_cast<std::uint32_t>(stream)};
  engine_.seed(seq);
}

double ScanRng::uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double ScanRng::normal()
{
  const double u1 = 1.0 - uniform01(); // (0, 1]
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double sample_intensity(const IntensityModel& model, ScanRng& rng)
{
  switch (model.distribution)
  {
  case IntensityDistribution::Uniform:
    return rng.uniform(model.lower(), model.upper());
  case IntensityDistribution::TruncatedGaussian: {
    const double a = model.half_width_frac * model.mean;
    const double s = model.gaussian_sigma_frac * a;
    for (;;)
    {
      const double d = s * rng.normal();
      if (std::abs(d) <= a)
        return model.mean + d;
    }
  }
  }
  return model.mean;
}

// --- Noise -------------------------------------------------------------------

void NoiseProfile::validate() const
{
  require(std::isfinite(lo_ev), "noise.lo_ev", "must be finite");
  require(std::isfinite(hi_ev) && hi_ev > lo_ev, "noise.hi_ev", "must be greater than noise.lo_ev");
  if (const auto* rc = std::get_if<RaisedCosineShape>(&shape))
  {
    require(std::isfinite(rc->amplitude) && rc->amplitude >= 0, "noise.amplitude", "must be >= 0");
    require(rc->pedestal_frac >= 0 && rc->pedestal_frac <= 1, "noise.pedestal_frac",
            "must lie in [0, 1]");
  }
  else
  {
    const auto& pts = std::get<TabulatedShape>(shape).points;
    require(!pts.empty(), "noise.table", "must contain at least one point");
    for (std::size_t i = 0; i < pts.size(); ++i)
    {
      require(std::isfinite(pts[i].first) && std::isfinite(pts[i].second), "noise.table",
              "entries must be finite");
      require(pts[i].second >= 0, "noise.table", "values must be >= 0");
      if (i > 0)
        require(pts[i].first > pts[i - 1].first, "noise.table", "energies must increase");
    }
  }
  require(jitter_amplitude >= 0 && jitter_amplitude <= 1, "noise.jitter_amplitude",
          "must lie in [0, 1]");
}

bool NoiseProfile::contains(double energy_ev) const
{
  const double tol = energy_tolerance(energy_ev);
  return energy_ev >= lo_ev - tol && energy_ev <= hi_ev + tol;
}

double NoiseProfile::operator()(double energy_ev) const
{
  if (!enabled || !contains(energy_ev))
    return 0.0;
  if (const auto* rc = std::get_if<RaisedCosineShape>(&shape))
  {
    const double x = std::clamp((energy_ev - lo_ev) / (hi_ev - lo_ev), 0.0, 1.0);
    const double bump = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * x));
    return rc->amplitude * (rc->pedestal_frac + (1.0 - rc->pedestal_frac) * bump);
  }
  const auto& pts = std::get<TabulatedShape>(shape).points;
  if (energy_ev <= pts.front().first)
    return pts.front().second;
  if (energy_ev >= pts.back().first)
    return pts.back().second;
  const auto hi = std::upper_bound(pts.begin(), pts.end(), energy_ev,
                                   [](double e, const auto& p) { return e < p.first; });
  const auto lo = hi - 1;
  const double t = (energy_ev - lo->first) / (hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

double NoiseProfile::bound() const
{
  if (!enabled)
    return 0.0;
  double peak = 0.0;
  if (const auto* rc = std::get_if<RaisedCosineShape>(&shape))
    peak = rc->amplitude;
  else
    for (const auto& p : std::get<TabulatedShape>(shape).points)
      peak = std::max(peak, p.second);
  return mode == NoiseMode::PerScanJitter ? peak * (1.0 + jitter_amplitude) : peak;
}

Eigen::VectorXd eval_noise(const NoiseProfile& noise, const EnergyGrid& grid)
{
  noise.validate();
  grid.validate();
  Eigen::VectorXd n(grid.size());
  for (Index k = 0; k < n.size(); ++k)
    n[k] = noise(grid.energy(k));
  return n;
}

std::vector<bool> noise_window_mask(const NoiseProfile& noise, const EnergyGrid& grid)
{
  std::vector<bool> mask(static_cast<std::size_t>(grid.size()));
  for (Index k = 0; k < grid.size(); ++k)
    mask[static_cast<std::size_t>(k)] = noise.contains(grid.energy(k));
  return mask;
}

void DisturbanceModel::validate() const
{
  require(std::isfinite(sigma_w) && sigma_w >= 0, "disturbance.sigma_w", "must be >= 0");
}

// --- Simulator -----------------------------------------------------------------

Simulator::Simulator(const DOSModel& dos, const EnergyGrid& grid, const IntensityModel& intensity,
                     const NoiseProfile& noise, const DisturbanceModel& disturbance)
  : grid_(grid), intensity_(intensity), noise_model_(noise), disturbance_(disturbance)
{
  intensity_.validate();
  disturbance_.validate();
  theta_bar_ = eval_theta_bar(dos, grid_);
  noise_ = eval_noise(noise_model_, grid_);
}

SimulatedScan Simulator::scan(std::uint64_t seed, std::uint64_t scan_index) const
{
  // Each quantity has its own stream, so I_n never depends on the noise or
  // disturbance settings.
  ScanRng intensity_rng(seed, scan_index, ScanRng::Intensity);
  const double intensity = sample_intensity(intensity_, intensity_rng);

  SimulatedScan out;
  Eigen::VectorXd theta = theta_bar_;
  if (disturbance_.sigma_w > 0)
  {
    ScanRng w_rng(seed, scan_index, ScanRng::Disturbance);
    for (Index k = 0; k < theta.size(); ++k)
    {
      theta[k] += disturbance_.sigma_w * w_rng.normal();
      if (theta[k] < 0)
      {
        theta[k] = 0;
        ++out.clamp_count;
      }
    }
  }

  double noise_scale = 1.0;
  if (noise_model_.enabled && noise_model_.mode == NoiseMode::PerScanJitter)
  {
    ScanRng jitter_rng(seed, scan_index, ScanRng::Jitter);
    noise_scale += noise_model_.jitter_amplitude * jitter_rng.uniform(-1.0, 1.0);
  }

  out.record.intensity = intensity;
  out.record.photocurrent = intensity * theta + noise_scale * noise_;
  return out;
}

SimulatedScan sample_scan(const DOSModel& dos, const EnergyGrid& grid,
                          const IntensityModel& intensity, const NoiseProfile& noise,
                          const DisturbanceModel& disturbance, std::uint64_t seed,
                          std::uint64_t scan_index)
{
  return Simulator(dos, grid, intensity, noise, disturbance).scan(seed, scan_index);
}

} // namespace spsa
