#pragma once

// Forward simulator for single-scan photoemission spectra.
//
// Photocurrent per bin: j_n(E) = I_n * theta_n(E) + N_n(E), with
// theta_n = theta_bar + w_n and theta_bar = scale_const * DOS(E). The
// photoemission cross-section is taken as constant over the window and folded
// into scale_const.

#include "spsa/estimator.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <utility>
#include <variant>
#include <vector>

namespace spsa {

using Scan = ScanRecord<double>;

/// Kinetic-energy bins start, start + step, ..., stop (eV).
struct EnergyGrid
{
  double start_ev = 25.8;
  double stop_ev = 37.8;
  double step_ev = 0.05;

  void validate() const;
  Index size() const;
  double energy(Index bin) const { return start_ev + static_cast<double>(bin) * step_ev; }
  Eigen::VectorXd energies() const;
  /// Nearest bin to `energy_ev`; throws if the snap distance exceeds step/2.
  Index snap(double energy_ev) const;

  friend bool operator==(const EnergyGrid&, const EnergyGrid&) = default;
};

enum class PeakShape
{
  Gaussian,
  Lorentzian
};

struct Peak
{
  double center_ev = 0;
  double width_ev = 1; ///< full width at half maximum
  double amplitude = 1; ///< height at the center
  PeakShape shape = PeakShape::Gaussian;

  double operator()(double energy_ev) const;
};

struct DOSModel
{
  std::vector<Peak> peaks;
  double background = 0;
  double scale_const = 1;

  void validate() const;
  double density(double energy_ev) const;
};

enum class IntensityDistribution
{
  Uniform,
  TruncatedGaussian
};

/// Excitation intensity drawn on [mean (1 - h), mean (1 + h)], h = half_width_frac.
struct IntensityModel
{
  double mean = 1.0;
  double half_width_frac = 0.9;
  IntensityDistribution distribution = IntensityDistribution::Uniform;
  /// TruncatedGaussian only: std of the untruncated Gaussian, as a fraction of the half width.
  double gaussian_sigma_frac = 0.5;

  void validate() const;
  double lower() const { return mean * (1.0 - half_width_frac); }
  double upper() const { return mean * (1.0 + half_width_frac); }
};

/// Exact variance of Delta = I - mean for the configured distribution.
double implied_dispersion(const IntensityModel& model);

enum class NoiseMode
{
  Deterministic,
  PerScanJitter
};

/// Smooth bump on a pedestal spanning the noise window:
/// amplitude * (p + (1 - p) * (1 - cos(2 pi x)) / 2), x in [0, 1] across the window.
struct RaisedCosineShape
{
  double amplitude = 0.1;
  double pedestal_frac = 0.8;
};

/// Piecewise-linear table (eV, counts), clamped to the end values inside the window.
struct TabulatedShape
{
  std::vector<std::pair<double, double>> points;
};

/// Bounded systematic noise, zero outside [lo_ev, hi_ev].
struct NoiseProfile
{
  bool enabled = true;
  double lo_ev = 28.8;
  double hi_ev = 35.9;
  std::variant<RaisedCosineShape, TabulatedShape> shape = RaisedCosineShape{};
  NoiseMode mode = NoiseMode::Deterministic;
  /// PerScanJitter: N_n = N * (1 + a u_n), u_n ~ U[-1, 1], a in [0, 1].
  double jitter_amplitude = 0.0;

  void validate() const;
  bool contains(double energy_ev) const;
  double operator()(double energy_ev) const;
  /// Upper bound of N_n over all energies and scans.
  double bound() const;
};

struct DisturbanceModel
{
  double sigma_w = 0.01;

  void validate() const;
};

Eigen::VectorXd eval_theta_bar(const DOSModel& dos, const EnergyGrid& grid);
Eigen::VectorXd eval_noise(const NoiseProfile& noise, const EnergyGrid& grid);
/// 1 for bins inside the noise window, 0 elsewhere (independent of `enabled`).
std::vector<bool> noise_window_mask(const NoiseProfile& noise, const EnergyGrid& grid);

/// Deterministic random source for one scan. The engine is std::mt19937_64
/// seeded by std::seed_seq{seed_lo, seed_hi, index_lo, index_hi, stream}, so
/// every (seed, scan index, stream) triple is an independent, reproducible
/// sequence. Uniforms take the top 53 bits; normals use Box-Muller.
class ScanRng
{
public:
  enum Stream : std::uint32_t
  {
    Intensity = 1,
    Disturbance = 2,
    Jitter = 3,
    Calibration = 4
  };

  ScanRng(std::uint64_t seed, std::uint64_t scan_index, Stream stream);

  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  double normal();

private:
  std::mt19937_64 engine_;
};

double sample_intensity(const IntensityModel& model, ScanRng& rng);

struct SimulatedScan
{
  Scan record;
  std::size_t clamp_count = 0; ///< bins where theta_bar + w_n < 0 was clamped to 0
};

/// Simulator with theta_bar and the noise profile evaluated once. Stateless
/// per call: scan(seed, index) depends only on its arguments.
class Simulator
{
public:
  Simulator(const DOSModel& dos, const EnergyGrid& grid, const IntensityModel& intensity,
            const NoiseProfile& noise, const DisturbanceModel& disturbance);

  SimulatedScan scan(std::uint64_t seed, std::uint64_t scan_index) const;

  const Eigen::VectorXd& theta_bar() const { return theta_bar_; }
  const Eigen::VectorXd& noise() const { return noise_; }
  const EnergyGrid& grid() const { return grid_; }

private:
  EnergyGrid grid_;
  IntensityModel intensity_;
  NoiseProfile noise_model_;
  DisturbanceModel disturbance_;
  Eigen::VectorXd theta_bar_;
  Eigen::VectorXd noise_;
};

SimulatedScan sample_scan(const DOSModel& dos, const EnergyGrid& grid,
                          const IntensityModel& intensity, const NoiseProfile& noise,
                          const DisturbanceModel& disturbance, std::uint64_t seed,
                          std::uint64_t scan_index);

/// Stand-in for the W(110) valence band on 25.8-37.8 eV: two Gaussian d-band
/// features on a flat background.
DOSModel default_dos_model();

} // namespace spsa
