#pragma once

#include "spsa/estimator.hpp"
#include "spsa/io.hpp"
#include "spsa/spectrum_model.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spsa {

struct StabilizationSettings
{
  double rel_tol = 0.05;
  Index window = 5;

  friend bool operator==(const StabilizationSettings&, const StabilizationSettings&) = default;
};

struct ExperimentConfig
{
  std::size_t n_scans = 50;
  EnergyGrid grid;
  DOSModel dos = default_dos_model();
  IntensityModel intensity;
  NoiseProfile noise;
  DisturbanceModel disturbance;
  /// Control-point energies (eV). Empty: control_point_count evenly spaced over the grid.
  std::vector<double> control_points;
  std::size_t control_point_count = 12;
  std::optional<std::uint64_t> seed;
  InitialGuess<double> initial_guess = 0.0;
  VariancePolicy variance_policy = VariancePolicy::FixedKnown;
  /// RunningEmpirical only: intensity samples used to prime the running statistics.
  std::size_t calibration_samples = 10;
  StabilizationSettings stabilization;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  std::vector<Index> control_bins() const;
};

ExperimentConfig reference_config();

struct EstimatorMetrics
{
  double rmse_in_window = 0;
  double rmse_out_window = 0;
  double max_abs_error = 0;

  friend bool operator==(const EstimatorMetrics&, const EstimatorMetrics&) = default;
};

struct ComparisonReport
{
  std::size_t n_scans = 0;
  Index bins_in_window = 0;
  Index bins_out_window = 0;
  EstimatorMetrics spsa;
  std::optional<EstimatorMetrics> rls; ///< empty when the intensity draw is degenerate
  EstimatorMetrics naive_mean;
  std::optional<Index> stabilization_iteration;
  StabilizationSettings stabilization;
  std::size_t clamp_count = 0;
  std::size_t rls_degenerate = 0;
  double mean_intensity = 0;
  double dispersion = 0;
  std::vector<std::string> warnings;

  friend bool operator==(const ComparisonReport&, const ComparisonReport&) = default;
};

struct ExperimentResult
{
  ComparisonReport report;
  ConvergenceTrace<double> trace;
  std::vector<double> control_energies;
  Eigen::VectorXd energies;
  Eigen::VectorXd theta_bar;
  Eigen::VectorXd noise_profile;
  Eigen::VectorXd spsa;
  std::optional<Eigen::VectorXd> rls;
  Eigen::VectorXd naive_mean;
  Scan example_scan;
};

/// Metrics of `estimate` against `reference`, split by the window mask.
EstimatorMetrics compute_metrics(const Eigen::VectorXd& estimate, const Eigen::VectorXd& reference,
                                 const std::vector<bool>& in_window);

/// Runs all estimators on one scan sequence and compares them with theta_bar
/// from the configured DOS model.
ExperimentResult analyze_scans(const std::vector<Scan>& scans, const IntensityStats<double>& stats,
                               const ExperimentConfig& config);

/// Simulates config.n_scans scans (scan indices 1..n under config.seed) and
/// analyzes them. Deterministic given the config.
ExperimentResult run_experiment(const ExperimentConfig& config);

std::vector<Scan> simulate_scans(const ExperimentConfig& config, std::size_t* clamp_count = nullptr);

/// Statistics for the configured policy: FixedKnown from the intensity model,
/// RunningEmpirical primed with calibration draws.
IntensityStats<double> experiment_stats(const ExperimentConfig& config);

/// Largest relative deviation, over control points and the `window` trailing
/// iterations ending at `n` (1-based), of theta_k from theta_n.
double trailing_relative_change(const ConvergenceTrace<double>& trace, Index n, Index window);

/// Smallest n at which trailing_relative_change(trace, n, window) < rel_tol.
std::optional<Index> stabilization_check(const ConvergenceTrace<double>& trace, double rel_tol,
                                         Index window);

struct IngestedScans
{
  ScanFile file;
  IntensityStats<double> stats = IntensityStats<double>::running();
  std::vector<std::string> warnings;
};

/// Relative gap between declared and empirical mean intensity that triggers a warning.
inline constexpr double kDeclaredMeanTolerance = 0.20;

/// Reads and validates a scan file. Statistics come from the header when
/// declared, otherwise from the streaming mean/variance of the intensities.
IngestedScans ingest_external_scans(const std::filesystem::path& path);
IngestedScans ingest_scan_file(ScanFile file);

/// Statistics for estimating on ingested scans. FixedKnown uses the ingested
/// statistics; RunningEmpirical primes running statistics with the first
/// config.calibration_samples intensities of the file.
IntensityStats<double> estimation_stats(const IngestedScans& ingested, const ExperimentConfig& config);

} // namespace spsa
