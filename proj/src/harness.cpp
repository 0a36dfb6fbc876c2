#include "spsa/harness.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spsa {

// --- config -----------------------------------------------------------------------

void ExperimentConfig::validate() const
{
  if (n_scans < 1)
    throw ConfigError("experiment.n_scans", "must be >= 1");
  grid.validate();
  dos.validate();
  intensity.validate();
  noise.validate();
  disturbance.validate();

  const double tol = 1e-9 * std::max(1.0, std::abs(grid.stop_ev));
  if (noise.lo_ev < grid.start_ev - tol || noise.lo_ev > grid.stop_ev + tol)
    throw ConfigError("noise.lo_ev", "noise window lies outside the energy grid");
  if (noise.hi_ev > grid.stop_ev + tol)
    throw ConfigError("noise.hi_ev", "noise window lies outside the energy grid");

  if (control_points.empty() && control_point_count < 1)
    throw ConfigError("experiment.control_point_count", "must be >= 1");
  if (const auto* v = std::get_if<Eigen::VectorXd>(&initial_guess))
  {
    if (v->size() != grid.size())
      throw ConfigError("experiment.initial_guess", "vector guess must have one entry per bin (" +
                                                        std::to_string(grid.size()) + ")");
  }
  if (stabilization.window < 2)
    throw ConfigError("stabilization.window", "must be >= 2");
  if (!(stabilization.rel_tol > 0))
    throw ConfigError("stabilization.rel_tol", "must be > 0");
  if (variance_policy == VariancePolicy::RunningEmpirical && calibration_samples < 2)
    throw ConfigError("experiment.calibration_samples", "running policy needs >= 2 samples");
  (void)control_bins();
}

std::vector<Index> ExperimentConfig::control_bins() const
{
  std::vector<Index> bins;
  if (!control_points.empty())
  {
    for (double e : control_points)
      bins.push_back(grid.snap(e));
    return bins;
  }
  const double span = grid.stop_ev - grid.start_ev;
  for (std::size_t i = 0; i < control_point_count; ++i)
  {
    const double frac = control_point_count == 1
                            ? 0.5
                            : static_cast<double>(i) / static_cast<double>(control_point_count - 1);
    bins.push_back(grid.snap(grid.start_ev + frac * span));
  }
  return bins;
}

ExperimentConfig reference_config()
{
  ExperimentConfig config;
  config.seed = 42;
  return config;
}

// --- metrics -------------------------------------------------------------------------

EstimatorMetrics compute_metrics(const Eigen::VectorXd& estimate, const Eigen::VectorXd& reference,
                                 const std::vector<bool>& in_window)
{
  double sum_in = 0, sum_out = 0;
  Index n_in = 0, n_out = 0;
  EstimatorMetrics m;
  for (Index k = 0; k < estimate.size(); ++k)
  {
    const double err = estimate[k] - reference[k];
    m.max_abs_error = std::max(m.max_abs_error, std::abs(err));
    if (in_window[static_cast<std::size_t>(k)])
    {
      sum_in += err * err;
      ++n_in;
    }
    else
    {
      sum_out += err * err;
      ++n_out;
    }
  }
  m.rmse_in_window = n_in ? std::sqrt(sum_in / static_cast<double>(n_in)) : std::nan("");
  m.rmse_out_window = n_out ? std::sqrt(sum_out / static_cast<double>(n_out)) : std::nan("");
  return m;
}

// --- stabilization ---------------------------------------------------------------

double trailing_relative_change(const ConvergenceTrace<double>& trace, Index n, Index window)
{
  if (window < 2)
    throw Error("stabilization window must be >= 2");
  if (n < window || n > trace.length())
    throw Error("iteration " + std::to_string(n) + " has no trailing window of " +
                std::to_string(window) + " in a trace of length " + std::to_string(trace.length()));
  double worst = 0;
  for (Index c = 0; c < trace.points(); ++c)
  {
    const double current = trace.values(n - 1, c);
    double dev = 0;
    for (Index k = n - window; k < n; ++k)
      dev = std::max(dev, std::abs(trace.values(k, c) - current));
    if (dev == 0)
      continue;
    worst = std::max(worst, current == 0 ? HUGE_VAL : dev / std::abs(current));
  }
  return worst;
}

std::optional<Index> stabilization_check(const ConvergenceTrace<double>& trace, double rel_tol,
                                         Index window)
{
  if (window < 2)
    throw Error("stabilization window must be >= 2");
  if (trace.length() < window)
    throw Error("trace of length " + std::to_string(trace.length()) + " is shorter than window " +
                std::to_string(window));
  for (Index n = window; n <= trace.length(); ++n)
    if (trailing_relative_change(trace, n, window) < rel_tol)
      return n;
  return std::nullopt;
}

// --- experiment -------------------------------------------------------------------

IntensityStats<double> experiment_stats(const ExperimentConfig& config)
{
  if (config.variance_policy == VariancePolicy::FixedKnown)
    return IntensityStats<double>::fixed(config.intensity.mean, implied_dispersion(config.intensity));

  auto stats = IntensityStats<double>::running();
  const std::uint64_t seed = config.seed.value_or(0);
  for (std::size_t i = 1; i <= config.calibration_samples; ++i)
  {
    ScanRng rng(seed, i, ScanRng::Calibration);
    stats = update_running_stats(stats, sample_intensity(config.intensity, rng));
  }
  return stats;
}

std::vector<Scan> simulate_scans(const ExperimentConfig& config, std::size_t* clamp_count)
{
  config.validate();
  if (!config.seed)
    throw ConfigError("experiment.seed", "no seed given (set it in the config or pass --seed)");

  const Simulator sim(config.dos, config.grid, config.intensity, config.noise, config.disturbance);
  std::vector<Scan> scans;
  scans.reserve(config.n_scans);
  std::size_t clamps = 0;
  for (std::size_t i = 1; i <= config.n_scans; ++i)
  {
    auto s = sim.scan(*config.seed, i);
    clamps += s.clamp_count;
    scans.push_back(std::move(s.record));
  }
  if (clamp_count)
    *clamp_count = clamps;
  return scans;
}

ExperimentResult analyze_scans(const std::vector<Scan>& scans, const IntensityStats<double>& stats,
                               const ExperimentConfig& config)
{
  config.validate();
  if (!scans.empty() && scans.front().photocurrent.size() != config.grid.size())
    throw Error("scans have " + std::to_string(scans.front().photocurrent.size()) +
                " bins but the configured grid has " + std::to_string(config.grid.size()));

  ExperimentResult result;
  result.energies = config.grid.energies();
  result.theta_bar = eval_theta_bar(config.dos, config.grid);
  result.noise_profile = eval_noise(config.noise, config.grid);
  const auto mask = noise_window_mask(config.noise, config.grid);

  EstimationConfig<double> est;
  est.stats = stats;
  est.initial_guess = config.initial_guess;
  est.control_bins = config.control_bins();
  auto run = run_estimation(scans, est);

  result.trace = std::move(run.trace);
  for (Index bin : est.control_bins)
    result.control_energies.push_back(config.grid.energy(bin));
  result.spsa = run.state.theta_hat;
  result.naive_mean = naive_mean_baseline(scans, stats);
  result.example_scan = scans.front();

  auto& report = result.report;
  report.n_scans = scans.size();
  report.bins_in_window = std::count(mask.begin(), mask.end(), true);
  report.bins_out_window = static_cast<Index>(mask.size()) - report.bins_in_window;
  report.mean_intensity = stats.mean_intensity();
  report.dispersion = stats.dispersion();
  report.stabilization = config.stabilization;
  report.spsa = compute_metrics(result.spsa, result.theta_bar, mask);
  report.naive_mean = compute_metrics(result.naive_mean, result.theta_bar, mask);
  try
  {
    result.rls = randomized_least_squares(scans, stats);
    report.rls = compute_metrics(*result.rls, result.theta_bar, mask);
  }
  catch (const EstimatorError&)
  {
    report.rls_degenerate = 1;
  }
  if (result.trace.length() >= config.stabilization.window)
    report.stabilization_iteration = stabilization_check(
        result.trace, config.stabilization.rel_tol, config.stabilization.window);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config)
{
  std::size_t clamps = 0;
  const auto scans = simulate_scans(config, &clamps);
  auto result = analyze_scans(scans, experiment_stats(config), config);
  result.report.clamp_count = clamps;
  return result;
}

// --- ingestion ----------------------------------------------------------------------

IngestedScans ingest_scan_file(ScanFile file)
{
  if (file.scans.empty())
    throw FormatError("scan file contains no scans");

  IngestedScans out;
  auto empirical = IntensityStats<double>::running();
  for (const auto& s : file.scans)
    empirical = update_running_stats(empirical, s.intensity);

  const double mean = file.mean_intensity.value_or(empirical.mean_intensity());
  const double dispersion = file.dispersion.value_or(empirical.dispersion());
  if (!(dispersion > 0))
    throw EstimatorError("scan intensities have zero dispersion; the estimator cannot step");
  out.stats = IntensityStats<double>::fixed(mean, dispersion);

  if (file.mean_intensity)
  {
    const double gap = std::abs(*file.mean_intensity - empirical.mean_intensity()) / *file.mean_intensity;
    if (gap > kDeclaredMeanTolerance)
    {
      std::ostringstream os;
      os << "declared mean intensity " << *file.mean_intensity << " differs from the empirical mean "
         << empirical.mean_intensity() << " by " << 100.0 * gap << "%";
      out.warnings.push_back(os.str());
    }
  }
  out.file = std::move(file);
  return out;
}

IntensityStats<double> estimation_stats(const IngestedScans& ingested, const ExperimentConfig& config)
{
  if (config.variance_policy == VariancePolicy::FixedKnown)
    return ingested.stats;
  auto stats = IntensityStats<double>::running();
  const auto& scans = ingested.file.scans;
  const std::size_t n = std::min(config.calibration_samples, scans.size());
  for (std::size_t i = 0; i < n; ++i)
    stats = update_running_stats(stats, scans[i].intensity);
  return stats;
}

IngestedScans ingest_external_scans(const std::filesystem::path& path)
{
  return ingest_scan_file(read_scans(path));
}

} // namespace spsa
