#pragma once

// Randomized-perturbation stochastic approximation for the linear measurement
// model j_n = I_n * theta_n + N_n, where the excitation intensity I_n is drawn
// at random around a known mean and N_n is a bounded systematic noise with
// unknown (possibly non-zero) mean.
//
// Per energy bin the estimate follows
//
//   theta_n = theta_{n-1} - Delta_n / (sigma^2 * n) * (I_n * theta_{n-1} - j_n),
//   Delta_n = I_n - mean(I),  theta_0 = 0 by default,
//
// Multiplying the residual by the zero-mean perturbation Delta_n decorrelates
// it from N_n, which is uncorrelated with I_n. Bins never couple, so every
// update is a single vector expression.

#include "spsa/errors.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <variant>
#include <vector>

namespace spsa {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

enum class VariancePolicy
{
  FixedKnown,      ///< mean and dispersion known a priori
  RunningEmpirical ///< streaming mean/variance of the intensities seen so far
};

/// Mean intensity and dispersion of Delta_n = I_n - mean(I).
///
/// FixedKnown statistics are validated on construction (both strictly
/// positive). RunningEmpirical statistics accumulate samples through
/// update_running_stats() and report a positive dispersion only after two
/// distinct samples. The dispersion is the population variance (divide by n).
template <typename Scalar>
class IntensityStats
{
public:
  static IntensityStats fixed(Scalar mean_intensity, Scalar dispersion)
  {
    if (!(std::isfinite(mean_intensity) && mean_intensity > 0))
      throw EstimatorError("mean intensity must be finite and > 0");
    if (!(std::isfinite(dispersion) && dispersion > 0))
      throw EstimatorError("dispersion must be finite and > 0");
    IntensityStats s;
    s.policy_ = VariancePolicy::FixedKnown;
    s.mean_ = mean_intensity;
    s.dispersion_ = dispersion;
    return s;
  }

  /// Empty running statistics; not ready until primed with samples.
  static IntensityStats running()
  {
    IntensityStats s;
    s.policy_ = VariancePolicy::RunningEmpirical;
    return s;
  }

  Scalar mean_intensity() const noexcept { return mean_; }
  Scalar dispersion() const noexcept { return dispersion_; }
  VariancePolicy policy() const noexcept { return policy_; }
  std::size_t sample_count() const noexcept { return count_; }

  /// True when the statistics can drive an estimator step.
  bool ready() const noexcept { return mean_ > 0 && dispersion_ > 0; }

  template <typename S>
  friend IntensityStats<S> update_running_stats(const IntensityStats<S>& stats, S intensity);

  friend bool operator==(const IntensityStats&, const IntensityStats&) = default;

private:
  IntensityStats() = default;

  VariancePolicy policy_ = VariancePolicy::FixedKnown;
  Scalar mean_ = 0;
  Scalar dispersion_ = 0;
  // Welford accumulators, RunningEmpirical only.
  std::size_t count_ = 0;
  Scalar m2_ = 0;
};

/// Streaming (Welford) mean/variance update for RunningEmpirical statistics.
template <typename Scalar>
IntensityStats<Scalar> update_running_stats(const IntensityStats<Scalar>& stats, Scalar intensity)
{
  if (stats.policy_ != VariancePolicy::RunningEmpirical)
    throw EstimatorError("update_running_stats requires RunningEmpirical statistics");
  if (!(std::isfinite(intensity) && intensity > 0))
    throw EstimatorError("intensity must be finite and > 0");

  IntensityStats<Scalar> next = stats;
  next.count_ += 1;
  const Scalar delta = intensity - next.mean_;
  next.mean_ += delta / static_cast<Scalar>(next.count_);
  next.m2_ += delta * (intensity - next.mean_);
  next.dispersion_ = next.count_ >= 2 ? next.m2_ / static_cast<Scalar>(next.count_) : Scalar(0);
  return next;
}

/// One single-scan observation: intensity I_n and photocurrent j_n per bin.
template <typename Scalar>
struct ScanRecord
{
  Scalar intensity = 0;
  Vector<Scalar> photocurrent;

  friend bool operator==(const ScanRecord& a, const ScanRecord& b)
  {
    return a.intensity == b.intensity && a.photocurrent.size() == b.photocurrent.size() &&
           a.photocurrent == b.photocurrent;
  }
};

template <typename Scalar>
struct EstimatorState
{
  Vector<Scalar> theta_hat;
  std::size_t iteration = 0;
  IntensityStats<Scalar> stats = IntensityStats<Scalar>::running();

  Index grid_len() const noexcept { return theta_hat.size(); }
};

/// History of theta_hat at selected bins. Row r holds iteration r + 1.
template <typename Scalar>
struct ConvergenceTrace
{
  std::vector<Index> bins;
  Matrix<Scalar> values;

  Index length() const noexcept { return values.rows(); }
  Index points() const noexcept { return values.cols(); }
};

template <typename Scalar>
using InitialGuess = std::variant<Scalar, Vector<Scalar>>;

template <typename Scalar>
struct EstimationConfig
{
  IntensityStats<Scalar> stats = IntensityStats<Scalar>::running();
  InitialGuess<Scalar> initial_guess = Scalar(0);
  std::vector<Index> control_bins;
};

template <typename Scalar>
struct EstimationResult
{
  EstimatorState<Scalar> state;
  ConvergenceTrace<Scalar> trace;
};

enum class RlsCentering
{
  SampleMean, ///< Delta_n relative to the batch mean of the intensities
  KnownMean   ///< Delta_n relative to stats.mean_intensity()
};

namespace detail {

template <typename Scalar>
void check_scan(const ScanRecord<Scalar>& scan, Index grid_len, std::size_t index)
{
  const auto where = [&] { return "scan " + std::to_string(index) + ": "; };
  if (!(std::isfinite(scan.intensity) && scan.intensity > 0))
    throw EstimatorError(where() + "intensity must be finite and > 0");
  if (scan.photocurrent.size() != grid_len)
    throw EstimatorError(where() + "photocurrent has " + std::to_string(scan.photocurrent.size()) +
                         " bins, expected " + std::to_string(grid_len));
  for (Index k = 0; k < grid_len; ++k)
  {
    const Scalar v = scan.photocurrent[k];
    if (!std::isfinite(v))
      throw EstimatorError(where() + "non-finite photocurrent at bin " + std::to_string(k));
    if (v < 0)
      throw EstimatorError(where() + "negative photocurrent at bin " + std::to_string(k));
  }
}

template <typename Scalar>
Index check_scans(const std::vector<ScanRecord<Scalar>>& scans)
{
  if (scans.empty())
    throw EstimatorError("empty scan sequence");
  const Index grid_len = scans.front().photocurrent.size();
  if (grid_len < 1)
    throw EstimatorError("scan 1: empty photocurrent");
  for (std::size_t i = 0; i < scans.size(); ++i)
    check_scan(scans[i], grid_len, i + 1);
  return grid_len;
}

} // namespace detail

template <typename Scalar>
EstimatorState<Scalar> init_state(Index grid_len, const IntensityStats<Scalar>& stats,
                                  const InitialGuess<Scalar>& initial_guess = Scalar(0))
{
  if (grid_len < 1)
    throw EstimatorError("grid length must be >= 1");

  EstimatorState<Scalar> state;
  state.stats = stats;
  state.iteration = 0;
  if (const auto* guess = std::get_if<Vector<Scalar>>(&initial_guess))
  {
    if (guess->size() != grid_len)
      throw EstimatorError("initial guess has " + std::to_string(guess->size()) +
                           " entries, expected " + std::to_string(grid_len));
    state.theta_hat = *guess;
  }
  else
  {
    state.theta_hat = Vector<Scalar>::Constant(grid_len, std::get<Scalar>(initial_guess));
  }
  if (!state.theta_hat.allFinite())
    throw EstimatorError("initial guess must be finite");
  return state;
}

/// In-place form of spsa_step(); observationally identical.
template <typename Scalar>
void spsa_step_inplace(EstimatorState<Scalar>& state, const ScanRecord<Scalar>& scan)
{
  detail::check_scan(scan, state.grid_len(), state.iteration + 1);
  const auto& stats = state.stats;
  if (!(stats.dispersion() > 0))
    throw EstimatorError("non-positive dispersion; refusing to step (iteration " +
                         std::to_string(state.iteration + 1) + ")");
  if (!(stats.mean_intensity() > 0))
    throw EstimatorError("mean intensity not available; refusing to step");

  const Scalar n = static_cast<Scalar>(state.iteration + 1);
  const Scalar delta = scan.intensity - stats.mean_intensity();
  const Scalar gain = delta / (stats.dispersion() * n);
  state.theta_hat -= gain * (scan.intensity * state.theta_hat - scan.photocurrent);
  state.iteration += 1;

  // Running statistics describe the intensities seen before the next scan.
  if (stats.policy() == VariancePolicy::RunningEmpirical)
    state.stats = update_running_stats(stats, scan.intensity);
}

template <typename Scalar>
EstimatorState<Scalar> spsa_step(const EstimatorState<Scalar>& state, const ScanRecord<Scalar>& scan)
{
  EstimatorState<Scalar> next = state;
  spsa_step_inplace(next, scan);
  return next;
}

/// Folds spsa_step over the scans in order and records theta_hat at the
/// configured control bins after every step.
template <typename Scalar>
EstimationResult<Scalar> run_estimation(const std::vector<ScanRecord<Scalar>>& scans,
                                        const EstimationConfig<Scalar>& config)
{
  const Index grid_len = detail::check_scans(scans);
  for (Index bin : config.control_bins)
    if (bin < 0 || bin >= grid_len)
      throw EstimatorError("control bin " + std::to_string(bin) + " outside grid of " +
                           std::to_string(grid_len) + " bins");

  EstimationResult<Scalar> result;
  result.state = init_state(grid_len, config.stats, config.initial_guess);
  result.trace.bins = config.control_bins;
  result.trace.values.resize(static_cast<Index>(scans.size()),
                             static_cast<Index>(config.control_bins.size()));

  for (std::size_t i = 0; i < scans.size(); ++i)
  {
    spsa_step_inplace(result.state, scans[i]);
    for (std::size_t c = 0; c < config.control_bins.size(); ++c)
      result.trace.values(static_cast<Index>(i), static_cast<Index>(c)) =
          result.state.theta_hat[config.control_bins[c]];
  }
  return result;
}

/// Batch correlation-ratio estimate sum(Delta_n j_n) / sum(Delta_n I_n) per bin.
///
/// With SampleMean centering sum(Delta_n) is zero, so any noise that is
/// constant across scans cancels exactly.
template <typename Scalar>
Vector<Scalar> randomized_least_squares(const std::vector<ScanRecord<Scalar>>& scans,
                                        const IntensityStats<Scalar>& stats,
                                        RlsCentering centering = RlsCentering::SampleMean)
{
  const Index grid_len = detail::check_scans(scans);

  Scalar center = 0;
  if (centering == RlsCentering::SampleMean)
  {
    for (const auto& s : scans)
      center += s.intensity;
    center /= static_cast<Scalar>(scans.size());
  }
  else
  {
    if (!(stats.mean_intensity() > 0))
      throw EstimatorError("known-mean centering requires a positive mean intensity");
    center = stats.mean_intensity();
  }

  Vector<Scalar> numerator = Vector<Scalar>::Zero(grid_len);
  Scalar denominator = 0;
  Scalar scale = 0;
  for (const auto& s : scans)
  {
    const Scalar delta = s.intensity - center;
    numerator += delta * s.photocurrent;
    denominator += delta * s.intensity;
    scale += s.intensity * s.intensity;
  }

  if (std::abs(denominator) <= 64 * std::numeric_limits<Scalar>::epsilon() * scale)
    throw EstimatorError("vanishing denominator: intensities carry no perturbation");
  return numerator / denominator;
}

/// mean(j_n) / mean(I) per bin. Biased by N / mean(I) under systematic noise.
template <typename Scalar>
Vector<Scalar> naive_mean_baseline(const std::vector<ScanRecord<Scalar>>& scans,
                                   const IntensityStats<Scalar>& stats)
{
  const Index grid_len = detail::check_scans(scans);
  if (!(stats.mean_intensity() > 0))
    throw EstimatorError("naive mean requires a positive mean intensity");

  Vector<Scalar> sum = Vector<Scalar>::Zero(grid_len);
  for (const auto& s : scans)
    sum += s.photocurrent;
  return sum / (static_cast<Scalar>(scans.size()) * stats.mean_intensity());
}

} // namespace spsa
