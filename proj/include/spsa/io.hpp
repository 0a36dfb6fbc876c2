#pragma once

// Plain-text comma-separated formats. Every file starts with a versioned
// comment line "# spsa-<kind> v<N> spsafilter/<version>". Numbers are written
// in shortest round-trip decimal form, so reading a file back reproduces every
// double bit for bit.
//
// Scan file (kind "scans"):
//   # spsa-scans v1 spsafilter/0.1.0
//   grid,<start_ev>,<stop_ev>,<step_ev>
//   mean_intensity,<value>        (optional)
//   dispersion,<value>            (optional)
//   scan,intensity,counts
//   1,<I_1>,<j_1[0]>,...,<j_1[K-1]>
//   ...
//
// Trace file (kind "trace"):
//   # spsa-trace v1 spsafilter/0.1.0
//   iteration,E25.800,E26.891,...   (control-point energies, 3 decimals)
//   1,<theta_1[cp0]>,...
//
// Writers replace the target atomically, so a failed command leaves no
// partial output. Concurrent writes to the same path are undefined.

#include "spsa/estimator.hpp"
#include "spsa/spectrum_model.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spsa {

inline constexpr int kScanFormatVersion = 1;
inline constexpr int kTraceFormatVersion = 1;
inline constexpr int kOverlayFormatVersion = 1;
inline constexpr int kEstimatesFormatVersion = 1;

/// "spsafilter/<version>", stamped into every output header.
std::string version_stamp();

struct ScanFile
{
  EnergyGrid grid;
  std::optional<double> mean_intensity;
  std::optional<double> dispersion;
  std::vector<Scan> scans;

  friend bool operator==(const ScanFile&, const ScanFile&) = default;
};

struct TraceFile
{
  std::vector<double> energies; ///< rounded to 3 decimals on disk
  Matrix<double> values;        ///< row r is iteration r + 1
};

std::string format_number(double value);
/// Parses the whole field as a double; throws FormatError on trailing junk.
double parse_number(std::string_view field, std::size_t line = 0);

std::string format_scans(const ScanFile& file);
ScanFile parse_scans(std::string_view text);
void write_scans(const std::filesystem::path& path, const ScanFile& file);
ScanFile read_scans(const std::filesystem::path& path);

std::string format_trace(const ConvergenceTrace<double>& trace, const std::vector<double>& energies);
TraceFile parse_trace(std::string_view text);
void write_trace(const std::filesystem::path& path, const ConvergenceTrace<double>& trace,
                 const std::vector<double>& energies);
TraceFile read_trace(const std::filesystem::path& path);

struct ExperimentResult;
struct ComparisonReport;

enum class PlotKind
{
  SpectraOverlay,  ///< energy, reference, noisy scan, SPSA estimate, noise profile
  ConvergenceTrace ///< trace file format
};

std::string format_plot_data(const ExperimentResult& result, PlotKind kind);
void emit_plot_data(const ExperimentResult& result, PlotKind kind, const std::filesystem::path& path);

/// energy, theta_bar, spsa, rls (nan when degenerate), naive_mean.
std::string format_estimates(const ExperimentResult& result);

std::string format_report_text(const ComparisonReport& report);
std::string format_report_json(const ComparisonReport& report);

std::string read_text_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_text_file(const std::filesystem::path& path, std::string_view content);

} // namespace spsa
