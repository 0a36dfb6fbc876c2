#include "spsa/io.hpp"

#include "spsa/harness.hpp"

#include <json.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <system_error>

namespace spsa {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep)
{
  std::vector<std::string_view> out;
  std::size_t begin = 0;
  for (;;)
  {
    const std::size_t end = line.find(sep, begin);
    if (end == std::string_view::npos)
    {
      out.push_back(line.substr(begin));
      return out;
    }
    out.push_back(line.substr(begin, end - begin));
    begin = end + 1;
  }
}

/// Splits text into lines, dropping a trailing '\r' and the final empty line.
std::vector<std::string_view> lines_of(std::string_view text)
{
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty())
    lines.pop_back();
  for (auto& l : lines)
    if (!l.empty() && l.back() == '\r')
      l.remove_suffix(1);
  return lines;
}

std::string header_line(std::string_view kind, int version)
{
  return "# spsa-" + std::string(kind) + " v" + std::to_string(version) + " " + version_stamp() + "\n";
}

void check_header(std::string_view line, std::string_view kind, int expected)
{
  const std::string prefix = "# spsa-" + std::string(kind) + " v";
  if (line.substr(0, prefix.size()) != prefix)
    throw FormatError("not a spsa-" + std::string(kind) + " file", 1);
  std::string_view rest = line.substr(prefix.size());
  int version = 0;
  const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), version);
  if (ec != std::errc{} || (ptr != rest.data() + rest.size() && *ptr != ' '))
    throw FormatError("malformed format version", 1);
  if (version != expected)
    throw FormatError("unsupported " + std::string(kind) + " format version " +
                          std::to_string(version) + " (expected " + std::to_string(expected) + ")",
                      1);
}

std::string energy_label(double e)
{
  std::array<char, 64> buf{};
  std::snprintf(buf.data(), buf.size(), "E%.3f", e);
  return buf.data();
}

} // namespace

std::string version_stamp() { return std::string("spsafilter/") + SPSAFILTER_VERSION; }

std::string format_number(double value)
{
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{})
    throw Error("number formatting failed");
  return std::string(buf.data(), ptr);
}

double parse_number(std::string_view field, std::size_t line)
{
  double value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size())
    throw FormatError("invalid number '" + std::string(field) + "'", line);
  return value;
}

// --- scans ----------------------------------------------------------------------

std::string format_scans(const ScanFile& file)
{
  std::string out = header_line("scans", kScanFormatVersion);
  out += "grid," + format_number(file.grid.start_ev) + "," + format_number(file.grid.stop_ev) + "," +
         format_number(file.grid.step_ev) + "\n";
  if (file.mean_intensity)
    out += "mean_intensity," + format_number(*file.mean_intensity) + "\n";
  if (file.dispersion)
    out += "dispersion," + format_number(*file.dispersion) + "\n";
  out += "scan,intensity,counts\n";
  for (std::size_t i = 0; i < file.scans.size(); ++i)
  {
    const Scan& s = file.scans[i];
    out += std::to_string(i + 1);
    out += ',';
    out += format_number(s.intensity);
    for (Index k = 0; k < s.photocurrent.size(); ++k)
    {
      out += ',';
      out += format_number(s.photocurrent[k]);
    }
    out += '\n';
  }
  return out;
}

ScanFile parse_scans(std::string_view text)
{
  const auto lines = lines_of(text);
  if (lines.empty())
    throw FormatError("empty scan file", 1);
  check_header(lines[0], "scans", kScanFormatVersion);

  ScanFile file;
  bool have_grid = false;
  std::size_t i = 1;
  for (; i < lines.size(); ++i)
  {
    const std::size_t lineno = i + 1;
    const auto fields = split(lines[i], ',');
    const std::string_view key = fields[0];
    if (key == "scan")
    {
      if (fields.size() != 3 || fields[1] != "intensity" || fields[2] != "counts")
        throw FormatError("malformed column header", lineno);
      break;
    }
    if (key == "grid")
    {
      if (fields.size() != 4)
        throw FormatError("grid needs start,stop,step", lineno);
      file.grid = {parse_number(fields[1], lineno), parse_number(fields[2], lineno),
                   parse_number(fields[3], lineno)};
      try
      {
        file.grid.validate();
      }
      catch (const ConfigError& e)
      {
        throw FormatError(std::string("invalid grid: ") + e.what(), lineno);
      }
      have_grid = true;
    }
    else if (key == "mean_intensity" || key == "dispersion")
    {
      if (fields.size() != 2)
        throw FormatError(std::string(key) + " needs one value", lineno);
      const double v = parse_number(fields[1], lineno);
      if (!(std::isfinite(v) && v > 0))
        throw FormatError(std::string(key) + " must be > 0", lineno);
      (key == "mean_intensity" ? file.mean_intensity : file.dispersion) = v;
    }
    else
    {
      throw FormatError("unknown header key '" + std::string(key) + "'", lineno);
    }
  }
  if (!have_grid)
    throw FormatError("missing grid line", std::min(i + 1, lines.size()));
  if (i == lines.size())
    throw FormatError("missing 'scan,intensity,counts' column header", lines.size());

  const Index bins = file.grid.size();
  for (++i; i < lines.size(); ++i)
  {
    const std::size_t lineno = i + 1;
    const auto fields = split(lines[i], ',');
    const std::size_t index = file.scans.size() + 1;
    if (fields.size() < 2)
      throw FormatError("scan " + std::to_string(index) + ": truncated row", lineno);
    if (fields[0] != std::to_string(index))
      throw FormatError("expected scan index " + std::to_string(index) + ", found '" +
                            std::string(fields[0]) + "'",
                        lineno);
    const auto found = static_cast<Index>(fields.size()) - 2;
    if (found != bins)
      throw FormatError("scan " + std::to_string(index) + ": expected " + std::to_string(bins) +
                            " bins, found " + std::to_string(found) +
                            (found < bins ? " (missing bin " + std::to_string(found) + ")" : ""),
                        lineno);
    Scan s;
    s.intensity = parse_number(fields[1], lineno);
    if (!(std::isfinite(s.intensity) && s.intensity > 0))
      throw FormatError("scan " + std::to_string(index) + ": intensity must be > 0", lineno);
    s.photocurrent.resize(bins);
    for (Index k = 0; k < bins; ++k)
      s.photocurrent[k] = parse_number(fields[static_cast<std::size_t>(k) + 2], lineno);
    file.scans.push_back(std::move(s));
  }
  return file;
}

void write_scans(const std::filesystem::path& path, const ScanFile& file)
{
  write_text_file(path, format_scans(file));
}

ScanFile read_scans(const std::filesystem::path& path) { return parse_scans(read_text_file(path)); }

// --- trace ------------------------------------------------------------------------

std::string format_trace(const ConvergenceTrace<double>& trace, const std::vector<double>& energies)
{
  if (energies.size() != static_cast<std::size_t>(trace.points()))
    throw Error("trace has " + std::to_string(trace.points()) + " control points but " +
                std::to_string(energies.size()) + " energies");
  std::string out = header_line("trace", kTraceFormatVersion);
  out += "iteration";
  for (double e : energies)
    out += "," + energy_label(e);
  out += '\n';
  for (Index r = 0; r < trace.length(); ++r)
  {
    out += std::to_string(r + 1);
    for (Index c = 0; c < trace.points(); ++c)
      out += "," + format_number(trace.values(r, c));
    out += '\n';
  }
  return out;
}

TraceFile parse_trace(std::string_view text)
{
  const auto lines = lines_of(text);
  if (lines.empty())
    throw FormatError("empty trace file", 1);
  check_header(lines[0], "trace", kTraceFormatVersion);
  if (lines.size() < 2)
    throw FormatError("missing column header", 2);

  const auto columns = split(lines[1], ',');
  if (columns[0] != "iteration")
    throw FormatError("first column must be 'iteration'", 2);
  TraceFile trace;
  for (std::size_t c = 1; c < columns.size(); ++c)
  {
    if (columns[c].empty() || columns[c][0] != 'E')
      throw FormatError("control-point column must be labeled E<energy>", 2);
    trace.energies.push_back(parse_number(columns[c].substr(1), 2));
  }

  const auto rows = static_cast<Index>(lines.size() - 2);
  const auto cols = static_cast<Index>(trace.energies.size());
  trace.values.resize(rows, cols);
  for (Index r = 0; r < rows; ++r)
  {
    const std::size_t lineno = static_cast<std::size_t>(r) + 3;
    const auto fields = split(lines[static_cast<std::size_t>(r) + 2], ',');
    if (static_cast<Index>(fields.size()) != cols + 1)
      throw FormatError("expected " + std::to_string(cols + 1) + " fields", lineno);
    if (fields[0] != std::to_string(r + 1))
      throw FormatError("iterations must increase from 1", lineno);
    for (Index c = 0; c < cols; ++c)
      trace.values(r, c) = parse_number(fields[static_cast<std::size_t>(c) + 1], lineno);
  }
  return trace;
}

void write_trace(const std::filesystem::path& path, const ConvergenceTrace<double>& trace,
                 const std::vector<double>& energies)
{
  write_text_file(path, format_trace(trace, energies));
}

TraceFile read_trace(const std::filesystem::path& path) { return parse_trace(read_text_file(path)); }

// --- plot data ------------------------------------------------------------------

std::string format_plot_data(const ExperimentResult& result, PlotKind kind)
{
  if (kind == PlotKind::ConvergenceTrace)
    return format_trace(result.trace, result.control_energies);

  const double mean_i = result.report.mean_intensity;
  std::string out = header_line("overlay", kOverlayFormatVersion);
  out += "energy_ev,reference,noisy_scan,spsa_estimate,noise_profile\n";
  for (Index k = 0; k < result.energies.size(); ++k)
  {
    out += format_number(result.energies[k]) + "," + format_number(result.theta_bar[k] * mean_i) +
           "," + format_number(result.example_scan.photocurrent[k]) + "," +
           format_number(result.spsa[k] * mean_i) + "," + format_number(result.noise_profile[k]) +
           "\n";
  }
  return out;
}

void emit_plot_data(const ExperimentResult& result, PlotKind kind, const std::filesystem::path& path)
{
  write_text_file(path, format_plot_data(result, kind));
}

std::string format_estimates(const ExperimentResult& result)
{
  std::string out = header_line("estimates", kEstimatesFormatVersion);
  out += "energy_ev,theta_bar,spsa,rls,naive_mean\n";
  for (Index k = 0; k < result.energies.size(); ++k)
  {
    const double rls = result.rls ? (*result.rls)[k] : std::nan("");
    out += format_number(result.energies[k]) + "," + format_number(result.theta_bar[k]) + "," +
           format_number(result.spsa[k]) + "," + format_number(rls) + "," +
           format_number(result.naive_mean[k]) + "\n";
  }
  return out;
}

// --- reports ----------------------------------------------------------------------

namespace {

std::string fixed(double v, int precision = 6)
{
  if (std::isnan(v))
    return "n/a";
  std::ostringstream os;
  os << std::setprecision(precision) << std::scientific << v;
  return os.str();
}

nlohmann::json metrics_json(const EstimatorMetrics& m)
{
  const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  return {{"rmse_in_window", num(m.rmse_in_window)},
          {"rmse_out_window", num(m.rmse_out_window)},
          {"max_abs_error", num(m.max_abs_error)}};
}

double ratio(double num, double den) { return den > 0 ? num / den : std::nan(""); }

} // namespace

std::string format_report_text(const ComparisonReport& r)
{
  std::ostringstream os;
  os << "comparison report (" << version_stamp() << ")\n";
  os << "scans: " << r.n_scans << "  bins in noise window: " << r.bins_in_window
     << "  outside: " << r.bins_out_window << "\n";
  os << "mean intensity: " << format_number(r.mean_intensity)
     << "  dispersion: " << format_number(r.dispersion) << "\n\n";
  os << std::left << std::setw(12) << "estimator" << std::setw(16) << "rmse_in_window"
     << std::setw(17) << "rmse_out_window" << std::setw(16) << "max_abs_error"
     << "naive/estimator (in window)\n";
  const auto row = [&](const char* name, const std::optional<EstimatorMetrics>& m) {
    os << std::left << std::setw(12) << name;
    if (!m)
    {
      os << "degenerate intensity draw\n";
      return;
    }
    os << std::setw(16) << fixed(m->rmse_in_window) << std::setw(17) << fixed(m->rmse_out_window)
       << std::setw(16) << fixed(m->max_abs_error)
       << fixed(ratio(r.naive_mean.rmse_in_window, m->rmse_in_window), 3) << "\n";
  };
  row("spsa", r.spsa);
  row("rls", r.rls);
  row("naive_mean", r.naive_mean);
  os << "\nstabilization iteration: "
     << (r.stabilization_iteration ? std::to_string(*r.stabilization_iteration) : "none")
     << " (rel_tol " << format_number(r.stabilization.rel_tol) << ", window "
     << r.stabilization.window << ")\n";
  os << "theta clamps: " << r.clamp_count << "  rls degenerate: " << r.rls_degenerate << "\n";
  if (r.warnings.empty())
    os << "warnings: none\n";
  for (const auto& w : r.warnings)
    os << "warning: " << w << "\n";
  return os.str();
}

std::string format_report_json(const ComparisonReport& r)
{
  nlohmann::json j;
  j["format"] = "spsa-report";
  j["version"] = 1;
  j["generator"] = version_stamp();
  j["n_scans"] = r.n_scans;
  j["bins_in_window"] = r.bins_in_window;
  j["bins_out_window"] = r.bins_out_window;
  j["mean_intensity"] = r.mean_intensity;
  j["dispersion"] = r.dispersion;
  j["estimators"]["spsa"] = metrics_json(r.spsa);
  j["estimators"]["rls"] = r.rls ? metrics_json(*r.rls) : nlohmann::json();
  j["estimators"]["naive_mean"] = metrics_json(r.naive_mean);
  j["stabilization"] = {{"iteration", r.stabilization_iteration
                                          ? nlohmann::json(*r.stabilization_iteration)
                                          : nlohmann::json()},
                        {"rel_tol", r.stabilization.rel_tol},
                        {"window", r.stabilization.window}};
  j["clamp_count"] = r.clamp_count;
  j["rls_degenerate"] = r.rls_degenerate;
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

// --- files ------------------------------------------------------------------------

std::string read_text_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad())
    throw Error("read failed for '" + path.string() + "'");
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content)
{
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error("cannot open '" + path.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out)
    {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw Error("write failed for '" + path.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
  {
    std::filesystem::remove(tmp, ec);
    throw Error("cannot replace '" + path.string() + "'");
  }
}

} // namespace spsa
