#include "spsa/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>
#include <map>
#include <sstream>

namespace spsa {

namespace {

std::string_view trim(std::string_view s)
{
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_trimmed(std::string_view s, char sep)
{
  std::vector<std::string_view> out;
  std::size_t begin = 0;
  for (;;)
  {
    const auto end = s.find(sep, begin);
    out.push_back(trim(s.substr(begin, end == std::string_view::npos ? end : end - begin)));
    if (end == std::string_view::npos)
      return out;
    begin = end + 1;
  }
}

double to_double(const std::string& key, std::string_view v)
{
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError(key, "expected a number, got '" + std::string(v) + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, std::string_view v)
{
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError(key, "expected a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

bool to_bool(const std::string& key, std::string_view v)
{
  if (v == "true" || v == "on" || v == "yes" || v == "1")
    return true;
  if (v == "false" || v == "off" || v == "no" || v == "0")
    return false;
  throw ConfigError(key, "expected true or false, got '" + std::string(v) + "'");
}

std::vector<double> to_list(const std::string& key, std::string_view v)
{
  std::vector<double> out;
  for (auto item : split_trimmed(v, ','))
    out.push_back(to_double(key, item));
  return out;
}

std::string num(double v) { return format_number(v); }

std::string join(const std::vector<double>& v)
{
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out += (i ? ", " : "") + num(v[i]);
  return out;
}

std::vector<Peak> to_peaks(const std::string& key, std::string_view v)
{
  std::vector<Peak> peaks;
  if (trim(v).empty() || trim(v) == "none")
    return peaks;
  for (auto item : split_trimmed(v, ';'))
  {
    std::istringstream is{std::string(item)};
    std::string tok;
    std::vector<std::string> toks;
    while (is >> tok)
      toks.push_back(tok);
    if (toks.size() != 4)
      throw ConfigError(key, "peak must be '<gaussian|lorentzian> <center_ev> <fwhm_ev> <amplitude>'");
    Peak p;
    if (toks[0] == "gaussian")
      p.shape = PeakShape::Gaussian;
    else if (toks[0] == "lorentzian")
      p.shape = PeakShape::Lorentzian;
    else
      throw ConfigError(key, "unknown peak shape '" + toks[0] + "'");
    p.center_ev = to_double(key, toks[1]);
    p.width_ev = to_double(key, toks[2]);
    p.amplitude = to_double(key, toks[3]);
    peaks.push_back(p);
  }
  return peaks;
}

std::vector<std::pair<double, double>> to_table(const std::string& key, std::string_view v)
{
  std::vector<std::pair<double, double>> table;
  for (auto item : split_trimmed(v, ';'))
  {
    std::istringstream is{std::string(item)};
    std::string e, c, extra;
    if (!(is >> e >> c) || (is >> extra))
      throw ConfigError(key, "table entries must be '<energy_ev> <counts>' separated by ';'");
    table.emplace_back(to_double(key, e), to_double(key, c));
  }
  return table;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, std::string_view)>;

const std::map<std::string, Setter>& setters()
{
  static const std::map<std::string, Setter> table = {
      {"experiment.n_scans",
       [](auto& c, const auto& k, auto v) { c.n_scans = to_uint(k, v); }},
      {"experiment.seed", [](auto& c, const auto& k, auto v) { c.seed = to_uint(k, v); }},
      {"experiment.initial_guess",
       [](auto& c, const auto& k, auto v) {
         const auto list = to_list(k, v);
         if (list.size() == 1)
           c.initial_guess = list.front();
         else
           c.initial_guess = Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(
               list.data(), static_cast<Index>(list.size())));
       }},
      {"experiment.control_points",
       [](auto& c, const auto& k, auto v) {
         if (v == "auto")
           c.control_points.clear();
         else
           c.control_points = to_list(k, v);
       }},
      {"experiment.control_point_count",
       [](auto& c, const auto& k, auto v) { c.control_point_count = to_uint(k, v); }},
      {"experiment.variance_policy",
       [](auto& c, const auto& k, auto v) {
         if (v == "fixed")
           c.variance_policy = VariancePolicy::FixedKnown;
         else if (v == "running")
           c.variance_policy = VariancePolicy::RunningEmpirical;
         else
           throw ConfigError(k, "expected 'fixed' or 'running'");
       }},
      {"experiment.calibration_samples",
       [](auto& c, const auto& k, auto v) { c.calibration_samples = to_uint(k, v); }},
      {"grid.start_ev", [](auto& c, const auto& k, auto v) { c.grid.start_ev = to_double(k, v); }},
      {"grid.stop_ev", [](auto& c, const auto& k, auto v) { c.grid.stop_ev = to_double(k, v); }},
      {"grid.step_ev", [](auto& c, const auto& k, auto v) { c.grid.step_ev = to_double(k, v); }},
      {"dos.background",
       [](auto& c, const auto& k, auto v) { c.dos.background = to_double(k, v); }},
      {"dos.scale_const",
       [](auto& c, const auto& k, auto v) { c.dos.scale_const = to_double(k, v); }},
      {"dos.peaks", [](auto& c, const auto& k, auto v) { c.dos.peaks = to_peaks(k, v); }},
      {"intensity.mean",
       [](auto& c, const auto& k, auto v) { c.intensity.mean = to_double(k, v); }},
      {"intensity.half_width_frac",
       [](auto& c, const auto& k, auto v) { c.intensity.half_width_frac = to_double(k, v); }},
      {"intensity.distribution",
       [](auto& c, const auto& k, auto v) {
         if (v == "uniform")
           c.intensity.distribution = IntensityDistribution::Uniform;
         else if (v == "truncated_gaussian")
           c.intensity.distribution = IntensityDistribution::TruncatedGaussian;
         else
           throw ConfigError(k, "expected 'uniform' or 'truncated_gaussian'");
       }},
      {"intensity.gaussian_sigma_frac",
       [](auto& c, const auto& k, auto v) { c.intensity.gaussian_sigma_frac = to_double(k, v); }},
      {"noise.enabled", [](auto& c, const auto& k, auto v) { c.noise.enabled = to_bool(k, v); }},
      {"noise.lo_ev", [](auto& c, const auto& k, auto v) { c.noise.lo_ev = to_double(k, v); }},
      {"noise.hi_ev", [](auto& c, const auto& k, auto v) { c.noise.hi_ev = to_double(k, v); }},
      {"noise.shape",
       [](auto& c, const auto& k, auto v) {
         if (v == "raised_cosine")
         {
           if (!std::holds_alternative<RaisedCosineShape>(c.noise.shape))
             c.noise.shape = RaisedCosineShape{};
         }
         else if (v == "tabulated")
         {
           if (!std::holds_alternative<TabulatedShape>(c.noise.shape))
             c.noise.shape = TabulatedShape{};
         }
         else
           throw ConfigError(k, "expected 'raised_cosine' or 'tabulated'");
       }},
      {"noise.amplitude",
       [](auto& c, const auto& k, auto v) {
         auto* rc = std::get_if<RaisedCosineShape>(&c.noise.shape);
         if (!rc)
           throw ConfigError(k, "only valid with noise.shape = raised_cosine");
         rc->amplitude = to_double(k, v);
       }},
      {"noise.pedestal_frac",
       [](auto& c, const auto& k, auto v) {
         auto* rc = std::get_if<RaisedCosineShape>(&c.noise.shape);
         if (!rc)
           throw ConfigError(k, "only valid with noise.shape = raised_cosine");
         rc->pedestal_frac = to_double(k, v);
       }},
      {"noise.table",
       [](auto& c, const auto& k, auto v) {
         auto* tab = std::get_if<TabulatedShape>(&c.noise.shape);
         if (!tab)
           throw ConfigError(k, "only valid with noise.shape = tabulated");
         tab->points = to_table(k, v);
       }},
      {"noise.mode",
       [](auto& c, const auto& k, auto v) {
         if (v == "deterministic")
           c.noise.mode = NoiseMode::Deterministic;
         else if (v == "jitter")
           c.noise.mode = NoiseMode::PerScanJitter;
         else
           throw ConfigError(k, "expected 'deterministic' or 'jitter'");
       }},
      {"noise.jitter_amplitude",
       [](auto& c, const auto& k, auto v) { c.noise.jitter_amplitude = to_double(k, v); }},
      {"disturbance.sigma_w",
       [](auto& c, const auto& k, auto v) { c.disturbance.sigma_w = to_double(k, v); }},
      {"stabilization.rel_tol",
       [](auto& c, const auto& k, auto v) { c.stabilization.rel_tol = to_double(k, v); }},
      {"stabilization.window",
       [](auto& c, const auto& k, auto v) {
         c.stabilization.window = static_cast<Index>(to_uint(k, v));
       }},
  };
  return table;
}

} // namespace

ExperimentConfig parse_config(std::string_view text)
{
  ExperimentConfig config;
  std::string section;
  std::size_t lineno = 0;
  std::size_t begin = 0;
  while (begin <= text.size())
  {
    const auto end = text.find('\n', begin);
    const std::string_view raw =
        text.substr(begin, end == std::string_view::npos ? std::string_view::npos : end - begin);
    begin = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++lineno;

    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';')
      continue;
    if (line.front() == '[')
    {
      if (line.back() != ']')
        throw ConfigError("", "line " + std::to_string(lineno) + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("", "line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = section + "." + std::string(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end())
      throw ConfigError(key, "unknown config key (line " + std::to_string(lineno) + ")");
    it->second(config, key, value);
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
  std::string text;
  try
  {
    text = read_text_file(path);
  }
  catch (const Error& e)
  {
    throw ConfigError("", e.what());
  }
  return parse_config(text);
}

std::string format_config(const ExperimentConfig& c)
{
  std::ostringstream os;
  os << "[experiment]\n";
  os << "n_scans = " << c.n_scans << "\n";
  if (c.seed)
    os << "seed = " << *c.seed << "\n";
  if (const auto* g = std::get_if<double>(&c.initial_guess))
    os << "initial_guess = " << num(*g) << "\n";
  else
  {
    const auto& v = std::get<Eigen::VectorXd>(c.initial_guess);
    os << "initial_guess = " << join(std::vector<double>(v.data(), v.data() + v.size())) << "\n";
  }
  os << "control_points = " << (c.control_points.empty() ? "auto" : join(c.control_points)) << "\n";
  os << "control_point_count = " << c.control_point_count << "\n";
  os << "variance_policy = "
     << (c.variance_policy == VariancePolicy::FixedKnown ? "fixed" : "running") << "\n";
  os << "calibration_samples = " << c.calibration_samples << "\n";

  os << "\n[grid]\n";
  os << "start_ev = " << num(c.grid.start_ev) << "\n";
  os << "stop_ev = " << num(c.grid.stop_ev) << "\n";
  os << "step_ev = " << num(c.grid.step_ev) << "\n";

  os << "\n[dos]\n";
  os << "background = " << num(c.dos.background) << "\n";
  os << "scale_const = " << num(c.dos.scale_const) << "\n";
  os << "peaks = ";
  if (c.dos.peaks.empty())
    os << "none";
  for (std::size_t i = 0; i < c.dos.peaks.size(); ++i)
  {
    const auto& p = c.dos.peaks[i];
    os << (i ? "; " : "") << (p.shape == PeakShape::Gaussian ? "gaussian" : "lorentzian") << " "
       << num(p.center_ev) << " " << num(p.width_ev) << " " << num(p.amplitude);
  }
  os << "\n";

  os << "\n[intensity]\n";
  os << "mean = " << num(c.intensity.mean) << "\n";
  os << "half_width_frac = " << num(c.intensity.half_width_frac) << "\n";
  os << "distribution = "
     << (c.intensity.distribution == IntensityDistribution::Uniform ? "uniform"
                                                                     : "truncated_gaussian")
     << "\n";
  os << "gaussian_sigma_frac = " << num(c.intensity.gaussian_sigma_frac) << "\n";

  os << "\n[noise]\n";
  os << "enabled = " << (c.noise.enabled ? "true" : "false") << "\n";
  os << "lo_ev = " << num(c.noise.lo_ev) << "\n";
  os << "hi_ev = " << num(c.noise.hi_ev) << "\n";
  if (const auto* rc = std::get_if<RaisedCosineShape>(&c.noise.shape))
  {
    os << "shape = raised_cosine\n";
    os << "amplitude = " << num(rc->amplitude) << "\n";
    os << "pedestal_frac = " << num(rc->pedestal_frac) << "\n";
  }
  else
  {
    os << "shape = tabulated\n";
    os << "table = ";
    const auto& pts = std::get<TabulatedShape>(c.noise.shape).points;
    for (std::size_t i = 0; i < pts.size(); ++i)
      os << (i ? "; " : "") << num(pts[i].first) << " " << num(pts[i].second);
    os << "\n";
  }
  os << "mode = " << (c.noise.mode == NoiseMode::Deterministic ? "deterministic" : "jitter") << "\n";
  os << "jitter_amplitude = " << num(c.noise.jitter_amplitude) << "\n";

  os << "\n[disturbance]\n";
  os << "sigma_w = " << num(c.disturbance.sigma_w) << "\n";

  os << "\n[stabilization]\n";
  os << "rel_tol = " << num(c.stabilization.rel_tol) << "\n";
  os << "window = " << c.stabilization.window << "\n";
  return os.str();
}

std::string config_reference()
{
  return R"(Config file keys (sectioned key = value; unknown keys are errors):
  [experiment]
    n_scans = 50                 number of single scans
    seed = <unset>               RNG seed; --seed overrides; required by simulate
    initial_guess = 0            scalar, or one value per bin (comma-separated)
    control_points = auto        comma-separated energies (eV) or 'auto'
    control_point_count = 12     evenly spaced control points when 'auto'
    variance_policy = fixed      fixed | running
    calibration_samples = 10     intensity samples priming the running policy
  [grid]
    start_ev = 25.8  stop_ev = 37.8  step_ev = 0.05
  [dos]
    background = 0.5  scale_const = 1
    peaks = gaussian 34.2 2.1 1; gaussian 31.4 2.6 0.7   (shape center fwhm amplitude; or 'none')
  [intensity]
    mean = 1  half_width_frac = 0.9
    distribution = uniform       uniform | truncated_gaussian
    gaussian_sigma_frac = 0.5    std of the untruncated Gaussian / half width
  [noise]
    enabled = true  lo_ev = 28.8  hi_ev = 35.9
    shape = raised_cosine        raised_cosine | tabulated
    amplitude = 0.1  pedestal_frac = 0.8   (raised_cosine)
    table = 28.8 0.1; 35.9 0.05            (tabulated; energy counts pairs)
    mode = deterministic         deterministic | jitter
    jitter_amplitude = 0         jitter mode: N_n = N * (1 + a u), u ~ U[-1, 1]
  [disturbance]
    sigma_w = 0.01               std of the per-bin disturbance w_n
  [stabilization]
    rel_tol = 0.05  window = 5
)";
}

} // namespace spsa
