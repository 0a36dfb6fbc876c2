// spsa: simulate photoemission scan series and filter systematic noise out of
// them with the randomized-perturbation stochastic approximation estimator.
//
// Exit codes: 0 success, 1 runtime/data error, 2 usage/config error.

#include "spsa/config.hpp"
#include "spsa/harness.hpp"
#include "spsa/io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

/// --config flag, else $SPSA_CONFIG, else built-in defaults.
spsa::ExperimentConfig resolve_config(const std::string& flag)
{
  if (!flag.empty())
    return spsa::load_config(flag);
  if (const char* env = std::getenv(spsa::kConfigEnvVar); env && *env)
    return spsa::load_config(env);
  return spsa::ExperimentConfig{};
}

struct Loaded
{
  spsa::ExperimentConfig config;
  spsa::IngestedScans ingested;
};

Loaded load_inputs(const std::string& config_path, const std::string& scans_path)
{
  Loaded in{resolve_config(config_path), {}};
  in.ingested = spsa::ingest_external_scans(scans_path);
  if (!(in.ingested.file.grid == in.config.grid))
    throw spsa::Error("scan file grid does not match the configured [grid]");
  return in;
}

spsa::ExperimentResult analyze(const Loaded& in)
{
  auto result = spsa::analyze_scans(in.ingested.file.scans,
                                    spsa::estimation_stats(in.ingested, in.config), in.config);
  result.report.warnings = in.ingested.warnings;
  return result;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Systematic-noise filtering of single-scan spectra by randomized-perturbation "
               "stochastic approximation (" +
               spsa::version_stamp() + ")"};
  app.require_subcommand(1);
  app.footer(std::string("The default config path may be set with $") + spsa::kConfigEnvVar +
             "; --config overrides it.\n\n" + spsa::config_reference());

  std::string config_path;
  std::string scans_path;
  std::string out_path;
  std::string json_path;
  std::optional<std::uint64_t> seed;

  auto* simulate = app.add_subcommand("simulate", "Simulate a scan series and write a scan file");
  simulate->add_option("--config", config_path, "Config file");
  simulate->add_option("--out", out_path, "Output scan file")->required();
  simulate->add_option("--seed", seed, "RNG seed (overrides experiment.seed)");

  auto* estimate = app.add_subcommand("estimate", "Estimate spectra from a scan file");
  estimate->add_option("--scans", scans_path, "Input scan file")->required();
  estimate->add_option("--config", config_path, "Config file");
  estimate->add_option("--out-prefix", out_path,
                       "Writes <prefix>.spectra.csv, <prefix>.estimates.csv, <prefix>.trace.csv")
      ->required();

  auto* compare = app.add_subcommand("compare", "Compare SPSA, RLS and naive-mean estimates");
  compare->add_option("--scans", scans_path, "Input scan file")->required();
  compare->add_option("--config", config_path, "Config file");
  compare->add_option("--out", out_path, "Also write the text report here");
  compare->add_option("--json", json_path, "Write the machine-readable report here");

  auto* trace = app.add_subcommand("trace", "Write the control-point convergence trace");
  trace->add_option("--scans", scans_path, "Input scan file")->required();
  trace->add_option("--config", config_path, "Config file");
  trace->add_option("--out", out_path, "Output trace file")->required();

  auto* show_config = app.add_subcommand("default-config", "Print the default config file");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::CallForHelp& e)
  {
    return app.exit(e);
  }
  catch (const CLI::CallForAllHelp& e)
  {
    return app.exit(e);
  }
  catch (const CLI::ParseError& e)
  {
    app.exit(e);
    return kUsageError;
  }

  try
  {
    if (*show_config)
    {
      auto config = spsa::reference_config();
      std::cout << spsa::format_config(config);
      return kOk;
    }

    if (*simulate)
    {
      auto config = resolve_config(config_path);
      if (seed)
        config.seed = *seed;
      std::size_t clamps = 0;
      const auto scans = spsa::simulate_scans(config, &clamps);
      spsa::ScanFile file;
      file.grid = config.grid;
      file.mean_intensity = config.intensity.mean;
      file.dispersion = spsa::implied_dispersion(config.intensity);
      file.scans = scans;
      spsa::write_scans(out_path, file);
      std::cerr << "wrote " << scans.size() << " scans to " << out_path << " (theta clamps: " << clamps
                << ")\n";
      return kOk;
    }

    const Loaded in = load_inputs(config_path, scans_path);
    const auto result = analyze(in);

    if (*estimate)
    {
      const std::string spectra = spsa::format_plot_data(result, spsa::PlotKind::SpectraOverlay);
      const std::string estimates = spsa::format_estimates(result);
      const std::string trace_text = spsa::format_plot_data(result, spsa::PlotKind::ConvergenceTrace);
      spsa::write_text_file(out_path + ".spectra.csv", spectra);
      spsa::write_text_file(out_path + ".estimates.csv", estimates);
      spsa::write_text_file(out_path + ".trace.csv", trace_text);
      return kOk;
    }
    if (*compare)
    {
      const std::string text = spsa::format_report_text(result.report);
      if (!out_path.empty())
        spsa::write_text_file(out_path, text);
      if (!json_path.empty())
        spsa::write_text_file(json_path, spsa::format_report_json(result.report));
      std::cout << text;
      return kOk;
    }
    if (*trace)
    {
      spsa::emit_plot_data(result, spsa::PlotKind::ConvergenceTrace, out_path);
      const auto& s = result.report.stabilization_iteration;
      std::cout << "stabilization iteration: " << (s ? std::to_string(*s) : "none") << "\n";
      return kOk;
    }
  }
  catch (const spsa::ConfigError& e)
  {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsageError;
  }
  catch (const std::exception& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}
