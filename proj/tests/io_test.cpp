#include "spsa/harness.hpp"
#include "spsa/io.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>

namespace spsa {
namespace {

namespace fs = std::filesystem;

class IoTest : public ::testing::Test
{
protected:
  fs::path dir_ = fs::temp_directory_path() / "spsa_io_test";
  void SetUp() override { fs::create_directories(dir_); }
  void TearDown() override { fs::remove_all(dir_); }
};

ScanFile simulated_file()
{
  const auto cfg = reference_config();
  ScanFile file;
  file.grid = cfg.grid;
  file.mean_intensity = cfg.intensity.mean;
  file.dispersion = implied_dispersion(cfg.intensity);
  file.scans = simulate_scans(cfg);
  return file;
}

std::size_t line_count(const std::string& text)
{
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

TEST(FormatNumber, RoundTripsRandomDoubles)
{
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::uint64_t> bits;
  int checked = 0;
  while (checked < 5000)
  {
    const std::uint64_t b = bits(rng);
    double v;
    std::memcpy(&v, &b, sizeof v);
    if (!std::isfinite(v))
      continue;
    EXPECT_EQ(parse_number(format_number(v)), v) << format_number(v);
    ++checked;
  }
  EXPECT_EQ(format_number(0.27), "0.27");
  EXPECT_EQ(format_number(1.0), "1");
}

TEST(FormatNumber, RejectsJunk)
{
  EXPECT_THROW(parse_number("1.5x", 3), FormatError);
  EXPECT_THROW(parse_number("", 3), FormatError);
  try
  {
    parse_number("abc", 9);
    FAIL();
  }
  catch (const FormatError& e)
  {
    EXPECT_EQ(e.line(), 9u);
  }
}

TEST_F(IoTest, ScanFileRoundTripIsExact)
{
  const auto file = simulated_file();
  write_scans(dir_ / "scans.csv", file);
  const auto back = read_scans(dir_ / "scans.csv");
  EXPECT_EQ(back, file);
  ASSERT_EQ(back.scans.size(), 50u);
  EXPECT_EQ(back.scans.front().photocurrent.size(), 241);
  EXPECT_EQ(format_scans(back), read_text_file(dir_ / "scans.csv"));
}

TEST_F(IoTest, OptionalHeaderLinesMayBeOmitted)
{
  auto file = simulated_file();
  file.mean_intensity.reset();
  file.dispersion.reset();
  EXPECT_EQ(parse_scans(format_scans(file)), file);
}

TEST(ScanParse, TruncatedLastLineNamesLine)
{
  auto file = simulated_file();
  std::string text = format_scans(file);
  text.erase(text.size() - 200); // cut into the last row
  try
  {
    parse_scans(text);
    FAIL() << "expected FormatError";
  }
  catch (const FormatError& e)
  {
    EXPECT_EQ(e.line(), 5u + 50u);
    EXPECT_NE(std::string(e.what()).find("scan 50"), std::string::npos);
  }
}

TEST(ScanParse, InvalidGridRejectedBeforeRows)
{
  const std::string text = "# spsa-scans v1 spsafilter/0.1.0\n"
                           "grid,25.8,37.8,0\n"
                           "scan,intensity,counts\n"
                           "1,garbage\n";
  try
  {
    parse_scans(text);
    FAIL() << "expected FormatError";
  }
  catch (const FormatError& e)
  {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ScanParse, HeaderErrors)
{
  const std::string body = "grid,0,0.1,0.1\nscan,intensity,counts\n1,1,2,3\n";
  EXPECT_NO_THROW(parse_scans("# spsa-scans v1 spsafilter/0.1.0\n" + body));
  EXPECT_THROW(parse_scans("# spsa-scans v2 spsafilter/9.9.9\n" + body), FormatError);
  EXPECT_THROW(parse_scans("# spsa-trace v1 spsafilter/0.1.0\n" + body), FormatError);
  EXPECT_THROW(parse_scans(body), FormatError);
  EXPECT_THROW(parse_scans(""), FormatError);
  EXPECT_THROW(parse_scans("# spsa-scans v1 x\ngrid,0,0.1,0.1\ncolour,red\nscan,intensity,counts\n"),
               FormatError);
}

TEST(ScanParse, RowErrors)
{
  const std::string head = "# spsa-scans v1 x\ngrid,0,0.1,0.1\nscan,intensity,counts\n";
  EXPECT_THROW(parse_scans(head + "2,1,2,3\n"), FormatError);      // index must start at 1
  EXPECT_THROW(parse_scans(head + "1,1,2,3,4\n"), FormatError);    // extra bin
  EXPECT_THROW(parse_scans(head + "1,0,2,3\n"), FormatError);      // non-positive intensity
  EXPECT_THROW(parse_scans(head + "1,1,2,nope\n"), FormatError);   // bad number
  try
  {
    parse_scans(head + "1,1,2,3\n2,1,2\n");
    FAIL();
  }
  catch (const FormatError& e)
  {
    EXPECT_EQ(e.line(), 5u);
    EXPECT_NE(std::string(e.what()).find("missing bin 1"), std::string::npos);
  }
}

TEST_F(IoTest, MissingFileIsError)
{
  EXPECT_THROW(read_scans(dir_ / "absent.csv"), Error);
}

TEST_F(IoTest, TraceRoundTrip)
{
  const auto r = run_experiment(reference_config());
  write_trace(dir_ / "trace.csv", r.trace, r.control_energies);
  const auto back = read_trace(dir_ / "trace.csv");
  EXPECT_EQ(back.values, r.trace.values);
  ASSERT_EQ(back.energies.size(), 12u);
  for (std::size_t c = 0; c < back.energies.size(); ++c)
    EXPECT_NEAR(back.energies[c], r.control_energies[c], 5e-4);
  const auto text = read_text_file(dir_ / "trace.csv");
  EXPECT_EQ(line_count(text), 2u + 50u);
  EXPECT_EQ(text, format_plot_data(r, PlotKind::ConvergenceTrace));
}

TEST(TraceParse, Errors)
{
  EXPECT_THROW(parse_trace("# spsa-trace v1 x\n"), FormatError);
  EXPECT_THROW(parse_trace("# spsa-trace v1 x\nstep,E1.000\n1,2\n"), FormatError);
  EXPECT_THROW(parse_trace("# spsa-trace v1 x\niteration,X1\n1,2\n"), FormatError);
  EXPECT_THROW(parse_trace("# spsa-trace v1 x\niteration,E1.000\n1,2,3\n"), FormatError);
  EXPECT_THROW(parse_trace("# spsa-trace v1 x\niteration,E1.000\n2,2\n"), FormatError);
}

TEST_F(IoTest, OverlayHasFiveColumnsPerBin)
{
  const auto r = run_experiment(reference_config());
  const auto text = format_plot_data(r, PlotKind::SpectraOverlay);
  EXPECT_EQ(line_count(text), 2u + 241u);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("# spsa-overlay v1", 0), 0u);
  std::getline(in, line);
  EXPECT_EQ(line, "energy_ev,reference,noisy_scan,spsa_estimate,noise_profile");
  while (std::getline(in, line))
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4);

  emit_plot_data(r, PlotKind::SpectraOverlay, dir_ / "a.csv");
  emit_plot_data(r, PlotKind::SpectraOverlay, dir_ / "b.csv");
  EXPECT_EQ(read_text_file(dir_ / "a.csv"), read_text_file(dir_ / "b.csv"));
}

TEST(Estimates, DegenerateRlsWrittenAsNan)
{
  auto cfg = reference_config();
  cfg.n_scans = 1;
  const auto text = format_estimates(run_experiment(cfg));
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line, "energy_ev,theta_bar,spsa,rls,naive_mean");
  std::getline(in, line);
  EXPECT_NE(line.find(",nan,"), std::string::npos);
}

TEST(Report, TextAndJsonAreDeterministic)
{
  const auto a = run_experiment(reference_config()).report;
  const auto b = run_experiment(reference_config()).report;
  EXPECT_EQ(format_report_text(a), format_report_text(b));
  EXPECT_EQ(format_report_json(a), format_report_json(b));

  const auto j = nlohmann::json::parse(format_report_json(a));
  EXPECT_EQ(j["n_scans"], 50);
  EXPECT_EQ(j["bins_in_window"], 143);
  EXPECT_EQ(j["stabilization"]["iteration"], 6);
  EXPECT_DOUBLE_EQ(j["estimators"]["spsa"]["rmse_in_window"].get<double>(), a.spsa.rmse_in_window);
  EXPECT_NE(format_report_text(a).find("stabilization iteration: 6"), std::string::npos);
}

TEST(Report, JsonNullsForMissingValues)
{
  auto cfg = reference_config();
  cfg.n_scans = 1;
  const auto j = nlohmann::json::parse(format_report_json(run_experiment(cfg).report));
  EXPECT_TRUE(j["estimators"]["rls"].is_null());
  EXPECT_TRUE(j["stabilization"]["iteration"].is_null());
  EXPECT_EQ(j["rls_degenerate"], 1);
}

TEST_F(IoTest, AtomicWriteReplacesWholeFile)
{
  const auto p = dir_ / "x.txt";
  write_text_file(p, "first version, longer\n");
  write_text_file(p, "second\n");
  EXPECT_EQ(read_text_file(p), "second\n");
  for (const auto& e : fs::directory_iterator(dir_))
    EXPECT_EQ(e.path().filename(), "x.txt");
  EXPECT_THROW(write_text_file(dir_ / "no_such_dir" / "y.txt", "z"), Error);
}

} // namespace
} // namespace spsa
