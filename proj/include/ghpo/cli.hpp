// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface: argument parsing, run orchestration, answer
// verification over files, comparison runs and SVG plots.

#ifndef GHPO_CLI_HPP_
#define GHPO_CLI_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ghpo/core.hpp"
#include "ghpo/trainer.hpp"

namespace ghpo::cli {

struct TrainCommand {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> dataset;
  std::filesystem::path out;
  std::optional<std::filesystem::path> resume;
  std::vector<std::string> overrides;  // key=value
  bool quiet = false;
};

struct EvalCommand {
  std::optional<std::filesystem::path> config;
  std::filesystem::path policy;
  std::vector<std::filesystem::path> datasets;  // empty: synthetic set
  int k = 1;
  EvalMode mode = EvalMode::kPassAt1;
  std::optional<std::filesystem::path> report;
  std::vector<std::string> overrides;
};

struct VerifyCommand {
  std::filesystem::path predictions;
  std::filesystem::path gold;
};

struct SimulateCommand {
  std::optional<std::filesystem::path> config_a;
  std::optional<std::filesystem::path> config_b;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> names;
  std::filesystem::path out;
  std::vector<std::string> overrides;
};

struct PlotCommand {
  std::vector<std::filesystem::path> metrics;
  std::vector<std::string> names;
  std::filesystem::path out;
};

using Command = std::variant<TrainCommand, EvalCommand, VerifyCommand,
                             SimulateCommand, PlotCommand>;

/// Bad command line. what() is a one-line message; usage() the help text.
class UsageError : public std::runtime_error {
 public:
  UsageError(const std::string& what, std::string usage)
      : std::runtime_error(what), usage_(std::move(usage)) {}
  const std::string& usage() const noexcept { return usage_; }

 private:
  std::string usage_;
};

/// Thrown for --help; carries the text to print.
class HelpRequested : public std::exception {
 public:
  explicit HelpRequested(std::string text) : text_(std::move(text)) {}
  const char* what() const noexcept override { return text_.c_str(); }

 private:
  std::string text_;
};

/// Scaled-down defaults used when no config file is given; configs/desk.cfg
/// holds the same values.
TrainConfig desk_defaults();

/// Default output location: $GHPO_OUT_DIR, else "ghpo_out".
std::filesystem::path default_out_dir();

Command parse_args(int argc, const char* const* argv);

/// Full program: parse, dispatch, report. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err);

// --- verify -----------------------------------------------------------------------

struct VerifyLine {
  std::string id;
  bool correct = false;
  std::string extracted;
};

/// Reads {"id","prediction"} and {"id","answer"} JSON lines. Predictions
/// without an extractable answer are compared whole.
std::vector<VerifyLine> verify_predictions(std::istream& predictions,
                                           std::istream& gold);

// --- plots ------------------------------------------------------------------------

struct PlotSeries {
  std::string name;
  std::vector<RunMetrics> metrics;
};

/// Metric columns that get a figure, in file order.
const std::vector<std::string>& plotted_metrics();

/// Standalone SVG for one metric; identical input gives identical bytes.
std::string render_svg(const std::string& metric,
                       std::span<const PlotSeries> series);

/// One SVG per plotted metric under out_dir; returns the paths written.
std::vector<std::filesystem::path> emit_plots(
    std::span<const PlotSeries> series, const std::filesystem::path& out_dir);

/// Loads each CSV (errors name the offending row) and plots them overlaid.
/// Run names default to the CSV parent directory names.
std::vector<std::filesystem::path> emit_plots(
    std::span<const std::filesystem::path> metrics_csvs,
    std::span<const std::string> names, const std::filesystem::path& out_dir);

// --- comparison runs ----------------------------------------------------------------

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<RunMetrics> metrics;
  double final_accuracy = 0.0;  // accuracy reward at the last step
  double eval_accuracy = 0.0;   // hint-free pass@1 on the training set
  double mean_grad_norm = 0.0;
};

struct RunSummary {
  std::string name;
  TrainConfig config;
  std::vector<SeedResult> seeds;
};

struct Trajectory {
  std::vector<double> mean;
  std::vector<double> stderr_;
};

double mean(std::span<const double> xs);
/// Sample standard deviation over sqrt(n); 0 for fewer than 2 values.
double standard_error(std::span<const double> xs);

/// Per-step mean and standard error across seeds of one metric.
Trajectory trajectory(const RunSummary& run,
                      double (*field)(const RunMetrics&));

struct CompareResult {
  RunSummary a;
  RunSummary b;
};

/// Runs both configs on every seed. For each seed both runs share the
/// synthetic dataset (built from cfg_a's generator settings) and cfg.seed.
/// Writes summary.tsv and trajectory.csv under out_dir unless it is empty.
/// Throws std::invalid_argument for fewer than 2 seeds.
CompareResult simulate_compare(const TrainConfig& cfg_a,
                               const TrainConfig& cfg_b,
                               std::span<const std::uint64_t> seeds,
                               const std::string& name_a,
                               const std::string& name_b,
                               const std::filesystem::path& out_dir = {});

void write_summary_tsv(std::ostream& out, const CompareResult& result);
void write_trajectory_csv(std::ostream& out, const CompareResult& result);

}  // namespace ghpo::cli

#endif  // GHPO_CLI_HPP_
