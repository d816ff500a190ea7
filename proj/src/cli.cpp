// SPDX-License-Identifier: Apache-2.0

#include "ghpo/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "ghpo/verifier.hpp"

namespace ghpo::cli {
namespace {

using std::filesystem::path;

std::optional<path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return path(s);
}

TrainConfig resolve_config(const std::optional<path>& file,
                           const std::vector<std::string>& overrides) {
  TrainConfig cfg = file ? load_config(*file) : desk_defaults();
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return validate_config(cfg);
}

struct LoadedData {
  std::vector<Problem> problems;
  std::shared_ptr<const DifficultyTable> difficulty;
  bool synthetic = false;
};

LoadedData load_data(const std::optional<path>& file, const TrainConfig& cfg) {
  LoadedData d;
  if (file) {
    d.problems = load_dataset(*file);
    d.difficulty = difficulty_from_metadata(d.problems);
  } else {
    auto synth = make_synthetic_dataset(cfg, cfg.seed);
    d.problems = std::move(synth.problems);
    d.difficulty = std::move(synth.difficulty);
    d.synthetic = true;
  }
  return d;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// --- subcommands --------------------------------------------------------------------

int run_train(const TrainCommand& cmd, std::ostream& out) {
  const TrainConfig cfg = resolve_config(cmd.config, cmd.overrides);
  const LoadedData data = load_data(cmd.dataset, cfg);
  std::filesystem::create_directories(cmd.out);
  {
    std::ofstream f(cmd.out / "config.cfg");
    write_config(f, cfg);
  }
  if (data.synthetic) save_dataset(cmd.out / "dataset.jsonl", data.problems);

  RunOptions opts;
  opts.out_dir = cmd.out;
  opts.resume_from = cmd.resume;
  const std::int64_t every = std::max<std::int64_t>(1, cfg.total_steps / 20);
  if (!cmd.quiet) {
    opts.on_step = [&](const RunMetrics& m) {
      if (m.step % every == 0 || m.step + 1 == cfg.total_steps)
        out << "step " << m.step << "\tlr " << fmt("%.3g", m.lr) << "\tacc "
            << fmt("%.3f", m.mean_accuracy_reward) << "\tgrad_norm "
            << fmt("%.4g", m.grad_norm) << "\tdifficult "
            << fmt("%.3f", m.difficult_fraction) << "\n";
    };
  }
  const RunResult result = run_training(data.problems, data.difficulty, cfg,
                                        std::move(opts));
  out << "finished at step " << result.state.step << "; outputs in "
      << cmd.out.string() << "\n";
  return 0;
}

int run_eval(const EvalCommand& cmd, std::ostream& out) {
  const TrainConfig cfg = resolve_config(cmd.config, cmd.overrides);
  std::vector<std::pair<std::string, LoadedData>> sets;
  if (cmd.datasets.empty()) {
    sets.emplace_back("synthetic", load_data(std::nullopt, cfg));
  } else {
    for (const auto& p : cmd.datasets)
      sets.emplace_back(p.stem().string(), load_data(p, cfg));
  }
  nlohmann::ordered_json report;
  report["mode"] = to_string(cmd.mode);
  report["k"] = cmd.k;
  report["benchmarks"] = nlohmann::json::array();
  out << "benchmark\tmode\tk\tvalue\tcorrect\tsamples\n";
  for (const auto& [name, data] : sets) {
    std::ifstream in(cmd.policy, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open policy " + cmd.policy.string());
    const auto policy = load_policy(in, data.difficulty);
    const BenchmarkResult r =
        evaluate(*policy, data.problems, cmd.k, cmd.mode, cfg, name);
    out << r.name << "\t" << to_string(cmd.mode) << "\t" << cmd.k << "\t"
        << fmt("%.6f", r.value) << "\t" << r.correct << "\t" << r.samples
        << "\n";
    report["benchmarks"].push_back({{"name", r.name},
                                    {"value", r.value},
                                    {"problems", r.problems},
                                    {"samples", r.samples},
                                    {"correct", r.correct}});
  }
  if (cmd.report) {
    std::ofstream f(*cmd.report);
    if (!f) throw std::runtime_error("cannot write " + cmd.report->string());
    f << report.dump(2) << "\n";
  }
  return 0;
}

int run_verify(const VerifyCommand& cmd, std::ostream& out) {
  std::ifstream pred(cmd.predictions), gold(cmd.gold);
  if (!pred) throw std::runtime_error("cannot open " + cmd.predictions.string());
  if (!gold) throw std::runtime_error("cannot open " + cmd.gold.string());
  const auto lines = verify_predictions(pred, gold);
  std::size_t correct = 0;
  for (const auto& l : lines) {
    correct += l.correct;
    out << l.id << "\t" << (l.correct ? "correct" : "incorrect") << "\t"
        << l.extracted << "\n";
  }
  const double frac =
      lines.empty() ? 0.0 : static_cast<double>(correct) / lines.size();
  out << "accuracy\t" << correct << "/" << lines.size() << "\t"
      << fmt("%.6f", frac) << "\n";
  return 0;
}

int run_simulate(const SimulateCommand& cmd, std::ostream& out) {
  TrainConfig a = resolve_config(cmd.config_a, cmd.overrides);
  TrainConfig b = resolve_config(cmd.config_b, cmd.overrides);
  if (!cmd.config_a) a.algorithm = Algorithm::kGrpo;
  if (!cmd.config_b) b.algorithm = Algorithm::kGhpo;
  std::string name_a = cmd.config_a ? cmd.config_a->stem().string() : "GRPO";
  std::string name_b = cmd.config_b ? cmd.config_b->stem().string() : "GHPO";
  if (!cmd.names.empty()) {
    if (cmd.names.size() != 2)
      throw std::invalid_argument("--names expects exactly two names");
    name_a = cmd.names[0];
    name_b = cmd.names[1];
  }
  std::vector<std::uint64_t> seeds = cmd.seeds;
  if (seeds.empty())
    for (std::uint64_t s = 1; s <= 10; ++s) seeds.push_back(s);
  const CompareResult result =
      simulate_compare(a, b, seeds, name_a, name_b, cmd.out);
  write_summary_tsv(out, result);
  return 0;
}

int run_plot(const PlotCommand& cmd, std::ostream& out) {
  for (const auto& p : emit_plots(cmd.metrics, cmd.names, cmd.out))
    out << p.string() << "\n";
  return 0;
}

}  // namespace

TrainConfig desk_defaults() {
  TrainConfig cfg;
  cfg.total_steps = 200;
  cfg.lr0 = 0.02;
  cfg.sim_alpha = 2.0;
  cfg.sim_gamma = 8.0;
  cfg.synth_hard_fraction = 0.7;
  return cfg;
}

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("GHPO_OUT_DIR"); env && *env) return env;
  return "ghpo_out";
}

Command parse_args(int argc, const char* const* argv) {
  CLI::App app{"Guided hybrid policy optimization desk lab", "ghpo"};
  app.require_subcommand(1, 1);
  app.fallthrough(false);
  const std::string base = default_out_dir().string();

  TrainCommand train;
  std::string train_config, train_dataset, train_resume;
  train.out = base;
  auto* t = app.add_subcommand("train", "Train a policy with GRPO or GHPO");
  t->add_option("--config", train_config, "Config file (default: desk preset)")
      ->check(CLI::ExistingFile);
  t->add_option("--dataset", train_dataset,
                "JSON-lines dataset (default: synthetic)")
      ->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "Output directory")->capture_default_str();
  t->add_option("--resume", train_resume, "Checkpoint to resume from")
      ->check(CLI::ExistingFile);
  t->add_option("--set", train.overrides, "Config override key=value")
      ->allow_extra_args(false);
  t->add_flag("--quiet", train.quiet, "Only print the final line");

  EvalCommand eval;
  std::string eval_config, eval_policy, eval_report, eval_mode = "pass_at_1";
  std::vector<std::string> eval_datasets;
  auto* e = app.add_subcommand("eval", "Hint-free evaluation of a policy file");
  e->add_option("--policy", eval_policy, "Policy file (policy.bin)")
      ->required()
      ->check(CLI::ExistingFile);
  e->add_option("--config", eval_config, "Config file (default: desk preset)")
      ->check(CLI::ExistingFile);
  e->add_option("--dataset", eval_datasets,
                "Benchmark dataset, repeatable (default: synthetic)")
      ->check(CLI::ExistingFile)
      ->allow_extra_args(false);
  e->add_option("--k", eval.k, "Samples per problem for avg_at_k")
      ->check(CLI::PositiveNumber);
  e->add_option("--mode", eval_mode, "pass_at_1 or avg_at_k")
      ->check(CLI::IsMember({"pass_at_1", "avg_at_k"}));
  e->add_option("--report", eval_report, "Write a JSON report here");
  e->add_option("--set", eval.overrides, "Config override key=value")
      ->allow_extra_args(false);

  VerifyCommand verify;
  std::string pred_path, gold_path;
  auto* v = app.add_subcommand("verify", "Score predictions against gold answers");
  v->add_option("predictions", pred_path, "pred.jsonl with id, prediction")
      ->required()
      ->check(CLI::ExistingFile);
  v->add_option("gold", gold_path, "gold.jsonl with id, answer")
      ->required()
      ->check(CLI::ExistingFile);

  SimulateCommand sim;
  std::string sim_a, sim_b;
  sim.out = base + "/compare";
  auto* s = app.add_subcommand("simulate", "Compare two configs over seeds");
  s->add_option("--config-a", sim_a, "First config (default: desk GRPO)")
      ->check(CLI::ExistingFile);
  s->add_option("--config-b", sim_b, "Second config (default: desk GHPO)")
      ->check(CLI::ExistingFile);
  s->add_option("--seeds", sim.seeds, "Comma-separated seeds (default 1..10)")
      ->delimiter(',')
      ->allow_extra_args(false);
  s->add_option("--names", sim.names, "Two comma-separated run names")
      ->delimiter(',')
      ->allow_extra_args(false);
  s->add_option("--out", sim.out, "Output directory")->capture_default_str();
  s->add_option("--set", sim.overrides, "Override applied to both configs")
      ->allow_extra_args(false);

  PlotCommand plot;
  std::vector<std::string> plot_metrics;
  plot.out = base + "/plots";
  auto* p = app.add_subcommand("plot", "Write SVG curves from metrics.csv files");
  p->add_option("--metrics", plot_metrics, "metrics.csv, repeatable")
      ->required()
      ->check(CLI::ExistingFile)
      ->allow_extra_args(false);
  p->add_option("--name", plot.names, "Run name per --metrics, repeatable")
      ->allow_extra_args(false);
  p->add_option("--out", plot.out, "Output directory")->capture_default_str();

  auto help_text = [&] {
    const auto subs = app.get_subcommands();
    return subs.empty() ? app.help() : subs.front()->help();
  };
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(help_text());
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested(app.help("", CLI::AppFormatMode::All));
  } catch (const CLI::ParseError& err) {
    std::string msg = err.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    throw UsageError(msg, help_text());
  }

  if (t->parsed()) {
    train.config = opt_path(train_config);
    train.dataset = opt_path(train_dataset);
    train.resume = opt_path(train_resume);
    return train;
  }
  if (e->parsed()) {
    eval.config = opt_path(eval_config);
    eval.policy = eval_policy;
    for (const auto& d : eval_datasets) eval.datasets.emplace_back(d);
    eval.mode = eval_mode == "avg_at_k" ? EvalMode::kAvgAtK : EvalMode::kPassAt1;
    eval.report = opt_path(eval_report);
    return eval;
  }
  if (v->parsed()) {
    verify.predictions = pred_path;
    verify.gold = gold_path;
    return verify;
  }
  if (s->parsed()) {
    sim.config_a = opt_path(sim_a);
    sim.config_b = opt_path(sim_b);
    return sim;
  }
  for (const auto& m : plot_metrics) plot.metrics.emplace_back(m);
  if (!plot.names.empty() && plot.names.size() != plot.metrics.size())
    throw UsageError("--name must be given once per --metrics", p->help());
  return plot;
}

int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err) {
  Command cmd;
  try {
    cmd = parse_args(argc, argv);
  } catch (const HelpRequested& h) {
    out << h.what();
    return 0;
  } catch (const UsageError& u) {
    err << "error: " << u.what() << "\n" << u.usage();
    return 2;
  }
  try {
    return std::visit(
        [&](const auto& c) -> int {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, TrainCommand>) return run_train(c, out);
          if constexpr (std::is_same_v<T, EvalCommand>) return run_eval(c, out);
          if constexpr (std::is_same_v<T, VerifyCommand>) return run_verify(c, out);
          if constexpr (std::is_same_v<T, SimulateCommand>)
            return run_simulate(c, out);
          if constexpr (std::is_same_v<T, PlotCommand>) return run_plot(c, out);
        },
        cmd);
  } catch (const std::exception& ex) {
    std::string msg = ex.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << msg << "\n";
    return 1;
  }
}

// --- verify -----------------------------------------------------------------------

std::vector<VerifyLine> verify_predictions(std::istream& predictions,
                                           std::istream& gold) {
  auto read = [](std::istream& in, const char* field, const char* what) {
    std::vector<std::pair<std::string, std::string>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto fail = [&](const std::string& why) {
        return ParseError(std::string(what) + " line " + std::to_string(lineno) +
                              ": " + why,
                          lineno);
      };
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        throw fail("invalid JSON");
      }
      if (!j.is_object() || !j.contains("id") || !j.contains(field))
        throw fail(std::string("missing field 'id' or '") + field + "'");
      auto text = [&](const nlohmann::json& v) {
        return v.is_string() ? v.get<std::string>() : v.dump();
      };
      rows.emplace_back(text(j["id"]), text(j[field]));
    }
    return rows;
  };
  const auto preds = read(predictions, "prediction", "predictions");
  std::map<std::string, std::string> answers;
  for (auto& [id, ans] : read(gold, "answer", "gold"))
    if (!answers.emplace(id, ans).second)
      throw std::invalid_argument("gold: duplicate id '" + id + "'");

  std::vector<VerifyLine> out;
  for (const auto& [id, pred] : preds) {
    const auto it = answers.find(id);
    if (it == answers.end())
      throw std::invalid_argument("no gold answer for id '" + id + "'");
    VerifyLine line;
    line.id = id;
    line.extracted = extract_answer(pred).value_or(pred);
    line.correct = answers_equal(line.extracted, it->second);
    // Keep TSV columns intact.
    std::replace(line.extracted.begin(), line.extracted.end(), '\t', ' ');
    std::replace(line.extracted.begin(), line.extracted.end(), '\n', ' ');
    out.push_back(std::move(line));
  }
  return out;
}

// --- plots ------------------------------------------------------------------------

const std::vector<std::string>& plotted_metrics() {
  static const std::vector<std::string> names{
      "format_reward", "accuracy_reward", "mean_resp_len", "grad_norm",
      "difficult_fraction"};
  return names;
}

namespace {

double metric_value(const RunMetrics& m, const std::string& metric) {
  if (metric == "format_reward") return m.mean_format_reward;
  if (metric == "accuracy_reward") return m.mean_accuracy_reward;
  if (metric == "mean_resp_len") return m.mean_response_length;
  if (metric == "grad_norm") return m.grad_norm;
  if (metric == "difficult_fraction") return m.difficult_fraction;
  throw std::invalid_argument("unknown metric '" + metric + "'");
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

std::string render_svg(const std::string& metric,
                       std::span<const PlotSeries> series) {
  constexpr double W = 640, H = 400, L = 70, R = 20, T = 40, B = 50;
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& s : series)
    for (const auto& m : s.metrics) {
      const double y = metric_value(m, metric);
      if (!std::isfinite(y)) continue;
      x_lo = std::min(x_lo, static_cast<double>(m.step));
      x_hi = std::max(x_hi, static_cast<double>(m.step));
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  if (!std::isfinite(x_lo)) throw std::invalid_argument("no data rows");
  if (x_hi == x_lo) x_hi = x_lo + 1;
  if (y_hi == y_lo) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  auto px = [&](double x) { return L + (x - x_lo) / (x_hi - x_lo) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y_lo) / (y_hi - y_lo) * (H - T - B); };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
    << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" "
    << "font-family=\"sans-serif\" font-size=\"15\">" << xml_escape(metric)
    << "</text>\n";
  // Axes and ticks.
  o << "<g stroke=\"black\" stroke-width=\"1\">\n"
    << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R
    << "\" y2=\"" << H - B << "\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\""
    << H - B << "\"/>\n</g>\n";
  o << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x_lo + (x_hi - x_lo) * i / 4.0;
    const double yv = y_lo + (y_hi - y_lo) * i / 4.0;
    o << "<line x1=\"" << num(px(xv)) << "\" y1=\"" << H - B << "\" x2=\""
      << num(px(xv)) << "\" y2=\"" << H - B + 5 << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << num(px(xv)) << "\" y=\"" << H - B + 18
      << "\" text-anchor=\"middle\">" << tick_label(xv) << "</text>\n"
      << "<line x1=\"" << L - 5 << "\" y1=\"" << num(py(yv)) << "\" x2=\"" << L
      << "\" y2=\"" << num(py(yv)) << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << L - 8 << "\" y=\"" << num(py(yv) + 4)
      << "\" text-anchor=\"end\">" << tick_label(yv) << "</text>\n";
  }
  o << "</g>\n";
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"13\">step</text>\n"
    << "<text x=\"16\" y=\"" << (T + H - B) / 2
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
       "transform=\"rotate(-90 16 "
    << (T + H - B) / 2 << ")\">" << xml_escape(metric) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (const auto& m : series[k].metrics) {
      const double y = metric_value(m, metric);
      if (!std::isfinite(y)) continue;
      o << (first ? "" : " ") << num(px(static_cast<double>(m.step))) << ","
        << num(py(y));
      first = false;
    }
    o << "\"/>\n";
    const double ly = T + 8 + 16.0 * static_cast<double>(k);
    o << "<line x1=\"" << W - R - 120 << "\" y1=\"" << ly << "\" x2=\""
      << W - R - 100 << "\" y2=\"" << ly << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << W - R - 94 << "\" y=\"" << ly + 4
      << "\" font-family=\"sans-serif\" font-size=\"12\">"
      << xml_escape(series[k].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::filesystem::path> emit_plots(
    std::span<const PlotSeries> series, const std::filesystem::path& out_dir) {
  if (series.empty()) throw std::invalid_argument("no runs to plot");
  for (const auto& s : series)
    if (s.metrics.empty())
      throw std::invalid_argument("run '" + s.name + "': no data rows");
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& metric : plotted_metrics()) {
    const auto file = out_dir / (metric + ".svg");
    std::ofstream f(file, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + file.string());
    f << render_svg(metric, series);
    written.push_back(file);
  }
  return written;
}

std::vector<std::filesystem::path> emit_plots(
    std::span<const std::filesystem::path> metrics_csvs,
    std::span<const std::string> names, const std::filesystem::path& out_dir) {
  if (!names.empty() && names.size() != metrics_csvs.size())
    throw std::invalid_argument("one run name per metrics file required");
  std::vector<PlotSeries> series;
  for (std::size_t i = 0; i < metrics_csvs.size(); ++i) {
    PlotSeries s;
    const auto& p = metrics_csvs[i];
    if (!names.empty()) {
      s.name = names[i];
    } else {
      s.name = p.parent_path().filename().string();
      if (s.name.empty()) s.name = p.stem().string();
    }
    try {
      s.metrics = load_metrics_csv(p);
    } catch (const ParseError& e) {
      throw ParseError(p.string() + ": " + e.what(), e.line());
    }
    series.push_back(std::move(s));
  }
  return emit_plots(series, out_dir);
}

// --- comparison runs ----------------------------------------------------------------

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double standard_error(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  const double n = static_cast<double>(xs.size());
  return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

Trajectory trajectory(const RunSummary& run,
                      double (*field)(const RunMetrics&)) {
  Trajectory t;
  if (run.seeds.empty()) return t;
  std::size_t steps = run.seeds.front().metrics.size();
  for (const auto& s : run.seeds) steps = std::min(steps, s.metrics.size());
  std::vector<double> column(run.seeds.size());
  for (std::size_t i = 0; i < steps; ++i) {
    for (std::size_t k = 0; k < run.seeds.size(); ++k)
      column[k] = field(run.seeds[k].metrics[i]);
    t.mean.push_back(mean(column));
    t.stderr_.push_back(standard_error(column));
  }
  return t;
}

namespace {

SeedResult run_seed(const TrainConfig& base, std::uint64_t seed,
                    const SyntheticDataset& data) {
  TrainConfig cfg = base;
  cfg.seed = seed;
  RunResult r = run_training(data.problems, data.difficulty, cfg);
  SeedResult out;
  out.seed = seed;
  out.metrics = std::move(r.metrics);
  if (!out.metrics.empty()) out.final_accuracy = out.metrics.back().mean_accuracy_reward;
  std::vector<double> norms;
  for (const auto& m : out.metrics) norms.push_back(m.grad_norm);
  out.mean_grad_norm = mean(norms);
  out.eval_accuracy =
      evaluate(*r.state.policy, data.problems, 1, EvalMode::kPassAt1, cfg).value;
  return out;
}

double acc_of(const RunMetrics& m) { return m.mean_accuracy_reward; }
double norm_of(const RunMetrics& m) { return m.grad_norm; }
double diff_of(const RunMetrics& m) { return m.difficult_fraction; }

}  // namespace

CompareResult simulate_compare(const TrainConfig& cfg_a,
                               const TrainConfig& cfg_b,
                               std::span<const std::uint64_t> seeds,
                               const std::string& name_a,
                               const std::string& name_b,
                               const std::filesystem::path& out_dir) {
  if (seeds.size() < 2) throw std::invalid_argument("need ≥ 2 seeds");
  validate_config(cfg_a);
  validate_config(cfg_b);
  CompareResult result;
  result.a = {name_a, cfg_a, {}};
  result.b = {name_b, cfg_b, {}};
  for (std::uint64_t seed : seeds) {
    const SyntheticDataset data = make_synthetic_dataset(cfg_a, seed);
    result.a.seeds.push_back(run_seed(cfg_a, seed, data));
    result.b.seeds.push_back(run_seed(cfg_b, seed, data));
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream summary(out_dir / "summary.tsv");
    write_summary_tsv(summary, result);
    std::ofstream traj(out_dir / "trajectory.csv");
    write_trajectory_csv(traj, result);
    if (!summary || !traj)
      throw std::runtime_error("cannot write comparison under " +
                               out_dir.string());
  }
  return result;
}

void write_summary_tsv(std::ostream& out, const CompareResult& result) {
  out << "run\tseed\tfinal_accuracy\teval_pass_at_1\tmean_grad_norm\t"
         "mean_difficult_fraction\n";
  for (const RunSummary* run : {&result.a, &result.b}) {
    std::vector<double> acc, eval, norm, diff;
    for (const auto& s : run->seeds) {
      std::vector<double> d;
      for (const auto& m : s.metrics) d.push_back(m.difficult_fraction);
      acc.push_back(s.final_accuracy);
      eval.push_back(s.eval_accuracy);
      norm.push_back(s.mean_grad_norm);
      diff.push_back(mean(d));
      out << run->name << "\t" << s.seed << "\t" << fmt("%.6f", acc.back())
          << "\t" << fmt("%.6f", eval.back()) << "\t"
          << fmt("%.6f", norm.back()) << "\t" << fmt("%.6f", diff.back())
          << "\n";
    }
    out << run->name << "\tmean\t" << fmt("%.6f", mean(acc)) << "\t"
        << fmt("%.6f", mean(eval)) << "\t" << fmt("%.6f", mean(norm)) << "\t"
        << fmt("%.6f", mean(diff)) << "\n";
    out << run->name << "\tstderr\t" << fmt("%.6f", standard_error(acc)) << "\t"
        << fmt("%.6f", standard_error(eval)) << "\t"
        << fmt("%.6f", standard_error(norm)) << "\t"
        << fmt("%.6f", standard_error(diff)) << "\n";
  }
}

void write_trajectory_csv(std::ostream& out, const CompareResult& result) {
  out << "run,step,accuracy_mean,accuracy_stderr,grad_norm_mean,"
         "grad_norm_stderr,difficult_fraction_mean,difficult_fraction_stderr\n";
  for (const RunSummary* run : {&result.a, &result.b}) {
    const Trajectory acc = trajectory(*run, acc_of);
    const Trajectory norm = trajectory(*run, norm_of);
    const Trajectory diff = trajectory(*run, diff_of);
    const auto& steps = run->seeds.front().metrics;
    for (std::size_t i = 0; i < acc.mean.size(); ++i)
      out << run->name << "," << steps[i].step << "," << fmt("%.6g", acc.mean[i])
          << "," << fmt("%.6g", acc.stderr_[i]) << ","
          << fmt("%.6g", norm.mean[i]) << "," << fmt("%.6g", norm.stderr_[i])
          << "," << fmt("%.6g", diff.mean[i]) << ","
          << fmt("%.6g", diff.stderr_[i]) << "\n";
  }
}

}  // namespace ghpo::cli
