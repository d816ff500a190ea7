// SPDX-License-Identifier: Apache-2.0

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <sstream>

#include "ghpo/cli.hpp"
#include "ghpo/controller.hpp"
#include "ghpo/grpo.hpp"
#include "ghpo/trainer.hpp"
#include "ghpo/verifier.hpp"

namespace py = pybind11;
using namespace ghpo;

namespace {

py::dict metrics_dict(const RunMetrics& m) {
  py::dict d;
  d["step"] = m.step;
  d["lr"] = m.lr;
  d["format_reward"] = m.mean_format_reward;
  d["accuracy_reward"] = m.mean_accuracy_reward;
  d["mean_resp_len"] = m.mean_response_length;
  d["grad_norm"] = m.grad_norm;
  d["difficult_fraction"] = m.difficult_fraction;
  d["resample_count"] = m.resample_count;
  d["zero_accuracy_fraction"] = m.zero_accuracy_fraction;
  d["skipped_rollouts"] = m.skipped_rollouts;
  d["detection_active"] = m.detection_active;
  return d;
}

py::list metrics_list(const std::vector<RunMetrics>& ms) {
  py::list out;
  for (const auto& m : ms) out.append(metrics_dict(m));
  return out;
}

std::vector<double> params_of(const Policy& p) {
  return {p.parameters().begin(), p.parameters().end()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Group-relative policy optimization with hint-guided sampling";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_static("desk", &cli::desk_defaults, "Scaled-down defaults used by the CLI")
      .def_static("load", [](const std::filesystem::path& p) { return load_config(p); })
      .def_static("parse",
                  [](const std::string& text) {
                    std::istringstream in(text);
                    return parse_config(in);
                  })
      .def("set", [](TrainConfig& c, const std::string& k, const std::string& v) {
        set_config_value(c, k, v);
      })
      .def("validate", [](const TrainConfig& c) { validate_config(c); })
      .def("to_text",
           [](const TrainConfig& c) {
             std::ostringstream out;
             write_config(out, c);
             return out.str();
           })
      .def_property_readonly("algorithm", [](const TrainConfig& c) { return to_string(c.algorithm); })
      .def_property_readonly("policy", [](const TrainConfig& c) { return to_string(c.policy); })
      .def_property_readonly("escalation_mode",
                             [](const TrainConfig& c) { return to_string(c.escalation_mode); })
      .def_readwrite("G", &TrainConfig::G)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("grad_accum_steps", &TrainConfig::grad_accum_steps)
      .def_readwrite("lr0", &TrainConfig::lr0)
      .def_readwrite("warmup_frac", &TrainConfig::warmup_frac)
      .def_readwrite("total_steps", &TrainConfig::total_steps)
      .def_readwrite("temperature", &TrainConfig::temperature)
      .def_readwrite("max_tokens", &TrainConfig::max_tokens)
      .def_readwrite("eps_norm", &TrainConfig::eps_norm)
      .def_readwrite("eps_clip", &TrainConfig::eps_clip)
      .def_readwrite("beta_kl", &TrainConfig::beta_kl)
      .def_readwrite("w_acc", &TrainConfig::w_acc)
      .def_readwrite("w_fmt", &TrainConfig::w_fmt)
      .def_readwrite("omega_schedule", &TrainConfig::omega_schedule)
      .def_readwrite("cold_start_N", &TrainConfig::cold_start_N)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("threads", &TrainConfig::threads)
      .def_readwrite("checkpoint_every", &TrainConfig::checkpoint_every)
      .def_readwrite("sim_capability", &TrainConfig::sim_capability)
      .def_readwrite("sim_alpha", &TrainConfig::sim_alpha)
      .def_readwrite("sim_gamma", &TrainConfig::sim_gamma)
      .def_readwrite("synth_problems", &TrainConfig::synth_problems)
      .def_readwrite("synth_hard_fraction", &TrainConfig::synth_hard_fraction)
      .def("__repr__", [](const TrainConfig& c) {
        return "<TrainConfig " + to_string(c.algorithm) + " " + to_string(c.policy) +
               " steps=" + std::to_string(c.total_steps) + ">";
      });

  py::class_<Problem>(m, "Problem")
      .def(py::init([](std::string id, std::string statement, std::string trace, std::string answer) {
             return Problem{std::move(id), std::move(statement), std::move(trace), std::move(answer),
                            std::nullopt};
           }),
           py::arg("id"), py::arg("statement"), py::arg("solution_trace"), py::arg("answer"))
      .def_readwrite("id", &Problem::id)
      .def_readwrite("statement", &Problem::statement)
      .def_readwrite("solution_trace", &Problem::solution_trace)
      .def_readwrite("answer", &Problem::answer)
      .def_readwrite("difficulty_level", &Problem::difficulty_level);

  m.def("load_dataset", [](const std::filesystem::path& p) { return load_dataset(p); });

  // Advantages and objective pieces.
  m.def("group_advantages",
        [](const std::vector<double>& r, double eps) { return group_advantages(r, eps).advantages; },
        py::arg("rewards"), py::arg("eps_norm") = 1e-4);
  m.def("prob_ratio", [](const std::vector<double>& a, const std::vector<double>& b) {
    return prob_ratio(a, b);
  });
  m.def("clipped_token_term", &clipped_token_term, py::arg("ratio"), py::arg("advantage"),
        py::arg("eps_clip") = 0.2);
  m.def("categorical_kl", [](const std::vector<double>& p, const std::vector<double>& q) {
    return categorical_kl(p, q);
  });
  m.def("cosine_lr", &cosine_lr, py::arg("step"), py::arg("config"));

  // Verifier.
  m.def("extract_answer", [](const std::string& s) { return extract_answer(s); });
  m.def("answers_equal", [](const std::string& a, const std::string& b) { return answers_equal(a, b); });
  m.def("check_format", [](const std::string& s) { return check_format(s); });
  m.def(
      "score",
      [](const std::string& response, const Problem& p, const TrainConfig& cfg) {
        const auto r = score(response, p, cfg);
        return py::make_tuple(r.accuracy, r.format, r.combined);
      },
      py::arg("response"), py::arg("problem"), py::arg("config") = TrainConfig{},
      "Returns (accuracy, format, combined).");

  // Controller.
  m.def("detect_difficult", [](const std::vector<int>& acc) { return detect_difficult(acc); });
  m.def("extract_hint", &extract_hint, py::arg("solution_trace"), py::arg("omega"),
        py::arg("snap_to_whitespace") = false);
  m.def(
      "render_prompt",
      [](const Problem& p, std::optional<std::string> hint, double ratio) {
        return render_prompt(p, hint, ratio).rendered_text;
      },
      py::arg("problem"), py::arg("hint") = std::nullopt, py::arg("hint_ratio") = 0.0);
  m.def("cold_start_gate", &cold_start_gate);
  m.attr("GUIDING_SENTENCE") = std::string(kGuidingSentence);

  // Runs.
  m.def(
      "train",
      [](const TrainConfig& cfg, std::optional<std::filesystem::path> out_dir,
         std::optional<std::vector<Problem>> dataset) {
        validate_config(cfg);
        std::vector<Problem> problems;
        std::shared_ptr<const DifficultyTable> difficulty;
        if (dataset) {
          problems = std::move(*dataset);
          difficulty = difficulty_from_metadata(problems);
        } else {
          auto data = make_synthetic_dataset(cfg, cfg.seed);
          problems = std::move(data.problems);
          difficulty = data.difficulty;
        }
        RunOptions opts;
        if (out_dir) opts.out_dir = *out_dir;
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_training(problems, difficulty, cfg, std::move(opts));
        }
        py::dict d;
        d["metrics"] = metrics_list(r.metrics);
        d["parameters"] = params_of(*r.state.policy);
        return d;
      },
      py::arg("config"), py::arg("out_dir") = std::nullopt, py::arg("dataset") = std::nullopt,
      "Runs training and returns {'metrics': [...], 'parameters': [...]}.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& policy_file, const TrainConfig& cfg, int k,
         const std::string& mode, std::optional<std::vector<Problem>> dataset) {
        std::vector<Problem> problems;
        std::shared_ptr<const DifficultyTable> difficulty;
        if (dataset) {
          problems = std::move(*dataset);
          difficulty = difficulty_from_metadata(problems);
        } else {
          auto data = make_synthetic_dataset(cfg, cfg.seed);
          problems = std::move(data.problems);
          difficulty = data.difficulty;
        }
        std::ifstream in(policy_file, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + policy_file.string());
        const auto policy = load_policy(in, difficulty);
        EvalMode em;
        if (mode == "pass_at_1")
          em = EvalMode::kPassAt1;
        else if (mode == "avg_at_k")
          em = EvalMode::kAvgAtK;
        else
          throw py::value_error("mode must be 'pass_at_1' or 'avg_at_k'");
        return evaluate(*policy, problems, k, em, cfg).value;
      },
      py::arg("policy_file"), py::arg("config"), py::arg("k") = 1, py::arg("mode") = "pass_at_1",
      py::arg("dataset") = std::nullopt);

  m.def(
      "simulate_compare",
      [](const TrainConfig& a, const TrainConfig& b, const std::vector<std::uint64_t>& seeds) {
        cli::CompareResult r;
        {
          py::gil_scoped_release release;
          r = cli::simulate_compare(a, b, seeds, "a", "b");
        }
        auto runs = [](const cli::RunSummary& s) {
          py::list out;
          for (const auto& seed : s.seeds) {
            py::dict d;
            d["seed"] = seed.seed;
            d["metrics"] = metrics_list(seed.metrics);
            d["eval_accuracy"] = seed.eval_accuracy;
            d["mean_grad_norm"] = seed.mean_grad_norm;
            out.append(d);
          }
          return out;
        };
        return py::make_tuple(runs(r.a), runs(r.b));
      },
      py::arg("config_a"), py::arg("config_b"), py::arg("seeds"));

  m.def(
      "main",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "ghpo");
        std::vector<const char*> argv;
        for (const auto& s : args) argv.push_back(s.c_str());
        std::ostringstream out, err;
        const int rc = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(rc, out.str(), err.str());
      },
      "Runs the command line with the given arguments; returns (exit code, stdout, stderr).");
}
