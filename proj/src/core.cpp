// SPDX-License-Identifier: Apache-2.0

#include "ghpo/core.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace ghpo {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& key) {
  if (text == "inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    double v = std::stod(text, &pos);
    if (pos == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument(key + ": expected a number, got '" + text + "'");
}

std::int64_t parse_int(const std::string& text, const std::string& key) {
  if (text == "inf") return std::numeric_limits<std::int64_t>::max();
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw std::invalid_argument(key + ": expected an integer, got '" + text +
                                "'");
  return v;
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument(key + ": expected true/false, got '" + text +
                              "'");
}

std::vector<double> parse_list(const std::string& text,
                               const std::string& key) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item), key));
  return out;
}

std::string format_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += format_double(values[i]);
  }
  return out;
}

std::string format_int(std::int64_t v) {
  if (v == std::numeric_limits<std::int64_t>::max()) return "inf";
  return std::to_string(v);
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field int_field(T TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& v, const std::string& k) {
            const auto parsed = parse_int(v, k);
            if (parsed < std::numeric_limits<T>::min() ||
                parsed > std::numeric_limits<T>::max())
              throw std::invalid_argument(k + ": value out of range");
            c.*member = static_cast<T>(parsed);
          },
          [member](const TrainConfig& c) {
            return format_int(static_cast<std::int64_t>(c.*member));
          }};
}

Field double_field(double TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& v, const std::string& k) {
            c.*member = parse_double(v, k);
          },
          [member](const TrainConfig& c) { return format_double(c.*member); }};
}

Field bool_field(bool TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& v, const std::string& k) {
            c.*member = parse_bool(v, k);
          },
          [member](const TrainConfig& c) {
            return std::string(c.*member ? "true" : "false");
          }};
}

const std::map<std::string, Field>& field_table() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["G"] = int_field(&TrainConfig::G);
    t["batch_size"] = int_field(&TrainConfig::batch_size);
    t["grad_accum_steps"] = int_field(&TrainConfig::grad_accum_steps);
    t["lr0"] = double_field(&TrainConfig::lr0);
    t["warmup_frac"] = double_field(&TrainConfig::warmup_frac);
    t["total_steps"] = int_field(&TrainConfig::total_steps);
    t["temperature"] = double_field(&TrainConfig::temperature);
    t["max_tokens"] = int_field(&TrainConfig::max_tokens);
    t["eps_norm"] = double_field(&TrainConfig::eps_norm);
    t["eps_clip"] = double_field(&TrainConfig::eps_clip);
    t["beta_kl"] = double_field(&TrainConfig::beta_kl);
    t["w_acc"] = double_field(&TrainConfig::w_acc);
    t["w_fmt"] = double_field(&TrainConfig::w_fmt);
    t["omega_schedule"] = {
        [](TrainConfig& c, const std::string& v, const std::string& k) {
          c.omega_schedule = parse_list(v, k);
        },
        [](const TrainConfig& c) { return format_list(c.omega_schedule); }};
    t["cold_start_N"] = int_field(&TrainConfig::cold_start_N);
    t["escalation_mode"] = {
        [](TrainConfig& c, const std::string& v, const std::string& k) {
          if (v == "within_step")
            c.escalation_mode = EscalationMode::kWithinStep;
          else if (v == "across_epochs")
            c.escalation_mode = EscalationMode::kAcrossEpochs;
          else
            throw std::invalid_argument(k + ": expected within_step or "
                                            "across_epochs, got '" + v + "'");
        },
        [](const TrainConfig& c) { return to_string(c.escalation_mode); }};
    t["seed"] = {
        [](TrainConfig& c, const std::string& v, const std::string& k) {
          std::uint64_t s = 0;
          auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
          if (ec != std::errc() || ptr != v.data() + v.size())
            throw std::invalid_argument(k + ": expected an unsigned integer");
          c.seed = s;
        },
        [](const TrainConfig& c) { return std::to_string(c.seed); }};
    t["algorithm"] = {
        [](TrainConfig& c, const std::string& v, const std::string& k) {
          if (v == "grpo")
            c.algorithm = Algorithm::kGrpo;
          else if (v == "ghpo")
            c.algorithm = Algorithm::kGhpo;
          else
            throw std::invalid_argument(k + ": expected grpo or ghpo");
        },
        [](const TrainConfig& c) { return to_string(c.algorithm); }};
    t["policy"] = {
        [](TrainConfig& c, const std::string& v, const std::string& k) {
          if (v == "sim")
            c.policy = PolicyKind::kSim;
          else if (v == "softmax")
            c.policy = PolicyKind::kSoftmax;
          else
            throw std::invalid_argument(k + ": expected sim or softmax");
        },
        [](const TrainConfig& c) { return to_string(c.policy); }};
    t["hint_snap_whitespace"] = bool_field(&TrainConfig::hint_snap_whitespace);
    t["weight_decay"] = double_field(&TrainConfig::weight_decay);
    t["adam_beta1"] = double_field(&TrainConfig::adam_beta1);
    t["adam_beta2"] = double_field(&TrainConfig::adam_beta2);
    t["adam_eps"] = double_field(&TrainConfig::adam_eps);
    t["checkpoint_every"] = int_field(&TrainConfig::checkpoint_every);
    t["threads"] = int_field(&TrainConfig::threads);
    t["sim_capability"] = double_field(&TrainConfig::sim_capability);
    t["sim_alpha"] = double_field(&TrainConfig::sim_alpha);
    t["sim_gamma"] = double_field(&TrainConfig::sim_gamma);
    t["softmax_buckets"] = int_field(&TrainConfig::softmax_buckets);
    t["softmax_prior"] = double_field(&TrainConfig::softmax_prior);
    t["synth_problems"] = int_field(&TrainConfig::synth_problems);
    t["synth_hard_fraction"] = double_field(&TrainConfig::synth_hard_fraction);
    t["synth_easy_min"] = double_field(&TrainConfig::synth_easy_min);
    t["synth_easy_max"] = double_field(&TrainConfig::synth_easy_max);
    t["synth_hard_min"] = double_field(&TrainConfig::synth_hard_min);
    t["synth_hard_max"] = double_field(&TrainConfig::synth_hard_max);
    return t;
  }();
  return table;
}

}  // namespace

std::string to_string(EscalationMode mode) {
  return mode == EscalationMode::kWithinStep ? "within_step" : "across_epochs";
}
std::string to_string(Algorithm algo) {
  return algo == Algorithm::kGrpo ? "grpo" : "ghpo";
}
std::string to_string(PolicyKind kind) {
  return kind == PolicyKind::kSim ? "sim" : "softmax";
}

const TrainConfig& validate_config(const TrainConfig& cfg) {
  std::vector<std::string> errors;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };

  require(cfg.G >= 2, "G: group size must be ≥ 2");
  require(cfg.batch_size >= 1, "batch_size: must be ≥ 1");
  require(cfg.grad_accum_steps >= 1, "grad_accum_steps: must be ≥ 1");
  require(std::isfinite(cfg.lr0) && cfg.lr0 >= 0, "lr0: must be finite and ≥ 0");
  require(cfg.warmup_frac >= 0 && cfg.warmup_frac <= 1,
          "warmup_frac: must lie in [0,1]");
  require(cfg.total_steps >= 0, "total_steps: must be ≥ 0");
  require(std::isfinite(cfg.temperature) && cfg.temperature > 0,
          "temperature: must be > 0");
  require(cfg.max_tokens >= 0, "max_tokens: must be ≥ 0");
  require(std::isfinite(cfg.eps_norm) && cfg.eps_norm > 0,
          "eps_norm: must be > 0");
  require(cfg.eps_clip > 0 && cfg.eps_clip < 1, "eps_clip: must lie in (0,1)");
  require(std::isfinite(cfg.beta_kl) && cfg.beta_kl >= 0,
          "beta_kl: must be ≥ 0");
  require(std::isfinite(cfg.w_acc) && cfg.w_acc >= 0, "w_acc: must be ≥ 0");
  require(std::isfinite(cfg.w_fmt) && cfg.w_fmt >= 0, "w_fmt: must be ≥ 0");

  const auto& sched = cfg.omega_schedule;
  require(sched.size() <= 3, "omega_schedule: at most 3 stages");
  for (double w : sched)
    require(w > 0 && w <= 1, "omega_schedule: each entry must lie in (0,1]");
  bool increasing = true;
  for (std::size_t i = 1; i < sched.size(); ++i)
    if (!(sched[i] > sched[i - 1])) increasing = false;
  require(increasing, "omega_schedule: schedule not increasing");

  require(cfg.cold_start_N >= 0, "cold_start_N: must be ≥ 0");
  require(cfg.weight_decay >= 0, "weight_decay: must be ≥ 0");
  require(cfg.adam_beta1 >= 0 && cfg.adam_beta1 < 1,
          "adam_beta1: must lie in [0,1)");
  require(cfg.adam_beta2 >= 0 && cfg.adam_beta2 < 1,
          "adam_beta2: must lie in [0,1)");
  require(cfg.adam_eps > 0, "adam_eps: must be > 0");
  require(cfg.checkpoint_every >= 0, "checkpoint_every: must be ≥ 0");
  require(cfg.threads >= 1, "threads: must be ≥ 1");
  require(cfg.sim_alpha > 0, "sim_alpha: must be > 0");
  require(cfg.sim_gamma >= 0, "sim_gamma: must be ≥ 0");
  require(std::isfinite(cfg.sim_capability), "sim_capability: must be finite");
  require(cfg.softmax_buckets >= 1, "softmax_buckets: must be ≥ 1");
  require(std::isfinite(cfg.softmax_prior), "softmax_prior: must be finite");
  require(cfg.synth_problems >= 1, "synth_problems: must be ≥ 1");
  require(cfg.synth_hard_fraction >= 0 && cfg.synth_hard_fraction <= 1,
          "synth_hard_fraction: must lie in [0,1]");
  require(cfg.synth_easy_min <= cfg.synth_easy_max,
          "synth_easy_min: must not exceed synth_easy_max");
  require(cfg.synth_hard_min <= cfg.synth_hard_max,
          "synth_hard_min: must not exceed synth_hard_max");

  if (!errors.empty()) {
    std::string msg = "invalid config: ";
    for (std::size_t i = 0; i < errors.size(); ++i) {
      if (i) msg += "; ";
      msg += errors[i];
    }
    throw ConfigError(msg);
  }
  return cfg;
}

TrainConfig parse_config(std::istream& in) {
  TrainConfig cfg;
  const auto& table = field_table();
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) +
                           ": expected 'key = value'",
                       lineno);
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end())
      throw ParseError("config line " + std::to_string(lineno) +
                           ": unknown key '" + key + "'",
                       lineno);
    if (!seen.insert(key).second)
      throw ParseError("config line " + std::to_string(lineno) +
                           ": duplicate key '" + key + "'",
                       lineno);
    try {
      it->second.set(cfg, value, key);
    } catch (const std::invalid_argument& e) {
      throw ParseError("config line " + std::to_string(lineno) + ": " +
                           e.what(),
                       lineno);
    }
  }
  return cfg;
}

void set_config_value(TrainConfig& cfg, const std::string& key,
                      const std::string& value) {
  const auto& table = field_table();
  const auto it = table.find(key);
  if (it == table.end())
    throw std::invalid_argument("unknown config key '" + key + "'");
  it->second.set(cfg, trim(value), key);
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return parse_config(in);
}

void write_config(std::ostream& out, const TrainConfig& cfg) {
  for (const auto& [key, field] : field_table())
    out << key << " = " << field.get(cfg) << "\n";
}

std::vector<Problem> parse_dataset(std::istream& in) {
  using nlohmann::json;
  std::vector<Problem> problems;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError("dataset line " + std::to_string(lineno) + ": " + msg,
                      lineno);
  };
  auto text_field = [&](const json& rec, const char* name) {
    const auto it = rec.find(name);
    if (it == rec.end()) throw fail(std::string("missing field '") + name + "'");
    if (!it->is_string())
      throw fail(std::string("field '") + name + "' must be a string");
    auto value = it->get<std::string>();
    if (value.empty())
      throw fail(std::string("field '") + name + "' must be non-empty");
    return value;
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw fail(std::string("parse error: ") + e.what());
    }
    if (!rec.is_object()) throw fail("record must be a JSON object");

    Problem p;
    p.id = text_field(rec, "id");
    p.statement = text_field(rec, "statement");
    p.solution_trace = text_field(rec, "solution");
    p.answer = text_field(rec, "answer");
    if (const auto it = rec.find("difficulty_level");
        it != rec.end() && !it->is_null()) {
      if (!it->is_number_integer())
        throw fail("field 'difficulty_level' must be an integer");
      p.difficulty_level = it->get<int>();
    }
    if (!ids.insert(p.id).second) throw fail("duplicate id '" + p.id + "'");
    problems.push_back(std::move(p));
  }
  return problems;
}

std::vector<Problem> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  return parse_dataset(in);
}

void write_dataset(std::ostream& out, const std::vector<Problem>& problems) {
  for (const auto& p : problems) {
    nlohmann::ordered_json rec;
    rec["id"] = p.id;
    rec["statement"] = p.statement;
    rec["solution"] = p.solution_trace;
    rec["answer"] = p.answer;
    if (p.difficulty_level) rec["difficulty_level"] = *p.difficulty_level;
    out << rec.dump() << "\n";
  }
}

void save_dataset(const std::filesystem::path& path,
                  const std::vector<Problem>& problems) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  write_dataset(out, problems);
}

}  // namespace ghpo
