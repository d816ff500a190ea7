// SPDX-License-Identifier: Apache-2.0

#include <random>

#include "doctest.h"
#include "ghpo/controller.hpp"
#include "oracles.hpp"

using namespace ghpo;

namespace {

Problem sim_problem(const std::string& id) {
  return {id, "What is 3+4?", "Add three and four: 3+4=7. The answer is 7.", "7", std::nullopt};
}

std::shared_ptr<DifficultyTable> table_for(const std::string& id, double d) {
  return std::make_shared<DifficultyTable>(DifficultyTable{{id, d}});
}

TrainConfig sim_config() {
  TrainConfig cfg;
  cfg.cold_start_N = 0;
  cfg.G = 8;
  return cfg;
}

}  // namespace

TEST_CASE("difficulty detection over every reward pattern") {
  for (int g = 1; g <= 10; ++g)
    for (int mask = 0; mask < (1 << g); ++mask) {
      std::vector<int> acc(g);
      for (int i = 0; i < g; ++i) acc[i] = (mask >> i) & 1;
      CHECK(detect_difficult(acc) == (mask == 0));
    }
  CHECK_THROWS_AS(detect_difficult(std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("hint prefix length follows floor(omega * n) in scalar values") {
  const std::string ascii(100, 'x');
  CHECK(extract_hint(ascii, 0.25).size() == 25);
  CHECK(extract_hint(ascii, 0.0).empty());
  CHECK(extract_hint(ascii, 1.0) == ascii);
  CHECK(extract_hint("abc", 0.5) == "a");
  CHECK_THROWS_AS(extract_hint(ascii, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(extract_hint(ascii, -0.1), std::invalid_argument);

  std::mt19937_64 rng(11);
  const std::vector<std::string> pieces = {"a", " ", "7", "é", "∑", "😀", "\n"};
  for (int trial = 0; trial < 400; ++trial) {
    std::string s;
    const int len = std::uniform_int_distribution<int>(0, 120)(rng);
    for (int i = 0; i < len; ++i)
      s += pieces[std::uniform_int_distribution<std::size_t>(0, pieces.size() - 1)(rng)];
    const std::size_t n = oracle::scalar_count(s);
    for (std::size_t k = 0; k <= 1000; k += 7) {
      const std::string h = extract_hint(s, static_cast<double>(k) / 1000.0);
      CHECK(oracle::scalar_count(h) == oracle::hint_prefix_len(k, n));
      CHECK(s.compare(0, h.size(), h) == 0);
    }
  }
}

TEST_CASE("whitespace snapping never splits a word") {
  const std::string trace = "alpha beta gamma delta";
  CHECK(extract_hint(trace, 0.3, true) == "alpha beta");
  CHECK(extract_hint(trace, 0.25, true) == "alpha");
  CHECK(extract_hint(trace, 0.0, true).empty());
  CHECK(extract_hint(trace, 0.99, true) == trace);
}

TEST_CASE("hinted prompt layout") {
  const Problem p = sim_problem("q");
  const PromptSpec plain = render_prompt(p, std::nullopt);
  CHECK(plain.hint.empty());
  CHECK(plain.hint_ratio == 0.0);
  CHECK(plain.rendered_text.find(kGuidingSentence) == std::string::npos);
  CHECK(plain.rendered_text.find(p.statement) != std::string::npos);

  const std::string hint = extract_hint(p.solution_trace, 0.5);
  const PromptSpec hinted = render_prompt(p, hint, 0.5);
  CHECK(hinted.hint_ratio == 0.5);
  const std::string expected_user = p.statement + "\n" + std::string(kGuidingSentence) + "\n" + hint;
  CHECK(hinted.rendered_text.find(expected_user) != std::string::npos);
  CHECK(hinted.rendered_text.starts_with(std::string(kTemplateHead) + std::string(kSystemPrompt)));
  CHECK(hinted.rendered_text.ends_with(kTemplateTail));
  CHECK(kGuidingSentence ==
        "The following text is the beginning part of the answer, which you can refer to for solving the problem:");

  Problem bare = p;
  bare.solution_trace.clear();
  CHECK_THROWS_AS(render_prompt(bare, std::string("x"), 0.25), std::invalid_argument);
  CHECK_NOTHROW(render_prompt(bare, std::nullopt));
}

TEST_CASE("stage walk through the schedule") {
  const std::vector<double> sched = {0.25, 0.5, 0.75};
  HintState s;
  s = advance_stage(s, sched);
  CHECK(s == HintState{1, 0.25, false});
  s = advance_stage(s, sched);
  CHECK(s == HintState{2, 0.5, false});
  s = advance_stage(s, sched);
  CHECK(s.stage == 3);
  CHECK(s.omega == 0.75);
  CHECK(s.exhausted);
  CHECK_THROWS_AS(advance_stage(s, sched), std::logic_error);
  CHECK_THROWS_AS(advance_stage(HintState{}, std::vector<double>{}), std::logic_error);
}

TEST_CASE("cold-start gate boundaries") {
  CHECK(cold_start_gate(0, 20));
  CHECK(cold_start_gate(19, 20));
  CHECK_FALSE(cold_start_gate(20, 20));
  CHECK_FALSE(cold_start_gate(0, 0));
  CHECK_THROWS_AS(cold_start_gate(-1, 5), std::invalid_argument);
}

TEST_CASE("refinement stops at the first stage that helps") {
  const Problem p = sim_problem("q");
  TrainConfig cfg = sim_config();

  SUBCASE("an always-correct policy never escalates") {
    const SimPolicy pol({10.0, 2.0, 0.0}, table_for("q", -10.0));
    const auto out = refine_and_resample(p, pol, cfg, 5, 0);
    CHECK(out.detection_ran);
    CHECK_FALSE(out.was_difficult);
    CHECK(out.stages_used == 0);
    CHECK(out.resample_count == 0);
    CHECK(out.final_group.rollouts.front().prompt.hint.empty());
  }
  SUBCASE("an always-wrong policy walks the whole schedule") {
    const SimPolicy pol({-20.0, 2.0, 0.0}, table_for("q", 20.0));
    const auto out = refine_and_resample(p, pol, cfg, 5, 0);
    CHECK(out.was_difficult);
    CHECK(out.stages_used == 3);
    CHECK(out.resample_count == 3);
    CHECK(out.hint_state.exhausted);
    CHECK(out.final_group.rollouts.front().prompt.hint_ratio == 0.75);
    for (const auto& r : out.final_group.rewards) CHECK(r.accuracy == 0);
  }
  SUBCASE("a strong hint response succeeds at the first hinted stage") {
    const SimPolicy pol({-3.0, 1.0, 200.0}, table_for("q", 10.0));
    const auto out = refine_and_resample(p, pol, cfg, 5, 0);
    CHECK(out.was_difficult);
    CHECK(out.stages_used == 1);
    CHECK(out.resample_count == 1);
    CHECK_FALSE(out.hint_state.exhausted);
    CHECK(out.final_group.rollouts.front().prompt.hint_ratio == 0.25);
    CHECK(out.final_group.rollouts.front().prompt.hint == extract_hint(p.solution_trace, 0.25));
  }
  SUBCASE("cold start disables detection") {
    cfg.cold_start_N = 10;
    const SimPolicy pol({-20.0, 2.0, 0.0}, table_for("q", 20.0));
    const auto out = refine_and_resample(p, pol, cfg, 9, 0);
    CHECK_FALSE(out.detection_ran);
    CHECK_FALSE(out.was_difficult);
    CHECK(out.resample_count == 0);
    CHECK(refine_and_resample(p, pol, cfg, 10, 0).detection_ran);
  }
  SUBCASE("an empty schedule disables hinting") {
    cfg.omega_schedule.clear();
    const SimPolicy pol({-20.0, 2.0, 0.0}, table_for("q", 20.0));
    const auto out = refine_and_resample(p, pol, cfg, 50, 0);
    CHECK(out.resample_count == 0);
    CHECK(out.final_group.rollouts.front().prompt.hint.empty());
  }
}

TEST_CASE("refinement is deterministic and group sizes are constant") {
  const Problem p = sim_problem("q");
  const TrainConfig cfg = sim_config();
  const SimPolicy pol({0.0, 1.0, 4.0}, table_for("q", 2.0));
  for (std::size_t q = 0; q < 30; ++q) {
    const auto a = refine_and_resample(p, pol, cfg, 3, q);
    const auto b = refine_and_resample(p, pol, cfg, 3, q);
    CHECK(a.final_group.rewards == b.final_group.rewards);
    CHECK(a.hint_state == b.hint_state);
    CHECK(a.final_group.size() == static_cast<std::size_t>(cfg.G));
    CHECK(a.resample_count == a.stages_used);
  }
}

TEST_CASE("across-epochs escalation advances one stage per visit") {
  const Problem p = sim_problem("q");
  TrainConfig cfg = sim_config();
  cfg.escalation_mode = EscalationMode::kAcrossEpochs;
  const SimPolicy pol({-20.0, 2.0, 0.0}, table_for("q", 20.0));
  HintState persisted;
  for (int visit = 1; visit <= 3; ++visit) {
    const auto out = refine_and_resample(p, pol, cfg, 10 * visit, 0, persisted);
    CHECK(out.hint_state.stage == visit);
    CHECK(out.resample_count == 1);
    persisted = out.hint_state;
  }
  CHECK(persisted.exhausted);
  const auto last = refine_and_resample(p, pol, cfg, 40, 0, persisted);
  CHECK(last.resample_count == 0);
  CHECK(last.hint_state.stage == 3);
  CHECK(last.final_group.rollouts.front().prompt.hint_ratio == 0.75);

  HintState beyond{7, 0.9, true};
  CHECK_THROWS_AS(refine_and_resample(p, pol, cfg, 50, 0, beyond), std::invalid_argument);
}
