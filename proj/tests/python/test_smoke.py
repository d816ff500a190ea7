# SPDX-License-Identifier: Apache-2.0
import math

import pytest

import ghpo


def test_advantages_example():
    adv = ghpo.group_advantages([1, 0, 0, 0], 1e-4)
    assert adv[0] == pytest.approx(1.7317, abs=1e-4)
    assert all(a == pytest.approx(-0.5772, abs=1e-4) for a in adv[1:])
    assert ghpo.group_advantages([2, 2, 2]) == [0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        ghpo.group_advantages([1.0])


def test_objective_pieces():
    assert ghpo.clipped_token_term(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert ghpo.clipped_token_term(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    assert ghpo.categorical_kl([0.9, 0.1], [0.5, 0.5]) == pytest.approx(0.3681, abs=1e-4)
    assert ghpo.prob_ratio([math.log(2.0)], [0.0])[0] == pytest.approx(2.0)


def test_verifier():
    resp = "<think>ok</think><answer>\\boxed{\\frac{1}{3600}}</answer>"
    assert ghpo.extract_answer(resp) == "\\frac{1}{3600}"
    assert ghpo.answers_equal("\\frac{1}{3600}", "1/3600")
    assert not ghpo.answers_equal("1/210", "1/3600")
    assert ghpo.check_format(resp) == 1
    assert ghpo.check_format("no tags") == 0
    p = ghpo.Problem("p", "2+2=?", "2+2=4", "4")
    assert ghpo.score("<think>x</think><answer>\\boxed{4}</answer>", p) == (1, 1, 3.0)


def test_controller():
    assert ghpo.detect_difficult([0, 0, 0])
    assert not ghpo.detect_difficult([0, 1, 0])
    assert ghpo.extract_hint("abcdefgh", 0.25) == "ab"
    p = ghpo.Problem("p", "2+2=?", "2+2=4 so 4", "4")
    text = ghpo.render_prompt(p, ghpo.extract_hint(p.solution_trace, 0.5), 0.5)
    assert ghpo.GUIDING_SENTENCE in text
    assert ghpo.cold_start_gate(19, 20) and not ghpo.cold_start_gate(20, 20)


def test_config_and_schedule():
    cfg = ghpo.TrainConfig.desk()
    cfg.validate()
    cfg.set("algorithm", "grpo")
    assert cfg.algorithm == "grpo"
    with pytest.raises(ValueError):
        cfg.set("no_such_key", "1")
    again = ghpo.TrainConfig.parse(cfg.to_text())
    assert again.to_text() == cfg.to_text()
    assert ghpo.cosine_lr(0, cfg) == 0.0
    assert ghpo.cosine_lr(cfg.total_steps, cfg) < 1e-18


def test_train_and_evaluate(tmp_path):
    cfg = ghpo.TrainConfig.desk()
    cfg.total_steps = 12
    cfg.synth_problems = 32
    out = ghpo.train(cfg, tmp_path)
    assert len(out["metrics"]) == 12
    assert all(0.0 <= m["accuracy_reward"] <= 1.0 for m in out["metrics"])
    assert (tmp_path / "metrics.csv").exists()
    again = ghpo.train(cfg)
    assert again["metrics"] == out["metrics"]
    value = ghpo.evaluate(tmp_path / "policy.bin", cfg, k=4, mode="avg_at_k")
    assert 0.0 <= value <= 1.0


def test_cli_entry(tmp_path):
    rc, out, _ = ghpo.main(["--help"])
    assert rc == 0 and "train" in out
    rc, _, err = ghpo.main(["frobnicate"])
    assert rc == 2 and err.startswith("error:")
