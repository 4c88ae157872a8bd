from __future__ import annotations

import numpy as np
import pytest

from warmstart_lab.data_core import Configuration
from warmstart_lab.errors import FeedbackTimeout
from warmstart_lab.eval_metrics import ScoredWarmStarts, pool_optimum
from warmstart_lab.hdkp import (
    HdkpConfig,
    ScriptedFeedback,
    Session,
    SimulatedExpert,
    apply_bootstrap_review,
    bootstrap_beliefs,
    finalize,
    run_iteration,
    run_session,
    select_confusing_failure,
    simulated_expert_reply,
)
from warmstart_lab.llm_gateway import (
    Gateway,
    MockEntry,
    MockProvider,
    MockScript,
    fenced_json,
)

from conftest import default_provider


def gateway_proposing(statements):
    return Gateway(
        MockProvider(
            MockScript(
                [
                    MockEntry(tag="hdkp.bootstrap", text=fenced_json(statements)),
                    MockEntry(behavior=__import__("warmstart_lab.llm_gateway", fromlist=["generation_behavior"]).generation_behavior),
                ]
            )
        )
    )


def fresh_session(T=10, T_min=5):
    return Session(id="s-test", dataset_name="toy_gear", T=T, T_min=T_min)


# -- bootstrap review ---------------------------------------------------------------

def test_review_marks_one_invalid():
    kept, mods = apply_bootstrap_review(["a", "b", "c"], "Invalid: 2")
    assert kept == ["a", "c"]
    assert mods == []


def test_review_modify_appends_expert_statement():
    kept, mods = apply_bootstrap_review(["a"], "Modify: X should be <= 8")
    assert kept == ["a"]
    assert mods == ["X should be <= 8"]


def test_bootstrap_beliefs_filtering(toy_gear):
    gateway = gateway_proposing(["s1", "s2", "s3"])
    session = fresh_session()
    feedback = ScriptedFeedback([], bootstrap_reply="Invalid: 2")
    bootstrap_beliefs(session, toy_gear, gateway, feedback)
    llm = [s for s in session.belief.statements if s.provenance == "llm"]
    expert = [s for s in session.belief.statements if s.provenance == "expert"]
    assert [s.text for s in llm] == ["s1", "s3"]
    assert expert == []
    assert session.t == 1


def test_bootstrap_with_modify(toy_gear):
    gateway = gateway_proposing(["s1"])
    session = fresh_session()
    feedback = ScriptedFeedback([], bootstrap_reply="Valid: all\nModify: threads should be higher")
    bootstrap_beliefs(session, toy_gear, gateway, feedback)
    assert session.belief.statements[-1].provenance == "expert"
    assert "higher" in session.belief.statements[-1].text


def test_bootstrap_without_corpus_still_proposes(toy_gear):
    session = fresh_session()
    gateway = Gateway(default_provider())
    bootstrap_beliefs(session, toy_gear, gateway, ScriptedFeedback([]), docs_excerpt="")
    assert len(session.belief.statements) >= 1
    assert all(s.provenance == "llm" for s in session.belief.statements)


# -- confusing failure selection -----------------------------------------------------

def scored_fixture(values):
    configs = [Configuration({"x": float(i)}) for i in range(len(values))]
    return ScoredWarmStarts(
        configs=configs,
        matched_indices=list(range(len(values))),
        matched_rows=[None] * len(values),
        chebyshev_values=list(values),
        min_chebyshev=min(values),
    )


def test_uniform_scores_fall_back_to_worst():
    scored = scored_fixture([0.3, 0.9, 0.5])
    assert select_confusing_failure(scored, [None, None, None]) == 1


def test_product_selection():
    scored = scored_fixture([0.8, 0.9])
    # A: 0.9 * 0.8 = 0.72 beats B: 0.2 * 0.9 = 0.18
    assert select_confusing_failure(scored, [0.9, 0.2]) == 0


def test_single_candidate_selected():
    scored = scored_fixture([0.4])
    assert select_confusing_failure(scored, [0.7]) == 0


# -- iterations ------------------------------------------------------------------------

def run_ready_session(toy_gear, replies, T=10, T_min=5):
    session = fresh_session(T=T, T_min=T_min)
    gateway = Gateway(default_provider())
    feedback = ScriptedFeedback(replies)
    cfg = HdkpConfig(T=T, T_min=T_min)
    outcome = run_session(session, toy_gear, gateway, feedback, cfg)
    return outcome


def test_nine_replies_give_nine_rounds(toy_gear):
    outcome = run_ready_session(toy_gear, [f"Rule: threads should be higher"] * 9)
    assert outcome.session.completed_rounds == 9
    assert outcome.session.t == 10
    assert not outcome.excluded
    assert len(outcome.trials) == 20


def test_timeout_freezes_belief(toy_gear):
    session = fresh_session()
    gateway = Gateway(default_provider())
    feedback = ScriptedFeedback(["Rule: threads should be higher"])  # one reply only
    cfg = HdkpConfig()
    bootstrap_beliefs(session, toy_gear, gateway, feedback)
    run_iteration(session, toy_gear, gateway, feedback, cfg)
    before = [s.text for s in session.belief.statements]
    with pytest.raises(FeedbackTimeout):
        run_iteration(session, toy_gear, gateway, feedback, cfg)
    assert [s.text for s in session.belief.statements] == before
    assert session.t == 2  # did not advance
    assert session.status == "awaiting_feedback"


def test_query_contains_rules_failure_and_one_question(toy_gear):
    session = fresh_session()
    gateway = Gateway(default_provider())
    feedback = ScriptedFeedback(["Rule: cache_mb should be higher"])
    cfg = HdkpConfig()
    bootstrap_beliefs(session, toy_gear, gateway, feedback)
    run_iteration(session, toy_gear, gateway, feedback, cfg)
    record = session.history[0]
    for statement in [s.text for s in session.belief.statements][:1]:
        assert statement.split(";")[0] in record.query
    for name, value in record.failure.items():
        assert str(value) in record.query
    assert record.query.count("?") == 1


def test_exclusion_flag_thresholds(toy_gear):
    outcome = run_ready_session(toy_gear, ["Rule: threads should be higher"] * 4)
    assert outcome.session.completed_rounds == 4
    assert outcome.excluded
    assert len(outcome.trials) == 20  # trials still produced

    outcome = run_ready_session(toy_gear, ["Rule: threads should be higher"] * 5)
    assert not outcome.excluded


def test_belief_append_only_audit(toy_gear):
    session = fresh_session()
    gateway = Gateway(default_provider())
    feedback = SimulatedExpert(toy_gear)
    cfg = HdkpConfig(T=6, T_min=3)
    session.T = 6
    session.T_min = 3
    snapshots = []
    bootstrap_beliefs(session, toy_gear, gateway, feedback)
    snapshots.append([s.text for s in session.belief.statements])
    while session.t < session.T:
        run_iteration(session, toy_gear, gateway, feedback, cfg)
        snapshots.append([s.text for s in session.belief.statements])
    for earlier, later in zip(snapshots, snapshots[1:]):
        assert later[: len(earlier)] == earlier
    trials, excluded = finalize(session, toy_gear, gateway, cfg)
    t_final = session.t
    assert all(s.iteration <= t_final for s in session.belief.statements)
    assert not excluded


# -- simulated expert -----------------------------------------------------------------

def test_simulated_expert_near_optimal(toy_gear):
    best_idx, _ = pool_optimum(toy_gear)
    config = toy_gear.config_from_row(best_idx)
    assert "near-optimal" in simulated_expert_reply(config, toy_gear)


def test_simulated_expert_names_worst_feature(toy_gear):
    best_idx, _ = pool_optimum(toy_gear)
    optimum = toy_gear.config_from_row(best_idx)
    bad = dict(optimum.assignments)
    bad["threads"] = 2.0  # optimum has 64: a large normalized deviation
    reply = simulated_expert_reply(Configuration(bad), toy_gear)
    assert reply == "Rule: threads should be higher"


def test_simulated_expert_symbolic_direction(toy_gear):
    best_idx, _ = pool_optimum(toy_gear)
    optimum = toy_gear.config_from_row(best_idx)
    bad = dict(optimum.assignments)
    bad["compiler"] = "gcc"  # optimum says clang; symbolic deviation = 1.0
    reply = simulated_expert_reply(Configuration(bad), toy_gear)
    assert reply == "Rule: compiler should be equal to clang"


def test_simulated_expert_tie_lowest_index():
    from conftest import dataset_from_columns

    ds = dataset_from_columns(
        "tie2",
        {"a": [0.0, 10.0], "b": [0.0, 10.0]},
        {"L": ("minimize", [5.0, 1.0])},  # optimum is row 1: a=10, b=10
    )
    config = Configuration({"a": 0.0, "b": 0.0})  # both deviate fully
    assert simulated_expert_reply(config, ds) == "Rule: a should be higher"


# -- learning effect --------------------------------------------------------------------

def median_finalize_min(toy_gear, seed, T, T_min):
    session = Session(
        id=f"s-{seed}-T{T}", dataset_name=toy_gear.name, T=T, T_min=T_min
    )
    gateway = Gateway(default_provider())
    outcome = run_session(
        session, toy_gear, gateway, SimulatedExpert(toy_gear), HdkpConfig(T=T, T_min=T_min)
    )
    return float(np.median([t.min_chebyshev for t in outcome.trials]))


def test_knowledge_helps_t10_vs_t1(toy_gear):
    long_runs = [median_finalize_min(toy_gear, s, T=10, T_min=5) for s in range(20)]
    short_runs = [median_finalize_min(toy_gear, s, T=1, T_min=1) for s in range(20)]
    assert np.median(long_runs) <= np.median(short_runs)
