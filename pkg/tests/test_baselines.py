import itertools
import json
from dataclasses import replace

import pytest

from sealrank.backends import JudgeRequest
from sealrank.baselines import (
    PromptTooLargeError,
    generate_fixed_rubric,
    run_flat_bracket,
    run_full_pair,
    run_listwise,
    run_original,
    run_pointwise,
)
from sealrank.errors import ConfigError, JudgeCallError
from sealrank.evolution import EvolutionPolicy
from sealrank.judge import MatchJudgment
from sealrank.ledger import Ledger
from sealrank.metrics import score_leaderboard
from sealrank.rubric import load_rubric
from sealrank.session import JudgeSession
from sealrank.sim import SimBackend, generate_world, true_ranking
from sealrank.tournament import accumulated_margins, judge_match, run_task_tournament

from helpers import Scripted, outputs_for, session_for

CODE = load_rubric("code_generation")


def test_original_sorts_and_breaks_ties_by_id():
    run = run_original({"A": 1.0, "B": 0.99})
    assert score_leaderboard(run.native_scores).order == ["A", "B"]
    tied = run_original({"B": 0.5, "A": 0.5})
    assert tied.native_scores == {"B": 0.5, "A": 0.5}
    assert score_leaderboard(tied.native_scores).order == ["A", "B"]


def test_original_needs_every_score():
    with pytest.raises(ConfigError):
        run_original({"A": 1.0, "B": None})


def test_pointwise_calls_per_candidate():
    w = generate_world(8, 6, seed=1, noise_sigma=0.05)
    s = session_for(w)
    scores = run_pointwise("t", "p", outputs_for(w.candidates), s, CODE)
    assert len(scores) == 8 and len(s.ledger.events) == 8
    w1 = generate_world(1, 6, seed=1)
    s1 = session_for(w1)
    run_pointwise("t", "p", outputs_for(w1.candidates), s1, CODE)
    assert len(s1.ledger.events) == 1


def test_fixed_rubric_amortised_generation():
    w = generate_world(8, 6, seed=2, noise_sigma=0.05)
    s = session_for(w)
    criteria = generate_fixed_rubric(s, CODE, "bench")
    m = 5
    for i in range(m):
        run_pointwise(f"t{i}", "p", outputs_for(w.candidates, f"t{i}"), s, CODE, criteria)
    kinds = [e.kind for e in s.ledger.events]
    assert len(kinds) == 8 * m + 1 and kinds.count("rubric_gen") == 1
    assert all(e.protocol == "fixed_rubric" for e in s.ledger.events)


def test_pointwise_failure_leaves_candidate_unscored():
    backend = Scripted({"pointwise": ["nope", "still no", '{"score": 0.4}']})
    s = JudgeSession(backend, Ledger())
    scores = run_pointwise("t", "p", {"A": "a", "B": "b"}, s, CODE)
    assert scores == {"A": None, "B": 0.4}


def test_listwise_single_call_and_small_pool():
    w = generate_world(8, 6, seed=3, noise_sigma=0.05)
    s = session_for(w)
    r = run_listwise("t", "p", outputs_for(w.candidates), s, CODE)
    assert len(s.ledger.events) == 1 and sorted(r.order) == sorted(w.candidates)
    w2 = generate_world(2, 6, seed=3)
    assert len(run_listwise("t", "p", outputs_for(w2.candidates), session_for(w2), CODE).order) == 2


def test_listwise_incomplete_reply_fails():
    backend = Scripted({"listwise": ['{"ranking": ["A"]}', '{"ranking": ["A"]}']})
    with pytest.raises(JudgeCallError):
        run_listwise("t", "p", {"A": "a", "B": "b"}, JudgeSession(backend, Ledger()), CODE)


def test_listwise_prompt_guard():
    with pytest.raises(PromptTooLargeError):
        run_listwise("t", "p", {"A": "x" * 4000, "B": "y"}, JudgeSession(Scripted({}), Ledger()), CODE, max_prompt_tokens=100)


@pytest.mark.parametrize("n,expected", [(3, 3), (8, 28)])
def test_full_pair_match_count(n, expected):
    w = generate_world(n, 6, seed=n, noise_sigma=0.05, tie_band=0.01)
    s = session_for(w)
    _, records, failed = run_full_pair("t", "p", outputs_for(w.candidates), CODE, s)
    assert len(records) == expected == len(s.ledger.events) and failed == 0


@pytest.mark.parametrize("seed", range(5))
def test_zero_noise_pair_and_bracket_recover_truth(seed):
    w = generate_world(8, 6, seed=seed)
    out = outputs_for(w.candidates)
    ranking, _, _ = run_full_pair("t", "p", out, CODE, session_for(w))
    assert list(ranking.order) == true_ranking(w)
    assert list(run_flat_bracket("t", "p", out, CODE, session_for(w)).ranking.order) == true_ranking(w)


def test_flat_bracket_equals_disabled_seal():
    w = generate_world(8, 6, seed=8, noise_sigma=0.08, tie_band=0.02)
    out = outputs_for(w.candidates)
    a = run_flat_bracket("t", "p", out, CODE, session_for(w))
    b = run_task_tournament("t", "p", out, CODE, session_for(w), EvolutionPolicy.disabled(), protocol="seal")
    assert a.ranking == b.ranking
    assert [r.to_dict() for r in a.records] == [r.to_dict() for r in b.records]


class Mirrored:
    """Answers a reversed pair by judging the original order and swapping labels."""

    def __init__(self, inner):
        self.inner = inner

    def complete(self, request: JudgeRequest):
        if request.kind != "pairwise":
            return self.inner.complete(request)
        left, right = request.candidates
        if left < right:
            return self.inner.complete(request)
        reply = self.inner.complete(replace(request, candidates=(right, left)))
        body = MatchJudgment.from_dict(json.loads(reply.text)).swapped().to_dict()
        return replace(reply, text=json.dumps(body))


@pytest.mark.parametrize("seed", range(3))
def test_full_pair_reversed_order_same_ranking(seed):
    w = generate_world(6, 6, seed=seed, noise_sigma=0.1, tie_band=0.02)
    out = outputs_for(w.candidates)
    session = JudgeSession(Mirrored(SimBackend(w)), Ledger())
    forward, _, _ = run_full_pair("t", "p", out, CODE, session)
    pool = sorted(out)
    reversed_records = [
        judge_match(session, "full_pair", "t", "p", out, CODE, b, a)
        for a, b in itertools.combinations(pool, 2)
    ]
    margins = accumulated_margins(pool, reversed_records)
    backward = sorted(pool, key=lambda c: (-round(margins[c], 12), c))
    assert list(forward.order) == backward
