import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sealrank.errors import BracketError, NotFinishedError
from sealrank.evolution import EvolutionPolicy
from sealrank.judge import SeedTiers
from sealrank.ledger import Ledger
from sealrank.rubric import load_rubric
from sealrank.session import JudgeSession
from sealrank.sim import SimBackend, generate_world, true_ranking
from sealrank.tournament import (
    MatchRecord,
    build_bracket,
    rank_all,
    round_label,
    run_task_tournament,
    seed_order,
    seeding_positions,
)

from conftest import judgment, two_principle_rubric
from helpers import SeedOverride, outputs_for, session_for

CODE = load_rubric("code_generation")


def tiers_of(*groups):
    return SeedTiers(tuple(tuple(g) for g in groups))


def test_eight_seed_pairs():
    b = build_bracket(tiers_of([f"s{i}" for i in range(1, 9)]))
    first = b.open_round()
    pairs = [(b.seeds[m.left], b.seeds[m.right]) for m in first]
    assert pairs == [(1, 8), (4, 5), (2, 7), (3, 6)]


def test_seed_spreading_sequence():
    assert seeding_positions(1) == [1]
    assert seeding_positions(2) == [1, 2]
    assert seeding_positions(4) == [1, 4, 2, 3]
    assert seeding_positions(8) == [1, 8, 4, 5, 2, 7, 3, 6]
    with pytest.raises(ValueError):
        seeding_positions(6)


def test_top_four_in_distinct_quarters():
    pos = seeding_positions(8)
    quarters = {s: pos.index(s) // 2 for s in (1, 2, 3, 4)}
    assert len(set(quarters.values())) == 4


def test_two_candidates_single_match():
    b = build_bracket(tiers_of(["a", "b"]))
    (m,) = b.open_round()
    assert (m.left, m.right) == ("a", "b") and b.n_rounds == 1 and b.label(1) == "final"


def test_six_pads_to_eight_with_top_byes():
    b = build_bracket(tiers_of([f"s{i}" for i in range(1, 7)]))
    assert b.padded_size == 8
    byes = [m.left for m in b.open_round() if m.is_bye]
    assert sorted(b.seeds[c] for c in byes) == [1, 2]


def test_round_labels():
    assert [round_label(r, 3) for r in (1, 2, 3)] == ["quarterfinal", "semifinal", "final"]
    assert round_label(1, 4) == "round_of_16"


def test_seed_order_policies():
    t = tiers_of(["b", "a"], ["d", "c"])
    assert seed_order(t) == ["b", "a", "d", "c"]
    assert seed_order(t, "alphabetical") == ["a", "b", "c", "d"]
    with pytest.raises(ValueError):
        seed_order(t, "random")


def _rec(left, right, winner, margin, rnd, label, idx):
    return MatchRecord("t", rnd, label, idx, left, right, judgment(two_principle_rubric(), ["tie", "tie"]),
                       margin, "left" if winner == left else "right", winner, 0)


def test_rank_all_orders_same_round_losers_by_margin():
    b = build_bracket(tiers_of(["a", "b", "c", "d"]))
    recs = []
    # seeds 1v4, 2v3; b loses with +0.3 accumulated, d loses with -0.1
    semis = b.open_round()
    outcomes = {("a", "d"): ("a", -0.1), ("b", "c"): ("c", -0.3)}
    for m in semis:
        winner, margin = outcomes[(m.left, m.right)]
        m.winner = winner
        m.record = _rec(m.left, m.right, winner, margin, 1, "semifinal", m.position)
        recs.append(m.record)
    (final,) = b.open_round()
    final.winner = "a"
    final.record = _rec("a", "c", "a", -1.0, 2, "final", 0)
    recs.append(final.record)
    r = rank_all(b, recs)
    assert r.order[0] == "a" and r.order[1] == "c"
    assert r.order[2:] == ("b", "d")
    assert r.margins["b"] == pytest.approx(0.3) and r.margins["d"] == pytest.approx(-0.1)


def test_rank_all_requires_finished_bracket():
    b = build_bracket(tiers_of(["a", "b"]))
    with pytest.raises(NotFinishedError):
        rank_all(b, [])


def test_cannot_open_round_before_winners():
    b = build_bracket(tiers_of(["a", "b", "c", "d"]))
    b.open_round()
    with pytest.raises(BracketError):
        b.open_round()


def test_flat_call_counts():
    w = generate_world(8, 6, seed=3, noise_sigma=0.05, tie_band=0.01)
    s = session_for(w)
    res = run_task_tournament("t", "p", outputs_for(w.candidates), CODE, s, EvolutionPolicy.disabled())
    kinds = [e.kind for e in s.ledger.events]
    assert kinds.count("seed") == 1 and kinds.count("pairwise") == 7 and len(kinds) == 8
    assert len(res.records) == 7


def test_two_candidates_two_calls():
    w = generate_world(2, 6, seed=1)
    s = session_for(w)
    run_task_tournament("t", "p", outputs_for(w.candidates), CODE, s)
    assert len(s.ledger.events) == 2


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(0, 1000), st.floats(0.0, 0.2))
def test_match_count_and_elimination(n, seed, sigma):
    w = generate_world(n, 6, seed=seed, noise_sigma=sigma, tie_band=0.01)
    res = run_task_tournament("t", "p", outputs_for(w.candidates), CODE, session_for(w), EvolutionPolicy.disabled())
    assert len(res.records) == n - 1
    eliminated = {}
    for rec in res.records:
        for c in (rec.left, rec.right):
            assert c not in eliminated or eliminated[c] >= rec.round_index
        eliminated[rec.loser] = rec.round_index
    assert sorted(res.ranking.order) == sorted(w.candidates)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.permutations(range(8)), st.integers(1, 8))
def test_zero_noise_champion_is_best_for_any_seeding(seed, perm, k):
    w = generate_world(8, 6, seed=seed)
    shuffled = [w.candidates[i] for i in perm]
    sizes = [len(a) for a in np.array_split(np.arange(8), k)]
    tiers, start = [], 0
    for size in sizes:
        tiers.append(shuffled[start : start + size])
        start += size
    backend = SeedOverride(SimBackend(w), tiers)
    res = run_task_tournament("t", "p", outputs_for(w.candidates), CODE, JudgeSession(backend, Ledger()),
                              k=k)
    assert res.ranking.order[0] == true_ranking(w)[0]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_zero_noise_full_order_recovered(seed):
    w = generate_world(8, 6, seed=seed)
    for evo in (EvolutionPolicy.disabled(), EvolutionPolicy()):
        res = run_task_tournament("t", "p", outputs_for(w.candidates), CODE, session_for(w), evo)
        assert list(res.ranking.order) == true_ranking(w)
