from __future__ import annotations

import pytest

from sealrank.judge import ChecklistVote, MatchJudgment, PrincipleVote
from sealrank.rubric import ChecklistItem, Principle, Rubric, load_rubric
from sealrank.sim import LatentWorld


def two_principle_rubric() -> Rubric:
    return Rubric(
        "general_qa",
        (Principle("P1", "first", 0.5), Principle("P2", "second", 0.5)),
        (ChecklistItem("C1", "probe one", "P1"), ChecklistItem("C2", "probe two", "P2")),
    )


def judgment(rubric: Rubric, votes, confidences=None, claimed: str = "tie") -> MatchJudgment:
    confidences = confidences or [1.0] * len(votes)
    pv = tuple(PrincipleVote(p.id, v, c) for p, v, c in zip(rubric.principles, votes, confidences))
    by_p = {v.principle_id: v for v in pv}
    cv = tuple(ChecklistVote(c.id, by_p[c.principle_id].vote, by_p[c.principle_id].confidence) for c in rubric.checklist)
    return MatchJudgment(claimed, pv, cv)


def flat_world(means: dict[str, float], n_principles: int = 6, **kw) -> LatentWorld:
    return LatentWorld({c: (q,) * n_principles for c, q in means.items()}, **kw)


@pytest.fixture
def code_rubric() -> Rubric:
    return load_rubric("code_generation")


@pytest.fixture
def small_rubric() -> Rubric:
    return two_principle_rubric()
