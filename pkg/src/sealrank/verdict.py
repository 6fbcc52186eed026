"""Mechanical verdicts from confidence- and weight-signed principle votes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import SealError
from .judge import MatchJudgment
from .rubric import Rubric

if TYPE_CHECKING:
    from .tournament import MatchRecord

DEFAULT_EPSILON = 1e-6
_SIGN = {"left": -1.0, "right": 1.0, "tie": 0.0}


class JudgmentMismatchError(SealError, ValueError):
    pass


@dataclass(frozen=True)
class Margin:
    value: float
    epsilon: float = DEFAULT_EPSILON


def match_margin(judgment: MatchJudgment, rubric: Rubric, epsilon: float = DEFAULT_EPSILON) -> Margin:
    """Sum of weight * confidence * sign over principle votes.

    Negative favours the left response, positive the right one. Checklist
    votes are recorded but never enter the margin.
    """
    weights = rubric.weights
    seen = {v.principle_id for v in judgment.principle_votes}
    if seen != set(weights) or len(judgment.principle_votes) != len(weights):
        raise JudgmentMismatchError("judgment does not cover exactly the rubric principles")
    total = 0.0
    for v in judgment.principle_votes:
        total += weights[v.principle_id] * v.confidence * _SIGN[v.vote]
    return Margin(total, epsilon)


def decide_verdict(margin: Margin) -> str:
    if margin.value < -margin.epsilon:
        return "left"
    if margin.value > margin.epsilon:
        return "right"
    return "tie"


def candidate_margin(record: "MatchRecord", candidate: str) -> float:
    """Match margin seen from ``candidate``'s side; positive means it was favoured."""
    if candidate == record.left:
        return 0.0 - record.margin
    if candidate == record.right:
        return record.margin
    raise SealError(f"candidate {candidate!r} did not play in match {record.left} vs {record.right}")
