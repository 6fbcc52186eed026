"""Checklist evolution: when to ask the meta-judge, and how new items are admitted."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping

from .backends import JudgeRequest
from .errors import JudgeCallError
from .judge import parse_evolution
from .prompts import render_prompt
from .rubric import ChecklistItem, Rubric

if TYPE_CHECKING:
    from .session import JudgeSession
    from .tournament import MatchRecord

logger = logging.getLogger(__name__)

DEFAULT_TRIGGER_ROUNDS = frozenset({"quarterfinal", "semifinal", "final"})


@dataclass(frozen=True)
class EvolutionPolicy:
    enabled: bool = True
    trigger_rounds: frozenset[str] = DEFAULT_TRIGGER_ROUNDS
    closeness_threshold: float = 0.15
    max_items_per_task: int = 4

    def __post_init__(self):
        if self.closeness_threshold < 0 or self.max_items_per_task < 0:
            raise ValueError("closeness_threshold and max_items_per_task must be nonnegative")

    @classmethod
    def disabled(cls) -> "EvolutionPolicy":
        return cls(enabled=False)

    def to_dict(self) -> dict:
        return {
            "enabled": self.enabled,
            "trigger_rounds": sorted(self.trigger_rounds),
            "closeness_threshold": self.closeness_threshold,
            "max_items_per_task": self.max_items_per_task,
        }


@dataclass(frozen=True)
class ChecklistVersion:
    version: int
    items: tuple[ChecklistItem, ...]
    provenance: tuple[tuple[int, str], ...] = field(default_factory=tuple)

    @classmethod
    def seed(cls, rubric: Rubric) -> "ChecklistVersion":
        return cls(0, tuple(rubric.checklist))

    @property
    def ids(self) -> set[str]:
        return {c.id for c in self.items}


def should_evolve(record: "MatchRecord", policy: EvolutionPolicy, items_added: int) -> bool:
    return (
        policy.enabled
        and record.round_label in policy.trigger_rounds
        and abs(record.margin) <= policy.closeness_threshold
        and items_added < policy.max_items_per_task
    )


def normalize_description(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip().casefold()


def accept_item(current: ChecklistVersion, item: ChecklistItem, source_ref: str = "") -> tuple[ChecklistVersion, str | None]:
    """Append ``item`` as the next version, or return ``current`` with a rejection reason."""
    if item.id in current.ids:
        reason = f"id collision with {item.id}"
    elif normalize_description(item.description) in {normalize_description(c.description) for c in current.items}:
        reason = f"duplicate description of an existing item ({item.id})"
    else:
        nxt = ChecklistVersion(
            version=current.version + 1,
            items=current.items + (item,),
            provenance=current.provenance + ((current.version + 1, source_ref),),
        )
        return nxt, None
    logger.info("rejected checklist item: %s", reason)
    return current, reason


def next_item_id(items: tuple[ChecklistItem, ...], prefix: str = "C") -> str:
    taken = {c.id for c in items}
    n = len(items) + 1
    while f"{prefix}{n}" in taken:
        n += 1
    return f"{prefix}{n}"


def loser_evidence(record: "MatchRecord", loser: str) -> list[dict]:
    """Principle votes re-expressed from the loser's side."""
    loser_side = "left" if loser == record.left else "right"
    out = []
    for v in record.judgment.principle_votes:
        outcome = "tie" if v.vote == "tie" else ("won" if v.vote == loser_side else "lost")
        out.append(
            {"principle_id": v.principle_id, "outcome": outcome, "confidence": v.confidence, "reasoning": v.reasoning}
        )
    return out


def format_evidence(evidence: list[dict]) -> str:
    return "\n".join(
        f"- {e['principle_id']}: {e['outcome']} (confidence {e['confidence']:.2f}): {e['reasoning']}" for e in evidence
    )


def evolve_once(
    record: "MatchRecord",
    rubric: Rubric,
    session: "JudgeSession",
    task_prompt: str,
    outputs: Mapping[str, str],
    protocol: str = "seal",
) -> ChecklistItem | None:
    """Ask the meta-judge for one new adversarial item; None when the call fails."""
    capabilities = getattr(session.backend, "capabilities", None)
    if capabilities is not None and "evolve" not in capabilities:
        logger.warning("backend %s cannot evolve checklists; skipping", getattr(session.backend, "name", "?"))
        return None
    winner = record.winner
    loser = record.right if winner == record.left else record.left
    new_id = next_item_id(rubric.checklist)
    evidence = loser_evidence(record, loser)
    prompt = render_prompt(
        "evolution",
        {
            "task_prompt": task_prompt,
            "loser_output": outputs[loser],
            "winner_output": outputs[winner],
            "loser_scores": format_evidence(evidence),
            "rubric": rubric,
            "new_id": new_id,
        },
    )
    request = JudgeRequest(
        prompt,
        record.task_id,
        candidates=(loser, winner),
        meta={
            "rubric": rubric,
            "new_id": new_id,
            "winner": winner,
            "loser": loser,
            "loser_votes": evidence,
            "round_label": record.round_label,
            "winner_output": outputs[winner],
            "loser_output": outputs[loser],
        },
    )
    try:
        item, _ = session.call(protocol, request, lambda raw: parse_evolution(raw, rubric, new_id))
    except JudgeCallError as exc:
        logger.warning("evolution skipped for %s: %s", record.ref, exc)
        return None
    return item
