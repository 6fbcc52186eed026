"""Structured judge replies and their strict parsers.

Parsers accept prose or markdown fences around the JSON body, but every field
inside the body is validated; a parse either returns a fully valid value or
raises a :class:`~sealrank.errors.ParseError` subclass.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from .errors import (
    AnchorError,
    ConfidenceRangeError,
    DuplicateCandidateError,
    IdMismatchError,
    IncompleteVotesError,
    MalformedReplyError,
    MissingCandidateError,
    UnknownCandidateError,
    UnknownIdError,
)
from .rubric import AnchorSplit, ChecklistItem, DemonstrationPair, Rubric

VOTES = ("left", "right", "tie")

_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)\n?\s*```", re.S)


@dataclass(frozen=True)
class SeedTiers:
    tiers: tuple[tuple[str, ...], ...]  # index 0 is tier 1 (best)
    reasoning: str = ""

    def tier_of(self, candidate: str) -> int:
        for i, members in enumerate(self.tiers, start=1):
            if candidate in members:
                return i
        raise KeyError(candidate)

    def to_dict(self) -> dict[str, Any]:
        return {"tiers": {str(i): list(m) for i, m in enumerate(self.tiers, start=1)}, "reasoning": self.reasoning}


@dataclass(frozen=True)
class PrincipleVote:
    principle_id: str
    vote: str
    confidence: float
    reasoning: str = ""


@dataclass(frozen=True)
class ChecklistVote:
    item_id: str
    vote: str
    confidence: float


_SWAP = {"left": "right", "right": "left", "tie": "tie"}


@dataclass(frozen=True)
class MatchJudgment:
    verdict_claimed: str
    principle_votes: tuple[PrincipleVote, ...]
    checklist_votes: tuple[ChecklistVote, ...] = ()

    def swapped(self) -> "MatchJudgment":
        """The same judgment with the left/right labels exchanged."""
        return MatchJudgment(
            verdict_claimed=_SWAP[self.verdict_claimed],
            principle_votes=tuple(
                PrincipleVote(v.principle_id, _SWAP[v.vote], v.confidence, v.reasoning) for v in self.principle_votes
            ),
            checklist_votes=tuple(ChecklistVote(v.item_id, _SWAP[v.vote], v.confidence) for v in self.checklist_votes),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict_claimed,
            "principle_scores": [
                {"principle_id": v.principle_id, "vote": v.vote, "confidence": v.confidence, "reasoning": v.reasoning}
                for v in self.principle_votes
            ],
            "checklist_scores": [
                {"item_id": v.item_id, "vote": v.vote, "confidence": v.confidence} for v in self.checklist_votes
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MatchJudgment":
        return cls(
            verdict_claimed=data["verdict"],
            principle_votes=tuple(
                PrincipleVote(v["principle_id"], v["vote"], float(v["confidence"]), v.get("reasoning", ""))
                for v in data["principle_scores"]
            ),
            checklist_votes=tuple(
                ChecklistVote(v["item_id"], v["vote"], float(v["confidence"])) for v in data["checklist_scores"]
            ),
        )


def extract_json(raw: str) -> Any:
    """Pull the JSON body out of a reply that may wrap it in prose or fences."""
    candidates = [m.group(1) for m in _FENCE.finditer(raw)]
    start, end = raw.find("{"), raw.rfind("}")
    if start != -1 and end > start:
        candidates.append(raw[start : end + 1])
    candidates.append(raw)
    for text in candidates:
        try:
            return json.loads(text)
        except (json.JSONDecodeError, TypeError):
            continue
    raise MalformedReplyError("reply contains no parseable JSON object")


def _object(raw: str) -> dict[str, Any]:
    data = extract_json(raw)
    if not isinstance(data, dict):
        raise MalformedReplyError("reply JSON is not an object")
    return data


def _field(data: Mapping[str, Any], name: str, kind: type | tuple[type, ...]) -> Any:
    if name not in data:
        raise MalformedReplyError(f"missing field {name!r}")
    value = data[name]
    if not isinstance(value, kind):
        raise MalformedReplyError(f"field {name!r} has wrong type {type(value).__name__}")
    return value


def _confidence(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedReplyError(f"{where}: confidence must be a number")
    value = float(value)
    if not math.isfinite(value) or not 0.0 <= value <= 1.0:
        raise ConfidenceRangeError(f"{where}: confidence {value} outside [0, 1]")
    return value


def _vote(value: Any, where: str) -> str:
    if value not in VOTES:
        raise MalformedReplyError(f"{where}: vote must be one of {VOTES}, got {value!r}")
    return value


def check_permutation(ids: Iterable[str], pool: Iterable[str]) -> None:
    """Raise unless ``ids`` lists every member of ``pool`` exactly once."""
    pool = set(pool)
    seen: set[str] = set()
    for cid in ids:
        if cid not in pool:
            raise UnknownCandidateError(f"unknown candidate id {cid!r}")
        if cid in seen:
            raise DuplicateCandidateError(f"candidate {cid!r} appears more than once")
        seen.add(cid)
    missing = sorted(pool - seen)
    if missing:
        raise MissingCandidateError(f"candidates missing from reply: {', '.join(missing)}")


def parse_seeding(raw: str, pool: Iterable[str]) -> SeedTiers:
    data = _object(raw)
    tiers = _field(data, "tiers", dict)
    try:
        keyed = sorted((int(k), v) for k, v in tiers.items())
    except (TypeError, ValueError) as exc:
        raise MalformedReplyError(f"tier keys must be integers: {exc}") from exc
    if [k for k, _ in keyed] != list(range(1, len(keyed) + 1)):
        raise MalformedReplyError("tier indices must be contiguous from 1")
    members: list[tuple[str, ...]] = []
    for k, ids in keyed:
        if not isinstance(ids, list) or not ids or not all(isinstance(c, str) for c in ids):
            raise MalformedReplyError(f"tier {k} must be a non-empty list of candidate ids")
        members.append(tuple(ids))
    check_permutation([c for m in members for c in m], pool)
    reasoning = data.get("reasoning", "")
    if not isinstance(reasoning, str):
        raise MalformedReplyError("field 'reasoning' must be a string")
    return SeedTiers(tiers=tuple(members), reasoning=reasoning)


def parse_listwise(raw: str, pool: Iterable[str]) -> tuple[str, ...]:
    data = _object(raw)
    ranking = _field(data, "ranking", list)
    if not all(isinstance(c, str) for c in ranking):
        raise MalformedReplyError("ranking must list candidate ids")
    check_permutation(ranking, pool)
    return tuple(ranking)


def parse_pointwise(raw: str) -> float:
    data = _object(raw)
    score = data.get("score")
    if isinstance(score, bool) or not isinstance(score, (int, float)):
        raise MalformedReplyError("field 'score' must be a number")
    if not math.isfinite(score) or not 0.0 <= score <= 1.0:
        raise ConfidenceRangeError(f"score {score} outside [0, 1]")
    return float(score)


def parse_rubric_gen(raw: str, rubric: Rubric) -> tuple[ChecklistItem, ...]:
    data = _object(raw)
    criteria = _field(data, "criteria", list)
    if not criteria:
        raise MalformedReplyError("no criteria")
    items = []
    for i, c in enumerate(criteria, start=1):
        if not isinstance(c, dict):
            raise MalformedReplyError("criteria entries must be objects")
        pid = _field(c, "principle_id", str)
        if pid not in rubric.principle_ids:
            raise UnknownIdError(f"unknown principle {pid!r}")
        items.append(ChecklistItem(id=f"R{i}", description=_field(c, "description", str), principle_id=pid))
    return tuple(items)


def _collect(entries: Any, key: str, expected: tuple[str, ...], label: str) -> dict[str, dict]:
    if not isinstance(entries, list):
        raise MalformedReplyError(f"{label} must be a list")
    found: dict[str, dict] = {}
    for e in entries:
        if not isinstance(e, dict):
            raise MalformedReplyError(f"{label} entries must be objects")
        eid = e.get(key)
        if eid not in expected:
            raise UnknownIdError(f"{label}: unknown id {eid!r}")
        if eid in found:
            raise MalformedReplyError(f"{label}: more than one vote for {eid}")
        found[eid] = e
    missing = [i for i in expected if i not in found]
    if missing:
        raise IncompleteVotesError(f"{label}: no vote for {', '.join(missing)}")
    return found


def parse_pairwise(raw: str, rubric: Rubric) -> MatchJudgment:
    data = _object(raw)
    verdict = _vote(data.get("verdict"), "verdict")
    principles = _collect(data.get("principle_scores"), "principle_id", rubric.principle_ids, "principle_scores")
    items = _collect(data.get("checklist_scores", None), "item_id", rubric.item_ids, "checklist_scores")
    pvotes = []
    for pid in rubric.principle_ids:
        e = principles[pid]
        reasoning = e.get("reasoning", "")
        if not isinstance(reasoning, str):
            raise MalformedReplyError(f"{pid}: reasoning must be a string")
        pvotes.append(PrincipleVote(pid, _vote(e.get("vote"), pid), _confidence(e.get("confidence"), pid), reasoning))
    cvotes = [
        ChecklistVote(iid, _vote(items[iid].get("vote"), iid), _confidence(items[iid].get("confidence"), iid))
        for iid in rubric.item_ids
    ]
    return MatchJudgment(verdict_claimed=verdict, principle_votes=tuple(pvotes), checklist_votes=tuple(cvotes))


def _anchor(value: Any) -> AnchorSplit:
    if not isinstance(value, dict):
        raise MalformedReplyError("anchor_split must be an object")
    hi, lo = value.get("higher"), value.get("lower")
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in (hi, lo)):
        raise AnchorError("anchor levels must be integers")
    if not (1 <= lo <= 5 and 1 <= hi <= 5) or hi <= lo:
        raise AnchorError(f"anchor split {hi}/{lo} must satisfy 1 <= lower < higher <= 5")
    return AnchorSplit(hi, lo)


def parse_evolution(raw: str, rubric: Rubric, expected_id: str) -> ChecklistItem:
    data = _object(raw)
    item_id = _field(data, "id", str)
    if item_id != expected_id:
        raise IdMismatchError(f"reply id {item_id!r} does not match requested {expected_id!r}")
    description = _field(data, "description", str).strip()
    if not description:
        raise MalformedReplyError("empty description")
    pid = _field(data, "principle_id", str)
    if pid not in rubric.principle_ids:
        raise UnknownIdError(f"unknown principle {pid!r}")
    anchor = _anchor(_field(data, "anchor_split", dict))
    differentiator = _field(data, "differentiator", str)
    demo = _field(data, "demonstration_pair", dict)
    pair = DemonstrationPair(_field(demo, "higher_snippet", str), _field(demo, "lower_snippet", str))
    if data.get("source", "adversarial") != "adversarial":
        raise MalformedReplyError("source must be 'adversarial'")
    if data.get("scoring", "five_level") != "five_level":
        raise MalformedReplyError("scoring must be 'five_level'")
    return ChecklistItem(
        id=item_id,
        description=description,
        principle_id=pid,
        source="adversarial",
        anchor_split=anchor,
        differentiator=differentiator,
        demonstration_pair=pair,
    )


def evolution_reply(item: ChecklistItem) -> dict[str, Any]:
    """Serialize an adversarial item in the evolution reply schema."""
    out = item.to_dict()
    out["scoring"] = "five_level"
    return out
