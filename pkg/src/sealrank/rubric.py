"""Two-layer judging rubrics: fixed weighted principles plus an evolvable checklist."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import RubricError, UnknownTaskTypeError

TASK_TYPES = ("code_generation", "math_reasoning", "general_qa", "tool_calling")
SOURCES = ("seed", "adversarial")
WEIGHT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Principle:
    id: str
    description: str
    weight: float


@dataclass(frozen=True)
class AnchorSplit:
    higher: int
    lower: int


@dataclass(frozen=True)
class DemonstrationPair:
    higher_snippet: str
    lower_snippet: str


@dataclass(frozen=True)
class ChecklistItem:
    id: str
    description: str
    principle_id: str
    source: str = "seed"
    anchor_split: AnchorSplit | None = None
    differentiator: str | None = None
    demonstration_pair: DemonstrationPair | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.id,
            "description": self.description,
            "principle_id": self.principle_id,
            "source": self.source,
        }
        if self.anchor_split is not None:
            out["anchor_split"] = {"higher": self.anchor_split.higher, "lower": self.anchor_split.lower}
        if self.differentiator is not None:
            out["differentiator"] = self.differentiator
        if self.demonstration_pair is not None:
            out["demonstration_pair"] = {
                "higher_snippet": self.demonstration_pair.higher_snippet,
                "lower_snippet": self.demonstration_pair.lower_snippet,
            }
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ChecklistItem":
        anchor = data.get("anchor_split")
        demo = data.get("demonstration_pair")
        return cls(
            id=str(data["id"]),
            description=str(data["description"]),
            principle_id=str(data["principle_id"]),
            source=str(data.get("source", "seed")),
            anchor_split=AnchorSplit(int(anchor["higher"]), int(anchor["lower"])) if anchor else None,
            differentiator=data.get("differentiator"),
            demonstration_pair=(
                DemonstrationPair(str(demo["higher_snippet"]), str(demo["lower_snippet"])) if demo else None
            ),
        )


@dataclass(frozen=True)
class Rubric:
    task_type: str
    principles: tuple[Principle, ...]
    checklist: tuple[ChecklistItem, ...] = field(default_factory=tuple)

    @property
    def principle_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.principles)

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.checklist)

    @property
    def weights(self) -> dict[str, float]:
        return {p.id: p.weight for p in self.principles}

    def principle(self, principle_id: str) -> Principle:
        for p in self.principles:
            if p.id == principle_id:
                return p
        raise KeyError(principle_id)

    def with_checklist(self, items) -> "Rubric":
        return replace(self, checklist=tuple(items))

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_type": self.task_type,
            "principles": [{"id": p.id, "description": p.description, "weight": p.weight} for p in self.principles],
            "checklist": [c.to_dict() for c in self.checklist],
        }


def _parse_weight(raw: Any) -> float:
    if isinstance(raw, str):
        return float(Fraction(raw.strip()))
    return float(raw)


def rubric_from_dict(data: Mapping[str, Any]) -> Rubric:
    """Build a Rubric from a parsed rubric document.

    Weights may be numbers or fraction strings such as ``"1/6"``; a document
    that omits every weight gets uniform weights.
    """
    try:
        raw_principles = list(data["principles"])
        task_type = str(data["task_type"])
    except (KeyError, TypeError) as exc:
        raise RubricError(f"rubric document missing field: {exc}") from exc
    if not raw_principles:
        raise RubricError("rubric has no principles")
    uniform = all("weight" not in p for p in raw_principles)
    principles = tuple(
        Principle(
            id=str(p["id"]),
            description=str(p["description"]),
            weight=1.0 / len(raw_principles) if uniform else _parse_weight(p["weight"]),
        )
        for p in raw_principles
    )
    items = tuple(ChecklistItem.from_dict(c) for c in data.get("checklist", ()))
    return Rubric(task_type=task_type, principles=principles, checklist=items)


@lru_cache(maxsize=None)
def _builtin(task_type: str) -> Rubric:
    text = resources.files("sealrank.rubrics").joinpath(f"{task_type}.yaml").read_text(encoding="utf-8")
    return rubric_from_dict(yaml.safe_load(text))


def load_rubric(task_type: str) -> Rubric:
    """Return the shipped seed rubric for ``task_type``."""
    if task_type not in TASK_TYPES:
        raise UnknownTaskTypeError(f"unknown task type: {task_type!r}")
    return _builtin(task_type)


def load_rubric_file(path: str | Path) -> Rubric:
    """Load a rubric override from a YAML or JSON document."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    rubric = rubric_from_dict(data)
    problems = validate_rubric(rubric)
    if problems:
        raise RubricError(f"{path}: " + "; ".join(problems))
    return rubric


def validate_rubric(rubric: Rubric, *, seed: bool = False) -> list[str]:
    """List every invariant violation; an empty list means the rubric is ok.

    With ``seed=True`` the one-item-per-principle seed shape is also checked.
    """
    problems: list[str] = []
    if rubric.task_type not in TASK_TYPES:
        problems.append(f"unknown task type {rubric.task_type!r}")
    ids = [p.id for p in rubric.principles]
    if len(set(ids)) != len(ids):
        problems.append("duplicate principle ids")
    for p in rubric.principles:
        if not p.weight > 0:
            problems.append(f"principle {p.id} has non-positive weight {p.weight}")
    total = math.fsum(p.weight for p in rubric.principles)
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        problems.append(f"weights sum ≠ 1 (sum = {total:.12g})")

    item_ids = [c.id for c in rubric.checklist]
    if len(set(item_ids)) != len(item_ids):
        problems.append("duplicate checklist item ids")
    housed = set(ids)
    for c in rubric.checklist:
        if c.principle_id not in housed:
            problems.append(f"unhoused item {c.id}: principle {c.principle_id} not in rubric")
        if c.source not in SOURCES:
            problems.append(f"item {c.id} has unknown source {c.source!r}")
        if c.source == "adversarial" and (
            c.anchor_split is None or c.differentiator is None or c.demonstration_pair is None
        ):
            problems.append(f"adversarial item {c.id} lacks anchor_split/differentiator/demonstration_pair")
        if c.anchor_split is not None:
            a = c.anchor_split
            if not (1 <= a.lower <= 5 and 1 <= a.higher <= 5 and a.higher > a.lower):
                problems.append(f"item {c.id} has invalid anchor split {a.higher}/{a.lower}")

    if seed:
        counts = coverage_counts(rubric)
        if any(n != 1 for n in counts.values()) or len(rubric.checklist) != len(rubric.principles):
            problems.append("seed checklist must hold exactly one item per principle")
    return problems


def coverage_counts(rubric: Rubric) -> dict[str, int]:
    """Checklist items per principle, in principle order; absent principles map to 0."""
    counts = {p.id: 0 for p in rubric.principles}
    for c in rubric.checklist:
        if c.principle_id in counts:
            counts[c.principle_id] += 1
    return counts
