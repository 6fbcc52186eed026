"""Prompt rendering for every judge role.

The seeding, pairwise and evolution templates are reproduced verbatim; only
``${placeholder}`` blocks are substituted. Pointwise, listwise and rubric
generation prompts are artifact-level additions used by the baselines.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Any, Iterable, Mapping

from .errors import RenderError
from .rubric import ChecklistItem, Principle, Rubric, coverage_counts

PROMPT_KINDS = ("seeding", "pairwise", "evolution", "pointwise", "listwise", "rubric_gen")


@dataclass(frozen=True)
class PromptPair:
    system: str
    user: str
    kind: str
    token_estimate: int

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "system": self.system, "user": self.user}


def estimate_tokens(*texts: str) -> int:
    """Rough token count (characters / 4, rounded up)."""
    chars = sum(len(t) for t in texts)
    return (chars + 3) // 4


@lru_cache(maxsize=None)
def template_text(kind: str, role: str) -> str:
    return resources.files("sealrank.templates").joinpath(f"{kind}_{role}.txt").read_text(encoding="utf-8")


def format_principles(principles: Iterable[Principle]) -> str:
    return "\n".join(f"- {p.id} (weight {p.weight:.4f}): {p.description}" for p in principles)


def format_checklist(items: Iterable[ChecklistItem]) -> str:
    lines = []
    for c in items:
        line = f"- {c.id} [{c.principle_id}]: {c.description}"
        if c.anchor_split is not None:
            line += f" (anchors {c.anchor_split.higher} vs {c.anchor_split.lower})"
        lines.append(line)
    return "\n".join(lines) if lines else "(none)"


def format_solutions(outputs: Mapping[str, str]) -> str:
    return "\n\n".join(f"=== Candidate {cid} ===\n\n{text}" for cid, text in outputs.items())


def format_coverage(counts: Mapping[str, int]) -> str:
    return "\n".join(f"{pid}: {n}" for pid, n in counts.items())


def _values(ctx: Mapping[str, Any]) -> dict[str, str]:
    values = {k: str(v) for k, v in ctx.items() if isinstance(v, (str, int, float))}
    rubric: Rubric | None = ctx.get("rubric")
    if rubric is not None:
        values.setdefault("principles_block", format_principles(rubric.principles))
        values.setdefault("checklist_block", format_checklist(rubric.checklist))
        values.setdefault("existing_items_block", format_checklist(rubric.checklist))
        values.setdefault("coverage_counts", format_coverage(coverage_counts(rubric)))
        values.setdefault("rubric_block", format_checklist(rubric.checklist))
        values.setdefault("task_type", rubric.task_type)
    outputs = ctx.get("outputs")
    if outputs is not None:
        values.setdefault("solutions_block", format_solutions(outputs))
        values.setdefault("n", str(len(outputs)))
    if "task_prompt" in values:
        values.setdefault("task_description", values["task_prompt"])
    return values


def _fill(text: str, values: Mapping[str, str]) -> str:
    template = Template(text)
    try:
        return template.substitute(values)
    except KeyError as exc:
        raise RenderError(exc.args[0]) from None


def render_prompt(kind: str, ctx: Mapping[str, Any]) -> PromptPair:
    """Render the system and user messages for ``kind``.

    ``ctx`` may carry placeholder values directly (``task_prompt``, ``k``,
    ``left_model`` ...) or structured inputs from which blocks are built:
    ``rubric`` yields the principle, checklist and coverage blocks and
    ``outputs`` (an ordered id -> text mapping) yields the solutions block.
    """
    if kind not in PROMPT_KINDS:
        raise ValueError(f"unknown prompt kind {kind!r}")
    values = _values(ctx)
    system = _fill(template_text(kind, "system"), values)
    user = _fill(template_text(kind, "user"), values)
    return PromptPair(system=system, user=user, kind=kind, token_estimate=estimate_tokens(system, user))
