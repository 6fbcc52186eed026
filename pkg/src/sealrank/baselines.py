"""Comparison protocols over the same cached outputs and judge backend."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Mapping

from .backends import JudgeRequest
from .errors import ConfigError, JudgeCallError, SealError
from .evolution import EvolutionPolicy
from .judge import parse_listwise, parse_pointwise, parse_rubric_gen
from .prompts import format_checklist, render_prompt
from .rubric import ChecklistItem, Rubric
from .session import JudgeSession
from .tournament import MatchRecord, TaskRanking, TournamentResult, accumulated_margins, judge_match, run_task_tournament
from .verdict import DEFAULT_EPSILON

logger = logging.getLogger(__name__)

BENCHMARK_TASK = "__benchmark__"
DEFAULT_MAX_PROMPT_TOKENS = 200_000


class PromptTooLargeError(SealError, ValueError):
    pass


@dataclass
class ProtocolRun:
    """Per-task results of one protocol; either rankings or scores per task."""

    protocol: str
    rankings: dict[str, TaskRanking] = field(default_factory=dict)
    scores: dict[str, dict[str, float]] = field(default_factory=dict)
    records: dict[str, list[MatchRecord]] = field(default_factory=dict)
    evolution_events: dict[str, list[dict]] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    native_scores: dict[str, float] | None = None

    @property
    def tasks(self) -> list[str]:
        return list(self.rankings) or list(self.scores)


def run_original(native_scores: Mapping[str, float | None], pool=None) -> ProtocolRun:
    """Rank by the benchmark's own metric; no judge calls."""
    pool = list(pool) if pool is not None else list(native_scores)
    missing = [c for c in pool if native_scores.get(c) is None]
    if missing:
        raise ConfigError(f"native score missing for {', '.join(missing)}")
    return ProtocolRun("original", native_scores={c: float(native_scores[c]) for c in pool})


def generate_fixed_rubric(
    session: JudgeSession, rubric: Rubric, benchmark: str, protocol: str = "fixed_rubric"
) -> tuple[ChecklistItem, ...]:
    """One rubric-generation call for the whole benchmark."""
    prompt = render_prompt("rubric_gen", {"benchmark": benchmark, "rubric": rubric})
    request = JudgeRequest(prompt, BENCHMARK_TASK, meta={"rubric": rubric})
    items, _ = session.call(protocol, request, lambda raw: parse_rubric_gen(raw, rubric))
    return items


def run_pointwise(
    task_id: str,
    task_prompt: str,
    outputs: Mapping[str, str],
    session: JudgeSession,
    rubric: Rubric,
    criteria: tuple[ChecklistItem, ...] | None = None,
    protocol: str | None = None,
) -> dict[str, float | None]:
    """One call per candidate; with ``criteria`` this is the fixed-rubric variant.

    A candidate whose call fails is returned with score None.
    """
    protocol = protocol or ("fixed_rubric" if criteria is not None else "pointwise")
    rubric_block = format_checklist(criteria) if criteria is not None else "(none)"
    scores: dict[str, float | None] = {}
    for cand in sorted(outputs):
        prompt = render_prompt(
            "pointwise",
            {
                "task_prompt": task_prompt,
                "rubric": rubric,
                "rubric_block": rubric_block,
                "candidate_model": cand,
                "candidate_output": outputs[cand],
            },
        )
        request = JudgeRequest(prompt, task_id, (cand,), meta={"rubric": rubric, "with_rubric": criteria is not None})
        try:
            scores[cand], _ = session.call(protocol, request, parse_pointwise)
        except JudgeCallError as exc:
            logger.warning("%s: candidate %s unscored on %s: %s", protocol, cand, task_id, exc)
            scores[cand] = None
    return scores


def run_listwise(
    task_id: str,
    task_prompt: str,
    outputs: Mapping[str, str],
    session: JudgeSession,
    rubric: Rubric,
    max_prompt_tokens: int = DEFAULT_MAX_PROMPT_TOKENS,
    protocol: str = "listwise",
) -> TaskRanking:
    pool = sorted(outputs)
    prompt = render_prompt(
        "listwise", {"task_prompt": task_prompt, "rubric": rubric, "outputs": {c: outputs[c] for c in pool}}
    )
    if prompt.token_estimate > max_prompt_tokens:
        raise PromptTooLargeError(f"listwise prompt for {task_id} needs ~{prompt.token_estimate} tokens")
    request = JudgeRequest(prompt, task_id, tuple(pool), meta={"rubric": rubric})
    order, _ = session.call(protocol, request, lambda raw: parse_listwise(raw, pool))
    return TaskRanking(task_id, tuple(order), {c: 0.0 for c in order})


def run_full_pair(
    task_id: str,
    task_prompt: str,
    outputs: Mapping[str, str],
    rubric: Rubric,
    session: JudgeSession,
    epsilon: float = DEFAULT_EPSILON,
    protocol: str = "full_pair",
) -> tuple[TaskRanking, list[MatchRecord], int]:
    """Judge every unordered pair once (lexicographic order) and rank by total margin.

    Returns the ranking, the completed match records and the failed-match count.
    """
    pool = sorted(outputs)
    records: list[MatchRecord] = []
    failures = 0
    for i, (left, right) in enumerate(itertools.combinations(pool, 2)):
        try:
            rec = judge_match(
                session, protocol, task_id, task_prompt, outputs, rubric, left, right,
                round_index=1, label="pair", match_index=i, epsilon=epsilon,
            )
        except JudgeCallError as exc:
            failures += 1
            logger.warning("full_pair: %s vs %s failed on %s: %s", left, right, task_id, exc)
            continue
        records.append(rec)
        if session.log is not None:
            session.log.add_record("match", f"{protocol}:{rec.ref}", {"protocol": protocol, **rec.to_dict()})
    margins = accumulated_margins(pool, records)
    order = sorted(pool, key=lambda c: (-round(margins[c], 12), c))
    return TaskRanking(task_id, tuple(order), margins), records, failures


def run_flat_bracket(
    task_id: str,
    task_prompt: str,
    outputs: Mapping[str, str],
    rubric: Rubric,
    session: JudgeSession,
    **kwargs: Any,
) -> TournamentResult:
    """The tournament backbone with the checklist held at its seed version."""
    kwargs.setdefault("protocol", "flat_bracket")
    return run_task_tournament(task_id, task_prompt, outputs, rubric, session, EvolutionPolicy.disabled(), **kwargs)
