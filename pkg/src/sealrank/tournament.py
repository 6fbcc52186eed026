"""Seeded single-elimination brackets and the induced per-task ranking."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .backends import JudgeRequest
from .errors import BracketError, JudgeCallError, NotFinishedError
from .evolution import ChecklistVersion, EvolutionPolicy, accept_item, evolve_once, should_evolve
from .judge import MatchJudgment, SeedTiers, evolution_reply, parse_pairwise, parse_seeding
from .prompts import render_prompt
from .rubric import Rubric
from .session import JudgeSession
from .verdict import DEFAULT_EPSILON, Margin, candidate_margin, decide_verdict, match_margin

logger = logging.getLogger(__name__)

SEEDING_POLICIES = ("listed", "alphabetical")


@dataclass(frozen=True)
class MatchRecord:
    task_id: str
    round_index: int
    round_label: str
    match_index: int
    left: str
    right: str
    judgment: MatchJudgment
    margin: float
    verdict: str
    winner: str
    checklist_version: int
    input_tokens: int = 0
    output_tokens: int = 0
    wall_time: float = 0.0
    tie_resolved: bool = False

    @property
    def ref(self) -> str:
        return f"{self.task_id}/r{self.round_index}/m{self.match_index}"

    @property
    def loser(self) -> str:
        return self.right if self.winner == self.left else self.left

    def to_dict(self, timing: bool = False) -> dict[str, Any]:
        out = {
            "task_id": self.task_id,
            "round": self.round_index,
            "round_label": self.round_label,
            "match": self.match_index,
            "left": self.left,
            "right": self.right,
            "margin": self.margin,
            "verdict": self.verdict,
            "verdict_claimed": self.judgment.verdict_claimed,
            "winner": self.winner,
            "tie_resolved": self.tie_resolved,
            "checklist_version": self.checklist_version,
            "judgment": self.judgment.to_dict(),
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MatchRecord":
        return cls(
            task_id=d["task_id"],
            round_index=d["round"],
            round_label=d["round_label"],
            match_index=d["match"],
            left=d["left"],
            right=d["right"],
            judgment=MatchJudgment.from_dict(d["judgment"]),
            margin=d["margin"],
            verdict=d["verdict"],
            winner=d["winner"],
            checklist_version=d["checklist_version"],
            input_tokens=d.get("input_tokens", 0),
            output_tokens=d.get("output_tokens", 0),
            wall_time=d.get("wall_time", 0.0),
            tie_resolved=d.get("tie_resolved", False),
        )


@dataclass
class BracketMatch:
    round_index: int
    position: int
    left: str
    right: str | None  # None is a bye
    winner: str | None = None
    record: MatchRecord | None = None

    @property
    def is_bye(self) -> bool:
        return self.right is None


def seeding_positions(size: int) -> list[int]:
    """Seed numbers in bracket-slot order for a power-of-two ``size``.

    Seeds 1 and 2 land in opposite halves, the top four in distinct quarters,
    and so on; each round-1 pair sums to ``size + 1``.
    """
    if size < 1 or size & (size - 1):
        raise ValueError("bracket size must be a power of two")
    order = [1]
    while len(order) < size:
        total = 2 * len(order) + 1
        order = [s for seed in order for s in (seed, total - seed)]
    return order


def round_label(round_index: int, n_rounds: int) -> str:
    remaining = 2 ** (n_rounds - round_index + 1)
    return {2: "final", 4: "semifinal", 8: "quarterfinal"}.get(remaining, f"round_of_{remaining}")


@dataclass
class Bracket:
    seeds: dict[str, int]
    slots: list[str | None]
    rounds: list[list[BracketMatch]] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.seeds)

    @property
    def padded_size(self) -> int:
        return len(self.slots)

    @property
    def n_rounds(self) -> int:
        return int(math.log2(self.padded_size))

    def label(self, round_index: int) -> str:
        return round_label(round_index, self.n_rounds)

    @property
    def complete(self) -> bool:
        return len(self.rounds) == self.n_rounds and all(m.winner for m in self.rounds[-1])

    @property
    def champion(self) -> str:
        if not self.complete:
            raise NotFinishedError("bracket not finished")
        return self.rounds[-1][0].winner

    def open_round(self) -> list[BracketMatch]:
        """Create the next round from the previous winners and return it."""
        if self.rounds and not all(m.winner for m in self.rounds[-1]):
            raise BracketError("current round still has undecided matches")
        if len(self.rounds) == self.n_rounds:
            raise BracketError("bracket already complete")
        r = len(self.rounds) + 1
        if r == 1:
            entrants = self.slots
        else:
            entrants = [m.winner for m in self.rounds[-1]]
        matches = []
        for pos in range(len(entrants) // 2):
            a, b = entrants[2 * pos], entrants[2 * pos + 1]
            if a is None and b is None:
                raise BracketError("empty bracket pairing")
            left, right = (a, b) if a is not None else (b, a)
            m = BracketMatch(r, pos, left, right)
            if m.is_bye:
                m.winner = left
            matches.append(m)
        self.rounds.append(matches)
        return matches

    @property
    def played(self) -> list[BracketMatch]:
        return [m for rnd in self.rounds for m in rnd if not m.is_bye and m.record is not None]


def seed_order(tiers: SeedTiers, policy: str = "listed") -> list[str]:
    """Candidates in seed order: tier first, then the policy's order within a tier."""
    if policy not in SEEDING_POLICIES:
        raise ValueError(f"unknown seeding policy {policy!r}")
    out: list[str] = []
    for members in tiers.tiers:
        out.extend(sorted(members) if policy == "alphabetical" else members)
    return out


def build_bracket(tiers: SeedTiers, policy: str = "listed") -> Bracket:
    ordered = seed_order(tiers, policy)
    n = len(ordered)
    if n < 2:
        raise BracketError("a bracket needs at least two candidates")
    size = 1 << (n - 1).bit_length()
    seeds = {c: i for i, c in enumerate(ordered, start=1)}
    slots = [ordered[s - 1] if s <= n else None for s in seeding_positions(size)]
    return Bracket(seeds=seeds, slots=slots)


@dataclass(frozen=True)
class TaskRanking:
    task_id: str
    order: tuple[str, ...]
    margins: Mapping[str, float]
    exit_rounds: Mapping[str, int] = field(default_factory=dict)

    def rank_of(self, candidate: str) -> int:
        return self.order.index(candidate) + 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "order": list(self.order),
            "margins": {c: self.margins[c] for c in self.order},
            "exit_rounds": {c: self.exit_rounds[c] for c in self.order if c in self.exit_rounds},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TaskRanking":
        return cls(d["task_id"], tuple(d["order"]), dict(d["margins"]), dict(d.get("exit_rounds", {})))


def accumulated_margins(candidates: Iterable[str], records: Iterable[MatchRecord]) -> dict[str, float]:
    totals = {c: 0.0 for c in candidates}
    for rec in records:
        for c in (rec.left, rec.right):
            totals[c] = totals.get(c, 0.0) + candidate_margin(rec, c)
    return totals


def _key(x: float) -> float:
    return round(x, 12)


def rank_all(bracket: Bracket, records: Iterable[MatchRecord], task_id: str = "") -> TaskRanking:
    """Champion first, then losers by later exit round, accumulated margin, seed and id."""
    if not bracket.complete:
        raise NotFinishedError("bracket not finished")
    records = list(records)
    margins = accumulated_margins(bracket.seeds, records)
    exit_rounds = {c: bracket.n_rounds for c in bracket.seeds}
    for rnd in bracket.rounds:
        for m in rnd:
            if not m.is_bye:
                loser = m.right if m.winner == m.left else m.left
                exit_rounds[loser] = m.round_index
    champion = bracket.champion
    rest = sorted(
        (c for c in bracket.seeds if c != champion),
        key=lambda c: (-exit_rounds[c], -_key(margins[c]), bracket.seeds[c], c),
    )
    return TaskRanking(task_id or (records[0].task_id if records else ""), (champion, *rest), margins, exit_rounds)


@dataclass
class TournamentResult:
    task_id: str
    ranking: TaskRanking | None
    records: list[MatchRecord]
    rubric: Rubric
    tiers: SeedTiers | None = None
    bracket: Bracket | None = None
    evolution_calls: int = 0
    evolution_events: list[dict] = field(default_factory=list)
    failed: bool = False
    error: str | None = None


def judge_match(
    session: JudgeSession,
    protocol: str,
    task_id: str,
    task_prompt: str,
    outputs: Mapping[str, str],
    rubric: Rubric,
    left: str,
    right: str,
    *,
    round_index: int = 1,
    label: str = "",
    match_index: int = 0,
    checklist_version: int = 0,
    epsilon: float = DEFAULT_EPSILON,
    prior_margins: Mapping[str, float] | None = None,
    seeds: Mapping[str, int] | None = None,
) -> MatchRecord:
    """Run one pairwise judge call and turn its votes into a winner."""
    prompt = render_prompt(
        "pairwise",
        {
            "task_prompt": task_prompt,
            "rubric": rubric,
            "left_model": left,
            "left_output": outputs[left],
            "right_model": right,
            "right_output": outputs[right],
        },
    )
    request = JudgeRequest(
        prompt, task_id, candidates=(left, right), meta={"rubric": rubric, "checklist_version": checklist_version}
    )
    judgment, reply = session.call(protocol, request, lambda raw: parse_pairwise(raw, rubric))
    margin = match_margin(judgment, rubric, epsilon)
    verdict = decide_verdict(margin)
    if verdict != judgment.verdict_claimed:
        logger.debug("claimed verdict %s differs from computed %s in %s", judgment.verdict_claimed, verdict, task_id)
    tie_resolved = verdict == "tie"
    if verdict == "left":
        winner = left
    elif verdict == "right":
        winner = right
    else:
        pm = prior_margins or {}
        sd = seeds or {}
        winner = min(
            (left, right), key=lambda c: (-_key(pm.get(c, 0.0)), sd.get(c, math.inf), c)
        )
    return MatchRecord(
        task_id=task_id,
        round_index=round_index,
        round_label=label,
        match_index=match_index,
        left=left,
        right=right,
        judgment=judgment,
        margin=margin.value,
        verdict=verdict,
        winner=winner,
        checklist_version=checklist_version,
        input_tokens=reply.input_tokens,
        output_tokens=reply.output_tokens,
        tie_resolved=tie_resolved,
    )


def request_seeding(
    session: JudgeSession,
    protocol: str,
    task_id: str,
    task_prompt: str,
    outputs: Mapping[str, str],
    rubric: Rubric,
    k: int,
) -> SeedTiers:
    pool = sorted(outputs)
    prompt = render_prompt(
        "seeding", {"task_prompt": task_prompt, "rubric": rubric, "outputs": {c: outputs[c] for c in pool}, "k": k}
    )
    request = JudgeRequest(prompt, task_id, candidates=tuple(pool), meta={"k": k})
    tiers, _ = session.call(protocol, request, lambda raw: parse_seeding(raw, pool))
    return tiers


def default_tiers(n: int) -> int:
    return math.ceil(n / 2)


def run_task_tournament(
    task_id: str,
    task_prompt: str,
    outputs: Mapping[str, str],
    rubric: Rubric,
    session: JudgeSession,
    evo: EvolutionPolicy | None = None,
    *,
    protocol: str = "seal",
    k: int | None = None,
    seeding_policy: str = "listed",
    epsilon: float = DEFAULT_EPSILON,
) -> TournamentResult:
    """Seed, play the bracket round by round, evolve the checklist between rounds, rank.

    Matches of one round are judged under the same checklist version; any
    items admitted after a round apply from the next round on.
    """
    evo = evo or EvolutionPolicy.disabled()
    if len(outputs) < 2:
        raise BracketError("a bracket needs at least two candidates")
    result = TournamentResult(task_id, None, [], rubric)
    log = session.log
    try:
        tiers = request_seeding(
            session, protocol, task_id, task_prompt, outputs, rubric, k if k is not None else default_tiers(len(outputs))
        )
        result.tiers = tiers
        bracket = build_bracket(tiers, seeding_policy)
        result.bracket = bracket
        checklist = ChecklistVersion.seed(rubric)
        current = rubric
        items_added = 0
        margins = {c: 0.0 for c in outputs}
        for _ in range(bracket.n_rounds):
            matches = bracket.open_round()
            round_records = []
            for m in matches:
                if m.is_bye:
                    continue
                rec = judge_match(
                    session, protocol, task_id, task_prompt, outputs, current, m.left, m.right,
                    round_index=m.round_index, label=bracket.label(m.round_index), match_index=m.position,
                    checklist_version=checklist.version, epsilon=epsilon, prior_margins=margins, seeds=bracket.seeds,
                )
                m.winner, m.record = rec.winner, rec
                round_records.append(rec)
                result.records.append(rec)
                if log is not None:
                    log.add_record("match", f"{protocol}:{rec.ref}", {"protocol": protocol, **rec.to_dict()})
            for rec in round_records:
                for c in (rec.left, rec.right):
                    margins[c] += candidate_margin(rec, c)
            if not evo.enabled:
                continue
            for rec in sorted(round_records, key=lambda r: (abs(r.margin), r.match_index)):
                if not should_evolve(rec, evo, items_added):
                    continue
                result.evolution_calls += 1
                item = evolve_once(rec, current, session, task_prompt, outputs, protocol)
                event = {"protocol": protocol, "task_id": task_id, "match": rec.ref, "version": checklist.version}
                if item is None:
                    event.update(accepted=False, reason="evolution call failed")
                else:
                    checklist, reason = accept_item(checklist, item, rec.ref)
                    event.update(accepted=reason is None, reason=reason, item=evolution_reply(item))
                    if reason is None:
                        items_added += 1
                        current = rubric.with_checklist(checklist.items)
                result.evolution_events.append(event)
                if log is not None:
                    log.add_record("evolution", f"{protocol}:{rec.ref}:evo{result.evolution_calls}", event)
        result.rubric = current
        result.ranking = rank_all(bracket, result.records, task_id)
    except JudgeCallError as exc:
        result.failed = True
        result.error = str(exc)
        logger.error("task %s failed under %s: %s", task_id, protocol, exc)
    return result
