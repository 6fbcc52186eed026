"""Deterministic simulated judge over a latent per-candidate, per-principle quality world."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .backends import EVENT_KIND, JudgeReply, JudgeRequest, synthetic_reply
from .errors import BackendError, SealError
from .judge import ChecklistVote, MatchJudgment, PrincipleVote, SeedTiers, evolution_reply
from .rubric import AnchorSplit, ChecklistItem, DemonstrationPair, Rubric, coverage_counts
from .verdict import decide_verdict, match_margin

CONFIDENCE_GUARD = 1e-9


class UnknownCandidateIdError(SealError, KeyError):
    pass


@dataclass(frozen=True)
class LatentWorld:
    qualities: Mapping[str, tuple[float, ...]]
    noise_sigma: float = 0.0
    tie_band: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0 or self.tie_band < 0:
            raise ValueError("noise_sigma and tie_band must be nonnegative")
        lengths = {len(q) for q in self.qualities.values()}
        if len(lengths) > 1:
            raise ValueError("every candidate needs the same number of principle qualities")

    @property
    def candidates(self) -> tuple[str, ...]:
        return tuple(sorted(self.qualities))

    @property
    def n_principles(self) -> int:
        return len(next(iter(self.qualities.values())))

    def quality(self, candidate: str) -> np.ndarray:
        try:
            return np.asarray(self.qualities[candidate], dtype=float)
        except KeyError:
            raise UnknownCandidateIdError(candidate) from None

    def mean_quality(self, candidate: str, weights: Sequence[float] | None = None) -> float:
        q = self.quality(candidate)
        if weights is None:
            return float(q.mean())
        return float(np.dot(q, np.asarray(weights, dtype=float)))

    def with_seed(self, seed: int) -> "LatentWorld":
        return LatentWorld(dict(self.qualities), self.noise_sigma, self.tie_band, seed)

    def to_dict(self) -> dict[str, Any]:
        return {
            "candidates": {c: list(q) for c, q in sorted(self.qualities.items())},
            "noise_sigma": self.noise_sigma,
            "tie_band": self.tie_band,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LatentWorld":
        return cls(
            qualities={c: tuple(float(x) for x in q) for c, q in data["candidates"].items()},
            noise_sigma=float(data.get("noise_sigma", 0.0)),
            tie_band=float(data.get("tie_band", 0.0)),
            seed=int(data.get("seed", 0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LatentWorld":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def stream(*parts: object) -> np.random.Generator:
    """Random generator keyed by match identity rather than call order."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:16], "little"))


def pairwise_stream(world: LatentWorld, task_id: str, left: str, right: str, version: int) -> np.random.Generator:
    return stream("pairwise", world.seed, task_id, left, right, version)


def sim_pairwise(
    world: LatentWorld, left: str, right: str, rubric: Rubric, rng: np.random.Generator
) -> MatchJudgment:
    ql, qr = world.quality(left), world.quality(right)
    if len(ql) != len(rubric.principles):
        raise SealError(f"world has {len(ql)} principle qualities, rubric has {len(rubric.principles)} principles")
    noise = rng.normal(0.0, world.noise_sigma, size=len(ql)) if world.noise_sigma > 0 else np.zeros(len(ql))
    votes: dict[str, PrincipleVote] = {}
    for p, d_true, eps in zip(rubric.principles, ql - qr, noise):
        # d > 0 means the left response is better on this principle
        d = float(d_true + eps)
        if abs(d) < world.tie_band:
            vote = "tie"
        else:
            vote = "left" if d > 0 else "right" if d < 0 else "tie"
        confidence = min(1.0, max(0.0, abs(d) / (2 * world.tie_band + CONFIDENCE_GUARD)))
        votes[p.id] = PrincipleVote(p.id, vote, round(confidence, 12), f"latent gap {d:+.4f} on {p.id}")
    principle_votes = tuple(votes[p.id] for p in rubric.principles)
    checklist_votes = tuple(
        ChecklistVote(c.id, votes[c.principle_id].vote, votes[c.principle_id].confidence) for c in rubric.checklist
    )
    partial = MatchJudgment("tie", principle_votes, checklist_votes)
    verdict = decide_verdict(match_margin(partial, rubric))
    return MatchJudgment(verdict, principle_votes, checklist_votes)


def _noisy_order(world: LatentWorld, pool: Iterable[str], rng: np.random.Generator) -> list[str]:
    ids = sorted(pool)
    noise = rng.normal(0.0, world.noise_sigma, size=len(ids)) if world.noise_sigma > 0 else np.zeros(len(ids))
    scored = [(world.mean_quality(c) + float(e), c) for c, e in zip(ids, noise)]
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [c for _, c in scored]


def sim_seeding(world: LatentWorld, pool: Iterable[str], k: int, rng: np.random.Generator) -> SeedTiers:
    pool = list(pool)
    if not pool:
        raise ValueError("empty pool")
    if not 1 <= k <= len(pool):
        raise ValueError(f"invalid tier count k={k} for a pool of {len(pool)}")
    order = _noisy_order(world, pool, rng)
    n = len(order)
    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    tiers, start = [], 0
    for size in sizes:
        tiers.append(tuple(order[start : start + size]))
        start += size
    return SeedTiers(tuple(tiers), reasoning="ordered by simulated mean quality")


def sim_listwise(world: LatentWorld, pool: Iterable[str], rng: np.random.Generator) -> list[str]:
    return _noisy_order(world, pool, rng)


def sim_pointwise(
    world: LatentWorld, candidate: str, weights: Sequence[float], rng: np.random.Generator, *, per_principle: bool
) -> float:
    q = world.quality(candidate)
    w = np.asarray(weights, dtype=float)
    if per_principle:
        noisy = q + rng.normal(0.0, world.noise_sigma, size=len(q)) if world.noise_sigma > 0 else q
        score = float(np.dot(noisy, w))
    else:
        score = float(np.dot(q, w)) + (float(rng.normal(0.0, world.noise_sigma)) if world.noise_sigma > 0 else 0.0)
    # judges report coarse scores
    return round(min(1.0, max(0.0, score)), 2)


def true_ranking(world: LatentWorld, weights: Sequence[float] | None = None) -> list[str]:
    """Candidates by descending weighted mean quality, ties by id."""
    n = world.n_principles
    w = list(weights) if weights is not None else [1.0 / n] * n
    return sorted(world.candidates, key=lambda c: (-round(world.mean_quality(c, w), 12), c))


def sim_evolution_item(request: JudgeRequest) -> ChecklistItem:
    meta = request.meta
    rubric: Rubric = meta["rubric"]
    new_id: str = meta["new_id"]
    winner, loser = meta["winner"], meta["loser"]
    counts = coverage_counts(rubric)
    confidences = {v["principle_id"]: v["confidence"] for v in meta.get("loser_votes", ())}
    target = min(rubric.principles, key=lambda p: (counts[p.id], confidences.get(p.id, 1.0), p.id))
    late = meta.get("round_label") in ("semifinal", "final")
    return ChecklistItem(
        id=new_id,
        description=(
            f"{target.id} refinement {new_id}: separates {winner} from {loser} on task {request.task_id} "
            f"({target.description.rstrip('.').lower()})"
        ),
        principle_id=target.id,
        source="adversarial",
        anchor_split=AnchorSplit(5, 4) if late else AnchorSplit(4, 3),
        differentiator=f"{winner} shows the stronger observable behaviour under {target.id}.",
        demonstration_pair=DemonstrationPair(
            str(meta.get("winner_output", ""))[:80], str(meta.get("loser_output", ""))[:80]
        ),
    )


@dataclass
class SimBackend:
    """Judge backend answering from a :class:`LatentWorld`; replies are JSON text."""

    world: LatentWorld
    name: str = "sim"
    model: str = "latent-world"
    capabilities: frozenset[str] = field(default_factory=lambda: frozenset(EVENT_KIND.values()))

    def complete(self, request: JudgeRequest) -> JudgeReply:
        w = self.world
        meta = request.meta
        try:
            if request.kind == "pairwise":
                left, right = request.candidates
                rng = pairwise_stream(w, request.task_id, left, right, meta.get("checklist_version", 0))
                body = sim_pairwise(w, left, right, meta["rubric"], rng).to_dict()
            elif request.kind == "seeding":
                rng = stream("seeding", w.seed, request.task_id, *sorted(request.candidates))
                body = sim_seeding(w, request.candidates, int(meta["k"]), rng).to_dict()
            elif request.kind == "listwise":
                rng = stream("listwise", w.seed, request.task_id, *sorted(request.candidates))
                body = {"ranking": sim_listwise(w, request.candidates, rng), "reasoning": "simulated"}
            elif request.kind == "pointwise":
                (cand,) = request.candidates
                with_rubric = bool(meta.get("with_rubric"))
                rng = stream("pointwise", w.seed, request.task_id, cand, with_rubric)
                weights = [p.weight for p in meta["rubric"].principles]
                score = sim_pointwise(w, cand, weights, rng, per_principle=with_rubric)
                body = {"score": score, "reasoning": "simulated"}
            elif request.kind == "rubric_gen":
                rubric: Rubric = meta["rubric"]
                body = {
                    "criteria": [
                        {"principle_id": p.id, "description": f"Scores {p.description.rstrip('.').lower()}."}
                        for p in rubric.principles
                    ]
                }
            elif request.kind == "evolution":
                body = evolution_reply(sim_evolution_item(request))
            else:
                raise BackendError(f"sim backend cannot answer {request.kind!r}")
        except UnknownCandidateIdError as exc:
            raise BackendError(f"unknown candidate {exc}") from exc
        return synthetic_reply(request, json.dumps(body))


def generate_world(
    candidates: Sequence[str] | int = 8,
    n_principles: int = 6,
    *,
    seed: int = 0,
    low: float = 0.80,
    high: float = 0.95,
    noise_sigma: float = 0.0,
    tie_band: float = 0.0,
    spread: float = 0.03,
) -> LatentWorld:
    """Random world whose per-principle orders all agree with the mean order.

    Candidate base qualities are distinct draws in ``[low, high]``; each
    principle adds a shared offset (|offset| <= ``spread``) plus a per-candidate
    jitter below half the smallest base gap, so no principle reverses any pair.
    """
    rng = np.random.default_rng(seed)
    ids = [f"model_{i + 1}" for i in range(candidates)] if isinstance(candidates, int) else list(candidates)
    n = len(ids)
    base = np.sort(rng.uniform(low, high, size=n))
    gaps = np.diff(base)
    min_gap = float(gaps.min()) if n > 1 else 1.0
    offsets = rng.uniform(-spread, spread, size=n_principles)
    jitter = rng.uniform(-0.45 * min_gap, 0.45 * min_gap, size=(n, n_principles))
    q = np.clip(base[:, None] + offsets[None, :] + jitter, 0.0, 1.0)
    perm = rng.permutation(n)
    qualities = {ids[perm[i]]: tuple(float(round(x, 10)) for x in q[i]) for i in range(n)}
    return LatentWorld(qualities, noise_sigma=noise_sigma, tie_band=tie_band, seed=seed)
