"""Benchmark fixtures: tasks, candidate pool, native scores and cached outputs.

A fixture is a directory holding ``manifest.json`` and ``outputs.jsonl``
(one ``{"task_id", "candidate_id", "output"}`` object per line).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import FixtureError
from .rubric import TASK_TYPES
from .sim import LatentWorld

MANIFEST = "manifest.json"
OUTPUTS = "outputs.jsonl"


@dataclass(frozen=True)
class Task:
    task_id: str
    task_type: str
    prompt: str
    native_metric: str = ""


@dataclass
class BenchmarkFixture:
    benchmark: str
    tasks: list[Task]
    native_scores: dict[str, float | None]
    outputs: dict[tuple[str, str], str] = field(default_factory=dict)

    @property
    def pool(self) -> list[str]:
        return sorted(self.native_scores)

    def task_outputs(self, task_id: str) -> dict[str, str]:
        return {c: self.outputs[(task_id, c)] for c in self.pool}

    def manifest(self) -> dict[str, Any]:
        return {
            "benchmark": self.benchmark,
            "tasks": [
                {"task_id": t.task_id, "task_type": t.task_type, "prompt": t.prompt, "native_metric": t.native_metric}
                for t in self.tasks
            ],
            "candidates": [{"id": c, "native_score": s} for c, s in sorted(self.native_scores.items())],
        }

    def save(self, directory: str | Path) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / MANIFEST).write_text(json.dumps(self.manifest(), indent=2) + "\n", encoding="utf-8")
        with open(d / OUTPUTS, "w", encoding="utf-8") as fh:
            for t in self.tasks:
                for c in self.pool:
                    if (t.task_id, c) in self.outputs:
                        row = {"task_id": t.task_id, "candidate_id": c, "output": self.outputs[(t.task_id, c)]}
                        fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        return d


def _read(directory: Path) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    try:
        manifest = json.loads((directory / MANIFEST).read_text(encoding="utf-8"))
        rows = [json.loads(line) for line in (directory / OUTPUTS).read_text(encoding="utf-8").splitlines() if line]
    except (OSError, json.JSONDecodeError) as exc:
        raise FixtureError(f"cannot read fixture at {directory}: {exc}") from exc
    return manifest, rows


def validate_fixture(path: str | Path) -> list[str]:
    """List problems with a fixture directory; empty means valid."""
    manifest, rows = _read(Path(path))
    problems = []
    tasks = manifest.get("tasks", [])
    cands = manifest.get("candidates", [])
    for tid, n in Counter(t.get("task_id") for t in tasks).items():
        if n > 1:
            problems.append(f"duplicate task id {tid}")
    for cid, n in Counter(c.get("id") for c in cands).items():
        if n > 1:
            problems.append(f"duplicate candidate id {cid}")
    for t in tasks:
        if t.get("task_type") not in TASK_TYPES:
            problems.append(f"task {t.get('task_id')} has unsupported task type {t.get('task_type')!r}")
    for c in cands:
        if c.get("native_score") is None:
            problems.append(f"candidate {c.get('id')} has no native score")
    have = Counter((r.get("task_id"), r.get("candidate_id")) for r in rows)
    for key, n in have.items():
        if n > 1:
            problems.append(f"duplicate output for task {key[0]}, candidate {key[1]}")
    for t in tasks:
        for c in cands:
            if (t.get("task_id"), c.get("id")) not in have:
                problems.append(f"missing output for task {t.get('task_id')}, candidate {c.get('id')}")
    task_ids = {t.get("task_id") for t in tasks}
    cand_ids = {c.get("id") for c in cands}
    for tid, cid in have:
        if tid not in task_ids or cid not in cand_ids:
            problems.append(f"output for unknown task/candidate {tid}/{cid}")
    return problems


def load_fixture(path: str | Path, *, validate: bool = True) -> BenchmarkFixture:
    directory = Path(path)
    if validate:
        problems = validate_fixture(directory)
        if problems:
            raise FixtureError(f"fixture {directory} is invalid: " + "; ".join(problems[:10]))
    manifest, rows = _read(directory)
    return BenchmarkFixture(
        benchmark=manifest.get("benchmark", directory.name),
        tasks=[Task(t["task_id"], t["task_type"], t["prompt"], t.get("native_metric", "")) for t in manifest["tasks"]],
        native_scores={c["id"]: c.get("native_score") for c in manifest["candidates"]},
        outputs={(r["task_id"], r["candidate_id"]): r["output"] for r in rows},
    )


def make_sim_fixture(
    world: LatentWorld,
    n_tasks: int,
    *,
    task_type: str = "code_generation",
    benchmark: str = "sim",
    native_noise: float = 0.02,
    native_metric: str = "pass@1",
    seed: int = 0,
) -> BenchmarkFixture:
    """Synthetic fixture for a world: placeholder outputs plus saturated native scores.

    Native scores are the true weighted quality plus Gaussian noise, clipped
    to [0, 1] and rounded to 3 decimals, mimicking a coarse near-ceiling metric.
    """
    rng = np.random.default_rng(seed)
    pool = world.candidates
    tasks = [
        Task(f"task_{i:04d}", task_type, f"Synthetic {task_type} task {i}.", native_metric) for i in range(n_tasks)
    ]
    native = {}
    for c in pool:
        value = world.mean_quality(c) + float(rng.normal(0.0, native_noise))
        native[c] = round(min(1.0, max(0.0, value)), 3)
    outputs = {(t.task_id, c): f"[{c}] response to {t.task_id}" for t in tasks for c in pool}
    return BenchmarkFixture(benchmark, tasks, native, outputs)
