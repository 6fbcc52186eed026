"""End-to-end benchmark runs: protocols over a fixture, resumable run directory, artifacts."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .backends import JudgeBackend, LiveBackend
from .baselines import (
    ProtocolRun,
    generate_fixed_rubric,
    run_full_pair,
    run_listwise,
    run_original,
    run_pointwise,
)
from .errors import ConfigError, JudgeCallError, ResumeConflictError
from .evolution import EvolutionPolicy
from .fixtures import BenchmarkFixture, Task, load_fixture
from .ledger import PROTOCOLS, CallEvent, Ledger, PricingConfig, ledger_summary
from .metrics import Leaderboard, StabilityReport, borda_aggregate, mean_scores, score_leaderboard, subsample_stability
from .rubric import Rubric, load_rubric, load_rubric_file
from .session import JudgeSession, RunLog
from .sim import LatentWorld, SimBackend, true_ranking
from .tournament import TaskRanking, run_task_tournament
from .verdict import DEFAULT_EPSILON

logger = logging.getLogger(__name__)

BRACKET_PROTOCOLS = ("flat_bracket", "seal")
RANKING_PROTOCOLS = ("listwise", "flat_bracket", "seal", "full_pair")
SCORE_PROTOCOLS = ("pointwise", "fixed_rubric")
# config fields that do not change results
_VOLATILE = {"out", "workers", "run_id"}


@dataclass
class RunConfig:
    fixture: str
    protocols: tuple[str, ...] = PROTOCOLS
    backend: str = "sim"
    world: str | None = None
    backend_seed: int | None = None
    endpoint: str | None = None
    model: str | None = None
    rubric_overrides: dict[str, str] = field(default_factory=dict)
    evolution: EvolutionPolicy = field(default_factory=EvolutionPolicy)
    k: int | None = None
    seeding_policy: str = "listed"
    epsilon: float = DEFAULT_EPSILON
    pricing: PricingConfig = field(default_factory=PricingConfig)
    out: str = "runs"
    seed: int = 0
    subsample_fraction: float | None = None
    subsample_seeds: int = 30
    workers: int = 1
    max_attempts: int = 2
    run_id: str | None = None

    def __post_init__(self):
        self.protocols = tuple(self.protocols)
        unknown = [p for p in self.protocols if p not in PROTOCOLS]
        if unknown:
            raise ConfigError(f"unknown protocols: {', '.join(unknown)}")
        if self.backend not in ("sim", "live"):
            raise ConfigError("backend must be 'sim' or 'live'")
        if self.backend == "sim" and not self.world:
            raise ConfigError("the sim backend needs --world")
        if self.backend == "live" and not (self.endpoint and self.model):
            raise ConfigError("the live backend needs --endpoint and --model")
        if not Path(self.fixture).exists():
            raise ConfigError(f"fixture path does not exist: {self.fixture}")
        if self.world and not Path(self.world).exists():
            raise ConfigError(f"world file does not exist: {self.world}")

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, EvolutionPolicy):
                value = value.to_dict()
            elif isinstance(value, PricingConfig):
                value = asdict(value)
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        data = dict(data)
        evo = data.pop("evolution", None)
        pricing = data.pop("pricing", None)
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in known}
        if evo is not None:
            kwargs["evolution"] = EvolutionPolicy(
                enabled=evo["enabled"],
                trigger_rounds=frozenset(evo["trigger_rounds"]),
                closeness_threshold=evo["closeness_threshold"],
                max_items_per_task=evo["max_items_per_task"],
            )
        if pricing is not None:
            kwargs["pricing"] = PricingConfig(**pricing)
        return cls(**kwargs)

    def content_hash(self) -> str:
        stable = {k: v for k, v in self.to_dict().items() if k not in _VOLATILE}
        for key in ("fixture", "world"):
            if stable.get(key):
                stable[key] = _file_digest(Path(stable[key]))
        stable["rubric_overrides"] = {t: _file_digest(Path(p)) for t, p in sorted(self.rubric_overrides.items())}
        return hashlib.sha256(json.dumps(stable, sort_keys=True).encode()).hexdigest()


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    paths = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for p in paths:
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclass
class RunArtifacts:
    benchmark: str
    pool: list[str]
    tasks: list[str]
    runs: dict[str, ProtocolRun]
    leaderboards: dict[str, Leaderboard]
    events: list[CallEvent]
    sequential_calls: dict[str, float] = field(default_factory=dict)
    stability: StabilityReport | None = None
    truth: list[str] | None = None
    run_dir: Path | None = None
    config: RunConfig | None = None

    def calls_per_task(self, protocol: str) -> float:
        n = sum(1 for e in self.events if e.protocol == protocol)
        return n / len(self.tasks) if self.tasks else 0.0


def make_backend(config: RunConfig) -> JudgeBackend:
    if config.backend == "sim":
        world = LatentWorld.load(config.world)
        if config.backend_seed is not None:
            world = world.with_seed(config.backend_seed)
        return SimBackend(world)
    return LiveBackend(config.endpoint, config.model)


def rubric_for(task_type: str, overrides: Mapping[str, str]) -> Rubric:
    if task_type in overrides:
        return load_rubric_file(overrides[task_type])
    return load_rubric(task_type)


def _parallel(fn: Callable[[Task], Any], tasks: Sequence[Task], workers: int) -> list[Any]:
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def execute_protocol(
    protocol: str,
    fixture: BenchmarkFixture,
    session: JudgeSession,
    *,
    rubrics: Mapping[str, Rubric],
    evolution: EvolutionPolicy,
    k: int | None = None,
    seeding_policy: str = "listed",
    epsilon: float = DEFAULT_EPSILON,
    workers: int = 1,
) -> tuple[ProtocolRun, dict[str, int]]:
    """Run one protocol over every fixture task; returns the run and per-task sequential call depth."""
    if protocol == "original":
        return run_original(fixture.native_scores, fixture.pool), {}
    run = ProtocolRun(protocol)
    depth: dict[str, int] = {}
    tasks = fixture.tasks

    if protocol in SCORE_PROTOCOLS:
        criteria: dict[str, Any] = {}
        if protocol == "fixed_rubric":
            for task_type in sorted({t.task_type for t in tasks}):
                criteria[task_type] = generate_fixed_rubric(session, rubrics[task_type], fixture.benchmark)

        def one(t: Task):
            return run_pointwise(
                t.task_id, t.prompt, fixture.task_outputs(t.task_id), session, rubrics[t.task_type],
                criteria.get(t.task_type), protocol,
            )

        for t, scores in zip(tasks, _parallel(one, tasks, workers)):
            run.scores[t.task_id] = scores
            depth[t.task_id] = 1 + (1 if protocol == "fixed_rubric" else 0)
        return run, depth

    def one(t: Task):
        outputs = fixture.task_outputs(t.task_id)
        rubric = rubrics[t.task_type]
        try:
            if protocol == "listwise":
                return run_listwise(t.task_id, t.prompt, outputs, session, rubric)
            if protocol == "full_pair":
                return run_full_pair(t.task_id, t.prompt, outputs, rubric, session, epsilon)
            evo = evolution if protocol == "seal" else EvolutionPolicy.disabled()
            return run_task_tournament(
                t.task_id, t.prompt, outputs, rubric, session, evo,
                protocol=protocol, k=k, seeding_policy=seeding_policy, epsilon=epsilon,
            )
        except JudgeCallError as exc:
            return exc

    for t, res in zip(tasks, _parallel(one, tasks, workers)):
        tid = t.task_id
        if isinstance(res, Exception):
            run.failures[tid] = str(res)
        elif protocol == "listwise":
            run.rankings[tid] = res
            depth[tid] = 1
        elif protocol == "full_pair":
            ranking, records, failed = res
            run.rankings[tid] = ranking
            run.records[tid] = records
            if failed:
                run.failures[tid] = f"{failed} matches failed"
            depth[tid] = 1
        else:
            run.records[tid] = res.records
            run.evolution_events[tid] = res.evolution_events
            if res.failed:
                run.failures[tid] = res.error or "failed"
                continue
            run.rankings[tid] = res.ranking
            played_rounds = len({r.round_index for r in res.records})
            depth[tid] = 1 + played_rounds + res.evolution_calls
    return run, depth


def leaderboard_for(run: ProtocolRun, pool: Sequence[str], benchmark: str) -> Leaderboard:
    if run.protocol == "original":
        return score_leaderboard(run.native_scores, benchmark, "original")
    if run.protocol in SCORE_PROTOCOLS:
        return score_leaderboard(mean_scores(run.scores, pool), benchmark, run.protocol)
    return borda_aggregate(run.rankings.values(), pool, benchmark, run.protocol)


def run_protocols(
    fixture: BenchmarkFixture,
    backend: JudgeBackend,
    protocols: Sequence[str] = PROTOCOLS,
    *,
    evolution: EvolutionPolicy | None = None,
    rubric_overrides: Mapping[str, str] | None = None,
    k: int | None = None,
    seeding_policy: str = "listed",
    epsilon: float = DEFAULT_EPSILON,
    log: RunLog | None = None,
    workers: int = 1,
    max_attempts: int = 2,
) -> RunArtifacts:
    """Run protocols in memory (optionally through a resumable log) and build leaderboards."""
    evolution = evolution if evolution is not None else EvolutionPolicy()
    rubrics = {t.task_type: rubric_for(t.task_type, rubric_overrides or {}) for t in fixture.tasks}
    ledger = Ledger()
    runs: dict[str, ProtocolRun] = {}
    depth: dict[str, float] = {}
    ordered = [p for p in PROTOCOLS if p in protocols]
    for protocol in ordered:
        session = JudgeSession(backend, ledger, log, max_attempts=max_attempts)
        run, per_task = execute_protocol(
            protocol, fixture, session, rubrics=rubrics, evolution=evolution, k=k,
            seeding_policy=seeding_policy, epsilon=epsilon, workers=workers,
        )
        runs[protocol] = run
        n_tasks = len(fixture.tasks)
        depth[protocol] = sum(per_task.values()) / n_tasks if per_task else 0.0
        if protocol == "fixed_rubric":
            depth[protocol] = 1 + 1 / n_tasks
        logger.info("%s finished: %d failures", protocol, len(run.failures))
    leaderboards = {p: leaderboard_for(runs[p], fixture.pool, fixture.benchmark) for p in ordered}
    truth = None
    if isinstance(backend, SimBackend):
        truth = true_ranking(backend.world)
    return RunArtifacts(
        benchmark=fixture.benchmark,
        pool=fixture.pool,
        tasks=[t.task_id for t in fixture.tasks],
        runs=runs,
        leaderboards=leaderboards,
        events=ledger.events,
        sequential_calls=depth,
        truth=truth,
    )


def stability_for(artifacts: RunArtifacts, fraction: float, n_seeds: int, seed: int = 0) -> StabilityReport:
    protocol = next((p for p in ("seal", "flat_bracket", "full_pair", "listwise") if p in artifacts.runs), None)
    if protocol is None:
        raise ConfigError("stability needs a ranking protocol in the run")
    rankings = [artifacts.runs[protocol].rankings[t] for t in artifacts.tasks if t in artifacts.runs[protocol].rankings]
    return subsample_stability(rankings, artifacts.pool, fraction, range(seed, seed + n_seeds), artifacts.benchmark)


def prepare_run_dir(config: RunConfig) -> Path:
    digest = config.content_hash()
    run_dir = Path(config.out) / (config.run_id or digest[:12])
    cfg_path = run_dir / "config.json"
    if cfg_path.exists():
        previous = json.loads(cfg_path.read_text(encoding="utf-8"))
        if previous.get("hash") != digest:
            raise ResumeConflictError(
                f"{run_dir} holds a run with a different configuration; choose another --out or run id"
            )
        logger.info("resuming run in %s", run_dir)
    else:
        run_dir.mkdir(parents=True, exist_ok=True)
        atomic_write(cfg_path, json.dumps({"hash": digest, "config": config.to_dict()}, indent=2, sort_keys=True) + "\n")
    return run_dir


def run_benchmark(config: RunConfig, backend: JudgeBackend | None = None) -> RunArtifacts:
    """Run every configured protocol, persist results under the run directory, emit reports."""
    from .report import emit_reports, write_results

    fixture = load_fixture(config.fixture)
    run_dir = prepare_run_dir(config)
    backend = backend or make_backend(config)
    log = RunLog(run_dir / "log.jsonl")
    artifacts = run_protocols(
        fixture, backend, config.protocols,
        evolution=config.evolution, rubric_overrides=config.rubric_overrides, k=config.k,
        seeding_policy=config.seeding_policy, epsilon=config.epsilon, log=log,
        workers=config.workers, max_attempts=config.max_attempts,
    )
    artifacts.run_dir = run_dir
    artifacts.config = config
    if artifacts.truth is None and config.backend == "sim":
        artifacts.truth = true_ranking(LatentWorld.load(config.world))
    if config.subsample_fraction:
        artifacts.stability = stability_for(artifacts, config.subsample_fraction, config.subsample_seeds, config.seed)
    write_results(artifacts, run_dir)
    emit_reports(artifacts, run_dir / "reports", pricing=config.pricing)
    return artifacts


def load_config(run_dir: str | Path) -> RunConfig:
    data = json.loads((Path(run_dir) / "config.json").read_text(encoding="utf-8"))
    return RunConfig.from_dict(data["config"])
