"""Command-line entry point: ``sealrank <command> [flags]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .backends import JudgeReply, JudgeRequest
from .errors import SealError
from .evolution import EvolutionPolicy
from .fixtures import load_fixture, make_sim_fixture, validate_fixture
from .ledger import PROTOCOLS, PricingConfig
from .metrics import rerun_stability, subsample_stability
from .report import LABELS, rerun_csv, stability_csv
from .rubric import load_rubric
from .runner import RunConfig, atomic_write, load_config, run_benchmark
from .sim import generate_world
from .tournament import TaskRanking
from .verdict import DEFAULT_EPSILON


class CacheMissError(SealError):
    """Raised when a report is requested for a run whose log lacks a call."""


class CacheOnlyBackend:
    name = "cache-only"

    def complete(self, request: JudgeRequest) -> JudgeReply:
        raise CacheMissError(f"run is incomplete ({request.kind} call for {request.task_id} not logged); use resume")


def _protocols(text: str) -> tuple[str, ...]:
    if text == "all":
        return PROTOCOLS
    names = tuple(p.strip() for p in text.split(",") if p.strip())
    bad = [p for p in names if p not in PROTOCOLS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown protocol(s): {', '.join(bad)}; choose from {', '.join(PROTOCOLS)}")
    return names


def _override(text: str) -> tuple[str, str]:
    task_type, sep, path = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("expected TASK_TYPE=PATH")
    return task_type, path


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sealrank", description="Re-rank saturated benchmarks with judge tournaments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a fixture directory")
    v.add_argument("--fixture", required=True)

    r = sub.add_parser("run", help="run protocols over a fixture")
    r.add_argument("--fixture", required=True, help="fixture directory (manifest.json + outputs.jsonl)")
    r.add_argument("--protocols", type=_protocols, default=PROTOCOLS, help="comma list or 'all' (default: all)")
    r.add_argument("--backend", choices=("sim", "live"), default="sim")
    r.add_argument("--world", help="latent world JSON for the sim backend")
    r.add_argument("--endpoint", help="OpenAI-compatible base URL for the live backend")
    r.add_argument("--model", help="judge model name for the live backend")
    r.add_argument("--seed", type=int, default=0, help="seed for subsampling (default: 0)")
    r.add_argument("--backend-seed", type=int, help="override the sim world's noise seed")
    r.add_argument("--subsample-fraction", type=float, help="also report subsample stability at this task fraction")
    r.add_argument("--subsample-seeds", type=int, default=30)
    r.add_argument("--workers", type=int, default=1, help="tasks judged in parallel (default: 1)")
    r.add_argument("--out", default="runs", help="parent directory for run directories (default: runs)")
    r.add_argument("--run-id", help="run directory name (default: config hash prefix)")
    r.add_argument("--k", type=int, help="seeding tiers (default: ceil(N/2))")
    r.add_argument("--seeding-policy", choices=("listed", "alphabetical"), default="listed")
    r.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="tie threshold on the match margin")
    r.add_argument("--no-evolution", action="store_true", help="run SEAL with the seed checklist only")
    r.add_argument("--max-evolution-items", type=int, default=EvolutionPolicy().max_items_per_task)
    r.add_argument("--closeness-threshold", type=float, default=EvolutionPolicy().closeness_threshold)
    r.add_argument("--pricing", help="YAML file with input_rate and output_rate (per 1M tokens)")
    r.add_argument("--rubric", type=_override, action="append", default=[], metavar="TASK_TYPE=PATH")
    r.add_argument("--max-attempts", type=int, default=2, help="judge attempts per call (default: 2)")

    for name, text in (("resume", "continue an interrupted run"), ("report", "re-emit reports of a finished run")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--run-dir", required=True)
        s.add_argument("--workers", type=int)

    st = sub.add_parser("stability", help="subsample stability of one run, or rerun stability across runs")
    st.add_argument("--run-dir", nargs="+", required=True, help="one run (subsample) or several (rerun)")
    st.add_argument("--protocol", default="seal")
    st.add_argument("--subsample-fraction", type=float, default=0.5)
    st.add_argument("--subsample-seeds", type=int, default=30)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--out", help="CSV output path (default: stdout)")

    w = sub.add_parser("make-world", help="generate a sim world and a matching fixture")
    w.add_argument("--out", required=True, help="world JSON path")
    w.add_argument("--fixture-out", help="also write a fixture directory here")
    w.add_argument("--candidates", type=int, default=8)
    w.add_argument("--task-type", default="code_generation")
    w.add_argument("--tasks", type=int, default=20)
    w.add_argument("--benchmark", default="sim")
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--noise", type=float, default=0.0, help="judge noise sigma")
    w.add_argument("--tie-band", type=float, default=0.0)
    w.add_argument("--low", type=float, default=0.80)
    w.add_argument("--high", type=float, default=0.95)
    w.add_argument("--native-noise", type=float, default=0.02)
    return p


def _config_from_args(a: argparse.Namespace) -> RunConfig:
    return RunConfig(
        fixture=a.fixture,
        protocols=a.protocols,
        backend=a.backend,
        world=a.world,
        backend_seed=a.backend_seed,
        endpoint=a.endpoint,
        model=a.model,
        rubric_overrides=dict(a.rubric),
        evolution=EvolutionPolicy(
            enabled=not a.no_evolution,
            closeness_threshold=a.closeness_threshold,
            max_items_per_task=a.max_evolution_items,
        ),
        k=a.k,
        seeding_policy=a.seeding_policy,
        epsilon=a.epsilon,
        pricing=PricingConfig.from_file(a.pricing) if a.pricing else PricingConfig(),
        out=a.out,
        seed=a.seed,
        subsample_fraction=a.subsample_fraction,
        subsample_seeds=a.subsample_seeds,
        workers=a.workers,
        max_attempts=a.max_attempts,
        run_id=a.run_id,
    )


def _reopen(run_dir: str, workers: int | None) -> RunConfig:
    path = Path(run_dir)
    config = load_config(path)
    config.out = str(path.parent)
    config.run_id = path.name
    if workers:
        config.workers = workers
    return config


def _summary(artifacts) -> str:
    lines = [f"run directory: {artifacts.run_dir}"]
    for protocol, board in artifacts.leaderboards.items():
        failed = len(artifacts.runs[protocol].failures)
        note = f"  ({failed} failed tasks)" if failed else ""
        lines.append(f"{LABELS.get(protocol, protocol):<10} top: {board.top}{note}")
    return "\n".join(lines)


def _load_rankings(run_dir: Path, protocol: str) -> list[TaskRanking]:
    path = run_dir / "results" / f"{protocol}.jsonl"
    if not path.exists():
        raise SealError(f"{path} not found; was {protocol} part of the run?")
    rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]
    return [TaskRanking.from_dict(r) for r in rows if "order" in r]


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except SealError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "validate":
        problems = validate_fixture(args.fixture)
        if problems:
            for prob in problems:
                print(prob)
            return 1
        print("ok")
        return 0

    if args.command == "run":
        print(_summary(run_benchmark(_config_from_args(args))))
        return 0

    if args.command == "resume":
        print(_summary(run_benchmark(_reopen(args.run_dir, args.workers))))
        return 0

    if args.command == "report":
        artifacts = run_benchmark(_reopen(args.run_dir, args.workers), backend=CacheOnlyBackend())
        print(f"reports written to {artifacts.run_dir / 'reports'}")
        return 0

    if args.command == "stability":
        dirs = [Path(d) for d in args.run_dir]
        if len(dirs) == 1:
            rankings = _load_rankings(dirs[0], args.protocol)
            pool = list(rankings[0].order) if rankings else []
            seeds = range(args.seed, args.seed + args.subsample_seeds)
            text = stability_csv(subsample_stability(rankings, pool, args.subsample_fraction, seeds))
        else:
            from .metrics import borda_aggregate

            boards = []
            for d in dirs:
                rankings = _load_rankings(d, args.protocol)
                boards.append(borda_aggregate(rankings, rankings[0].order))
            text = rerun_csv(rerun_stability(boards))
        if args.out:
            atomic_write(Path(args.out), text)
        else:
            sys.stdout.write(text)
        return 0

    if args.command == "make-world":
        n_principles = len(load_rubric(args.task_type).principles)
        world = generate_world(
            args.candidates, n_principles, seed=args.seed, low=args.low, high=args.high,
            noise_sigma=args.noise, tie_band=args.tie_band,
        )
        world.save(args.out)
        print(f"world written to {args.out}")
        if args.fixture_out:
            fixture = make_sim_fixture(
                world, args.tasks, task_type=args.task_type, benchmark=args.benchmark,
                native_noise=args.native_noise, seed=args.seed,
            )
            fixture.save(args.fixture_out)
            load_fixture(args.fixture_out)
            print(f"fixture written to {args.fixture_out}")
        return 0
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
