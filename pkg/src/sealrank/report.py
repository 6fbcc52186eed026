"""Run artifacts on disk: per-protocol results, CSV tables, a text report and figures."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import UndefinedMetricError  # noqa: E402
from .ledger import PROTOCOLS, PricingConfig, ledger_summary, theoretical_calls  # noqa: E402
from .metrics import Leaderboard, RerunReport, StabilityReport, resolution_gain, spearman_rho, top1_agreement  # noqa: E402

LABELS = {
    "original": "Original",
    "pointwise": "Pointwise",
    "fixed_rubric": "FixedRub",
    "listwise": "Listwise",
    "flat_bracket": "FlatBrk",
    "seal": "SEAL",
    "full_pair": "FullPair",
}
_PNG_META = {"Software": None}


def _fmt(x: Any, digits: int = 4) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return f"{x:.{digits}f}"
    return str(x)


def _csv(rows: Iterable[Sequence[Any]], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonl(rows: Iterable[Mapping[str, Any]]) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in rows)


def _write(path: Path, text: str) -> None:
    from .runner import atomic_write

    atomic_write(path, text)


def _safe(fn, *args):
    try:
        return fn(*args)
    except UndefinedMetricError:
        return None


def write_results(artifacts, run_dir: str | Path) -> None:
    """Per-protocol task results, match logs and the call ledger, all deterministic."""
    run_dir = Path(run_dir)
    for protocol, run in artifacts.runs.items():
        rows = []
        if protocol == "original":
            rows.append({"native_scores": run.native_scores})
        for tid in artifacts.tasks:
            row: dict[str, Any] = {"task_id": tid}
            if tid in run.rankings:
                row.update(run.rankings[tid].to_dict())
            if tid in run.scores:
                row["scores"] = run.scores[tid]
            if tid in run.evolution_events:
                row["evolution"] = run.evolution_events[tid]
            if tid in run.failures:
                row["failure"] = run.failures[tid]
            if len(row) > 1:
                rows.append(row)
        _write(run_dir / "results" / f"{protocol}.jsonl", _jsonl(rows))
        if run.records:
            # protocol name left out so equal brackets give equal files
            records = [r.to_dict() for tid in artifacts.tasks for r in run.records.get(tid, [])]
            _write(run_dir / "matches" / f"{protocol}.jsonl", _jsonl(records))
    _write(run_dir / "ledger.jsonl", _jsonl(_ledger_rows(artifacts.events, timing=False)))
    _write(run_dir / "timings.jsonl", _jsonl(_ledger_rows(artifacts.events, timing=True)))


def _ledger_rows(events, timing: bool) -> list[dict[str, Any]]:
    order = {p: i for i, p in enumerate(PROTOCOLS)}
    # stable sort: call order inside a task is deterministic, task interleaving is not
    ordered = sorted(events, key=lambda e: (order.get(e.protocol, len(order)), e.task_id))
    rows = []
    for e in ordered:
        row = asdict(e)
        if not timing:
            row.pop("wall_time")
        rows.append(row)
    return rows


def agreement_rows(artifacts) -> list[dict[str, Any]]:
    boards: dict[str, Leaderboard] = artifacts.leaderboards
    ref = boards.get("full_pair")
    native = boards["original"].scores if "original" in boards else None
    truth_ranks = {c: i for i, c in enumerate(artifacts.truth, start=1)} if artifacts.truth else None
    rows = []
    for protocol, board in boards.items():
        rows.append(
            {
                "protocol": protocol,
                "spearman_vs_full_pair": _safe(spearman_rho, board, ref) if ref else None,
                "top1_agreement": top1_agreement(board, ref) if ref else None,
                "resolution_gain": _safe(resolution_gain, board.scores, native) if native else None,
                "spearman_vs_truth": _safe(spearman_rho, board, truth_ranks) if truth_ranks else None,
                "top": board.top,
            }
        )
    return rows


def tradeoff_rows(artifacts) -> list[dict[str, Any]]:
    n = len(artifacts.pool)
    m = len(artifacts.tasks)
    agreement = {r["protocol"]: r["spearman_vs_full_pair"] for r in agreement_rows(artifacts)}
    rows = []
    for protocol in artifacts.runs:
        evo = sum(1 for e in artifacts.events if e.protocol == protocol and e.kind == "evolve") / m if m else 0.0
        rows.append(
            {
                "protocol": protocol,
                "calls_per_task": artifacts.calls_per_task(protocol),
                "sequential_calls": artifacts.sequential_calls.get(protocol, 0.0),
                "theoretical_calls": theoretical_calls(protocol, n, max(m, 1), evo),
                "spearman_vs_full_pair": agreement.get(protocol),
            }
        )
    return rows


def _table_csv(rows: list[dict[str, Any]]) -> str:
    if not rows:
        return ""
    header = list(rows[0])
    return _csv(([r[h] for h in header] for r in rows), header)


def stability_csv(report: StabilityReport) -> str:
    return _csv(
        [(report.benchmark, report.n_tasks, report.subsample_size, len(report.rhos), report.mean_rho, report.min_rho,
          report.recovery_rate)],
        ["benchmark", "tasks", "subsample_size", "seeds", "mean_rho", "min_rho", "top1_recovery"],
    )


def rerun_csv(report: RerunReport, benchmark: str = "") -> str:
    return _csv(
        [(benchmark, report.n_runs, report.mean_rho, report.min_rho, f"{report.top1_matches}/{report.pairs}")],
        ["benchmark", "runs", "mean_rho", "min_rho", "top1_matches"],
    )


def render_text_report(artifacts, pricing: PricingConfig) -> str:
    """Plain-text summary: leaderboards side by side, agreement, calls and cost."""
    boards = artifacts.leaderboards
    protocols = list(boards)
    lines = [f"Benchmark: {artifacts.benchmark}   candidates: {len(artifacts.pool)}   tasks: {len(artifacts.tasks)}", ""]
    width = max([len(c) for c in artifacts.pool] + [8]) + 2
    lines.append("Rank  " + "".join(LABELS.get(p, p).ljust(width) for p in protocols))
    for i in range(len(artifacts.pool)):
        lines.append(f"{i + 1:<6}" + "".join(boards[p].order[i].ljust(width) for p in protocols))
    lines.append("")
    lines.append(f"{'Protocol':<12}{'rho vs FullPair':>17}{'Top-1':>8}{'Res. gain':>11}{'rho vs truth':>14}")
    for r in agreement_rows(artifacts):
        lines.append(
            f"{LABELS.get(r['protocol'], r['protocol']):<12}{_fmt(r['spearman_vs_full_pair'], 2) or '-':>17}"
            f"{_fmt(r['top1_agreement']) or '-':>8}{_fmt(r['resolution_gain'], 2) or '-':>11}"
            f"{_fmt(r['spearman_vs_truth'], 2) or '-':>14}"
        )
    lines.append("")
    costs = ledger_summary(artifacts.events, pricing, {p: len(artifacts.tasks) for p in artifacts.runs})
    lines.append(f"{'Protocol':<12}{'calls/task':>11}{'sequential':>11}{'theory':>9}{'cost':>10}{'rel.':>7}")
    for r in tradeoff_rows(artifacts):
        c = costs.get(r["protocol"])
        cost = _fmt(c.cost, 2) if c else "0.00"
        rel = _fmt(c.relative_to_full_pair, 2) if c and c.relative_to_full_pair is not None else "-"
        lines.append(
            f"{LABELS.get(r['protocol'], r['protocol']):<12}{r['calls_per_task']:>11.2f}{r['sequential_calls']:>11.2f}"
            f"{r['theoretical_calls']:>9.2f}{cost:>10}{rel:>7}"
        )
    if any(c.synthetic_tokens for c in costs.values()):
        lines.append("(token counts are synthetic: characters / 4)")
    if artifacts.stability is not None:
        s = artifacts.stability
        lines += [
            "",
            f"Subsample stability: {s.subsample_size} of {s.n_tasks} tasks, {len(s.rhos)} seeds: "
            f"mean rho {s.mean_rho:.2f} (min {s.min_rho:.2f}), top-1 recovery {100 * s.recovery_rate:.0f}%",
        ]
    return "\n".join(lines) + "\n"


def plot_tradeoff(rows: list[dict[str, Any]], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for r in rows:
        if r["spearman_vs_full_pair"] is None or r["protocol"] == "original":
            continue
        x = r["sequential_calls"]
        ax.scatter([x], [r["spearman_vs_full_pair"]], s=40)
        ax.annotate(LABELS.get(r["protocol"], r["protocol"]), (x, r["spearman_vs_full_pair"]),
                    textcoords="offset points", xytext=(5, 4), fontsize=8)
    ax.set_xlabel("sequential judge calls per task")
    ax.set_ylabel("Spearman rho vs FullPair")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def plot_rank_heatmap(boards: Mapping[str, Leaderboard], pool: Sequence[str], path: Path) -> None:
    protocols = list(boards)
    ref = boards.get("full_pair") or boards[protocols[-1]]
    rows = ref.order
    grid = [[boards[p].ranks[c] for p in protocols] for c in rows]
    fig, ax = plt.subplots(figsize=(1.1 * len(protocols) + 2, 0.4 * len(pool) + 1.5))
    im = ax.imshow(grid, cmap="viridis_r", aspect="auto")
    ax.set_xticks(range(len(protocols)), [LABELS.get(p, p) for p in protocols], rotation=30, ha="right")
    ax.set_yticks(range(len(rows)), rows)
    for i, row in enumerate(grid):
        for j, v in enumerate(row):
            ax.text(j, i, str(v), ha="center", va="center", color="white", fontsize=8)
    fig.colorbar(im, ax=ax, label="rank")
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def emit_reports(artifacts, out_dir: str | Path, pricing: PricingConfig | None = None) -> dict[str, Path]:
    """Write CSV tables, report.txt and figures; returns the written paths by name."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pricing = pricing or PricingConfig()
    paths: dict[str, Path] = {}

    board_rows = [
        (p, e.rank, e.candidate, e.score, e.mean_margin)
        for p, b in artifacts.leaderboards.items()
        for e in b.entries
    ]
    texts = {
        "leaderboards.csv": _csv(board_rows, ["protocol", "rank", "candidate", "score", "mean_margin"]),
        "agreement.csv": _table_csv(agreement_rows(artifacts)),
        "tradeoff.csv": _table_csv(tradeoff_rows(artifacts)),
    }
    costs = ledger_summary(artifacts.events, pricing, {p: len(artifacts.tasks) for p in artifacts.runs})
    texts["cost_summary.csv"] = _csv(
        [
            (c.protocol, c.calls, c.input_tokens, c.output_tokens, c.tasks, c.cost, c.cost_per_1k_tasks,
             c.relative_to_full_pair, c.synthetic_tokens)
            for c in costs.values()
        ],
        ["protocol", "calls", "input_tokens", "output_tokens", "tasks", "cost", "cost_per_1k_tasks",
         "relative_to_full_pair", "synthetic_tokens"],
    )
    if artifacts.stability is not None:
        texts["stability.csv"] = stability_csv(artifacts.stability)
    texts["report.txt"] = render_text_report(artifacts, pricing)
    for name, text in texts.items():
        _write(out / name, text)
        paths[name] = out / name

    plot_tradeoff(tradeoff_rows(artifacts), out / "tradeoff.png")
    paths["tradeoff.png"] = out / "tradeoff.png"
    if artifacts.leaderboards:
        plot_rank_heatmap(artifacts.leaderboards, artifacts.pool, out / "ranks.png")
        paths["ranks.png"] = out / "ranks.png"
    return paths
