"""Judge-call accounting: events, theoretical call counts and dollar estimates."""

from __future__ import annotations

import json
import threading
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigError

CALL_KINDS = ("seed", "pairwise", "evolve", "pointwise", "listwise", "rubric_gen")
PROTOCOLS = ("original", "pointwise", "fixed_rubric", "listwise", "flat_bracket", "seal", "full_pair")
TOKENS_PER_UNIT = 1_000_000


@dataclass(frozen=True)
class CallEvent:
    protocol: str
    task_id: str
    kind: str
    input_tokens: int
    output_tokens: int
    wall_time: float = 0.0
    retry_index: int = 0
    ok: bool = True
    synthetic_tokens: bool = False

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be nonnegative")


@dataclass(frozen=True)
class PricingConfig:
    """Dollar rates per one million tokens."""

    input_rate: float = 2.00
    output_rate: float = 17.00

    def __post_init__(self):
        if self.input_rate < 0 or self.output_rate < 0:
            raise ConfigError("pricing rates must be nonnegative")

    @classmethod
    def from_file(cls, path: str | Path) -> "PricingConfig":
        import yaml

        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        return cls(float(data.get("input_rate", 2.0)), float(data.get("output_rate", 17.0)))


def theoretical_calls(protocol: str, n: int, m: int = 1, evo_avg: float = 0.0) -> float:
    """Idealised judge calls per task for a pool of ``n`` over ``m`` tasks."""
    if n < 2 or m < 1:
        raise ValueError("need n >= 2 and m >= 1")
    table = {
        "original": 0.0,
        "listwise": 1.0,
        "pointwise": float(n),
        "fixed_rubric": n + 1.0 / m,
        "flat_bracket": 1.0 + (n - 1),
        "full_pair": n * (n - 1) / 2.0,
        "seal": 1.0 + (n - 1) + evo_avg,
    }
    try:
        return table[protocol]
    except KeyError:
        raise ValueError(f"unknown protocol {protocol!r}") from None


def estimate_cost(input_tokens: float, output_tokens: float, pricing: PricingConfig = PricingConfig()) -> float:
    """Undiscounted dollar cost; no cached-token pricing."""
    return input_tokens / TOKENS_PER_UNIT * pricing.input_rate + output_tokens / TOKENS_PER_UNIT * pricing.output_rate


@dataclass
class ProtocolCost:
    protocol: str
    calls: int
    input_tokens: int
    output_tokens: int
    tasks: int
    cost: float
    cost_per_1k_tasks: float
    relative_to_full_pair: float | None = None
    synthetic_tokens: bool = False

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens


def ledger_summary(
    events: Iterable[CallEvent],
    pricing: PricingConfig = PricingConfig(),
    tasks: Mapping[str, int] | None = None,
) -> dict[str, ProtocolCost]:
    """Per-protocol sums, dollar cost and cost relative to full_pair.

    ``tasks`` overrides the task count per protocol; by default it is the
    number of distinct task ids among the protocol's events.
    """
    calls: dict[str, int] = defaultdict(int)
    tin: dict[str, int] = defaultdict(int)
    tout: dict[str, int] = defaultdict(int)
    task_ids: dict[str, set[str]] = defaultdict(set)
    synthetic: dict[str, bool] = defaultdict(bool)
    for e in events:
        calls[e.protocol] += 1
        tin[e.protocol] += e.input_tokens
        tout[e.protocol] += e.output_tokens
        task_ids[e.protocol].add(e.task_id)
        synthetic[e.protocol] |= e.synthetic_tokens
    out: dict[str, ProtocolCost] = {}
    for proto in sorted(calls, key=_protocol_order):
        n_tasks = (tasks or {}).get(proto, len(task_ids[proto] - {""}) or 1)
        cost = estimate_cost(tin[proto], tout[proto], pricing)
        out[proto] = ProtocolCost(
            protocol=proto,
            calls=calls[proto],
            input_tokens=tin[proto],
            output_tokens=tout[proto],
            tasks=n_tasks,
            cost=cost,
            cost_per_1k_tasks=cost / n_tasks * 1000,
            synthetic_tokens=synthetic[proto],
        )
    ref = out.get("full_pair")
    if ref is not None and ref.cost > 0:
        for row in out.values():
            row.relative_to_full_pair = row.cost / ref.cost
    return out


def _protocol_order(name: str) -> tuple[int, str]:
    return (PROTOCOLS.index(name) if name in PROTOCOLS else len(PROTOCOLS), name)


class Ledger:
    """Append-only, thread-safe sink of call events, optionally mirrored to a JSONL file."""

    def __init__(self, path: str | Path | None = None):
        self._events: list[CallEvent] = []
        self._lock = threading.Lock()
        self._path = Path(path) if path is not None else None

    def record(self, event: CallEvent) -> None:
        with self._lock:
            self._events.append(event)
            if self._path is not None:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(asdict(event), sort_keys=True) + "\n")

    @property
    def events(self) -> list[CallEvent]:
        with self._lock:
            return list(self._events)

    def __len__(self) -> int:
        return len(self._events)

    @staticmethod
    def read(path: str | Path) -> list[CallEvent]:
        events = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(CallEvent(**json.loads(line)))
        return events
