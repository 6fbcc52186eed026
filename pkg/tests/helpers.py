"""Shared builders for tests that drive the judge through a session."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from sealrank.backends import JudgeReply, JudgeRequest, synthetic_reply
from sealrank.ledger import Ledger
from sealrank.session import JudgeSession
from sealrank.sim import SimBackend


def session_for(world, log=None) -> JudgeSession:
    return JudgeSession(SimBackend(world), Ledger(), log)


def outputs_for(pool, task_id="t") -> dict[str, str]:
    return {c: f"[{c}] answer to {task_id}" for c in sorted(pool)}


@dataclass
class SeedOverride:
    """Sim judge whose seeding call returns a fixed tier list."""

    inner: SimBackend
    tiers: list[list[str]]

    def complete(self, request: JudgeRequest) -> JudgeReply:
        if request.kind == "seeding":
            body = {"tiers": {str(i): t for i, t in enumerate(self.tiers, start=1)}, "reasoning": "fixed"}
            return synthetic_reply(request, json.dumps(body))
        return self.inner.complete(request)


@dataclass
class Scripted:
    """Backend replaying canned reply texts per kind, in order."""

    replies: dict[str, list[str]]
    calls: list[JudgeRequest] = field(default_factory=list)

    def complete(self, request: JudgeRequest) -> JudgeReply:
        self.calls.append(request)
        return synthetic_reply(request, self.replies[request.kind].pop(0))
