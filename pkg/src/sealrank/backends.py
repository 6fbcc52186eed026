"""Judge backend contract and the live chat-completion backend."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol, runtime_checkable

import httpx

from .errors import BackendError
from .prompts import PromptPair, estimate_tokens

logger = logging.getLogger(__name__)

API_KEY_ENV = "SEALRANK_API_KEY"

# prompt kind -> backend capability / ledger event kind
EVENT_KIND = {
    "seeding": "seed",
    "pairwise": "pairwise",
    "evolution": "evolve",
    "pointwise": "pointwise",
    "listwise": "listwise",
    "rubric_gen": "rubric_gen",
}


@dataclass(frozen=True)
class JudgeRequest:
    """A rendered prompt plus the structured facts it was rendered from.

    Live backends only read ``prompt``; the simulated backend reads the
    structured fields, which never carry information absent from the prompt.
    """

    prompt: PromptPair
    task_id: str
    candidates: tuple[str, ...] = ()
    meta: Mapping[str, Any] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.prompt.kind


@dataclass(frozen=True)
class JudgeReply:
    text: str
    input_tokens: int
    output_tokens: int
    synthetic_tokens: bool = False


@runtime_checkable
class JudgeBackend(Protocol):
    name: str
    model: str
    capabilities: frozenset[str]

    def complete(self, request: JudgeRequest) -> JudgeReply: ...


def synthetic_reply(request: JudgeRequest, text: str) -> JudgeReply:
    """Reply with token usage synthesised from character counts."""
    return JudgeReply(
        text=text,
        input_tokens=request.prompt.token_estimate,
        output_tokens=estimate_tokens(text),
        synthetic_tokens=True,
    )


class LiveBackend:
    """OpenAI-style ``/chat/completions`` client at temperature 0."""

    name = "live"
    capabilities = frozenset(EVENT_KIND.values())

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        api_key: str | None = None,
        timeout: float = 120.0,
        temperature: float = 0.0,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.temperature = temperature
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = client or httpx.Client(timeout=timeout)
        self._headers = headers

    def payload(self, prompt: PromptPair) -> dict[str, Any]:
        return {
            "model": self.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": self.temperature,
        }

    def complete(self, request: JudgeRequest) -> JudgeReply:
        url = self.endpoint if self.endpoint.endswith("/chat/completions") else self.endpoint + "/chat/completions"
        try:
            resp = self._client.post(url, json=self.payload(request.prompt), headers=self._headers)
            resp.raise_for_status()
            body = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise BackendError(f"judge endpoint failed: {exc}") from exc
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError("judge response has no assistant message") from exc
        usage = body.get("usage") or {}
        # completion_tokens already includes billed reasoning tokens
        return JudgeReply(
            text=text or "",
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
        )

    def close(self) -> None:
        self._client.close()
