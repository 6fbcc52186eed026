"""Judge-call execution: retry on malformed replies, ledger events, resumable call log."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Iterator, TypeVar

from .backends import EVENT_KIND, JudgeBackend, JudgeReply, JudgeRequest
from .errors import BackendError, JudgeCallError, ParseError
from .ledger import CallEvent, Ledger
from .prompts import PromptPair, estimate_tokens

logger = logging.getLogger(__name__)

T = TypeVar("T")

CORRECTION = (
    "\n\nYour previous reply could not be used ({error}). "
    "Reply again with only the JSON object, following the required schema exactly."
)


def request_key(protocol: str, request: JudgeRequest) -> str:
    h = hashlib.sha256()
    for part in (protocol, request.task_id, request.kind, request.prompt.system, request.prompt.user):
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


class RunLog:
    """Append-only JSONL log of judge calls and match/evolution records.

    Successful backend replies are cached by request key so an interrupted
    run can be resumed without re-judging. A torn final line is ignored.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._calls: dict[str, dict[str, Any]] = {}
        self._records: set[str] = set()
        if self.path.exists():
            self._drop_torn_tail()
            for entry in self._read():
                if entry.get("type") == "call":
                    self._calls[entry["key"]] = entry
                elif "key" in entry:
                    self._records.add(entry["key"])

    def _drop_torn_tail(self) -> None:
        data = self.path.read_bytes()
        if data and not data.endswith(b"\n"):
            logger.warning("discarding a partial last line in %s", self.path)
            with open(self.path, "r+b") as fh:
                fh.truncate(data.rfind(b"\n") + 1)

    def _read(self) -> Iterator[dict[str, Any]]:
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if not line.endswith("\n"):
                    break
                try:
                    yield json.loads(line)
                except json.JSONDecodeError:
                    logger.warning("skipping unreadable log line in %s", self.path)

    def entries(self) -> list[dict[str, Any]]:
        return list(self._read()) if self.path.exists() else []

    def cached(self, key: str) -> dict[str, Any] | None:
        with self._lock:
            return self._calls.get(key)

    def _append(self, entry: dict[str, Any]) -> None:
        line = json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n"
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    def add_call(self, entry: dict[str, Any]) -> None:
        with self._lock:
            if entry["key"] in self._calls:
                return
            self._calls[entry["key"]] = entry
            self._append(entry)

    def add_record(self, kind: str, key: str, payload: dict[str, Any]) -> None:
        """Append a match or evolution record once; replays after resume are skipped."""
        with self._lock:
            if key in self._records:
                return
            self._records.add(key)
            self._append({"type": kind, "key": key, **payload})

    @property
    def n_calls(self) -> int:
        return len(self._calls)


class JudgeSession:
    """Runs judge calls for one protocol run, with one corrective retry by default."""

    def __init__(
        self,
        backend: JudgeBackend,
        ledger: Ledger | None = None,
        log: RunLog | None = None,
        *,
        max_attempts: int = 2,
        clock: Callable[[], float] = time.perf_counter,
    ):
        self.backend = backend
        self.ledger = ledger if ledger is not None else Ledger()
        self.log = log
        self.max_attempts = max_attempts
        self.clock = clock
        self.backend_calls = 0
        self._lock = threading.Lock()

    def _invoke(self, protocol: str, request: JudgeRequest) -> tuple[JudgeReply, float]:
        key = request_key(protocol, request)
        if self.log is not None:
            hit = self.log.cached(key)
            if hit is not None:
                reply = JudgeReply(hit["reply"], hit["input_tokens"], hit["output_tokens"], hit["synthetic_tokens"])
                return reply, hit["wall_time"]
        start = self.clock()
        reply = self.backend.complete(request)
        elapsed = self.clock() - start
        with self._lock:
            self.backend_calls += 1
        if self.log is not None:
            self.log.add_call(
                {
                    "type": "call",
                    "key": key,
                    "protocol": protocol,
                    "task_id": request.task_id,
                    "kind": request.kind,
                    "system": request.prompt.system,
                    "user": request.prompt.user,
                    "reply": reply.text,
                    "input_tokens": reply.input_tokens,
                    "output_tokens": reply.output_tokens,
                    "synthetic_tokens": reply.synthetic_tokens,
                    "wall_time": elapsed,
                }
            )
        return reply, elapsed

    def call(self, protocol: str, request: JudgeRequest, parse: Callable[[str], T]) -> tuple[T, JudgeReply]:
        """Invoke the backend and parse the reply, retrying once with a correction.

        Every attempt, failed or not, is one ledger event.
        """
        kind = EVENT_KIND[request.kind]
        attempt_request = request
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                prompt = request.prompt
                user = prompt.user + CORRECTION.format(error=last_error)
                attempt_request = replace(
                    request,
                    prompt=PromptPair(prompt.system, user, prompt.kind, estimate_tokens(prompt.system, user)),
                )
            try:
                reply, elapsed = self._invoke(protocol, attempt_request)
            except BackendError as exc:
                last_error = exc
                self.ledger.record(CallEvent(protocol, request.task_id, kind, 0, 0, 0.0, attempt, ok=False))
                logger.warning("%s %s call failed (attempt %d): %s", protocol, request.task_id, attempt + 1, exc)
                continue
            try:
                value = parse(reply.text)
            except ParseError as exc:
                last_error = exc
                self.ledger.record(
                    CallEvent(
                        protocol, request.task_id, kind, reply.input_tokens, reply.output_tokens, elapsed, attempt,
                        ok=False, synthetic_tokens=reply.synthetic_tokens,
                    )
                )
                logger.info("%s %s reply rejected (attempt %d): %s", protocol, request.task_id, attempt + 1, exc)
                continue
            self.ledger.record(
                CallEvent(
                    protocol, request.task_id, kind, reply.input_tokens, reply.output_tokens, elapsed, attempt,
                    synthetic_tokens=reply.synthetic_tokens,
                )
            )
            return value, reply
        raise JudgeCallError(f"{request.kind} call for task {request.task_id} failed: {last_error}", self.max_attempts)
