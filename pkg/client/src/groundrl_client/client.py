"""Client for the line-delimited reward-scoring service.

The client does no reward math of its own: requests are encoded, sent,
and the service's JSON values are returned exactly as decoded.  One
request is in flight per connection; open several clients if you need
parallelism.

An offline fallback shells out to the CLI batch mode (``groundrl score``)
and yields byte-identical responses, since the service runs the same
codepath for both transports.
"""

from __future__ import annotations

import json
import shutil
import socket
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence


class RewardClientError(Exception):
    """Base class for client failures."""


class ConnectionFailedError(RewardClientError):
    """Could not reach the service (after the configured retries)."""


class RequestTimeoutError(RewardClientError):
    """The service did not answer within the request timeout."""


class ServerError(RewardClientError):
    """The service answered with an error payload."""

    def __init__(self, code: str, message: str) -> None:
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class ProtocolError(RewardClientError):
    """The service answered with something other than the wire schema."""


@dataclass(frozen=True)
class ClientConfig:
    endpoint: str = "127.0.0.1:7447"
    connect_timeout: float = 5.0
    request_timeout: float = 30.0
    retries: int = 0

    def __post_init__(self) -> None:
        if self.connect_timeout <= 0 or self.request_timeout <= 0:
            raise ValueError("timeouts must be positive")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    @property
    def address(self) -> tuple[str, int]:
        host, sep, port = self.endpoint.rpartition(":")
        if not sep or not port.isdigit():
            raise ValueError(f"endpoint must look like HOST:PORT, got {self.endpoint!r}")
        return host or "127.0.0.1", int(port)


@dataclass(frozen=True)
class ScoreResult:
    """Decoded service response: one breakdown dict per completion, group
    advantages when the group had two or more members, and the raw
    response line for golden-file comparisons."""

    rewards: tuple[dict, ...]
    advantages: tuple[float, ...] | None
    raw_response: str

    @property
    def totals(self) -> tuple[float, ...]:
        return tuple(r["total"] for r in self.rewards)


def encode_score_request(
    request_id: str,
    ground_truth: Mapping[str, object],
    completions: Sequence[str],
    grpo: Mapping[str, float] | None = None,
) -> str:
    obj: dict = {
        "type": "score_group",
        "id": request_id,
        "ground_truth": dict(ground_truth),
        "completions": list(completions),
    }
    if grpo is not None:
        obj["grpo"] = dict(grpo)
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def decode_score_response(line: str) -> ScoreResult:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"response is not JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("response is not an object")
    if "error" in obj:
        error = obj["error"]
        raise ServerError(str(error.get("code", "unknown")), str(error.get("message", "")))
    if "results" not in obj:
        raise ProtocolError(f"response missing 'results': {line!r}")
    advantages = obj.get("advantages")
    return ScoreResult(
        rewards=tuple(obj["results"]),
        advantages=None if advantages is None else tuple(advantages),
        raw_response=line,
    )


class RewardClient:
    """One connection to the service; not safe to share across threads."""

    def __init__(self, config: ClientConfig | None = None) -> None:
        self.config = config or ClientConfig()
        self._sock: socket.socket | None = None
        self._reader = None
        self._counter = 0

    def __enter__(self) -> "RewardClient":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None
            self._reader = None

    def _connect(self) -> None:
        if self._sock is not None:
            return
        last: Exception | None = None
        for attempt in range(self.config.retries + 1):
            try:
                sock = socket.create_connection(
                    self.config.address, timeout=self.config.connect_timeout
                )
                sock.settimeout(self.config.request_timeout)
                self._sock = sock
                self._reader = sock.makefile("rb")
                return
            except OSError as exc:
                last = exc
                if attempt < self.config.retries:
                    time.sleep(min(0.1 * 2**attempt, 1.0))
        raise ConnectionFailedError(
            f"cannot connect to {self.config.endpoint} "
            f"after {self.config.retries + 1} attempt(s): {last}"
        )

    def _round_trip(self, line: str) -> str:
        self._connect()
        assert self._sock is not None and self._reader is not None
        try:
            self._sock.sendall(line.encode("utf-8") + b"\n")
            response = self._reader.readline()
        except socket.timeout:
            self.close()
            raise RequestTimeoutError(
                f"no response within {self.config.request_timeout}s"
            ) from None
        except OSError as exc:
            self.close()
            raise ConnectionFailedError(f"connection lost: {exc}") from None
        if not response:
            self.close()
            raise ConnectionFailedError("server closed the connection")
        return response.decode("utf-8").rstrip("\n")

    def score_group(
        self,
        ground_truth: Mapping[str, object],
        completions: Sequence[str],
        request_id: str | None = None,
        grpo: Mapping[str, float] | None = None,
    ) -> ScoreResult:
        """Submit one completion group; returns the service's numbers
        verbatim."""
        if request_id is None:
            self._counter += 1
            request_id = f"req-{self._counter}"
        line = encode_score_request(request_id, ground_truth, completions, grpo)
        return decode_score_response(self._round_trip(line))

    def health(self) -> bool:
        """True iff a health probe round-trips within the timeout."""
        try:
            response = self._round_trip('{"type":"health"}')
            obj = json.loads(response)
            return bool(isinstance(obj, dict) and obj.get("ok") is True)
        except (RewardClientError, json.JSONDecodeError):
            return False


def score_group_offline(
    ground_truth: Mapping[str, object],
    completions: Sequence[str],
    request_id: str = "offline-0",
    grpo: Mapping[str, float] | None = None,
    cli: str | None = None,
) -> ScoreResult:
    """Fallback without a running server: round-trip one request through
    the CLI batch mode (``groundrl score``)."""
    command = _resolve_cli(cli)
    line = encode_score_request(request_id, ground_truth, completions, grpo)
    with tempfile.TemporaryDirectory(prefix="groundrl-client-") as tmp:
        src = Path(tmp) / "in.jsonl"
        dst = Path(tmp) / "out.jsonl"
        src.write_text(line + "\n", encoding="utf-8")
        proc = subprocess.run(
            [*command, "score", "--in", str(src), "--out", str(dst)],
            capture_output=True,
            text=True,
        )
        if proc.returncode != 0:
            raise RewardClientError(
                f"CLI batch scoring failed (exit {proc.returncode}): {proc.stderr.strip()}"
            )
        response = dst.read_text(encoding="utf-8").splitlines()[0]
    return decode_score_response(response)


def _resolve_cli(cli: str | None) -> list[str]:
    if cli is not None:
        return [cli]
    found = shutil.which("groundrl")
    if found is not None:
        return [found]
    return [sys.executable, "-m", "groundrl.cli"]
