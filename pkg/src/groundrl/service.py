"""Stateless reward-scoring service.

One JSON request per line, one JSON response per line, over TCP or a
batch file.  Both transports run the identical ``handle_request_line``
codepath, so offline and online responses are byte-identical for
identical request bytes.  Responses are serialized canonically (sorted
keys, no whitespace) and deterministically.

Request types:

* ``{"type": "health"}`` -> ``{"ok": true, "type": "health", "version": ...}``
* ``{"type": "score_group", "id": ..., "ground_truth": {...},
  "completions": [...], "grpo": {...}}`` -> per-completion reward
  breakdowns, plus group advantages when two or more completions are
  given.  ``grpo`` is an optional partial override of the defaults.

Schema violations become an error response with code ``bad_request``;
the connection is never dropped.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from dataclasses import dataclass

from . import __version__
from .geometry import BBox, PointXY
from .grpo import GrpoConfig, group_advantages
from .rewards import GroundTruth, score_group

_GT_KEYS = {"bbox", "point_1", "point_2", "image_width", "image_height"}
_GRPO_KEYS = {"epsilon", "beta", "eps_std"}


class BadRequest(ValueError):
    """A request that violates the wire schema."""


def encode_response(payload: dict) -> str:
    return json.dumps(payload, separators=(",", ":"), sort_keys=True)


def handle_request_line(line: str) -> str:
    """Map one request line to one canonical response line (no newline)."""
    return _handle(line)[0]


def _handle(line: str) -> tuple[str, bool]:
    """Shared online/offline codepath; returns (response, is_error)."""
    request_id: str | None = None
    request_type: str | None = None
    try:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BadRequest(f"invalid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise BadRequest("request must be a JSON object")
        raw_id = obj.get("id")
        if isinstance(raw_id, str):
            request_id = raw_id
        raw_type = obj.get("type")
        if isinstance(raw_type, str):
            request_type = raw_type
        if request_type == "health":
            return encode_response({"type": "health", "ok": True, "version": __version__}), False
        if request_type == "score_group":
            return encode_response(_score_group_response(obj)), False
        raise BadRequest(f"unknown request type {raw_type!r}")
    except BadRequest as exc:
        error = {"code": "bad_request", "message": str(exc)}
    except Exception as exc:  # keep the connection alive no matter what
        error = {"code": "internal_error", "message": f"{type(exc).__name__}: {exc}"}
    payload: dict = {"type": request_type or "error", "error": error}
    if request_id is not None:
        payload["id"] = request_id
    return encode_response(payload), True


def _score_group_response(obj: dict) -> dict:
    request_id = obj.get("id")
    if not isinstance(request_id, str):
        raise BadRequest("score_group requires a string 'id'")
    gt = _decode_ground_truth(obj.get("ground_truth"))
    completions = obj.get("completions")
    if not isinstance(completions, list) or not completions:
        raise BadRequest("'completions' must be a non-empty list of strings")
    if not all(isinstance(c, str) for c in completions):
        raise BadRequest("'completions' must contain only strings")
    cfg = _decode_grpo(obj.get("grpo"))

    breakdowns = score_group(completions, gt)
    payload: dict = {
        "type": "score_group",
        "id": request_id,
        "results": [b.as_dict() for b in breakdowns],
    }
    if len(completions) >= 2:
        advantages = group_advantages([b.total for b in breakdowns], cfg)
        payload["advantages"] = [float(a) for a in advantages]
    return payload


def _number(value: object, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise BadRequest(f"{what} must be a number")
    return float(value)


def _decode_ground_truth(obj: object) -> GroundTruth:
    if not isinstance(obj, dict):
        raise BadRequest("'ground_truth' must be an object")
    missing = _GT_KEYS - set(obj.keys())
    if missing:
        raise BadRequest(f"ground_truth missing fields: {sorted(missing)}")
    box = obj["bbox"]
    if not isinstance(box, list) or len(box) != 4:
        raise BadRequest("ground_truth.bbox must be [x1, y1, x2, y2]")
    points = []
    for key in ("point_1", "point_2"):
        p = obj[key]
        if not isinstance(p, list) or len(p) != 2:
            raise BadRequest(f"ground_truth.{key} must be [x, y]")
        points.append(PointXY(_number(p[0], key), _number(p[1], key)))
    try:
        return GroundTruth(
            bbox=BBox(*(_number(v, "bbox") for v in box)),
            point_1=points[0],
            point_2=points[1],
            image_width=_number(obj["image_width"], "image_width"),
            image_height=_number(obj["image_height"], "image_height"),
        )
    except ValueError as exc:
        raise BadRequest(f"invalid ground_truth: {exc}") from None


def _decode_grpo(obj: object) -> GrpoConfig:
    if obj is None:
        return GrpoConfig()
    if not isinstance(obj, dict):
        raise BadRequest("'grpo' must be an object when present")
    unknown = set(obj.keys()) - _GRPO_KEYS
    if unknown:
        raise BadRequest(f"unknown grpo fields: {sorted(unknown)}")
    kwargs = {k: _number(v, f"grpo.{k}") for k, v in obj.items()}
    try:
        return GrpoConfig(**kwargs)
    except ValueError as exc:
        raise BadRequest(f"invalid grpo config: {exc}") from None


@dataclass
class BatchSummary:
    requests: int = 0
    errors: int = 0

    def as_dict(self) -> dict[str, int]:
        return {"requests": self.requests, "errors": self.errors}


def score_batch_file(in_path: str, out_path: str) -> BatchSummary:
    """Offline mode: one response line per request line, same order."""
    summary = BatchSummary()
    with open(in_path, "r", encoding="utf-8") as src, open(
        out_path, "w", encoding="utf-8"
    ) as dst:
        for line in src:
            if not line.strip():
                continue
            response, is_error = _handle(line)
            summary.requests += 1
            if is_error:
                summary.errors += 1
            dst.write(response + "\n")
    return summary


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        server: RewardServer = self.server  # type: ignore[assignment]
        with server.slots:
            for raw in self.rfile:
                line = raw.decode("utf-8", errors="replace")
                if not line.strip():
                    continue
                response = handle_request_line(line)
                try:
                    self.wfile.write(response.encode("utf-8") + b"\n")
                    self.wfile.flush()
                except (BrokenPipeError, ConnectionResetError):
                    return


class RewardServer(socketserver.ThreadingTCPServer):
    """Line-delimited scoring server; connections are handled concurrently
    and responses on each connection keep request order."""

    allow_reuse_address = True
    daemon_threads = False  # joined on close so in-flight work finishes

    def __init__(self, host: str, port: int, max_conns: int = 64) -> None:
        self.slots = threading.BoundedSemaphore(max_conns)
        super().__init__((host, port), _Handler)

    @property
    def bound_address(self) -> tuple[str, int]:
        return self.socket.getsockname()[:2]


def parse_bind(bind: str) -> tuple[str, int]:
    host, sep, port = bind.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"bind address must look like HOST:PORT, got {bind!r}")
    return host or "127.0.0.1", int(port)


def request_once(bind: str, line: str, timeout: float = 10.0) -> str:
    """Send one request line to a running server and return the response
    line (without the newline).  Used by tests and simple scripts."""
    host, port = parse_bind(bind)
    with socket.create_connection((host, port), timeout=timeout) as conn:
        conn.sendall(line.encode("utf-8") + b"\n")
        buf = b""
        while not buf.endswith(b"\n"):
            chunk = conn.recv(65536)
            if not chunk:
                break
            buf += chunk
    return buf.decode("utf-8").rstrip("\n")
