"""Client for external classifier sidecars over newline-delimited JSON.

Wire format (one JSON object per line):

    greeting  (server -> client, once):
        {"hello": 1, "k": <classes>, "kind": "logits" | "probs"}
    request   (client -> server):
        {"id": <int>, "shape": [h, w, c], "pixels": [<f32 values>]}
    response  (server -> client):
        {"id": <int>, "values": [<f32 values>], "kind": "logits" | "probs"}
    error     (server -> client):
        {"id": <int or null>, "error": "<message>"}

Floats are quantized to f32 and emitted as plain JSON numbers through the
language's shortest-round-trip f64 serializer; since every f32 is exactly
representable as f64 this transports f32 values bit-exactly both ways.
A probs-returning sidecar is converted to logit-equivalents by
element-wise log, which preserves margins exactly (shared softmax
normalizer), up to the f32 quantization of the wire.
"""

from __future__ import annotations

import json
import queue
import socket
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ClassifierOracle
from .errors import BridgeHandshakeError, BridgeInterruptedError, BridgeProtocolError

PROTOCOL_VERSION = 1


@dataclass
class BridgeConfig:
    transport: str = "stdio"  # "stdio" | "tcp"
    command: Optional[list[str]] = None
    host: str = "127.0.0.1"
    port: int = 0
    timeout_ms: int = 10000
    k: int = 0
    returns: Optional[str] = None  # pin expected kind; None accepts the greeting's
    retries: int = 0

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise BridgeProtocolError("timeout must be positive")
        if self.transport not in ("stdio", "tcp"):
            raise BridgeProtocolError(f"unknown transport {self.transport!r}")


class _LineTransport:
    """Reader-thread line channel over a subprocess or TCP socket."""

    def __init__(self, cfg: BridgeConfig):
        self._proc = None
        self._sock = None
        if cfg.transport == "stdio":
            if not cfg.command:
                raise BridgeProtocolError("stdio transport needs a command")
            self._proc = subprocess.Popen(
                cfg.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
            self._write = self._proc.stdin
            source = self._proc.stdout
        else:
            self._sock = socket.create_connection((cfg.host, cfg.port), timeout=cfg.timeout_ms / 1000)
            self._write = self._sock.makefile("w", buffering=1)
            source = self._sock.makefile("r")
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, args=(source,), daemon=True)
        self._reader.start()

    def _pump(self, source):
        try:
            for line in source:
                self._lines.put(line)
        except Exception:
            pass
        self._lines.put(None)  # EOF marker

    def send_line(self, text: str):
        try:
            self._write.write(text + "\n")
            self._write.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeInterruptedError(f"connection lost on send: {exc}") from exc

    def recv_line(self, timeout_s: float) -> str:
        try:
            line = self._lines.get(timeout=timeout_s)
        except queue.Empty:
            raise BridgeInterruptedError("timed out waiting for the sidecar") from None
        if line is None:
            raise BridgeInterruptedError("sidecar closed the connection")
        return line

    def close(self):
        try:
            self._write.close()
        except Exception:
            pass
        if self._proc is not None:
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        if self._sock is not None:
            self._sock.close()


@dataclass
class BridgeSession:
    cfg: BridgeConfig
    transport: _LineTransport
    k: int
    kind: str
    version: int
    next_id: int = 1
    requests_sent: int = 0
    scores_completed: int = 0

    def close(self):
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def bridge_handshake(cfg: BridgeConfig) -> BridgeSession:
    """Open the transport and validate the sidecar's greeting."""
    transport = _LineTransport(cfg)
    try:
        line = transport.recv_line(cfg.timeout_ms / 1000)
        try:
            greeting = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeProtocolError(f"malformed greeting: {line!r}") from exc
        if not isinstance(greeting, dict) or "hello" not in greeting:
            raise BridgeProtocolError(f"malformed greeting: {line!r}")
        version = greeting.get("hello")
        if version != PROTOCOL_VERSION:
            raise BridgeHandshakeError(f"protocol version {version} != {PROTOCOL_VERSION}")
        k = greeting.get("k")
        if not isinstance(k, int) or k < 2:
            raise BridgeProtocolError(f"greeting advertises invalid k: {k!r}")
        if cfg.k and k != cfg.k:
            raise BridgeHandshakeError(f"sidecar advertises K={k}, config expects K={cfg.k}")
        kind = greeting.get("kind")
        if kind not in ("logits", "probs"):
            raise BridgeProtocolError(f"greeting advertises invalid kind: {kind!r}")
        if cfg.returns is not None and kind != cfg.returns:
            raise BridgeHandshakeError(f"sidecar returns {kind}, config expects {cfg.returns}")
    except Exception:
        transport.close()
        raise
    return BridgeSession(cfg=cfg, transport=transport, k=k, kind=kind, version=version)


def _encode_pixels(x: np.ndarray) -> list[float]:
    # f32 quantization; float() of an f32 is the exact f64 value
    return [float(v) for v in np.asarray(x, dtype=np.float32).reshape(-1)]


def bridge_score(session: BridgeSession, x: np.ndarray) -> np.ndarray:
    """One request/response round trip; returns logits (f64).

    Timeouts raise a resumable error carrying the number of completed
    scores. Retries are opt-in via config and every resent request is
    counted in `requests_sent`.
    """
    request_id = session.next_id
    session.next_id += 1
    payload = json.dumps(
        {"id": request_id, "shape": list(x.shape), "pixels": _encode_pixels(x)},
        separators=(",", ":"),
    )
    attempts = 1 + max(0, session.cfg.retries)
    last_exc = None
    for _ in range(attempts):
        try:
            session.requests_sent += 1
            session.transport.send_line(payload)
            while True:
                line = session.transport.recv_line(session.cfg.timeout_ms / 1000)
                try:
                    return _decode_response(session, request_id, line)
                except _StaleResponse:
                    continue
        except BridgeInterruptedError as exc:
            exc.queries_completed = session.scores_completed
            last_exc = exc
    raise last_exc


class _StaleResponse(Exception):
    pass


def _decode_response(session: BridgeSession, request_id: int, line: str) -> np.ndarray:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise BridgeProtocolError(f"malformed response: {line!r}") from exc
    if msg.get("error") is not None:
        raise BridgeProtocolError(f"sidecar error: {msg['error']}")
    got = msg.get("id")
    if isinstance(got, int) and got < request_id:
        # late answer to a request we already retried; ids only grow
        raise _StaleResponse
    if got != request_id:
        raise BridgeProtocolError(f"response id {got} != request id {request_id}")
    values = msg.get("values")
    if not isinstance(values, list) or len(values) != session.k:
        raise BridgeProtocolError(f"expected {session.k} values, got {len(values) if isinstance(values, list) else values!r}")
    arr = np.asarray(values, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise BridgeProtocolError("non-finite values from sidecar")
    kind = msg.get("kind", session.kind)
    if kind == "probs":
        arr = np.log(np.maximum(arr, 1e-300))
    session.scores_completed += 1
    return arr


class BridgeOracle(ClassifierOracle):
    """ClassifierOracle backed by a live bridge session."""

    def __init__(self, session: BridgeSession):
        super().__init__()
        self.session = session
        self.num_classes = session.k

    def _score(self, x: np.ndarray) -> np.ndarray:
        return bridge_score(self.session, x)
