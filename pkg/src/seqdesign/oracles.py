"""Black-box score functions behind one interface.

Synthetic oracles are pure functions of the decoded token string with
closed-form optima, so optimization runs can be checked against known
answers. External oracles talk to another process over newline-delimited
JSON (stdio child process or TCP), one object per line:

    request:  {"id": k, "seq": "<token string>", "scores": ["name", ...]}
    response: {"id": k, "values": [floats]}  or  {"id": k, "error": "..."}

Responses may arrive out of order; they are re-matched by id.
"""

from __future__ import annotations

import json
import queue
import socket
import subprocess
import threading
import time
from dataclasses import dataclass

import numpy as np


class OracleError(RuntimeError):
    pass


@dataclass
class ScoreResult:
    values: np.ndarray | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


class Oracle:
    """Base: score token strings; every invocation counts a query."""

    def __init__(self, oracle_id: str, kind: str):
        self.id = oracle_id
        self.kind = kind
        self.query_count = 0

    def _score_one(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def score(self, text: str) -> np.ndarray:
        self.query_count += 1
        return self._score_one(text)

    def score_batch(self, texts: list[str]) -> list[ScoreResult]:
        out = []
        for t in texts:
            self.query_count += 1
            try:
                out.append(ScoreResult(values=self._score_one(t)))
            except Exception as e:  # noqa: BLE001 - failures become per-candidate results
                out.append(ScoreResult(error=str(e)))
        return out

    def close(self):
        pass


# -- synthetic oracles -------------------------------------------------------


class TokenCountOracle(Oracle):
    """y = number of occurrences of one token. Optimum under a max_len
    cap L is L (the all-token sequence)."""

    def __init__(self, token: str, oracle_id: str = "token_count"):
        super().__init__(oracle_id, "synthetic")
        self.token = token

    def _score_one(self, text: str) -> np.ndarray:
        return np.array([float(sum(1 for t in text.split() if t == self.token))])


class WeightedCompositionOracle(Oracle):
    """y = sum of per-token weights (unknown tokens weigh 0). Optimum
    under a cap L is L * max(weights) when that max is positive."""

    def __init__(self, weights: dict[str, float],
                 oracle_id: str = "weighted_composition"):
        super().__init__(oracle_id, "synthetic")
        self.weights = dict(weights)

    def _score_one(self, text: str) -> np.ndarray:
        return np.array([float(sum(self.weights.get(t, 0.0) for t in text.split()))])


class LongestRunOracle(Oracle):
    """y = longest consecutive run of one token (a minimization target;
    minimum 0, achieved by any sequence avoiding the token)."""

    def __init__(self, token: str, oracle_id: str = "longest_run"):
        super().__init__(oracle_id, "synthetic")
        self.token = token

    def _score_one(self, text: str) -> np.ndarray:
        best = cur = 0
        for t in text.split():
            cur = cur + 1 if t == self.token else 0
            best = max(best, cur)
        return np.array([float(best)])


class PatternFractionOracle(Oracle):
    """y = fraction of tokens belonging to a given set, in [0, 1];
    empty sequences score 0. Optimum 1."""

    def __init__(self, tokens, oracle_id: str = "pattern_fraction"):
        super().__init__(oracle_id, "synthetic")
        self.tokens = set(tokens)

    def _score_one(self, text: str) -> np.ndarray:
        parts = text.split()
        if not parts:
            return np.array([0.0])
        return np.array([sum(1 for t in parts if t in self.tokens) / len(parts)])


class CompositeOracle(Oracle):
    """Stacks several single-score oracles into one score vector."""

    def __init__(self, parts: list[Oracle], oracle_id: str = "composite"):
        super().__init__(oracle_id, "synthetic")
        self.parts = parts

    def _score_one(self, text: str) -> np.ndarray:
        return np.concatenate([p._score_one(text) for p in self.parts])


# -- external oracle ---------------------------------------------------------


class ExternalOracle(Oracle):
    """Client for an oracle process speaking the line protocol.

    Either spawn a child process (argv) and use its stdio, or connect to
    host:port over TCP.
    """

    def __init__(self, scores: list[str], argv: list[str] | None = None,
                 host: str | None = None, port: int | None = None,
                 timeout: float = 30.0, oracle_id: str = "external"):
        super().__init__(oracle_id, "external")
        self.scores = list(scores)
        self.timeout = timeout
        self._next_id = 0
        self._lines: queue.Queue = queue.Queue()
        self._proc = None
        self._sock = None
        if argv is not None:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
            self._out = self._proc.stdin
            reader_src = self._proc.stdout
        elif host is not None and port is not None:
            self._sock = socket.create_connection((host, port), timeout=timeout)
            self._out = self._sock.makefile("w", encoding="utf-8")
            reader_src = self._sock.makefile("r", encoding="utf-8")
        else:
            raise OracleError("external oracle needs argv or host+port")
        self._reader = threading.Thread(
            target=self._read_loop, args=(reader_src,), daemon=True)
        self._reader.start()

    def _read_loop(self, src):
        try:
            for line in src:
                self._lines.put(line)
        except (OSError, ValueError):
            pass
        self._lines.put(None)  # EOF sentinel

    def close(self):
        try:
            self._out.close()
        except OSError:
            pass
        if self._proc is not None:
            self._proc.terminate()
            self._proc.wait(timeout=5)
        if self._sock is not None:
            self._sock.close()

    def _score_one(self, text: str) -> np.ndarray:
        res = self._roundtrip([text])[0]
        if not res.ok:
            raise OracleError(res.error)
        return res.values

    def score_batch(self, texts: list[str]) -> list[ScoreResult]:
        self.query_count += len(texts)
        return self._roundtrip(texts)

    def _roundtrip(self, texts: list[str]) -> list[ScoreResult]:
        ids = []
        for t in texts:
            rid = self._next_id
            self._next_id += 1
            ids.append(rid)
            self._out.write(json.dumps(
                {"id": rid, "seq": t, "scores": self.scores}) + "\n")
        self._out.flush()
        pending = dict.fromkeys(ids)
        remaining = set(ids)
        deadline = time.monotonic() + self.timeout * max(1, len(texts))
        while remaining:
            budget = deadline - time.monotonic()
            if budget <= 0:
                break
            try:
                line = self._lines.get(timeout=budget)
            except queue.Empty:
                break
            if line is None:
                for rid in remaining:
                    pending[rid] = ScoreResult(error="oracle closed the stream")
                remaining.clear()
                break
            try:
                obj = json.loads(line)
                rid = obj["id"]
            except (json.JSONDecodeError, KeyError, TypeError):
                continue  # malformed line; keep waiting for valid ones
            if rid not in remaining:
                continue
            remaining.discard(rid)
            if "error" in obj and obj["error"] is not None:
                pending[rid] = ScoreResult(error=str(obj["error"]))
            else:
                try:
                    vals = np.asarray(obj["values"], dtype=np.float64)
                except (KeyError, TypeError, ValueError):
                    pending[rid] = ScoreResult(error="malformed response")
                    continue
                if not np.all(np.isfinite(vals)):
                    pending[rid] = ScoreResult(error="non-finite score")
                else:
                    pending[rid] = ScoreResult(values=vals)
        for rid in remaining:
            pending[rid] = ScoreResult(error="timeout")
        return [pending[rid] for rid in ids]


# -- registry ----------------------------------------------------------------


def build_oracle(spec: dict) -> Oracle:
    """Construct an oracle from a config table (see README for keys)."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    oid = spec.pop("id", kind or "oracle")
    spec.pop("direction", None)  # consumed by the caller, not the oracle
    try:
        if kind == "token_count":
            return TokenCountOracle(spec.pop("token"), oracle_id=oid)
        if kind == "weighted_composition":
            return WeightedCompositionOracle(spec.pop("weights"), oracle_id=oid)
        if kind == "longest_run":
            return LongestRunOracle(spec.pop("token"), oracle_id=oid)
        if kind == "pattern_fraction":
            return PatternFractionOracle(spec.pop("tokens"), oracle_id=oid)
        if kind == "external":
            return ExternalOracle(
                scores=spec.pop("scores"), argv=spec.pop("argv", None),
                host=spec.pop("host", None), port=spec.pop("port", None),
                timeout=spec.pop("timeout", 30.0), oracle_id=oid)
    except KeyError as e:
        raise OracleError(f"oracle {oid}: missing key {e}") from None
    raise OracleError(f"unknown oracle kind {kind!r}")
