"""Line-delimited JSON query service in front of one curator.

Requests, one JSON object per line::

    {"op": "query", "features": [...]}
    {"op": "status"}
    {"op": "shutdown"}

Every line gets exactly one reply line. A failed request never touches the
curator state. All queries, from any connection, go through one lock.
"""

from __future__ import annotations

import json
import logging
import math
import socketserver
import threading

import numpy as np

from . import accounting
from .core import BudgetExhausted, DataError, InvalidParameter
from .curator import CuratorState, answer_query
from .learners import ModelPool, predict_matrix

log = logging.getLogger(__name__)

OPS = ("query", "status", "shutdown")


def _num(x: float):
    return float(x) if math.isfinite(x) else None


def dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False)


class QueryService:
    def __init__(self, curator: CuratorState, pool: ModelPool, b: float, dp_delta: float = 1e-5):
        if curator.space.m != pool.m:
            raise DataError(f"pool has {pool.m} models, secret space has {curator.space.m}")
        self.curator = curator
        self.pool = pool
        self.b = float(b)
        self.dp_delta = dp_delta
        self.lock = threading.Lock()
        self.closed = False

    def _guarantee(self) -> dict:
        B = self.curator.accountant.cumulative
        return {
            "cum_mi_nats": B,
            "cum_mi_bits": B / math.log(2.0),
            "mia_bound_pct": 100.0 * accounting.mia_bound_from_mi(B, 0.5),
            "dp_eps_equiv": _num(accounting.dp_epsilon_equiv(B, self.dp_delta, 0.5)),
        }

    def status(self) -> dict:
        snap = self.curator.accountant.snapshot()
        return {
            "op": "status",
            "step": self.curator.step,
            "exhausted": snap["exhausted"],
            "halt_threshold_nats": snap["halt_threshold_nats"],
            **self._guarantee(),
        }

    def query(self, features) -> dict:
        x = np.asarray(features, dtype=np.float64)
        if x.shape != (self.pool.d_x,) or not np.all(np.isfinite(x)):
            raise DataError(f"features must be {self.pool.d_x} finite numbers")
        mode = "score" if self.curator.score_mode else "hard"
        mech = predict_matrix(self.pool, x, query_id=self.curator.step + 1, mode=mode)
        rel = answer_query(self.curator, mech, self.b)
        return {
            "label": rel.label,
            "response": [float(v) for v in rel.response],
            "step": rel.step,
            **self._guarantee(),
        }

    def handle(self, req) -> dict:
        if not isinstance(req, dict):
            return {"error": "bad_request", "detail": "request must be a JSON object"}
        op = req.get("op")
        if op not in OPS:
            return {"error": "bad_request", "detail": f"op must be one of {list(OPS)}"}
        with self.lock:
            if op == "status":
                reply = self.status()
            elif op == "shutdown":
                self.closed = True
                reply = {"op": "shutdown", "ok": True}
            elif self.closed:
                reply = {"error": "shutting_down"}
            elif "features" not in req:
                reply = {"error": "bad_request", "detail": "query needs 'features'"}
            else:
                try:
                    reply = self.query(req["features"])
                except BudgetExhausted:
                    reply = {"error": "budget_exhausted", "step": self.curator.step, **self._guarantee()}
                except (DataError, InvalidParameter, TypeError, ValueError) as exc:
                    reply = {"error": "bad_request", "detail": str(exc)}
        if "id" in req:
            reply["id"] = req["id"]
        return reply

    def handle_line(self, line: str) -> str:
        try:
            req = json.loads(line)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            return dumps({"error": "bad_json", "detail": str(exc)})
        return dumps(self.handle(req))


def serve_stdio(service: QueryService, fin, fout) -> int:
    """Answer lines from ``fin`` until EOF or shutdown; returns the number of replies."""
    n = 0
    for line in fin:
        if line.endswith("\n"):
            line = line[:-1]
        fout.write(service.handle_line(line) + "\n")
        fout.flush()
        n += 1
        if service.closed:
            break
    return n


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        service: QueryService = self.server.service
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace").rstrip("\n")
            self.wfile.write((service.handle_line(line) + "\n").encode())
            self.wfile.flush()
            if service.closed:
                threading.Thread(target=self.server.shutdown, daemon=True).start()
                break


class TCPService(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, service: QueryService, host: str = "127.0.0.1", port: int = 0):
        self.service = service
        super().__init__((host, port), _Handler)

    @property
    def port(self) -> int:
        return self.server_address[1]
