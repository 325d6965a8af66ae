"""Deterministic per-subset learners and the offline model pool.

One model is trained per candidate subset before any query arrives, so the
online cost of a query is ``m`` inferences. Both learners are free of hidden
randomness: retraining on the same subset yields identical parameters.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import MechanismMatrix
from .core import DataError, InvalidParameter, SecretSpace, Universe

LEARNERS = ("nearest_centroid", "logistic_gd")
POOL_FORMAT = "pacresp.model_pool/1"


class TrainingError(RuntimeError):
    pass


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - np.max(scores, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def fit_centroids(X: np.ndarray, y: np.ndarray, d: int):
    """Per-class means; classes with no samples are marked absent (NaN row)."""
    if len(y) == 0:
        raise TrainingError("cannot train on an empty subset")
    counts = np.bincount(y, minlength=d).astype(np.float64)
    sums = np.zeros((d, X.shape[1]))
    np.add.at(sums, y, X)
    with np.errstate(invalid="ignore", divide="ignore"):
        cent = sums / counts[:, None]
    cent[counts == 0] = np.nan
    return cent


def fit_logistic(X, y, d, steps=200, lr=0.5, l2=1e-3):
    """Multinomial logistic regression by full-batch gradient descent from zero."""
    if len(y) == 0:
        raise TrainingError("cannot train on an empty subset")
    n, dx = X.shape
    W = np.zeros((dx, d))
    c = np.zeros(d)
    Y = np.eye(d)[y]
    for _ in range(steps):
        P = _softmax(X @ W + c)
        G = (P - Y) / n
        W -= lr * (X.T @ G + l2 * W)
        c -= lr * G.sum(axis=0)
    return W, c


@dataclass
class ModelPool:
    """``m`` trained models stacked as arrays.

    nearest_centroid: ``params["centroids"]`` is ``(m, d, d_x)``, NaN for
    absent classes. logistic_gd: ``params["W"]`` ``(m, d_x, d)`` and
    ``params["c"]`` ``(m, d)``.
    """

    learner_kind: str
    params: dict
    d: int
    d_x: int
    train_seed: int = 0
    universe_digest: str = ""
    space_seed: int = 0

    @property
    def m(self) -> int:
        key = "centroids" if self.learner_kind == "nearest_centroid" else "W"
        return self.params[key].shape[0]

    def scores(self, X: np.ndarray) -> np.ndarray:
        """Model scores, shape ``(q, m, d)``; higher is better, absent classes ``-inf``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.d_x:
            raise DataError(f"query has {X.shape[1]} features, pool expects {self.d_x}")
        if self.learner_kind == "nearest_centroid":
            C = self.params["centroids"]  # m, d, dx
            diff = X[:, None, None, :] - C[None]
            dist = np.sqrt(np.sum(diff * diff, axis=-1))
            return np.where(np.isnan(dist), -np.inf, -dist)
        W, c = self.params["W"], self.params["c"]
        return np.einsum("qk,mkd->qmd", X, W) + c[None]

    def predict_labels(self, X: np.ndarray) -> np.ndarray:
        """Hard labels ``(q, m)``; ``argmax`` already breaks ties toward the lowest class."""
        return np.argmax(self.scores(X), axis=-1)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _softmax(self.scores(X))

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": POOL_FORMAT,
                "key": {
                    "universe": self.universe_digest,
                    "m": self.m,
                    "seed": self.train_seed,
                    "space_seed": self.space_seed,
                    "learner_kind": self.learner_kind,
                },
                "d": self.d,
                "d_x": self.d_x,
                "params": {k: _encode(v) for k, v in sorted(self.params.items())},
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> ModelPool:
        obj = json.loads(text)
        if obj.get("format") != POOL_FORMAT:
            raise DataError(f"unsupported pool format {obj.get('format')!r}")
        key = obj["key"]
        return cls(
            learner_kind=key["learner_kind"],
            params={k: _decode(v) for k, v in obj["params"].items()},
            d=obj["d"],
            d_x=obj["d_x"],
            train_seed=key["seed"],
            universe_digest=key["universe"],
            space_seed=key["space_seed"],
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> ModelPool:
        return cls.from_json(Path(path).read_text())

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "hex": a.tobytes().hex()}


def _decode(obj: dict) -> np.ndarray:
    return np.frombuffer(bytes.fromhex(obj["hex"]), dtype="<f8").reshape(obj["shape"]).copy()


def train_pool(
    universe: Universe,
    space: SecretSpace,
    learner_kind: str = "nearest_centroid",
    train_seed: int = 0,
    **hyper,
) -> ModelPool:
    """Train one model per subset ``S_j``.

    Both reference learners are deterministic, so ``train_seed`` only enters
    the pool key; a plug-in learner with internal randomness should derive
    its per-subset seed from it.
    """
    if learner_kind not in LEARNERS:
        raise InvalidParameter(f"unknown learner {learner_kind!r}; choose from {LEARNERS}")
    if space.n != universe.n:
        raise DataError(f"secret space covers {space.n} records, universe has {universe.n}")
    X, y, d = universe.X, universe.y, universe.d
    if learner_kind == "nearest_centroid":
        cents = []
        for j in range(space.m):
            idx = space.subset(j)
            cents.append(fit_centroids(X[idx], y[idx], d))
        params = {"centroids": np.stack(cents)}
    else:
        Ws, cs = [], []
        for j in range(space.m):
            idx = space.subset(j)
            W, c = fit_logistic(X[idx], y[idx], d, **hyper)
            Ws.append(W)
            cs.append(c)
        params = {"W": np.stack(Ws), "c": np.stack(cs)}
    return ModelPool(
        learner_kind, params, d, universe.d_x, train_seed, universe.digest(), space.seed
    )


def train_single(X, y, d, learner_kind="nearest_centroid", **hyper) -> ModelPool:
    """A one-member pool, e.g. the full-data baseline or a distilled student."""
    if learner_kind == "nearest_centroid":
        params = {"centroids": fit_centroids(np.asarray(X, float), np.asarray(y), d)[None]}
    elif learner_kind == "logistic_gd":
        W, c = fit_logistic(np.asarray(X, float), np.asarray(y), d, **hyper)
        params = {"W": W[None], "c": c[None]}
    else:
        raise InvalidParameter(f"unknown learner {learner_kind!r}")
    return ModelPool(learner_kind, params, d, np.asarray(X).shape[1])


def one_hot_rows(labels: np.ndarray, d: int, query_id=None) -> MechanismMatrix:
    return MechanismMatrix(np.eye(d)[np.asarray(labels)], query_id)


def predict_matrix(pool: ModelPool, query, query_id=None, mode: str = "hard") -> MechanismMatrix:
    """Row ``j`` = output of model ``j`` on ``query``: one-hot (default) or softmax scores."""
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1:
        raise DataError("predict_matrix takes a single query vector")
    if mode == "hard":
        return one_hot_rows(pool.predict_labels(q[None])[0], pool.d, query_id)
    if mode == "score":
        return MechanismMatrix(pool.predict_proba(q[None])[0], query_id)
    raise InvalidParameter(f"unknown output mode {mode!r}")


def make_synthetic_universe(
    n: int,
    d: int = 3,
    d_x: int = 2,
    class_separation: float = 5.0,
    seed: int = 0,
    shift: float = 0.0,
    scale: float = 1.0,
) -> Universe:
    """Gaussian blobs with class means on a scaled simplex and unit covariance.

    ``shift`` and ``scale`` move and widen every blob, giving a covariate
    shifted pool drawn around the same class means.
    """
    if n < 2 * d:
        raise InvalidParameter("need n >= 2 d")
    means = class_means(d, d_x, class_separation)
    rng = np.random.default_rng([0xB10B, seed])
    y = np.arange(n) % d
    y = y[rng.permutation(n)]
    offset = shift * np.ones(d_x) / np.sqrt(d_x)
    X = means[y] + offset + scale * rng.standard_normal((n, d_x))
    return Universe(X, y, d)


def class_means(d: int, d_x: int, separation: float) -> np.ndarray:
    """Regular-simplex class means with adjacent means ``separation`` apart.

    The simplex lives in ``d - 1`` dimensions; for smaller ``d_x`` it is
    projected onto a fixed subspace and is no longer regular.
    """
    U, s, _ = np.linalg.svd(np.eye(d) - 1.0 / d)
    V = U[:, : d - 1] * s[: d - 1]
    if d_x >= d - 1:
        V = np.hstack([V, np.zeros((d, d_x - (d - 1)))])
    else:
        rng = np.random.default_rng([0x51, d, d_x])
        Q, _ = np.linalg.qr(rng.standard_normal((d - 1, d_x)))
        V = V @ Q
    pd = np.linalg.norm(V[0] - V[1])
    return V * (separation / pd if pd > 0 else 0.0)


def accuracy(pool: ModelPool, X, y, member: int = 0) -> float:
    return float(np.mean(pool.predict_labels(X)[:, member] == np.asarray(y)))
