"""Secret space, belief state, transcript and budget ledger.

Everything downstream (calibration, curator, adversary) shares these types.
MI quantities are carried in nats; conversion to bits happens only at the
edges via :func:`to_nats` / :func:`to_bits`.
"""

from __future__ import annotations

import base64
import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

LN2 = math.log(2.0)
DEFAULT_M = 128


class InvalidParameter(ValueError):
    """A caller-supplied parameter is outside its documented domain."""


class DataError(ValueError):
    """Input data is malformed (shape mismatch, non-finite entries, ...)."""


class BudgetExhausted(RuntimeError):
    """Raised when a release would push cumulative MI past the halt threshold."""

    def __init__(self, cumulative_nats: float, threshold_nats: float, bound: float):
        self.cumulative_nats = cumulative_nats
        self.threshold_nats = threshold_nats
        self.bound = bound
        super().__init__(
            f"budget exhausted: B={cumulative_nats:.6g} nats, "
            f"threshold={threshold_nats:.6g} nats, MIA bound={100 * bound:.4f}%"
        )


def logsumexp(x: np.ndarray) -> float:
    """``log(sum(exp(x)))`` for a 1-D array; ``-inf`` if every entry is ``-inf``."""
    top = np.max(x)
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.sum(np.exp(x - top))))


def to_nats(value: float, unit: str) -> float:
    if unit == "nats":
        return float(value)
    if unit == "bits":
        return float(value) * LN2
    raise InvalidParameter(f"unknown MI unit {unit!r}")


def to_bits(nats: float) -> float:
    return float(nats) / LN2


# --------------------------------------------------------------------------
# Universe
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Universe:
    """Labelled records ``(x_i, y_i)``; ``X`` is ``(n, d_x)``, ``y`` in ``{0..d-1}``."""

    X: np.ndarray
    y: np.ndarray
    d: int

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] < 1:
            raise DataError("features must be a 2-D array with d_x >= 1")
        if y.shape != (X.shape[0],):
            raise DataError("need exactly one label per record")
        if self.d < 2:
            raise DataError("need at least two classes")
        if len(y) and (y.min() < 0 or y.max() >= self.d):
            raise DataError(f"labels must lie in 0..{self.d - 1}")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d_x(self) -> int:
        return self.X.shape[1]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        h.update(str(self.d).encode())
        return h.hexdigest()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{k}" for k in range(self.d_x)] + ["label"])
            for xi, yi in zip(self.X, self.y):
                w.writerow([repr(float(v)) for v in xi] + [int(yi)])


def load_universe_csv(path, d: int | None = None) -> Universe:
    """Read a universe from CSV: header row, numeric features, integer label last."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file (header required)")
    header, body = rows[0], [r for r in rows[1:] if r]
    if len(header) < 2:
        raise DataError(f"{path}: need at least one feature column and a label column")
    try:
        float(header[0])
    except ValueError:
        pass
    else:
        raise DataError(f"{path}: first row looks numeric; a header row is required")
    X, y = [], []
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
        try:
            X.append([float(v) for v in row[:-1]])
            label = float(row[-1])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if label != int(label):
            raise DataError(f"{path}:{lineno}: label {row[-1]!r} is not an integer")
        y.append(int(label))
    X_arr = np.asarray(X, dtype=np.float64).reshape(len(body), len(header) - 1)
    y_arr = np.asarray(y, dtype=np.int64)
    if d is None:
        d = max(2, int(y_arr.max()) + 1 if len(y_arr) else 2)
    return Universe(X_arr, y_arr, d)


def load_features_csv(path) -> np.ndarray:
    """Unlabelled pool: header row, every column numeric."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path}: empty file (header required)")
    try:
        return np.asarray([[float(v) for v in r] for r in rows[1:]], dtype=np.float64).reshape(
            len(rows) - 1, len(rows[0])
        )
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


# --------------------------------------------------------------------------
# Secret space
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SecretSpace:
    """``membership[i, j]`` is True iff record ``i`` belongs to subset ``S_j``."""

    membership: np.ndarray
    seed: int = 0

    def __post_init__(self):
        mem = np.asarray(self.membership, dtype=bool)
        if mem.ndim != 2:
            raise DataError("membership must be an n x m matrix")
        m = mem.shape[1]
        if m < 2 or m % 2:
            raise InvalidParameter(f"m must be even and >= 2, got {m}")
        if not np.all(mem.sum(axis=1) == m // 2):
            raise DataError("every record must belong to exactly m/2 subsets")
        mem.setflags(write=False)
        object.__setattr__(self, "membership", mem)

    @property
    def n(self) -> int:
        return self.membership.shape[0]

    @property
    def m(self) -> int:
        return self.membership.shape[1]

    @property
    def prior(self) -> np.ndarray:
        return np.full(self.m, 1.0 / self.m)

    def subset(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.membership[:, j])

    def to_json(self) -> str:
        bits = np.packbits(self.membership, axis=None)
        return json.dumps(
            {
                "format": "pacresp.secret_space/1",
                "n": self.n,
                "m": self.m,
                "seed": int(self.seed),
                "membership": base64.b64encode(bits.tobytes()).decode("ascii"),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> SecretSpace:
        obj = json.loads(text)
        n, m = int(obj["n"]), int(obj["m"])
        raw = np.frombuffer(base64.b64decode(obj["membership"]), dtype=np.uint8)
        mem = np.unpackbits(raw, count=n * m).astype(bool).reshape(n, m)
        return cls(mem, seed=int(obj["seed"]))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> SecretSpace:
        return cls.from_json(Path(path).read_text())


def construct_secret_space(universe: Universe | int, m: int = DEFAULT_M, seed: int = 0) -> SecretSpace:
    """Assign each record to exactly ``m/2`` of ``m`` subsets.

    Each row is an independent seeded partial Fisher-Yates shuffle of
    ``0..m-1`` truncated at ``m/2``, so every record has inclusion
    probability exactly 1/2 and the rows are exactly regular.
    ``universe`` may also be a plain record count.
    """
    if not isinstance(m, (int, np.integer)) or m < 2 or m % 2:
        raise InvalidParameter(f"m must be an even integer >= 2, got {m!r}")
    n = universe if isinstance(universe, (int, np.integer)) else universe.n
    rng = np.random.default_rng(seed)
    half = m // 2
    mem = np.zeros((n, m), dtype=bool)
    idx = np.empty(m, dtype=np.int64)
    for i in range(n):
        idx[:] = np.arange(m)
        for k in range(half):
            r = k + int(rng.integers(m - k))
            idx[k], idx[r] = idx[r], idx[k]
        mem[i, idx[:half]] = True
    return SecretSpace(mem, seed=seed)


def sample_secret(space: SecretSpace, seed: int) -> int:
    """Uniform draw from ``0..m-1``; fixed for the lifetime of one game."""
    return int(np.random.default_rng([0x5EC2E7, seed]).integers(space.m))


# --------------------------------------------------------------------------
# Belief
# --------------------------------------------------------------------------


@dataclass
class BeliefState:
    """Log-domain posterior over the ``m`` subsets.

    Single-writer. ``update`` adds log-likelihoods and renormalises; an entry
    at ``-inf`` stays there because likelihoods are never ``+inf``.
    """

    log_weights: np.ndarray
    step: int = 0

    @classmethod
    def uniform(cls, m: int) -> BeliefState:
        return cls(np.full(m, -math.log(m)), 0)

    @property
    def m(self) -> int:
        return len(self.log_weights)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def copy(self) -> BeliefState:
        return BeliefState(self.log_weights.copy(), self.step)

    def updated(self, loglik: np.ndarray) -> BeliefState:
        loglik = np.asarray(loglik, dtype=np.float64)
        if not loglik.any():
            return BeliefState(self.log_weights.copy(), self.step + 1)
        lw = self.log_weights + loglik
        if np.any(np.isnan(lw)):
            raise DataError("NaN in belief update")
        z = logsumexp(lw)
        if not np.isfinite(z):
            raise DataError("belief update excluded every secret")
        return BeliefState(lw - z, self.step + 1)

    def update(self, loglik: np.ndarray) -> None:
        new = self.updated(loglik)
        self.log_weights, self.step = new.log_weights, new.step


# --------------------------------------------------------------------------
# Transcript
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TranscriptEntry:
    query_id: Any
    mech: Any  # MechanismMatrix
    response: np.ndarray
    spec: Any  # NoiseSpec used for this release
    b_t: float
    label: int


@dataclass
class Transcript:
    """Append-only public record of ``(query, mechanism, response)``."""

    _entries: list = field(default_factory=list)

    def append(self, entry: TranscriptEntry) -> None:
        self._entries.append(entry)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __getitem__(self, k):
        return self._entries[k]

    @property
    def entries(self) -> tuple:
        return tuple(self._entries)


# --------------------------------------------------------------------------
# Budget accountant
# --------------------------------------------------------------------------


@dataclass
class BudgetAccountant:
    """Linear MI ledger with Kahan-compensated accumulation.

    ``cumulative`` and ``halt_threshold`` are nats; ``unit`` records what the
    caller configured so reports can echo it back.
    """

    halt_threshold: float | None = None
    unit: str = "nats"
    cumulative: float = 0.0
    steps: int = 0
    exhausted: bool = False
    _comp: float = 0.0

    def __post_init__(self):
        if self.halt_threshold is not None and self.halt_threshold <= 0:
            raise InvalidParameter("halt_threshold must be positive")

    def _kahan_add(self, b_t: float) -> float:
        y = b_t - self._comp
        t = self.cumulative + y
        self._comp = (t - self.cumulative) - y
        return t

    def would_exceed(self, b_t: float) -> bool:
        if self.halt_threshold is None:
            return False
        return self.cumulative + (b_t - self._comp) > self.halt_threshold

    def accumulate(self, b_t: float) -> BudgetAccountant:
        if not b_t > 0 or not math.isfinite(b_t):
            raise InvalidParameter(f"per-step budget must be positive and finite, got {b_t!r}")
        self.cumulative = self._kahan_add(b_t)
        self.steps += 1
        if self.halt_threshold is not None and self.cumulative > self.halt_threshold:
            self.exhausted = True
        return self

    def snapshot(self) -> dict:
        return {
            "steps": self.steps,
            "cum_mi_nats": self.cumulative,
            "cum_mi_bits": to_bits(self.cumulative),
            "halt_threshold_nats": self.halt_threshold,
            "exhausted": self.exhausted,
        }

    def copy(self) -> BudgetAccountant:
        return BudgetAccountant(
            self.halt_threshold, self.unit, self.cumulative, self.steps, self.exhausted, self._comp
        )


def accumulate(acct: BudgetAccountant, b_t: float) -> BudgetAccountant:
    return acct.accumulate(b_t)
