"""Gaussian noise calibrated to a belief over a finite secret space.

Given the ``m x d`` table of deterministic outputs and a belief ``P``, the
output covariance under ``P`` is decomposed as ``U diag(lam) U^T`` and noise
``N(0, U diag(var) U^T)`` is added with

    var_i = sqrt(lam_i) * sum_j sqrt(lam_j) / (2 B)

which keeps ``I_{S~P}(S; M(S) + Z) <= B``. The decomposition is taken from the
SVD of the belief-weighted, centred output table, so the ``d x d`` covariance
is never formed. Likelihoods for the Bayes update are projections onto the
same basis; nothing is ever inverted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import logsumexp

from .core import BeliefState, DataError, InvalidParameter

RANK_FLOOR_REL = 1e-12
RANK_FLOOR_ABS = 1e-15
ZERO_DIR_TOL = 1e-9


class UnsupportedInstance(ValueError):
    """Instance too large for the quadrature MI oracle."""


@dataclass(frozen=True)
class MechanismMatrix:
    """Row ``j`` is the deterministic output of the model trained on ``S_j``."""

    outputs: np.ndarray
    query_id: Any = None

    def __post_init__(self):
        out = np.array(self.outputs, dtype=np.float64)
        if out.ndim != 2:
            raise DataError("mechanism outputs must be an m x d matrix")
        if not np.all(np.isfinite(out)):
            raise DataError("mechanism outputs contain non-finite entries")
        out.setflags(write=False)
        object.__setattr__(self, "outputs", out)

    @property
    def m(self) -> int:
        return self.outputs.shape[0]

    @property
    def d(self) -> int:
        return self.outputs.shape[1]

    def is_stable(self) -> bool:
        return bool(np.all(self.outputs == self.outputs[0]))


@dataclass(frozen=True)
class NoiseSpec:
    """Eigenbasis (columns), per-direction noise variance, covariance eigenvalues."""

    basis: np.ndarray
    variances: np.ndarray
    eigenvalues: np.ndarray
    budget_b: float
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def d(self) -> int:
        return len(self.variances)

    @property
    def noisy(self) -> np.ndarray:
        return self.variances > 0

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.variances))

    def covariance(self) -> np.ndarray:
        return (self.basis * self.variances) @ self.basis.T

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.tolist(),
            "variances": self.variances.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "budget_b": self.budget_b,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, obj: dict) -> NoiseSpec:
        return cls(
            np.asarray(obj["basis"], dtype=np.float64),
            np.asarray(obj["variances"], dtype=np.float64),
            np.asarray(obj["eigenvalues"], dtype=np.float64),
            float(obj["budget_b"]),
        )


def _probs(belief) -> np.ndarray:
    if isinstance(belief, BeliefState):
        return belief.probs
    p = np.asarray(belief, dtype=np.float64)
    return p / p.sum()


def _orthonormal_completion(V: np.ndarray, d: int) -> np.ndarray:
    """Extend the ``k`` orthonormal columns of ``V`` to a ``d x d`` orthonormal basis."""
    k = V.shape[1]
    if k == d:
        return V
    q, _ = np.linalg.qr(np.hstack([V, np.eye(d)]))
    return np.hstack([V, q[:, k:d]])


def weighted_decomposition(outputs: np.ndarray, p: np.ndarray):
    """Eigen-pairs of ``Cov_{S~p}(M(S))`` from the SVD of the weighted centred table."""
    mu = p @ outputs
    A = np.sqrt(p)[:, None] * (outputs - mu)
    m, d = A.shape
    _, s, vt = np.linalg.svd(A, full_matrices=False)
    basis = _orthonormal_completion(vt.T, d)
    lam = np.zeros(d)
    lam[: len(s)] = s**2
    return basis, lam, mu


def calibrate(mech: MechanismMatrix, belief, b: float) -> NoiseSpec:
    """Noise covariance bounding ``I_{S~belief}(S; M(S) + Z)`` by ``b`` nats."""
    if not b > 0 or not np.isfinite(b):
        raise InvalidParameter(f"budget must be positive and finite, got {b!r}")
    p = _probs(belief)
    if len(p) != mech.m:
        raise DataError(f"belief has {len(p)} entries, mechanism has {mech.m} rows")
    if mech.is_stable():
        return NoiseSpec(np.eye(mech.d), np.zeros(mech.d), np.zeros(mech.d), float(b))
    basis, lam, _ = weighted_decomposition(mech.outputs, p)
    lam_max = lam.max(initial=0.0)
    floor = max(RANK_FLOOR_REL * lam_max, RANK_FLOOR_ABS)
    lam = np.where(lam > floor, lam, 0.0)
    root = np.sqrt(lam)
    variances = root * root.sum() / (2.0 * b)
    return NoiseSpec(basis, variances, lam, float(b))


def sample_noise(spec: NoiseSpec, rng_seed) -> np.ndarray:
    """``basis @ (z * sqrt(var))``; zero-variance directions contribute exactly 0."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    z = rng.standard_normal(spec.d)
    if spec.rank == 0:
        return np.zeros(spec.d)
    return spec.basis @ (z * np.sqrt(spec.variances))


def log_likelihoods(spec: NoiseSpec, mech: MechanismMatrix, response) -> np.ndarray:
    """Gaussian log-likelihood of ``response`` under each secret, up to a shared constant.

    Coordinates are taken relative to the column mean of ``mech`` so the
    shared ``-|r|^2/2`` term cancels before it can swamp the differences when
    variances are huge. Secrets that disagree with the response in a
    zero-variance direction get ``-inf``.
    """
    r = np.asarray(response, dtype=np.float64)
    if r.shape != (mech.d,) or spec.d != mech.d:
        raise DataError(f"response/spec dimension mismatch with mechanism (d={mech.d})")
    noisy = spec.noisy
    if not noisy.any() and mech.is_stable():
        hit = np.abs(r - mech.outputs[0]).max() <= ZERO_DIR_TOL
        return np.zeros(mech.m) if hit else np.full(mech.m, -np.inf)
    center = mech.outputs.mean(axis=0)
    proj_m = (mech.outputs - center) @ spec.basis  # m x d
    proj_r = (r - center) @ spec.basis
    var = spec.variances[noisy]
    pm, pr = proj_m[:, noisy], proj_r[noisy]
    ll = (pm @ (pr / var)) - 0.5 * np.sum(pm * pm / var, axis=1)
    if not noisy.all():
        mismatch = np.abs(proj_m[:, ~noisy] - proj_r[~noisy]).max(axis=1) > ZERO_DIR_TOL
        ll = np.where(mismatch, -np.inf, ll)
    return ll


# --------------------------------------------------------------------------
# Quadrature MI oracle (tests / audits only)
# --------------------------------------------------------------------------

_GH_POINTS = {1: 160, 2: 64, 3: 28}


def _gauss_hermite(k: int, npts: int):
    x, w = np.polynomial.hermite.hermgauss(npts)
    x = x * np.sqrt(2.0)
    w = w / np.sqrt(np.pi)
    grids = np.meshgrid(*([x] * k), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*([w] * k), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, weights


def _mixture_mi(means: np.ndarray, p: np.ndarray, npts: int) -> float:
    """``I(S; mu_S + Z)`` with ``Z ~ N(0, I_k)`` and ``S ~ p``, by Gauss-Hermite."""
    k = means.shape[1]
    if k == 0:
        return 0.0
    nodes, weights = _gauss_hermite(k, npts)
    logp = np.log(p)
    total = 0.0
    for s in range(len(p)):
        delta = means - means[s]  # m x k
        # log sum_s' p(s') exp(<z, delta_s'> - |delta_s'|^2 / 2)
        expo = (nodes @ delta.T) - 0.5 * np.sum(delta * delta, axis=1) + logp
        total += p[s] * np.dot(weights, logsumexp(expo, axis=1))
    return float(-total)


def _exact_groups(exact: np.ndarray) -> np.ndarray:
    groups = np.full(len(exact), -1)
    reps: list[int] = []
    for s, row in enumerate(exact):
        for g, rep in enumerate(reps):
            if np.abs(exact[rep] - row).max(initial=0.0) <= ZERO_DIR_TOL:
                groups[s] = g
                break
        else:
            groups[s] = len(reps)
            reps.append(s)
    return groups


def verify_mi_bound(mech: MechanismMatrix, belief, spec: NoiseSpec, npts: int | None = None) -> float:
    """Estimate ``I(S; M(S) + Z)`` in nats for ``S ~ belief`` and ``Z`` drawn per ``spec``.

    Secrets that the calibration separates exactly (zero-variance directions) are
    grouped first; the MI is the entropy of the grouping plus the average
    within-group Gaussian-mixture MI over the noisy directions.
    """
    p_all = _probs(belief)
    live = p_all > 0
    p = p_all[live] / p_all[live].sum()
    outputs = mech.outputs[live]
    noisy = spec.noisy
    k = int(noisy.sum())
    if k > 3:
        raise UnsupportedInstance(f"noise rank {k} too high for quadrature")
    if npts is None:
        npts = _GH_POINTS.get(k, 1)
    proj = outputs @ spec.basis
    groups = _exact_groups(proj[:, ~noisy])
    whitened = proj[:, noisy] / np.sqrt(spec.variances[noisy])
    mi = 0.0
    labels = np.unique(groups)
    for g in labels:
        sel = groups == g
        pg = p[sel].sum()
        if len(labels) > 1:
            mi -= pg * np.log(pg)
        if sel.sum() > 1 and k > 0:
            mi += pg * _mixture_mi(whitened[sel], p[sel] / pg, npts)
    return max(float(mi), 0.0)
