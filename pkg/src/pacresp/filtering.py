"""Confidence filtering of noisy one-hot labels and export of the retained set.

For a hard-label release ``r = e_y + Z`` with ``Z ~ N(0, Sigma)`` and the
observed label ``yt = argmax r``, each alternative ``j`` is tested with

    T_j(r) = (e_yt - e_j)' Sigma^+ (r - e_j) / sqrt((e_yt - e_j)' Sigma^+ (e_yt - e_j))

which is standard normal when the true signal is ``e_j``. The sample is kept
only if every alternative is rejected at level ``alpha``.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
from scipy.special import ndtri

from . import accounting
from .calibration import ZERO_DIR_TOL, NoiseSpec
from .core import BudgetExhausted, InvalidParameter, to_bits
from .curator import answer_query
from .learners import predict_matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterDecision:
    query_id: Any
    label: int
    min_statistic: float
    threshold: float
    retained: bool


def threshold_for(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise InvalidParameter(f"alpha must lie in (0, 1), got {alpha!r}")
    return float(ndtri(1.0 - alpha))


def test_statistics(responses, spec: NoiseSpec, labels) -> np.ndarray:
    """``T_j`` for every row and class ``j``, shape ``(N, d)``; the observed label's column is NaN.

    Directions without noise are left out of the quadratic form. If ``r - e_j``
    has a component in those directions then ``e_j`` cannot have produced
    ``r`` and ``T_j = +inf``; if the contrast ``e_label - e_j`` has no noisy
    component and nothing rules ``j`` out, ``T_j = -inf``.
    """
    R = np.atleast_2d(np.asarray(responses, dtype=np.float64))
    labels = np.broadcast_to(np.asarray(labels), (R.shape[0],))
    n, d = R.shape
    noisy = spec.noisy
    inv = 1.0 / spec.variances[noisy]
    B = spec.basis
    P = R @ B
    U_lab = B[labels]  # rows: coordinates of e_label
    out = np.full((n, d), np.nan)
    for j in range(d):
        u = U_lab - B[j]
        v = P - B[j]
        un, vn = u[:, noisy], v[:, noisy]
        den2 = (un * un) @ inv
        with np.errstate(invalid="ignore", divide="ignore"):
            t = ((un * vn) @ inv) / np.sqrt(den2)
        t = np.where(den2 > 0.0, t, -np.inf)
        if not noisy.all():
            t = np.where(np.abs(v[:, ~noisy]).max(axis=1) > ZERO_DIR_TOL, np.inf, t)
        out[:, j] = np.where(labels == j, np.nan, t)
    return out


def filter_batch(responses, spec: NoiseSpec, alpha: float):
    """Labels, minimum statistics and retention flags for a stack of responses."""
    thr = threshold_for(alpha)
    R = np.atleast_2d(np.asarray(responses, dtype=np.float64))
    labels = np.argmax(R, axis=1)
    if R.shape[1] == 1:
        t_min = np.full(R.shape[0], np.inf)
    else:
        t_min = np.nanmin(test_statistics(R, spec, labels), axis=1)
    return labels, t_min, t_min >= thr


def filter_response(response, spec: NoiseSpec, alpha: float, query_id=None) -> FilterDecision:
    labels, t_min, kept = filter_batch(response, spec, alpha)
    return FilterDecision(query_id, int(labels[0]), float(t_min[0]), threshold_for(alpha), bool(kept[0]))


def null_statistic(response, spec: NoiseSpec, true_label: int, other: int) -> float:
    """``T_true`` computed as if ``other`` were the observed label: N(0, 1) under the truth."""
    r = np.asarray(response, dtype=np.float64)
    B = spec.basis
    noisy = spec.noisy
    u = (B[other] - B[true_label])[noisy]
    v = (r @ B - B[true_label])[noisy]
    var = spec.variances[noisy]
    return float(np.sum(u * v / var) / np.sqrt(np.sum(u * u / var)))


def false_retain_rate(
    spec: NoiseSpec, true_label: int, alpha: float, trials: int, seed: int = 0, chunk: int = 50_000
) -> float:
    """Monte Carlo fraction of draws where the label flips and is still retained."""
    rng = np.random.default_rng([0xF17, seed])
    scale = spec.basis * np.sqrt(spec.variances)
    e = np.eye(spec.d)[true_label]
    bad, done = 0, 0
    while done < trials:
        k = min(chunk, trials - done)
        R = e + rng.standard_normal((k, spec.d)) @ scale.T
        labels, _, kept = filter_batch(R, spec, alpha)
        bad += int(np.sum(kept & (labels != true_label)))
        done += k
    return bad / trials


def identity_spec(d: int, sigma2: float = 1.0) -> NoiseSpec:
    """Isotropic noise ``sigma2 * I`` as a spec, for tests and studies."""
    v = np.full(d, float(sigma2))
    return NoiseSpec(np.eye(d), v, np.zeros(d), float("nan"))


@dataclass
class DistillManifest:
    alpha: float
    b_nats: float
    b_bits: float
    T: int
    labeled: int
    retained: int
    cum_B_nats: float
    cum_B_bits: float
    mia_bound: float
    dp_epsilon_equiv: float
    dp_delta: float
    class_counts: list
    truncated: bool
    config_hash: str = ""


def export_distillation_set(
    decisions: list[FilterDecision],
    features: np.ndarray,
    out_csv,
    out_manifest,
    alpha: float,
    b: float,
    cum_B: float,
    d: int,
    truncated: bool = False,
    dp_delta: float = 1e-5,
    config_hash: str = "",
) -> DistillManifest:
    """Write retained ``(features..., label)`` rows plus a JSON manifest.

    ``decisions[k]`` belongs to ``features[k]``; the manifest carries the
    guarantee the exported labels inherit by post-processing.
    """
    X = np.asarray(features, dtype=np.float64)
    kept = [k for k, dec in enumerate(decisions) if dec.retained]
    if not kept:
        log.warning("no samples retained at alpha=%g; exporting an empty set", alpha)
    labels = [decisions[k].label for k in kept]
    with open(out_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(X.shape[1])] + ["label"])
        for k, lab in zip(kept, labels):
            w.writerow([repr(float(v)) for v in X[k]] + [lab])
    bound = accounting.mia_bound_from_mi(cum_B, 0.5)
    man = DistillManifest(
        alpha=float(alpha),
        b_nats=float(b),
        b_bits=to_bits(b),
        T=len(decisions),
        labeled=len(decisions),
        retained=len(kept),
        cum_B_nats=float(cum_B),
        cum_B_bits=to_bits(cum_B),
        mia_bound=bound,
        dp_epsilon_equiv=accounting.dp_epsilon_equiv(cum_B, dp_delta, 0.5),
        dp_delta=dp_delta,
        class_counts=np.bincount(np.asarray(labels, dtype=int), minlength=d).tolist(),
        truncated=bool(truncated),
        config_hash=config_hash,
    )
    Path(out_manifest).write_text(json.dumps(_finite(asdict(man)), indent=2, sort_keys=True) + "\n")
    return man


def _finite(obj: dict) -> dict:
    # JSON has no infinity; a vacuous epsilon is written as null.
    return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in obj.items()}


def label_pool(curator, pool, features, b: float, alpha: float):
    """Stream an unlabelled pool through the curator in hard-label mode and filter each release.

    Stops at budget exhaustion; returns the decisions for the rows labelled so
    far and whether the pool was cut short.
    """
    X = np.asarray(features, dtype=np.float64)
    decisions = []
    for k, x in enumerate(X):
        mech = predict_matrix(pool, x, query_id=k, mode="hard")
        try:
            rel = answer_query(curator, mech, b)
        except BudgetExhausted:
            log.warning("budget exhausted after %d of %d pool rows", k, len(X))
            return decisions, True
        decisions.append(filter_response(rel.response, rel.spec, alpha, query_id=k))
    return decisions, False
