"""Posterior-aware curator: calibrate to the current belief, release, update, account."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import accounting
from .calibration import (
    ZERO_DIR_TOL,
    MechanismMatrix,
    NoiseSpec,
    UnsupportedInstance,
    calibrate,
    log_likelihoods,
    sample_noise,
    verify_mi_bound,
)
from .core import (
    BeliefState,
    BudgetAccountant,
    BudgetExhausted,
    DataError,
    logsumexp,
    SecretSpace,
    Transcript,
    TranscriptEntry,
    sample_secret,
    to_bits,
)


def step_rng(master_seed: int, step: int) -> np.random.Generator:
    """Independent noise stream for release ``step`` (1-based)."""
    return np.random.default_rng([int(master_seed), int(step)])


def first_argmax(v: np.ndarray) -> int:
    return int(np.argmax(v))


@dataclass
class CuratorState:
    space: SecretSpace
    secret_index: int
    belief: BeliefState
    transcript: Transcript = field(default_factory=Transcript)
    accountant: BudgetAccountant = field(default_factory=BudgetAccountant)
    master_seed: int = 0
    score_mode: bool = False

    @classmethod
    def start(
        cls,
        space: SecretSpace,
        secret_seed: int,
        master_seed: int,
        halt_threshold: float | None = None,
        unit: str = "nats",
    ) -> CuratorState:
        return cls(
            space=space,
            secret_index=sample_secret(space, secret_seed),
            belief=BeliefState.uniform(space.m),
            accountant=BudgetAccountant(halt_threshold=halt_threshold, unit=unit),
            master_seed=master_seed,
        )

    @property
    def step(self) -> int:
        return len(self.transcript)

    def mia_bound(self) -> float:
        return accounting.mia_bound_from_mi(self.accountant.cumulative, 0.5)

    def check_invariants(self) -> None:
        lw = self.belief.log_weights
        assert abs(logsumexp(lw)) <= 1e-12
        assert np.isfinite(lw[self.secret_index]), "true secret excluded"
        assert self.accountant.steps == len(self.transcript) == self.belief.step


@dataclass(frozen=True)
class Release:
    response: np.ndarray
    label: int
    spec: NoiseSpec
    step: int


def answer_query(state: CuratorState, mech: MechanismMatrix, b_t: float, belief_for_noise=None) -> Release:
    """Serve one query and commit belief, transcript and ledger together.

    ``belief_for_noise`` overrides the belief used for calibration; it exists
    only so tests can reproduce the stale-prior failure mode.
    """
    acct = state.accountant
    if acct.exhausted or acct.would_exceed(b_t):
        acct.exhausted = True
        raise BudgetExhausted(acct.cumulative, acct.halt_threshold, state.mia_bound())
    if mech.m != state.space.m:
        raise DataError(f"mechanism has {mech.m} rows, secret space has {state.space.m}")

    step = state.step + 1
    spec = calibrate(mech, state.belief if belief_for_noise is None else belief_for_noise, b_t)
    response = mech.outputs[state.secret_index] + sample_noise(spec, step_rng(state.master_seed, step))
    label = first_argmax(response)
    new_belief = state.belief.updated(log_likelihoods(spec, mech, response))
    new_acct = acct.copy().accumulate(b_t)

    state.belief = new_belief
    state.transcript.append(TranscriptEntry(mech.query_id, mech, response, spec, float(b_t), label))
    state.accountant = new_acct
    return Release(response, label, spec, step)


def _from_scratch_loglik(spec: NoiseSpec, mech: MechanismMatrix, response: np.ndarray) -> np.ndarray:
    # Direct Gaussian exponent per secret; deliberately not the centred form used online.
    diff = (response[None, :] - mech.outputs) @ spec.basis
    noisy = spec.noisy
    q = -0.5 * np.sum(diff[:, noisy] ** 2 / spec.variances[noisy], axis=1)
    if not noisy.all():
        q = np.where(np.abs(diff[:, ~noisy]).max(axis=1) > ZERO_DIR_TOL, -np.inf, q)
    return q


def posterior_from_scratch(space: SecretSpace, transcript: Transcript) -> np.ndarray:
    """Prior times the product of every stored release's likelihood, normalised."""
    logp = np.log(space.prior)
    for entry in transcript:
        logp = logp + _from_scratch_loglik(entry.spec, entry.mech, entry.response)
    return np.exp(logp - logsumexp(logp))


def belief_oracle_check(state: CuratorState) -> float:
    """Max absolute gap between the incremental belief and a from-scratch posterior."""
    return float(np.max(np.abs(posterior_from_scratch(state.space, state.transcript) - state.belief.probs)))


def conditional_mi_audit(belief, mech: MechanismMatrix, b_t: float, spec: NoiseSpec | None = None):
    """Quadrature ``I(S; R_t | transcript)`` under ``belief`` for the release ``spec``.

    Returns ``None`` when the noise rank is too high for quadrature.
    """
    if spec is None:
        spec = calibrate(mech, belief, b_t)
    try:
        return verify_mi_bound(mech, belief, spec)
    except UnsupportedInstance:
        return None


def write_audit_log(state: CuratorState, fh) -> None:
    """JSON-lines audit log, one object per release."""
    cum = 0.0
    for k, entry in enumerate(state.transcript, start=1):
        cum = math.fsum([cum, entry.b_t])
        rec = {
            "step": k,
            "query_id": _jsonable(entry.query_id),
            "b_t": entry.b_t,
            "eigvals": entry.spec.eigenvalues.tolist(),
            "variances": entry.spec.variances.tolist(),
            "response": entry.response.tolist(),
            "label": entry.label,
            "cum_B": cum,
            "cum_B_bits": to_bits(cum),
            "mia_bound": accounting.mia_bound_from_mi(cum, 0.5),
        }
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _jsonable(v):
    if isinstance(v, np.integer):
        return int(v)
    return v
