"""Informed membership-inference adversary and the red-team game harness.

The adversary knows the universe, the secret space, the learners and every
published noise calibration. It tracks the same posterior as the curator and
declares record ``i`` a member iff its posterior membership probability is
strictly above 1/2.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import accounting
from .calibration import MechanismMatrix, NoiseSpec, log_likelihoods
from .core import BeliefState, BudgetExhausted, SecretSpace, to_bits
from .curator import CuratorState, answer_query, write_audit_log
from .learners import ModelPool

log = logging.getLogger(__name__)


class BoundViolation(AssertionError):
    """Empirical attack accuracy exceeded the theoretical bound by more than 3 SE."""


@dataclass
class AdversaryState:
    space: SecretSpace
    belief: BeliefState
    targets: np.ndarray | None = None

    @classmethod
    def start(cls, space: SecretSpace, targets=None) -> AdversaryState:
        return cls(space, BeliefState.uniform(space.m), None if targets is None else np.asarray(targets))

    def membership_probs(self) -> np.ndarray:
        p = self.belief.probs
        mem = self.space.membership if self.targets is None else self.space.membership[self.targets]
        return mem @ p


def observe(state: AdversaryState, mech: MechanismMatrix, spec: NoiseSpec, response) -> AdversaryState:
    """Bayes update from one public release, using the published calibration."""
    state.belief = state.belief.updated(log_likelihoods(spec, mech, response))
    return state


def decide_membership(state: AdversaryState, i: int) -> int:
    p_i = float(state.space.membership[i] @ state.belief.probs)
    return int(p_i > 0.5)


def decide_all(state: AdversaryState) -> np.ndarray:
    return (state.space.membership @ state.belief.probs > 0.5).astype(np.int8)


# --------------------------------------------------------------------------
# Game harness
# --------------------------------------------------------------------------


@dataclass
class GameSpec:
    """Everything one batch of trials needs; seeds are explicit."""

    b: float  # nats per step
    horizon: int
    checkpoints: tuple
    trials: int
    secret_seed: int = 0
    noise_seed: int = 0
    query_seed: int = 0
    strategy: str = "member_replay"
    halt_threshold: float | None = None
    check_mirror: bool = False
    audit_dir: str | None = None


@dataclass
class GameReport:
    rows: list = field(default_factory=list)  # (trial, T, acc, bound, cum_B_bits)
    halted: dict = field(default_factory=dict)  # trial -> step at which the budget ran out
    b: float = 0.0
    # (trial, T, mean_i max(p_i, 1 - p_i)): the adversary's own expected accuracy, not in the CSV
    expected: list = field(default_factory=list)

    def summary(self) -> list[dict]:
        out = []
        for T in sorted({r[1] for r in self.rows}):
            accs = np.array([r[2] for r in self.rows if r[1] == T])
            se = accs.std(ddof=1) / math.sqrt(len(accs)) if len(accs) > 1 else 0.0
            bound = accounting.mia_bound_from_mi(T * self.b, 0.5)
            row = {"T": T, "mean_acc": float(accs.mean()), "se": float(se), "bound": bound, "trials": len(accs)}
            exp = np.array([e[2] for e in self.expected if e[1] == T])
            if len(exp) > 1:
                row["mean_expected_acc"] = float(exp.mean())
                row["expected_se"] = float(exp.std(ddof=1) / math.sqrt(len(exp)))
            out.append(row)
        return out

    def check_bound(self, n_se: float = 3.0) -> None:
        for s in self.summary():
            if s["mean_acc"] > s["bound"] + n_se * s["se"] + 1e-12:
                raise BoundViolation(
                    f"T={s['T']}: empirical {s['mean_acc']:.4f} > bound {s['bound']:.4f} + {n_se} SE"
                )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "checkpoint_T", "empirical_acc", "theoretical_bound", "cum_B_bits"])
        for trial, T, acc, bound, bits in self.rows:
            w.writerow([trial, T, repr(float(acc)), repr(float(bound)), repr(float(bits))])
        return buf.getvalue()


def log_checkpoints(horizon: int, per_decade: int = 3) -> tuple:
    """``0``, then roughly log-spaced steps up to and including ``horizon``."""
    if horizon <= 0:
        return (0,)
    k = max(2, int(math.ceil(per_decade * math.log10(max(horizon, 10)))) + 1)
    pts = np.unique(np.round(np.geomspace(1, horizon, k)).astype(int))
    return (0,) + tuple(int(x) for x in pts)


def query_order(n: int, horizon: int, seed: int, trial: int) -> np.ndarray:
    """Records sampled without replacement, reshuffling after each full pass."""
    rng = np.random.default_rng([0x9E37, seed, trial])
    passes = -(-horizon // n) if horizon else 0
    return np.concatenate([rng.permutation(n) for _ in range(passes)])[:horizon] if passes else np.empty(0, int)


def run_trial(
    space: SecretSpace,
    label_table: np.ndarray,
    d: int,
    spec: GameSpec,
    trial: int,
) -> tuple[list, int | None, float, list]:
    """One game: fixed secret, stream of queries, optimal MIA at checkpoints.

    ``label_table[q, j]`` is model ``j``'s hard label on candidate query ``q``;
    queries are drawn from the candidates without replacement.
    """
    curator = CuratorState.start(
        space,
        secret_seed=spec.secret_seed * 1_000_003 + trial,
        master_seed=spec.noise_seed * 1_000_003 + trial,
        halt_threshold=spec.halt_threshold,
    )
    adv = AdversaryState.start(space)
    eye = np.eye(d)
    n_q = label_table.shape[0]
    order = query_order(n_q, spec.horizon, spec.query_seed, trial)
    truth = space.membership[:, curator.secret_index]
    checkpoints = sorted(set(spec.checkpoints))
    rows, expected, halted, max_dev = [], [], None, 0.0

    def record(T):
        acc = float(np.mean(decide_all(adv) == truth))
        p_mem = adv.membership_probs()
        expected.append((trial, T, float(np.mean(np.maximum(p_mem, 1.0 - p_mem)))))
        B = curator.accountant.cumulative
        rows.append((trial, T, acc, accounting.mia_bound_from_mi(T * spec.b, 0.5), to_bits(B)))

    ci = 0
    if checkpoints and checkpoints[0] == 0:
        record(0)
        ci = 1
    for t, q in enumerate(order, start=1):
        mech = MechanismMatrix(eye[label_table[q]], int(q))
        try:
            rel = answer_query(curator, mech, spec.b)
        except BudgetExhausted:
            halted = t - 1
            break
        observe(adv, mech, rel.spec, rel.response)
        if spec.check_mirror:
            max_dev = max(max_dev, float(np.max(np.abs(adv.belief.probs - curator.belief.probs))))
        while ci < len(checkpoints) and checkpoints[ci] == t:
            record(t)
            ci += 1
    if spec.audit_dir is not None:
        with open(Path(spec.audit_dir) / f"trial_{trial:04d}.jsonl", "w") as fh:
            write_audit_log(curator, fh)
    return rows, halted, max_dev, expected


def _trial_worker(args):
    return run_trial(*args)


STRATEGIES = ("member_replay", "random_input")


def candidate_queries(universe, strategy: str, seed: int = 0) -> np.ndarray:
    """Member replay queries the universe itself; random input draws points in its bounding box."""
    if strategy == "member_replay":
        return universe.X
    if strategy == "random_input":
        rng = np.random.default_rng([0xA11, seed])
        lo, hi = universe.X.min(axis=0), universe.X.max(axis=0)
        return lo + (hi - lo) * rng.random(universe.X.shape)
    raise ValueError(f"unknown query strategy {strategy!r}; choose from {STRATEGIES}")


def run_game(
    space: SecretSpace,
    pool: ModelPool,
    universe,
    spec: GameSpec,
    workers: int = 1,
) -> GameReport:
    """Run ``spec.trials`` independent games and collect accuracy at each checkpoint."""
    label_table = pool.predict_labels(candidate_queries(universe, spec.strategy, spec.query_seed))
    jobs = [(space, label_table, pool.d, spec, trial) for trial in range(spec.trials)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_trial_worker, jobs))
    else:
        results = [_trial_worker(j) for j in jobs]
    report = GameReport(b=spec.b)
    for trial, (rows, halted, _, expected) in enumerate(results):
        report.rows.extend(rows)
        report.expected.extend(expected)
        if halted is not None:
            report.halted[trial] = halted
            log.warning("trial %d halted at step %d: budget exhausted", trial, halted)
    return report
