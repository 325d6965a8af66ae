import csv
import io

import numpy as np
import pytest
from scipy import stats

from pacresp.adversary import (
    AdversaryState,
    BoundViolation,
    GameReport,
    GameSpec,
    decide_all,
    decide_membership,
    log_checkpoints,
    observe,
    query_order,
    run_game,
)
from pacresp.calibration import MechanismMatrix, calibrate
from pacresp.core import BeliefState, construct_secret_space
from pacresp.curator import CuratorState, answer_query

from conftest import random_one_hot_mech


def test_mirror_tracks_curator():
    space = construct_secret_space(20, 8, 0)
    cur = CuratorState.start(space, 0, 0)
    adv = AdversaryState.start(space)
    rng = np.random.default_rng(0)
    for _ in range(200):
        mech = random_one_hot_mech(rng, 8, 3)
        rel = answer_query(cur, mech, 0.05)
        observe(adv, mech, rel.spec, rel.response)
        assert np.max(np.abs(adv.belief.probs - cur.belief.probs)) <= 1e-12


def test_decision_examples():
    space = construct_secret_space(4, 2, 0)
    adv = AdversaryState.start(space)
    assert decide_all(adv).tolist() == [0, 0, 0, 0]
    i = int(np.flatnonzero(space.membership[:, 0])[0])
    adv.belief = BeliefState(np.log(np.array([1.0, 1e-300])))
    assert decide_membership(adv, i) == 1
    adv.belief = BeliefState(np.log(np.array([0.3, 0.7])))
    assert decide_membership(adv, i) == 0


def test_posterior_rule_is_best_threshold():
    # m=2, scalar release mu_S + N(0, 1): every threshold rule on r is dominated by the posterior rule
    mech = MechanismMatrix([[0.0], [1.0]])
    spec = calibrate(mech, BeliefState.uniform(2), 0.125)
    space = construct_secret_space(1, 2, 0)
    i_in = int(space.membership[0, 1])  # 1 if record 0 sits in S_1
    grid = np.linspace(-2.0, 3.0, 41)

    def acc_threshold(c):
        # declare "secret 1" when r > c
        return 0.5 * (stats.norm.cdf(c) + stats.norm.sf(c - 1.0))

    best = max(acc_threshold(c) for c in grid)
    decisions = []
    for r in grid:
        adv = observe(AdversaryState.start(space), mech, spec, [r])
        says_in = decide_membership(adv, 0)
        decisions.append(says_in == i_in)
    # the posterior rule switches exactly at the midpoint
    switch = grid[np.argmax(decisions)] if i_in else grid[np.argmin(decisions)]
    assert abs(switch - 0.5) <= grid[1] - grid[0]
    assert acc_threshold(0.5) >= best - 1e-15


def test_checkpoints_and_order():
    cps = log_checkpoints(1000)
    assert cps[0] == 0 and cps[-1] == 1000 and list(cps) == sorted(set(cps))
    o = query_order(10, 25, seed=1, trial=0)
    assert len(o) == 25 and sorted(o[:10]) == list(range(10)) and sorted(o[10:20]) == list(range(10))
    assert np.array_equal(o, query_order(10, 25, seed=1, trial=0))
    assert not np.array_equal(o, query_order(10, 25, seed=1, trial=1))


def test_small_game(small_world):
    u, space, pool = small_world
    spec = GameSpec(b=0.01, horizon=40, checkpoints=(0, 10, 40), trials=3, check_mirror=True)
    rep = run_game(space, pool, u, spec)
    assert len(rep.rows) == 9 and not rep.halted
    rep.check_bound()
    rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
    assert set(rows[0]) == {"trial", "checkpoint_T", "empirical_acc", "theoretical_bound", "cum_B_bits"}
    zero = [r for r in rows if r["checkpoint_T"] == "0"]
    assert all(float(r["theoretical_bound"]) == 0.5 for r in zero)
    assert rep.to_csv() == run_game(space, pool, u, spec).to_csv()


def test_game_halts(small_world):
    u, space, pool = small_world
    spec = GameSpec(b=0.1, horizon=20, checkpoints=(0, 5, 20), trials=2, halt_threshold=0.45)
    rep = run_game(space, pool, u, spec)
    assert rep.halted == {0: 4, 1: 4}
    assert {r[1] for r in rep.rows} == {0}


def test_audit_logs_per_trial(small_world, tmp_path):
    u, space, pool = small_world
    spec = GameSpec(b=0.01, horizon=5, checkpoints=(5,), trials=2, audit_dir=str(tmp_path))
    run_game(space, pool, u, spec)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["trial_0000.jsonl", "trial_0001.jsonl"]
    assert len((tmp_path / "trial_0001.jsonl").read_text().splitlines()) == 5


def test_check_bound_flags_excess():
    rep = GameReport(rows=[(t, 10, 0.9, 0.0, 0.0) for t in range(5)], b=0.001)
    with pytest.raises(BoundViolation):
        rep.check_bound()
    ok = GameReport(rows=[(t, 10, 0.5, 0.0, 0.0) for t in range(5)], b=0.001)
    ok.check_bound()
