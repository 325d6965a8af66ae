"""Scripted request streams and fixed configs for service and game golden files."""

import json

import numpy as np

from pacresp.config import GameConfig, SyntheticData, build_universe
from pacresp.core import construct_secret_space
from pacresp.curator import CuratorState
from pacresp.learners import train_pool
from pacresp.service import QueryService

SERVICE_CONFIG = GameConfig(synthetic=SyntheticData(n=200), m=8, b=2.0**-6, unit="bits")
GAME_CONFIG = GameConfig(synthetic=SyntheticData(n=200), m=8, horizon=200, trials=20)


def make_service(cfg: GameConfig = SERVICE_CONFIG) -> QueryService:
    u = build_universe(cfg)
    space = construct_secret_space(u, cfg.m, cfg.space_seed)
    pool = train_pool(u, space, cfg.learner_kind, cfg.train_seed)
    curator = CuratorState.start(space, cfg.secret_seed, cfg.noise_seed, halt_threshold=cfg.halt_nats)
    return QueryService(curator, pool, cfg.b_nats)


def scripted_lines(universe_X: np.ndarray, n: int, seed: int = 0, queries_only: bool = False) -> list[str]:
    """``n`` request lines: mostly queries on records and random points, plus status and junk."""
    rng = np.random.default_rng([0x5E55, seed])
    lines = []
    junk = ["not json", "{", '{"op":"explode"}', '{"op":"query"}', '{"op":"query","features":[1]}', "[]", ""]
    for k in range(n):
        u = rng.random()
        if queries_only or u < 0.8:
            if rng.random() < 0.5:
                x = universe_X[rng.integers(len(universe_X))]
            else:
                x = rng.normal(0.0, 3.0, universe_X.shape[1])
            lines.append(json.dumps({"op": "query", "features": [float(v) for v in x], "id": k}))
        elif u < 0.9:
            lines.append(json.dumps({"op": "status", "id": k}))
        else:
            lines.append(junk[rng.integers(len(junk))])
    return lines
