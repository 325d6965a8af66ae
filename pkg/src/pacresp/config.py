"""Run configuration with canonical serialization and a content hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .core import InvalidParameter, Universe, load_universe_csv, to_nats
from .learners import LEARNERS, make_synthetic_universe

LOG_DIR_ENV = "PACRESP_LOG_DIR"


class ConfigError(InvalidParameter):
    pass


@dataclass
class SyntheticData:
    n: int = 500
    d: int = 3
    d_x: int = 2
    class_separation: float = 3.0
    seed: int = 0
    shift: float = 0.0
    scale: float = 1.0


@dataclass
class GameConfig:
    """Everything a run depends on. Budgets are in ``unit`` (bits by default)."""

    data_csv: str | None = None
    synthetic: SyntheticData = field(default_factory=SyntheticData)
    m: int = 16
    b: float = 2.0**-12
    unit: str = "bits"
    halt_threshold: float | None = None
    learner_kind: str = "nearest_centroid"
    alpha: float = 0.01
    space_seed: int = 0
    train_seed: int = 0
    secret_seed: int = 0
    noise_seed: int = 0
    query_seed: int = 0
    strategy: str = "member_replay"
    horizon: int = 200
    checkpoints: list | None = None
    trials: int = 20
    score_mode: bool = False

    def validate(self) -> GameConfig:
        if self.unit not in ("bits", "nats"):
            raise ConfigError(f"unit must be 'bits' or 'nats', got {self.unit!r}")
        if not (self.b > 0 and self.b < float("inf")):
            raise ConfigError(f"b must be positive and finite, got {self.b!r}")
        if self.halt_threshold is not None and not self.halt_threshold > 0:
            raise ConfigError("halt_threshold must be positive")
        if self.m < 2 or self.m % 2:
            raise ConfigError(f"m must be an even integer >= 2, got {self.m}")
        if self.learner_kind not in LEARNERS:
            raise ConfigError(f"learner_kind must be one of {LEARNERS}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.strategy not in ("member_replay", "random_input"):
            raise ConfigError(f"unknown query strategy {self.strategy!r}")
        if self.horizon < 0 or self.trials < 1:
            raise ConfigError("horizon must be >= 0 and trials >= 1")
        if self.checkpoints is not None and any(c < 0 or c > self.horizon for c in self.checkpoints):
            raise ConfigError("checkpoints must lie in [0, horizon]")
        return self

    @property
    def b_nats(self) -> float:
        return to_nats(self.b, self.unit)

    @property
    def halt_nats(self) -> float | None:
        return None if self.halt_threshold is None else to_nats(self.halt_threshold, self.unit)

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, obj: dict) -> GameConfig:
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        obj = dict(obj)
        syn = obj.pop("synthetic", None) or {}
        try:
            return cls(synthetic=SyntheticData(**syn), **obj).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> GameConfig:
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(obj)


def build_universe(cfg: GameConfig) -> Universe:
    if cfg.data_csv:
        return load_universe_csv(cfg.data_csv)
    s = cfg.synthetic
    return make_synthetic_universe(s.n, s.d, s.d_x, s.class_separation, s.seed, s.shift, s.scale)
