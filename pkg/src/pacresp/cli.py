"""Command line entry point: guarantee-table, build-pool, run-game, distill, serve.

Exit codes: 0 success, 2 config/input error, 3 budget exhausted,
4 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import accounting
from .adversary import BoundViolation, GameSpec, log_checkpoints, run_game
from .config import LOG_DIR_ENV, ConfigError, GameConfig, SyntheticData, build_universe
from .core import (
    DataError,
    InvalidParameter,
    SecretSpace,
    construct_secret_space,
    load_features_csv,
    load_universe_csv,
    to_nats,
)
from .curator import CuratorState, write_audit_log
from .filtering import export_distillation_set, label_pool
from .learners import ModelPool, accuracy, train_pool, train_single
from .service import QueryService, TCPService, serve_stdio

log = logging.getLogger("pacresp")

EXIT_OK, EXIT_CONFIG, EXIT_EXHAUSTED, EXIT_INVARIANT = 0, 2, 3, 4


def parse_budget(text: str) -> float:
    """``0.01``, ``2^-12`` or ``2**-12``."""
    t = text.strip().replace("**", "^")
    try:
        if "^" in t:
            base, exp = t.split("^", 1)
            return float(base) ** float(exp)
        return float(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad budget {text!r}") from None


def _list(conv):
    def parse(text):
        return [conv(v) for v in text.split(",") if v.strip()]

    return parse


# --------------------------------------------------------------------------
# guarantee-table
# --------------------------------------------------------------------------

# B_total is in nats, the unit the bound is evaluated in
TABLE_COLUMNS = ["kind", "b_bits", "b_nats", "T", "B_total", "mia_bound_pct", "dp_epsilon_equiv", "dp_target"]


def write_guarantee_table(fh, budgets, horizons, dp_targets, dp_delta=1e-5) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)

    def emit(kind, row, target=""):
        eps = row.dp_epsilon_equiv
        w.writerow(
            [
                kind,
                repr(row.b_bits),
                repr(row.b_nats),
                row.T,
                repr(row.total_mi_nats),
                f"{100 * row.mia_bound:.6f}",
                repr(eps) if np.isfinite(eps) else "inf",
                target,
            ]
        )

    for row in accounting.guarantee_table(budgets, horizons, dp_delta):
        emit("cell", row)
    for eps, Ts in accounting.footer_rows(budgets, dp_targets, dp_delta).items():
        for b, T in zip(budgets, Ts):
            emit("max_T", accounting.guarantee_row(b, max(T, 1), dp_delta=dp_delta), repr(eps))


def cmd_guarantee_table(args) -> int:
    budgets = [to_nats(b, args.unit) for b in args.budgets]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        write_guarantee_table(out, budgets, args.horizons, args.dp_targets, args.dp_delta)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


# --------------------------------------------------------------------------
# shared setup
# --------------------------------------------------------------------------

_FLAG_FIELDS = {
    "m": int,
    "b": parse_budget,
    "unit": str,
    "halt_threshold": parse_budget,
    "learner_kind": str,
    "alpha": float,
    "space_seed": int,
    "train_seed": int,
    "secret_seed": int,
    "noise_seed": int,
    "query_seed": int,
    "strategy": str,
    "horizon": int,
    "trials": int,
    "data_csv": str,
}


def add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its fields")
    for name, conv in _FLAG_FIELDS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=conv, default=None)
    p.add_argument("--checkpoints", type=_list(int), default=None)
    p.add_argument("--synthetic-n", dest="syn_n", type=int, default=None)
    p.add_argument("--score-mode", action="store_true", default=None)


def load_config(args) -> GameConfig:
    obj = GameConfig.load(args.config).to_dict() if args.config else GameConfig().to_dict()
    for name in list(_FLAG_FIELDS) + ["checkpoints", "score_mode"]:
        v = getattr(args, name, None)
        if v is not None:
            obj[name] = v
    if getattr(args, "syn_n", None) is not None:
        obj["synthetic"] = asdict(SyntheticData(**{**obj["synthetic"], "n": args.syn_n}))
    return GameConfig.from_dict(obj)


def prepare(cfg: GameConfig, pool_path=None, space_path=None):
    universe = build_universe(cfg)
    if space_path:
        space = SecretSpace.load(space_path)
        if space.n != universe.n or space.m != cfg.m:
            raise ConfigError("secret space does not match the universe / m")
    else:
        space = construct_secret_space(universe, cfg.m, cfg.space_seed)
    if pool_path:
        pool = ModelPool.load(pool_path)
        if pool.universe_digest != universe.digest() or pool.m != space.m:
            raise ConfigError("model pool was trained on a different universe or secret space")
    else:
        pool = train_pool(universe, space, cfg.learner_kind, cfg.train_seed)
    return universe, space, pool


def log_dir(args) -> Path | None:
    d = getattr(args, "log_dir", None) or os.environ.get(LOG_DIR_ENV)
    if not d:
        return None
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


# --------------------------------------------------------------------------
# build-pool / run-game / distill / serve
# --------------------------------------------------------------------------


def cmd_build_pool(args) -> int:
    cfg = load_config(args)
    _, space, pool = prepare(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    space.save(out / "space.json")
    pool.save(out / "pool.json")
    print(json.dumps({"config_hash": cfg.config_hash(), "pool_digest": pool.digest(), "m": pool.m}))
    return EXIT_OK


def cmd_run_game(args) -> int:
    cfg = load_config(args)
    universe, space, pool = prepare(cfg, args.pool, args.space)
    audit = log_dir(args)
    run_dir = None
    if audit is not None:
        run_dir = audit / f"game_{cfg.config_hash()[:12]}"
        run_dir.mkdir(exist_ok=True)
    spec = GameSpec(
        b=cfg.b_nats,
        horizon=cfg.horizon,
        checkpoints=tuple(cfg.checkpoints) if cfg.checkpoints is not None else log_checkpoints(cfg.horizon),
        trials=cfg.trials,
        secret_seed=cfg.secret_seed,
        noise_seed=cfg.noise_seed,
        query_seed=cfg.query_seed,
        strategy=cfg.strategy,
        halt_threshold=cfg.halt_nats,
        audit_dir=None if run_dir is None else str(run_dir),
    )
    report = run_game(space, pool, universe, spec, workers=args.workers)
    text = report.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    summary = {"config_hash": cfg.config_hash(), "halted": report.halted, "checkpoints": report.summary()}
    if args.summary:
        Path(args.summary).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    try:
        report.check_bound(3.0)
    except BoundViolation as exc:
        log.error("bound violation: %s", exc)
        return EXIT_INVARIANT
    if report.halted:
        log.warning("report is partial: %d trial(s) halted on budget", len(report.halted))
        return EXIT_EXHAUSTED
    return EXIT_OK


def cmd_distill(args) -> int:
    cfg = load_config(args)
    universe, space, pool = prepare(cfg, args.pool, args.space)
    features = load_features_csv(args.features)
    if features.shape[1] != pool.d_x:
        raise DataError(f"pool CSV has {features.shape[1]} features, models expect {pool.d_x}")
    curator = CuratorState.start(space, cfg.secret_seed, cfg.noise_seed, halt_threshold=cfg.halt_nats)
    decisions, truncated = label_pool(curator, pool, features, cfg.b_nats, cfg.alpha)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = export_distillation_set(
        decisions,
        features[: len(decisions)],
        out / "distill.csv",
        out / "manifest.json",
        cfg.alpha,
        cfg.b_nats,
        curator.accountant.cumulative,
        pool.d,
        truncated=truncated,
        config_hash=cfg.config_hash(),
    )
    audit = log_dir(args)
    if audit is not None:
        with open(audit / f"distill_{cfg.config_hash()[:12]}.jsonl", "w") as fh:
            write_audit_log(curator, fh)
    if args.eval_csv:
        metrics = student_metrics(features, decisions, load_universe_csv(args.eval_csv, pool.d), pool.d, args.student)
        metrics["config_hash"] = cfg.config_hash()
        (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
        print(json.dumps(metrics, sort_keys=True))
    log.info("retained %d of %d labelled rows", man.retained, man.labeled)
    return EXIT_EXHAUSTED if truncated else EXIT_OK


def student_metrics(features, decisions, test, d, learner="nearest_centroid") -> dict:
    """Students trained on the raw noisy labels and on the filtered subset, scored on ``test``."""
    X = np.asarray(features)[: len(decisions)]
    labels = np.array([dec.label for dec in decisions], dtype=int)
    kept = np.array([dec.retained for dec in decisions], dtype=bool)
    out = {"labeled": int(len(labels)), "retained": int(kept.sum())}
    if len(labels):
        raw = train_single(X, labels, d, learner)
        out["raw_student_acc"] = accuracy(raw, test.X, test.y)
    if kept.any():
        filt = train_single(X[kept], labels[kept], d, learner)
        out["filtered_student_acc"] = accuracy(filt, test.X, test.y)
    return out


def cmd_serve(args) -> int:
    cfg = load_config(args)
    _, space, pool = prepare(cfg, args.pool, args.space)
    curator = CuratorState.start(space, cfg.secret_seed, cfg.noise_seed, halt_threshold=cfg.halt_nats)
    curator.score_mode = cfg.score_mode
    service = QueryService(curator, pool, cfg.b_nats)
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        try:
            server = TCPService(service, host or "127.0.0.1", int(port))
        except (OSError, ValueError) as exc:
            log.error("cannot bind %s: %s", args.tcp, exc)
            return EXIT_CONFIG
        log.info("listening on %s:%d", *server.server_address[:2])
        with server:
            server.serve_forever()
    else:
        serve_stdio(service, sys.stdin, sys.stdout)
    audit = log_dir(args)
    if audit is not None:
        with open(audit / f"serve_{cfg.config_hash()[:12]}.jsonl", "w") as fh:
            write_audit_log(curator, fh)
    return EXIT_EXHAUSTED if curator.accountant.exhausted else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pacresp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("guarantee-table", help="MIA bound and DP-equivalent epsilon grid")
    g.add_argument("--budgets", type=_list(parse_budget), default=list(accounting.GRID_BUDGETS))
    g.add_argument("--horizons", type=_list(int), default=list(accounting.GRID_HORIZONS))
    g.add_argument("--dp-targets", type=_list(float), default=list(accounting.GRID_DP_TARGETS))
    g.add_argument("--dp-delta", type=float, default=1e-5)
    g.add_argument("--unit", choices=("nats", "bits"), default="nats")
    g.add_argument("--out")
    g.set_defaults(func=cmd_guarantee_table)

    bp = sub.add_parser("build-pool", help="construct the secret space and train one model per subset")
    add_config_flags(bp)
    bp.add_argument("--out-dir", required=True)
    bp.set_defaults(func=cmd_build_pool)

    rg = sub.add_parser("run-game", help="membership-inference game against the private curator")
    add_config_flags(rg)
    rg.add_argument("--pool")
    rg.add_argument("--space")
    rg.add_argument("--out")
    rg.add_argument("--summary")
    rg.add_argument("--workers", type=int, default=1)
    rg.add_argument("--log-dir")
    rg.set_defaults(func=cmd_run_game)

    ds = sub.add_parser("distill", help="label a public pool privately, filter, export")
    add_config_flags(ds)
    ds.add_argument("--pool")
    ds.add_argument("--space")
    ds.add_argument("--features", required=True, help="unlabelled pool CSV")
    ds.add_argument("--eval-csv", help="labelled test CSV for student metrics")
    ds.add_argument("--student", default="nearest_centroid")
    ds.add_argument("--out-dir", required=True)
    ds.add_argument("--log-dir")
    ds.set_defaults(func=cmd_distill)

    sv = sub.add_parser("serve", help="line-delimited JSON query service")
    add_config_flags(sv)
    sv.add_argument("--pool")
    sv.add_argument("--space")
    sv.add_argument("--tcp", help="HOST:PORT; default is stdin/stdout")
    sv.add_argument("--log-dir")
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, InvalidParameter, DataError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except AssertionError as exc:
        log.error("invariant violated: %s", exc)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
