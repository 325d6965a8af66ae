import csv
import io
import json
import socket
import subprocess
import sys
import threading
import time

import numpy as np
import pytest

from pacresp.cli import main, parse_budget
from pacresp.service import TCPService, serve_stdio

from sessions import SERVICE_CONFIG, make_service


def run_cli(*argv, stdin=None, env=None, timeout=120):
    return subprocess.run(
        [sys.executable, "-m", "pacresp.cli", *argv],
        input=stdin,
        capture_output=True,
        text=True,
        timeout=timeout,
        env=env,
    )


def stable_point(service):
    """A feature vector every model in the pool labels the same way."""
    pool = service.pool
    grid = np.stack(np.meshgrid(np.linspace(-20, 20, 41), np.linspace(-20, 20, 41)), -1).reshape(-1, 2)
    labels = pool.predict_labels(grid)
    agree = (labels == labels[:, :1]).all(axis=1)
    return grid[np.argmax(agree)], int(labels[np.argmax(agree), 0])


def test_parse_budget():
    assert parse_budget("2^-12") == 2.0**-12
    assert parse_budget("2**-4") == 0.0625
    assert parse_budget("0.5") == 0.5


def test_single_table_cell(capsys):
    assert main(["guarantee-table", "--budgets", "2^-12", "--horizons", "1000", "--dp-targets", ""]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 1
    assert float(rows[0]["mia_bound_pct"]) == pytest.approx(83.4, abs=0.05)
    assert rows[0]["kind"] == "cell" and rows[0]["T"] == "1000"


def test_bad_config_exits_2(tmp_path):
    (tmp_path / "c.json").write_text('{"m": 7}')
    assert main(["run-game", "--config", str(tmp_path / "c.json")]) == 2
    (tmp_path / "d.json").write_text('{"mystery": 1}')
    assert main(["serve", "--config", str(tmp_path / "d.json")]) == 2


def test_stdio_session():
    svc = make_service()
    x, label = stable_point(svc)
    lines = [
        json.dumps({"op": "status", "id": "s0"}),
        json.dumps({"op": "query", "features": [float(v) for v in x], "id": 1}),
        "{",
        json.dumps({"op": "query", "features": [1.0]}),
        json.dumps({"op": "shutdown"}),
        json.dumps({"op": "status"}),
    ]
    out = io.StringIO()
    assert serve_stdio(svc, io.StringIO("\n".join(lines) + "\n"), out) == 5
    replies = [json.loads(s) for s in out.getvalue().splitlines()]
    assert replies[0]["step"] == 0 and replies[0]["cum_mi_nats"] == 0.0 and replies[0]["id"] == "s0"
    q = replies[1]
    assert q["id"] == 1 and q["label"] == label
    assert q["response"] == np.eye(3)[label].tolist()
    assert q["cum_mi_bits"] == pytest.approx(SERVICE_CONFIG.b, rel=1e-12)
    assert replies[2]["error"] == "bad_json" and replies[3]["error"] == "bad_request"
    assert replies[4] == {"op": "shutdown", "ok": True}


def test_exhaustion_is_reported():
    cfg = SERVICE_CONFIG.__class__(**{**SERVICE_CONFIG.__dict__, "halt_threshold": 2.0**-5})
    svc = make_service(cfg)
    req = json.dumps({"op": "query", "features": [0.0, 0.0]})
    outs = [json.loads(svc.handle_line(req)) for _ in range(4)]
    assert [o.get("error") for o in outs] == [None, None, "budget_exhausted", "budget_exhausted"]
    assert outs[-1]["cum_mi_bits"] == pytest.approx(2.0**-5)
    assert json.loads(svc.handle_line('{"op":"status"}'))["exhausted"] is True


def test_serve_subprocess_stdio(tmp_path):
    req = "\n".join(
        [json.dumps({"op": "status"}), json.dumps({"op": "query", "features": [0.5, -0.5]}), '{"op":"shutdown"}']
    )
    p = run_cli("serve", "--synthetic-n", "200", "--m", "8", "--b", "2^-6", "--log-dir", str(tmp_path), stdin=req + "\n")
    assert p.returncode == 0, p.stderr
    replies = [json.loads(s) for s in p.stdout.splitlines()]
    assert replies[0]["op"] == "status" and "label" in replies[1] and replies[2]["ok"]
    logs = list(tmp_path.glob("serve_*.jsonl"))
    assert len(logs) == 1 and len(logs[0].read_text().splitlines()) == 1


def test_tcp_concurrent_clients():
    svc = make_service()
    server = TCPService(svc)
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    results = {}

    def client(k):
        with socket.create_connection(("127.0.0.1", server.port), timeout=10) as s:
            f = s.makefile("rw")
            got = []
            for _ in range(5):
                f.write(json.dumps({"op": "query", "features": [float(k), 0.0], "id": k}) + "\n")
                f.flush()
                got.append(json.loads(f.readline()))
            f.write("garbage\n")
            f.flush()
            got.append(json.loads(f.readline()))
            results[k] = got

    threads = [threading.Thread(target=client, args=(k,)) for k in range(4)]
    for th in threads:
        th.start()
    for th in threads:
        th.join(20)
    assert sorted(results) == [0, 1, 2, 3]
    steps = sorted(r["step"] for got in results.values() for r in got[:5])
    assert steps == list(range(1, 21))
    assert all(got[5]["error"] == "bad_json" for got in results.values())
    with socket.create_connection(("127.0.0.1", server.port), timeout=10) as s:
        f = s.makefile("rw")
        f.write('{"op":"shutdown"}\n')
        f.flush()
        assert json.loads(f.readline())["ok"]
    t.join(10)
    assert not t.is_alive()
    server.server_close()


def test_run_game_smoke_with_audit(tmp_path):
    start = time.monotonic()
    out, summ = tmp_path / "g.csv", tmp_path / "g.json"
    argv = ["run-game", "--synthetic-n", "200", "--m", "8", "--horizon", "30", "--trials", "3"]
    assert main(argv + ["--out", str(out), "--summary", str(summ), "--log-dir", str(tmp_path / "logs")]) == 0
    assert time.monotonic() - start < 60
    rows = list(csv.DictReader(out.open()))
    assert {r["trial"] for r in rows} == {"0", "1", "2"}
    assert json.loads(summ.read_text())["halted"] == {}
    (game_dir,) = (tmp_path / "logs").iterdir()
    assert len(list(game_dir.glob("trial_*.jsonl"))) == 3


def test_run_game_halt_exit_code(tmp_path):
    argv = ["run-game", "--synthetic-n", "200", "--m", "8", "--horizon", "30", "--trials", "2"]
    argv += ["--b", "0.1", "--unit", "nats", "--halt-threshold", "0.45", "--out", str(tmp_path / "g.csv")]
    assert main(argv) == 3


def test_build_pool_then_reuse(tmp_path, capsys):
    assert main(["build-pool", "--synthetic-n", "200", "--m", "8", "--out-dir", str(tmp_path)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["m"] == 8
    argv = ["run-game", "--synthetic-n", "200", "--m", "8", "--horizon", "5", "--trials", "2"]
    argv += ["--pool", str(tmp_path / "pool.json"), "--space", str(tmp_path / "space.json")]
    assert main(argv + ["--out", str(tmp_path / "a.csv")]) == 0
    # a pool from a different universe is refused
    assert main(["run-game", "--synthetic-n", "300", "--m", "8", "--pool", str(tmp_path / "pool.json")]) == 2
