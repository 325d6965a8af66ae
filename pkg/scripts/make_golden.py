"""Regenerate the golden files under tests/golden.

Run only when an intentional change alters the response stream or game report;
the determinism tests compare against these bytes.
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from sessions import GAME_CONFIG, SERVICE_CONFIG, make_service, scripted_lines  # noqa: E402

from pacresp.cli import main  # noqa: E402
from pacresp.config import build_universe  # noqa: E402

GOLDEN = ROOT / "tests" / "golden"


def main_():
    GOLDEN.mkdir(exist_ok=True)
    service = make_service()
    lines = scripted_lines(build_universe(SERVICE_CONFIG).X, 100, seed=0)
    (GOLDEN / "service_requests.jsonl").write_text("".join(line + "\n" for line in lines))
    (GOLDEN / "service_transcript.jsonl").write_text("".join(service.handle_line(l) + "\n" for l in lines))

    cfg_path = GOLDEN / "game_config.json"
    cfg_path.write_text(GAME_CONFIG.canonical_json() + "\n")
    rc = main(["run-game", "--config", str(cfg_path), "--out", str(GOLDEN / "game_report.csv")])
    print("run-game exit", rc, "config hash", GAME_CONFIG.config_hash())


if __name__ == "__main__":
    main_()
