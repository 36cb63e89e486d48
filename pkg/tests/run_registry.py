"""Records the leakage audit of every ``cmd_run`` executed during a test session."""

import json
from pathlib import Path

from contrastsurv import cli

RUNS: list[dict] = []
_original = cli.cmd_run


def _recording_cmd_run(args):
    code = _original(args)
    report = Path(args.out) / "report.json"
    if report.exists():
        doc = json.loads(report.read_text())
        RUNS.append({"config": str(args.config), "exit": code,
                     "audits": [r["audit"] for r in doc["repeats"]]})
    return code


def install() -> None:
    cli.cmd_run = _recording_cmd_run
