"""Acceptance battery: one test per criterion, each at its stated tolerance.

The battery is executed once through the CLI orchestration (the same path as
``liouvillelab suite``) and every criterion is then judged from its persisted
JSON report.  One ``PASS``/``FAIL`` line per criterion is printed and repeated
in the pytest terminal summary.  Run ``python3 tests/test_acceptance.py`` for
the lines without pytest.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

from liouvillelab.cli import RunConfig, run, suite_config

TITLES = {
    1: "bubble identities and residual order",
    2: "pairing and mass dichotomy",
    3: "Bol equality on bubbles",
    4: "rearrangement equimeasurability and gradient comparison",
    5: "Gelfand two-branch oracle",
    6: "signed sinh-Gordon triviality",
    7: "uniqueness and symmetry on the ellipse",
    8: "cosmic string solutions",
    9: "Toda collapse (regular and singular)",
    10: "fold oracle and trivial branch",
}
TIME_LIMIT = {n: 60.0 for n in TITLES}
TIME_LIMIT[10] = 120.0

RESULT_LINES: list[str] = []

pytestmark = pytest.mark.slow


def judge(n: int, report: dict, runtime: float) -> tuple[bool, str]:
    checks = report["details"]["checks"]
    failed = [c for c in checks if not c["passed"]]
    slow = runtime > TIME_LIMIT[n]
    ok = not failed and not slow and report["verdict"] == "consistent"
    parts = [f"{c['name']}={c['value']:.3g}/{c['tolerance']:.3g}" + ("" if c["passed"] else " FAILED")
             for c in checks]
    line = (f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {TITLES[n]} "
            f"[{report['theorem']}, {runtime:.1f}s/{TIME_LIMIT[n]:.0f}s] " + "; ".join(parts))
    return ok, line


@pytest.fixture(scope="module")
def suite_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    manifest = run(RunConfig.from_dict(suite_config(seed=0, K=20)), str(out))
    return manifest


def test_manifest_has_ten_reports_and_exit_zero(suite_run):
    assert suite_run.errors == {}
    assert len(suite_run.reports) == 10
    assert suite_run.exit_status == 0


@pytest.mark.parametrize("n", range(1, 11))
def test_criterion(suite_run, n):
    rid = f"criterion_{n:02d}"
    assert rid in suite_run.reports, suite_run.errors.get(rid)
    report = json.loads(Path(suite_run.reports[rid]).read_text())
    ok, line = judge(n, report, suite_run.runtimes[rid])
    RESULT_LINES.append(line)
    print(line)
    assert ok, line


if __name__ == "__main__":  # pragma: no cover
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        man = run(RunConfig.from_dict(suite_config(seed=0, K=20)), tmp)
        status = 0
        for n in TITLES:
            rid = f"criterion_{n:02d}"
            if rid not in man.reports:
                print(f"FAIL criterion {n:2d}: {TITLES[n]} ({man.errors.get(rid)})")
                status = 1
                continue
            ok, line = judge(n, json.loads(Path(man.reports[rid]).read_text()), man.runtimes[rid])
            print(line)
            status |= not ok
    sys.exit(status)
