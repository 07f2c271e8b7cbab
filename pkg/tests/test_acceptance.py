"""Acceptance criteria 1-10 at their fixed tolerances.

The battery runs once with one worker and once with eight; criteria 1-9 are
read from the first run and criterion 10 compares the two JSON documents byte
for byte.  Each test prints one PASS/FAIL line.
"""

import json

import pytest

from kahlerkit.suite import TITLES, CriterionResult, run_suite
from kahlerkit.reports import check_true

SEED = 0


@pytest.fixture(scope="module")
def runs():
    quiet = lambda *_: None  # noqa: E731
    single = run_suite(workers=1, seed=SEED, rerun=False, echo=quiet)
    multi = run_suite(workers=8, seed=SEED, rerun=False, echo=quiet)
    return single, multi


def criterion(report, number) -> CriterionResult:
    (entry,) = [c for c in report.results["criteria"] if c["number"] == number]
    return entry


def announce(capsys, number, passed, worst=""):
    with capsys.disabled():
        print(f"\ncriterion {number:2d} {'PASS' if passed else 'FAIL'}  {TITLES[number]}{worst}")


@pytest.mark.parametrize("number", range(1, 10))
def test_criterion(runs, capsys, number):
    entry = criterion(runs[0], number)
    failing = [c for c in entry["checks"] if not c["pass"]]
    worst = f"  [{failing[0]['name']}: {failing[0]['value']:.3e} vs {failing[0]['tolerance']:.1e}]" if failing else ""
    announce(capsys, number, entry["pass"], worst)
    assert entry["checks"], "criterion ran no checks"
    assert not failing, failing


def test_criterion_10_reproducible_across_workers(runs, capsys):
    a = json.dumps(runs[0].as_dict(), sort_keys=True, indent=2).encode()
    b = json.dumps(runs[1].as_dict(), sort_keys=True, indent=2).encode()
    chk = check_true("byte-identical suite JSON for 1 and 8 workers", a == b)
    announce(capsys, 10, chk.passed)
    assert chk.passed
