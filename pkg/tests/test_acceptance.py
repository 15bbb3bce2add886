"""Acceptance suite: one PASS/FAIL line per criterion.

Run under pytest (``pytest tests/test_acceptance.py -s``) or directly as a
script (``python3 tests/test_acceptance.py``). Criterion 10 runs the full
1.1e6-iteration chain only when GPINVERSE_NIGHTLY=1; otherwise it reports a
projection from a short timed run and is skipped.
"""
from __future__ import annotations

import os
import sys
import time
import warnings
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))
import criteria  # noqa: E402

NIGHTLY = os.environ.get("GPINVERSE_NIGHTLY") == "1"
PROJECTION_ITERATIONS = 2000

# lines collected for the terminal summary (see conftest.py)
RESULTS = []


def _report(n, passed, detail, status=None):
    status = status or ("PASS" if passed else "FAIL")
    line = f"criterion {n}: {status} {detail}"
    print(line, flush=True)
    RESULTS.append(line)
    return line


def _check(n):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        passed, detail = getattr(criteria, f"criterion_{n}")()
    _report(n, passed, detail)
    assert passed, detail


@pytest.mark.parametrize("n", [1, 2, 3, 6])
def test_fast_criteria(n):
    _check(n)


@pytest.mark.slow
@pytest.mark.parametrize("n", [4, 5, 9, 11])
def test_statistical_criteria(n):
    _check(n)


@pytest.mark.slow
def test_criterion_7_coverage():
    _check(7)


@pytest.mark.slow
def test_criterion_8_sigma_concentration():
    _check(8)


def test_criterion_10_runtime():
    if NIGHTLY:
        _check(10)
        return
    passed, detail = criteria.criterion_10(iterations=PROJECTION_ITERATIONS)
    _report(10, passed, detail, status="SKIP (set GPINVERSE_NIGHTLY=1 for the full run)")
    assert passed, detail
    pytest.skip(detail)


def main():
    failed = 0
    t_all = time.perf_counter()
    for n in range(1, 12):
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if n == 10 and not NIGHTLY:
                passed, detail = criteria.criterion_10(iterations=PROJECTION_ITERATIONS)
                _report(n, passed, detail + f" [{time.perf_counter() - t0:.0f} s]",
                        status="SKIP (projection)")
                continue
            passed, detail = getattr(criteria, f"criterion_{n}")()
        _report(n, passed, detail + f" [{time.perf_counter() - t0:.0f} s]")
        failed += not passed
    print(f"{11 - failed - (not NIGHTLY)} passed, {failed} failed"
          f"{'' if NIGHTLY else ', 1 projected'} in {time.perf_counter() - t_all:.0f} s")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
