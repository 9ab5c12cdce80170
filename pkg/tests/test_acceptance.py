"""Acceptance criteria, one test each; every test prints its PASS/FAIL line.

The lines are repeated in an "acceptance criteria" section of the pytest summary.
Checks 8 to 10 train agents over five seeds and take a few minutes in total.
"""
import pytest

from asre.verify import CHECKS, run_check


@pytest.mark.parametrize("number", sorted(CHECKS), ids=lambda n: f"{n:02d}_{CHECKS[n][0].replace(' ', '_')}")
def test_criterion(number, record_property):
    res = run_check(number)
    print(res.line())
    record_property("criterion", res.line())
    assert res.passed, res.line()
