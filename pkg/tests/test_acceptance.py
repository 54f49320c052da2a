"""Acceptance criteria, each run at its stated tolerance.

Every test prints one ``[PASS]``/``[FAIL]`` line; run with ``-s`` to see them
inline (they are also captured in the pytest report).
"""

import time

import pytest

from dynbl import verify

MC_PATHS = 20_000


def _run(number, name, fn, max_seconds=None):
    t0 = time.perf_counter()
    ok, detail = fn()[:2]
    elapsed = time.perf_counter() - t0
    if max_seconds is not None and elapsed >= max_seconds:
        ok = False
        detail = f"{detail}; runtime {elapsed:.2f}s exceeds {max_seconds}s"
    print(verify.Check(number, name, bool(ok), detail, elapsed).line())
    assert ok, detail


def test_criterion_01_conditioning_oracle():
    _run(1, "conditioning oracle", verify.check_conditioning_oracle, max_seconds=1.0)


def test_criterion_02_kalman_smoother():
    _run(2, "Kalman smoother", verify.check_kalman_smoother, max_seconds=1.0)


def test_criterion_03_riccati_residuals():
    _run(3, "Riccati residuals", verify.check_riccati_residuals)


def test_criterion_04_policy_forms():
    _run(4, "policy forms", verify.check_policy_forms)


def test_criterion_05_hitting_times():
    _run(5, "hitting times", verify.check_hitting_times)


def test_criterion_06_bridge_moments():
    _run(6, "bridge moments", verify.check_bridge_moments, max_seconds=30.0)


def test_criterion_07_semigroup_identity():
    # stated with a plus sign; see the decisions ledger for why this fails
    _run(7, "semigroup identity", verify.check_semigroup)


def test_criterion_08_structural_equality():
    _run(8, "structural equality", verify.check_structural_equality)


@pytest.mark.slow
def test_criterion_09_dbl_vs_rcbl_orderings():
    _run(9, "DBL vs RCBL orderings", lambda: verify.check_section_orderings(MC_PATHS))


@pytest.mark.slow
def test_criterion_10_revision_value():
    _run(10, "revision value ordering", lambda: verify.check_revision_value(MC_PATHS))


def test_criterion_11_limits():
    _run(11, "limits", verify.check_limits)
