"""One test per acceptance criterion; each prints a PASS/FAIL line per check.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines.
"""

import time

import pytest

from smcvar import acceptance

SEED = 20240501


def run_suite(name, budget_s):
    start = time.perf_counter()
    results = acceptance.SUITES[name](seed=SEED)
    elapsed = time.perf_counter() - start
    for res in results:
        print(res.line())
    print(f"{name}: {elapsed:.1f}s (budget {budget_s}s)")
    failed = [r.name for r in results if not r.passed]
    assert not failed, f"failed checks: {failed}"
    assert elapsed < budget_s


def test_algebraic_identities():
    run_suite("identities", 10)


def test_micro_oracle_exactness():
    run_suite("micro-oracle", 60)


@pytest.mark.slow
def test_clt_and_variance_consistency():
    run_suite("clt", 300)


@pytest.mark.slow
def test_changepoint_coverage():
    run_suite("coverage", 900)


@pytest.mark.slow
def test_residual_vs_bootstrap():
    run_suite("residual-vs-bootstrap", 600)


@pytest.mark.slow
def test_resampling_time_stability():
    run_suite("tau-stability", 300)


def test_residual_bernoulli_law():
    run_suite("residual-law", 60)
