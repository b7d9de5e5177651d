import json

import numpy as np
import pytest

from eigenlab.verify import (
    SUITES, commutator_suite, cutoff_conditions, cutoff_suite, ledger_suite, lemma_zero_cases,
    oracle_suite, run_suite,
)


def _well_formed(summary, name):
    assert summary["suite"] == name
    assert summary["passed"] == all(c["passed"] for c in summary["checks"])
    for c in summary["checks"]:
        assert c["passed"] == (c["value"] <= c["limit"])
    json.dumps(summary)


def test_cutoff_suite_small():
    summary = cutoff_suite(n_triples=25, n_samples=5000, seed=3)
    _well_formed(summary, "cutoff")
    assert summary["passed"]
    assert {c["name"] for c in summary["checks"]} == {
        "range violation", "monotone violation", "plateau violation", "vanish violation",
        "slope violation"}


def test_cutoff_conditions_keys():
    s = np.linspace(0.0, 1.2, 2001)
    cond = cutoff_conditions(0.2, 1.0, 0.1, s)
    assert all(v >= -1e-9 for v in cond.values())


def test_commutator_suite():
    summary = commutator_suite()
    _well_formed(summary, "commutator")
    assert summary["passed"] and summary["checks"][0]["value"] == 0.0


def test_oracle_suite():
    summary = oracle_suite()
    _well_formed(summary, "oracle")
    assert summary["passed"]


def test_ledger_suite_short_family():
    summary = ledger_suite(range(5, 13))
    _well_formed(summary, "ledger")
    assert summary["passed"]


def test_lemma_zero_case_matrix():
    cases = lemma_zero_cases()
    # 3 interior cases plus 5 angles x 3 boundary pairs x 3 frequencies
    assert len(cases) == 3 + 5 * 3 * 3
    assert sum(c[-1] for c in cases) == 45


def test_unknown_suite():
    assert "lemma-zero" in SUITES
    with pytest.raises(ValueError):
        run_suite("bogus")
