import numpy as np
import pytest

from verify import (
    SUITES,
    PropertyResult,
    UnknownSuiteError,
    format_results,
    reduction_suite,
    run_suite,
    smoothing_suite,
    straggler_suite,
)
from zo.estimator import sample_directions, zo_estimate_batch
from zo.oracles import LogCoshLoss


def test_straggler_suite_holds():
    results = straggler_suite(seed=0)
    assert len(results) == 4
    assert all(r.passed for r in results), format_results(results)


def test_smoothing_suite_holds():
    results = smoothing_suite(seed=0, samples=20_000)
    assert len(results) == 27
    assert all(r.passed for r in results), format_results(results)


def test_bias_rows_use_a_curved_loss():
    names = [r.name for r in smoothing_suite(seed=0, samples=2_000)]
    bias_rows = [n for n in names if n.startswith("bias")]
    assert len(bias_rows) == 9
    assert all("log-cosh" in n for n in bias_rows)


def test_log_cosh_bias_is_measurable_at_large_lambda():
    samples = 200_000
    loss = LogCoshLoss(np.array([1.0, 1.0]))
    x = np.zeros(2)
    G = zo_estimate_batch(loss.rows, x, sample_directions(2, samples, np.random.default_rng(0)), 1.0)
    se = G.std(axis=0, ddof=1) / np.sqrt(samples)
    assert np.linalg.norm(G.mean(axis=0) - loss.gradient(x)) > 6.0 * np.linalg.norm(se)


def test_reduction_suite_holds():
    results = reduction_suite(seed=0, rounds=20)
    assert [r.measured for r in results] == [0.0]
    assert results[0].passed


def test_alias_runs_same_suite():
    assert SUITES["lemma1"] is SUITES["smoothing"]


def test_unknown_suite():
    with pytest.raises(UnknownSuiteError, match="nope"):
        run_suite("nope")


def test_format_marks_failures():
    text = format_results(
        [PropertyResult("ok", 1.0, 2.0, True), PropertyResult("bad", 3.0, 2.0, False)]
    )
    lines = text.splitlines()
    assert lines[0].startswith("[PASS] ok")
    assert lines[1].startswith("[FAIL] bad")
    assert "margin=-1" in lines[1]
