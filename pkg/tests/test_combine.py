"""Inverse-variance combination and cross-channel consistency checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decaykit.combine import (Estimate, check_consistency, combination_report,
                              estimates_from_reports, inverse_variance_mean,
                              max_pairwise_pull, pairwise_pulls)
from decaykit.errors import SchemaError

# Per-channel fast lifetimes with their standard errors, and the same
# for the slow component; the frozen expectations below follow from the
# 1/sigma^2 weighted mean computed by hand.
TAU1_CH = [(1.7333, 0.0012), (1.7326, 0.0021)]
TAU2_CH = [(5.9459, 0.0196), (5.9493, 0.0156)]


def _weighted(inputs):
    w = [1.0 / s**2 for _, s in inputs]
    v = sum(wi * vi for wi, (vi, _) in zip(w, inputs)) / sum(w)
    return v, 1.0 / math.sqrt(sum(w))


def test_two_channel_fast_lifetime_combination():
    est = [Estimate(v, s, label=f"ch{i+1}") for i, (v, s) in enumerate(TAU1_CH)]
    got = inverse_variance_mean(est)
    want_v, want_s = _weighted(TAU1_CH)
    assert got.value == pytest.approx(want_v, abs=1e-12)
    assert got.sigma == pytest.approx(want_s, abs=1e-12)
    # and the frozen numbers themselves, to guard the arithmetic
    assert got.value == pytest.approx(1.73313, abs=5e-4)
    assert got.sigma == pytest.approx(0.001042, abs=1e-3)
    assert got.n_inputs == 2


def test_two_channel_slow_lifetime_combination():
    est = [Estimate(v, s) for v, s in TAU2_CH]
    got = inverse_variance_mean(est)
    want_v, want_s = _weighted(TAU2_CH)
    assert got.value == pytest.approx(want_v, abs=1e-12)
    assert got.sigma == pytest.approx(want_s, abs=1e-12)
    assert got.value == pytest.approx(5.948, abs=5e-4)
    assert got.sigma == pytest.approx(0.012206, abs=1e-3)


def test_combined_error_beats_every_input():
    est = [Estimate(v, s) for v, s in TAU1_CH]
    got = inverse_variance_mean(est)
    assert got.sigma < min(s for _, s in TAU1_CH)


def test_equal_errors_reduce_to_the_arithmetic_mean():
    est = [Estimate(v, 0.25) for v in (3.0, 5.0, 10.0)]
    got = inverse_variance_mean(est)
    assert got.value == pytest.approx(6.0, rel=1e-14)
    assert got.sigma == pytest.approx(0.25 / math.sqrt(3.0), rel=1e-14)


def test_single_input_passes_through():
    got = inverse_variance_mean([Estimate(1.7333, 0.0012)])
    assert got.value == pytest.approx(1.7333, rel=1e-14)
    assert got.sigma == pytest.approx(0.0012, rel=1e-14)
    assert got.chi2_consistency == pytest.approx(0.0, abs=1e-18)
    with pytest.raises(ValueError):
        inverse_variance_mean([])


@settings(max_examples=60, deadline=None)
@given(st.permutations(list(range(6))),
       st.lists(st.tuples(st.floats(-10.0, 10.0),
                          st.floats(0.01, 5.0)),
                min_size=6, max_size=6))
def test_combination_is_permutation_invariant(perm, rows):
    est = [Estimate(v, s) for v, s in rows]
    a = inverse_variance_mean(est)
    b = inverse_variance_mean([est[i] for i in perm])
    assert b.value == pytest.approx(a.value, rel=1e-12, abs=1e-12)
    assert b.sigma == pytest.approx(a.sigma, rel=1e-12)
    assert b.chi2_consistency == pytest.approx(a.chi2_consistency,
                                               rel=1e-9, abs=1e-9)


def test_pairwise_pulls_between_the_channels():
    est = [Estimate(v, s) for v, s in TAU1_CH]
    pulls = pairwise_pulls(est)
    assert len(pulls) == 1
    i, j, p = pulls[0]
    assert (i, j) == (0, 1)
    assert p == pytest.approx(0.0007 / math.hypot(0.0012, 0.0021), rel=1e-10)
    ok, _ = check_consistency(est)
    assert ok  # 0.29 sigma apart
    with pytest.raises(ValueError):
        pairwise_pulls([Estimate(1.0, 0.1)])


def test_identical_inputs_pull_zero():
    est = [Estimate(2.0, 0.5), Estimate(2.0, 0.5)]
    worst, pair = max_pairwise_pull(est)
    assert worst == 0.0
    assert max_pairwise_pull([Estimate(2.0, 0.5)]) == (0.0, (0, 0))


def test_discrepant_inputs_are_flagged():
    est = [Estimate(0.0, 1.0), Estimate(10.0, 1.0)]
    ok, pulls = check_consistency(est)
    assert not ok
    assert pulls[0][2] == pytest.approx(10.0 / math.sqrt(2.0), rel=1e-12)


def test_error_scaling_inflates_only_inconsistent_sets():
    hot = [Estimate(0.0, 1.0), Estimate(10.0, 1.0)]
    plain = inverse_variance_mean(hot)
    scaled = inverse_variance_mean(hot, scale_errors=True)
    assert plain.chi2_consistency == pytest.approx(50.0, rel=1e-12)
    assert plain.sigma == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-12)
    assert scaled.sigma == pytest.approx(plain.sigma * math.sqrt(50.0), rel=1e-12)

    cold = [Estimate(v, s) for v, s in TAU1_CH]
    assert inverse_variance_mean(cold, scale_errors=True).sigma == \
        inverse_variance_mean(cold).sigma  # chi2/dof < 1 leaves sigma alone


def test_estimate_validation():
    with pytest.raises(ValueError):
        Estimate(math.nan, 0.1)
    with pytest.raises(ValueError):
        Estimate(1.0, 0.0)
    with pytest.raises(ValueError):
        Estimate(1.0, -0.5)


def test_estimates_from_reports(ch1_fit):
    from decaykit.fitter import report_dict

    rep = report_dict(ch1_fit)
    other = dict(rep, channel_label="ch2")
    est = estimates_from_reports([rep, other], "tau1")
    assert [e.label for e in est] == ["ch1", "ch2"]
    assert est[0].value == rep["parameters"]["tau1"]
    assert est[0].sigma == rep["standard_errors"]["tau1"]

    with pytest.raises(SchemaError, match="mix"):
        estimates_from_reports([rep, dict(rep, model="NonExp")], "tau1")
    with pytest.raises(SchemaError, match="beta"):
        estimates_from_reports([rep], "beta")
    with pytest.raises(ValueError):
        estimates_from_reports([], "tau1")


def test_combination_report_shape():
    est = [Estimate(v, s, label=f"ch{i+1}") for i, (v, s) in enumerate(TAU1_CH)]
    combined = inverse_variance_mean(est)
    rec = combination_report("tau1", est, combined)
    assert rec["parameter"] == "tau1"
    assert [r["label"] for r in rec["inputs"]] == ["ch1", "ch2"]
    assert rec["value"] == combined.value
    assert "max_pairwise_pull" not in rec

    rec = combination_report("tau1", est, combined, threshold=3.0)
    assert rec["consistent"] is True
    assert rec["max_pairwise_pull"] == pytest.approx(0.2894, abs=5e-4)
    assert rec["pull_threshold"] == 3.0
