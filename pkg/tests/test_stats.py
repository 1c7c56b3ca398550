import numpy as np
import pytest

from crowdlens import (
    build_feature_matrix,
    correlate_with_outcome,
    dip_test,
    extract_all,
    histogram_data,
    pearson,
)
from crowdlens._dip import dip_statistic
from crowdlens.errors import (
    ConstantInput,
    DegenerateConstant,
    LengthMismatch,
    TooFewPoints,
)
from crowdlens.stats import significance_stars

from oracles import dip_lp_oracle, student_t_two_sided_p


def test_perfect_correlation_exact():
    assert pearson([1, 2, 3], [1, 2, 3]).r == 1.0
    assert pearson([1, 2, 3], [3, 2, 1]).r == -1.0
    assert pearson([1, 2, 3], [1, 2, 3]).p_value == 0.0


def test_hand_case_exact_r_and_p():
    res = pearson([1, 2, 3, 4], [1, 3, 2, 4])
    assert res.r == 0.8
    # independent check: two-sided tail of t = r*sqrt((n-2)/(1-r^2)), df = 2
    t = 0.8 * np.sqrt(2.0 / (1.0 - 0.64))
    assert t == pytest.approx(1.886, abs=1e-3)
    assert res.p_value == pytest.approx(student_t_two_sided_p(t, 2), abs=1e-3)
    assert res.p_value == pytest.approx(0.200, abs=1e-3)


def test_pearson_errors():
    with pytest.raises(LengthMismatch):
        pearson([1, 2, 3], [1, 2])
    with pytest.raises(ConstantInput):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ConstantInput):
        pearson([1, 2], [1, 2])  # n < 3


def test_pearson_symmetry_and_affine_invariance():
    rng = np.random.default_rng(0)
    x = rng.normal(size=30)
    y = rng.normal(size=30) + 0.5 * x
    r_xy = pearson(x, y).r
    assert pearson(y, x).r == pytest.approx(r_xy, abs=1e-12)
    assert pearson(3.0 * x + 7.0, y).r == pytest.approx(r_xy, abs=1e-12)
    assert pearson(-2.0 * x, y).r == pytest.approx(-r_xy, abs=1e-12)


def test_stars_thresholds():
    assert significance_stars(0.04) == "*"
    assert significance_stars(0.009) == "**"
    assert significance_stars(0.0009) == "***"
    assert significance_stars(0.06) == ""


def test_correlation_row_format():
    res = pearson([1, 2, 3, 4], [1, 3, 2, 4])
    assert res.formatted() == "0.800"
    from crowdlens.stats import CorrelationResult
    row = CorrelationResult("appeal", 0.605, 0.0005, 1000, "***")
    assert row.formatted() == "0.605***"


def test_correlate_with_outcome_planted_effect(strong_market):
    ds, _ = strong_market
    feats = extract_all(ds)
    m = build_feature_matrix(ds, include="crowd", features=feats)
    y = [int(ds.project(pid).funded) for pid in m.project_ids]
    results = {r.feature: r for r in correlate_with_outcome(m, y)}
    assert results["appeal"].r > 0
    assert results["appeal"].p_value < 0.001
    assert results["latency"].r < 0


def test_correlate_constant_feature_flagged_not_fatal(tiny_paths):
    from crowdlens.features import FeatureMatrix
    values = np.array([[1.0, 0.5], [1.0, 0.7], [1.0, 0.1], [1.0, 0.9]])
    m = FeatureMatrix(("a", "b", "c", "d"), ("appeal", "momentum"),
                      ("crowd", "crowd"), values, values.min(0), values.max(0))
    results = correlate_with_outcome(m, [0, 1, 0, 1])
    by_name = {r.feature: r for r in results}
    assert by_name["appeal"].degenerate
    assert not by_name["momentum"].degenerate


def test_correlate_constant_outcome_fatal():
    from crowdlens.features import FeatureMatrix
    values = np.array([[1.0], [2.0], [3.0]])
    m = FeatureMatrix(("a", "b", "c"), ("appeal",), ("crowd",),
                      values, values.min(0), values.max(0))
    with pytest.raises(ConstantInput):
        correlate_with_outcome(m, [1, 1, 1])


# ----------------------------------------------------------------- dip

def test_dip_matches_lp_oracle():
    rng = np.random.default_rng(7)
    for trial in range(40):
        n = int(rng.integers(4, 22))
        if trial % 3 == 0:
            x = rng.uniform(0, 1, n)
        elif trial % 3 == 1:
            x = np.concatenate([rng.normal(0, 0.1, n // 2),
                                rng.normal(4, 0.1, n - n // 2)])
        else:
            x = rng.exponential(1.0, n)
        assert dip_statistic(x) == pytest.approx(dip_lp_oracle(x), abs=1e-8)


def test_dip_known_values():
    assert dip_statistic(np.array([0.0, 1.0])) == pytest.approx(0.25)
    assert dip_statistic(np.array([1.0, 2.0, 3.0])) == pytest.approx(1.0 / 6.0)
    # two point masses: the largest possible dip
    x = np.array([0.0] * 50 + [1.0] * 50)
    assert dip_statistic(x) == pytest.approx(0.25)


def test_dip_affine_invariance():
    # the dip depends on value spacings, so only positive affine maps leave
    # it unchanged; rank-preserving nonlinear maps generally do not
    rng = np.random.default_rng(3)
    x = rng.lognormal(0, 1, 200)
    d0 = dip_statistic(x)
    assert dip_statistic(7.5 * x + 3.0) == pytest.approx(d0, abs=1e-12)
    assert dip_statistic(x * 1e-6) == pytest.approx(d0, abs=1e-12)


def test_dip_test_uniform_unimodal():
    rng = np.random.default_rng(1)
    res = dip_test(rng.random(1000), bootstrap_reps=500, seed=9)
    assert res.p_value > 0.05
    assert res.verdict == "unimodal"


def test_dip_test_separated_mixture_multimodal():
    rng = np.random.default_rng(2)
    x = np.concatenate([rng.normal(0, 0.1, 250), rng.normal(5, 0.1, 250)])
    res = dip_test(x, bootstrap_reps=500, seed=9)
    assert res.p_value < 0.01
    assert res.verdict == "multimodal"


def test_dip_test_errors():
    with pytest.raises(DegenerateConstant):
        dip_test([2.0] * 50, bootstrap_reps=100)
    with pytest.raises(TooFewPoints):
        dip_test([1.0, 2.0, 3.0], bootstrap_reps=100)
    with pytest.raises(ValueError):
        dip_test([1.0, 2.0, 3.0, 4.0], bootstrap_reps=5)


def test_dip_test_deterministic():
    rng = np.random.default_rng(4)
    x = rng.random(300)
    a = dip_test(x, bootstrap_reps=300, seed=42)
    b = dip_test(x, bootstrap_reps=300, seed=42)
    assert a == b


def test_histogram_data_shape():
    h = histogram_data(np.arange(100), bins=10)
    assert len(h["bin_edges"]) == 11
    assert sum(h["counts"]) == 100
