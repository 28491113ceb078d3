import math

import numpy as np
import pytest

from skinbench.analysis import (
    MAJORITY,
    TIE_BROKEN,
    EvalRecord,
    GroundTruthLabel,
    chi2_sf,
    confusion_matrix,
    dunn_posthoc,
    ground_truth_class,
    ita_error,
    kruskal_wallis,
    normal_sf,
    summarize,
    summarize_values,
)
from skinbench.colorimetry import ItaClass
from skinbench.errors import ReportError
from skinbench.extraction import ExtractionMethod, SkinEstimate


# --- quadrature oracles -------------------------------------------------------


def _adaptive_simpson(f, a, b, eps=1e-13):
    def simpson(fa, fm, fb, a_, b_):
        return (b_ - a_) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a_, b_, fa, fm, fb, whole, eps_, depth):
        m = 0.5 * (a_ + b_)
        lm, rm = 0.5 * (a_ + m), 0.5 * (m + b_)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a_, m)
        right = simpson(fm, frm, fb, m, b_)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * eps_:
            return left + right + (left + right - whole) / 15.0
        return recurse(a_, m, fa, flm, fm, left, eps_ / 2.0, depth - 1) + recurse(
            m, b_, fm, frm, fb, right, eps_ / 2.0, depth - 1
        )

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    whole = simpson(fa, fm, fb, a, b)
    return recurse(a, b, fa, fm, fb, whole, eps, 60)


def chi2_sf_quadrature(x, df):
    def pdf(t):
        return (
            t ** (df / 2.0 - 1.0)
            * math.exp(-t / 2.0)
            / (2.0 ** (df / 2.0) * math.gamma(df / 2.0))
        )

    return _adaptive_simpson(pdf, x, x + 200.0)


def normal_sf_quadrature(z):
    def pdf(t):
        return math.exp(-t * t / 2.0) / math.sqrt(2.0 * math.pi)

    return _adaptive_simpson(pdf, z, z + 40.0)


def test_chi2_sf_matches_quadrature_oracle():
    for df in (1, 2, 3, 5, 8):
        for x in (0.1, 0.5, 1.0, 3.857, 7.0, 20.0):
            assert chi2_sf(x, df) == pytest.approx(
                chi2_sf_quadrature(x, df), abs=1e-10
            )


def test_normal_sf_matches_quadrature_oracle():
    for z in (0.0, 0.5, 1.0, 1.96396, 3.0, 5.0):
        assert normal_sf(z) == pytest.approx(normal_sf_quadrature(z), abs=1e-10)
    assert normal_sf(-1.3) == pytest.approx(1.0 - normal_sf(1.3), abs=1e-12)


# --- Kruskal-Wallis ------------------------------------------------------------


def test_kruskal_wallis_hand_computed_example():
    res = kruskal_wallis([[1, 2, 3], [4, 5, 6]])
    # Rank sums 6 and 15: H = 12/(6*7) * (36/3 + 225/3) - 3*7 = 27/7.
    assert res.h == pytest.approx(27.0 / 7.0, abs=1e-3)
    assert res.df == 1
    assert not res.degenerate


def test_kruskal_wallis_p_matches_quadrature():
    res = kruskal_wallis([[1, 2, 3], [4, 5, 6]])
    assert res.p_value == pytest.approx(chi2_sf_quadrature(res.h, 1), abs=1e-6)


def test_kruskal_wallis_identical_groups_degenerate():
    res = kruskal_wallis([[2.0, 2.0, 2.0], [2.0, 2.0]])
    assert res.h == 0.0
    assert res.p_value == 1.0
    assert res.degenerate


def test_kruskal_wallis_rank_invariance_under_monotone_transform():
    rng = np.random.default_rng(53)
    groups = [list(rng.normal(loc=m, size=20)) for m in (0.0, 0.4, 1.0)]
    base = kruskal_wallis(groups)
    warped = kruskal_wallis([[math.exp(v) for v in g] for g in groups])
    assert warped.h == pytest.approx(base.h, abs=1e-9)


def test_kruskal_wallis_handles_ties_with_correction():
    with_ties = kruskal_wallis([[1, 1, 2], [2, 3, 3]])
    assert with_ties.h > 0.0
    assert 0.0 <= with_ties.p_value <= 1.0


def test_p_monotone_decreasing_in_h():
    ps = [chi2_sf(h, 3) for h in (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)]
    assert all(a > b for a, b in zip(ps, ps[1:]))


def test_kruskal_wallis_input_validation():
    with pytest.raises(ValueError):
        kruskal_wallis([[1.0, 2.0]])
    with pytest.raises(ValueError):
        kruskal_wallis([[1.0], []])
    with pytest.raises(ValueError):
        kruskal_wallis([[1.0], [2.0]])


# --- Dunn post hoc --------------------------------------------------------------


def test_dunn_z_matches_rank_formula_oracle():
    res = dunn_posthoc([[1, 2, 3], [4, 5, 6]])
    # Mean ranks 2 and 5; z = -3 / sqrt((6*7/12) * (1/3 + 1/3)).
    expected = 3.0 / math.sqrt((6 * 7 / 12.0) * (2.0 / 3.0))
    (cmp,) = res.posthoc
    assert abs(cmp.z) == pytest.approx(expected, abs=1e-9)
    assert cmp.p_raw == pytest.approx(2.0 * normal_sf(expected), abs=1e-12)


def test_dunn_identical_groups_all_adjusted_one():
    res = dunn_posthoc([[3.0, 3.0], [3.0, 3.0], [3.0, 3.0]])
    assert res.degenerate
    for cmp in res.posthoc:
        assert cmp.p_adjusted == 1.0


def test_dunn_holm_never_exceeds_bonferroni():
    rng = np.random.default_rng(59)
    groups = [list(rng.normal(loc=m, size=12)) for m in (0.0, 0.3, 0.8, 1.5)]
    bonf = dunn_posthoc(groups, correction="bonferroni")
    holm = dunn_posthoc(groups, correction="holm")
    for cb, ch in zip(bonf.posthoc, holm.posthoc):
        assert (cb.group_a, cb.group_b) == (ch.group_a, ch.group_b)
        assert ch.p_adjusted <= cb.p_adjusted + 1e-15
        assert ch.p_adjusted >= ch.p_raw - 1e-15
        assert cb.p_adjusted >= cb.p_raw - 1e-15


def test_dunn_rejects_unknown_correction():
    with pytest.raises(ValueError):
        dunn_posthoc([[1.0], [2.0], [3.0]], correction="fdr")


# --- ground truth and records ----------------------------------------------------


def _estimate(method, ita_cls):
    # Build a SkinEstimate with a prescribed class by solving the tone angle
    # backward: L = 50 + b * tan(angle), then Lab -> sRGB.
    from skinbench.colorimetry import LabColor, lab_to_srgb

    angle_b_a = {
        ItaClass.I: (65.0, 12.0, 12.0),
        ItaClass.II: (48.0, 18.0, 12.0),
        ItaClass.III: (35.0, 22.0, 13.0),
        ItaClass.IV: (19.0, 24.0, 14.0),
        ItaClass.V: (-10.0, 22.0, 14.0),
        ItaClass.VI: (-45.0, 14.0, 10.0),
    }
    deg, b, a = angle_b_a[ita_cls]
    res = lab_to_srgb(LabColor(50.0 + b * math.tan(math.radians(deg)), a, b))
    assert not res.clipped
    est = SkinEstimate.from_mean(method, res.color, 100)
    assert est.ita_class is ita_cls, f"fixture color for {ita_cls} misclassified"
    return est


def test_ground_truth_majority():
    ests = [
        _estimate(ExtractionMethod.CHEEK, ItaClass.III),
        _estimate(ExtractionMethod.MASK, ItaClass.III),
        _estimate(ExtractionMethod.CHEEK_ALBEDO, ItaClass.III),
        _estimate(ExtractionMethod.MASK_ALBEDO, ItaClass.V),
    ]
    label = ground_truth_class(ests, "img1")
    assert label.ita_class is ItaClass.III
    assert label.resolution == MAJORITY


def test_ground_truth_tie_broken_by_mask_albedo():
    ests = [
        _estimate(ExtractionMethod.CHEEK, ItaClass.II),
        _estimate(ExtractionMethod.MASK, ItaClass.II),
        _estimate(ExtractionMethod.CHEEK_ALBEDO, ItaClass.V),
        _estimate(ExtractionMethod.MASK_ALBEDO, ItaClass.V),
    ]
    label = ground_truth_class(ests, "img2")
    assert label.ita_class is ItaClass.V
    assert label.resolution == TIE_BROKEN


def test_ground_truth_unanimous():
    ests = [_estimate(m, ItaClass.IV) for m in ExtractionMethod]
    label = ground_truth_class(ests)
    assert label.ita_class is ItaClass.IV
    assert label.resolution == MAJORITY


def test_ground_truth_is_order_invariant():
    ests = [
        _estimate(ExtractionMethod.CHEEK, ItaClass.II),
        _estimate(ExtractionMethod.MASK, ItaClass.V),
        _estimate(ExtractionMethod.CHEEK_ALBEDO, ItaClass.II),
        _estimate(ExtractionMethod.MASK_ALBEDO, ItaClass.V),
    ]
    import itertools

    results = {
        ground_truth_class(list(perm)).ita_class
        for perm in itertools.permutations(ests)
    }
    assert results == {ItaClass.V}


def test_ground_truth_needs_all_four_methods():
    with pytest.raises(ValueError):
        ground_truth_class([_estimate(ExtractionMethod.CHEEK, ItaClass.I)] * 4)


@pytest.mark.parametrize(
    "ref,rend,expected", [(30, 30, 0), (55, 41, 14), (-45, 10, 55)]
)
def test_ita_error_examples(ref, rend, expected):
    assert ita_error(ref, rend) == expected


def _record(image_id, gt_cls, rend_cls):
    ref = _estimate(ExtractionMethod.CHEEK, gt_cls)
    rend = _estimate(ExtractionMethod.CHEEK, rend_cls)
    return EvalRecord.from_estimates(image_id, ExtractionMethod.CHEEK,
                                     "normalize", "frontal", ref, rend)


def test_confusion_matrix_diagonal_when_classes_preserved():
    records = [_record(f"im{i}", ItaClass.III, ItaClass.III) for i in range(5)]
    labels = {
        f"im{i}": GroundTruthLabel(f"im{i}", ItaClass.III, MAJORITY) for i in range(5)
    }
    cm = confusion_matrix(records, labels)
    assert cm.counts[2, 2] == 5
    assert cm.total == 5
    assert cm.counts.sum() == np.diag(cm.counts).sum()


def test_confusion_matrix_single_off_diagonal():
    rec = _record("a", ItaClass.VI, ItaClass.III)
    labels = {"a": GroundTruthLabel("a", ItaClass.VI, MAJORITY)}
    cm = confusion_matrix([rec], labels)
    assert cm.counts[5, 2] == 1
    assert cm.total == 1


def test_confusion_matrix_row_sums_match_brute_tally():
    rng = np.random.default_rng(61)
    classes = list(ItaClass)
    records = []
    labels = {}
    for i in range(60):
        gt = classes[int(rng.integers(6))]
        rend = classes[int(rng.integers(6))]
        records.append(_record(f"r{i}", gt, rend))
        labels[f"r{i}"] = GroundTruthLabel(f"r{i}", gt, MAJORITY)
    cm = confusion_matrix(records, labels)
    for cls in classes:
        expected = sum(
            1 for r in records if labels[r.image_id].ita_class is cls
        )
        assert cm.counts[cls.value - 1].sum() == expected
    # Removing one record decrements exactly one cell.
    cm2 = confusion_matrix(records[1:], labels)
    diff = cm.counts - cm2.counts
    assert diff.sum() == 1 and (diff >= 0).all() and (diff <= 1).all()


def test_confusion_matrix_missing_label_errors():
    rec = _record("ghost", ItaClass.I, ItaClass.I)
    with pytest.raises(ReportError, match="ghost"):
        confusion_matrix([rec], {})


def test_record_invariants():
    rec = _record("x", ItaClass.II, ItaClass.IV)
    assert rec.delta_e >= 0.0
    assert rec.ita_error == abs(rec.reference.ita - rec.rendered.ita)


# --- summaries -------------------------------------------------------------------


def test_summarize_values_trivials():
    assert summarize_values([1.0, 3.0]).median == 2.0
    assert summarize_values([5.0]).median == 5.0


def test_summarize_values_matches_sort_oracle():
    rng = np.random.default_rng(67)
    vals = list(rng.uniform(0, 100, size=1000))
    s = summarize_values(vals)
    ordered = sorted(vals)
    assert s.median == (ordered[499] + ordered[500]) / 2.0
    assert s.count == 1000
    assert s.q1 <= s.median <= s.q3


def test_summarize_records_by_method():
    records = [
        _record("a", ItaClass.II, ItaClass.II),
        _record("b", ItaClass.II, ItaClass.VI),
    ]
    out = summarize(records, keys=("method", "lighting"), value="delta_e")
    assert set(out) == {("cheek", "frontal")}
    summary = out[("cheek", "frontal")]
    assert summary.count == 2
    assert summary.median == pytest.approx(
        (records[0].delta_e + records[1].delta_e) / 2
    )
