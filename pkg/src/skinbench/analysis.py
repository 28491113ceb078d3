"""Evaluation records, ground-truth labeling, and nonparametric statistics.

The statistical battery is rank-based throughout: a Kruskal-Wallis omnibus
test (midranks, tie correction, chi-square survival p-values) and Dunn's
pairwise post hoc z-tests with Bonferroni or Holm correction. The chi-square
survival function is computed in-repo from the regularized incomplete gamma
function (series + continued fraction, absolute error < 1e-10); the normal
tail uses the C library's erfc (absolute error < 1e-10 over the tested
range). Both are validated against quadrature oracles in the test suite.
"""

from __future__ import annotations

import math
import statistics
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from skinbench.colorimetry import ItaClass, delta_e as lab_delta_e
from skinbench.errors import ReportError
from skinbench.extraction import ExtractionMethod, SkinEstimate

MAJORITY = "majority"
TIE_BROKEN = "tie-broken-by-mask-albedo"


@dataclass(frozen=True)
class EvalRecord:
    """One (image x method x recolor x lighting) outcome."""

    image_id: str
    method: ExtractionMethod
    recolor: str
    lighting: str
    reference: SkinEstimate
    rendered: SkinEstimate
    delta_e: float
    ita_error: float
    reference_class: ItaClass
    rendered_class: ItaClass

    @classmethod
    def from_estimates(
        cls,
        image_id: str,
        method: ExtractionMethod,
        recolor: str,
        lighting: str,
        reference: SkinEstimate,
        rendered: SkinEstimate,
    ) -> "EvalRecord":
        return cls(
            image_id=image_id,
            method=method,
            recolor=recolor,
            lighting=lighting,
            reference=reference,
            rendered=rendered,
            delta_e=lab_delta_e(reference.lab, rendered.lab),
            ita_error=ita_error(reference.ita, rendered.ita),
            reference_class=reference.ita_class,
            rendered_class=rendered.ita_class,
        )


@dataclass(frozen=True)
class GroundTruthLabel:
    image_id: str
    ita_class: ItaClass
    resolution: str  # MAJORITY or TIE_BROKEN


def ita_error(ref_degrees: float, rendered_degrees: float) -> float:
    """Absolute tone-angle difference in degrees."""
    return abs(ref_degrees - rendered_degrees)


def ground_truth_class(
    estimates: Sequence[SkinEstimate], image_id: str = ""
) -> GroundTruthLabel:
    """Majority vote over the four per-method classes; ties go to mask-albedo.

    Order-invariant: requires exactly one estimate per extraction method.
    """
    if len(estimates) != 4:
        raise ValueError(f"need exactly 4 estimates, got {len(estimates)}")
    by_method = {e.method: e for e in estimates}
    if set(by_method) != set(ExtractionMethod):
        raise ValueError("need one estimate per extraction method")
    counts = Counter(e.ita_class for e in estimates)
    top = max(counts.values())
    modes = [cls for cls, c in counts.items() if c == top]
    if len(modes) == 1:
        return GroundTruthLabel(image_id, modes[0], MAJORITY)
    return GroundTruthLabel(
        image_id, by_method[ExtractionMethod.MASK_ALBEDO].ita_class, TIE_BROKEN
    )


@dataclass
class ConfusionMatrix:
    """6x6 counts; rows are ground-truth classes, columns rendered classes."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (6, 6):
            raise ValueError("confusion matrix must be 6x6")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(
    records: Iterable[EvalRecord], labels: Mapping[str, GroundTruthLabel]
) -> ConfusionMatrix:
    counts = np.zeros((6, 6), dtype=np.int64)
    missing = []
    for rec in records:
        label = labels.get(rec.image_id)
        if label is None:
            missing.append(rec.image_id)
            continue
        counts[label.ita_class.value - 1, rec.rendered_class.value - 1] += 1
    if missing:
        raise ReportError(
            "records without ground-truth labels: " + ", ".join(sorted(set(missing)))
        )
    return ConfusionMatrix(counts)


# ---------------------------------------------------------------------------
# Tail functions


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    denom = a
    for _ in range(1000):
        denom += 1.0
        term *= x / denom
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x); abs error < 1e-10."""
    if a <= 0.0 or x < 0.0:
        raise ValueError("need a > 0 and x >= 0")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_contfrac(a, x)


def chi2_sf(x: float, df: int) -> float:
    """Chi-square survival function via the incomplete gamma function."""
    if df < 1:
        raise ValueError("df must be >= 1")
    return regularized_gamma_q(df / 2.0, x / 2.0)


def normal_sf(z: float) -> float:
    """Standard normal survival function, erfc-based."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# Rank machinery


def _midranks(pooled: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Average ranks (1-based) with midrank ties; also the tie-group sizes."""
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(len(pooled), dtype=np.float64)
    sv = pooled[order]
    ties: list[int] = []
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + 1 + j + 1) / 2.0
        if j > i:
            ties.append(j - i + 1)
        i = j + 1
    return ranks, ties


def _pool(groups: Sequence[Sequence[float]]) -> tuple[np.ndarray, list[int]]:
    sizes = [len(g) for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least 2 groups")
    if any(n < 1 for n in sizes):
        raise ValueError("every group needs at least 1 sample")
    pooled = np.concatenate([np.asarray(g, dtype=np.float64) for g in groups])
    if len(pooled) < 3:
        raise ValueError("need at least 3 samples in total")
    return pooled, sizes


@dataclass(frozen=True)
class DunnComparison:
    group_a: int
    group_b: int
    z: float
    p_raw: float
    p_adjusted: float


@dataclass(frozen=True)
class StatsResult:
    test_name: str
    h: float
    df: int
    p_value: float
    degenerate: bool = False
    posthoc: tuple[DunnComparison, ...] = ()
    correction: str = ""

    def to_dict(self) -> dict:
        return {
            "test": self.test_name,
            "H": self.h,
            "df": self.df,
            "p_value": self.p_value,
            "degenerate": self.degenerate,
            "correction": self.correction,
            "posthoc": [
                {
                    "group_a": c.group_a,
                    "group_b": c.group_b,
                    "z": c.z,
                    "p_raw": c.p_raw,
                    "p_adjusted": c.p_adjusted,
                }
                for c in self.posthoc
            ],
        }


def kruskal_wallis(groups: Sequence[Sequence[float]], name: str = "kruskal-wallis") -> StatsResult:
    """Rank-based omnibus test with midrank ties and tie correction.

    All-identical input is degenerate: H = 0, p = 1, flagged rather than
    raised.
    """
    pooled, sizes = _pool(groups)
    n_total = len(pooled)
    ranks, ties = _midranks(pooled)
    tie_sum = sum(t**3 - t for t in ties)
    correction = 1.0 - tie_sum / (n_total**3 - n_total)
    df = len(groups) - 1
    if correction <= 0.0:  # every pooled value identical
        return StatsResult(name, 0.0, df, 1.0, degenerate=True)

    start = 0
    rank_sums = []
    for n in sizes:
        rank_sums.append(ranks[start : start + n].sum())
        start += n
    h_raw = 12.0 / (n_total * (n_total + 1)) * sum(
        r * r / n for r, n in zip(rank_sums, sizes)
    ) - 3.0 * (n_total + 1)
    h = h_raw / correction
    h = max(h, 0.0)
    return StatsResult(name, h, df, chi2_sf(h, df), degenerate=False)


def dunn_posthoc(
    groups: Sequence[Sequence[float]],
    correction: str = "bonferroni",
    name: str = "dunn",
) -> StatsResult:
    """Pairwise Dunn z-tests on the pooled ranks with multiplicity correction."""
    if correction not in ("bonferroni", "holm"):
        raise ValueError(f"unknown correction {correction!r}")
    pooled, sizes = _pool(groups)
    n_total = len(pooled)
    ranks, ties = _midranks(pooled)
    tie_term = sum(t**3 - t for t in ties) / (12.0 * (n_total - 1))
    base_var = n_total * (n_total + 1) / 12.0 - tie_term
    degenerate = base_var <= 0.0

    start = 0
    mean_ranks = []
    for n in sizes:
        mean_ranks.append(ranks[start : start + n].mean())
        start += n

    k = len(groups)
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    zs = []
    raws = []
    for i, j in pairs:
        if degenerate:
            z = 0.0
        else:
            se = math.sqrt(base_var * (1.0 / sizes[i] + 1.0 / sizes[j]))
            z = (mean_ranks[i] - mean_ranks[j]) / se
        zs.append(z)
        raws.append(min(1.0, 2.0 * normal_sf(abs(z))))

    m = len(pairs)
    if correction == "bonferroni":
        adjusted = [min(1.0, p * m) for p in raws]
    else:
        adjusted = [0.0] * m
        running = 0.0
        for step, idx in enumerate(sorted(range(m), key=lambda i: raws[i])):
            running = max(running, (m - step) * raws[idx])
            adjusted[idx] = min(1.0, running)

    comparisons = tuple(
        DunnComparison(i, j, z, p, padj)
        for (i, j), z, p, padj in zip(pairs, zs, raws, adjusted)
    )
    # Report the largest |z| as the headline statistic for convenience.
    top = max(abs(z) for z in zs)
    return StatsResult(
        name,
        top,
        k - 1,
        min(c.p_adjusted for c in comparisons),
        degenerate=degenerate,
        posthoc=comparisons,
        correction=correction,
    )


# ---------------------------------------------------------------------------
# Group summaries


@dataclass(frozen=True)
class GroupSummary:
    count: int
    median: float
    q1: float
    q3: float


def _field_value(record: EvalRecord, name: str):
    v = getattr(record, name)
    if isinstance(v, ExtractionMethod):
        return v.value
    if isinstance(v, ItaClass):
        return v.name
    return v


def summarize_values(values: Sequence[float]) -> GroupSummary:
    vals = sorted(float(v) for v in values)
    if not vals:
        raise ValueError("cannot summarize an empty group")
    med = statistics.median(vals)
    if len(vals) == 1:
        return GroupSummary(1, med, vals[0], vals[0])
    q = statistics.quantiles(vals, n=4, method="inclusive")
    return GroupSummary(len(vals), med, q[0], q[2])


def summarize(
    records: Iterable[EvalRecord],
    keys: Sequence[str],
    value: str = "delta_e",
) -> dict[tuple, GroupSummary]:
    """Exact per-group medians/quartiles of one record field."""
    groups: dict[tuple, list[float]] = {}
    for rec in records:
        key = tuple(_field_value(rec, k) for k in keys)
        groups.setdefault(key, []).append(float(getattr(rec, value)))
    if not groups:
        raise ValueError("no records to summarize")
    return {key: summarize_values(vals) for key, vals in sorted(groups.items())}
