"""Paired nonparametric comparison: Wilcoxon signed-rank test and reports.

The test is exact for small tie-free samples (p from the full distribution
over all 2^n sign assignments, computed with the count-of-rank-sums dynamic
program) and falls back to the tie-corrected normal approximation otherwise.
Zero differences are discarded before ranking (the classical reduction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateSampleError, PairingError, ValidationError

EXACT_N_MAX = 25
OVERALL_GROUP = "all"


@dataclass(frozen=True)
class PairedSample:
    """Two paired measurement lists keyed by unique scan ids."""

    x: tuple[float, ...]
    y: tuple[float, ...]
    ids: tuple[str, ...]

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        y = tuple(float(v) for v in self.y)
        ids = tuple(str(i) for i in self.ids)
        if not (len(x) == len(y) == len(ids)):
            raise ValidationError(
                f"paired sample lengths differ: x={len(x)} y={len(y)} ids={len(ids)}"
            )
        if len(x) < 1:
            raise ValidationError("paired sample must contain at least one pair")
        if len(set(ids)) != len(ids):
            raise ValidationError("paired sample ids must be unique")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "ids", ids)


@dataclass(frozen=True)
class PairedTestResult:
    n_effective: int
    w_statistic: float
    p_two_sided: float
    method: str  # "exact" | "normal-approx"
    mean_x: float
    mean_y: float
    alpha: float = 0.05

    @property
    def significant(self) -> bool:
        return self.p_two_sided < self.alpha


def _signed_rank_count_dp(n: int) -> np.ndarray:
    """counts[w] = number of subsets of {1..n} whose ranks sum to w."""
    max_w = n * (n + 1) // 2
    counts = np.zeros(max_w + 1, dtype=np.int64)
    counts[0] = 1
    for k in range(1, n + 1):
        counts[k:] += counts[: max_w + 1 - k].copy()
    return counts


def _exact_two_sided_p(n: int, w_plus: float) -> float:
    """2 * min(P(W+ <= w), P(W+ >= w)) under uniform sign assignment, capped at 1.

    Valid only for tie-free |d|, where ranks are exactly 1..n and W+ is an
    integer.  w is the min of the two rank sums.
    """
    w_minus = n * (n + 1) / 2.0 - w_plus
    w = int(round(min(w_plus, w_minus)))
    counts = _signed_rank_count_dp(n)
    total = float(2**n)
    p_le = float(counts[: w + 1].sum()) / total
    p_ge = float(counts[w:].sum()) / total
    return min(1.0, 2.0 * min(p_le, p_ge))


def _normal_two_sided_p(n: int, w_plus: float, tie_sizes: Sequence[int]) -> float:
    """Tie-corrected normal approximation, no continuity correction."""
    mu = n * (n + 1) / 4.0
    tie_term = sum(t**3 - t for t in tie_sizes) / 48.0
    sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    z = (w_plus - mu) / math.sqrt(sigma2)
    # Phi(-|z|) via the complementary error function.
    return math.erfc(abs(z) / math.sqrt(2.0))


def wilcoxon_signed_rank(sample: PairedSample, alpha: float = 0.05) -> PairedTestResult:
    """Two-sided Wilcoxon signed-rank test on d = x - y.

    Zero differences are discarded; |d| is ranked with average ranks for
    ties.  Exact p when n_effective <= 25 and |d| is tie-free, otherwise the
    tie-corrected normal approximation on W+.  The reported statistic is
    min(W+, W-).
    """
    x = np.asarray(sample.x, dtype=np.float64)
    y = np.asarray(sample.y, dtype=np.float64)
    d = x - y
    nonzero = d[d != 0.0]
    n = int(nonzero.size)
    if n == 0:
        raise DegenerateSampleError("all paired differences are zero")

    abs_d = np.abs(nonzero)
    ranks = rankdata(abs_d)
    w_plus = float(ranks[nonzero > 0].sum())
    w_minus = float(ranks[nonzero < 0].sum())
    w = min(w_plus, w_minus)

    _, tie_counts = np.unique(abs_d, return_counts=True)
    has_ties = bool((tie_counts > 1).any())
    if n <= EXACT_N_MAX and not has_ties:
        method = "exact"
        p = _exact_two_sided_p(n, w_plus)
    else:
        method = "normal-approx"
        p = _normal_two_sided_p(n, w_plus, tie_counts.tolist())

    return PairedTestResult(
        n_effective=n,
        w_statistic=w,
        p_two_sided=p,
        method=method,
        mean_x=float(x.mean()),
        mean_y=float(y.mean()),
        alpha=alpha,
    )


@dataclass(frozen=True)
class ComparisonRow:
    """One report row: a group's paired test, or its degeneracy note."""

    group: str
    n: int
    mean_a: float
    mean_b: float
    result: PairedTestResult | None
    note: str | None = None


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[ComparisonRow, ...]
    alpha: float

    def row(self, group: str) -> ComparisonRow:
        for r in self.rows:
            if r.group == group:
                return r
        raise KeyError(group)


def _test_group(group: str, ids, a, b, alpha) -> ComparisonRow:
    xs = tuple(a[i] for i in ids)
    ys = tuple(b[i] for i in ids)
    try:
        result = wilcoxon_signed_rank(PairedSample(xs, ys, tuple(ids)), alpha=alpha)
        note = None
    except DegenerateSampleError:
        result = None
        note = "no nonzero differences"
    return ComparisonRow(
        group=group,
        n=len(ids),
        mean_a=float(np.mean(xs)),
        mean_b=float(np.mean(ys)),
        result=result,
        note=note,
    )


def compare_methods(
    a: Mapping[str, float],
    b: Mapping[str, float],
    grouping: Mapping[str, str] | Callable[[str], str] | None = None,
    alpha: float = 0.05,
) -> ComparisonReport:
    """Paired comparison of two per-scan result maps, overall and per group.

    a and b map scan id -> measurement and must cover the same ids.  Rows are
    sorted by id before testing, so the report is independent of input order.
    Groups where every difference is zero are reported with the degeneracy
    note instead of a test result.
    """
    if set(a) != set(b):
        only_a = sorted(set(a) - set(b))[:5]
        only_b = sorted(set(b) - set(a))[:5]
        raise PairingError(f"result ids differ (a-only {only_a}, b-only {only_b})")
    ids = sorted(a)
    if not ids:
        raise ValidationError("compare_methods requires at least one pair")

    rows = [_test_group(OVERALL_GROUP, ids, a, b, alpha)]
    if grouping is not None:
        lookup = grouping if callable(grouping) else grouping.__getitem__
        by_group: dict[str, list[str]] = {}
        for i in ids:
            by_group.setdefault(str(lookup(i)), []).append(i)
        for group in sorted(by_group):
            rows.append(_test_group(group, by_group[group], a, b, alpha))
    return ComparisonReport(rows=tuple(rows), alpha=alpha)


CSV_HEADER = "group,n,mean_a,mean_b,w,p,method,significant"


def comparison_to_csv(report: ComparisonReport) -> str:
    """Serialize a comparison report with the fixed column set.

    Number formats are pinned (means %.6f, w %.1f, p %.12g) so reports are
    byte-stable across runs.
    """
    lines = [CSV_HEADER]
    for row in report.rows:
        if row.result is None:
            w = p = ""
            method = "degenerate"
            significant = ""
        else:
            w = f"{row.result.w_statistic:.1f}"
            p = f"{row.result.p_two_sided:.12g}"
            method = row.result.method
            significant = "true" if row.result.significant else "false"
        lines.append(
            f"{row.group},{row.n},{row.mean_a:.6f},{row.mean_b:.6f},{w},{p},{method},{significant}"
        )
    return "\n".join(lines) + "\n"
