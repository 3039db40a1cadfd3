"""Statistical kernels: rank correlation, 2x2 chi-square, ROC AUC, line fit, Scott-Knott.

Everything here is implemented on top of numpy only, including the
regularized incomplete gamma function used for chi-square p-values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError


class LengthMismatch(InputError):
    pass


class ConstantInput(InputError):
    pass


class DegenerateTable(InputError):
    pass


class SingleClass(InputError):
    pass


class ConstantX(InputError):
    pass


class TooFewObservations(InputError):
    pass


# --------------------------------------------------------------------------
# incomplete gamma

_GAMMA_EPS = 1e-15
_GAMMA_MAX_ITER = 10_000
_TINY = 1e-300


def _gamma_series(a: float, x: float) -> float:
    # lower regularized P(a, x), valid for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_GAMMA_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_continued_fraction(a: float, x: float) -> float:
    # upper regularized Q(a, x) by modified Lentz, valid for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_continued_fraction(a, x)


def gammainc_lower(a: float, x: float) -> float:
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_continued_fraction(a, x)


def chi2_sf(statistic: float, df: float) -> float:
    """Survival function of the chi-square distribution (df may be fractional)."""
    if statistic <= 0:
        return 1.0
    return gammainc_upper(df / 2.0, statistic / 2.0)


def chi2_isf(p: float, df: float) -> float:
    """Critical value c with chi2_sf(c, df) == p, found by bisection."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    lo, hi = 0.0, max(1.0, df)
    while chi2_sf(hi, df) > p:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_sf(mid, df) > p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# ranks and correlation

def rankdata(values: Sequence[float]) -> np.ndarray:
    """Fractional (average) ranks starting at 1."""
    x = np.asarray(values, dtype=float)
    n = x.size
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    ranks = np.empty(n, dtype=float)
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, sorted_x[1:] != sorted_x[:-1]])
    ends = np.r_[starts[1:], n]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = 0.5 * (s + e - 1) + 1.0
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    r = float(da @ db) / denom
    return min(1.0, max(-1.0, r))


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"vectors must be 1-D with equal length, got {x.shape} and {y.shape}")
    if x.size < 3:
        raise LengthMismatch("spearman_rho needs at least 3 observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ConstantInput("spearman_rho is undefined for a constant vector")
    return _pearson(rankdata(x), rankdata(y))


def spearman_matrix(X: np.ndarray) -> np.ndarray:
    """Pairwise Spearman correlations between the columns of ``X``.

    Pairs involving a constant column get 0 (no monotone association can be
    measured); the diagonal is 1.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    R = np.column_stack([rankdata(X[:, j]) for j in range(p)]) if p else np.empty((n, 0))
    R = R - R.mean(axis=0)
    norms = np.sqrt((R * R).sum(axis=0))
    constant = norms == 0
    norms[constant] = 1.0
    Z = R / norms
    C = Z.T @ Z
    C[constant, :] = 0.0
    C[:, constant] = 0.0
    np.clip(C, -1.0, 1.0, out=C)
    np.fill_diagonal(C, 1.0)
    return C


# --------------------------------------------------------------------------
# chi-square

@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    degrees_of_freedom: int
    p_value: float

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "degrees_of_freedom": self.degrees_of_freedom,
                "p_value": self.p_value}


def chi_square_2x2(a: int, b: int, c: int, d: int) -> ChiSquareResult:
    """Pearson chi-square on [[a, b], [c, d]] without continuity correction."""
    counts = (a, b, c, d)
    if any(v < 0 for v in counts):
        raise DegenerateTable("counts must be non-negative")
    r1, r2 = a + b, c + d
    k1, k2 = a + c, b + d
    n = r1 + r2
    if min(r1, r2, k1, k2) <= 0:
        raise DegenerateTable(f"table has a zero margin: rows=({r1}, {r2}) cols=({k1}, {k2})")
    # n (ad - bc)^2 / (r1 r2 k1 k2), computed in floats to avoid overflow surprises
    num = float(n) * float(a * d - b * c) ** 2
    stat = num / (float(r1) * float(r2) * float(k1) * float(k2))
    return ChiSquareResult(stat, 1, chi2_sf(stat, 1.0))


# --------------------------------------------------------------------------
# ROC AUC

def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC: P(random positive outranks random negative), ties count 1/2."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise LengthMismatch("scores and labels must be 1-D with equal length")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(y.size - n_pos)
    if not np.all((y == 0) | pos):
        raise InputError("labels must be binary 0/1")
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("roc_auc needs at least one positive and one negative label")
    ranks = rankdata(s)
    u = float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


# --------------------------------------------------------------------------
# least squares line

@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared}


def linear_fit(x: Sequence[float], y: Sequence[float]) -> LinearFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch("x and y must be 1-D with equal length")
    if x.size < 2:
        raise LengthMismatch("linear_fit needs at least 2 points")
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ConstantX("linear_fit is undefined for constant x")
    dy = y - y.mean()
    slope = float(dx @ dy) / sxx
    intercept = float(y.mean()) - slope * float(x.mean())
    ss_tot = float(dy @ dy)
    if ss_tot == 0.0:
        return LinearFit(slope, intercept, 1.0)
    resid = y - (slope * x + intercept)
    r2 = 1.0 - float(resid @ resid) / ss_tot
    return LinearFit(slope, intercept, min(1.0, max(0.0, r2)))


# --------------------------------------------------------------------------
# Scott-Knott

def cohens_d(x: Sequence[float], y: Sequence[float]) -> float:
    """Cohen's d with pooled standard deviation (x minus y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = x.size, y.size
    diff = float(x.mean() - y.mean())
    dof = nx + ny - 2
    if dof <= 0:
        return math.copysign(math.inf, diff) if diff else 0.0
    pooled = ((nx - 1) * x.var(ddof=1 if nx > 1 else 0) + (ny - 1) * y.var(ddof=1 if ny > 1 else 0)) / dof
    if pooled == 0.0:
        return math.copysign(math.inf, diff) if diff else 0.0
    return diff / math.sqrt(pooled)


NEGLIGIBLE_EFFECT = 0.2


@dataclass
class ScottKnottRanking:
    ranks: dict[str, int]
    groups: list[list[str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"ranks": dict(self.ranks), "groups": [list(g) for g in self.groups]}


def _split_is_significant(means: np.ndarray, cut: int, b0: float, mse_of_mean: float,
                          error_df: int, alpha: float) -> bool:
    # likelihood-ratio statistic of the original Scott-Knott test
    k = means.size
    if b0 <= 0.0:
        return False
    grand = means.mean()
    s0 = (float(((means - grand) ** 2).sum()) + error_df * mse_of_mean) / (k + error_df)
    if s0 <= 0.0:
        return True
    lam = math.pi / (2.0 * (math.pi - 2.0)) * b0 / s0
    df = k / (math.pi - 2.0)
    return chi2_sf(lam, df) < alpha


def scott_knott(samples: Mapping[str, Sequence[float]], alpha: float = 0.05,
                effect_size: bool = True, negligible: float = NEGLIGIBLE_EFFECT) -> ScottKnottRanking:
    """Rank treatments (here: features) into statistically distinct groups.

    Treatments are ordered by mean, highest first. Each group is split at the
    cut maximizing the between-group sum of squares of treatment means. A
    split is kept when the Scott-Knott likelihood-ratio test rejects
    homogeneity at ``alpha`` and, with ``effect_size`` on, the two sides also
    differ by a non-negligible Cohen's d. Set ``effect_size=False`` for the
    plain variance-ratio rule.
    """
    if not samples:
        return ScottKnottRanking({}, [])
    names = list(samples)
    data = {k: np.asarray(samples[k], dtype=float) for k in names}
    for k, v in data.items():
        if v.ndim != 1 or v.size < 2:
            raise TooFewObservations(f"{k!r} needs at least 2 observations, got {v.size}")
    means_all = {k: float(v.mean()) for k, v in data.items()}
    # stable order: highest mean first, ties by input order
    order = sorted(range(len(names)), key=lambda i: (-means_all[names[i]], i))
    ordered = [names[i] for i in order]

    # pooled within-treatment error over all treatments
    sse = sum(float(((v - v.mean()) ** 2).sum()) for v in data.values())
    error_df = sum(v.size - 1 for v in data.values())
    r_mean = float(np.mean([v.size for v in data.values()]))
    mse = sse / error_df if error_df > 0 else 0.0
    mse_of_mean = mse / r_mean

    groups: list[list[str]] = []

    def recurse(block: list[str]) -> None:
        if len(block) < 2:
            groups.append(block)
            return
        means = np.array([means_all[k] for k in block])
        totals = np.cumsum(means)
        grand_total = totals[-1]
        k = len(block)
        best_cut, best_b = 0, -1.0
        for cut in range(1, k):
            t1 = totals[cut - 1]
            t2 = grand_total - t1
            b = t1 * t1 / cut + t2 * t2 / (k - cut) - grand_total * grand_total / k
            if b > best_b + 1e-15 * max(1.0, abs(best_b)):
                best_cut, best_b = cut, b
        left, right = block[:best_cut], block[best_cut:]
        accept = _split_is_significant(means, best_cut, max(best_b, 0.0), mse_of_mean, error_df, alpha)
        if accept and effect_size:
            d = cohens_d(np.concatenate([data[k] for k in left]), np.concatenate([data[k] for k in right]))
            accept = abs(d) >= negligible
        if not accept:
            groups.append(block)
            return
        recurse(left)
        recurse(right)

    recurse(ordered)
    ranks = {name: rank for rank, group in enumerate(groups, start=1) for name in group}
    return ScottKnottRanking(ranks, groups)
