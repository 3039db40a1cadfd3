"""Feature ranking, partial dependence, and effect classification."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .evaluation import BootstrapResult
from .features import Dataset
from .models import TrainedModel
from .rubric import CRITERION_KEYS, MAX_SCORE, MIN_SCORE
from .stats import ConstantInput, LinearFit, ScottKnottRanking, linear_fit, scott_knott, spearman_rho

MAX_GRID_POINTS = 50
LINEAR_R2 = 0.98
MONOTONIC_RHO = 0.75
CRITERION_GRID = tuple(float(v) for v in range(MIN_SCORE, MAX_SCORE + 1))


class MissingImportances(InputError):
    pass


class UnknownFeature(InputError):
    def __init__(self, name: str) -> None:
        super().__init__(f"unknown feature {name!r}")
        self.name = name


class SameFeature(InputError):
    pass


class TooFewPoints(InputError):
    pass


class Effect(str, enum.Enum):
    linear = "linear"
    monotonic = "monotonic"
    complex = "complex"


class Direction(str, enum.Enum):
    positive = "positive"
    negative = "negative"

    @property
    def arrow(self) -> str:
        return "↗" if self is Direction.positive else "↘"


# --------------------------------------------------------------------------
# ranking

def rank_features(br: BootstrapResult, alpha: float = 0.05, effect_size: bool = True) -> ScottKnottRanking:
    """Scott-Knott grouping of features by their per-iteration importances."""
    if not br.per_iteration:
        raise MissingImportances("bootstrap result has no iterations")
    for i, it in enumerate(br.per_iteration):
        missing = [f for f in br.feature_names if f not in it.importances]
        if missing:
            raise MissingImportances(f"iteration {i} lacks importances for {missing}")
    return scott_knott(br.importance_samples(), alpha=alpha, effect_size=effect_size)


# --------------------------------------------------------------------------
# effect classification

def effect_from_stats(r_squared: float, rho: float) -> Effect:
    """Linear needs a near-perfect line fit and a strong rank correlation; monotonic only the latter."""
    strong = abs(rho) > MONOTONIC_RHO
    if strong and r_squared > LINEAR_R2:
        return Effect.linear
    if strong:
        return Effect.monotonic
    return Effect.complex


def _curve_stats(grid: np.ndarray, values: np.ndarray) -> tuple[LinearFit, float]:
    fit = linear_fit(grid, values)
    try:
        rho = spearman_rho(grid, values)
    except ConstantInput:
        rho = 0.0
    return fit, rho


def classify_effect(grid: Sequence[float], values: Sequence[float]) -> tuple[Effect, Direction, float]:
    """(effect, direction, amplitude) of a dependence curve.

    Direction follows the fitted slope, falling back to the sign of Spearman
    rho when the slope is exactly zero, and to positive for a flat curve.
    """
    g = np.asarray(grid, dtype=float)
    v = np.asarray(values, dtype=float)
    if g.shape != v.shape or g.ndim != 1:
        raise InputError("grid and values must be 1-D with equal length")
    if g.size < 3:
        raise TooFewPoints(f"effect classification needs at least 3 grid points, got {g.size}")
    fit, rho = _curve_stats(g, v)
    amplitude = float(v.max() - v.min())
    return effect_from_stats(fit.r_squared, rho), _direction(fit.slope, rho), amplitude


def _direction(slope: float, rho: float) -> Direction:
    if slope < 0 or (slope == 0 and rho < 0):
        return Direction.negative
    return Direction.positive


# --------------------------------------------------------------------------
# partial dependence

@dataclass(frozen=True)
class PDCurve:
    feature: str
    grid: tuple[float, ...]
    values: tuple[float, ...]
    effect: Effect | None
    direction: Direction
    amplitude: float
    fit: LinearFit | None
    spearman: float | None

    def value_at(self, x: float) -> float:
        """Curve value at ``x``, linearly interpolated and clamped to the grid ends."""
        return float(np.interp(x, self.grid, self.values))

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "grid": list(self.grid),
            "values": list(self.values),
            "effect": self.effect.value if self.effect else None,
            "direction": self.direction.value,
            "amplitude": self.amplitude,
            "fit": self.fit.to_dict() if self.fit else None,
            "spearman": self.spearman,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PDCurve":
        fit = LinearFit(**d["fit"]) if d.get("fit") else None
        return cls(d["feature"], tuple(d["grid"]), tuple(d["values"]),
                   Effect(d["effect"]) if d.get("effect") else None, Direction(d["direction"]),
                   float(d["amplitude"]), fit, d.get("spearman"))


@dataclass(frozen=True)
class PDSurface:
    features: tuple[str, str]
    grids: tuple[tuple[float, ...], tuple[float, ...]]
    values: np.ndarray

    def to_dict(self) -> dict:
        return {"features": list(self.features), "grids": [list(g) for g in self.grids],
                "values": self.values.tolist()}


def feature_grid(ds: Dataset, feature: str) -> np.ndarray:
    """Evaluation grid: the score domain for criteria, else observed values or quantiles."""
    if feature in CRITERION_KEYS:
        return np.array(CRITERION_GRID)
    col = ds.X[:, _feature_index(ds, feature)]
    uniq = np.unique(col)
    if uniq.size <= MAX_GRID_POINTS:
        return uniq
    return np.unique(np.quantile(col, np.linspace(0.0, 1.0, MAX_GRID_POINTS), method="inverted_cdf"))


def _feature_index(ds: Dataset, feature: str) -> int:
    try:
        return ds.feature_names.index(feature)
    except ValueError:
        raise UnknownFeature(feature) from None


def _check_model_features(m: TrainedModel, ds: Dataset, *features: str) -> None:
    if tuple(m.feature_names) != tuple(ds.feature_names):
        raise InputError("dataset columns do not match the model's features")
    for f in features:
        if f not in m.feature_names:
            raise UnknownFeature(f)
    if len(ds) == 0:
        raise InputError("partial dependence needs at least one row")


def _mean_prediction(m: TrainedModel, X: np.ndarray) -> float:
    return float(np.clip(m.predict_proba_matrix(X).mean(), 0.0, 1.0))


def partial_dependence(m: TrainedModel, ds: Dataset, feature: str, grid: Sequence[float] | None = None) -> PDCurve:
    """Mean predicted merge probability with ``feature`` forced to each grid value."""
    _check_model_features(m, ds, feature)
    j = ds.feature_names.index(feature)
    g = feature_grid(ds, feature) if grid is None else np.asarray(grid, dtype=float)
    X = ds.X.copy()
    values = np.empty(g.size)
    for i, v in enumerate(g):
        X[:, j] = v
        values[i] = _mean_prediction(m, X)
    if g.size >= 3:
        fit, rho = _curve_stats(g, values)
        effect = effect_from_stats(fit.r_squared, rho)
        direction = _direction(fit.slope, rho)
    else:
        fit, rho, effect = None, None, None
        direction = Direction.negative if g.size == 2 and values[1] < values[0] else Direction.positive
    amplitude = float(values.max() - values.min())
    return PDCurve(feature, tuple(g.tolist()), tuple(values.tolist()), effect, direction, amplitude, fit, rho)


def partial_dependence_2d(m: TrainedModel, ds: Dataset, f1: str, f2: str,
                          grids: tuple[Sequence[float], Sequence[float]] | None = None) -> PDSurface:
    """Mean predicted probability over the cross product of two feature grids."""
    if f1 == f2:
        raise SameFeature(f"two distinct features are required, got {f1!r} twice")
    _check_model_features(m, ds, f1, f2)
    j1, j2 = ds.feature_names.index(f1), ds.feature_names.index(f2)
    if grids is None:
        g1, g2 = feature_grid(ds, f1), feature_grid(ds, f2)
    else:
        g1, g2 = (np.asarray(g, dtype=float) for g in grids)
    X = ds.X.copy()
    out = np.empty((g1.size, g2.size))
    for a, v1 in enumerate(g1):
        X[:, j1] = v1
        for b, v2 in enumerate(g2):
            X[:, j2] = v2
            out[a, b] = _mean_prediction(m, X)
    return PDSurface((f1, f2), (tuple(g1.tolist()), tuple(g2.tolist())), out)


# --------------------------------------------------------------------------
# guidance

@dataclass(frozen=True)
class Suggestion:
    feature: str
    current: float
    suggested_value: float
    suggested_direction: str
    estimated_gain: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def improvement_guidance(m: TrainedModel, ds: Dataset, fv: Mapping[str, float],
                         ranking: ScottKnottRanking | None = None,
                         curves: Mapping[str, PDCurve] | None = None) -> list[Suggestion]:
    """Estimated probability gain from moving each criterion score along its curve's direction.

    Only criterion features are treated as editable. A positively sloped
    criterion may move up from its current score, a negatively sloped one
    down; the gain is the best reachable curve value minus the current one.
    Sorted by gain (descending), then Scott-Knott rank, then name.
    """
    ranks = ranking.ranks if ranking else {}
    out = []
    for f in m.feature_names:
        if f not in CRITERION_KEYS:
            continue
        curve = (curves or {}).get(f) or partial_dependence(m, ds, f)
        current = float(fv[f])
        here = curve.value_at(current)
        grid = np.asarray(curve.grid)
        values = np.asarray(curve.values)
        if curve.direction is Direction.positive:
            reach = grid >= current
            word = "increase"
        else:
            reach = grid <= current
            word = "decrease"
        if not reach.any():
            best_value, best_x = here, current
        else:
            cand = np.flatnonzero(reach)
            k = cand[int(np.argmax(values[cand]))]
            best_value, best_x = float(values[k]), float(grid[k])
            if best_value <= here:
                best_value, best_x = here, current
        direction = word if best_x != current else "keep"
        out.append(Suggestion(f, current, best_x, direction, best_value - here))
    out.sort(key=lambda s: (-s.estimated_gain, ranks.get(s.feature, math.inf), s.feature))
    return out


# --------------------------------------------------------------------------
# reports

def effect_table(curves: Sequence[PDCurve], ranking: ScottKnottRanking) -> list[dict]:
    """Rows ordered by rank: rank, feature, effect, direction, r2, |rho|, amplitude."""
    rows = []
    for c in curves:
        rows.append({
            "rank": ranking.ranks.get(c.feature),
            "feature": c.feature,
            "effect": c.effect.value if c.effect else None,
            "direction": c.direction.value,
            "r2": c.fit.r_squared if c.fit else None,
            "spearman": abs(c.spearman) if c.spearman is not None else None,
            "amplitude": c.amplitude,
        })
    order = {name: i for i, name in enumerate(ranking.ranks)}
    rows.sort(key=lambda r: (r["rank"] if r["rank"] is not None else math.inf, order.get(r["feature"], 0)))
    return rows


def _num(v) -> str:
    return "n/a" if v is None else f"{v:.2f}"


def effect_markdown(rows: Sequence[dict]) -> str:
    lines = ["| Rank | Feature | Effect | Direction | r2 | Spearman | Amplitude |",
             "|---:|---|---|:-:|---:|---:|---:|"]
    for r in rows:
        arrow = Direction(r["direction"]).arrow
        lines.append(f"| {r['rank'] if r['rank'] is not None else 'n/a'} | {r['feature'].replace('_', ' ')} | "
                     f"{r['effect'] or 'n/a'} | {arrow} | {_num(r['r2'])} | {_num(r['spearman'])} | "
                     f"{r['amplitude']:.2f} |")
    lines += ["", "Effects describe how the predicted merge probability is associated with each feature; "
                  "they are not causal."]
    return "\n".join(lines) + "\n"
