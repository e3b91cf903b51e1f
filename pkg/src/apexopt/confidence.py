"""Confidence metrics for the returned solution.

Two quantities are reported at every trial:

* robustness ``beta``: via binomial order statistics, the confidence that
  the chosen set's true percentile satisfies a constraint, given how many
  of its observed values do;
* optimality ``alpha``: the confidence that no better set remains, read
  off the tangent angle of a saturating-exponential fit to the cumulative
  suboptimality trend. A 45-degree tangent (constant growth) maps to 0,
  a flat tangent to 100.

Two simpler baseline optimality metrics (value stability, and a blend of
value and parameter stability) are included for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.optimize import minimize_scalar

from apexopt.domain import (
    CanonicalConstraint,
    ConfigError,
    ParameterSet,
    ParameterSpace,
    max_distance,
    normalized_distance,
)
from apexopt.surrogate import GPModel

B_MIN = 0.01
B_MAX = 100.0
_GRID_POINTS = 200


def robustness_beta(
    values: Sequence[float], constraint: CanonicalConstraint
) -> float:
    """Confidence that the constrained percentile is on the safe side.

    With N observed values of which l satisfy the canonical constraint,
    the nonparametric bound is sum_{k=0}^{l-1} C(N,k) p^k (1-p)^(N-k).
    """
    if len(values) == 0:
        raise ConfigError("robustness_beta needs at least one value")
    n = len(values)
    l = sum(1 for v in values if constraint.satisfied(v))
    p = constraint.percentile
    total = 0.0
    for k in range(l):
        total += math.comb(n, k) * p**k * (1.0 - p) ** (n - k)
    return min(total, 1.0)


def kappa(n: int, space_size: int, delta: float) -> float:
    """Confidence-bound calibration factor for trial n on a finite space."""
    if n < 1 or space_size < 1:
        raise ConfigError("kappa requires n >= 1 and space_size >= 1")
    if not 0.0 < delta < 1.0:
        raise ConfigError("delta must be in (0, 1)")
    return math.sqrt(2.0 * math.log(space_size * n**2 * math.pi**2 / (6.0 * delta)))


def lcb_floor(
    goal_model: GPModel, candidates: Sequence[int], kappa_n: float
) -> float:
    """Lowest mean - kappa * std over the candidate sets."""
    mean, var = goal_model.predict_sets(candidates)
    return float(np.min(mean - kappa_n * np.sqrt(var)))


def instant_suboptimality(
    goal_model: GPModel,
    candidates: Sequence[int],
    best_median: float,
    kappa_n: float,
) -> float:
    """Gap between the best observed median and the lowest confidence bound.

    May be negative when the median sits below the model's floor; callers
    record it as-is. Undefined candidate sets or best values are handled
    by the caller (the engine carries the previous value forward).
    """
    if len(candidates) == 0:
        raise ConfigError("instant_suboptimality needs a non-empty candidate set")
    return best_median - lcb_floor(goal_model, candidates, kappa_n)


def _curve(b: float, x: np.ndarray) -> np.ndarray:
    # (1 - exp(-b x)) / (1 - exp(-b)), stable for small b via expm1.
    return np.expm1(-b * x) / np.expm1(-b)


def _sse(b: float, x: np.ndarray, y: np.ndarray) -> float:
    r = _curve(b, x) - y
    return float(r @ r)


_GRID = np.logspace(math.log10(B_MIN), math.log10(B_MAX), _GRID_POINTS)


def fit_saturating_exponential(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares rate of y = (1-exp(-bx))/(1-exp(-b)) on [0,1] data.

    A coarse log-spaced grid is refined with a bounded scalar minimizer
    around the best grid cell.
    """
    curves = np.expm1(-np.outer(_GRID, x)) / np.expm1(-_GRID)[:, None]
    residuals = curves - y[None, :]
    errors = np.einsum("ij,ij->i", residuals, residuals)
    best = int(np.argmin(errors))
    lo = _GRID[max(best - 1, 0)]
    hi = _GRID[min(best + 1, len(_GRID) - 1)]
    if lo == hi:
        return float(_GRID[best])
    res = minimize_scalar(
        _sse, args=(x, y), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-6},
    )
    return float(res.x) if res.fun <= errors[best] else float(_GRID[best])


def tangent_angle_deg(b: float) -> float:
    """Tangent angle at x = 1 of the saturating exponential, in degrees."""
    slope = b * math.exp(-b) / -math.expm1(-b)
    return math.degrees(math.atan(slope))


def alpha_from_angle(theta_deg: float) -> float:
    """Map a tangent angle to confidence: 45 degrees -> 0, flat -> 100."""
    capped = min(45.0, theta_deg)
    return 100.0 * (1.0 - capped / 45.0)


@dataclass
class SuboptimalityTrace:
    """Per-trial instant suboptimality and its running sum."""

    taus: list[float] = field(default_factory=list)
    cumulative: list[float] = field(default_factory=list)

    def record(self, tau: float | None) -> float:
        """Append one trial's value; None carries the previous one forward."""
        if tau is None:
            tau = self.taus[-1] if self.taus else 0.0
        total = (self.cumulative[-1] if self.cumulative else 0.0) + tau
        self.taus.append(tau)
        self.cumulative.append(total)
        return tau

    def __len__(self) -> int:
        return len(self.taus)


def optimality_alpha(trace: SuboptimalityTrace) -> tuple[float, float]:
    """Optimality confidence in [0, 100] and the capped tangent angle.

    Both the trial axis and the cumulative values are normalized to
    [0, 1] before fitting; with fewer than 3 points there is no trend to
    read, so confidence is 0. A flat (degenerate) trend is perfectly
    saturated: confidence 100.
    """
    n = len(trace)
    if n < 3:
        return 0.0, 45.0
    t = np.asarray(trace.cumulative, dtype=float)
    lo, hi = float(np.min(t)), float(np.max(t))
    if hi == lo:
        return 100.0, 0.0
    x = np.arange(n, dtype=float) / (n - 1)
    y = (t - lo) / (hi - lo)
    b = fit_saturating_exponential(x, y)
    theta = min(45.0, tangent_angle_deg(b))
    return alpha_from_angle(theta), theta


def alpha_b1(current_best: float, previous_best: float, goal_range: float) -> float:
    """Value-stability optimality baseline in [0, 100].

    Uses the absolute change of the best goal value normalized by the
    currently observed goal range; a literal signed reading could exceed
    100 for improving minimization, so the change is taken in magnitude
    and the result clamped.
    """
    if goal_range <= 0.0:
        return 100.0
    ratio = abs(current_best - previous_best) / goal_range
    return float(np.clip((1.0 - ratio) * 100.0, 0.0, 100.0))


def alpha_b2(
    alpha_b1_value: float,
    space: ParameterSpace,
    current_set: Union[int, ParameterSet],
    previous_set: Union[int, ParameterSet],
    eta: float = 0.5,
) -> float:
    """Blend of value stability and parameter stability in [0, 100]."""
    if not 0.0 < eta < 1.0:
        raise ConfigError("eta must be in (0, 1)")
    d = normalized_distance(space, current_set, previous_set)
    stability = 1.0 - d / max_distance(space)
    blended = eta * (alpha_b1_value / 100.0) + (1.0 - eta) * stability
    return float(np.clip(blended * 100.0, 0.0, 100.0))
