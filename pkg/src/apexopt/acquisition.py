"""Next test-point selection.

Two acquisition rules over the GP goal surrogate: minimize the lower
confidence bound (mean - kappa * std), or maximize expected improvement
over the current-best goal value. Both can over-exploit when extreme
outliers sit near a minimum or when noisy constraint readings filter out
viable sets; a trap is flagged when the chosen point's acquisition score
(EI itself, or the coefficient of variation for LCB) falls below a tenth
of its running maximum. Two escape procedures then alternate until the
search recovers: discard the most-tested sets and re-select, or search
the currently-unsatisfying sets for the one most likely to satisfy the
constraints while still improving the goal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np
from scipy.special import ndtr

from apexopt.domain import ParameterSet
from apexopt.surrogate import GPModel, predict

EPS_DIV = 1e-9
TRAP_FRACTION = 0.1

ESCAPE_GOAL = "goal-outlier"
ESCAPE_CONSTRAINT = "constraint-noise"


class NoCandidatesError(ValueError):
    """Raised when a selection is attempted over an empty candidate set."""


def _phi(z: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * z**2) / math.sqrt(2.0 * math.pi)


def lcb(model: GPModel, x: Union[int, ParameterSet, Sequence[float]],
        kappa_n: float) -> float:
    """Lower confidence bound mean - kappa * std at one parameter set."""
    mean, var = predict(model, x)
    return mean - kappa_n * math.sqrt(max(var, 0.0))


def lcb_values(mean: np.ndarray, std: np.ndarray, kappa_n: float) -> np.ndarray:
    return mean - kappa_n * std


def ei_values(mean: np.ndarray, std: np.ndarray, f_best: float) -> np.ndarray:
    """Expected improvement below f_best; exactly 0 where std is 0."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    improvement = f_best - mean
    out = np.zeros_like(mean)
    pos = std > 0.0
    z = improvement[pos] / std[pos]
    out[pos] = improvement[pos] * ndtr(z) + std[pos] * _phi(z)
    return np.maximum(out, 0.0)


def expected_improvement(
    model: GPModel, x: Union[int, ParameterSet, Sequence[float]], f_best: float
) -> float:
    mean, var = predict(model, x)
    std = math.sqrt(max(var, 0.0))
    return float(ei_values(np.array([mean]), np.array([std]), f_best)[0])


def _model_scores(
    model: GPModel, candidates: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    mean, var = model.predict_sets(candidates)
    return mean, np.sqrt(np.maximum(var, 0.0))


def _as_candidates(candidates: Sequence[int]) -> np.ndarray:
    arr = np.unique(np.asarray(list(candidates), dtype=int))
    if arr.size == 0:
        raise NoCandidatesError("empty candidate set")
    return arr  # sorted, so argmin/argmax ties resolve to the lowest index


def select_gp_lcb(
    goal_model: GPModel,
    candidates: Sequence[int],
    kappa_n: float,
    scores: tuple[np.ndarray, np.ndarray] | None = None,
) -> int:
    """Candidate minimizing the LCB; ties break to the lowest set index.

    ``scores`` may carry precomputed (mean, std) arrays aligned with the
    sorted candidate list to avoid a redundant GP prediction pass.
    """
    cand = _as_candidates(candidates)
    mean, std = scores if scores is not None else _model_scores(goal_model, cand)
    return int(cand[np.argmin(lcb_values(mean, std, kappa_n))])


def select_ei(
    goal_model: GPModel,
    candidates: Sequence[int],
    f_best: float,
    scores: tuple[np.ndarray, np.ndarray] | None = None,
) -> int:
    """Candidate maximizing EI; ties break to the lowest set index."""
    cand = _as_candidates(candidates)
    mean, std = scores if scores is not None else _model_scores(goal_model, cand)
    return int(cand[np.argmax(ei_values(mean, std, f_best))])


def coefficient_of_variation(mean: float, std: float) -> float:
    """Relative spread of the selected point, guarded near mean 0."""
    return std / max(abs(mean), EPS_DIV)


@dataclass
class NtsState:
    """Running acquisition maxima and the alternating escape mode.

    The maxima grow monotonically over one optimization run; the trap
    thresholds are a tenth of the current maxima. The escape mode starts
    at the goal-outlier procedure and flips on every trapped iteration.
    """

    ei_max: float = 0.0
    cv_max: float = 0.0
    escape_mode: str = ESCAPE_GOAL

    def observe_ei(self, score: float) -> None:
        self.ei_max = max(self.ei_max, score)

    def observe_cv(self, score: float) -> None:
        self.cv_max = max(self.cv_max, score)

    def next_escape(self) -> str:
        mode = self.escape_mode
        self.escape_mode = (
            ESCAPE_CONSTRAINT if mode == ESCAPE_GOAL else ESCAPE_GOAL
        )
        return mode


def detect_trap(state: NtsState, chosen_score: float, kind: str) -> bool:
    """True when the chosen score dropped below a tenth of its running max.

    The running maximum must already include the current score, so the
    first iteration can never trip its own threshold.
    """
    if kind == "ei":
        return chosen_score < state.ei_max * TRAP_FRACTION
    if kind == "cv":
        return chosen_score < state.cv_max * TRAP_FRACTION
    raise ValueError(f"unknown trap score kind {kind!r}")


def escape_goal_outlier(
    counts: Mapping[int, int],
    candidates: Sequence[int],
    select_fn: Callable[[Sequence[int]], int],
) -> int:
    """Re-select after discarding the most-tested candidate sets.

    Every candidate whose observation count equals the maximum count is
    removed; if that empties the pool, the full candidate set is used.
    """
    cand = _as_candidates(candidates)
    n_obs = np.array([counts.get(int(i), 0) for i in cand])
    keep = cand[n_obs < n_obs.max()]
    return select_fn(keep if keep.size else cand)


def delta_metric(
    lcb_c: float, f_c_plus: float, improvement: float, f_best: float
) -> float:
    """Constraint-escape score: feasibility bound vs. goal improvement.

    Both terms are normalized by the magnitude of their current-best
    observation (guarded away from zero) so the ordering survives
    canonical sign flips of either metric.
    """
    return lcb_c / max(abs(f_c_plus), EPS_DIV) - improvement / max(
        abs(f_best), EPS_DIV
    )


def escape_constraint(
    goal_model: GPModel,
    constraint_models: Mapping[str, GPModel],
    unsatisfying: Sequence[int],
    f_c_plus: Mapping[str, float],
    f_best: float,
    kappa_n: float,
) -> int:
    """Pick, among currently-unsatisfying sets, the best feasibility bet.

    Per set and constraint: LCB of the constraint surrogate normalized by
    the capped best constraint observation, minus the predicted goal
    improvement normalized by the best goal value. With multiple
    constraints each set keeps its minimum; the overall argmin wins,
    lowest index on ties.
    """
    cand = _as_candidates(unsatisfying)
    goal_mean, _ = goal_model.predict_sets(cand)
    improvement = f_best - goal_mean
    best_delta = np.full(cand.shape, np.inf)
    for metric, model in constraint_models.items():
        mean, var = model.predict_sets(cand)
        lcb_c = mean - kappa_n * np.sqrt(np.maximum(var, 0.0))
        delta = lcb_c / max(abs(f_c_plus[metric]), EPS_DIV) - improvement / max(
            abs(f_best), EPS_DIV
        )
        best_delta = np.minimum(best_delta, delta)
    return int(cand[np.argmin(best_delta)])
