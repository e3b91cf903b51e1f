"""Campaign evaluation over a trace dataset or synthetic landscape.

The optimization process is repeated M times with per-iteration seeds;
each iteration replays recorded (or synthesized) trial results. The
harness aggregates:

* the optimality curve: the percentage of iterations whose reported best
  at trial n equals the ground-truth optimum;
* EM1/EM2/EM3: trials to reach 99% optimality, and the optimality after
  one and two space-sweeps' worth of trials;
* the mean predicted-optimality curves (alpha and the two baselines) and
  their RMSD against the actual optimality curve;
* a constraint-discovery curve (fraction of iterations that have tested
  at least one truly-satisfying set);
* heatmap data: per-trial histograms of the reported best's median goal.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from apexopt.domain import (
    CanonicalForm,
    ConfigError,
    ParameterSet,
    Requirement,
    TerminationCriteria,
    canonicalize,
)
from apexopt.engine import Engine, EngineConfig, normalize_selector
from apexopt.executor import (
    ReplayExecutor,
    SyntheticExecutor,
    SyntheticSpec,
    TraceDataset,
)
from apexopt.surrogate import KernelConfig

APPROACHES = ("apex-lcb", "apex-ei", "gel", "ger", "guc", "rl-step", "rl-any")

Source = Union[TraceDataset, SyntheticSpec]


def _true_table(source: Source, metric: str) -> np.ndarray:
    """Per-set ground-truth values: record medians, or noiseless landscape."""
    if isinstance(source, SyntheticSpec):
        return source.table(metric)
    out = np.full(source.space.n_sets, np.nan)
    for idx in range(source.space.n_sets):
        values = source.values(idx, metric)
        if values:
            out[idx] = np.median(values)
    return out


def ground_truth_satisfying(
    source: Source, requirement: Requirement | CanonicalForm
) -> tuple[int, ...]:
    """Sets whose true constraint values satisfy every constraint."""
    canonical = canonicalize(requirement)
    space = source.space
    ok = np.ones(space.n_sets, dtype=bool)
    for c in canonical.constraints:
        table = _true_table(source, c.metric)
        ok &= ~np.isnan(table) & (c.sign * table <= c.bound)
    if not canonical.constraints:
        goal = _true_table(source, canonical.goal_metric)
        ok &= ~np.isnan(goal)
    return tuple(int(i) for i in np.flatnonzero(ok))


def ground_truth_optimal(
    source: Source, requirement: Requirement | CanonicalForm
) -> int | None:
    """The satisfying set with the best true median goal; None if no set
    satisfies the constraints (constraint-finding mode)."""
    canonical = canonicalize(requirement)
    satisfying = ground_truth_satisfying(source, requirement)
    if not satisfying:
        return None
    goal = canonical.goal_sign * _true_table(source, canonical.goal_metric)
    cand = np.asarray(satisfying, dtype=int)
    return int(cand[np.argmin(goal[cand])])


@dataclass
class CampaignSpec:
    requirement: Requirement
    approach: str
    dataset: TraceDataset | None = None
    synthetic: SyntheticSpec | None = None
    iterations: int = 1000
    max_trials: int | None = None
    base_seed: int = 0
    n_init: int = 6
    init_strategy: str = "random"
    suggestions: tuple[ParameterSet, ...] = ()
    delta: float = 0.1
    kernel: KernelConfig = field(default_factory=KernelConfig)
    bins: int = 20
    jobs: int = 1
    rl_epsilon: float = 0.05
    rl_learning_rate: float = 0.1
    rl_discount: float = 0.9

    def __post_init__(self) -> None:
        if (self.dataset is None) == (self.synthetic is None):
            raise ConfigError("specify exactly one of dataset or synthetic")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        normalize_selector(self.approach)
        if self.max_trials is None:
            if self.dataset is not None:
                self.max_trials = self.dataset.n_records
            else:
                self.max_trials = 6 * self.source.space.n_sets
        if self.max_trials < 1:
            raise ConfigError("max_trials must be >= 1")
        if self.bins < 1:
            raise ConfigError("bins must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def source(self) -> Source:
        return self.dataset if self.dataset is not None else self.synthetic


@dataclass
class _IterationOutcome:
    iteration: int
    failed: bool
    error: str | None
    reported: np.ndarray  # (budget,) int, -1 when undefined
    reported_goal: np.ndarray  # (budget,) float, nan when undefined
    alpha: np.ndarray
    alpha_b1: np.ndarray
    alpha_b2: np.ndarray
    tested: np.ndarray  # (budget,) int


def _run_iteration(spec: CampaignSpec, iteration: int) -> _IterationOutcome:
    seed = spec.base_seed + iteration
    space = spec.source.space
    required = spec.requirement.metric_names
    if spec.dataset is not None:
        executor = ReplayExecutor(spec.dataset, seed, required)
    else:
        executor = SyntheticExecutor(spec.synthetic, seed)
    cfg = EngineConfig(
        space=space,
        requirement=spec.requirement,
        termination=TerminationCriteria(max_trials=spec.max_trials),
        selector=spec.approach,
        n_init=spec.n_init,
        init_strategy=spec.init_strategy,
        suggestions=spec.suggestions,
        delta=spec.delta,
        kernel=spec.kernel,
        seed=seed,
        rl_epsilon=spec.rl_epsilon,
        rl_learning_rate=spec.rl_learning_rate,
        rl_discount=spec.rl_discount,
    )
    result = Engine(cfg, executor).run()
    budget = spec.max_trials
    failed = result.aborted or len(result.trials) < budget
    reported = np.full(budget, -1, dtype=int)
    reported_goal = np.full(budget, np.nan)
    alpha = np.zeros(budget)
    alpha_b1 = np.zeros(budget)
    alpha_b2 = np.zeros(budget)
    tested = np.full(budget, -1, dtype=int)
    for entry in result.trials[:budget]:
        k = entry.n - 1
        tested[k] = entry.set_index
        alpha[k] = entry.alpha
        alpha_b1[k] = entry.alpha_b1
        alpha_b2[k] = entry.alpha_b2
        if entry.reported_index is not None:
            reported[k] = entry.reported_index
            reported_goal[k] = entry.reported_goal_median
    return _IterationOutcome(
        iteration=iteration,
        failed=failed,
        error=result.error,
        reported=reported,
        reported_goal=reported_goal,
        alpha=alpha,
        alpha_b1=alpha_b1,
        alpha_b2=alpha_b2,
        tested=tested,
    )


@dataclass
class CampaignResult:
    approach: str
    budget: int
    iterations: int
    failures: int
    n_sets: int
    ground_truth_index: int | None
    satisfying_indices: tuple[int, ...]
    optimality: np.ndarray
    mean_alpha: np.ndarray
    mean_alpha_b1: np.ndarray
    mean_alpha_b2: np.ndarray
    constraint_discovery: np.ndarray
    constraint_crossing: int | None
    heatmap: np.ndarray
    heatmap_edges: np.ndarray
    em1: int | None
    em2: float | None
    em3: float | None
    rmsd_alpha: float | None
    rmsd_alpha_b1: float | None
    rmsd_alpha_b2: float | None
    reported_matrix: np.ndarray  # (iterations, budget)
    reported_goal_matrix: np.ndarray = None  # (iterations, budget), original units
    termination_timing: dict = field(default_factory=dict)
    failed_iterations: tuple[int, ...] = ()


def em_metrics(
    optimality: Union[np.ndarray, "CampaignResult"], n_sets: int
) -> tuple[int | None, float | None, float | None]:
    """(trials to 99% optimality, optimality at n_sets, at 2*n_sets)."""
    if isinstance(optimality, CampaignResult):
        optimality = optimality.optimality
    curve = np.asarray(optimality, dtype=float)
    reached = np.flatnonzero(curve >= 99.0)
    em1 = int(reached[0]) + 1 if reached.size else None
    em2 = float(curve[n_sets - 1]) if curve.size >= n_sets else None
    em3 = float(curve[2 * n_sets - 1]) if curve.size >= 2 * n_sets else None
    return em1, em2, em3


def rmsd_alpha(
    mean_alpha: Union[np.ndarray, "CampaignResult"],
    optimality: np.ndarray | None = None,
) -> float:
    """Root mean square deviation between predicted and actual optimality."""
    if isinstance(mean_alpha, CampaignResult):
        optimality = mean_alpha.optimality
        mean_alpha = mean_alpha.mean_alpha
    diff = np.asarray(mean_alpha, dtype=float) - np.asarray(optimality, dtype=float)
    return float(np.sqrt(np.mean(diff**2)))


def termination_timing(
    alpha_matrix: np.ndarray,
    optimality: np.ndarray,
    thresholds: Sequence[float] = (80.0, 90.0, 99.0),
) -> dict:
    """Trial offsets between alpha-based stopping and actual optimality.

    For each threshold t: the trial at which an iteration would stop when
    using its own alpha(n) >= t, minus the trial at which the campaign's
    actual optimality first reaches t. Early and late stops carry opposite
    signs, so both the signed and the absolute mean are reported.
    """
    out = {}
    for t in thresholds:
        reached = np.flatnonzero(np.asarray(optimality) >= t)
        actual = int(reached[0]) + 1 if reached.size else None
        diffs = []
        stopped = 0
        if actual is not None and alpha_matrix.size:
            for row in alpha_matrix:
                hit = np.flatnonzero(row >= t)
                if hit.size:
                    stopped += 1
                    diffs.append(int(hit[0]) + 1 - actual)
        out[f"{t:g}"] = {
            "actual_crossing": actual,
            "stopped_iterations": stopped,
            "signed_mean": float(np.mean(diffs)) if diffs else None,
            "absolute_mean": float(np.mean(np.abs(diffs))) if diffs else None,
        }
    return out


def constraint_discovery_curve(
    tested_matrix: np.ndarray, satisfying: Sequence[int]
) -> tuple[np.ndarray, int | None]:
    """Per-trial fraction of iterations that tested a satisfying set,
    plus the trial at which the fraction crosses 99%."""
    if tested_matrix.size == 0 or not satisfying:
        budget = tested_matrix.shape[1] if tested_matrix.ndim == 2 else 0
        return np.zeros(budget), None
    sat = np.isin(tested_matrix, np.asarray(list(satisfying), dtype=int))
    hit = np.cumsum(sat, axis=1) > 0
    curve = hit.mean(axis=0)
    crossed = np.flatnonzero(curve >= 0.99)
    return curve, (int(crossed[0]) + 1 if crossed.size else None)


def _goal_span(source: Source, goal_metric: str) -> tuple[float, float]:
    if isinstance(source, SyntheticSpec):
        table = source.table(goal_metric)
        return float(np.min(table)), float(np.max(table))
    values = [
        rec.metrics[goal_metric]
        for group in source.records_by_set
        for rec in group
        if goal_metric in rec.metrics
    ]
    if not values:
        return 0.0, 1.0
    return float(min(values)), float(max(values))


def run_campaign(spec: CampaignSpec) -> CampaignResult:
    """Run M seeded iterations and aggregate the evaluation curves."""
    outcomes: list[_IterationOutcome]
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            outcomes = list(
                pool.map(_run_iteration, [spec] * spec.iterations,
                         range(spec.iterations))
            )
    else:
        outcomes = [_run_iteration(spec, i) for i in range(spec.iterations)]
    outcomes.sort(key=lambda o: o.iteration)
    ok = [o for o in outcomes if not o.failed]
    failed = tuple(o.iteration for o in outcomes if o.failed)
    budget = spec.max_trials
    n_sets = spec.source.space.n_sets
    canonical = canonicalize(spec.requirement)
    truth = ground_truth_optimal(spec.source, canonical)
    satisfying = ground_truth_satisfying(spec.source, canonical)

    if ok:
        reported = np.vstack([o.reported for o in ok])
        tested = np.vstack([o.tested for o in ok])
        alpha_matrix = np.vstack([o.alpha for o in ok])
        mean_alpha = alpha_matrix.mean(axis=0)
        mean_b1 = np.mean([o.alpha_b1 for o in ok], axis=0)
        mean_b2 = np.mean([o.alpha_b2 for o in ok], axis=0)
        goals = np.vstack([o.reported_goal for o in ok])
    else:
        reported = np.zeros((0, budget), dtype=int)
        tested = np.zeros((0, budget), dtype=int)
        alpha_matrix = np.zeros((0, budget))
        mean_alpha = np.zeros(budget)
        mean_b1 = np.zeros(budget)
        mean_b2 = np.zeros(budget)
        goals = np.zeros((0, budget))

    if truth is not None and reported.shape[0]:
        optimality = 100.0 * np.mean(reported == truth, axis=0)
    else:
        optimality = np.zeros(budget)
    em1, em2, em3 = em_metrics(optimality, n_sets)

    lo, hi = _goal_span(spec.source, canonical.goal_metric)
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, spec.bins + 1)
    heatmap = np.zeros((budget, spec.bins), dtype=int)
    for k in range(budget):
        col = goals[:, k] if goals.shape[0] else np.array([])
        col = col[~np.isnan(col)]
        if col.size:
            heatmap[k], _ = np.histogram(np.clip(col, lo, hi), bins=edges)

    discovery, crossing = constraint_discovery_curve(tested, satisfying)
    timing = termination_timing(alpha_matrix, optimality)

    return CampaignResult(
        approach=normalize_selector(spec.approach),
        budget=budget,
        iterations=len(ok),
        failures=len(failed),
        n_sets=n_sets,
        ground_truth_index=truth,
        satisfying_indices=satisfying,
        optimality=optimality,
        mean_alpha=mean_alpha,
        mean_alpha_b1=mean_b1,
        mean_alpha_b2=mean_b2,
        constraint_discovery=discovery,
        constraint_crossing=crossing,
        heatmap=heatmap,
        heatmap_edges=edges,
        em1=em1,
        em2=em2,
        em3=em3,
        rmsd_alpha=rmsd_alpha(mean_alpha, optimality) if truth is not None else None,
        rmsd_alpha_b1=rmsd_alpha(mean_b1, optimality) if truth is not None else None,
        rmsd_alpha_b2=rmsd_alpha(mean_b2, optimality) if truth is not None else None,
        reported_matrix=reported,
        reported_goal_matrix=goals,
        termination_timing=timing,
        failed_iterations=failed,
    )


def campaign_summary(result: CampaignResult, spec: CampaignSpec) -> dict:
    """JSON-ready summary (deterministic content, no timestamps)."""
    space = spec.source.space
    truth = result.ground_truth_index
    return {
        "schema_version": 1,
        "approach": result.approach,
        "iterations": result.iterations,
        "failures": result.failures,
        "failed_iterations": list(result.failed_iterations),
        "budget": result.budget,
        "base_seed": spec.base_seed,
        "n_sets": result.n_sets,
        "mode": "optimality" if truth is not None else "constraint-finding",
        "ground_truth": (
            {
                "index": truth,
                "params": space.set_at(truth).as_dict(space),
            }
            if truth is not None
            else None
        ),
        "satisfying_sets": list(result.satisfying_indices),
        "em1": result.em1,
        "em2": result.em2,
        "em3": result.em3,
        "rmsd_alpha": result.rmsd_alpha,
        "rmsd_alpha_b1": result.rmsd_alpha_b1,
        "rmsd_alpha_b2": result.rmsd_alpha_b2,
        "constraint_crossing": result.constraint_crossing,
        "termination_timing": result.termination_timing,
        "final_optimality": float(result.optimality[-1]) if result.budget else None,
        "heatmap_edges": [float(e) for e in result.heatmap_edges],
    }


def write_campaign_csv(result: CampaignResult, path: Union[str, Path]) -> None:
    """One row per trial: curves plus the heatmap bins."""
    path = Path(path)
    bins = result.heatmap.shape[1]
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["n", "optimality", "mean_alpha", "mean_alpha_b1", "mean_alpha_b2",
             "constraint_discovery"]
            + [f"bin_{i}" for i in range(bins)]
        )
        for k in range(result.budget):
            writer.writerow(
                [
                    k + 1,
                    f"{result.optimality[k]:.6f}",
                    f"{result.mean_alpha[k]:.6f}",
                    f"{result.mean_alpha_b1[k]:.6f}",
                    f"{result.mean_alpha_b2[k]:.6f}",
                    f"{result.constraint_discovery[k]:.6f}",
                ]
                + [int(v) for v in result.heatmap[k]]
            )


def write_campaign_summary(
    result: CampaignResult, spec: CampaignSpec, path: Union[str, Path]
) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(campaign_summary(result, spec), fh, indent=2, sort_keys=True)
        fh.write("\n")
