"""The optimization loop.

One run proceeds as: initial sampling (user suggestions first, then a
space-filling design), then repeatedly fit GP surrogates to the canonical
observations, track the best satisfying set, update the confidence
metrics, check termination, pick the next test point (with trap detection
and the alternating escape procedures for the GP selectors), and execute
one trial.

Analysis is factored into :class:`AnalysisState` so that the per-trial
confidence values are pure functions of the observation prefix and can be
recomputed from a persisted trial log.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from apexopt import acquisition, baselines, confidence, surrogate
from apexopt.domain import (
    CanonicalForm,
    ConfigError,
    History,
    Observation,
    ParameterSet,
    ParameterSpace,
    Requirement,
    TerminationCriteria,
    canonicalize,
)
from apexopt.executor import DatasetExhausted, ExecutorError, SetExhausted
from apexopt.surrogate import GPModel, KernelConfig

SELECTOR_ALIASES = {
    "gp-lcb": "gp-lcb",
    "apex-lcb": "gp-lcb",
    "lcb": "gp-lcb",
    "ei": "ei",
    "apex-ei": "ei",
    "gel": "gel",
    "ger": "ger",
    "guc": "guc",
    "rl-step": "rl-step",
    "rl-any": "rl-any",
}

INIT_STRATEGIES = ("suggestions", "latin-hypercube", "sobol", "random")


def normalize_selector(name: str) -> str:
    try:
        return SELECTOR_ALIASES[name.lower()]
    except KeyError:
        raise ConfigError(
            f"unknown selector {name!r}; choose one of "
            f"{sorted(set(SELECTOR_ALIASES))}"
        ) from None


@dataclass(frozen=True)
class EngineConfig:
    space: ParameterSpace
    requirement: Requirement
    termination: TerminationCriteria
    selector: str = "gp-lcb"
    n_init: int = 6
    init_strategy: str = "random"
    suggestions: tuple[ParameterSet, ...] = ()
    delta: float = 0.1
    kernel: KernelConfig = field(default_factory=KernelConfig)
    seed: int = 0
    rl_epsilon: float = 0.05
    rl_learning_rate: float = 0.1
    rl_discount: float = 0.9

    def __post_init__(self) -> None:
        object.__setattr__(self, "selector", normalize_selector(self.selector))
        object.__setattr__(self, "suggestions", tuple(self.suggestions))
        if self.n_init < 1:
            raise ConfigError("n_init must be >= 1")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ConfigError(
                f"unknown init strategy {self.init_strategy!r}; "
                f"choose one of {INIT_STRATEGIES}"
            )
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must be in (0, 1)")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")

    @property
    def effective_beta_target(self) -> float | None:
        if self.termination.beta_target is not None:
            return self.termination.beta_target
        return self.requirement.confidence_target


def initial_sample(
    space: ParameterSpace,
    n_init: int,
    strategy: str,
    suggestions: Sequence[ParameterSet],
    rng: np.random.Generator,
) -> list[int]:
    """Pick the initial test sets: suggestions first, design fill after.

    The fill strategy never duplicates a set; "suggestions" requires the
    user to supply at least n_init of them.
    """
    if n_init > space.n_sets:
        raise ConfigError(
            f"n_init {n_init} exceeds the number of parameter sets {space.n_sets}"
        )
    chosen: list[int] = []
    for s in suggestions:
        idx = space.index_of(s)
        if idx in chosen:
            raise ConfigError(f"duplicate suggestion {s.values}")
        chosen.append(idx)
    if len(chosen) >= n_init:
        return chosen[:n_init]
    need = n_init - len(chosen)
    if strategy == "suggestions":
        raise ConfigError(
            f"init strategy 'suggestions' needs {n_init} suggested sets, "
            f"got {len(chosen)}"
        )
    if strategy == "random":
        fill = _random_fill(space, need, chosen, rng)
    elif strategy == "latin-hypercube":
        fill = _latin_hypercube_fill(space, need, chosen, rng)
    else:
        fill = _sobol_fill(space, need, chosen, rng)
    return chosen + fill


def _random_fill(
    space: ParameterSpace, need: int, taken: Sequence[int], rng: np.random.Generator
) -> list[int]:
    unused = np.array([i for i in range(space.n_sets) if i not in set(taken)])
    picked = rng.choice(unused, size=need, replace=False)
    return [int(i) for i in picked]


def _latin_hypercube_fill(
    space: ParameterSpace, need: int, taken: Sequence[int], rng: np.random.Generator
) -> list[int]:
    # One stratum per sample and dimension; a permutation decouples the
    # strata across dimensions.
    per_dim = []
    for size in space.sizes:
        u = (np.arange(need) + rng.random(need)) / need
        cells = np.minimum((u * size).astype(int), size - 1)
        per_dim.append(rng.permutation(cells))
    candidates = [
        int(np.ravel_multi_index(tuple(int(per_dim[d][k]) for d in range(space.dimension)),
                                 space.sizes))
        for k in range(need)
    ]
    return _dedupe_fill(space, need, taken, candidates, rng)


def _sobol_fill(
    space: ParameterSpace, need: int, taken: Sequence[int], rng: np.random.Generator
) -> list[int]:
    from scipy.stats import qmc

    sampler = qmc.Sobol(d=space.dimension, scramble=True, seed=rng)
    candidates: list[int] = []
    draw = max(need, 4)
    for _ in range(8):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            points = sampler.random(draw)
        for row in points:
            cell = tuple(
                min(int(row[d] * space.sizes[d]), space.sizes[d] - 1)
                for d in range(space.dimension)
            )
            candidates.append(int(np.ravel_multi_index(cell, space.sizes)))
        unique_new = [c for c in dict.fromkeys(candidates) if c not in set(taken)]
        if len(unique_new) >= need:
            break
        draw *= 2
    return _dedupe_fill(space, need, taken, candidates, rng)


def _dedupe_fill(
    space: ParameterSpace,
    need: int,
    taken: Sequence[int],
    candidates: Sequence[int],
    rng: np.random.Generator,
) -> list[int]:
    seen = set(taken)
    out: list[int] = []
    for c in candidates:
        if c not in seen:
            seen.add(c)
            out.append(c)
        if len(out) == need:
            return out
    remainder = _random_fill(space, need - len(out), sorted(seen), rng)
    return out + remainder


def filter_satisfying(
    observed_sets: Sequence[int],
    constraint_medians: Mapping[str, Mapping[int, float]],
    canonical: CanonicalForm,
    n_sets: int,
) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
    """Split the space into candidate pools based on constraint medians.

    ``constraint_medians`` holds per-set medians of the already-canonical
    constraint values. Returns (optimistic candidates, observed
    satisfying, observed violating); never-observed sets count as
    satisfying so exploration is not starved before coverage.
    """
    observed = set(int(i) for i in observed_sets)
    satisfying = []
    violating = []
    for idx in sorted(observed):
        ok = all(
            constraint_medians[c.metric][idx] <= c.bound
            for c in canonical.constraints
        )
        (satisfying if ok else violating).append(idx)
    optimistic = [i for i in range(n_sets) if i not in observed] + satisfying
    return tuple(sorted(optimistic)), tuple(satisfying), tuple(violating)


def current_best(
    satisfying: Sequence[int],
    goal_medians: Mapping[int, float],
    counts: Mapping[int, int],
    previous_reported: int | None,
) -> tuple[int | None, int | None]:
    """Best-median satisfying set, and the sticky reported best.

    The reported best only moves to a new set when that set has at least
    as many test results as the current reported one, preventing outlier-
    driven flapping.
    """
    best = None
    best_value = math.inf
    for idx in satisfying:
        value = goal_medians[idx]
        if value < best_value:
            best, best_value = idx, value
    if best is None:
        return None, previous_reported
    reported = previous_reported
    if reported is None or best == reported:
        reported = best
    elif counts.get(best, 0) >= counts.get(reported, 0):
        reported = best
    return best, reported


@dataclass
class Analysis:
    """Everything derived from the observation prefix after one trial."""

    n: int
    kappa: float
    goal_model: GPModel
    constraint_models: dict[str, GPModel]
    goal_mean: np.ndarray
    goal_std: np.ndarray
    counts: dict[int, int]
    goal_medians: dict[int, float]
    d_n: tuple[int, ...]
    d_satisfying: tuple[int, ...]
    d_violating: tuple[int, ...]
    best_index: int | None
    best_value: float | None
    reported_index: int | None
    reported_goal_median: float | None
    f_c_plus: dict[str, float]
    goal_range: float
    tau: float
    cumulative: float
    theta: float
    alpha: float
    alpha_b1: float
    alpha_b2: float
    beta: float

    @property
    def f_best(self) -> float:
        """Improvement baseline for EI and the escape metric."""
        if self.best_value is not None:
            return self.best_value
        if self.goal_medians:
            return min(self.goal_medians.values())
        return 0.0


class AnalysisState:
    """Incremental per-trial analysis over a growing observation list."""

    def __init__(
        self,
        space: ParameterSpace,
        requirement: Requirement | CanonicalForm,
        delta: float = 0.1,
        kernel: KernelConfig = KernelConfig(),
    ):
        self.space = space
        self.canonical = canonicalize(requirement)
        self.delta = delta
        self.kernel = kernel
        self._set_indices: list[int] = []
        self._goal_values: list[float] = []
        self._constraint_values: dict[str, list[float]] = {
            c.metric: [] for c in self.canonical.constraints
        }
        self._raw_goal_by_set: dict[int, list[float]] = {}
        self._goal_by_set: dict[int, list[float]] = {}
        self._constraints_by_set: dict[str, dict[int, list[float]]] = {
            c.metric: {} for c in self.canonical.constraints
        }
        self._raw_constraints_by_set: dict[str, dict[int, list[float]]] = {
            c.metric: {} for c in self.canonical.constraints
        }
        self._goal_medians: dict[int, float] = {}
        self._constraint_medians: dict[str, dict[int, float]] = {
            c.metric: {} for c in self.canonical.constraints
        }
        self._counts: dict[int, int] = {}
        self.trace = confidence.SuboptimalityTrace()
        self._best_history: list[tuple[int, float] | None] = []
        self._reported: int | None = None
        self.last: Analysis | None = None

    def update(self, obs: Observation) -> Analysis:
        idx = obs.set_index
        goal_raw = obs.metrics[self.canonical.goal_metric]
        goal_canon = self.canonical.goal_sign * goal_raw
        self._set_indices.append(idx)
        self._goal_values.append(goal_canon)
        self._raw_goal_by_set.setdefault(idx, []).append(goal_raw)
        self._goal_by_set.setdefault(idx, []).append(goal_canon)
        self._counts[idx] = self._counts.get(idx, 0) + 1
        self._goal_medians[idx] = float(np.median(self._goal_by_set[idx]))
        for c in self.canonical.constraints:
            raw = obs.metrics[c.metric]
            canon = c.canonical_value(raw)
            self._constraint_values[c.metric].append(canon)
            self._constraints_by_set[c.metric].setdefault(idx, []).append(canon)
            self._raw_constraints_by_set[c.metric].setdefault(idx, []).append(raw)
            self._constraint_medians[c.metric][idx] = float(
                np.median(self._constraints_by_set[c.metric][idx])
            )
        n = len(self._set_indices)

        targets = {"goal": self._goal_values}
        for metric, values in self._constraint_values.items():
            targets[f"c:{metric}"] = values
        models = surrogate.fit_many_xy(
            self.space, self._set_indices, targets, self.kernel
        )
        goal_model = models["goal"]
        constraint_models = {
            c.metric: models[f"c:{c.metric}"] for c in self.canonical.constraints
        }
        goal_mean, goal_var = goal_model.predict_all()
        goal_std = np.sqrt(np.maximum(goal_var, 0.0))

        d_n, d_sat, d_vio = filter_satisfying(
            sorted(self._counts),
            self._constraint_medians,
            self.canonical,
            self.space.n_sets,
        )
        best, reported = current_best(
            d_sat, self._goal_medians, self._counts, self._reported
        )
        self._reported = reported
        best_value = self._goal_medians[best] if best is not None else None

        kappa_n = confidence.kappa(n, self.space.n_sets, self.delta)
        if best is not None and d_n:
            cand = np.asarray(d_n, dtype=int)
            floor = float(np.min(goal_mean[cand] - kappa_n * goal_std[cand]))
            tau = best_value - floor
        else:
            tau = None
        tau = self.trace.record(tau)
        alpha, theta = confidence.optimality_alpha(self.trace)

        goal_range = (
            max(self._goal_values) - min(self._goal_values)
            if len(self._goal_values) > 1
            else 0.0
        )
        prev = self._best_history[-1] if self._best_history else None
        if best is not None and prev is not None:
            a_b1 = confidence.alpha_b1(best_value, prev[1], goal_range)
            a_b2 = confidence.alpha_b2(a_b1, self.space, best, prev[0])
        else:
            a_b1 = 0.0
            a_b2 = 0.0
        self._best_history.append((best, best_value) if best is not None else None)

        beta = self._beta(reported)
        f_c_plus = {
            c.metric: max(min(self._constraint_values[c.metric]), c.bound)
            for c in self.canonical.constraints
        }
        reported_goal_median = (
            float(np.median(self._raw_goal_by_set[reported]))
            if reported is not None
            else None
        )

        self.last = Analysis(
            n=n,
            kappa=kappa_n,
            goal_model=goal_model,
            constraint_models=constraint_models,
            goal_mean=goal_mean,
            goal_std=goal_std,
            counts=dict(self._counts),
            goal_medians=dict(self._goal_medians),
            d_n=d_n,
            d_satisfying=d_sat,
            d_violating=d_vio,
            best_index=best,
            best_value=best_value,
            reported_index=reported,
            reported_goal_median=reported_goal_median,
            f_c_plus=f_c_plus,
            goal_range=goal_range,
            tau=tau,
            cumulative=self.trace.cumulative[-1],
            theta=theta,
            alpha=alpha,
            alpha_b1=a_b1,
            alpha_b2=a_b2,
            beta=beta,
        )
        return self.last

    def _beta(self, reported: int | None) -> float:
        if reported is None:
            return 0.0
        if not self.canonical.constraints:
            return 1.0
        betas = []
        for c in self.canonical.constraints:
            values = self._raw_constraints_by_set[c.metric].get(reported, [])
            if not values:
                return 0.0
            betas.append(confidence.robustness_beta(values, c))
        return min(betas)

    def reward(self, obs: Observation) -> float:
        """RL reward: negated canonical goal, minus a range-scaled penalty
        when the observation violates any constraint."""
        goal = self.canonical.goal_sign * obs.metrics[self.canonical.goal_metric]
        violated = any(
            not c.satisfied(obs.metrics[c.metric])
            for c in self.canonical.constraints
        )
        penalty = self.last.goal_range if self.last is not None else 0.0
        return -goal - (penalty if violated else 0.0)


@dataclass
class TrialLogEntry:
    n: int
    set_index: int
    selected_by: str
    trap: bool
    escape_mode: str | None
    metrics: dict[str, float]
    tau: float
    cumulative: float
    theta: float
    alpha: float
    alpha_b1: float
    alpha_b2: float
    beta: float
    best_index: int | None
    reported_index: int | None
    reported_goal_median: float | None


@dataclass
class RunResult:
    best_index: int | None
    best_set: ParameterSet | None
    alpha: float
    beta: float
    history: History
    trials: list[TrialLogEntry]
    terminated_by: str
    aborted: bool = False
    error: str | None = None

    @property
    def n_trials(self) -> int:
        return len(self.trials)


@dataclass
class _Choice:
    index: int
    selected_by: str
    trap: bool = False
    escape_mode: str | None = None


class Engine:
    """One optimization run: config + executor -> RunResult."""

    def __init__(self, config: EngineConfig, executor):
        self.config = config
        self.executor = executor
        self.space = config.space
        self.canonical = canonicalize(config.requirement)
        self.rng = np.random.default_rng([config.seed, 0])
        self.history = History(required_metrics=config.requirement.metric_names)
        self.analysis = AnalysisState(
            self.space, self.canonical, config.delta, config.kernel
        )
        self.nts_state = acquisition.NtsState()
        self.trials: list[TrialLogEntry] = []
        self._selector = self._build_selector()

    # -- selector wiring ---------------------------------------------------

    def _build_selector(self):
        kind = self.config.selector
        if kind in ("gp-lcb", "ei"):
            return _ApexDriver(kind)
        if kind == "gel":
            return _GelDriver()
        if kind == "ger":
            return _GerDriver(baselines.GerSchedule(self.space, self.config.seed))
        if kind == "guc":
            return _GucDriver()
        policy_cls = (
            baselines.RlStepPolicy if kind == "rl-step" else baselines.RlAnyPolicy
        )
        policy = policy_cls(
            self.space,
            self.rng,
            epsilon=self.config.rl_epsilon,
            learning_rate=self.config.rl_learning_rate,
            discount=self.config.rl_discount,
        )
        return _RlDriver(policy, kind)

    # -- run loop ----------------------------------------------------------

    def run(self) -> RunResult:
        try:
            self._initial_phase()
            while self._termination_reason() is None:
                choice = self._select_next()
                self._execute(choice)
        except ExecutorError as e:
            return self._result("executor-error", aborted=True, error=str(e))
        return self._result(self._termination_reason() or "max_trials")

    def _initial_phase(self) -> None:
        indices = initial_sample(
            self.space,
            self.config.n_init,
            self.config.init_strategy,
            self.config.suggestions,
            self.rng,
        )
        for idx in indices:
            if self._termination_reason() is not None:
                return
            excluded = self.executor.unavailable_sets()
            if idx in excluded:
                pool = [i for i in range(self.space.n_sets) if i not in excluded]
                if not pool:
                    raise DatasetExhausted("no sets available for initial sampling")
                idx = int(pool[self.rng.integers(len(pool))])
            self._execute(_Choice(index=idx, selected_by="init"))

    def _termination_reason(self) -> str | None:
        term = self.config.termination
        n = len(self.history)
        if n == 0:
            return None
        if term.max_trials is not None and n >= term.max_trials:
            return "max_trials"
        last = self.analysis.last
        if (
            term.alpha_target is not None
            and last is not None
            and last.alpha >= term.alpha_target
        ):
            return "alpha_target"
        beta_target = self.config.effective_beta_target
        if beta_target is not None and last is not None and last.beta >= beta_target:
            return "beta_target"
        return None

    def _select_next(self) -> _Choice:
        excluded = set(self.executor.unavailable_sets())
        for _ in range(self.space.n_sets + 2):
            if len(excluded) >= self.space.n_sets:
                raise DatasetExhausted("no selectable parameter set remains")
            choice = self._selector.choose(self, self.analysis.last, frozenset(excluded))
            if choice.index not in excluded:
                return choice
            excluded.add(choice.index)
        raise DatasetExhausted("no selectable parameter set remains")

    def _execute(self, choice: _Choice) -> None:
        trial_index = len(self.history) + 1
        obs = None
        for _ in range(self.space.n_sets + 2):
            try:
                obs = self.executor.run_trial(choice.index, trial_index)
                break
            except SetExhausted:
                # Rare (unavailable_sets is consulted first): re-select,
                # which now sees the exhausted set as unavailable.
                choice = self._select_next()
        if obs is None:
            raise DatasetExhausted("no selectable parameter set remains")
        self.history.append(obs)
        analysis = self.analysis.update(obs)
        self._selector.notify(self, obs)
        self.trials.append(
            TrialLogEntry(
                n=trial_index,
                set_index=obs.set_index,
                selected_by=choice.selected_by,
                trap=choice.trap,
                escape_mode=choice.escape_mode,
                metrics=dict(obs.metrics),
                tau=analysis.tau,
                cumulative=analysis.cumulative,
                theta=analysis.theta,
                alpha=analysis.alpha,
                alpha_b1=analysis.alpha_b1,
                alpha_b2=analysis.alpha_b2,
                beta=analysis.beta,
                best_index=analysis.best_index,
                reported_index=analysis.reported_index,
                reported_goal_median=analysis.reported_goal_median,
            )
        )

    def _result(self, terminated_by: str, aborted: bool = False,
                error: str | None = None) -> RunResult:
        last = self.analysis.last
        reported = last.reported_index if last is not None else None
        return RunResult(
            best_index=reported,
            best_set=self.space.set_at(reported) if reported is not None else None,
            alpha=last.alpha if last is not None else 0.0,
            beta=last.beta if last is not None else 0.0,
            history=self.history,
            trials=self.trials,
            terminated_by=terminated_by,
            aborted=aborted,
            error=error,
        )

    # -- helpers shared by the drivers --------------------------------------

    def random_open_set(self, excluded: frozenset[int]) -> int:
        pool = [i for i in range(self.space.n_sets) if i not in excluded]
        if not pool:
            raise DatasetExhausted("no selectable parameter set remains")
        return int(pool[self.rng.integers(len(pool))])


class _ApexDriver:
    """GP-LCB / EI selection with trap detection and escapes."""

    def __init__(self, kind: str):
        self.kind = kind  # "gp-lcb" or "ei"

    def choose(self, eng: Engine, analysis: Analysis, excluded: frozenset[int]) -> _Choice:
        pool = np.array([i for i in analysis.d_n if i not in excluded], dtype=int)
        if pool.size == 0:
            return self._fallback(eng, analysis, excluded)
        mean = analysis.goal_mean[pool]
        std = analysis.goal_std[pool]
        if self.kind == "gp-lcb":
            pos = int(np.argmin(acquisition.lcb_values(mean, std, analysis.kappa)))
            sel = int(pool[pos])
            score = acquisition.coefficient_of_variation(mean[pos], std[pos])
            eng.nts_state.observe_cv(score)
            trapped = acquisition.detect_trap(eng.nts_state, score, "cv")
        else:
            ei = acquisition.ei_values(mean, std, analysis.f_best)
            pos = int(np.argmax(ei))
            sel = int(pool[pos])
            score = float(ei[pos])
            eng.nts_state.observe_ei(score)
            trapped = acquisition.detect_trap(eng.nts_state, score, "ei")
        if not trapped:
            return _Choice(index=sel, selected_by=self.kind)
        mode = eng.nts_state.next_escape()
        if mode == acquisition.ESCAPE_GOAL:
            sel = acquisition.escape_goal_outlier(
                analysis.counts,
                pool,
                lambda sub: self._reselect(analysis, np.asarray(sub, dtype=int)),
            )
            return _Choice(sel, f"escape:{mode}", trap=True, escape_mode=mode)
        d_prime = [i for i in analysis.d_violating if i not in excluded]
        if d_prime and analysis.constraint_models:
            sel = acquisition.escape_constraint(
                analysis.goal_model,
                analysis.constraint_models,
                d_prime,
                analysis.f_c_plus,
                analysis.f_best,
                analysis.kappa,
            )
            return _Choice(sel, f"escape:{mode}", trap=True, escape_mode=mode)
        # Nothing currently violates: keep the unrestricted selection.
        return _Choice(sel, self.kind, trap=True, escape_mode=mode)

    def _reselect(self, analysis: Analysis, pool: np.ndarray) -> int:
        mean = analysis.goal_mean[pool]
        std = analysis.goal_std[pool]
        if self.kind == "gp-lcb":
            return int(pool[np.argmin(acquisition.lcb_values(mean, std, analysis.kappa))])
        return int(pool[np.argmax(acquisition.ei_values(mean, std, analysis.f_best))])

    def _fallback(self, eng: Engine, analysis: Analysis, excluded: frozenset[int]) -> _Choice:
        d_prime = [i for i in analysis.d_violating if i not in excluded]
        if d_prime and analysis.constraint_models:
            sel = acquisition.escape_constraint(
                analysis.goal_model,
                analysis.constraint_models,
                d_prime,
                analysis.f_c_plus,
                analysis.f_best,
                analysis.kappa,
            )
            return _Choice(sel, "escape:constraint-noise",
                           escape_mode=acquisition.ESCAPE_CONSTRAINT)
        return _Choice(eng.random_open_set(excluded), "random")

    def notify(self, eng: Engine, obs: Observation) -> None:
        pass


class _GelDriver:
    def choose(self, eng: Engine, analysis: Analysis, excluded: frozenset[int]) -> _Choice:
        g_n = baselines.SurrogateLite.fit(eng.space, analysis.goal_medians)
        pool = [i for i in analysis.d_satisfying if i not in excluded]
        fallback = [i for i in range(eng.space.n_sets) if i not in excluded]
        sel = baselines.gel_select(g_n, pool, eng.rng, fallback)
        return _Choice(sel, "gel")

    def notify(self, eng: Engine, obs: Observation) -> None:
        pass


class _GerDriver:
    def __init__(self, schedule: baselines.GerSchedule):
        self.schedule = schedule

    def choose(self, eng: Engine, analysis: Analysis, excluded: frozenset[int]) -> _Choice:
        return _Choice(self.schedule.select(excluded), "ger")

    def notify(self, eng: Engine, obs: Observation) -> None:
        pass


class _GucDriver:
    def choose(self, eng: Engine, analysis: Analysis, excluded: frozenset[int]) -> _Choice:
        g_n = baselines.SurrogateLite.fit(eng.space, analysis.goal_medians)
        pool = [i for i in analysis.d_n if i not in excluded]
        sel = baselines.guc_select(analysis.counts, g_n, pool, eng.space, eng.rng)
        return _Choice(sel, "guc")

    def notify(self, eng: Engine, obs: Observation) -> None:
        pass


class _RlDriver:
    def __init__(self, policy: baselines._RlPolicy, name: str):
        self.policy = policy
        self.name = name

    def choose(self, eng: Engine, analysis: Analysis, excluded: frozenset[int]) -> _Choice:
        state = self.policy.state
        if state is None:
            state = eng.history.observations[-1].set_index
        return _Choice(self.policy.propose(state, excluded), self.name)

    def notify(self, eng: Engine, obs: Observation) -> None:
        self.policy.update(eng.analysis.reward(obs), obs.set_index)


def reanalyze(
    space: ParameterSpace,
    requirement: Requirement | CanonicalForm,
    observations: Sequence[Observation],
    delta: float = 0.1,
    kernel: KernelConfig = KernelConfig(),
) -> list[Analysis]:
    """Recompute the per-trial analysis from a persisted observation log.

    The confidence values are pure functions of the observation prefix,
    so this reproduces the original run's alpha/beta/best sequences.
    """
    state = AnalysisState(space, requirement, delta, kernel)
    return [state.update(obs) for obs in observations]
