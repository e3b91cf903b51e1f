"""Command-line front end.

Subcommands:

* ``optimize``: one optimization run from a YAML config; writes a JSON
  run result and a per-trial CSV log.
* ``campaign``: repeated seeded runs over a replay dataset or synthetic
  landscape; writes a JSON summary and per-trial CSV curves.
* ``validate-dataset``: coverage / record-count / metric checks on a
  trace dataset file.

Exit codes: 0 ok, 2 config error, 3 executor error, 4 unsatisfiable
termination criteria. All randomness flows from the configured seed, so
outputs are byte-identical across reruns of the same config.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from apexopt import evalharness
from apexopt.domain import (
    ConfigError,
    ConstraintSpec,
    MetricSpec,
    Observation,
    ParameterDef,
    ParameterSet,
    ParameterSpace,
    Requirement,
    TerminationCriteria,
    UnsatisfiableTerminationError,
)
from apexopt.engine import Engine, EngineConfig, RunResult, reanalyze
from apexopt.evalharness import CampaignSpec, run_campaign
from apexopt.executor import (
    ExecutorError,
    RemoteConfig,
    RemoteExecutor,
    ReplayExecutor,
    SyntheticExecutor,
    SyntheticSpec,
    load_dataset,
    validate_dataset,
)
from apexopt.surrogate import KernelConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EXECUTOR = 3
EXIT_UNSATISFIABLE = 4

_EXPR_NAMES = {
    "abs": abs,
    "min": min,
    "max": max,
    "pi": math.pi,
    "e": math.e,
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "log2": math.log2,
    "sqrt": math.sqrt,
}


# -- schema helpers ---------------------------------------------------------

def _fail(path: str, reason: str) -> None:
    raise ConfigError(f"{path}: {reason}")


def _as_mapping(obj: Any, path: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        _fail(path, f"expected a mapping, got {type(obj).__name__}")
    return obj


def _check_keys(d: Mapping, allowed: Sequence[str], path: str) -> None:
    unknown = [k for k in d if k not in allowed]
    if unknown:
        _fail(f"{path}.{unknown[0]}", f"unknown key (allowed: {sorted(allowed)})")


def _get(d: Mapping, key: str, path: str, kind, default=None, required=False):
    if key not in d or d[key] is None:
        if required:
            _fail(f"{path}.{key}", "required key is missing")
        return default
    value = d[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind):
        _fail(f"{path}.{key}", f"expected {kind.__name__}, got {type(value).__name__}")
    return value


# -- config model -------------------------------------------------------------

class ConfigBundle:
    """Everything parsed from one YAML file."""

    def __init__(
        self,
        path: Path,
        space: ParameterSpace,
        requirement: Requirement,
        executor_block: dict,
        engine_block: dict,
        termination: TerminationCriteria,
        campaign_block: dict,
        output_dir: Path,
        protocol_name: str,
    ):
        self.path = path
        self.space = space
        self.requirement = requirement
        self.executor_block = executor_block
        self.engine_block = engine_block
        self.termination = termination
        self.campaign_block = campaign_block
        self.output_dir = output_dir
        self.protocol_name = protocol_name

    def engine_config(self, seed: int | None = None,
                      selector: str | None = None,
                      max_trials: int | None = None) -> EngineConfig:
        eng = dict(self.engine_block)
        if seed is not None:
            eng["seed"] = seed
        if selector is not None:
            eng["selector"] = selector
        termination = self.termination
        if max_trials is not None:
            termination = TerminationCriteria(
                max_trials=max_trials,
                alpha_target=termination.alpha_target,
                beta_target=termination.beta_target,
            )
        return EngineConfig(
            space=self.space,
            requirement=self.requirement,
            termination=termination,
            **eng,
        )

    def build_executor(self, seed: int):
        kind = self.executor_block["kind"]
        if kind == "replay":
            dataset = load_dataset(self.executor_block["path"], self.space)
            return ReplayExecutor(dataset, seed, self.requirement.metric_names)
        if kind == "synthetic":
            return SyntheticExecutor(self._synthetic_spec(), seed)
        return RemoteExecutor(self.executor_block["remote"], self.space)

    def _synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            space=self.space,
            metrics=dict(self.executor_block["metrics"]),
            noise_std=dict(self.executor_block["noise_std"]),
        )

    def campaign_spec(self, **overrides) -> CampaignSpec:
        blk = dict(self.campaign_block)
        blk.update({k: v for k, v in overrides.items() if v is not None})
        kind = self.executor_block["kind"]
        if kind == "replay":
            dataset = load_dataset(self.executor_block["path"], self.space)
            source = {"dataset": dataset}
        elif kind == "synthetic":
            source = {"synthetic": self._synthetic_spec()}
        else:
            raise ConfigError(
                "campaign: executor.kind must be 'replay' or 'synthetic'"
            )
        eng = self.engine_block
        return CampaignSpec(
            requirement=self.requirement,
            approach=blk.get("approach", eng.get("selector", "gp-lcb")),
            iterations=blk.get("iterations", 1000),
            max_trials=blk.get("max_trials"),
            base_seed=blk.get("base_seed", eng.get("seed", 0)),
            n_init=eng.get("n_init", 6),
            init_strategy=eng.get("init_strategy", "random"),
            suggestions=eng.get("suggestions", ()),
            delta=eng.get("delta", 0.1),
            kernel=eng.get("kernel", KernelConfig()),
            bins=blk.get("bins", 20),
            jobs=blk.get("jobs", 1),
            rl_epsilon=eng.get("rl_epsilon", 0.05),
            rl_learning_rate=eng.get("rl_learning_rate", 0.1),
            rl_discount=eng.get("rl_discount", 0.9),
            **source,
        )


def parse_config(path: str | Path) -> ConfigBundle:
    """Load and strictly validate a YAML configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from None
    root = _as_mapping(raw, str(path))
    _check_keys(
        root,
        ["protocol", "requirement", "executor", "engine", "termination",
         "campaign", "output"],
        "config",
    )

    protocol = _as_mapping(root.get("protocol"), "protocol")
    _check_keys(protocol, ["name", "parameters"], "protocol")
    params = protocol.get("parameters")
    if not isinstance(params, list) or not params:
        _fail("protocol.parameters", "expected a non-empty list")
    defs = []
    for i, p in enumerate(params):
        p = _as_mapping(p, f"protocol.parameters[{i}]")
        _check_keys(p, ["name", "values", "unit", "scale"], f"protocol.parameters[{i}]")
        name = _get(p, "name", f"protocol.parameters[{i}]", str, required=True)
        values = _get(p, "values", f"protocol.parameters[{i}]", list, required=True)
        defs.append(
            ParameterDef(
                name=name,
                values=tuple(values),
                unit=_get(p, "unit", f"protocol.parameters[{i}]", str, ""),
                scale=_get(p, "scale", f"protocol.parameters[{i}]", str, "linear"),
            )
        )
    space = ParameterSpace(defs)

    req_block = _as_mapping(root.get("requirement"), "requirement")
    _check_keys(req_block, ["goal", "constraints", "confidence_target"], "requirement")
    goal_block = _as_mapping(req_block.get("goal"), "requirement.goal")
    _check_keys(goal_block, ["metric", "direction", "unit"], "requirement.goal")
    goal = MetricSpec(
        name=_get(goal_block, "metric", "requirement.goal", str, required=True),
        direction=_get(goal_block, "direction", "requirement.goal", str, required=True),
        unit=_get(goal_block, "unit", "requirement.goal", str, ""),
    )
    constraints = []
    for i, c in enumerate(req_block.get("constraints") or []):
        cpath = f"requirement.constraints[{i}]"
        c = _as_mapping(c, cpath)
        _check_keys(c, ["metric", "relation", "bound", "percentile"], cpath)
        constraints.append(
            ConstraintSpec(
                metric=_get(c, "metric", cpath, str, required=True),
                relation=_get(c, "relation", cpath, str, required=True),
                bound=_get(c, "bound", cpath, float, required=True),
                percentile=_get(c, "percentile", cpath, float, 0.5),
            )
        )
    _check_constraint_consistency(constraints)
    requirement = Requirement(
        goal=goal,
        constraints=tuple(constraints),
        confidence_target=_get(req_block, "confidence_target", "requirement", float),
    )

    executor_block = _parse_executor(
        _as_mapping(root.get("executor"), "executor"), path.parent, space
    )
    engine_block = _parse_engine(_as_mapping(root.get("engine"), "engine"), space)
    termination = _parse_termination(_as_mapping(root.get("termination"), "termination"))
    campaign_block = _parse_campaign(_as_mapping(root.get("campaign"), "campaign"))

    output = _as_mapping(root.get("output"), "output")
    _check_keys(output, ["dir"], "output")
    output_dir = Path(_get(output, "dir", "output", str, "results"))

    return ConfigBundle(
        path=path,
        space=space,
        requirement=requirement,
        executor_block=executor_block,
        engine_block=engine_block,
        termination=termination,
        campaign_block=campaign_block,
        output_dir=output_dir,
        protocol_name=_get(protocol, "name", "protocol", str, ""),
    )


def _check_constraint_consistency(constraints: Sequence[ConstraintSpec]) -> None:
    """Reject constraint pairs on one metric that no value can satisfy."""
    lower: dict[str, float] = {}
    upper: dict[str, float] = {}
    for c in constraints:
        if c.relation == ">=":
            lower[c.metric] = max(lower.get(c.metric, -math.inf), c.bound)
        else:
            upper[c.metric] = min(upper.get(c.metric, math.inf), c.bound)
    for metric in set(lower) & set(upper):
        if lower[metric] > upper[metric]:
            _fail(
                "requirement.constraints",
                f"metric {metric!r} requires >= {lower[metric]} and "
                f"<= {upper[metric]} simultaneously",
            )


def _parse_executor(block: Mapping, base_dir: Path, space: ParameterSpace) -> dict:
    _check_keys(block, ["kind", "replay", "synthetic", "remote"], "executor")
    kind = _get(block, "kind", "executor", str, required=True)
    if kind == "replay":
        replay = _as_mapping(block.get("replay"), "executor.replay")
        _check_keys(replay, ["path"], "executor.replay")
        rel = _get(replay, "path", "executor.replay", str, required=True)
        dataset_path = Path(rel)
        if not dataset_path.is_absolute():
            dataset_path = base_dir / dataset_path
        return {"kind": "replay", "path": dataset_path}
    if kind == "synthetic":
        synth = _as_mapping(block.get("synthetic"), "executor.synthetic")
        _check_keys(synth, ["metrics", "noise_std"], "executor.synthetic")
        metrics_block = _as_mapping(synth.get("metrics"), "executor.synthetic.metrics")
        if not metrics_block:
            _fail("executor.synthetic.metrics", "at least one metric is required")
        tables = {}
        for name, m in metrics_block.items():
            mpath = f"executor.synthetic.metrics.{name}"
            m = _as_mapping(m, mpath)
            _check_keys(m, ["table", "expression"], mpath)
            if ("table" in m) == ("expression" in m):
                _fail(mpath, "specify exactly one of 'table' or 'expression'")
            if "table" in m:
                table = np.asarray(m["table"], dtype=float)
            else:
                table = _evaluate_expression(m["expression"], space, mpath)
            tables[name] = table
        noise = _as_mapping(synth.get("noise_std"), "executor.synthetic.noise_std")
        noise_std = {}
        for name, std in noise.items():
            if name not in tables:
                _fail(f"executor.synthetic.noise_std.{name}", "unknown metric")
            noise_std[name] = float(std)
        return {"kind": "synthetic", "metrics": tables, "noise_std": noise_std}
    if kind == "remote":
        remote = _as_mapping(block.get("remote"), "executor.remote")
        _check_keys(
            remote,
            ["endpoint", "poll_interval", "trial_duration", "timeout", "http_timeout"],
            "executor.remote",
        )
        cfg = RemoteConfig(
            endpoint=_get(remote, "endpoint", "executor.remote", str, required=True),
            poll_interval=_get(remote, "poll_interval", "executor.remote", float, 5.0),
            trial_duration=_get(remote, "trial_duration", "executor.remote", float, 600.0),
            timeout=_get(remote, "timeout", "executor.remote", float),
            http_timeout=_get(remote, "http_timeout", "executor.remote", float, 30.0),
        )
        return {"kind": "remote", "remote": cfg}
    _fail("executor.kind", f"must be 'replay', 'synthetic', or 'remote', got {kind!r}")


def _evaluate_expression(expr: str, space: ParameterSpace, path: str) -> np.ndarray:
    """Materialize an expression over normalized coordinates into a table.

    The expression sees ``z`` (the normalized coordinate vector) plus basic
    math names; it is evaluated once per parameter set at config time.
    """
    if not isinstance(expr, str):
        _fail(path, "expression must be a string")
    try:
        code = compile(expr, path, "eval")
        values = [
            float(eval(code, {"__builtins__": {}}, {**_EXPR_NAMES, "z": space.normalized(i)}))
            for i in range(space.n_sets)
        ]
    except Exception as e:
        _fail(path, f"expression failed to evaluate: {e}")
    return np.asarray(values, dtype=float)


def _parse_engine(block: Mapping, space: ParameterSpace) -> dict:
    _check_keys(
        block,
        ["selector", "n_init", "init_strategy", "suggestions", "delta", "kernel",
         "seed", "rl_epsilon", "rl_learning_rate", "rl_discount"],
        "engine",
    )
    out = {
        "selector": _get(block, "selector", "engine", str, "gp-lcb"),
        "n_init": _get(block, "n_init", "engine", int, 6),
        "init_strategy": _get(block, "init_strategy", "engine", str, "random"),
        "delta": _get(block, "delta", "engine", float, 0.1),
        "seed": _get(block, "seed", "engine", int, 0),
        "rl_epsilon": _get(block, "rl_epsilon", "engine", float, 0.05),
        "rl_learning_rate": _get(block, "rl_learning_rate", "engine", float, 0.1),
        "rl_discount": _get(block, "rl_discount", "engine", float, 0.9),
    }
    suggestions = []
    for i, s in enumerate(block.get("suggestions") or []):
        if not isinstance(s, list):
            _fail(f"engine.suggestions[{i}]", "expected a list of parameter values")
        pset = ParameterSet(tuple(s))
        space.index_of(pset)  # validates membership
        suggestions.append(pset)
    out["suggestions"] = tuple(suggestions)
    kernel = _as_mapping(block.get("kernel"), "engine.kernel")
    _check_keys(
        kernel,
        ["kind", "length_scale", "signal_variance", "noise_variance", "jitter"],
        "engine.kernel",
    )
    out["kernel"] = KernelConfig(
        kind=_get(kernel, "kind", "engine.kernel", str, "rbf"),
        length_scale=_get(kernel, "length_scale", "engine.kernel", float, 1.0),
        signal_variance=_get(kernel, "signal_variance", "engine.kernel", float, 1.0),
        noise_variance=_get(kernel, "noise_variance", "engine.kernel", float, 0.1),
        jitter=_get(kernel, "jitter", "engine.kernel", float, 1e-8),
    )
    return out


def _parse_termination(block: Mapping) -> TerminationCriteria:
    _check_keys(block, ["max_trials", "alpha_target", "beta_target"], "termination")
    return TerminationCriteria(
        max_trials=_get(block, "max_trials", "termination", int),
        alpha_target=_get(block, "alpha_target", "termination", float),
        beta_target=_get(block, "beta_target", "termination", float),
    )


def _parse_campaign(block: Mapping) -> dict:
    _check_keys(
        block,
        ["approach", "iterations", "max_trials", "base_seed", "bins", "jobs"],
        "campaign",
    )
    out = {}
    for key, kind in [
        ("approach", str), ("iterations", int), ("max_trials", int),
        ("base_seed", int), ("bins", int), ("jobs", int),
    ]:
        value = _get(block, key, "campaign", kind)
        if value is not None:
            out[key] = value
    return out


# -- result serialization -----------------------------------------------------

def run_result_to_dict(result: RunResult, config: EngineConfig) -> dict:
    space = config.space
    req = config.requirement
    return {
        "schema_version": 1,
        "config": {
            "parameters": [
                {"name": d.name, "values": list(d.values), "unit": d.unit,
                 "scale": d.scale}
                for d in space.defs
            ],
            "requirement": {
                "goal": {"metric": req.goal.name, "direction": req.goal.direction,
                         "unit": req.goal.unit},
                "constraints": [
                    {"metric": c.metric, "relation": c.relation, "bound": c.bound,
                     "percentile": c.percentile}
                    for c in req.constraints
                ],
                "confidence_target": req.confidence_target,
            },
            "selector": config.selector,
            "n_init": config.n_init,
            "init_strategy": config.init_strategy,
            "delta": config.delta,
            "kernel": {
                "kind": config.kernel.kind,
                "length_scale": config.kernel.length_scale,
                "signal_variance": config.kernel.signal_variance,
                "noise_variance": config.kernel.noise_variance,
                "jitter": config.kernel.jitter,
            },
            "seed": config.seed,
            "termination": {
                "max_trials": config.termination.max_trials,
                "alpha_target": config.termination.alpha_target,
                "beta_target": config.termination.beta_target,
            },
        },
        "terminated_by": result.terminated_by,
        "aborted": result.aborted,
        "error": result.error,
        "n_trials": result.n_trials,
        "best": (
            {"index": result.best_index,
             "params": result.best_set.as_dict(space)}
            if result.best_index is not None
            else None
        ),
        "alpha": result.alpha,
        "beta": result.beta,
        "trials": [
            {
                "n": t.n,
                "set_index": t.set_index,
                "selected_by": t.selected_by,
                "trap": t.trap,
                "escape_mode": t.escape_mode,
                "metrics": t.metrics,
                "tau": t.tau,
                "cumulative": t.cumulative,
                "theta": t.theta,
                "alpha": t.alpha,
                "alpha_b1": t.alpha_b1,
                "alpha_b2": t.alpha_b2,
                "beta": t.beta,
                "best_index": t.best_index,
                "reported_index": t.reported_index,
                "reported_goal_median": t.reported_goal_median,
            }
            for t in result.trials
        ],
    }


def load_run_result(path: str | Path) -> dict:
    with Path(path).open("r", encoding="utf-8") as fh:
        return json.load(fh)


def reanalyze_run_file(path: str | Path) -> list:
    """Rebuild the per-trial analysis from a persisted run-result JSON."""
    doc = load_run_result(path)
    cfg = doc["config"]
    space = ParameterSpace(
        [ParameterDef(p["name"], tuple(p["values"]), p.get("unit", ""),
                      p.get("scale", "linear"))
         for p in cfg["parameters"]]
    )
    req_raw = cfg["requirement"]
    requirement = Requirement(
        goal=MetricSpec(req_raw["goal"]["metric"], req_raw["goal"]["direction"],
                        req_raw["goal"].get("unit", "")),
        constraints=tuple(
            ConstraintSpec(c["metric"], c["relation"], c["bound"], c["percentile"])
            for c in req_raw["constraints"]
        ),
        confidence_target=req_raw.get("confidence_target"),
    )
    kernel = KernelConfig(**cfg["kernel"])
    observations = [
        Observation(t["n"], t["set_index"], t["metrics"]) for t in doc["trials"]
    ]
    return reanalyze(space, requirement, observations, cfg["delta"], kernel)


def write_trials_csv(result: RunResult, config: EngineConfig, path: Path) -> None:
    space = config.space
    param_names = [d.name for d in space.defs]
    metric_names = list(config.requirement.metric_names)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["n", "set_index"]
            + [f"param:{p}" for p in param_names]
            + [f"metric:{m}" for m in metric_names]
            + ["selected_by", "trap", "escape_mode", "tau", "cumulative",
               "theta", "alpha", "alpha_b1", "alpha_b2", "beta",
               "best_index", "reported_index", "reported_goal_median"]
        )
        for t in result.trials:
            pset = space.set_at(t.set_index)
            writer.writerow(
                [t.n, t.set_index]
                + [v for v in pset.values]
                + [t.metrics.get(m, "") for m in metric_names]
                + [t.selected_by, int(t.trap), t.escape_mode or "",
                   f"{t.tau:.9g}", f"{t.cumulative:.9g}", f"{t.theta:.9g}",
                   f"{t.alpha:.9g}", f"{t.alpha_b1:.9g}", f"{t.alpha_b2:.9g}",
                   f"{t.beta:.12g}",
                   "" if t.best_index is None else t.best_index,
                   "" if t.reported_index is None else t.reported_index,
                   "" if t.reported_goal_median is None
                   else f"{t.reported_goal_median:.9g}"]
            )


# -- subcommands ---------------------------------------------------------------

def cmd_optimize(args: argparse.Namespace) -> int:
    bundle = parse_config(args.config)
    config = bundle.engine_config(
        seed=args.seed, selector=args.selector, max_trials=args.max_trials
    )
    executor = bundle.build_executor(config.seed)
    result = Engine(config, executor).run()
    out_dir = Path(args.out) if args.out else bundle.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "run_result.json").open("w", encoding="utf-8") as fh:
        json.dump(run_result_to_dict(result, config), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_trials_csv(result, config, out_dir / "trials.csv")
    if result.best_index is not None:
        best = result.best_set.as_dict(config.space)
        print(f"best set: {best} (index {result.best_index})")
    else:
        print("best set: none found")
    print(f"alpha: {result.alpha:.2f}")
    print(f"beta: {result.beta:.4f}")
    print(f"trials: {result.n_trials} (terminated by {result.terminated_by})")
    if result.aborted:
        print(f"run aborted: {result.error}", file=sys.stderr)
        return EXIT_EXECUTOR
    return EXIT_OK


def cmd_campaign(args: argparse.Namespace) -> int:
    bundle = parse_config(args.config)
    spec = bundle.campaign_spec(
        approach=args.approach,
        iterations=args.iterations,
        base_seed=args.seed,
        max_trials=args.max_trials,
        jobs=args.jobs,
    )
    result = run_campaign(spec)
    out_dir = Path(args.out) if args.out else bundle.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    evalharness.write_campaign_summary(result, spec, out_dir / "campaign_summary.json")
    evalharness.write_campaign_csv(result, out_dir / "campaign_trials.csv")
    print(f"approach: {result.approach}")
    print(f"iterations: {result.iterations} ok, {result.failures} failed")
    if result.ground_truth_index is not None:
        print(f"ground truth set index: {result.ground_truth_index}")
        print(f"EM1 (trials to 99% optimality): {result.em1}")
        print(f"EM2 (optimality @ {result.n_sets}): {result.em2}")
        print(f"EM3 (optimality @ {2 * result.n_sets}): {result.em3}")
        print(f"RMSD alpha vs optimality: {result.rmsd_alpha:.3f}")
    else:
        print("constraint-finding mode (no set satisfies the constraints)")
    print(f"constraint discovery 99% crossing: {result.constraint_crossing}")
    return EXIT_OK


def cmd_validate_dataset(args: argparse.Namespace) -> int:
    report = validate_dataset(args.path, n_r=args.n_r)
    for line in report.summary_lines():
        print(line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apex-opt",
        description="Constrained Bayesian optimization of noisy black-box systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="run one optimization")
    p_opt.add_argument("config", help="YAML configuration file")
    p_opt.add_argument("--seed", type=int, default=None,
                       help="override the configured seed")
    p_opt.add_argument("--selector", default=None,
                       help="override the configured selector")
    p_opt.add_argument("--max-trials", type=int, default=None,
                       help="override the configured trial budget")
    p_opt.add_argument("--out", default=None, help="output directory")
    p_opt.set_defaults(func=cmd_optimize)

    p_camp = sub.add_parser("campaign", help="run a repeated-seed evaluation")
    p_camp.add_argument("config", help="YAML configuration file")
    p_camp.add_argument("--approach", default=None,
                        help="apex-lcb | apex-ei | gel | ger | guc | rl-step | rl-any")
    p_camp.add_argument("--iterations", type=int, default=None)
    p_camp.add_argument("--seed", type=int, default=None,
                        help="override the campaign base seed")
    p_camp.add_argument("--max-trials", type=int, default=None)
    p_camp.add_argument("--jobs", type=int, default=None,
                        help="parallel iteration workers")
    p_camp.add_argument("--out", default=None, help="output directory")
    p_camp.set_defaults(func=cmd_campaign)

    p_val = sub.add_parser("validate-dataset", help="check a trace dataset file")
    p_val.add_argument("path", help="JSONL or CSV dataset")
    p_val.add_argument("--n-r", type=int, default=6,
                       help="target records per parameter set")
    p_val.set_defaults(func=cmd_validate_dataset)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UnsatisfiableTerminationError as e:
        print(f"unsatisfiable termination criteria: {e}", file=sys.stderr)
        return EXIT_UNSATISFIABLE
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ExecutorError as e:
        print(f"executor error: {e}", file=sys.stderr)
        return EXIT_EXECUTOR


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
