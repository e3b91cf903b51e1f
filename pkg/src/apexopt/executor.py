"""Trial execution backends.

Given a parameter set, produce one Observation. Three interchangeable
backends:

* replay: sample pre-recorded trial results for the requested set without
  replacement; once a set's records are used up it is exhausted and the
  engine must move on. Requests for sets that were never recorded are
  served by the nearest recorded set (consuming its budget).
* synthetic: deterministic landscape plus seeded Gaussian noise, keyed by
  (seed, trial index, metric) so metric streams are independent and runs
  are reproducible.
* remote: a blocking HTTP client for a job-queue style testbed API
  (POST /jobs, poll GET /jobs/{id}, fetch GET /jobs/{id}/metrics).

Dataset files are JSON Lines with a leading header object declaring the
parameter space, one record per line:

    {"header": {"parameters": [{"name": ..., "values": [...]}, ...],
                "metrics": ["energy", "prr"], "n_r": 6}}
    {"params": {"tx_power": -5, "n_tx": 1},
     "metrics": {"energy": 201.5, "prr": 71.2}, "run_id": "r0"}

CSV import is also accepted: a header row with ``param:<name>`` and
``metric:<name>`` columns plus an optional ``run_id`` column.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence, Union

import numpy as np
import requests

from apexopt.domain import (
    ConfigError,
    Observation,
    ParameterDef,
    ParameterSpace,
)


class ExecutorError(RuntimeError):
    """Base class for trial-execution failures (CLI exit code 3)."""

    retryable = False


class SetExhausted(ExecutorError):
    """All recorded trials of the requested set have been consumed."""

    def __init__(self, set_index: int):
        super().__init__(f"parameter set {set_index} is exhausted")
        self.set_index = set_index


class DatasetExhausted(ExecutorError):
    """No unconsumed record remains anywhere in the dataset."""


class RemoteProtocolError(ExecutorError):
    """HTTP-level failure talking to the testbed; safe to retry."""

    retryable = True


class JobFailedError(ExecutorError):
    """The testbed reported the job as failed; not retryable."""

    def __init__(self, job_id: str):
        super().__init__(f"testbed job {job_id} failed")
        self.job_id = job_id


class TrialTimeoutError(ExecutorError):
    """The job did not complete within the allotted time."""


class DatasetFormatError(ConfigError):
    """Unreadable or ill-formed dataset file (CLI exit code 2)."""


@dataclass(frozen=True)
class TraceRecord:
    run_id: str
    metrics: Mapping[str, float]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "metrics", {k: float(v) for k, v in self.metrics.items()}
        )


@dataclass
class TraceDataset:
    """Pre-recorded trial results grouped by parameter set."""

    space: ParameterSpace
    records_by_set: tuple[tuple[TraceRecord, ...], ...]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.records_by_set) != self.space.n_sets:
            raise DatasetFormatError(
                f"expected {self.space.n_sets} record groups, "
                f"got {len(self.records_by_set)}"
            )

    @property
    def n_records(self) -> int:
        return sum(len(r) for r in self.records_by_set)

    def counts(self) -> list[int]:
        return [len(r) for r in self.records_by_set]

    def metric_names(self) -> tuple[str, ...]:
        names: list[str] = []
        for group in self.records_by_set:
            for rec in group:
                for m in rec.metrics:
                    if m not in names:
                        names.append(m)
        return tuple(names)

    def values(self, set_index: int, metric: str) -> list[float]:
        return [r.metrics[metric] for r in self.records_by_set[set_index]]

    def median(self, set_index: int, metric: str) -> float:
        vals = self.values(set_index, metric)
        if not vals:
            raise ConfigError(f"set {set_index} has no records")
        return float(np.median(vals))


def _params_to_index(space: ParameterSpace, params: Mapping[str, float]) -> int:
    try:
        values = [params[d.name] for d in space.defs]
    except KeyError as e:
        raise DatasetFormatError(f"record missing parameter {e.args[0]!r}") from None
    return space.index_of(values)


def _space_from_header(header: Mapping) -> ParameterSpace:
    try:
        defs = [
            ParameterDef(
                name=p["name"],
                values=tuple(p["values"]),
                unit=p.get("unit", ""),
                scale=p.get("scale", "linear"),
            )
            for p in header["parameters"]
        ]
    except (KeyError, TypeError) as e:
        raise DatasetFormatError(f"malformed dataset header: {e}") from None
    return ParameterSpace(defs)


def load_dataset(
    path: Union[str, Path], space: ParameterSpace | None = None
) -> TraceDataset:
    """Load a JSONL or CSV trace dataset.

    An explicit ``space`` overrides the JSONL header; CSV files without an
    explicit space infer each parameter's value list from the distinct
    values present.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(f"dataset file not found: {path}")
    if path.suffix.lower() == ".csv":
        return _load_csv(path, space)
    return _load_jsonl(path, space)


def _load_jsonl(path: Path, space: ParameterSpace | None) -> TraceDataset:
    header = None
    rows: list[tuple[int, dict]] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(f"{path}:{line_no}: invalid JSON: {e}") from None
            if "header" in obj:
                if header is not None:
                    raise DatasetFormatError(f"{path}:{line_no}: duplicate header")
                header = obj["header"]
            else:
                rows.append((line_no, obj))
    if space is None:
        if header is None:
            raise DatasetFormatError(
                f"{path}: no header line and no explicit parameter space"
            )
        space = _space_from_header(header)
    groups: list[list[TraceRecord]] = [[] for _ in range(space.n_sets)]
    for line_no, obj in rows:
        if "params" not in obj or "metrics" not in obj:
            raise DatasetFormatError(
                f"{path}:{line_no}: record needs 'params' and 'metrics'"
            )
        try:
            idx = _params_to_index(space, obj["params"])
        except ConfigError as e:
            raise DatasetFormatError(f"{path}:{line_no}: {e}") from None
        groups[idx].append(
            TraceRecord(run_id=str(obj.get("run_id", f"line{line_no}")),
                        metrics=obj["metrics"])
        )
    provenance = {"path": str(path)}
    if header:
        provenance["header"] = header
    return TraceDataset(space, tuple(tuple(g) for g in groups), provenance)


def _load_csv(path: Path, space: ParameterSpace | None) -> TraceDataset:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames:
            raise DatasetFormatError(f"{path}: empty CSV file")
        param_cols = [c for c in reader.fieldnames if c.startswith("param:")]
        metric_cols = [c for c in reader.fieldnames if c.startswith("metric:")]
        if not param_cols or not metric_cols:
            raise DatasetFormatError(
                f"{path}: need 'param:<name>' and 'metric:<name>' columns"
            )
        rows = list(reader)
    parsed = []
    for row_no, row in enumerate(rows, start=2):
        try:
            params = {c[len("param:"):]: float(row[c]) for c in param_cols}
            metrics = {c[len("metric:"):]: float(row[c]) for c in metric_cols}
        except (TypeError, ValueError):
            raise DatasetFormatError(f"{path}:{row_no}: non-numeric cell") from None
        parsed.append((row_no, params, metrics, row.get("run_id") or f"row{row_no}"))
    if space is None:
        defs = []
        for c in param_cols:
            name = c[len("param:"):]
            values = sorted({p[name] for _, p, _, _ in parsed})
            defs.append(ParameterDef(name=name, values=tuple(values)))
        space = ParameterSpace(defs)
    groups: list[list[TraceRecord]] = [[] for _ in range(space.n_sets)]
    for row_no, params, metrics, run_id in parsed:
        try:
            idx = _params_to_index(space, params)
        except ConfigError as e:
            raise DatasetFormatError(f"{path}:{row_no}: {e}") from None
        groups[idx].append(TraceRecord(run_id=run_id, metrics=metrics))
    return TraceDataset(
        space, tuple(tuple(g) for g in groups), {"path": str(path)}
    )


def save_dataset(dataset: TraceDataset, path: Union[str, Path],
                 n_r: int | None = None) -> None:
    """Write a dataset as JSON Lines with a leading header object."""
    path = Path(path)
    header = {
        "parameters": [
            {"name": d.name, "values": list(d.values), "unit": d.unit,
             "scale": d.scale}
            for d in dataset.space.defs
        ],
        "metrics": list(dataset.metric_names()),
    }
    if n_r is not None:
        header["n_r"] = n_r
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for idx in range(dataset.space.n_sets):
            params = dataset.space.set_at(idx).as_dict(dataset.space)
            for rec in dataset.records_by_set[idx]:
                fh.write(
                    json.dumps(
                        {"params": params, "metrics": dict(rec.metrics),
                         "run_id": rec.run_id},
                        sort_keys=True,
                    )
                    + "\n"
                )


@dataclass
class ReplayState:
    """Per-run bookkeeping: which records are still unconsumed."""

    remaining: list[list[int]]
    rng: np.random.Generator
    consumed: list[tuple[int, int]] = field(default_factory=list)

    @classmethod
    def fresh(cls, dataset: TraceDataset, seed: int) -> "ReplayState":
        return cls(
            remaining=[list(range(len(g))) for g in dataset.records_by_set],
            rng=np.random.default_rng(seed),
        )


def _draw_record(
    dataset: TraceDataset, state: ReplayState, set_index: int
) -> TraceRecord:
    pool = state.remaining[set_index]
    pos = int(state.rng.integers(len(pool)))
    rec_idx = pool.pop(pos)
    state.consumed.append((set_index, rec_idx))
    return dataset.records_by_set[set_index][rec_idx]


def replay_trial(
    dataset: TraceDataset,
    state: ReplayState,
    set_index: int,
    trial_index: int,
) -> Observation:
    """One replayed trial: draw an unconsumed record without replacement.

    A set with records but none left raises SetExhausted so the engine can
    move to its next-best option. A set that was never recorded is served
    by the nearest recorded set (normalized distance, lowest index on
    ties), consuming that donor's budget.
    """
    has_records = len(dataset.records_by_set[set_index]) > 0
    if has_records:
        if not state.remaining[set_index]:
            raise SetExhausted(set_index)
        rec = _draw_record(dataset, state, set_index)
        return Observation(trial_index, set_index, rec.metrics)
    donors = [
        i
        for i in range(dataset.space.n_sets)
        if dataset.records_by_set[i] and state.remaining[i]
    ]
    if not donors:
        raise DatasetExhausted("no unconsumed records remain in the dataset")
    coords = dataset.space.normalized_all()
    target = coords[set_index]
    distances = np.linalg.norm(coords[donors] - target, axis=1)
    donor = donors[int(np.argmin(distances))]
    rec = _draw_record(dataset, state, donor)
    return Observation(trial_index, set_index, rec.metrics)


class ReplayExecutor:
    """Engine-facing wrapper around a dataset and one run's replay state."""

    def __init__(
        self,
        dataset: TraceDataset,
        seed: int,
        required_metrics: Sequence[str] = (),
    ):
        for idx, group in enumerate(dataset.records_by_set):
            for rec in group:
                missing = [m for m in required_metrics if m not in rec.metrics]
                if missing:
                    raise DatasetFormatError(
                        f"set {idx} record {rec.run_id!r} missing metrics {missing}"
                    )
        self.dataset = dataset
        self.state = ReplayState.fresh(dataset, seed)

    @property
    def space(self) -> ParameterSpace:
        return self.dataset.space

    def run_trial(self, set_index: int, trial_index: int) -> Observation:
        return replay_trial(self.dataset, self.state, set_index, trial_index)

    def unavailable_sets(self) -> frozenset[int]:
        """Sets the engine should not select: exhausted, or unservable."""
        out = set()
        any_remaining = any(
            self.dataset.records_by_set[i] and self.state.remaining[i]
            for i in range(self.space.n_sets)
        )
        for i in range(self.space.n_sets):
            if self.dataset.records_by_set[i]:
                if not self.state.remaining[i]:
                    out.add(i)
            elif not any_remaining:
                out.add(i)
        return frozenset(out)

    @property
    def consumed(self) -> tuple[tuple[int, int], ...]:
        return tuple(self.state.consumed)


Landscape = Union[Callable[[np.ndarray], float], Sequence[float], np.ndarray]


@dataclass
class SyntheticSpec:
    """Noiseless metric landscapes over the space plus per-metric noise.

    Each landscape is either a table of one value per set (index order) or
    a callable over normalized coordinates.
    """

    space: ParameterSpace
    metrics: dict[str, Landscape]
    noise_std: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, land in self.metrics.items():
            if not callable(land):
                table = np.asarray(land, dtype=float)
                if table.shape != (self.space.n_sets,):
                    raise ConfigError(
                        f"synthetic metric {name!r}: table must have one value "
                        f"per set ({self.space.n_sets}), got shape {table.shape}"
                    )
                self.metrics[name] = table
        for name, std in self.noise_std.items():
            if std < 0:
                raise ConfigError(f"noise std for {name!r} must be >= 0")

    def value(self, metric: str, set_index: int) -> float:
        land = self.metrics[metric]
        if callable(land):
            return float(land(self.space.normalized(set_index)))
        return float(land[set_index])

    def table(self, metric: str) -> np.ndarray:
        land = self.metrics[metric]
        if callable(land):
            return np.array(
                [land(self.space.normalized(i)) for i in range(self.space.n_sets)],
                dtype=float,
            )
        return np.asarray(land, dtype=float)


def _metric_stream_key(metric: str) -> int:
    return int.from_bytes(hashlib.sha256(metric.encode()).digest()[:8], "big")


def synthetic_trial(
    spec: SyntheticSpec, set_index: int, trial_index: int, seed: int
) -> Observation:
    """Landscape value plus Gaussian noise, reproducible from the seed.

    Noise draws are keyed by (seed, trial index, metric name) so metric
    streams are independent and replays are bit-identical.
    """
    metrics = {}
    for name in spec.metrics:
        value = spec.value(name, set_index)
        std = spec.noise_std.get(name, 0.0)
        if std > 0.0:
            rng = np.random.default_rng(
                [seed, trial_index, _metric_stream_key(name)]
            )
            value += std * rng.standard_normal()
        metrics[name] = value
    return Observation(trial_index, set_index, metrics)


class SyntheticExecutor:
    def __init__(self, spec: SyntheticSpec, seed: int):
        self.spec = spec
        self.seed = seed

    @property
    def space(self) -> ParameterSpace:
        return self.spec.space

    def run_trial(self, set_index: int, trial_index: int) -> Observation:
        return synthetic_trial(self.spec, set_index, trial_index, self.seed)

    def unavailable_sets(self) -> frozenset[int]:
        return frozenset()


@dataclass
class RemoteConfig:
    """Endpoint and timing for the job-queue testbed protocol."""

    endpoint: str
    poll_interval: float = 5.0
    trial_duration: float = 600.0
    timeout: float | None = None
    http_timeout: float = 30.0

    @property
    def effective_timeout(self) -> float:
        return self.timeout if self.timeout is not None else 2.0 * self.trial_duration


def remote_trial(
    cfg: RemoteConfig,
    params: Mapping[str, float],
    timeout: float | None = None,
) -> dict[str, float]:
    """Submit one job, poll it to completion, and return its metrics."""
    base = cfg.endpoint.rstrip("/")
    deadline = time.monotonic() + (
        timeout if timeout is not None else cfg.effective_timeout
    )
    try:
        resp = requests.post(
            f"{base}/jobs", json={"params": dict(params)}, timeout=cfg.http_timeout
        )
        resp.raise_for_status()
        job_id = str(resp.json()["job_id"])
    except (requests.RequestException, KeyError, ValueError) as e:
        raise RemoteProtocolError(f"job submission failed: {e}") from e
    while True:
        try:
            resp = requests.get(f"{base}/jobs/{job_id}", timeout=cfg.http_timeout)
            resp.raise_for_status()
            state = resp.json().get("state")
        except (requests.RequestException, ValueError) as e:
            raise RemoteProtocolError(f"job poll failed: {e}") from e
        if state == "done":
            break
        if state == "failed":
            raise JobFailedError(job_id)
        if time.monotonic() >= deadline:
            raise TrialTimeoutError(
                f"job {job_id} still {state!r} after the trial timeout"
            )
        time.sleep(cfg.poll_interval)
    try:
        resp = requests.get(f"{base}/jobs/{job_id}/metrics", timeout=cfg.http_timeout)
        resp.raise_for_status()
        metrics = resp.json()
        return {str(k): float(v) for k, v in metrics.items()}
    except (requests.RequestException, TypeError, ValueError) as e:
        raise RemoteProtocolError(f"metric retrieval failed: {e}") from e


class RemoteExecutor:
    """Blocking run-one-trial client against the wire protocol."""

    def __init__(self, cfg: RemoteConfig, space: ParameterSpace):
        self.cfg = cfg
        self._space = space

    @property
    def space(self) -> ParameterSpace:
        return self._space

    def run_trial(self, set_index: int, trial_index: int) -> Observation:
        params = self._space.set_at(set_index).as_dict(self._space)
        metrics = remote_trial(self.cfg, params)
        return Observation(trial_index, set_index, metrics)

    def unavailable_sets(self) -> frozenset[int]:
        return frozenset()


@dataclass
class DatasetReport:
    """Findings from a dataset validation pass."""

    path: str
    n_sets: int
    total_records: int
    covered_sets: int
    target_records: int
    shortfalls: list[tuple[int, int]]
    missing_metrics: list[tuple[int, str]]
    duplicate_run_ids: list[str]

    @property
    def full_coverage(self) -> bool:
        return self.covered_sets == self.n_sets

    def summary_lines(self) -> list[str]:
        lines = [
            f"{self.total_records} records, "
            + ("full coverage" if self.full_coverage
               else f"{self.covered_sets}/{self.n_sets} sets covered")
        ]
        for idx, count in self.shortfalls:
            lines.append(
                f"set {idx}: {count} records (target {self.target_records})"
            )
        for line_no, metric in self.missing_metrics:
            lines.append(f"line {line_no}: missing metric {metric!r}")
        for run_id in self.duplicate_run_ids:
            lines.append(f"duplicate run_id {run_id!r}")
        if len(lines) == 1:
            lines.append("no issues found")
        return lines


def validate_dataset(
    path: Union[str, Path],
    n_r: int = 6,
    space: ParameterSpace | None = None,
    expected_metrics: Sequence[str] | None = None,
) -> DatasetReport:
    """Check coverage, per-set record counts, metrics, and run-id uniqueness."""
    path = Path(path)
    dataset = load_dataset(path, space)
    expected = (
        tuple(expected_metrics)
        if expected_metrics is not None
        else dataset.metric_names()
    )
    counts = dataset.counts()
    shortfalls = [(i, c) for i, c in enumerate(counts) if c < n_r]
    missing: list[tuple[int, str]] = []
    seen_ids: dict[str, int] = {}
    duplicates = []
    line_no = 0
    # Re-walk the file to report line numbers for record-level findings.
    if path.suffix.lower() != ".csv":
        with path.open("r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if "header" in obj:
                    continue
                for m in expected:
                    if m not in obj.get("metrics", {}):
                        missing.append((line_no, m))
                run_id = str(obj.get("run_id", f"line{line_no}"))
                if run_id in seen_ids:
                    if run_id not in duplicates:
                        duplicates.append(run_id)
                else:
                    seen_ids[run_id] = line_no
    else:
        for idx in range(dataset.space.n_sets):
            for rec in dataset.records_by_set[idx]:
                for m in expected:
                    if m not in rec.metrics:
                        missing.append((-1, m))
                if rec.run_id in seen_ids:
                    if rec.run_id not in duplicates:
                        duplicates.append(rec.run_id)
                else:
                    seen_ids[rec.run_id] = -1
    return DatasetReport(
        path=str(path),
        n_sets=dataset.space.n_sets,
        total_records=dataset.n_records,
        covered_sets=sum(1 for c in counts if c > 0),
        target_records=n_r,
        shortfalls=shortfalls,
        missing_metrics=missing,
        duplicate_run_ids=duplicates,
    )
