"""Shared fixtures: spaces, requirements, the bundled dataset, a mock testbed."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources

import pytest

from apexopt.domain import (
    ConstraintSpec,
    MetricSpec,
    ParameterDef,
    ParameterSpace,
    Requirement,
)
from apexopt.executor import TraceDataset, TraceRecord, load_dataset


@pytest.fixture
def crystal_space() -> ParameterSpace:
    return ParameterSpace(
        [
            ParameterDef("tx_power", (-5.0, -3.0, -1.0, 0.0), unit="dBm"),
            ParameterDef("n_tx", (1.0, 2.0, 3.0, 4.0)),
        ]
    )


@pytest.fixture
def energy_prr_requirement() -> Requirement:
    return Requirement(
        goal=MetricSpec("energy", "minimize", "J"),
        constraints=(ConstraintSpec("prr", ">=", 65.0, 0.5),),
    )


@pytest.fixture(scope="session")
def bundled_dataset_path(tmp_path_factory) -> str:
    source = resources.files("apexopt.data") / "crystal_demo.jsonl"
    target = tmp_path_factory.mktemp("data") / "crystal_demo.jsonl"
    target.write_text(source.read_text(encoding="utf-8"), encoding="utf-8")
    return str(target)


@pytest.fixture(scope="session")
def bundled_dataset(bundled_dataset_path) -> TraceDataset:
    return load_dataset(bundled_dataset_path)


def make_line_space(n: int) -> ParameterSpace:
    return ParameterSpace([ParameterDef("p", tuple(float(i) for i in range(n)))])


def make_dataset(
    space: ParameterSpace,
    metric_tables: dict[str, list[float]],
    records_per_set: int = 6,
    skip_sets: tuple[int, ...] = (),
) -> TraceDataset:
    """Noiseless dataset: each set repeats its table values verbatim."""
    groups = []
    for idx in range(space.n_sets):
        if idx in skip_sets:
            groups.append(())
            continue
        recs = tuple(
            TraceRecord(
                run_id=f"s{idx}r{k}",
                metrics={m: table[idx] for m, table in metric_tables.items()},
            )
            for k in range(records_per_set)
        )
        groups.append(recs)
    return TraceDataset(space, tuple(groups))


class _MockTestbedHandler(BaseHTTPRequestHandler):
    """Job-queue stub: behavior per job is set by the server's `mode`."""

    def log_message(self, *args):  # keep test output clean
        pass

    def _send(self, code: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        if not self.path.endswith("/jobs"):
            self._send(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length) or b"{}")
        server = self.server
        job_id = f"job-{server.next_id}"
        server.next_id += 1
        server.jobs[job_id] = {"params": payload.get("params", {}), "polls": 0}
        self._send(200, {"job_id": job_id})

    def do_GET(self):
        server = self.server
        parts = self.path.strip("/").split("/")
        if len(parts) >= 2 and parts[0] == "jobs":
            job_id = parts[1]
            job = server.jobs.get(job_id)
            if job is None:
                self._send(404, {"error": "unknown job"})
                return
            if len(parts) == 2:
                job["polls"] += 1
                if server.mode == "failed":
                    state = "failed" if job["polls"] > 1 else "running"
                elif server.mode == "stuck":
                    state = "running"
                else:
                    state = "done"
                self._send(200, {"state": state})
                return
            if parts[2] == "metrics":
                self._send(200, dict(server.metrics))
                return
        self._send(404, {"error": "not found"})


@pytest.fixture
def mock_testbed():
    """Yields a factory: mock_testbed(mode, metrics) -> base URL."""
    servers = []

    def start(mode: str = "done", metrics: dict | None = None) -> str:
        server = ThreadingHTTPServer(("127.0.0.1", 0), _MockTestbedHandler)
        server.mode = mode
        server.metrics = metrics or {"energy": 180.0, "prr": 92.0}
        server.jobs = {}
        server.next_id = 0
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        servers.append(server)
        return f"http://127.0.0.1:{server.server_address[1]}"

    yield start
    for server in servers:
        server.shutdown()
        server.server_close()
