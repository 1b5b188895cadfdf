"""Job request/result types and their canonical wire forms.

The deterministic core of a job result (model identity, inputs, seed,
outputs or metrics, optional per-iteration table) is what gets hashed,
archived, and compared across runs; job id and timestamp live only in the
response envelope. That split is what lets identical (blob, bindings,
seed, iterations, scenario spec) produce byte-identical canonical results
regardless of worker count, queue order, or wall clock.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from ..canonical import canonical_json, sha256_hex
from ..errors import EspError
from ..mc import MetricBindings, parse_metric_bindings
from ..workbook import Value, value_from_json, value_to_json

SINGLE = "SINGLE"
MONTE_CARLO = "MONTE_CARLO"

JOB_STATES = ("QUEUED", "RUNNING", "SUCCEEDED", "FAILED", "TIMED_OUT")


@dataclass(frozen=True)
class WatchdogPolicy:
    wall_clock_timeout: float = 60.0
    step_budget: int = 100_000_000
    check_interval: float = 0.25

    def __post_init__(self) -> None:
        if self.wall_clock_timeout <= 0 or self.step_budget <= 0 or self.check_interval <= 0:
            raise EspError("BAD_REQUEST", "watchdog parameters must be positive")


@dataclass(frozen=True)
class JobRequest:
    model_name: str
    version_selector: str | int  # "LIVE" or an explicit version number
    input_bindings: dict[str, Value]
    mode: str
    submitted_by: str
    seed: int | None = None
    iterations: int | None = None
    scenario_spec_ref: str | None = None
    metric_bindings: MetricBindings | None = None
    iteration_table: bool = True

    def to_payload(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "model_name": self.model_name,
            "version_selector": self.version_selector,
            "input_bindings": {k: value_to_json(v) for k, v in self.input_bindings.items()},
            "mode": self.mode,
        }
        if self.mode == MONTE_CARLO:
            out.update({
                "seed": self.seed,
                "iterations": self.iterations,
                "scenario_spec_ref": self.scenario_spec_ref,
                "metric_bindings": self.metric_bindings.to_json(),
                "iteration_table": self.iteration_table,
            })
        return out


def parse_job_request(doc: Any, submitted_by: str) -> JobRequest:
    if not isinstance(doc, dict):
        raise EspError("BAD_REQUEST", "job request must be a JSON object")
    model_name = doc.get("model_name")
    if not isinstance(model_name, str) or not model_name:
        raise EspError("BAD_REQUEST", "'model_name' must be a nonempty string")
    selector = doc.get("version", "LIVE")
    if selector != "LIVE" and (isinstance(selector, bool) or not isinstance(selector, int) or selector < 1):
        raise EspError("BAD_REQUEST", "'version' must be \"LIVE\" or an integer >= 1")
    mode = doc.get("mode", SINGLE)
    if mode not in (SINGLE, MONTE_CARLO):
        raise EspError("BAD_REQUEST", f"'mode' must be {SINGLE} or {MONTE_CARLO}")
    raw_bindings = doc.get("input_bindings", {})
    if not isinstance(raw_bindings, dict):
        raise EspError("BAD_REQUEST", "'input_bindings' must be an object")
    try:
        bindings = {k: value_from_json(v) for k, v in raw_bindings.items()}
    except ValueError as exc:
        raise EspError("BAD_REQUEST", f"bad input binding: {exc}") from exc

    mc_fields = {k: doc.get(k) for k in ("seed", "iterations", "scenario_spec_ref", "metric_bindings")}
    if mode == SINGLE:
        present = [k for k, v in mc_fields.items() if v is not None]
        if present or "iteration_table" in doc:
            raise EspError("BAD_REQUEST", f"SINGLE jobs forbid {present or ['iteration_table']}")
        return JobRequest(model_name, selector, bindings, mode, submitted_by)

    seed = mc_fields["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise EspError("BAD_REQUEST", "MONTE_CARLO requires a 64-bit unsigned 'seed'")
    iterations = mc_fields["iterations"]
    if isinstance(iterations, bool) or not isinstance(iterations, int) or iterations < 1:
        raise EspError("BAD_REQUEST", "MONTE_CARLO requires integer 'iterations' >= 1")
    ref = mc_fields["scenario_spec_ref"]
    if not isinstance(ref, str) or not ref:
        raise EspError("BAD_REQUEST", "MONTE_CARLO requires 'scenario_spec_ref'")
    metric_bindings = parse_metric_bindings(mc_fields["metric_bindings"])
    iteration_table = doc.get("iteration_table", True)
    if not isinstance(iteration_table, bool):
        raise EspError("BAD_REQUEST", "'iteration_table' must be a boolean")
    return JobRequest(
        model_name, selector, bindings, mode, submitted_by,
        seed, iterations, ref, metric_bindings, iteration_table,
    )


def result_hash(core: dict[str, Any]) -> str:
    return sha256_hex(canonical_json(core))


def single_result_core(model_name: str, version: int, blob_hash: str,
                       effective_bindings: dict[str, Value],
                       outputs: dict[str, Value]) -> dict[str, Any]:
    return {
        "mode": SINGLE,
        "model_name": model_name,
        "version": version,
        "blob_hash": blob_hash,
        "inputs": {k: value_to_json(v) for k, v in effective_bindings.items()},
        "outputs": {k: value_to_json(v) for k, v in outputs.items()},
    }


def monte_carlo_result_core(request: JobRequest, version: int, blob_hash: str,
                            effective_bindings: dict[str, Value],
                            metrics: dict[str, Any],
                            losses: list[float], defaults: list[bool]) -> dict[str, Any]:
    core: dict[str, Any] = {
        "mode": MONTE_CARLO,
        "model_name": request.model_name,
        "version": version,
        "blob_hash": blob_hash,
        "seed": request.seed,
        "iterations": request.iterations,
        "scenario_spec_ref": request.scenario_spec_ref,
        "metric_bindings": request.metric_bindings.to_json(),
        "inputs": {k: value_to_json(v) for k, v in effective_bindings.items()},
        "metrics": metrics,
        "iteration_table": (
            [[loss, flag] for loss, flag in zip(losses, defaults)]
            if request.iteration_table else None
        ),
    }
    return core
