"""Simulation driver: scenario paths through the workbook, metrics out.

Iterations are processed in fixed contiguous batches (batch boundaries
depend only on the batch size, never on worker count). Worker threads
clone evaluator sessions and write per-iteration losses and default flags
into index-addressed slots, so the aggregate is independent of scheduling
interleaving. An error value in a metric-critical output fails the whole
run, reporting the smallest failing iteration index; iterations are never
silently dropped.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import EspError
from ..workbook.evaluator import EvalSession, extract_outputs
from ..workbook.model import OutputField
from ..workbook.values import CellError, Value
from .metrics import MetricBindings, RiskMetrics, compute_risk_metrics
from .scenario import ScenarioGenerator, ScenarioSpec, resolve_bindings

DEFAULT_BATCH_SIZE = 256


@dataclass
class SimulationResult:
    metrics: RiskMetrics
    losses: list[float]
    defaults: list[bool]


def run_simulation(
    session_factory: Callable[[], EvalSession],
    spec: ScenarioSpec,
    base_bindings: dict[str, Value],
    iterations: int,
    master_seed: int,
    metric_bindings: MetricBindings,
    *,
    parallelism: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
    on_progress: Callable[[int, int], None] | None = None,
    cancel_check: Callable[[], None] | None = None,
) -> SimulationResult:
    if iterations < 1:
        raise EspError("BAD_REQUEST", "iterations must be >= 1")

    template = session_factory()
    model = template.model
    input_names = {fld.name for fld in model.input_schema}
    plan = resolve_bindings(spec, input_names)

    loss_field = _output_field(model.output_schema, metric_bindings.loss_output)
    default_field = (
        _output_field(model.output_schema, metric_bindings.default_output)
        if metric_bindings.default_output is not None
        else None
    )
    extract_schema = [loss_field] + ([default_field] if default_field else [])

    if base_bindings:
        template.set_inputs_and_recalculate(dict(base_bindings), allow_locked=True)

    generator = ScenarioGenerator(spec, master_seed)
    horizon = spec.horizon

    losses = [0.0] * iterations
    defaults = [False] * iterations

    batches = [
        (start, min(start + batch_size, iterations))
        for start in range(0, iterations, batch_size)
    ]
    state = _SharedState(len(batches))

    def worker() -> None:
        session = template.clone()
        while True:
            batch = state.next_batch(batch_size)
            if batch is None:
                return
            start, stop = batches[batch]
            try:
                _run_batch(
                    session, generator, plan, horizon, start, stop,
                    extract_schema, metric_bindings, losses, defaults,
                    state, cancel_check,
                )
            except _IterationFailure as failure:
                state.record_failure(failure)
            except BaseException as exc:  # watchdog cancellation, budget, bugs
                state.record_exception(exc)
                return
            done = state.mark_done(stop - start)
            if on_progress is not None:
                on_progress(done, iterations)

    if parallelism <= 1:
        worker()
    else:
        threads = [
            threading.Thread(target=worker, name=f"mc-worker-{i}", daemon=True)
            for i in range(parallelism)
        ]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()

    if state.exception is not None:
        raise state.exception
    failure = state.first_failure()
    if failure is not None:
        raise EspError(
            "EVAL",
            f"iteration {failure.index}: {failure.reason}",
            {"iteration": failure.index, "output": failure.output},
        )

    metrics = compute_risk_metrics(losses, defaults, metric_bindings, iterations)
    return SimulationResult(metrics, losses, defaults)


def _output_field(schema: Sequence[OutputField], name: str) -> OutputField:
    for fld in schema:
        if fld.name == name:
            return fld
    raise EspError("SCHEMA", f"model has no output field named {name!r}")


class _IterationFailure(Exception):
    def __init__(self, index: int, output: str, reason: str):
        super().__init__(f"iteration {index}: {reason}")
        self.index = index
        self.output = output
        self.reason = reason


class _SharedState:
    """Batch dispenser plus failure collection; all under one lock."""

    def __init__(self, n_batches: int):
        self._lock = threading.Lock()
        self._next = 0
        self._n_batches = n_batches
        self._completed = 0
        self._failures: list[_IterationFailure] = []
        self.exception: BaseException | None = None

    def next_batch(self, batch_size: int) -> int | None:
        with self._lock:
            if self.exception is not None:
                return None
            if self._failures:
                # keep processing earlier batches only: the reported failure
                # must be the smallest failing index regardless of threads
                min_failed = min(f.index for f in self._failures)
                if self._next * batch_size > min_failed:
                    return None
            if self._next >= self._n_batches:
                return None
            batch = self._next
            self._next += 1
            return batch

    def record_failure(self, failure: _IterationFailure) -> None:
        with self._lock:
            self._failures.append(failure)

    def record_exception(self, exc: BaseException) -> None:
        with self._lock:
            if self.exception is None:
                self.exception = exc

    def mark_done(self, count: int) -> int:
        with self._lock:
            self._completed += count
            return self._completed

    def first_failure(self) -> _IterationFailure | None:
        with self._lock:
            if not self._failures:
                return None
            return min(self._failures, key=lambda f: f.index)


def _run_batch(
    session: EvalSession,
    generator: ScenarioGenerator,
    plan: list[tuple[int, str, list[str]]],
    horizon: int,
    start: int,
    stop: int,
    extract_schema: list[OutputField],
    metric_bindings: MetricBindings,
    losses: list[float],
    defaults: list[bool],
    state: _SharedState,
    cancel_check: Callable[[], None] | None,
) -> None:
    if cancel_check is not None:
        cancel_check()
    indices = list(range(start, stop))
    block = generator.paths_block(indices)  # (B, M, T)
    if not np.isfinite(block).all():
        bad = int(np.flatnonzero(~np.isfinite(block).all(axis=(1, 2)))[0])
        raise _IterationFailure(start + bad, "<scenario>", "non-finite path value")
    for offset, index in enumerate(indices):
        if cancel_check is not None:
            cancel_check()
        bindings: dict[str, Value] = {}
        for pos, mode, names in plan:
            series = block[offset, pos]
            if mode == "terminal":
                bindings[names[0]] = float(series[horizon - 1])
            else:
                for t in range(horizon):
                    bindings[names[t]] = float(series[t])
        session.set_inputs_and_recalculate(bindings, allow_locked=True)
        outputs = extract_outputs(session.values, extract_schema)

        loss = outputs[metric_bindings.loss_output]
        if isinstance(loss, CellError):
            raise _IterationFailure(index, metric_bindings.loss_output, f"error value {loss.kind}")
        if isinstance(loss, bool) or not isinstance(loss, float):
            raise _IterationFailure(
                index, metric_bindings.loss_output, f"loss output is not a number: {loss!r}"
            )
        if metric_bindings.default_output is not None:
            flag = outputs[metric_bindings.default_output]
            if isinstance(flag, CellError):
                raise _IterationFailure(
                    index, metric_bindings.default_output, f"error value {flag.kind}"
                )
            if isinstance(flag, bool):
                defaulted = flag
            elif isinstance(flag, float):
                defaulted = flag != 0.0
            else:
                raise _IterationFailure(
                    index, metric_bindings.default_output,
                    f"default output is not boolean or numeric: {flag!r}",
                )
        else:
            defaulted = loss > 0.0
        losses[index] = loss
        defaults[index] = defaulted
