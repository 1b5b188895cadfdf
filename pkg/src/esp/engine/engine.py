"""Compute engine: job queue, worker pool, and watchdog supervision.

Jobs are validated fully at submission (model resolution, role checks,
field-wise input validation, scenario wiring) so the queue only ever
holds runnable work. A fixed pool of worker threads executes jobs one at
a time each; a watchdog thread flags jobs past their wall-clock deadline
and the evaluator's per-step hook raises inside the worker, so a slow job
can neither block its siblings nor sneak partial results out: outputs are
only persisted after the run archive is written, and failed or timed-out
jobs persist a failure report instead.

The per-step hook is also where the step budget is enforced and where the
optional ``step_sleep`` test hook lives (simulating slow models in an
engine that cannot otherwise hang).
"""

from __future__ import annotations

import secrets
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any

from ..errors import EspError
from ..mc import resolve_bindings, run_simulation
from ..store import Actor, ModelStore
from ..workbook import EvalSession, WorkbookModel, extract_outputs, validate_inputs
from ..workbook.values import Value, value_to_json
from .jobs import (
    MONTE_CARLO,
    SINGLE,
    JobRequest,
    WatchdogPolicy,
    monte_carlo_result_core,
    parse_job_request,
    result_hash,
    single_result_core,
)


class _Cancelled(BaseException):
    """Raised inside a worker when the watchdog flags its job."""


class _BudgetExceeded(BaseException):
    """Raised inside a worker when the job's step budget runs out."""


@dataclass
class _Runtime:
    job_id: str
    request: JobRequest
    model: WorkbookModel
    version: int
    blob_hash: str
    effective_bindings: dict[str, Value]
    cancel: threading.Event = field(default_factory=threading.Event)
    started_monotonic: float | None = None
    steps: int = 0
    done: threading.Event = field(default_factory=threading.Event)


class ComputeEngine:
    def __init__(
        self,
        store: ModelStore,
        policy: WatchdogPolicy | None = None,
        workers: int = 2,
        mc_parallelism: int = 2,
        mc_batch_size: int = 256,
        step_sleep: float = 0.0,
    ):
        self.store = store
        self.policy = policy or WatchdogPolicy()
        self.mc_parallelism = max(1, mc_parallelism)
        self.mc_batch_size = max(1, mc_batch_size)
        self.step_sleep = step_sleep
        self._queue: deque[str] = deque()
        self._runtimes: dict[str, _Runtime] = {}
        self._cv = threading.Condition()
        self._shutdown = False
        self._threads = [
            threading.Thread(target=self._worker_loop, name=f"worker-{i}", daemon=True)
            for i in range(max(1, workers))
        ]
        self._watchdog = threading.Thread(
            target=self._watchdog_loop, name="watchdog", daemon=True
        )
        for thread in self._threads:
            thread.start()
        self._watchdog.start()

    def shutdown(self) -> None:
        with self._cv:
            self._shutdown = True
            self._cv.notify_all()
        for thread in self._threads:
            thread.join(timeout=2.0)
        self._watchdog.join(timeout=2.0)

    # -- submission ---------------------------------------------------------

    def validate_request(self, doc: Any, actor: Actor) -> _Runtime:
        """Run every submission gate (roles, model resolution, field-wise
        validation, scenario wiring) without queueing anything."""
        request = parse_job_request(doc, actor.user_id)
        if actor.role == "ADMIN":
            raise EspError("AUTH", "ADMIN accounts may not submit jobs")
        if request.version_selector == "LIVE":
            version_record = self.store.resolve_live(request.model_name)
        else:
            if not actor.is_superuser:
                raise EspError("AUTH", "explicit version selection requires the superuser role")
            version_record = self.store.get_version(
                request.model_name, request.version_selector
            )
        model, blob_hash = self.store.load_model(
            request.model_name, version_record.version
        )
        report = validate_inputs(model.input_schema, request.input_bindings)
        if not report.ok:
            raise EspError(
                "VALIDATION", "input validation failed",
                {"violations": report.violations},
            )
        if request.mode == MONTE_CARLO:
            spec = self.store.get_scenario_spec(request.scenario_spec_ref)
            input_names = {fld.name for fld in model.input_schema}
            resolve_bindings(spec, input_names)  # raises SCHEMA when unwired
            output_names = {fld.name for fld in model.output_schema}
            for name in filter(None, (request.metric_bindings.loss_output,
                                      request.metric_bindings.default_output)):
                if name not in output_names:
                    raise EspError("SCHEMA", f"model has no output field named {name!r}")
        return _Runtime(
            secrets.token_hex(16), request, model, version_record.version,
            blob_hash, report.effective,
        )

    def submit_job(self, doc: Any, actor: Actor) -> str:
        runtime = self.validate_request(doc, actor)
        return self.enqueue(runtime, actor)

    def enqueue(self, runtime: _Runtime, actor: Actor) -> str:
        job_id = runtime.job_id
        request = runtime.request
        self.store.insert_job(
            job_id, request.model_name, runtime.version, runtime.blob_hash,
            request.to_payload(), actor.user_id,
        )
        with self._cv:
            self._runtimes[job_id] = runtime
            self._queue.append(job_id)
            self._cv.notify()
        return job_id

    # -- queries -------------------------------------------------------------

    def _authorized_job(self, job_id: str, actor: Actor) -> dict[str, Any]:
        job = self.store.get_job(job_id)
        if job is None:
            raise EspError("NOT_FOUND", f"no job {job_id!r}")
        if not actor.is_superuser and job["submitted_by"] != actor.user_id:
            raise EspError("AUTH", "only the submitter or a superuser may inspect a job")
        return job

    def job_status(self, job_id: str, actor: Actor) -> dict[str, Any]:
        job = self._authorized_job(job_id, actor)
        return {
            "job_id": job_id,
            "state": job["state"],
            "progress": job["progress"],
            "enqueued_at": job["enqueued_at"],
            "started_at": job["started_at"],
            "ended_at": job["ended_at"],
            "failure_reason": job["failure_reason"],
        }

    def job_result(self, job_id: str, actor: Actor) -> dict[str, Any]:
        job = self._authorized_job(job_id, actor)
        state = job["state"]
        if state in ("QUEUED", "RUNNING"):
            raise EspError("NOT_READY", f"job is {state}", {"state": state})
        if state != "SUCCEEDED":
            raise EspError(
                "FAILED_JOB", f"job {state}: {job['failure_reason']}",
                {"state": state, "failure": job["failure"]},
            )
        return {
            "job_id": job_id,
            "timestamp": job["ended_at"],
            "result": job["result"],
            "result_hash": job["result_hash"],
        }

    def wait(self, job_id: str, timeout: float | None = None) -> dict[str, Any]:
        """Block until the job reaches a terminal state (test/CLI helper)."""
        runtime = self._runtimes.get(job_id)
        if runtime is not None:
            runtime.done.wait(timeout)
        job = self.store.get_job(job_id)
        if job is None:
            raise EspError("NOT_FOUND", f"no job {job_id!r}")
        return job

    # -- execution ------------------------------------------------------------

    def _worker_loop(self) -> None:
        while True:
            with self._cv:
                while not self._queue and not self._shutdown:
                    self._cv.wait()
                if self._shutdown:
                    return
                job_id = self._queue.popleft()
                runtime = self._runtimes[job_id]
            self._execute(runtime)

    def _watchdog_loop(self) -> None:
        while True:
            with self._cv:
                if self._shutdown:
                    return
                now = time.monotonic()
                for runtime in self._runtimes.values():
                    if runtime.started_monotonic is None or runtime.done.is_set():
                        continue
                    if now - runtime.started_monotonic > self.policy.wall_clock_timeout:
                        runtime.cancel.set()
            time.sleep(self.policy.check_interval)

    def _make_step_hook(self, runtime: _Runtime):
        budget = self.policy.step_budget
        sleep = self.step_sleep

        def on_step() -> None:
            if sleep:
                time.sleep(sleep)
            runtime.steps += 1
            if runtime.cancel.is_set():
                raise _Cancelled()
            if runtime.steps > budget:
                raise _BudgetExceeded()

        return on_step

    def _execute(self, runtime: _Runtime) -> None:
        job_id = runtime.job_id
        request = runtime.request
        self.store.mark_job_running(job_id)
        runtime.started_monotonic = time.monotonic()
        submitter = Actor(request.submitted_by, "ENDUSER")
        inputs_payload = {
            "request": request.to_payload(), "version": runtime.version,
        }
        try:
            if request.mode == SINGLE:
                core = self._run_single(runtime)
            else:
                core = self._run_monte_carlo(runtime)
        except _Cancelled:
            self._fail(runtime, "TIMED_OUT", "wall clock timeout exceeded", inputs_payload)
        except _BudgetExceeded:
            self._fail(runtime, "TIMED_OUT", "step budget exceeded", inputs_payload)
        except EspError as exc:
            self._fail(runtime, "FAILED", f"{exc.code}: {exc.message}", inputs_payload,
                       details=exc.details)
        except Exception as exc:  # noqa: BLE001 - surface as job failure
            self._fail(runtime, "FAILED", f"INTERNAL: {exc!r}", inputs_payload)
        else:
            # archive first, then make the result visible
            self.store.archive_run_artifact(
                job_id, request.model_name, runtime.version,
                inputs_payload, core, True, submitter,
            )
            self.store.finish_job(
                job_id, "SUCCEEDED", result=core, result_hash=result_hash(core),
            )
            runtime.done.set()

    def _fail(self, runtime: _Runtime, state: str, reason: str,
              inputs_payload: dict[str, Any], details: dict | None = None) -> None:
        failure = {"state": state, "failure_reason": reason}
        if details:
            failure["details"] = details
        submitter = Actor(runtime.request.submitted_by, "ENDUSER")
        self.store.archive_run_artifact(
            runtime.job_id, runtime.request.model_name, runtime.version,
            inputs_payload, failure, False, submitter,
        )
        self.store.finish_job(
            runtime.job_id, state, failure_reason=reason, failure=failure,
        )
        runtime.done.set()

    def _run_single(self, runtime: _Runtime) -> dict[str, Any]:
        hook = self._make_step_hook(runtime)
        session = EvalSession(runtime.model, on_step=hook)
        session.evaluate_all()
        if runtime.effective_bindings:
            session.set_inputs_and_recalculate(
                dict(runtime.effective_bindings), allow_locked=True
            )
        outputs = extract_outputs(session.values, runtime.model.output_schema)
        self.store.update_job_progress(runtime.job_id, 1.0)
        return single_result_core(
            runtime.request.model_name, runtime.version, runtime.blob_hash,
            runtime.effective_bindings, outputs,
        )

    def _run_monte_carlo(self, runtime: _Runtime) -> dict[str, Any]:
        request = runtime.request
        hook = self._make_step_hook(runtime)
        spec = self.store.get_scenario_spec(request.scenario_spec_ref)
        model = runtime.model

        def factory() -> EvalSession:
            session = EvalSession(model, on_step=hook)
            session.evaluate_all()
            return session

        def cancel_check() -> None:
            if runtime.cancel.is_set():
                raise _Cancelled()

        def on_progress(done: int, total: int) -> None:
            self.store.update_job_progress(runtime.job_id, done / total)

        result = run_simulation(
            factory, spec, runtime.effective_bindings, request.iterations,
            request.seed, request.metric_bindings,
            parallelism=self.mc_parallelism, batch_size=self.mc_batch_size,
            on_progress=on_progress, cancel_check=cancel_check,
        )
        return monte_carlo_result_core(
            request, runtime.version, runtime.blob_hash,
            runtime.effective_bindings, result.metrics.to_json(),
            result.losses, result.defaults,
        )
