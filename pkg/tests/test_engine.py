"""Compute engine: submission gates, execution, watchdog, isolation, and
end-to-end determinism."""

from __future__ import annotations

import time

import pytest

from esp.canonical import canonical_json, content_hash
from esp.engine import ComputeEngine, WatchdogPolicy
from esp.errors import EspError
from esp.store import Actor, ModelStore, parse_standard_test

SUPER = Actor("meg", "SUPERUSER")
USER = Actor("eddie", "ENDUSER")
OTHER = Actor("intruder", "ENDUSER")
ADMIN = Actor("root", "ADMIN")

DOUBLER = {
    "name": "doubler",
    "sheets": [{"name": "S", "cells": {"A1": {"v": 0.0}, "B1": {"f": "=A1*2"}}}],
    "inputs": [{"name": "x", "cell": "S!A1", "dtype": "Number", "required": True,
                "min": 0, "max": 100}],
    "outputs": [{"name": "y", "cell": "S!B1", "dtype": "Number"}],
}

ANALYTIC = {
    "name": "analytic",
    "sheets": [{"name": "S", "cells": {
        "A1": {"v": 0.0}, "B1": {"f": "=IF(A1<-1.645,1,0)"},
    }}],
    "inputs": [{"name": "x_terminal", "cell": "S!A1", "dtype": "Number"}],
    "outputs": [{"name": "loss", "cell": "S!B1", "dtype": "Number"}],
}

SCENARIO = {
    "variables": [{"name": "x", "process": "ADDITIVE", "initial_value": 0.0,
                   "drift": 0.0, "volatility": 1.0, "input_binding_prefix": "x"}],
    "horizon": 1, "correlation": [[1.0]],
}


def _chain_doc(n_cells: int) -> dict:
    cells = {"A1": {"v": 1.0}}
    for i in range(2, n_cells + 1):
        cells[f"A{i}"] = {"f": f"=A{i - 1}+1"}
    return {
        "name": "chain",
        "sheets": [{"name": "S", "cells": cells}],
        "inputs": [{"name": "x", "cell": "S!A1", "dtype": "Number"}],
        "outputs": [{"name": "last", "cell": f"S!A{n_cells}", "dtype": "Number"}],
    }


def _publish(store: ModelStore, doc: dict, expected: dict, bindings: dict) -> None:
    store.upload_version(doc["name"], doc, SUPER)
    tests = [parse_standard_test({
        "test_id": "smoke", "input_bindings": bindings, "expected_outputs": expected,
    })]
    store.attach_standard_tests(doc["name"], 1, tests, SUPER)
    assert store.run_standard_tests(doc["name"], 1, SUPER).passed
    store.promote_to_live(doc["name"], 1, SUPER)


@pytest.fixture
def store(tmp_path):
    return ModelStore(tmp_path / "store")


@pytest.fixture
def engine(store):
    eng = ComputeEngine(store, workers=2, mc_parallelism=2, mc_batch_size=64)
    yield eng
    eng.shutdown()


def test_single_job_end_to_end(store, engine):
    _publish(store, DOUBLER, {"y": 42.0}, {"x": 21.0})
    job_id = engine.submit_job(
        {"model_name": "doubler", "mode": "SINGLE", "input_bindings": {"x": 21.0}},
        USER,
    )
    job = engine.wait(job_id, timeout=10)
    assert job["state"] == "SUCCEEDED"
    envelope = engine.job_result(job_id, USER)
    assert envelope["result"]["outputs"]["y"] == 42.0
    assert envelope["result"]["blob_hash"] == store.resolve_live("doubler").blob_hash
    assert envelope["result_hash"] == content_hash(envelope["result"])
    archive = store.get_archive(job_id)
    assert archive.results_hash == envelope["result_hash"]
    status = engine.job_status(job_id, USER)
    assert status["state"] == "SUCCEEDED" and status["progress"] == 1.0


def test_enduser_blocked_without_live_version(store, engine):
    store.upload_version("doubler", DOUBLER, SUPER)  # DRAFT only
    with pytest.raises(EspError) as exc:
        engine.submit_job(
            {"model_name": "doubler", "mode": "SINGLE", "input_bindings": {"x": 1.0}},
            USER,
        )
    assert exc.value.code == "NO_LIVE_VERSION"


def test_superuser_may_run_explicit_draft_version(store, engine):
    store.upload_version("doubler", DOUBLER, SUPER)
    job_id = engine.submit_job(
        {"model_name": "doubler", "version": 1, "mode": "SINGLE",
         "input_bindings": {"x": 2.0}},
        SUPER,
    )
    assert engine.wait(job_id, timeout=10)["state"] == "SUCCEEDED"
    with pytest.raises(EspError) as exc:
        engine.submit_job(
            {"model_name": "doubler", "version": 1, "mode": "SINGLE",
             "input_bindings": {"x": 2.0}},
            USER,
        )
    assert exc.value.code == "AUTH"


def test_validation_failure_names_field(store, engine):
    _publish(store, DOUBLER, {"y": 2.0}, {"x": 1.0})
    with pytest.raises(EspError) as exc:
        engine.submit_job(
            {"model_name": "doubler", "mode": "SINGLE", "input_bindings": {"x": 500.0}},
            USER,
        )
    assert exc.value.code == "VALIDATION"
    violation = exc.value.details["violations"][0]
    assert violation["field"] == "x" and violation["kind"] == "out-of-bounds"


def test_admin_may_not_submit(store, engine):
    _publish(store, DOUBLER, {"y": 2.0}, {"x": 1.0})
    with pytest.raises(EspError) as exc:
        engine.submit_job(
            {"model_name": "doubler", "mode": "SINGLE", "input_bindings": {"x": 1.0}},
            ADMIN,
        )
    assert exc.value.code == "AUTH"


def test_mode_invariants_rejected(store, engine):
    _publish(store, DOUBLER, {"y": 2.0}, {"x": 1.0})
    with pytest.raises(EspError) as exc:
        engine.submit_job(
            {"model_name": "doubler", "mode": "SINGLE", "input_bindings": {"x": 1.0},
             "seed": 7},
            USER,
        )
    assert exc.value.code == "BAD_REQUEST"
    with pytest.raises(EspError) as exc:
        engine.submit_job(
            {"model_name": "doubler", "mode": "MONTE_CARLO",
             "input_bindings": {"x": 1.0}, "seed": 7},
            USER,
        )
    assert exc.value.code == "BAD_REQUEST"


def test_role_isolation_on_status_and_result(store, engine):
    _publish(store, DOUBLER, {"y": 2.0}, {"x": 1.0})
    job_id = engine.submit_job(
        {"model_name": "doubler", "mode": "SINGLE", "input_bindings": {"x": 1.0}},
        USER,
    )
    engine.wait(job_id, timeout=10)
    for actor in (USER, SUPER):
        assert engine.job_status(job_id, actor)["state"] == "SUCCEEDED"
    with pytest.raises(EspError) as exc:
        engine.job_status(job_id, OTHER)
    assert exc.value.code == "AUTH"
    with pytest.raises(EspError):
        engine.job_result(job_id, OTHER)
    with pytest.raises(EspError) as exc:
        engine.job_status("deadbeef" * 4, USER)
    assert exc.value.code == "NOT_FOUND"


def _submit_mc(engine, seed=7, iterations=2000, table=True):
    return engine.submit_job(
        {"model_name": "analytic", "mode": "MONTE_CARLO", "input_bindings": {},
         "seed": seed, "iterations": iterations, "scenario_spec_ref": engine._scenario_ref,
         "metric_bindings": {"loss_output": "loss", "exposure": 1.0},
         "iteration_table": table},
        USER,
    )


def _setup_mc(store, engine):
    _publish(store, ANALYTIC, {"loss": 0.0}, {"x_terminal": 0.0})
    engine._scenario_ref = store.put_scenario_spec(SCENARIO, SUPER)


def test_monte_carlo_job_and_repeat_determinism(store, engine):
    _setup_mc(store, engine)
    first = engine.wait(_submit_mc(engine), timeout=30)
    second = engine.wait(_submit_mc(engine), timeout=30)
    assert first["state"] == second["state"] == "SUCCEEDED"
    assert first["result_hash"] == second["result_hash"]
    assert canonical_json(first["result"]) == canonical_json(second["result"])
    metrics = first["result"]["metrics"]
    assert 0.02 < metrics["pd"] < 0.08
    assert len(first["result"]["iteration_table"]) == 2000


def test_monte_carlo_parallelism_independent(store, tmp_path):
    _publish(store, ANALYTIC, {"loss": 0.0}, {"x_terminal": 0.0})
    ref = store.put_scenario_spec(SCENARIO, SUPER)
    hashes = []
    for parallelism in (1, 4):
        eng = ComputeEngine(store, workers=1, mc_parallelism=parallelism, mc_batch_size=64)
        try:
            job_id = eng.submit_job(
                {"model_name": "analytic", "mode": "MONTE_CARLO", "input_bindings": {},
                 "seed": 99, "iterations": 1500, "scenario_spec_ref": ref,
                 "metric_bindings": {"loss_output": "loss", "exposure": 1.0}},
                USER,
            )
            job = eng.wait(job_id, timeout=30)
            assert job["state"] == "SUCCEEDED"
            hashes.append(job["result_hash"])
        finally:
            eng.shutdown()
    assert hashes[0] == hashes[1]


def test_progress_visible_during_run(store):
    eng = ComputeEngine(store, workers=1, mc_parallelism=1, mc_batch_size=16,
                        step_sleep=0.002)
    try:
        _publish(store, ANALYTIC, {"loss": 0.0}, {"x_terminal": 0.0})
        ref = store.put_scenario_spec(SCENARIO, SUPER)
        job_id = eng.submit_job(
            {"model_name": "analytic", "mode": "MONTE_CARLO", "input_bindings": {},
             "seed": 1, "iterations": 400, "scenario_spec_ref": ref,
             "metric_bindings": {"loss_output": "loss", "exposure": 1.0}},
            USER,
        )
        with pytest.raises(EspError) as exc:
            # result before terminal state
            deadline = time.monotonic() + 5
            while time.monotonic() < deadline:
                status = eng.job_status(job_id, USER)
                if status["state"] == "RUNNING" and 0 < status["progress"] < 1:
                    break
                time.sleep(0.01)
            eng.job_result(job_id, USER)
        assert exc.value.code == "NOT_READY"
        assert 0.0 <= status["progress"] <= 1.0
        eng.wait(job_id, timeout=30)
    finally:
        eng.shutdown()


def test_budget_trips_to_timed_out_without_partial_results(store):
    policy = WatchdogPolicy(wall_clock_timeout=30.0, step_budget=10_000,
                            check_interval=0.05)
    eng = ComputeEngine(store, policy=policy, workers=2)
    try:
        doc = _chain_doc(2000)  # 1999 formula cells per full pass
        store.upload_version("chain", doc, SUPER)
        # six rebinds re-evaluate ~12k cells, crossing the lowered budget
        job_id = eng.submit_job(
            {"model_name": "chain", "version": 1, "mode": "SINGLE",
             "input_bindings": {"x": 3.0}},
            SUPER,
        )
        # single full pass stays under budget; now force one that cannot
        big = _chain_doc(12_000)
        big["name"] = "bigchain"
        store.upload_version("bigchain", big, SUPER)
        big_id = eng.submit_job(
            {"model_name": "bigchain", "version": 1, "mode": "SINGLE",
             "input_bindings": {"x": 3.0}},
            SUPER,
        )
        assert eng.wait(job_id, timeout=20)["state"] == "SUCCEEDED"
        big_job = eng.wait(big_id, timeout=20)
        assert big_job["state"] == "TIMED_OUT"
        assert big_job["failure_reason"] == "step budget exceeded"
        assert big_job["result"] is None
        with pytest.raises(EspError) as exc:
            eng.job_result(big_id, SUPER)
        assert exc.value.code == "FAILED_JOB"
        assert exc.value.details["failure"]["state"] == "TIMED_OUT"
        archive = store.get_archive(big_id)
        assert archive.results_hash == content_hash(big_job["failure"])
    finally:
        eng.shutdown()


def test_wall_clock_watchdog_and_sibling_isolation(store):
    policy = WatchdogPolicy(wall_clock_timeout=0.6, step_budget=10**8,
                            check_interval=0.1)
    eng = ComputeEngine(store, policy=policy, workers=2, step_sleep=0.001)
    try:
        slow = _chain_doc(5000)
        slow["name"] = "slow"
        store.upload_version("slow", slow, SUPER)
        quick = _chain_doc(30)
        quick["name"] = "quick"
        store.upload_version("quick", quick, SUPER)

        started = time.monotonic()
        slow_id = eng.submit_job(
            {"model_name": "slow", "version": 1, "mode": "SINGLE",
             "input_bindings": {"x": 1.0}}, SUPER)
        quick_id = eng.submit_job(
            {"model_name": "quick", "version": 1, "mode": "SINGLE",
             "input_bindings": {"x": 1.0}}, SUPER)

        quick_job = eng.wait(quick_id, timeout=10)
        assert quick_job["state"] == "SUCCEEDED"  # sibling unaffected

        slow_job = eng.wait(slow_id, timeout=10)
        elapsed = time.monotonic() - started
        assert slow_job["state"] == "TIMED_OUT"
        assert slow_job["failure_reason"] == "wall clock timeout exceeded"
        # terminal within timeout + 2 * check_interval, with margin for CI
        assert elapsed < 0.6 + 2 * 0.1 + 0.7
        with pytest.raises(EspError) as exc:
            eng.job_result(slow_id, SUPER)
        assert exc.value.code == "FAILED_JOB"
    finally:
        eng.shutdown()


def test_eval_error_job_fails_with_iteration(store, engine):
    doc = {
        "name": "poison",
        "sheets": [{"name": "S", "cells": {
            "A1": {"v": 0.0}, "B1": {"f": "=IF(A1<-2,1/0,0)"},
        }}],
        "inputs": [{"name": "x_terminal", "cell": "S!A1", "dtype": "Number"}],
        "outputs": [{"name": "loss", "cell": "S!B1", "dtype": "Number"}],
    }
    store.upload_version("poison", doc, SUPER)
    ref = store.put_scenario_spec(SCENARIO, SUPER)
    job_id = engine.submit_job(
        {"model_name": "poison", "version": 1, "mode": "MONTE_CARLO",
         "input_bindings": {}, "seed": 3, "iterations": 500,
         "scenario_spec_ref": ref,
         "metric_bindings": {"loss_output": "loss", "exposure": 1.0}},
        SUPER,
    )
    job = engine.wait(job_id, timeout=30)
    assert job["state"] == "FAILED"
    assert job["failure_reason"].startswith("EVAL")
    assert isinstance(job["failure"]["details"]["iteration"], int)


def test_locked_field_override_rejected_end_to_end(store, engine):
    doc = {
        "name": "lockbox",
        "sheets": [{"name": "S", "cells": {"A1": {"v": 0.25}, "B1": {"f": "=A1*4"}}}],
        "inputs": [{"name": "haircut", "cell": "S!A1", "dtype": "Number",
                    "locked": True, "default": 0.25}],
        "outputs": [{"name": "y", "cell": "S!B1", "dtype": "Number"}],
    }
    _publish(store, doc, {"y": 1.0}, {})
    with pytest.raises(EspError) as exc:
        engine.submit_job(
            {"model_name": "lockbox", "mode": "SINGLE",
             "input_bindings": {"haircut": 0.10}},
            USER,
        )
    assert exc.value.code == "VALIDATION"
    assert exc.value.details["violations"][0]["kind"] == "locked-override"
    # the locked default is applied instead of any override
    job_id = engine.submit_job(
        {"model_name": "lockbox", "mode": "SINGLE", "input_bindings": {}}, USER)
    engine.wait(job_id, timeout=10)
    assert engine.job_result(job_id, USER)["result"]["outputs"]["y"] == 1.0
