"""Acceptance gate: one test per release criterion, at its stated
tolerance. The conftest hook prints a visible pass/fail line per
criterion. Statistical criteria use fixed seeds, so runs are
reproducible."""

from __future__ import annotations

import json
import random
import struct
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient
from scipy.stats import norm

from esp.canonical import canonical_json
from esp.cli import main as cli_main
from esp.engine import ComputeEngine, WatchdogPolicy
from esp.errors import EspError
from esp.mc import MetricBindings, cholesky, parse_scenario_spec, run_simulation
from esp.service import User, create_app
from esp.store import Actor, ModelStore, parse_standard_test
from esp.workbook import (
    CellError,
    EvalSession,
    evaluate_all,
    parse_workbook,
)
from oracle.mini_eval import MiniWorkbook
from wbgen import make_bench_doc, random_bindings, random_workbook

SUPER = Actor("meg", "SUPERUSER")
USER_ACTOR = Actor("eddie", "ENDUSER")

ANALYTIC_DOC = {
    "name": "analytic",
    "sheets": [{"name": "S", "cells": {
        "A1": {"v": 0.0}, "B1": {"f": "=IF(A1<-1.645,1,0)"},
    }}],
    "inputs": [{"name": "x_terminal", "cell": "S!A1", "dtype": "Number"}],
    "outputs": [{"name": "loss", "cell": "S!B1", "dtype": "Number"}],
}

SINGLE_NORMAL_SPEC = {
    "variables": [{"name": "x", "process": "ADDITIVE", "initial_value": 0.0,
                   "drift": 0.0, "volatility": 1.0, "input_binding_prefix": "x"}],
    "horizon": 1, "correlation": [[1.0]],
}

METRICS = {"loss_output": "loss", "exposure": 1.0}


def _publish_analytic(store: ModelStore) -> str:
    store.upload_version("analytic", ANALYTIC_DOC, SUPER)
    store.attach_standard_tests("analytic", 1, [parse_standard_test({
        "test_id": "smoke", "input_bindings": {"x_terminal": 0.0},
        "expected_outputs": {"loss": 0.0},
    })], SUPER)
    assert store.run_standard_tests("analytic", 1, SUPER).passed
    store.promote_to_live("analytic", 1, SUPER)
    return store.put_scenario_spec(SINGLE_NORMAL_SPEC, SUPER)


def _mc_request(ref: str, seed: int = 123, iterations: int = 2000) -> dict:
    return {
        "model_name": "analytic", "mode": "MONTE_CARLO", "input_bindings": {},
        "seed": seed, "iterations": iterations, "scenario_spec_ref": ref,
        "metric_bindings": METRICS,
    }


def test_determinism_repeat_parallelism_and_cli_http_parity(tmp_path):
    """Identical (model, inputs, seed, N, scenario) must produce
    byte-identical canonical results across repeated runs, worker
    parallelism 1 vs 4, and CLI vs HTTP. Budget: under one minute."""
    started = time.monotonic()
    canonicals: list[bytes] = []

    # (a) repeated runs and (b) parallelism 1 vs 4
    for which, parallelism in (("first", 2), ("repeat", 2), ("par1", 1), ("par4", 4)):
        store = ModelStore(tmp_path / f"store_{which}")
        ref = _publish_analytic(store)
        engine = ComputeEngine(store, workers=2, mc_parallelism=parallelism,
                               mc_batch_size=128)
        try:
            job_id = engine.submit_job(_mc_request(ref), USER_ACTOR)
            job = engine.wait(job_id, timeout=60)
            assert job["state"] == "SUCCEEDED"
            canonicals.append(canonical_json(job["result"]))
        finally:
            engine.shutdown()

    # (c) HTTP
    store = ModelStore(tmp_path / "store_http")
    ref = _publish_analytic(store)
    engine = ComputeEngine(store, workers=2, mc_parallelism=2, mc_batch_size=128)
    users = {"tok": User("eddie", "Eddie", "ENDUSER", "tok")}
    client = TestClient(create_app(store, engine, users))
    try:
        job_id = client.post("/api/jobs", json=_mc_request(ref),
                             headers={"Authorization": "Bearer tok"}).json()["job_id"]
        engine.wait(job_id, timeout=60)
        envelope = client.get(f"/api/jobs/{job_id}/result",
                              headers={"Authorization": "Bearer tok"}).json()
        canonicals.append(canonical_json(envelope["result"]))
    finally:
        engine.shutdown()

    # (c) CLI
    model_file = tmp_path / "analytic.json"
    model_file.write_text(json.dumps(ANALYTIC_DOC))
    scenario_file = tmp_path / "scenario.json"
    scenario_file.write_text(json.dumps(SINGLE_NORMAL_SPEC))
    metrics_file = tmp_path / "metrics.json"
    metrics_file.write_text(json.dumps(METRICS))
    cli = CliRunner().invoke(cli_main, [
        "run", str(model_file), "--seed", "123", "--iterations", "2000",
        "--scenario", str(scenario_file), "--metrics", str(metrics_file),
    ], catch_exceptions=False)
    assert cli.exit_code == 0, cli.output
    canonicals.append(cli.output.strip().encode())

    assert all(blob == canonicals[0] for blob in canonicals[1:]), \
        "canonical results diverged across run modes"
    elapsed = time.monotonic() - started
    assert elapsed < 60.0, f"determinism suite took {elapsed:.1f}s"


def test_evaluator_oracle_corpus_coverage_and_exactness():
    """At least 20 workbooks covering every function, operator, error kind,
    and precedence rule; values from the independent brute-force script;
    exact for Text/Boolean/Error, <= 1e-12 relative for Number."""
    corpus = json.loads((Path(__file__).parent / "data" / "eval_corpus.json").read_text())
    assert len(corpus) >= 20

    all_formulas = " ".join(
        cell["f"]
        for case in corpus
        for sheet in case["doc"]["sheets"]
        for cell in sheet["cells"].values()
        if "f" in cell
    ).upper()
    for fn in ("SUM", "AVERAGE", "MIN", "MAX", "COUNT", "IF", "AND", "OR",
               "NOT", "ABS", "EXP", "LN", "SQRT", "NPV"):
        assert f"{fn}(" in all_formulas, f"function {fn} not covered"
    for op in ("+", "-", "*", "/", "^", "&", "=", "<>", "<", "<=", ">", ">="):
        assert op in all_formulas, f"operator {op} not covered"
    expected_errors = {
        entry["e"]
        for case in corpus for entry in case["expected"].values() if "e" in entry
    }
    assert expected_errors == {"#DIV/0!", "#REF!", "#VALUE!", "#CYCLE!", "#NAME?"}
    # pinned precedence rules present
    assert "=-2^2" in {c["f"] for case in corpus for sheet in case["doc"]["sheets"]
                       for c in sheet["cells"].values() if "f" in c}

    for case in corpus:
        model = parse_workbook(case["doc"])
        values = {ref.text(): v for ref, v in evaluate_all(model).items()}
        live = {k: v for k, v in MiniWorkbook(case["doc"]).all_values().items()}
        for key, expected in case["expected"].items():
            got = values[key]
            if "n" in expected:
                assert isinstance(got, float) and not isinstance(got, bool), (case["name"], key)
                want = expected["n"]
                tol = 1e-12 * max(abs(want), abs(got))
                assert got == want or abs(got - want) <= tol, (case["name"], key, got, want)
            elif "s" in expected:
                assert got == expected["s"], (case["name"], key)
            elif "b" in expected:
                assert got is expected["b"], (case["name"], key)
            elif "e" in expected:
                assert got == CellError(expected["e"]), (case["name"], key)
            else:
                assert repr(got) == "BLANK", (case["name"], key)
        # frozen file still matches a live oracle run
        assert len(live) == len(case["expected"])


def test_incremental_equals_full_on_500_random_workbooks():
    """500 randomized workbooks (<= 200 cells) x 10 rebinding steps each;
    incremental state must equal a from-scratch full pass bitwise."""
    rng = random.Random(0xE5B)
    mismatches = 0
    for index in range(500):
        doc = random_workbook(rng, max_cells=200)
        model = parse_workbook(doc)
        incremental = EvalSession(model)
        incremental.evaluate_all()
        accumulated: dict[str, float] = {}
        for _ in range(10):
            bindings = random_bindings(rng, doc)
            if not bindings:
                continue
            accumulated.update(bindings)
            incremental.set_inputs_and_recalculate(bindings)
            fresh = EvalSession(model, incremental.graph)
            for name, value in accumulated.items():
                fresh.overrides[model.input_field(name).cell] = value
            fresh.evaluate_all()
            if any(repr(incremental.values[k]) != repr(fresh.values[k])
                   for k in fresh.values):
                mismatches += 1
                break
    assert mismatches == 0


def test_cholesky_residuals_identity_and_not_pd():
    """max|LL^T - Sigma| < 1e-10 over 100 random SPD matrices with M up to
    200; identity factors to identity; indefinite input raises NOT_PD."""
    generator = np.random.default_rng(1729)
    sizes = [2] * 40 + [10] * 30 + [50] * 20 + [200] * 10
    for m in sizes:
        a = generator.normal(size=(m, m))
        sigma = a @ a.T / m + 0.1 * np.eye(m)
        lower = cholesky(sigma)
        assert np.abs(lower @ lower.T - sigma).max() < 1e-10, m

    assert np.array_equal(cholesky(np.eye(3)), np.eye(3))

    with pytest.raises(EspError) as exc:
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert exc.value.code == "NOT_PD" and exc.value.details["pivot"] == 2


def test_statistical_pd_oracle_and_shock_correlation():
    """Analytic workbook with PD = Phi(-1.645); 30 seeds x 100,000
    iterations; empirical pd within 3 stderr in >= 28/30 runs; sample
    shock correlation 0.5 +- 0.01 at 100,000 draws. Budget: five minutes."""
    started = time.monotonic()
    spec = parse_scenario_spec(SINGLE_NORMAL_SPEC)
    model = parse_workbook(ANALYTIC_DOC)
    bindings = MetricBindings("loss", exposure=1.0)
    expected_pd = float(norm.cdf(-1.645))
    n = 100_000
    stderr = (expected_pd * (1.0 - expected_pd) / n) ** 0.5

    def factory():
        session = EvalSession(model)
        session.evaluate_all()
        return session

    covered = 0
    for seed in range(30):
        result = run_simulation(factory, spec, {}, n, seed, bindings,
                                parallelism=1, batch_size=4096)
        if abs(result.metrics.pd - expected_pd) <= 3.0 * stderr:
            covered += 1
    assert covered >= 28, f"only {covered}/30 runs inside the 3-stderr band"

    corr_spec = parse_scenario_spec({
        "variables": [
            {"name": "a", "process": "ADDITIVE", "initial_value": 0.0,
             "drift": 0.0, "volatility": 1.0, "input_binding_prefix": "a"},
            {"name": "b", "process": "ADDITIVE", "initial_value": 0.0,
             "drift": 0.0, "volatility": 1.0, "input_binding_prefix": "b"},
        ],
        "horizon": 1, "correlation": [[1.0, 0.5], [0.5, 1.0]],
    })
    from esp.mc import ScenarioGenerator

    block = ScenarioGenerator(corr_spec, master_seed=4242).paths_block(range(100_000))
    shocks = block[:, :, 0]
    sample = float(np.corrcoef(shocks[:, 0], shocks[:, 1])[0, 1])
    assert abs(sample - 0.5) < 0.01

    elapsed = time.monotonic() - started
    assert elapsed < 300.0, f"statistical suite took {elapsed:.1f}s"


def test_governance_gate_unreachable_without_all_pass(tmp_path):
    """LIVE must be unreachable without an all-pass TEST_RUN for that exact
    version (exhaustive over short op sequences); end-user jobs against
    non-LIVE models are rejected; locked overrides are rejected over HTTP."""
    import itertools

    good_tests = [parse_standard_test({
        "test_id": "t", "input_bindings": {"x": 3.0}, "expected_outputs": {"y": 6.0},
    })]
    bad_tests = [parse_standard_test({
        "test_id": "t", "input_bindings": {"x": 3.0}, "expected_outputs": {"y": 7.0},
    })]
    doc = {
        "name": "m",
        "sheets": [{"name": "S", "cells": {"A1": {"v": 1.0}, "B1": {"f": "=A1*2"}}}],
        "inputs": [{"name": "x", "cell": "S!A1", "dtype": "Number"}],
        "outputs": [{"name": "y", "cell": "S!B1", "dtype": "Number"}],
    }
    ops = {
        "upload": lambda s: s.upload_version("m", doc, SUPER),
        "attach_good": lambda s: s.attach_standard_tests("m", 1, good_tests, SUPER),
        "attach_bad": lambda s: s.attach_standard_tests("m", 1, bad_tests, SUPER),
        "run": lambda s: s.run_standard_tests("m", 1, SUPER),
        "promote": lambda s: s.promote_to_live("m", 1, SUPER),
    }
    live_reached = 0
    for depth in (3, 4):
        for sequence in itertools.product(ops, repeat=depth):
            probe = ModelStore(tmp_path / f"probe{depth}_{abs(hash(sequence))}")
            try:
                all_pass = False
                for step in sequence:
                    try:
                        outcome = ops[step](probe)
                    except EspError:
                        continue
                    if step == "run" and outcome.passed:
                        all_pass = True
                    try:
                        probe.resolve_live("m")
                        live = True
                    except EspError:
                        live = False
                    if live:
                        live_reached += 1
                        assert all_pass, f"LIVE without all-pass run: {sequence}"
                        audited = [r.action for r in probe.audit.records()]
                        assert "TEST_RUN" in audited
            finally:
                probe.close()
    assert live_reached > 0

    # end-user job against a model with only DRAFT versions
    store = ModelStore(tmp_path / "gate_store")
    store.upload_version("m", doc, SUPER)
    engine = ComputeEngine(store, workers=1)
    try:
        with pytest.raises(EspError) as exc:
            engine.submit_job({"model_name": "m", "mode": "SINGLE",
                               "input_bindings": {"x": 1.0}}, USER_ACTOR)
        assert exc.value.code == "NO_LIVE_VERSION"
    finally:
        engine.shutdown()

    # locked-field override rejected end to end (HTTP boundary)
    locked_doc = {
        "name": "lockbox",
        "sheets": [{"name": "S", "cells": {"A1": {"v": 0.25}, "B1": {"f": "=A1*4"}}}],
        "inputs": [{"name": "haircut", "cell": "S!A1", "dtype": "Number",
                    "locked": True, "default": 0.25}],
        "outputs": [{"name": "y", "cell": "S!B1", "dtype": "Number"}],
    }
    store2 = ModelStore(tmp_path / "locked_store")
    store2.upload_version("lockbox", locked_doc, SUPER)
    store2.attach_standard_tests("lockbox", 1, [parse_standard_test({
        "test_id": "t", "input_bindings": {}, "expected_outputs": {"y": 1.0},
    })], SUPER)
    assert store2.run_standard_tests("lockbox", 1, SUPER).passed
    store2.promote_to_live("lockbox", 1, SUPER)
    engine2 = ComputeEngine(store2, workers=1)
    users = {"tok": User("eddie", "Eddie", "ENDUSER", "tok")}
    client = TestClient(create_app(store2, engine2, users))
    try:
        response = client.post("/api/jobs", json={
            "model_name": "lockbox", "mode": "SINGLE",
            "input_bindings": {"haircut": 0.10},
        }, headers={"Authorization": "Bearer tok"})
        assert response.status_code == 422
        violations = response.json()["details"]["violations"]
        assert violations[0]["kind"] == "locked-override"
    finally:
        engine2.shutdown()


def test_watchdog_timeout_no_partials_sibling_completes(tmp_path):
    """An oversized job under a lowered budget reaches TIMED_OUT within
    timeout + 0.5 s, exposes no partial results anywhere, and a queued
    sibling still completes."""
    store = ModelStore(tmp_path / "store")
    cells = {"A1": {"v": 1.0}}
    for i in range(2, 20_001):
        cells[f"A{i}"] = {"f": f"=A{i - 1}+1"}
    store.upload_version("huge", {
        "name": "huge", "sheets": [{"name": "S", "cells": cells}],
        "inputs": [{"name": "x", "cell": "S!A1", "dtype": "Number"}],
        "outputs": [{"name": "out", "cell": "S!A20000", "dtype": "Number"}],
    }, SUPER)
    small = {
        "name": "small",
        "sheets": [{"name": "S", "cells": {"A1": {"v": 1.0}, "B1": {"f": "=A1+1"}}}],
        "inputs": [{"name": "x", "cell": "S!A1", "dtype": "Number"}],
        "outputs": [{"name": "out", "cell": "S!B1", "dtype": "Number"}],
    }
    store.upload_version("small", small, SUPER)

    policy = WatchdogPolicy(wall_clock_timeout=1.0, step_budget=5000, check_interval=0.25)
    engine = ComputeEngine(store, policy=policy, workers=2)
    try:
        started = time.monotonic()
        huge_id = engine.submit_job({"model_name": "huge", "version": 1,
                                     "mode": "SINGLE", "input_bindings": {"x": 1.0}},
                                    SUPER)
        small_id = engine.submit_job({"model_name": "small", "version": 1,
                                      "mode": "SINGLE", "input_bindings": {"x": 1.0}},
                                     SUPER)
        huge_job = engine.wait(huge_id, timeout=10)
        elapsed = time.monotonic() - started
        assert huge_job["state"] == "TIMED_OUT"
        assert elapsed < 1.0 + 0.5, f"took {elapsed:.2f}s to reach TIMED_OUT"
        small_job = engine.wait(small_id, timeout=10)
        assert small_job["state"] == "SUCCEEDED"

        # no partial results through any surface
        assert huge_job["result"] is None
        with pytest.raises(EspError) as exc:
            engine.job_result(huge_id, SUPER)
        assert exc.value.code == "FAILED_JOB"
        assert "outputs" not in json.dumps(exc.value.details)
        archive = store.get_archive(huge_id)
        from esp.canonical import content_hash

        assert archive.results_hash == content_hash(huge_job["failure"])
    finally:
        engine.shutdown()


def test_audit_tamper_byte_flip_deletion_reorder(tmp_path):
    """Each tamper class is detected with the correct first-bad index."""
    from esp.store import AuditLog

    length_prefix = struct.Struct(">I")

    def read_raw(path):
        records, data, pos = [], path.read_bytes(), 0
        while pos < len(data):
            (length,) = length_prefix.unpack(data[pos:pos + 4])
            records.append(data[pos + 4:pos + 4 + length])
            pos += 4 + length
        return records

    def write_raw(path, records):
        with path.open("wb") as fh:
            for blob in records:
                fh.write(length_prefix.pack(len(blob)))
                fh.write(blob)

    def fresh_log(name):
        log = AuditLog(tmp_path / name)
        for i in range(10):
            log.append(f"user{i % 2}", "UPLOAD", f"m/{i + 1}", {"i": i})
        return log

    log = fresh_log("flip.log")
    records = read_raw(log.path)
    mutated = bytearray(records[3])
    idx = mutated.find(b"m/4")
    mutated[idx + 2] ^= 0x02
    records[3] = bytes(mutated)
    write_raw(log.path, records)
    assert AuditLog(log.path).verify() == (False, 4)

    log = fresh_log("delete.log")
    records = read_raw(log.path)
    del records[6]
    write_raw(log.path, records)
    assert AuditLog(log.path).verify() == (False, 7)

    log = fresh_log("reorder.log")
    records = read_raw(log.path)
    records[2], records[3] = records[3], records[2]
    write_raw(log.path, records)
    assert AuditLog(log.path).verify() == (False, 3)


CAPACITY_RATE = {}


def test_capacity_200_variables_80_periods(tmp_path):
    """M = 200 variables over T = 80 periods, N = 1,000 iterations through
    the real engine under the default watchdog."""
    m, t, n = 200, 80, 1000
    cells = {}
    inputs = []
    for i in range(m):
        cells[f"A{i + 1}"] = {"v": 1.0}
        inputs.append({"name": f"v{i}_terminal", "cell": f"S!A{i + 1}",
                       "dtype": "Number"})
    cells["B1"] = {"f": f"=MAX(0,SUM(A1:A{m})/{m}-1)"}
    doc = {"name": "capacity", "sheets": [{"name": "S", "cells": cells}],
           "inputs": inputs,
           "outputs": [{"name": "loss", "cell": "S!B1", "dtype": "Number"}]}
    corr = (np.eye(m) * 0.85 + np.full((m, m), 0.15)).tolist()
    spec_doc = {
        "variables": [{"name": f"v{i}", "process": "MULTIPLICATIVE",
                       "initial_value": 1.0, "drift": 0.0, "volatility": 0.02,
                       "input_binding_prefix": f"v{i}"} for i in range(m)],
        "horizon": t, "correlation": corr,
    }
    store = ModelStore(tmp_path / "store")
    store.upload_version("capacity", doc, SUPER)
    ref = store.put_scenario_spec(spec_doc, SUPER)
    engine = ComputeEngine(store, policy=WatchdogPolicy(), workers=1,
                           mc_parallelism=2, mc_batch_size=128)
    try:
        started = time.monotonic()
        job_id = engine.submit_job({
            "model_name": "capacity", "version": 1, "mode": "MONTE_CARLO",
            "input_bindings": {}, "seed": 42, "iterations": n,
            "scenario_spec_ref": ref,
            "metric_bindings": {"loss_output": "loss", "exposure": 1.0},
            "iteration_table": False,
        }, SUPER)
        job = engine.wait(job_id, timeout=90)
        elapsed = time.monotonic() - started
        assert job["state"] == "SUCCEEDED", job["failure_reason"]
        assert elapsed < WatchdogPolicy().wall_clock_timeout
        CAPACITY_RATE["iterations_per_second"] = n / elapsed
        print(f"\ncapacity scenario: {n} iterations in {elapsed:.1f}s "
              f"({n / elapsed:.0f} iterations/second)")
    finally:
        engine.shutdown()


def test_performance_proxy_incremental_speedup(tmp_path):
    """`esp bench` must show incremental recalculation >= 2x faster than
    full recomputation on a 1,000-formula-cell workbook with 5 rebindable
    inputs, and report an iterations/second figure."""
    doc = make_bench_doc(formula_cells=1000, inputs=5)
    model_file = tmp_path / "bench.json"
    model_file.write_text(json.dumps(doc))
    result = CliRunner().invoke(cli_main, [
        "bench", "--model", str(model_file), "--iterations", "100", "--json",
    ], catch_exceptions=False)
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["formula_cells"] == 1000
    assert report["rebindable_inputs"] == 5
    assert report["speedup"] >= 2.0, f"speedup only {report['speedup']:.2f}x"
    assert report["incremental_per_second"] > 0
    print(f"\nbench: speedup {report['speedup']:.1f}x, "
          f"{report['incremental_per_second']:.0f} incremental recalcs/second"
          + (f"; capacity {CAPACITY_RATE['iterations_per_second']:.0f} iterations/second"
             if CAPACITY_RATE else ""))
