"""Operator command line.

Exit codes: 0 success, 1 operation error, 2 usage error. ``--json``
switches machine-readable output on. ``run`` executes a workbook file
through the full engine locally (no server, auth bypassed) but still
writes a real store, temporary by default, so archival and audit
invariants hold offline; its stdout is the same canonical result JSON
the server's result endpoint carries.
"""

from __future__ import annotations

import functools
import json
import random
import sys
import tempfile
import time
from pathlib import Path

import click
import httpx

from .canonical import canonical_json
from .engine import ComputeEngine, WatchdogPolicy
from .errors import EspError
from .service import load_config, load_users
from .store import Actor, ModelStore
from .workbook import EvalSession, parse_workbook

LOCAL_SUPERUSER = Actor("local", "SUPERUSER")


def _operation_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except EspError as exc:
            click.echo(json.dumps(exc.envelope()), err=True)
            sys.exit(1)
        except httpx.HTTPError as exc:
            click.echo(json.dumps({"code": "HTTP", "message": str(exc), "details": {}}),
                       err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main() -> None:
    """Governed spreadsheet compute platform."""


# -- server ---------------------------------------------------------------


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Config file (or ESP_CONFIG).")
@_operation_errors
def serve(config_path: str | None) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    config = load_config(config_path)
    if not config.users_path:
        raise EspError("FORMAT", "config must name a 'users' file to serve")
    users = load_users(config.users_path)
    store = ModelStore(config.store_path)
    engine = ComputeEngine(
        store, policy=config.watchdog, workers=config.workers,
        mc_parallelism=config.mc_parallelism, mc_batch_size=config.mc_batch_size,
    )
    app = create_app(store, engine, users, frontend_dir=config.frontend_path)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")


# -- HTTP client commands ----------------------------------------------------


def _client(url: str, token: str) -> httpx.Client:
    return httpx.Client(base_url=url, headers={"Authorization": f"Bearer {token}"},
                        timeout=60.0)


def _check(response: httpx.Response) -> dict:
    body = response.json()
    if response.status_code >= 400:
        raise EspError(body.get("code", "HTTP"), body.get("message", response.text),
                       body.get("details", {}))
    return body


_url_option = click.option("--url", default="http://127.0.0.1:8030", show_default=True)
_token_option = click.option("--token", required=True, help="API bearer token.")
_json_option = click.option("--json", "as_json", is_flag=True, help="JSON output.")


@main.command()
@click.argument("model")
@click.argument("file", type=click.Path(exists=True))
@_url_option
@_token_option
@_json_option
@_operation_errors
def upload(model: str, file: str, url: str, token: str, as_json: bool) -> None:
    """Upload a workbook document as a new DRAFT version."""
    doc = json.loads(Path(file).read_text())
    if doc.get("name") != model:
        raise EspError("BAD_REQUEST", f"document is named {doc.get('name')!r}, not {model!r}")
    with _client(url, token) as client:
        body = _check(client.post("/api/models", json=doc))
    click.echo(json.dumps(body) if as_json
               else f"{body['model_name']} version {body['version']} ({body['status']})")


@main.command()
@click.argument("model")
@click.argument("version", type=int)
@_url_option
@_token_option
@_json_option
@_operation_errors
def promote(model: str, version: int, url: str, token: str, as_json: bool) -> None:
    """Promote a TESTED version to LIVE."""
    with _client(url, token) as client:
        body = _check(client.post(f"/api/models/{model}/{version}/promote"))
    click.echo(json.dumps(body) if as_json
               else f"{model} version {version} is now {body['status']}")


@main.group()
def tests() -> None:
    """Manage and run a version's standard tests."""


@tests.command("attach")
@click.argument("model")
@click.argument("version", type=int)
@click.argument("file", type=click.Path(exists=True))
@_url_option
@_token_option
@_json_option
@_operation_errors
def tests_attach(model: str, version: int, file: str, url: str, token: str,
                 as_json: bool) -> None:
    """Attach the battery in FILE (JSON list of tests)."""
    battery = json.loads(Path(file).read_text())
    if isinstance(battery, dict):
        battery = battery.get("tests", [])
    with _client(url, token) as client:
        body = _check(client.put(f"/api/models/{model}/{version}/tests",
                                 json={"tests": battery}))
    click.echo(json.dumps(body) if as_json else f"attached {body['count']} tests")


@tests.command("run")
@click.argument("model")
@click.argument("version", type=int)
@_url_option
@_token_option
@_json_option
@_operation_errors
def tests_run(model: str, version: int, url: str, token: str, as_json: bool) -> None:
    """Run the attached battery; exits 1 unless every test passes."""
    with _client(url, token) as client:
        body = _check(client.post(f"/api/models/{model}/{version}/test-run"))
    if as_json:
        click.echo(json.dumps(body))
    else:
        for outcome in body["results"]:
            click.echo(f"{outcome['test_id']}: {'pass' if outcome['passed'] else 'FAIL'}")
        click.echo(f"battery: {'pass' if body['passed'] else 'FAIL'}"
                   f" (status {body['status_after']})")
    if not body["passed"]:
        sys.exit(1)


# -- local one-shot execution ---------------------------------------------------


@main.command()
@click.argument("model_file", type=click.Path(exists=True))
@click.option("--inputs", "inputs_file", type=click.Path(exists=True), default=None,
              help="JSON object of input bindings.")
@click.option("--seed", type=int, default=None, help="Monte Carlo master seed.")
@click.option("--iterations", type=int, default=None, help="Monte Carlo iterations.")
@click.option("--scenario", "scenario_file", type=click.Path(exists=True), default=None,
              help="Scenario spec JSON (switches to MONTE_CARLO mode).")
@click.option("--metrics", "metrics_file", type=click.Path(exists=True), default=None,
              help="Metric bindings JSON (required with --scenario).")
@click.option("--store", "store_path", type=click.Path(), default=None,
              help="Store directory (temporary by default).")
@click.option("--no-table", is_flag=True, help="Drop the per-iteration table.")
@_operation_errors
def run(model_file: str, inputs_file: str | None, seed: int | None,
        iterations: int | None, scenario_file: str | None,
        metrics_file: str | None, store_path: str | None, no_table: bool) -> None:
    """Execute MODEL_FILE locally and print the canonical result JSON."""
    bindings = json.loads(Path(inputs_file).read_text()) if inputs_file else {}
    doc = json.loads(Path(model_file).read_text())

    with tempfile.TemporaryDirectory() as tmp:
        store = ModelStore(store_path or Path(tmp) / "store")
        engine = ComputeEngine(store, workers=1, mc_parallelism=1)
        try:
            version = store.upload_version(doc.get("name", ""), doc, LOCAL_SUPERUSER)
            request: dict = {
                "model_name": version.model_name,
                "version": version.version,
                "input_bindings": bindings,
                "mode": "SINGLE",
            }
            if scenario_file is not None:
                if metrics_file is None or seed is None or iterations is None:
                    raise EspError(
                        "BAD_REQUEST",
                        "--scenario requires --metrics, --seed, and --iterations",
                    )
                ref = store.put_scenario_spec(
                    json.loads(Path(scenario_file).read_text()), LOCAL_SUPERUSER
                )
                request.update({
                    "mode": "MONTE_CARLO",
                    "seed": seed,
                    "iterations": iterations,
                    "scenario_spec_ref": ref,
                    "metric_bindings": json.loads(Path(metrics_file).read_text()),
                })
                if no_table:
                    request["iteration_table"] = False
            job_id = engine.submit_job(request, LOCAL_SUPERUSER)
            job = engine.wait(job_id)
            if job["state"] != "SUCCEEDED":
                raise EspError(
                    "FAILED_JOB", f"job {job['state']}: {job['failure_reason']}",
                    {"failure": job["failure"]},
                )
            sys.stdout.write(canonical_json(job["result"]).decode() + "\n")
        finally:
            engine.shutdown()
            store.close()


# -- offline audit verification ---------------------------------------------------


@main.command("audit")
@click.argument("subcommand", type=click.Choice(["verify"]))
@click.option("--store", "store_path", type=click.Path(exists=True), required=True)
@_json_option
@_operation_errors
def audit(subcommand: str, store_path: str, as_json: bool) -> None:
    """Offline audit chain verification against a store directory."""
    from .store import AuditLog

    log = AuditLog(Path(store_path) / "audit.log")
    ok, first_bad = log.verify()
    if as_json:
        click.echo(json.dumps({"ok": ok, "first_bad_sequence": first_bad}))
    elif ok:
        click.echo("audit chain intact")
    else:
        click.echo(f"audit chain BROKEN at sequence {first_bad}")
    if not ok:
        sys.exit(1)


# -- benchmark ----------------------------------------------------------------------


@main.command()
@click.option("--model", "model_file", type=click.Path(exists=True), required=True)
@click.option("--iterations", type=int, default=200, show_default=True)
@_json_option
@_operation_errors
def bench(model_file: str, iterations: int, as_json: bool) -> None:
    """Compare incremental recalculation against full recomputation."""
    model = parse_workbook(Path(model_file).read_text())
    rebindable = [fld for fld in model.input_schema
                  if not fld.locked and fld.dtype == "Number"]
    if not rebindable:
        raise EspError("SCHEMA", "model has no rebindable Number inputs to bench")
    rng = random.Random(0)
    cycles = [
        {fld.name: rng.uniform(fld.min if fld.min is not None else 0.0,
                               fld.max if fld.max is not None else 1.0)
         for fld in rebindable}
        for _ in range(iterations)
    ]

    session = EvalSession(model)
    session.evaluate_all()
    formula_cells = session.eval_count

    started = time.perf_counter()
    for bindings in cycles:
        session.set_inputs_and_recalculate(bindings)
    incremental_seconds = time.perf_counter() - started

    started = time.perf_counter()
    for bindings in cycles:
        fresh = EvalSession(model, session.graph)
        for name, value in bindings.items():
            fresh.overrides[model.input_field(name).cell] = value
        fresh.evaluate_all()
    full_seconds = time.perf_counter() - started

    report = {
        "model": model.name,
        "formula_cells": formula_cells,
        "rebindable_inputs": len(rebindable),
        "iterations": iterations,
        "incremental_seconds": incremental_seconds,
        "full_seconds": full_seconds,
        "speedup": full_seconds / incremental_seconds if incremental_seconds > 0 else float("inf"),
        "incremental_per_second": iterations / incremental_seconds if incremental_seconds > 0 else float("inf"),
    }
    if as_json:
        click.echo(json.dumps(report))
    else:
        click.echo(f"{report['model']}: {formula_cells} formula cells, "
                   f"{len(rebindable)} rebindable inputs, {iterations} cycles")
        click.echo(f"incremental: {incremental_seconds:.4f}s "
                   f"({report['incremental_per_second']:.0f}/s)")
        click.echo(f"full:        {full_seconds:.4f}s")
        click.echo(f"speedup:     {report['speedup']:.1f}x")


if __name__ == "__main__":
    main()
