"""HTTP/JSON facade over the store and engine.

Every error surfaces as the uniform envelope ``{code, message, details}``.
End-users never receive workbook bytes through any endpoint: the download
route is superuser-only and everything else serves metadata, schemas,
job status, and results. Mutating operations append their audit record
inside the store call, before the response is acknowledged.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from ..engine import ComputeEngine
from ..errors import EspError
from ..store import ModelStore, parse_standard_test
from .auth import AuthenticationError, User, authenticate

_STATUS_BY_CODE = {
    "AUTH": 403,
    "FORBIDDEN": 403,
    "NOT_FOUND": 404,
    "VALIDATION": 422,
    "BAD_REQUEST": 400,
    "FORMAT": 400,
    "PARSE": 400,
    "SCHEMA": 400,
    "NOT_PD": 400,
    "DUPLICATE": 409,
    "IMMUTABLE": 409,
    "NOT_TESTED": 409,
    "NO_TESTS": 409,
    "NO_LIVE_VERSION": 409,
    "NOT_READY": 409,
    "FAILED_JOB": 409,
    "EMPTY": 400,
    "CORRUPT": 500,
    "INTERNAL": 500,
}


def create_app(
    store: ModelStore,
    engine: ComputeEngine,
    users: dict[str, User],
    frontend_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="esp", docs_url=None, redoc_url=None, openapi_url=None)

    @app.exception_handler(EspError)
    async def esp_error_handler(_req: Request, exc: EspError) -> JSONResponse:
        status = 401 if isinstance(exc, AuthenticationError) else _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(status_code=status, content=exc.envelope())

    @app.exception_handler(RequestValidationError)
    async def body_error_handler(_req: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=400,
            content={"code": "BAD_REQUEST", "message": "malformed request", "details": {}},
        )

    @app.exception_handler(StarletteHTTPException)
    async def http_error_handler(_req: Request, exc: StarletteHTTPException) -> JSONResponse:
        code = "NOT_FOUND" if exc.status_code == 404 else "BAD_REQUEST"
        return JSONResponse(
            status_code=exc.status_code,
            content={"code": code, "message": str(exc.detail), "details": {}},
        )

    def current_user(request: Request, *roles: str) -> User:
        user = authenticate(users, request.headers.get("Authorization"))
        if roles and user.role not in roles:
            raise EspError(
                "FORBIDDEN",
                f"endpoint requires one of {sorted(roles)}; {user.user_id!r} is {user.role}",
            )
        return user

    async def body_of(request: Request) -> Any:
        try:
            return json.loads(await request.body() or b"null")
        except ValueError as exc:
            raise EspError("FORMAT", f"request body is not valid JSON: {exc}") from exc

    # -- session ---------------------------------------------------------------

    @app.get("/api/me")
    async def me(request: Request) -> dict:
        return current_user(request).to_json()

    # -- models ------------------------------------------------------------------

    @app.post("/api/models", status_code=201)
    async def upload_model(request: Request) -> dict:
        user = current_user(request, "SUPERUSER")
        doc = await body_of(request)
        if not isinstance(doc, dict) or not isinstance(doc.get("name"), str):
            raise EspError("FORMAT", "body must be a workbook document with a 'name'")
        record = store.upload_version(doc["name"], doc, user.actor)
        return record.to_json()

    @app.get("/api/models")
    async def list_models(request: Request) -> dict:
        current_user(request)
        return {"models": store.list_models()}

    @app.get("/api/models/{name}/versions")
    async def list_versions(request: Request, name: str) -> dict:
        current_user(request)
        return {"versions": [v.to_json() for v in store.list_versions(name)]}

    @app.get("/api/models/{name}/schema")
    async def model_schema(request: Request, name: str) -> dict:
        current_user(request)
        live = store.resolve_live(name)
        model, _ = store.load_model(name, live.version)
        return {
            "model_name": name,
            "version": live.version,
            "inputs": [fld.to_json() for fld in model.input_schema],
            "outputs": [fld.to_json() for fld in model.output_schema],
        }

    @app.get("/api/models/{name}/{version}/download")
    async def download_model(request: Request, name: str, version: int) -> Response:
        user = current_user(request, "SUPERUSER")
        blob = store.download_version(name, version, user.actor)
        return Response(content=blob, media_type="application/json")

    @app.put("/api/models/{name}/{version}/tests")
    async def attach_tests(request: Request, name: str, version: int) -> dict:
        user = current_user(request, "SUPERUSER")
        doc = await body_of(request)
        raw = doc.get("tests") if isinstance(doc, dict) else None
        if not isinstance(raw, list):
            raise EspError("FORMAT", "body must be {'tests': [...]}")
        tests = [parse_standard_test(entry) for entry in raw]
        count = store.attach_standard_tests(name, version, tests, user.actor)
        return {"count": count}

    @app.post("/api/models/{name}/{version}/test-run")
    async def run_tests(request: Request, name: str, version: int) -> dict:
        user = current_user(request, "SUPERUSER")
        return store.run_standard_tests(name, version, user.actor).to_json()

    @app.post("/api/models/{name}/{version}/promote")
    async def promote(request: Request, name: str, version: int) -> dict:
        user = current_user(request, "SUPERUSER")
        return store.promote_to_live(name, version, user.actor).to_json()

    # -- scenario specs -------------------------------------------------------------

    @app.post("/api/scenarios", status_code=201)
    async def put_scenario(request: Request) -> dict:
        user = current_user(request, "SUPERUSER")
        ref = store.put_scenario_spec(await body_of(request), user.actor)
        return {"ref": ref}

    @app.get("/api/scenarios")
    async def list_scenarios(request: Request) -> dict:
        current_user(request)
        return {"scenarios": store.list_scenario_specs()}

    @app.get("/api/scenarios/{ref}")
    async def get_scenario(request: Request, ref: str) -> dict:
        current_user(request)
        return store.get_scenario_spec(ref).to_json()

    # -- jobs --------------------------------------------------------------------

    @app.post("/api/jobs", status_code=201)
    async def submit_job(request: Request) -> dict:
        user = current_user(request)
        job_id = engine.submit_job(await body_of(request), user.actor)
        return {"job_id": job_id}

    @app.get("/api/jobs/{job_id}")
    async def job_status(request: Request, job_id: str) -> dict:
        user = current_user(request)
        return engine.job_status(job_id, user.actor)

    @app.get("/api/jobs/{job_id}/result")
    async def job_result(request: Request, job_id: str) -> dict:
        user = current_user(request)
        return engine.job_result(job_id, user.actor)

    @app.get("/api/jobs/{job_id}/result.csv")
    async def job_result_csv(request: Request, job_id: str) -> Response:
        user = current_user(request)
        envelope = engine.job_result(job_id, user.actor)
        return Response(
            content=render_result_csv(envelope["result"]),
            media_type="text/csv; charset=utf-8",
        )

    # -- batch import -----------------------------------------------------------------

    @app.post("/api/import", status_code=201)
    async def import_batch(request: Request) -> dict:
        user = current_user(request)
        doc = await body_of(request)
        return import_rows(engine, doc, user)

    # -- audit -------------------------------------------------------------------------

    @app.get("/api/audit")
    async def audit_page(request: Request, offset: int = 0, limit: int = 100) -> dict:
        current_user(request, "ADMIN", "SUPERUSER")
        records = store.audit.records(offset=offset, limit=min(max(limit, 1), 1000))
        return {
            "records": [r.to_json() for r in records],
            "total": len(store.audit),
            "offset": offset,
        }

    @app.get("/api/audit/verify")
    async def audit_verify(request: Request) -> dict:
        current_user(request, "ADMIN", "SUPERUSER")
        ok, first_bad = store.verify_audit_chain()
        return {"ok": ok, "first_bad_sequence": first_bad}

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app


def import_rows(engine: ComputeEngine, doc: Any, user: User) -> dict:
    """Expand an import batch into one job per row, atomically: either every
    row validates and every row gets a job, or nothing is submitted."""
    if not isinstance(doc, dict):
        raise EspError("FORMAT", "import batch must be a JSON object")
    model_name = doc.get("model_name")
    rows = doc.get("rows")
    mode = doc.get("mode", "SINGLE")
    shared = doc.get("shared", {})
    if not isinstance(model_name, str) or not isinstance(rows, list) or not rows:
        raise EspError("FORMAT", "import batch needs 'model_name' and nonempty 'rows'")
    if not isinstance(shared, dict):
        raise EspError("FORMAT", "'shared' must be an object")

    seen_ids: set[str] = set()
    requests: list[tuple[str, Any]] = []
    for ordinal, row in enumerate(rows):
        if not isinstance(row, dict) or not isinstance(row.get("row_id"), str):
            raise EspError("FORMAT", f"row {ordinal}: needs a string 'row_id'")
        row_id = row["row_id"]
        if row_id in seen_ids:
            raise EspError("SCHEMA", f"duplicate row_id {row_id!r}")
        seen_ids.add(row_id)
        body: dict[str, Any] = {
            "model_name": model_name,
            "mode": mode,
            "input_bindings": row.get("input_bindings", {}),
        }
        if "version" in doc:
            body["version"] = doc["version"]
        if mode == "MONTE_CARLO":
            base_seed = shared.get("base_seed")
            if isinstance(base_seed, bool) or not isinstance(base_seed, int):
                raise EspError("SCHEMA", "MONTE_CARLO batches need an integer shared.base_seed")
            body.update({
                "seed": base_seed + ordinal,
                "iterations": shared.get("iterations"),
                "scenario_spec_ref": shared.get("scenario_spec_ref"),
                "metric_bindings": shared.get("metric_bindings"),
            })
            if "iteration_table" in shared:
                body["iteration_table"] = shared["iteration_table"]
        requests.append((row_id, body))

    validated = []
    failures: dict[str, Any] = {}
    for row_id, body in requests:
        try:
            validated.append((row_id, engine.validate_request(body, user.actor)))
        except EspError as exc:
            failures[row_id] = exc.envelope()
    if failures:
        raise EspError(
            "VALIDATION", "one or more rows failed validation; nothing submitted",
            {"rows": failures},
        )
    return {"jobs": {row_id: engine.enqueue(runtime, user.actor)
                     for row_id, runtime in validated}}


def render_result_csv(core: dict[str, Any]) -> str:
    """CSV export: a metric,value header block, a blank line, then the
    per-iteration table (RFC-4180 quoting, CRLF line ends)."""
    if core.get("mode") != "MONTE_CARLO":
        raise EspError("BAD_REQUEST", "CSV export applies to MONTE_CARLO results")
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL)
    metrics = core["metrics"]
    writer.writerow(["metric", "value"])
    writer.writerow(["pd", metrics["pd"]])
    writer.writerow(["pd_stderr", metrics["pd_stderr"]])
    writer.writerow(["lgd", "" if metrics["lgd"] is None else metrics["lgd"]])
    writer.writerow(["expected_loss", metrics["expected_loss"]])
    for level in sorted(metrics["loss_quantiles"], key=float):
        writer.writerow([f"q{level}", metrics["loss_quantiles"][level]])
    writer.writerow(["min_loss", metrics["min_loss"]])
    writer.writerow(["max_loss", metrics["max_loss"]])
    writer.writerow(["defaults", metrics["defaults"]])
    writer.writerow(["iterations", metrics["iterations"]])
    writer.writerow(["seed", core["seed"]])
    writer.writerow([])
    table = core.get("iteration_table")
    if table is not None:
        writer.writerow(["iteration", "loss", "default"])
        for index, (loss, flag) in enumerate(table):
            writer.writerow([index, loss, "true" if flag else "false"])
    return buf.getvalue()
