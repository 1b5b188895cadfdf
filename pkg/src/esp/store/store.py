"""Centralised versioned model repository with lifecycle gating.

On disk: ``store/blobs/<sha256>`` holds canonical workbook JSON,
``store/meta`` is an embedded SQLite database (versions, standard tests,
run archives, scenario specs, job records), ``store/audit.log`` is the
hash-chained audit file. All writes go through one lock so version
numbers and audit sequences stay gap-free under concurrency.

Lifecycle: DRAFT -> TESTED -> LIVE -> RETIRED, one direction only. TESTED
is granted solely by a full pass of the attached standard tests; zero
attached tests can never satisfy the gate. Attaching tests demotes a
TESTED version back to DRAFT. Promotion retires any previously LIVE
version so exactly one version of a model is LIVE at a time.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

from ..canonical import canonical_json, content_hash, sha256_hex
from ..errors import EspError
from ..mc import (
    MetricBindings,
    parse_metric_bindings,
    parse_scenario_spec,
    quantile_key,
    run_simulation,
)
from ..workbook import (
    CellError,
    EvalSession,
    WorkbookModel,
    canonical_workbook_bytes,
    extract_outputs,
    parse_workbook,
    validate_inputs,
    value_from_json,
    value_to_json,
)
from ..workbook.values import Value, is_number
from .audit import AuditLog, AuditRecord

SUPERUSER = "SUPERUSER"
ENDUSER = "ENDUSER"
ADMIN = "ADMIN"
ROLES = (SUPERUSER, ENDUSER, ADMIN)

STATUSES = ("DRAFT", "TESTED", "LIVE", "RETIRED")

METRIC_RESULT_KEYS = ("pd", "pd_stderr", "lgd", "expected_loss", "min_loss", "max_loss")


@dataclass(frozen=True)
class Actor:
    user_id: str
    role: str

    @property
    def is_superuser(self) -> bool:
        return self.role == SUPERUSER


def _require_superuser(actor: Actor) -> None:
    if not actor.is_superuser:
        raise EspError("AUTH", f"{actor.user_id!r} lacks the superuser role")


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass(frozen=True)
class ModelVersion:
    model_name: str
    version: int
    blob_hash: str
    status: str
    author: str
    created_at: str
    parent_version: int | None

    def to_json(self) -> dict[str, Any]:
        return {
            "model_name": self.model_name,
            "version": self.version,
            "blob_hash": self.blob_hash,
            "status": self.status,
            "author": self.author,
            "created_at": self.created_at,
            "parent_version": self.parent_version,
        }


@dataclass(frozen=True)
class StandardTest:
    test_id: str
    input_bindings: dict[str, Value]
    expected_outputs: dict[str, Value]
    numeric_tolerance: float = 1e-9
    seed: int | None = None
    iterations: int | None = None
    scenario_spec_ref: str | None = None
    metric_bindings: MetricBindings | None = None

    @property
    def is_simulation(self) -> bool:
        return self.seed is not None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "test_id": self.test_id,
            "input_bindings": {k: value_to_json(v) for k, v in self.input_bindings.items()},
            "expected_outputs": {k: value_to_json(v) for k, v in self.expected_outputs.items()},
            "numeric_tolerance": self.numeric_tolerance,
        }
        if self.is_simulation:
            out.update({
                "seed": self.seed,
                "iterations": self.iterations,
                "scenario_spec_ref": self.scenario_spec_ref,
                "metric_bindings": self.metric_bindings.to_json(),
            })
        return out


def parse_standard_test(doc: Any) -> StandardTest:
    if not isinstance(doc, dict):
        raise EspError("FORMAT", "standard test must be a JSON object")
    test_id = doc.get("test_id")
    if not isinstance(test_id, str) or not test_id:
        raise EspError("FORMAT", "'test_id' must be a nonempty string")
    try:
        bindings = {k: value_from_json(v) for k, v in dict(doc.get("input_bindings", {})).items()}
        expected = {k: value_from_json(v) for k, v in dict(doc.get("expected_outputs", {})).items()}
    except (TypeError, ValueError) as exc:
        raise EspError("FORMAT", f"test {test_id!r}: {exc}") from exc
    if not expected:
        raise EspError("SCHEMA", f"test {test_id!r}: 'expected_outputs' must be nonempty")
    tolerance = doc.get("numeric_tolerance", 1e-9)
    if isinstance(tolerance, bool) or not isinstance(tolerance, (int, float)) or tolerance < 0:
        raise EspError("SCHEMA", f"test {test_id!r}: bad numeric_tolerance")
    seed = doc.get("seed")
    if seed is None:
        for key in ("iterations", "scenario_spec_ref", "metric_bindings"):
            if doc.get(key) is not None:
                raise EspError("SCHEMA", f"test {test_id!r}: {key} requires a seed")
        return StandardTest(test_id, bindings, expected, float(tolerance))
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise EspError("SCHEMA", f"test {test_id!r}: seed must be a 64-bit unsigned integer")
    iterations = doc.get("iterations")
    if isinstance(iterations, bool) or not isinstance(iterations, int) or iterations < 1:
        raise EspError("SCHEMA", f"test {test_id!r}: simulation tests need iterations >= 1")
    ref = doc.get("scenario_spec_ref")
    if not isinstance(ref, str) or not ref:
        raise EspError("SCHEMA", f"test {test_id!r}: simulation tests need scenario_spec_ref")
    metric_bindings = parse_metric_bindings(doc.get("metric_bindings"))
    return StandardTest(
        test_id, bindings, expected, float(tolerance),
        seed, iterations, ref, metric_bindings,
    )


@dataclass(frozen=True)
class RunArchive:
    job_id: str
    model_name: str
    version: int
    blob_hash: str
    inputs_hash: str
    results_hash: str
    timestamp: str

    def to_json(self) -> dict[str, Any]:
        return {
            "job_id": self.job_id, "model_name": self.model_name,
            "version": self.version, "blob_hash": self.blob_hash,
            "inputs_hash": self.inputs_hash, "results_hash": self.results_hash,
            "timestamp": self.timestamp,
        }


@dataclass
class TestOutcome:
    test_id: str
    mode: str  # PLAIN | SIMULATION
    passed: bool
    comparisons: list[dict[str, Any]] = field(default_factory=list)
    error: str | None = None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "test_id": self.test_id, "mode": self.mode, "passed": self.passed,
            "comparisons": self.comparisons,
        }
        if self.error is not None:
            out["error"] = self.error
        return out


@dataclass
class TestReport:
    model_name: str
    version: int
    passed: bool
    results: list[TestOutcome]
    status_after: str

    def to_json(self) -> dict[str, Any]:
        return {
            "model_name": self.model_name, "version": self.version,
            "passed": self.passed, "status_after": self.status_after,
            "results": [r.to_json() for r in self.results],
        }


_SCHEMA_SQL = """
CREATE TABLE IF NOT EXISTS versions (
    model_name TEXT NOT NULL,
    version INTEGER NOT NULL,
    blob_hash TEXT NOT NULL,
    status TEXT NOT NULL,
    author TEXT NOT NULL,
    created_at TEXT NOT NULL,
    parent_version INTEGER,
    PRIMARY KEY (model_name, version)
);
CREATE TABLE IF NOT EXISTS tests (
    model_name TEXT NOT NULL,
    version INTEGER NOT NULL,
    payload TEXT NOT NULL,
    PRIMARY KEY (model_name, version)
);
CREATE TABLE IF NOT EXISTS archives (
    job_id TEXT PRIMARY KEY,
    model_name TEXT NOT NULL,
    version INTEGER NOT NULL,
    blob_hash TEXT NOT NULL,
    inputs_hash TEXT NOT NULL,
    results_hash TEXT NOT NULL,
    timestamp TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS scenarios (
    ref TEXT PRIMARY KEY,
    payload TEXT NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS jobs (
    job_id TEXT PRIMARY KEY,
    model_name TEXT NOT NULL,
    version INTEGER NOT NULL,
    blob_hash TEXT NOT NULL,
    payload TEXT NOT NULL,
    submitted_by TEXT NOT NULL,
    state TEXT NOT NULL,
    progress REAL NOT NULL,
    enqueued_at TEXT NOT NULL,
    started_at TEXT,
    ended_at TEXT,
    failure_reason TEXT,
    failure TEXT,
    result TEXT,
    result_hash TEXT
);
"""


class ModelStore:
    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.blob_dir = self.root / "blobs"
        self.blob_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._db = sqlite3.connect(str(self.root / "meta"), check_same_thread=False)
        self._db.row_factory = sqlite3.Row
        with self._lock:
            self._db.executescript(_SCHEMA_SQL)
            self._db.commit()
        self.audit = AuditLog(self.root / "audit.log")

    def close(self) -> None:
        with self._lock:
            self._db.close()

    # -- model versions ------------------------------------------------------

    def upload_version(self, model_name: str, workbook_bytes: bytes | str | dict,
                       actor: Actor) -> ModelVersion:
        _require_superuser(actor)
        model = parse_workbook(workbook_bytes)
        if model.name != model_name:
            raise EspError(
                "BAD_REQUEST",
                f"document is named {model.name!r}, not {model_name!r}",
            )
        blob = canonical_workbook_bytes(model)
        blob_hash = sha256_hex(blob)
        with self._lock:
            latest = self._latest_version(model_name)
            if latest is not None and latest.blob_hash == blob_hash:
                raise EspError(
                    "DUPLICATE",
                    f"identical content already stored as version {latest.version}",
                    {"blob_hash": blob_hash, "version": latest.version},
                )
            version = 1 if latest is None else latest.version + 1
            record = ModelVersion(
                model_name, version, blob_hash, "DRAFT", actor.user_id, _now(),
                latest.version if latest else None,
            )
            (self.blob_dir / blob_hash).write_bytes(blob)
            self._db.execute(
                "INSERT INTO versions VALUES (?,?,?,?,?,?,?)",
                (model_name, version, blob_hash, "DRAFT", actor.user_id,
                 record.created_at, record.parent_version),
            )
            self._db.commit()
            self.audit.append(actor.user_id, "UPLOAD", f"{model_name}/{version}",
                              {"blob_hash": blob_hash})
            return record

    def download_version(self, model_name: str, version: int, actor: Actor) -> bytes:
        _require_superuser(actor)
        with self._lock:
            record = self._get_version(model_name, version)
            blob = (self.blob_dir / record.blob_hash).read_bytes()
            self.audit.append(actor.user_id, "DOWNLOAD", f"{model_name}/{version}",
                              {"blob_hash": record.blob_hash})
            return blob

    def load_model(self, model_name: str, version: int) -> tuple[WorkbookModel, str]:
        """Internal blob access for the engine; not audited as a DOWNLOAD
        since no workbook bytes leave the service."""
        with self._lock:
            record = self._get_version(model_name, version)
            blob = (self.blob_dir / record.blob_hash).read_bytes()
        return parse_workbook(blob), record.blob_hash

    def list_models(self) -> list[dict[str, Any]]:
        with self._lock:
            rows = self._db.execute(
                "SELECT model_name, COUNT(*) AS n, MAX(version) AS latest FROM versions "
                "GROUP BY model_name ORDER BY model_name"
            ).fetchall()
            out = []
            for row in rows:
                live = self._db.execute(
                    "SELECT version FROM versions WHERE model_name=? AND status='LIVE'",
                    (row["model_name"],),
                ).fetchone()
                out.append({
                    "model_name": row["model_name"],
                    "versions": row["n"],
                    "latest_version": row["latest"],
                    "live_version": live["version"] if live else None,
                })
            return out

    def list_versions(self, model_name: str) -> list[ModelVersion]:
        with self._lock:
            rows = self._db.execute(
                "SELECT * FROM versions WHERE model_name=? ORDER BY version",
                (model_name,),
            ).fetchall()
        if not rows:
            raise EspError("NOT_FOUND", f"no model named {model_name!r}")
        return [self._row_to_version(row) for row in rows]

    def get_version(self, model_name: str, version: int) -> ModelVersion:
        with self._lock:
            return self._get_version(model_name, version)

    def resolve_live(self, model_name: str) -> ModelVersion:
        with self._lock:
            row = self._db.execute(
                "SELECT * FROM versions WHERE model_name=? AND status='LIVE'",
                (model_name,),
            ).fetchone()
        if row is None:
            raise EspError(
                "NO_LIVE_VERSION", f"model {model_name!r} has no LIVE version"
            )
        return self._row_to_version(row)

    def _latest_version(self, model_name: str) -> ModelVersion | None:
        row = self._db.execute(
            "SELECT * FROM versions WHERE model_name=? ORDER BY version DESC LIMIT 1",
            (model_name,),
        ).fetchone()
        return self._row_to_version(row) if row else None

    def _get_version(self, model_name: str, version: int) -> ModelVersion:
        row = self._db.execute(
            "SELECT * FROM versions WHERE model_name=? AND version=?",
            (model_name, version),
        ).fetchone()
        if row is None:
            raise EspError(
                "NOT_FOUND", f"model {model_name!r} has no version {version}"
            )
        return self._row_to_version(row)

    @staticmethod
    def _row_to_version(row: sqlite3.Row) -> ModelVersion:
        return ModelVersion(
            row["model_name"], row["version"], row["blob_hash"], row["status"],
            row["author"], row["created_at"], row["parent_version"],
        )

    def _set_status(self, model_name: str, version: int, status: str) -> None:
        self._db.execute(
            "UPDATE versions SET status=? WHERE model_name=? AND version=?",
            (status, model_name, version),
        )

    # -- standard tests and the go-live gate -----------------------------------

    def attach_standard_tests(self, model_name: str, version: int,
                              tests: list[StandardTest], actor: Actor) -> int:
        _require_superuser(actor)
        if not tests:
            raise EspError("SCHEMA", "attach at least one test")
        ids = [t.test_id for t in tests]
        if len(set(ids)) != len(ids):
            raise EspError("SCHEMA", "duplicate test_id in battery")
        with self._lock:
            record = self._get_version(model_name, version)
            if record.status in ("LIVE", "RETIRED"):
                raise EspError(
                    "IMMUTABLE", f"version {version} is {record.status}; tests are frozen"
                )
            model, _ = self.load_model(model_name, version)
            output_names = {fld.name for fld in model.output_schema}
            for test in tests:
                self._check_expected_keys(test, output_names)
            payload = canonical_json([t.to_json() for t in tests]).decode()
            self._db.execute(
                "INSERT OR REPLACE INTO tests VALUES (?,?,?)",
                (model_name, version, payload),
            )
            # a version is only as tested as its current battery
            self._set_status(model_name, version, "DRAFT")
            self._db.commit()
            self.audit.append(actor.user_id, "ATTACH_TESTS", f"{model_name}/{version}",
                              {"count": len(tests), "test_ids": ids})
            return len(tests)

    @staticmethod
    def _check_expected_keys(test: StandardTest, output_names: set[str]) -> None:
        if not test.is_simulation:
            unknown = set(test.expected_outputs) - output_names
            if unknown:
                raise EspError(
                    "SCHEMA",
                    f"test {test.test_id!r} expects outputs not in the model schema: {sorted(unknown)}",
                )
            return
        allowed = set(METRIC_RESULT_KEYS) | {
            f"q{quantile_key(level)}" for level in test.metric_bindings.quantile_levels
        }
        unknown = set(test.expected_outputs) - allowed
        if unknown:
            raise EspError(
                "SCHEMA",
                f"simulation test {test.test_id!r} expects unknown metrics: {sorted(unknown)}",
            )

    def get_tests(self, model_name: str, version: int) -> list[StandardTest]:
        with self._lock:
            self._get_version(model_name, version)
            row = self._db.execute(
                "SELECT payload FROM tests WHERE model_name=? AND version=?",
                (model_name, version),
            ).fetchone()
        if row is None:
            return []
        return [parse_standard_test(doc) for doc in json.loads(row["payload"])]

    def run_standard_tests(self, model_name: str, version: int, actor: Actor) -> TestReport:
        tests = self.get_tests(model_name, version)
        if not tests:
            raise EspError(
                "NO_TESTS",
                f"version {version} has no attached tests; the gate cannot be satisfied vacuously",
            )
        model, _ = self.load_model(model_name, version)
        base = EvalSession(model)
        base.evaluate_all()
        outcomes = [self._run_one_test(model, base, test) for test in tests]
        passed = all(outcome.passed for outcome in outcomes)
        with self._lock:
            record = self._get_version(model_name, version)
            status_after = record.status
            if passed and record.status == "DRAFT":
                self._set_status(model_name, version, "TESTED")
                self._db.commit()
                status_after = "TESTED"
            report = TestReport(model_name, version, passed, outcomes, status_after)
            self.audit.append(actor.user_id, "TEST_RUN", f"{model_name}/{version}",
                              report.to_json())
        return report

    def _run_one_test(self, model: WorkbookModel, base: EvalSession,
                      test: StandardTest) -> TestOutcome:
        mode = "SIMULATION" if test.is_simulation else "PLAIN"
        outcome = TestOutcome(test.test_id, mode, passed=False)
        report = validate_inputs(model.input_schema, test.input_bindings)
        if not report.ok:
            outcome.error = f"input validation failed: {report.violations}"
            return outcome
        try:
            if test.is_simulation:
                actual = self._simulation_metrics(base, test, report.effective)
            else:
                session = base.clone()
                session.set_inputs_and_recalculate(report.effective, allow_locked=True)
                actual = extract_outputs(session.values, model.output_schema)
        except EspError as exc:
            outcome.error = f"{exc.code}: {exc.message}"
            return outcome
        ok = True
        for name, expected in test.expected_outputs.items():
            got = actual.get(name)
            match = _values_match(expected, got, test.numeric_tolerance)
            ok = ok and match
            outcome.comparisons.append({
                "name": name,
                "expected": value_to_json(expected),
                "actual": None if got is None else value_to_json(got),
                "ok": match,
            })
        outcome.passed = ok
        return outcome

    def _simulation_metrics(self, base: EvalSession, test: StandardTest,
                            effective: dict[str, Value]) -> dict[str, Value]:
        spec = self.get_scenario_spec(test.scenario_spec_ref)
        result = run_simulation(
            base.clone, spec, effective, test.iterations, test.seed,
            test.metric_bindings,
        )
        metrics = result.metrics
        flat: dict[str, Value] = {
            "pd": metrics.pd, "pd_stderr": metrics.pd_stderr,
            "expected_loss": metrics.expected_loss,
            "min_loss": metrics.min_loss, "max_loss": metrics.max_loss,
        }
        if metrics.lgd is not None:
            flat["lgd"] = metrics.lgd
        for key, value in metrics.loss_quantiles.items():
            flat[f"q{key}"] = value
        return flat

    def promote_to_live(self, model_name: str, version: int, actor: Actor) -> ModelVersion:
        _require_superuser(actor)
        with self._lock:
            record = self._get_version(model_name, version)
            if record.status != "TESTED":
                raise EspError(
                    "NOT_TESTED",
                    f"version {version} is {record.status}; only TESTED versions can go live",
                )
            previous = self._db.execute(
                "SELECT version FROM versions WHERE model_name=? AND status='LIVE'",
                (model_name,),
            ).fetchone()
            if previous is not None:
                self._set_status(model_name, previous["version"], "RETIRED")
            self._set_status(model_name, version, "LIVE")
            self._db.commit()
            if previous is not None:
                self.audit.append(actor.user_id, "RETIRE",
                                  f"{model_name}/{previous['version']}",
                                  {"replaced_by": version})
            self.audit.append(actor.user_id, "PROMOTE", f"{model_name}/{version}",
                              {"blob_hash": record.blob_hash})
            return self._get_version(model_name, version)

    # -- run archives -----------------------------------------------------------

    def archive_run_artifact(self, job_id: str, model_name: str, version: int,
                             inputs: Any, results: Any, succeeded: bool,
                             actor: Actor) -> RunArchive:
        with self._lock:
            existing = self._db.execute(
                "SELECT job_id FROM archives WHERE job_id=?", (job_id,)
            ).fetchone()
            if existing is not None:
                raise EspError("DUPLICATE", f"job {job_id!r} already archived")
            record = self._get_version(model_name, version)
            archive = RunArchive(
                job_id, model_name, version, record.blob_hash,
                content_hash(inputs), content_hash(results), _now(),
            )
            self._db.execute(
                "INSERT INTO archives VALUES (?,?,?,?,?,?,?)",
                (archive.job_id, archive.model_name, archive.version,
                 archive.blob_hash, archive.inputs_hash, archive.results_hash,
                 archive.timestamp),
            )
            self._db.commit()
            action = "JOB_COMPLETE" if succeeded else "JOB_FAIL"
            self.audit.append(actor.user_id, action, job_id, archive.to_json())
            return archive

    def get_archive(self, job_id: str) -> RunArchive:
        with self._lock:
            row = self._db.execute(
                "SELECT * FROM archives WHERE job_id=?", (job_id,)
            ).fetchone()
        if row is None:
            raise EspError("NOT_FOUND", f"no archive for job {job_id!r}")
        return RunArchive(
            row["job_id"], row["model_name"], row["version"], row["blob_hash"],
            row["inputs_hash"], row["results_hash"], row["timestamp"],
        )

    # -- scenario specs -----------------------------------------------------------

    def put_scenario_spec(self, doc: Any, actor: Actor) -> str:
        _require_superuser(actor)
        spec = parse_scenario_spec(doc)
        ref = spec.content_ref()
        with self._lock:
            existing = self._db.execute(
                "SELECT ref FROM scenarios WHERE ref=?", (ref,)
            ).fetchone()
            if existing is None:
                self._db.execute(
                    "INSERT INTO scenarios VALUES (?,?,?)",
                    (ref, canonical_json(spec.to_json()).decode(), _now()),
                )
                self._db.commit()
                self.audit.append(actor.user_id, "UPLOAD", f"scenario/{ref}",
                                  {"variables": spec.width, "horizon": spec.horizon})
        return ref

    def get_scenario_spec(self, ref: str):
        with self._lock:
            row = self._db.execute(
                "SELECT payload FROM scenarios WHERE ref=?", (ref,)
            ).fetchone()
        if row is None:
            raise EspError("NOT_FOUND", f"no scenario spec {ref!r}")
        return parse_scenario_spec(json.loads(row["payload"]))

    def list_scenario_specs(self) -> list[dict[str, Any]]:
        with self._lock:
            rows = self._db.execute(
                "SELECT ref, created_at FROM scenarios ORDER BY created_at"
            ).fetchall()
        return [{"ref": row["ref"], "created_at": row["created_at"]} for row in rows]

    # -- job records (used by the compute engine) ---------------------------------

    def insert_job(self, job_id: str, model_name: str, version: int, blob_hash: str,
                   payload: dict[str, Any], submitted_by: str) -> None:
        with self._lock:
            self._db.execute(
                "INSERT INTO jobs (job_id, model_name, version, blob_hash, payload,"
                " submitted_by, state, progress, enqueued_at)"
                " VALUES (?,?,?,?,?,?, 'QUEUED', 0.0, ?)",
                (job_id, model_name, version, blob_hash,
                 canonical_json(payload).decode(), submitted_by, _now()),
            )
            self._db.commit()
            self.audit.append(submitted_by, "JOB_SUBMIT", job_id,
                              {"model_name": model_name, "version": version})

    def mark_job_running(self, job_id: str) -> None:
        with self._lock:
            self._db.execute(
                "UPDATE jobs SET state='RUNNING', started_at=? WHERE job_id=?",
                (_now(), job_id),
            )
            self._db.commit()

    def update_job_progress(self, job_id: str, progress: float) -> None:
        with self._lock:
            self._db.execute(
                "UPDATE jobs SET progress=MAX(progress, ?) WHERE job_id=?",
                (progress, job_id),
            )
            self._db.commit()

    def finish_job(self, job_id: str, state: str, *, failure_reason: str | None = None,
                   failure: dict[str, Any] | None = None,
                   result: dict[str, Any] | None = None,
                   result_hash: str | None = None) -> None:
        with self._lock:
            self._db.execute(
                "UPDATE jobs SET state=?, ended_at=?, failure_reason=?, failure=?,"
                " result=?, result_hash=?, progress=CASE WHEN ?='SUCCEEDED' THEN 1.0"
                " ELSE progress END WHERE job_id=?",
                (state, _now(), failure_reason,
                 canonical_json(failure).decode() if failure is not None else None,
                 canonical_json(result).decode() if result is not None else None,
                 result_hash, state, job_id),
            )
            self._db.commit()

    def get_job(self, job_id: str) -> dict[str, Any] | None:
        with self._lock:
            row = self._db.execute(
                "SELECT * FROM jobs WHERE job_id=?", (job_id,)
            ).fetchone()
        if row is None:
            return None
        job = dict(row)
        job["payload"] = json.loads(job["payload"])
        for key in ("failure", "result"):
            if job[key] is not None:
                job[key] = json.loads(job[key])
        return job

    # -- audit ---------------------------------------------------------------------

    def append_audit(self, actor: str, action: str, subject: str, payload: Any) -> AuditRecord:
        return self.audit.append(actor, action, subject, payload)

    def verify_audit_chain(self) -> tuple[bool, int | None]:
        return self.audit.verify()


def _values_match(expected: Value, got: Value | None, tolerance: float) -> bool:
    if got is None:
        return False
    if is_number(expected) and is_number(got):
        return abs(expected - got) <= tolerance
    if isinstance(expected, CellError) or isinstance(got, CellError):
        return expected == got
    return type(expected) is type(got) and expected == got
