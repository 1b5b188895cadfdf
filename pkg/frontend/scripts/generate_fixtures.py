"""Regenerate frontend test fixtures from the real backend.

Spins an in-process platform, captures actual wire payloads (schema
response, 422 validation envelopes, a finished Monte Carlo result and its
CSV export), and writes them under frontend/fixtures/. The backend test
suite asserts these committed fixtures still match live server output, so
frontend tests exercising them are testing true parity.

Run from the repository root:  python frontend/scripts/generate_fixtures.py
"""

from __future__ import annotations

import json
import sys
import tempfile
import time
from pathlib import Path

from fastapi.testclient import TestClient

sys.path.insert(0, str(Path(__file__).resolve().parent))
from fixture_platform import VALIDATION_PROBES, build_platform  # noqa: E402

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        store, engine, app = build_platform(Path(tmp) / "store")
        client = TestClient(app)
        headers = {"Authorization": "Bearer tok-user"}
        try:
            schema = client.get("/api/models/fixture_deal/schema", headers=headers)
            assert schema.status_code == 200, schema.text

            envelopes = {}
            for name, bindings in VALIDATION_PROBES.items():
                response = client.post("/api/jobs", json={
                    "model_name": "fixture_deal", "mode": "SINGLE",
                    "input_bindings": bindings,
                }, headers=headers)
                assert response.status_code == 422, (name, response.text)
                envelopes[name] = {"bindings": bindings, "envelope": response.json()}

            scenario_ref = store.list_scenario_specs()[0]["ref"]
            job_id = client.post("/api/jobs", json={
                "model_name": "fixture_deal", "mode": "MONTE_CARLO",
                "input_bindings": {"ltv": 0.7},
                "seed": 20240, "iterations": 500,
                "scenario_spec_ref": scenario_ref,
                "metric_bindings": {"loss_output": "loss", "exposure": 100.0},
            }, headers=headers).json()["job_id"]
            deadline = time.monotonic() + 30
            while time.monotonic() < deadline:
                state = client.get(f"/api/jobs/{job_id}", headers=headers).json()["state"]
                if state == "SUCCEEDED":
                    break
                time.sleep(0.05)
            result = client.get(f"/api/jobs/{job_id}/result", headers=headers)
            csv_text = client.get(f"/api/jobs/{job_id}/result.csv", headers=headers).text

            FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
            (FIXTURE_DIR / "schema.json").write_text(
                json.dumps(schema.json(), indent=1, sort_keys=True))
            (FIXTURE_DIR / "validation_cases.json").write_text(
                json.dumps(envelopes, indent=1, sort_keys=True))
            (FIXTURE_DIR / "result.json").write_text(
                json.dumps(result.json(), indent=1, sort_keys=True))
            (FIXTURE_DIR / "result.csv").write_bytes(csv_text.encode("utf-8"))
            print(f"wrote fixtures -> {FIXTURE_DIR}")
        finally:
            engine.shutdown()


if __name__ == "__main__":
    main()
