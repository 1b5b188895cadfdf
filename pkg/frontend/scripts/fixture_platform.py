"""Shared definition of the fixture platform: one model with every control
variety (bounds, required, optional default, locked, text, boolean), a
one-variable scenario, and the validation probes whose 422 envelopes the
frontend mirrors. Used by fixture generation and by the backend parity
test, so both sides agree on what 'parity' means."""

from __future__ import annotations

from pathlib import Path

from esp.engine import ComputeEngine
from esp.service import User, create_app
from esp.store import Actor, ModelStore, parse_standard_test

SUPER = Actor("meg", "SUPERUSER")

FIXTURE_MODEL = {
    "name": "fixture_deal",
    "sheets": [{"name": "S", "cells": {
        "A1": {"v": 0.5},
        "A2": {"v": 0.25},
        "A3": {"v": "standard"},
        "A4": {"v": False},
        "A5": {"v": 0.0},
        "B1": {"f": "=IF(A5<-1.645,100*(1-A2)*A1,0)"},
        "B2": {"f": "=B1>0"},
    }}],
    "inputs": [
        {"name": "ltv", "cell": "S!A1", "dtype": "Number", "required": True,
         "min": 0, "max": 1},
        {"name": "haircut", "cell": "S!A2", "dtype": "Number", "locked": True,
         "default": 0.25},
        {"name": "segment", "cell": "S!A3", "dtype": "Text", "default": "standard"},
        {"name": "interest_only", "cell": "S!A4", "dtype": "Boolean"},
        {"name": "x_terminal", "cell": "S!A5", "dtype": "Number"},
    ],
    "outputs": [
        {"name": "loss", "cell": "S!B1", "dtype": "Number"},
        {"name": "defaulted", "cell": "S!B2", "dtype": "Boolean"},
    ],
}

FIXTURE_SCENARIO = {
    "variables": [{"name": "x", "process": "ADDITIVE", "initial_value": 0.0,
                   "drift": 0.0, "volatility": 1.0, "input_binding_prefix": "x"}],
    "horizon": 1, "correlation": [[1.0]],
}

# inputs whose server 422 envelopes the client-side validator must mirror
VALIDATION_PROBES = {
    "out_of_bounds": {"ltv": 1.5},
    "missing_required": {},
    "locked_override": {"ltv": 0.5, "haircut": 0.30},
    "type_mismatch": {"ltv": 0.5, "interest_only": 1.0},
    "unknown_name": {"ltv": 0.5, "mystery": 3.0},
    "everything_wrong": {"ltv": -2.0, "haircut": 0.1, "segment": True,
                         "ghost": "x"},
}


def build_platform(store_dir: Path):
    store = ModelStore(store_dir)
    store.upload_version("fixture_deal", FIXTURE_MODEL, SUPER)
    store.attach_standard_tests("fixture_deal", 1, [parse_standard_test({
        "test_id": "smoke", "input_bindings": {"ltv": 0.5},
        "expected_outputs": {"loss": 0.0},
    })], SUPER)
    assert store.run_standard_tests("fixture_deal", 1, SUPER).passed
    store.promote_to_live("fixture_deal", 1, SUPER)
    store.put_scenario_spec(FIXTURE_SCENARIO, SUPER)
    engine = ComputeEngine(store, workers=2, mc_parallelism=2, mc_batch_size=128)
    users = {
        "tok-super": User("meg", "Meg", "SUPERUSER", "tok-super"),
        "tok-user": User("eddie", "Eddie", "ENDUSER", "tok-user"),
        "tok-admin": User("root", "Root", "ADMIN", "tok-admin"),
    }
    return store, engine, create_app(store, engine, users)
