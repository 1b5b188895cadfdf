"""Correlated macro-variable scenario generation.

A scenario spec declares M variables (additive random walks or geometric
processes with the -sigma^2/2 drift correction), a horizon of T periods,
and an MxM per-period shock correlation matrix. Iteration i draws its
standard normals from RNG stream (master_seed, i) in t-major order,
correlates them through the Cholesky factor, and walks the recurrences

    ADDITIVE        x_t = x_{t-1} + mu + sigma * z_t
    MULTIPLICATIVE  x_t = x_{t-1} * exp(mu - sigma^2/2 + sigma * z_t)

literally (sequential in t) so results are bit-stable. The correlation
product uses einsum, which contracts in a fixed order without BLAS, so
paths do not depend on batch width or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from ..canonical import content_hash
from ..rng import RngStreamBatch
from ..errors import EspError
from .cholesky import cholesky

PROCESSES = ("ADDITIVE", "MULTIPLICATIVE")


@dataclass(frozen=True)
class MacroVariable:
    name: str
    process: str
    initial_value: float
    drift: float
    volatility: float
    input_binding_prefix: str


@dataclass(frozen=True)
class ScenarioSpec:
    variables: tuple[MacroVariable, ...]
    horizon: int
    correlation: np.ndarray  # (M, M); treated as immutable

    @property
    def width(self) -> int:
        return len(self.variables)

    def to_json(self) -> dict[str, Any]:
        return {
            "variables": [
                {
                    "name": v.name, "process": v.process,
                    "initial_value": v.initial_value, "drift": v.drift,
                    "volatility": v.volatility,
                    "input_binding_prefix": v.input_binding_prefix,
                }
                for v in self.variables
            ],
            "horizon": self.horizon,
            "correlation": [[float(x) for x in row] for row in self.correlation],
        }

    def content_ref(self) -> str:
        return content_hash(self.to_json())


def parse_scenario_spec(doc: Any) -> ScenarioSpec:
    if not isinstance(doc, dict):
        raise EspError("FORMAT", "scenario spec must be a JSON object")
    raw_vars = doc.get("variables")
    horizon = doc.get("horizon")
    raw_corr = doc.get("correlation")
    if not isinstance(raw_vars, list) or not raw_vars:
        raise EspError("FORMAT", "'variables' must be a nonempty list")
    if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 1:
        raise EspError("SCHEMA", "'horizon' must be an integer >= 1")

    variables: list[MacroVariable] = []
    seen: set[str] = set()
    for entry in raw_vars:
        if not isinstance(entry, dict):
            raise EspError("FORMAT", "variable entries must be objects")
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            raise EspError("FORMAT", "variable 'name' must be a nonempty string")
        if name in seen:
            raise EspError("SCHEMA", f"duplicate variable {name!r}")
        seen.add(name)
        process = entry.get("process")
        if process not in PROCESSES:
            raise EspError("SCHEMA", f"variable {name!r}: process must be one of {PROCESSES}")
        try:
            initial = float(entry["initial_value"])
            drift = float(entry["drift"])
            vol = float(entry["volatility"])
        except (KeyError, TypeError, ValueError) as exc:
            raise EspError("FORMAT", f"variable {name!r}: bad numeric field: {exc}") from exc
        if vol < 0:
            raise EspError("SCHEMA", f"variable {name!r}: volatility must be >= 0")
        if process == "MULTIPLICATIVE" and initial <= 0:
            raise EspError("SCHEMA", f"variable {name!r}: MULTIPLICATIVE requires initial_value > 0")
        prefix = entry.get("input_binding_prefix")
        if not isinstance(prefix, str) or not prefix:
            raise EspError("FORMAT", f"variable {name!r}: 'input_binding_prefix' must be a nonempty string")
        variables.append(MacroVariable(name, process, initial, drift, vol, prefix))

    m = len(variables)
    corr = np.asarray(raw_corr, dtype=np.float64) if raw_corr is not None else None
    if corr is None or corr.shape != (m, m):
        raise EspError("SCHEMA", f"'correlation' must be a {m}x{m} matrix")
    if not np.isfinite(corr).all() or (np.abs(corr) > 1.0).any():
        raise EspError("SCHEMA", "correlation entries must be finite and within [-1, 1]")
    if not np.allclose(corr, corr.T, rtol=0.0, atol=1e-12):
        raise EspError("SCHEMA", "correlation matrix must be symmetric")
    if not np.allclose(np.diag(corr), 1.0, rtol=0.0, atol=1e-12):
        raise EspError("SCHEMA", "correlation matrix must have a unit diagonal")
    spec = ScenarioSpec(tuple(variables), horizon, corr)
    cholesky(corr)  # positive definiteness gate; raises NOT_PD
    return spec


@dataclass(frozen=True)
class ScenarioPath:
    iteration_index: int
    values: np.ndarray  # (M, T)


class ScenarioGenerator:
    """Shared, read-only machinery for one simulation: the Cholesky factor
    is computed once; per-iteration work is pure."""

    def __init__(self, spec: ScenarioSpec, master_seed: int):
        self.spec = spec
        self.master_seed = int(master_seed)
        self.chol = cholesky(spec.correlation)
        self._mu = np.array([v.drift for v in spec.variables])
        self._sigma = np.array([v.volatility for v in spec.variables])
        self._x0 = np.array([v.initial_value for v in spec.variables])
        is_mult = np.array([v.process == "MULTIPLICATIVE" for v in spec.variables])
        self._add_idx = np.flatnonzero(~is_mult)
        self._mult_idx = np.flatnonzero(is_mult)

    def paths_block(self, iteration_indices: Sequence[int]) -> np.ndarray:
        """Level paths for a batch of iterations, shape (B, M, T)."""
        m, t = self.spec.width, self.spec.horizon
        b = len(iteration_indices)
        batch = RngStreamBatch(self.master_seed, list(iteration_indices))
        draws = batch.normal_block(m * t)            # (m*t, B): t-major per stream
        eps = draws.T.reshape(b, t, m)               # (B, T, M)
        shocks = np.einsum("btk,mk->btm", eps, self.chol)    # z_t = L @ eps_t

        ai, mi = self._add_idx, self._mult_idx
        inc = np.empty_like(shocks)
        inc[:, :, ai] = self._mu[ai] + self._sigma[ai] * shocks[:, :, ai]
        inc[:, :, mi] = np.exp(
            (self._mu[mi] - 0.5 * self._sigma[mi] ** 2)
            + self._sigma[mi] * shocks[:, :, mi]
        )
        levels = np.empty_like(shocks)
        prev = np.broadcast_to(self._x0, (b, m)).copy()
        for step in range(t):
            nxt = np.empty_like(prev)
            nxt[:, ai] = prev[:, ai] + inc[:, step, ai]
            nxt[:, mi] = prev[:, mi] * inc[:, step, mi]
            levels[:, step, :] = nxt
            prev = nxt
        return np.swapaxes(levels, 1, 2)  # (B, M, T)


def generate_scenario(master_seed: int, iteration_index: int, spec: ScenarioSpec) -> ScenarioPath:
    gen = ScenarioGenerator(spec, master_seed)
    values = gen.paths_block([iteration_index])[0]
    return ScenarioPath(iteration_index, values)


def resolve_bindings(spec: ScenarioSpec, input_names: set[str]) -> list[tuple[int, str, list[str]]]:
    """Work out, per variable, which workbook inputs receive path values.

    Returns (variable position, mode, field names): mode 'path' carries
    ``<prefix>_1 .. <prefix>_T``, mode 'terminal' a single
    ``<prefix>_terminal``. Full-path binding wins when both exist.
    """
    out: list[tuple[int, str, list[str]]] = []
    for pos, var in enumerate(spec.variables):
        path_names = [f"{var.input_binding_prefix}_{t}" for t in range(1, spec.horizon + 1)]
        if path_names[0] in input_names:
            missing = [n for n in path_names if n not in input_names]
            if missing:
                raise EspError(
                    "SCHEMA",
                    f"variable {var.name!r}: model is missing path inputs {missing[:3]}...",
                    {"missing": missing},
                )
            out.append((pos, "path", path_names))
            continue
        terminal = f"{var.input_binding_prefix}_terminal"
        if terminal in input_names:
            out.append((pos, "terminal", [terminal]))
            continue
        raise EspError(
            "SCHEMA",
            f"variable {var.name!r}: model has neither "
            f"{path_names[0]!r}..{path_names[-1]!r} nor {terminal!r} inputs",
        )
    return out
