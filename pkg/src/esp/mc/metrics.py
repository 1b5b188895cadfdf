"""Risk metric aggregation over per-iteration simulation outputs.

Summation is compensated (Kahan) and always runs in iteration-index
order, so metrics do not depend on how iterations were scheduled across
workers. Quantiles use the lower order-statistic convention: sorted
losses, 0-based index ceil(p * N) - 1, no interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from ..errors import EspError

DEFAULT_QUANTILE_LEVELS = (0.95, 0.99)


def kahan_sum(values: Iterable[float]) -> float:
    total = 0.0
    carry = 0.0
    for x in values:
        y = x - carry
        t = total + y
        carry = (t - total) - y
        total = t
    return total


def loss_quantile(losses: Sequence[float], level: float) -> float:
    if len(losses) == 0:
        raise EspError("EMPTY", "quantile of zero losses")
    if not 0.0 < level < 1.0:
        raise EspError("BAD_REQUEST", f"quantile level {level} outside (0, 1)")
    ordered = sorted(losses)
    index = math.ceil(level * len(ordered)) - 1
    return ordered[max(index, 0)]


@dataclass(frozen=True)
class MetricBindings:
    loss_output: str
    exposure: float
    default_output: str | None = None
    quantile_levels: tuple[float, ...] = DEFAULT_QUANTILE_LEVELS

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "loss_output": self.loss_output,
            "exposure": self.exposure,
            "quantile_levels": list(self.quantile_levels),
        }
        if self.default_output is not None:
            out["default_output"] = self.default_output
        return out


def parse_metric_bindings(doc: Any) -> MetricBindings:
    if not isinstance(doc, dict):
        raise EspError("FORMAT", "metric bindings must be a JSON object")
    loss_output = doc.get("loss_output")
    if not isinstance(loss_output, str) or not loss_output:
        raise EspError("SCHEMA", "'loss_output' must name an output field")
    exposure = doc.get("exposure")
    if isinstance(exposure, bool) or not isinstance(exposure, (int, float)) or exposure <= 0:
        raise EspError("SCHEMA", "'exposure' must be a positive number")
    default_output = doc.get("default_output")
    if default_output is not None and (not isinstance(default_output, str) or not default_output):
        raise EspError("SCHEMA", "'default_output' must name an output field")
    levels = doc.get("quantile_levels", list(DEFAULT_QUANTILE_LEVELS))
    if not isinstance(levels, list) or not all(
        isinstance(p, (int, float)) and not isinstance(p, bool) and 0.0 < p < 1.0
        for p in levels
    ):
        raise EspError("SCHEMA", "'quantile_levels' must be numbers strictly inside (0, 1)")
    return MetricBindings(loss_output, float(exposure), default_output,
                          tuple(float(p) for p in levels))


@dataclass(frozen=True)
class RiskMetrics:
    iterations: int
    defaults: int
    pd: float
    pd_stderr: float
    lgd: float | None  # None when no iteration defaulted
    expected_loss: float
    loss_quantiles: dict[str, float] = field(default_factory=dict)
    min_loss: float = 0.0
    max_loss: float = 0.0

    def to_json(self) -> dict[str, Any]:
        return {
            "iterations": self.iterations,
            "defaults": self.defaults,
            "pd": self.pd,
            "pd_stderr": self.pd_stderr,
            "lgd": self.lgd,
            "expected_loss": self.expected_loss,
            "loss_quantiles": dict(self.loss_quantiles),
            "min_loss": self.min_loss,
            "max_loss": self.max_loss,
        }


def quantile_key(level: float) -> str:
    return repr(level)


def compute_risk_metrics(
    losses: Sequence[float],
    defaults: Sequence[bool],
    bindings: MetricBindings,
    iterations: int,
) -> RiskMetrics:
    if len(losses) != iterations or len(defaults) != iterations:
        raise EspError("INTERNAL", "per-iteration series length mismatch")
    if iterations < 1:
        raise EspError("BAD_REQUEST", "iterations must be >= 1")
    d = sum(1 for flag in defaults if flag)
    pd = d / iterations
    pd_stderr = math.sqrt(pd * (1.0 - pd) / iterations)
    exposure = bindings.exposure
    lgd = None
    if d >= 1:
        lgd = kahan_sum(
            loss / exposure for loss, flag in zip(losses, defaults) if flag
        ) / d
    expected_loss = (kahan_sum(losses) / iterations) / exposure
    quantiles = {
        quantile_key(level): loss_quantile(losses, level)
        for level in bindings.quantile_levels
    }
    return RiskMetrics(
        iterations=iterations,
        defaults=d,
        pd=pd,
        pd_stderr=pd_stderr,
        lgd=lgd,
        expected_loss=expected_loss,
        loss_quantiles=quantiles,
        min_loss=min(losses),
        max_loss=max(losses),
    )
