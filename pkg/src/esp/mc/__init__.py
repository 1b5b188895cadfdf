"""Correlated scenario generation and risk-metric computation."""

from .cholesky import cholesky
from .metrics import (
    MetricBindings,
    RiskMetrics,
    compute_risk_metrics,
    kahan_sum,
    loss_quantile,
    parse_metric_bindings,
    quantile_key,
)
from .scenario import (
    MacroVariable,
    ScenarioGenerator,
    ScenarioPath,
    ScenarioSpec,
    generate_scenario,
    parse_scenario_spec,
    resolve_bindings,
)
from .simulate import SimulationResult, run_simulation

__all__ = [
    "MacroVariable",
    "MetricBindings",
    "RiskMetrics",
    "ScenarioGenerator",
    "ScenarioPath",
    "ScenarioSpec",
    "SimulationResult",
    "cholesky",
    "compute_risk_metrics",
    "generate_scenario",
    "kahan_sum",
    "loss_quantile",
    "parse_metric_bindings",
    "parse_scenario_spec",
    "quantile_key",
    "resolve_bindings",
    "run_simulation",
]
