"""Job queue, worker pool, watchdog supervision, and seeded RNG streams."""

from .engine import ComputeEngine
from .jobs import (
    JOB_STATES,
    MONTE_CARLO,
    SINGLE,
    JobRequest,
    WatchdogPolicy,
    parse_job_request,
    result_hash,
)
from ..rng import (
    RngStream,
    RngStreamBatch,
    inverse_normal_cdf,
    next_standard_normal,
    next_uniform,
    rng_new,
)

__all__ = [
    "ComputeEngine",
    "JOB_STATES",
    "JobRequest",
    "MONTE_CARLO",
    "RngStream",
    "RngStreamBatch",
    "SINGLE",
    "WatchdogPolicy",
    "inverse_normal_cdf",
    "next_standard_normal",
    "next_uniform",
    "parse_job_request",
    "result_hash",
    "rng_new",
]
