"""Governed spreadsheet compute platform.

Subpackages:
    workbook   portable workbook model, formula language, incremental evaluator
    store      versioned model repository with lifecycle gating and audit chain
    engine     job queue, worker pool, watchdog, deterministic RNG streams
    mc         correlated scenario generation and risk metrics
    service    HTTP/JSON facade
"""

__version__ = "0.1.0"
