"""Portable workbook model, formula language, and incremental evaluator."""

from .evaluator import (
    CellValues,
    EvalSession,
    ValidationReport,
    evaluate_all,
    extract_outputs,
    validate_inputs,
)
from .graph import DepGraph, build_dependency_graph
from .model import (
    Cell,
    CellRef,
    InputField,
    OutputField,
    Sheet,
    WorkbookModel,
    canonical_workbook_bytes,
    parse_cell_ref,
    parse_workbook,
    workbook_hash,
    workbook_to_document,
)
from .parser import FormulaError, parse_formula, print_formula
from .values import (
    BLANK,
    CellError,
    Value,
    value_from_json,
    value_to_json,
)

__all__ = [
    "BLANK",
    "Cell",
    "CellError",
    "CellRef",
    "CellValues",
    "DepGraph",
    "EvalSession",
    "FormulaError",
    "InputField",
    "OutputField",
    "Sheet",
    "ValidationReport",
    "Value",
    "WorkbookModel",
    "build_dependency_graph",
    "canonical_workbook_bytes",
    "evaluate_all",
    "extract_outputs",
    "parse_cell_ref",
    "parse_formula",
    "parse_workbook",
    "print_formula",
    "validate_inputs",
    "value_from_json",
    "value_to_json",
    "workbook_hash",
    "workbook_to_document",
]
