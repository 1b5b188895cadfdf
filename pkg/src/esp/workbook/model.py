"""Workbook data model and the JSON document format.

A workbook document is a single JSON object::

    {
      "name": "deal_model",
      "sheets": [{"name": "S", "cells": {"A1": {"v": 1.5}, "A2": {"f": "=A1*2"}}}],
      "inputs":  [{"name": "ltv", "cell": "S!A1", "dtype": "Number",
                   "required": true, "min": 0, "max": 1,
                   "default": 0.5, "locked": false}],
      "outputs": [{"name": "loss", "cell": "S!A2", "dtype": "Number"}]
    }

Cell keys are canonical A1 form (upper case, no ``$``). Schema cell
references are fully qualified (``Sheet!A1``). Error taxonomy: FORMAT for
structural problems, SCHEMA for invariant violations, PARSE (with sheet,
cell, and offset) for formula syntax errors.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Union

from ..canonical import canonical_json, sha256_hex
from ..errors import EspError
from .parser import (
    FormulaError,
    Node,
    col_to_index,
    index_to_col,
    parse_formula,
)
from .values import Value, is_number, value_from_json, value_to_json

SHEET_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_ ]*")
MODEL_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.-]*")
CELL_KEY_RE = re.compile(r"([A-Z]{1,2})([0-9]+)")
DTYPES = ("Number", "Text", "Boolean")


@dataclass(frozen=True, order=True)
class CellRef:
    """Absolute cell address; ``sheet`` is always resolved."""

    sheet: str
    col: int
    row: int

    def text(self) -> str:
        return f"{self.sheet}!{index_to_col(self.col)}{self.row}"


def parse_cell_ref(text: str) -> CellRef:
    """Parse a fully qualified ``Sheet!A1`` reference (schema form)."""
    sheet, sep, addr = text.partition("!")
    m = CELL_KEY_RE.fullmatch(addr) if sep else None
    if m is None or not sheet:
        raise EspError("FORMAT", f"bad cell reference {text!r} (expected Sheet!A1)")
    row = int(m.group(2))
    if row < 1:
        raise EspError("FORMAT", f"bad cell reference {text!r} (row must be >= 1)")
    return CellRef(sheet, col_to_index(m.group(1)), row)


@dataclass(frozen=True)
class Cell:
    """Exactly one of ``literal`` or ``formula`` is set. The original
    formula source is retained for round-tripping."""

    literal: Value | None = None
    formula: Node | None = None
    source: str | None = None

    @property
    def is_formula(self) -> bool:
        return self.formula is not None


@dataclass(frozen=True)
class Sheet:
    name: str
    cells: dict[tuple[int, int], Cell]  # keyed (col, row); absent cells are blank


@dataclass(frozen=True)
class InputField:
    name: str
    cell: CellRef
    dtype: str
    required: bool = False
    min: float | None = None
    max: float | None = None
    default: Value | None = None
    locked: bool = False

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "name": self.name, "cell": self.cell.text(), "dtype": self.dtype,
            "required": self.required, "locked": self.locked,
        }
        if self.min is not None:
            out["min"] = self.min
        if self.max is not None:
            out["max"] = self.max
        if self.default is not None:
            out["default"] = value_to_json(self.default)
        return out


@dataclass(frozen=True)
class OutputField:
    name: str
    cell: CellRef
    dtype: str

    def to_json(self) -> dict[str, Any]:
        return {"name": self.name, "cell": self.cell.text(), "dtype": self.dtype}


@dataclass(frozen=True)
class WorkbookModel:
    """Immutable after parse; safe to share across threads."""

    name: str
    sheets: tuple[Sheet, ...]
    input_schema: tuple[InputField, ...]
    output_schema: tuple[OutputField, ...]
    sheet_index: dict[str, int] = field(repr=False, default_factory=dict)

    def sheet(self, name: str) -> Sheet | None:
        idx = self.sheet_index.get(name)
        return self.sheets[idx] if idx is not None else None

    def cell_at(self, ref: CellRef) -> Cell | None:
        sheet = self.sheet(ref.sheet)
        return sheet.cells.get((ref.col, ref.row)) if sheet else None

    def input_field(self, name: str) -> InputField | None:
        return next((fld for fld in self.input_schema if fld.name == name), None)


# --- document parsing -------------------------------------------------------


def parse_workbook(data: Union[bytes, str, dict]) -> WorkbookModel:
    """Parse and fully validate a workbook document."""
    doc = _load_document(data)
    name = _require(doc, "name", str)
    if not MODEL_NAME_RE.fullmatch(name):
        raise EspError("SCHEMA", f"bad workbook name {name!r}")

    sheets: list[Sheet] = []
    sheet_index: dict[str, int] = {}
    for raw_sheet in _require(doc, "sheets", list):
        if not isinstance(raw_sheet, dict):
            raise EspError("FORMAT", "sheet entries must be objects")
        sheet_name = _require(raw_sheet, "name", str)
        if not SHEET_NAME_RE.fullmatch(sheet_name):
            raise EspError("SCHEMA", f"bad sheet name {sheet_name!r}")
        if sheet_name in sheet_index:
            raise EspError("SCHEMA", f"duplicate sheet name {sheet_name!r}")
        cells = _parse_cells(sheet_name, raw_sheet.get("cells", {}))
        sheet_index[sheet_name] = len(sheets)
        sheets.append(Sheet(sheet_name, cells))

    inputs = _parse_input_schema(doc.get("inputs", []), sheet_index)
    outputs = _parse_output_schema(doc.get("outputs", []), sheet_index)
    model = WorkbookModel(name, tuple(sheets), inputs, outputs, sheet_index)
    _check_input_cells(model)
    return model


def _load_document(data: Union[bytes, str, dict]) -> dict:
    if isinstance(data, dict):
        return data
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise EspError("FORMAT", f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise EspError("FORMAT", "workbook document must be a JSON object")
    return doc


def _require(obj: dict, key: str, typ: type) -> Any:
    value = obj.get(key)
    if not isinstance(value, typ) or (typ is not bool and isinstance(value, bool)):
        raise EspError("FORMAT", f"field {key!r} must be {typ.__name__}")
    return value


def _parse_cells(sheet_name: str, raw: Any) -> dict[tuple[int, int], Cell]:
    if not isinstance(raw, dict):
        raise EspError("FORMAT", f"cells of sheet {sheet_name!r} must be an object")
    cells: dict[tuple[int, int], Cell] = {}
    for key, spec in raw.items():
        m = CELL_KEY_RE.fullmatch(key) if isinstance(key, str) else None
        if m is None or int(m.group(2)) < 1:
            raise EspError("FORMAT", f"bad cell key {key!r} on sheet {sheet_name!r}")
        addr = (col_to_index(m.group(1)), int(m.group(2)))
        if not isinstance(spec, dict) or len(spec) != 1 or not ({"v", "f"} & set(spec)):
            raise EspError(
                "FORMAT",
                f"cell {sheet_name}!{key} must be exactly one of {{'v': ...}} or {{'f': ...}}",
            )
        if "f" in spec:
            source = spec["f"]
            if not isinstance(source, str):
                raise EspError("FORMAT", f"formula of {sheet_name}!{key} must be a string")
            try:
                ast = parse_formula(source)
            except FormulaError as exc:
                raise EspError(exc.code, f"{sheet_name}!{key}: {exc.message}", {
                    "sheet": sheet_name, "cell": key, "offset": exc.offset,
                }) from exc
            cells[addr] = Cell(formula=ast, source=source)
        else:
            try:
                literal = value_from_json(spec["v"])
            except ValueError as exc:
                raise EspError("FORMAT", f"cell {sheet_name}!{key}: {exc}") from exc
            if not isinstance(literal, (float, str, bool)):
                raise EspError("FORMAT", f"cell {sheet_name}!{key}: literal must be number, text, or boolean")
            cells[addr] = Cell(literal=literal)
    return cells


def _parse_input_schema(raw: Any, sheet_index: dict[str, int]) -> tuple[InputField, ...]:
    if not isinstance(raw, list):
        raise EspError("FORMAT", "'inputs' must be a list")
    fields: list[InputField] = []
    seen_names: set[str] = set()
    seen_cells: set[CellRef] = set()
    for entry in raw:
        fld = _parse_input_field(entry, sheet_index)
        if fld.name in seen_names:
            raise EspError("SCHEMA", f"duplicate input field {fld.name!r}")
        if fld.cell in seen_cells:
            raise EspError("SCHEMA", f"input fields share cell {fld.cell.text()}")
        seen_names.add(fld.name)
        seen_cells.add(fld.cell)
        fields.append(fld)
    return tuple(fields)


def _parse_input_field(entry: Any, sheet_index: dict[str, int]) -> InputField:
    if not isinstance(entry, dict):
        raise EspError("FORMAT", "input schema entries must be objects")
    name = _require(entry, "name", str)
    cell = parse_cell_ref(_require(entry, "cell", str))
    if cell.sheet not in sheet_index:
        raise EspError("SCHEMA", f"input {name!r} references missing sheet {cell.sheet!r}")
    dtype = _require(entry, "dtype", str)
    if dtype not in DTYPES:
        raise EspError("SCHEMA", f"input {name!r}: dtype must be one of {DTYPES}")
    required = bool(entry.get("required", False))
    locked = bool(entry.get("locked", False))
    lo, hi = entry.get("min"), entry.get("max")
    for label, bound in (("min", lo), ("max", hi)):
        if bound is not None and (isinstance(bound, bool) or not isinstance(bound, (int, float))):
            raise EspError("SCHEMA", f"input {name!r}: {label} must be a number")
    lo = float(lo) if lo is not None else None
    hi = float(hi) if hi is not None else None
    if (lo is not None or hi is not None) and dtype != "Number":
        raise EspError("SCHEMA", f"input {name!r}: bounds require dtype Number")
    if lo is not None and hi is not None and lo > hi:
        raise EspError("SCHEMA", f"input {name!r}: min {lo} > max {hi}")
    default: Value | None = None
    if "default" in entry:
        default = value_from_json(entry["default"])
        _check_binding_type(name, default, dtype, lo, hi, context="default")
    if locked and default is None:
        raise EspError("SCHEMA", f"locked input {name!r} must carry a default")
    return InputField(name, cell, dtype, required, lo, hi, default, locked)


def _check_binding_type(
    name: str, value: Value, dtype: str,
    lo: float | None, hi: float | None, context: str,
) -> None:
    ok = (
        (dtype == "Number" and is_number(value))
        or (dtype == "Text" and isinstance(value, str))
        or (dtype == "Boolean" and isinstance(value, bool))
    )
    if not ok:
        raise EspError("SCHEMA", f"input {name!r}: {context} does not match dtype {dtype}")
    if dtype == "Number":
        if lo is not None and value < lo:
            raise EspError("SCHEMA", f"input {name!r}: {context} below min {lo}")
        if hi is not None and value > hi:
            raise EspError("SCHEMA", f"input {name!r}: {context} above max {hi}")


def _parse_output_schema(raw: Any, sheet_index: dict[str, int]) -> tuple[OutputField, ...]:
    if not isinstance(raw, list):
        raise EspError("FORMAT", "'outputs' must be a list")
    fields: list[OutputField] = []
    seen: set[str] = set()
    for entry in raw:
        if not isinstance(entry, dict):
            raise EspError("FORMAT", "output schema entries must be objects")
        name = _require(entry, "name", str)
        cell = parse_cell_ref(_require(entry, "cell", str))
        if cell.sheet not in sheet_index:
            raise EspError("SCHEMA", f"output {name!r} references missing sheet {cell.sheet!r}")
        dtype = _require(entry, "dtype", str)
        if dtype not in DTYPES:
            raise EspError("SCHEMA", f"output {name!r}: dtype must be one of {DTYPES}")
        if name in seen:
            raise EspError("SCHEMA", f"duplicate output field {name!r}")
        seen.add(name)
        fields.append(OutputField(name, cell, dtype))
    return tuple(fields)


def _check_input_cells(model: WorkbookModel) -> None:
    for fld in model.input_schema:
        cell = model.cell_at(fld.cell)
        if cell is not None and cell.is_formula:
            raise EspError(
                "SCHEMA",
                f"input {fld.name!r} cell {fld.cell.text()} holds a formula; input cells are value slots",
            )


# --- serialization ----------------------------------------------------------


def workbook_to_document(model: WorkbookModel) -> dict:
    sheets = []
    for sheet in model.sheets:
        cells: dict[str, Any] = {}
        for (col, row), cell in sheet.cells.items():
            key = f"{index_to_col(col)}{row}"
            if cell.is_formula:
                cells[key] = {"f": cell.source}
            else:
                cells[key] = {"v": value_to_json(cell.literal)}
        sheets.append({"name": sheet.name, "cells": cells})
    return {
        "name": model.name,
        "sheets": sheets,
        "inputs": [fld.to_json() for fld in model.input_schema],
        "outputs": [fld.to_json() for fld in model.output_schema],
    }


def canonical_workbook_bytes(model: WorkbookModel) -> bytes:
    """Canonical serialization used for content addressing."""
    return canonical_json(workbook_to_document(model))


def workbook_hash(model: WorkbookModel) -> str:
    return sha256_hex(canonical_workbook_bytes(model))
