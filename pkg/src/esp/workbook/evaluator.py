"""Workbook evaluation: full passes and incremental recalculation.

An :class:`EvalSession` owns the mutable evaluated state (cell values,
input overrides) over an immutable model + dependency graph. Sessions are
single-owner; Monte Carlo parallelism clones sessions instead of locking
one. ``on_step`` is invoked once per evaluated formula cell and is the
hook for step budgets, watchdog cancellation, and slow-model simulation.

Incremental recalculation marks the transitive formula dependents of
rebound input cells dirty and re-evaluates them in topological order; the
result is bit-identical to a full pass with the same overrides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator

from ..errors import EspError
from .functions import call_function
from .graph import DepGraph, build_dependency_graph, expand_range, resolve_ref
from .model import CellRef, InputField, OutputField, WorkbookModel
from .parser import Binary, Call, Lit, Node, RangeRef, Ref, Unary
from .values import (
    BLANK,
    CYCLE,
    DIV0,
    REF,
    VALUE,
    CellError,
    CellValue,
    Value,
    compare,
    is_number,
    to_number,
    to_text,
)

CellValues = dict[CellRef, CellValue]
StepHook = Callable[[], None]


class EvalSession:
    """Mutable evaluated state over an immutable (model, graph) pair."""

    def __init__(
        self,
        model: WorkbookModel,
        graph: DepGraph | None = None,
        on_step: StepHook | None = None,
    ):
        self.model = model
        self.graph = graph if graph is not None else build_dependency_graph(model)
        self.on_step = on_step
        self.values: CellValues = {}
        self.overrides: dict[CellRef, Value] = {}
        self.eval_count = 0
        self._evaluated = False

    def clone(self) -> "EvalSession":
        """Fresh single-owner session sharing the immutable parts."""
        twin = EvalSession(self.model, self.graph, self.on_step)
        twin.values = dict(self.values)
        twin.overrides = dict(self.overrides)
        twin._evaluated = self._evaluated
        return twin

    # -- full evaluation ---------------------------------------------------

    def evaluate_all(self) -> CellValues:
        self.values = {}
        for ref in self.graph.cycle_members:
            self.values[ref] = CellError(CYCLE)
        for ref in self.graph.topo_order:
            self.values[ref] = self._compute(ref)
        self._evaluated = True
        return self.values

    def _compute(self, ref: CellRef) -> CellValue:
        override = self.overrides.get(ref)
        if override is not None:
            return override
        if ref.sheet not in self.model.sheet_index:
            return CellError(REF)
        cell = self.model.cell_at(ref)
        if cell is None:
            return BLANK
        if not cell.is_formula:
            return cell.literal
        if self.on_step is not None:
            self.on_step()
        self.eval_count += 1
        return self._eval_node(cell.formula, ref.sheet)

    # -- incremental recalculation -----------------------------------------

    def set_inputs_and_recalculate(
        self, bindings: dict[str, Value], allow_locked: bool = False
    ) -> CellValues:
        """Write bindings to their input cells and re-evaluate exactly the
        dirty formula cells, in topological order."""
        if not self._evaluated:
            self.evaluate_all()
        changed: list[CellRef] = []
        for name in sorted(bindings):
            fld = self.model.input_field(name)
            if fld is None:
                raise EspError("UNKNOWN_INPUT", f"no input field named {name!r}")
            if fld.locked and not allow_locked:
                raise EspError("LOCKED_INPUT", f"input {name!r} is locked")
            self.overrides[fld.cell] = bindings[name]
            self.values[fld.cell] = bindings[name]
            changed.append(fld.cell)

        dirty = self._transitive_formula_dependents(changed)
        for ref in sorted(dirty, key=self.graph.topo_pos.__getitem__):
            self.values[ref] = self._compute(ref)
        return self.values

    def _transitive_formula_dependents(self, roots: list[CellRef]) -> set[CellRef]:
        dirty: set[CellRef] = set()
        stack = list(roots)
        while stack:
            for dependent in self.graph.dependents_of.get(stack.pop(), ()):
                if dependent in dirty or dependent in self.graph.cycle_members:
                    continue
                dirty.add(dependent)
                stack.append(dependent)
        return dirty

    # -- expression evaluation ----------------------------------------------

    def _eval_node(self, node: Node, home: str) -> CellValue:
        if isinstance(node, Lit):
            return node.value
        if isinstance(node, Ref):
            return self._read(resolve_ref(node, home))
        if isinstance(node, RangeRef):
            return CellError(VALUE)  # bare range outside aggregate arguments
        if isinstance(node, Unary):
            x = to_number(self._eval_node(node.operand, home))
            if isinstance(x, CellError):
                return x
            return _finite(-x)
        if isinstance(node, Binary):
            return self._eval_binary(node, home)
        if isinstance(node, Call):
            return call_function(
                node.name,
                node.args,
                lambda arg: self._eval_node(arg, home),
                lambda rng: self._iter_range(rng, home),
            )
        raise TypeError(f"not an AST node: {node!r}")

    def _read(self, ref: CellRef) -> CellValue:
        if ref.sheet not in self.model.sheet_index:
            return CellError(REF)
        return self.values.get(ref, BLANK)

    def _iter_range(self, rng: RangeRef, home: str) -> Iterator[CellValue]:
        sheet = rng.sheet or home
        if sheet not in self.model.sheet_index:
            yield CellError(REF)
            return
        for ref in expand_range(rng, home):
            yield self.values.get(ref, BLANK)

    def _eval_binary(self, node: Binary, home: str) -> CellValue:
        op = node.op
        left = self._eval_node(node.left, home)
        right = self._eval_node(node.right, home)
        if op in ("=", "<>", "<", "<=", ">", ">="):
            return compare(op, left, right)
        if op == "&":
            lt = to_text(left)
            if isinstance(lt, CellError):
                return lt
            rt = to_text(right)
            if isinstance(rt, CellError):
                return rt
            return lt + rt
        ln = to_number(left)
        if isinstance(ln, CellError):
            return ln
        rn = to_number(right)
        if isinstance(rn, CellError):
            return rn
        if op == "+":
            return _finite(ln + rn)
        if op == "-":
            return _finite(ln - rn)
        if op == "*":
            return _finite(ln * rn)
        if op == "/":
            if rn == 0.0:
                return CellError(DIV0)
            return _finite(ln / rn)
        if op == "^":
            try:
                result = ln ** rn
            except ZeroDivisionError:
                return CellError(DIV0)
            except (OverflowError, ValueError):
                return CellError(VALUE)
            if isinstance(result, complex):
                return CellError(VALUE)
            return _finite(result)
        raise ValueError(f"unknown operator {op!r}")


def _finite(x: float) -> float | CellError:
    return x if math.isfinite(x) else CellError(VALUE)


def evaluate_all(model: WorkbookModel, graph: DepGraph | None = None) -> CellValues:
    """One-shot full evaluation (convenience over EvalSession)."""
    return EvalSession(model, graph).evaluate_all()


# --- input validation --------------------------------------------------------


@dataclass
class ValidationReport:
    ok: bool
    violations: list[dict[str, Any]]
    effective: dict[str, Value] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {"ok": self.ok, "violations": self.violations}


def validate_inputs(
    schema: tuple[InputField, ...] | list[InputField], bindings: dict[str, Value]
) -> ValidationReport:
    """Field-wise pre-screening at the submission boundary.

    Locked fields reject any override and always take their default;
    optional absent fields are filled from defaults; required fields must
    be bound explicitly.
    """
    violations: list[dict[str, Any]] = []
    effective: dict[str, Value] = {}
    names = {fld.name for fld in schema}

    for name in sorted(bindings):
        if name not in names:
            violations.append({
                "field": name, "kind": "unknown-name",
                "message": f"no input field named {name!r}",
            })

    for fld in schema:
        bound = fld.name in bindings
        if fld.locked:
            if bound:
                violations.append({
                    "field": fld.name, "kind": "locked-override",
                    "message": f"{fld.name!r} is locked to its central default",
                    "value": _jsonish(bindings[fld.name]),
                })
            effective[fld.name] = fld.default
            continue
        if not bound:
            if fld.required:
                violations.append({
                    "field": fld.name, "kind": "missing-required",
                    "message": f"{fld.name!r} is required",
                })
            elif fld.default is not None:
                effective[fld.name] = fld.default
            continue
        value = bindings[fld.name]
        if not _matches_dtype(value, fld.dtype):
            violations.append({
                "field": fld.name, "kind": "type-mismatch",
                "message": f"{fld.name!r} expects {fld.dtype}",
                "value": _jsonish(value),
            })
            continue
        if fld.dtype == "Number":
            if (fld.min is not None and value < fld.min) or (
                fld.max is not None and value > fld.max
            ):
                violations.append({
                    "field": fld.name, "kind": "out-of-bounds",
                    "message": f"{fld.name!r} must be in [{_bound(fld.min)}, {_bound(fld.max)}]",
                    "value": value, "min": fld.min, "max": fld.max,
                })
                continue
        effective[fld.name] = value

    return ValidationReport(ok=not violations, violations=violations, effective=effective)


def _matches_dtype(value: Value, dtype: str) -> bool:
    if dtype == "Number":
        return is_number(value)
    if dtype == "Text":
        return isinstance(value, str)
    return isinstance(value, bool)


def _bound(x: float | None) -> str:
    return repr(x) if x is not None else "unbounded"


def _jsonish(value: Value) -> Any:
    if isinstance(value, CellError):
        return {"error": value.kind}
    return value


# --- output extraction --------------------------------------------------------


_BLANK_BY_DTYPE: dict[str, Value] = {"Number": 0.0, "Text": "", "Boolean": False}


def extract_outputs(
    values: CellValues, schema: tuple[OutputField, ...] | list[OutputField]
) -> dict[str, Value]:
    """Read each output field's cell. Blank cells coerce per the field
    dtype; error values pass through unmasked."""
    out: dict[str, Value] = {}
    for fld in schema:
        v = values.get(fld.cell, BLANK)
        if v is BLANK:
            v = _BLANK_BY_DTYPE[fld.dtype]
        out[fld.name] = v
    return out
