"""Builtin function semantics.

Aggregates (SUM, AVERAGE, MIN, MAX, COUNT) accept scalars and ranges and
include only numbers: text, booleans, and blanks are skipped; the first
error in scan order (arguments left to right, range members row-major)
propagates. AVERAGE/MIN/MAX over zero numeric operands give ``#DIV/0!``.

IF evaluates its condition, then only the chosen branch. AND/OR evaluate
every argument (no short-circuit) so errors always surface. NPV discounts
the first cash flow one full period and accepts ranges, with blanks
counting as zero-valued flows to keep period positions.

Volatile and random functions do not exist in this dialect by
construction; evaluation is pure.
"""

from __future__ import annotations

import math
from typing import Callable, Iterator

from .parser import Node, RangeRef
from .values import (
    BLANK,
    DIV0,
    NAME,
    VALUE,
    CellError,
    CellValue,
    to_boolean,
    to_number,
)

# Context supplied by the evaluator: evaluate a scalar argument node, and
# iterate a range's member values row-major.
EvalArg = Callable[[Node], CellValue]
IterRange = Callable[[RangeRef], Iterator[CellValue]]

AGGREGATES = ("SUM", "AVERAGE", "MIN", "MAX", "COUNT")


def call_function(
    name: str, args: tuple[Node, ...], eval_arg: EvalArg, iter_range: IterRange
) -> CellValue:
    handler = _HANDLERS.get(name)
    if handler is None:
        return CellError(NAME)
    return handler(args, eval_arg, iter_range)


def _spread(args, eval_arg: EvalArg, iter_range: IterRange) -> Iterator[CellValue]:
    for arg in args:
        if isinstance(arg, RangeRef):
            yield from iter_range(arg)
        else:
            yield eval_arg(arg)


def _scalar(arg: Node, eval_arg: EvalArg) -> CellValue:
    if isinstance(arg, RangeRef):
        return CellError(VALUE)
    return eval_arg(arg)


def _finite(x: float) -> float | CellError:
    return x if math.isfinite(x) else CellError(VALUE)


def _aggregate(name: str):
    def handler(args, eval_arg, iter_range):
        numbers: list[float] = []
        for v in _spread(args, eval_arg, iter_range):
            if isinstance(v, CellError):
                return v
            if isinstance(v, float) and not isinstance(v, bool):
                numbers.append(v)
        if name == "COUNT":
            return float(len(numbers))
        if name == "SUM":
            total = 0.0
            for x in numbers:
                total += x
            return _finite(total)
        if not numbers:
            return CellError(DIV0)
        if name == "AVERAGE":
            total = 0.0
            for x in numbers:
                total += x
            return _finite(total / len(numbers))
        return min(numbers) if name == "MIN" else max(numbers)

    return handler


def _if(args, eval_arg, iter_range):
    cond = to_boolean(_scalar(args[0], eval_arg))
    if isinstance(cond, CellError):
        return cond
    if cond:
        return _scalar(args[1], eval_arg)
    if len(args) == 3:
        return _scalar(args[2], eval_arg)
    return False


def _and_or(name: str):
    def handler(args, eval_arg, iter_range):
        flags: list[bool] = []
        for arg in args:
            b = to_boolean(_scalar(arg, eval_arg))
            if isinstance(b, CellError):
                return b
            flags.append(b)
        return all(flags) if name == "AND" else any(flags)

    return handler


def _not(args, eval_arg, iter_range):
    b = to_boolean(_scalar(args[0], eval_arg))
    return b if isinstance(b, CellError) else not b


def _numeric(fn: Callable[[float], CellValue]):
    def handler(args, eval_arg, iter_range):
        x = to_number(_scalar(args[0], eval_arg))
        if isinstance(x, CellError):
            return x
        return fn(x)

    return handler


def _exp(x: float) -> CellValue:
    try:
        return _finite(math.exp(x))
    except OverflowError:
        return CellError(VALUE)


def _ln(x: float) -> CellValue:
    return CellError(VALUE) if x <= 0.0 else math.log(x)


def _sqrt(x: float) -> CellValue:
    return CellError(VALUE) if x < 0.0 else math.sqrt(x)


def _npv(args, eval_arg, iter_range):
    rate = to_number(_scalar(args[0], eval_arg))
    if isinstance(rate, CellError):
        return rate
    if rate <= -1.0:
        return CellError(DIV0)
    total = 0.0
    period = 0
    for v in _spread(args[1:], eval_arg, iter_range):
        if isinstance(v, CellError):
            return v
        period += 1
        if v is BLANK:
            v = 0.0
        if not isinstance(v, float) or isinstance(v, bool):
            return CellError(VALUE)
        total += v / (1.0 + rate) ** period
    return _finite(total)


_HANDLERS: dict[str, Callable] = {
    **{name: _aggregate(name) for name in AGGREGATES},
    "IF": _if,
    "AND": _and_or("AND"),
    "OR": _and_or("OR"),
    "NOT": _not,
    "ABS": _numeric(lambda x: abs(x)),
    "EXP": _numeric(_exp),
    "LN": _numeric(_ln),
    "SQRT": _numeric(_sqrt),
    "NPV": _npv,
}
