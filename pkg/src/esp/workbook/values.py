"""Cell value model and the coercion rules of the formula dialect.

A cell value is one of:

* ``float``  -- finite 64-bit number (NaN/infinity are never stored; any
  operation that would produce them yields ``#VALUE!``, division by an
  exact zero yields ``#DIV/0!``)
* ``str``    -- text
* ``bool``   -- boolean (checked before number everywhere, since Python
  bools are ints)
* ``CellError`` -- one of the five error kinds
* ``BLANK``  -- an absent cell; coerces to 0 in numeric context, "" in text
  context, FALSE in boolean context, and is skipped by aggregates

The coercions here are the single source of truth for the dialect; the
evaluator and the function library build on them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Union

DIV0 = "#DIV/0!"
REF = "#REF!"
VALUE = "#VALUE!"
CYCLE = "#CYCLE!"
NAME = "#NAME?"

ERROR_KINDS = (DIV0, REF, VALUE, CYCLE, NAME)


@dataclass(frozen=True)
class CellError:
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in ERROR_KINDS:
            raise ValueError(f"unknown error kind {self.kind!r}")

    def __repr__(self) -> str:
        return self.kind


class _Blank:
    """Singleton marker for absent cells."""

    _instance: "_Blank | None" = None

    def __new__(cls) -> "_Blank":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "BLANK"


BLANK = _Blank()

Value = Union[float, str, bool, CellError]
# A stored cell evaluation result: a Value or BLANK.
CellValue = Union[float, str, bool, CellError, _Blank]


def is_error(v: Any) -> bool:
    return isinstance(v, CellError)


def is_number(v: Any) -> bool:
    return isinstance(v, float) and not isinstance(v, bool)


def format_number(x: float) -> str:
    """Text form of a number: integral values print without a decimal point,
    everything else in shortest round-trip form."""
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def to_number(v: CellValue) -> float | CellError:
    """Numeric coercion: bool -> 1/0, blank -> 0, text -> #VALUE!."""
    if isinstance(v, CellError):
        return v
    if isinstance(v, bool):
        return 1.0 if v else 0.0
    if isinstance(v, float):
        return v
    if v is BLANK:
        return 0.0
    return CellError(VALUE)


def to_text(v: CellValue) -> str | CellError:
    """Text coercion: numbers via format_number, bools TRUE/FALSE, blank ''."""
    if isinstance(v, CellError):
        return v
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, float):
        return format_number(v)
    if v is BLANK:
        return ""
    return v


def to_boolean(v: CellValue) -> bool | CellError:
    """Boolean coercion: numbers are true iff nonzero, blank is FALSE,
    text never coerces (#VALUE!)."""
    if isinstance(v, CellError):
        return v
    if isinstance(v, bool):
        return v
    if isinstance(v, float):
        return v != 0.0
    if v is BLANK:
        return False
    return CellError(VALUE)


def compare(op: str, left: CellValue, right: CellValue) -> bool | CellError:
    """Comparison semantics of the dialect.

    Same-type operands compare directly (text case-sensitively, FALSE <
    TRUE). A blank operand adopts the other side's type (0 / "" / FALSE);
    two blanks compare as numbers. Mismatched types: ``=`` is FALSE, ``<>``
    is TRUE, ordered comparisons yield #VALUE!.
    """
    if isinstance(left, CellError):
        return left
    if isinstance(right, CellError):
        return right
    if left is BLANK and right is BLANK:
        left = right = 0.0
    elif left is BLANK:
        left = _blank_as(right)
    elif right is BLANK:
        right = _blank_as(left)
    if _type_tag(left) != _type_tag(right):
        if op == "=":
            return False
        if op == "<>":
            return True
        return CellError(VALUE)
    if op == "=":
        return left == right
    if op == "<>":
        return left != right
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    raise ValueError(f"unknown comparison {op!r}")


def _type_tag(v: Value) -> str:
    if isinstance(v, bool):
        return "boolean"
    if isinstance(v, float):
        return "number"
    return "text"


def _blank_as(other: Value) -> Value:
    if isinstance(other, bool):
        return False
    if isinstance(other, float):
        return 0.0
    return ""


def value_to_json(v: CellValue) -> Any:
    """Wire form of a value: numbers/text/bools as themselves, errors as
    ``{"error": kind}``. BLANK has no wire form (callers coerce first)."""
    if isinstance(v, CellError):
        return {"error": v.kind}
    if v is BLANK:
        raise ValueError("BLANK has no serialized form")
    return v


def value_from_json(obj: Any) -> Value:
    """Parse a wire value. Integers become floats; ``{"error": kind}``
    becomes a CellError."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (int, float)):
        return float(obj)
    if isinstance(obj, str):
        return obj
    if isinstance(obj, dict) and set(obj) == {"error"} and obj["error"] in ERROR_KINDS:
        return CellError(obj["error"])
    raise ValueError(f"not a value: {obj!r}")
