"""Formula language: tokens, AST, recursive-descent parser, printer.

Grammar (loosest to tightest): comparisons ``= <> < <= > >=`` (left), text
concatenation ``&`` (left), additive ``+ -`` (left), multiplicative
``* /`` (left), unary minus, power ``^`` (right-associative, binding
tighter than unary minus so ``=-2^2`` is ``-(2^2)``; the right operand of
``^`` may itself be a unary expression, so ``=2^-3`` parses).

Ranges are rectangular, same-sheet, and legal only as direct function
arguments. ``$`` markers are accepted and discarded. Function names are
case-insensitive and canonicalized to upper case; unknown names parse
fine and evaluate to ``#NAME?``. Fixed arities are checked at parse time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

MAX_RANGE_CELLS = 1_048_576
MAX_COL = 702  # ZZ

# (min, max) argument counts; None means unbounded
FUNCTION_ARITY: dict[str, tuple[int, int | None]] = {
    "SUM": (1, None), "AVERAGE": (1, None), "MIN": (1, None), "MAX": (1, None),
    "COUNT": (1, None), "IF": (2, 3), "AND": (1, None), "OR": (1, None),
    "NOT": (1, 1), "ABS": (1, 1), "EXP": (1, 1), "LN": (1, 1), "SQRT": (1, 1),
    "NPV": (2, None),
}


class FormulaError(Exception):
    """Formula rejected at parse time. ``code`` is PARSE, or SCHEMA for the
    range-size cap; ``offset`` indexes into the full formula source."""

    def __init__(self, message: str, offset: int, code: str = "PARSE"):
        super().__init__(f"{message} (offset {offset})")
        self.message = message
        self.offset = offset
        self.code = code


# --- AST ---------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    value: Union[float, str, bool]


@dataclass(frozen=True)
class Ref:
    sheet: str | None
    col: int  # 1-based, A == 1
    row: int


@dataclass(frozen=True)
class RangeRef:
    sheet: str | None
    col1: int
    row1: int
    col2: int
    row2: int


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Node", ...] = field(default_factory=tuple)


Node = Union[Lit, Ref, RangeRef, Unary, Binary, Call]


def col_to_index(letters: str) -> int:
    n = 0
    for ch in letters.upper():
        n = n * 26 + (ord(ch) - 64)
    return n


def index_to_col(n: int) -> str:
    out = ""
    while n > 0:
        n, rem = divmod(n - 1, 26)
        out = chr(65 + rem) + out
    return out


# --- Lexer ---------------------------------------------------------------

NUMBER_RE = re.compile(r"(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
CELL_PART_RE = re.compile(r"\$?([A-Za-z]{1,2})\$?([0-9]+)")
QUOTED_SHEET_RE = re.compile(r"'((?:[^']|'')+)'!")
PLAIN_SHEET_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)!")
TWO_CHAR_OPS = ("<=", ">=", "<>")
ONE_CHAR_OPS = "=<>+-*/^&(),"


@dataclass(frozen=True)
class Token:
    kind: str  # NUMBER STRING BOOL NAME REF RANGE OP EOF
    text: str
    offset: int
    value: object = None  # parsed payload for NUMBER/STRING/REF/RANGE


def _word_boundary(src: str, pos: int) -> bool:
    return pos >= len(src) or not (src[pos].isalnum() or src[pos] == "_")


def _lex_cell_part(src: str, pos: int, start: int) -> tuple[int, int, int]:
    m = CELL_PART_RE.match(src, pos)
    if m is None or not _word_boundary(src, m.end()):
        raise FormulaError("expected a cell reference", start)
    col = col_to_index(m.group(1))
    row = int(m.group(2))
    if row < 1:
        raise FormulaError("cell row must be at least 1", start)
    return col, row, m.end()


def tokenize(src: str) -> list[Token]:
    """Tokenize formula source (the leading ``=`` included in offsets)."""
    tokens: list[Token] = []
    pos = 1  # skip the leading '='
    n = len(src)
    while pos < n:
        ch = src[pos]
        if ch in " \t":
            pos += 1
            continue
        start = pos
        if ch.isdigit() or (ch == "." and pos + 1 < n and src[pos + 1].isdigit()):
            m = NUMBER_RE.match(src, pos)
            tokens.append(Token("NUMBER", m.group(), start, float(m.group())))
            pos = m.end()
            continue
        if ch == '"':
            pos += 1
            parts: list[str] = []
            while True:
                if pos >= n:
                    raise FormulaError("unterminated string literal", start)
                if src[pos] == '"':
                    if pos + 1 < n and src[pos + 1] == '"':
                        parts.append('"')
                        pos += 2
                        continue
                    pos += 1
                    break
                parts.append(src[pos])
                pos += 1
            tokens.append(Token("STRING", src[start:pos], start, "".join(parts)))
            continue
        if ch == "'" or ch.isalpha() or ch == "_" or ch == "$":
            tok, pos = _lex_word(src, pos, start)
            tokens.append(tok)
            continue
        two = src[pos:pos + 2]
        if two in TWO_CHAR_OPS:
            tokens.append(Token("OP", two, start))
            pos += 2
            continue
        if ch in ONE_CHAR_OPS:
            tokens.append(Token("OP", ch, start))
            pos += 1
            continue
        raise FormulaError(f"unexpected character {ch!r}", start)
    tokens.append(Token("EOF", "", n))
    return tokens


def _lex_word(src: str, pos: int, start: int) -> tuple[Token, int]:
    """Lex a reference, range, sheet-qualified reference, boolean, or name."""
    sheet: str | None = None
    if src[pos] == "'":
        m = QUOTED_SHEET_RE.match(src, pos)
        if m is None:
            raise FormulaError("unterminated quoted sheet name", start)
        sheet = m.group(1).replace("''", "'")
        pos = m.end()
    else:
        m = PLAIN_SHEET_RE.match(src, pos)
        if m is not None:
            sheet = m.group(1)
            pos = m.end()

    if sheet is None and src[pos] != "$":
        cell = CELL_PART_RE.match(src, pos)
        if cell is None or not _word_boundary(src, cell.end()):
            # plain identifier: boolean literal or (function) name
            m = IDENT_RE.match(src, pos)
            if m is None:
                raise FormulaError("expected a name or reference", start)
            text = m.group()
            upper = text.upper()
            if upper in ("TRUE", "FALSE"):
                return Token("BOOL", text, start, upper == "TRUE"), m.end()
            return Token("NAME", text, start, upper), m.end()

    col1, row1, pos = _lex_cell_part(src, pos, start)
    if pos < len(src) and src[pos] == ":":
        col2, row2, pos = _lex_cell_part(src, pos + 1, start)
        c1, c2 = min(col1, col2), max(col1, col2)
        r1, r2 = min(row1, row2), max(row1, row2)
        if (c2 - c1 + 1) * (r2 - r1 + 1) > MAX_RANGE_CELLS:
            raise FormulaError(
                f"range exceeds {MAX_RANGE_CELLS} cells", start, code="SCHEMA"
            )
        rng = RangeRef(sheet, c1, r1, c2, r2)
        return Token("RANGE", src[start:pos], start, rng), pos
    return Token("REF", src[start:pos], start, Ref(sheet, col1, row1)), pos


# --- Parser ---------------------------------------------------------------

COMPARISON_OPS = ("=", "<>", "<", "<=", ">", ">=")


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def take(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, text: str) -> Token:
        tok = self.peek()
        if tok.kind != "OP" or tok.text != text:
            raise FormulaError(f"expected {text!r}", tok.offset)
        return self.take()

    def at_op(self, *texts: str) -> bool:
        tok = self.peek()
        return tok.kind == "OP" and tok.text in texts

    def parse(self) -> Node:
        node = self.comparison()
        tok = self.peek()
        if tok.kind != "EOF":
            raise FormulaError(f"unexpected {tok.text!r}", tok.offset)
        return node

    def comparison(self) -> Node:
        node = self.concat()
        while self.at_op(*COMPARISON_OPS):
            op = self.take().text
            node = Binary(op, node, self.concat())
        return node

    def concat(self) -> Node:
        node = self.additive()
        while self.at_op("&"):
            self.take()
            node = Binary("&", node, self.additive())
        return node

    def additive(self) -> Node:
        node = self.multiplicative()
        while self.at_op("+", "-"):
            op = self.take().text
            node = Binary(op, node, self.multiplicative())
        return node

    def multiplicative(self) -> Node:
        node = self.unary()
        while self.at_op("*", "/"):
            op = self.take().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.at_op("-"):
            self.take()
            return Unary("-", self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.at_op("^"):
            self.take()
            return Binary("^", base, self.unary())
        return base

    def atom(self) -> Node:
        tok = self.peek()
        if tok.kind in ("NUMBER", "STRING", "BOOL"):
            self.take()
            return Lit(tok.value)
        if tok.kind == "REF":
            self.take()
            return tok.value
        if tok.kind == "RANGE":
            raise FormulaError(
                "range reference is only allowed as a function argument", tok.offset
            )
        if tok.kind == "NAME":
            return self.call()
        if tok.kind == "OP" and tok.text == "(":
            self.take()
            node = self.comparison()
            self.expect_op(")")
            return node
        if tok.kind == "EOF":
            raise FormulaError("unexpected end of formula", tok.offset)
        raise FormulaError(f"unexpected {tok.text!r}", tok.offset)

    def call(self) -> Node:
        name_tok = self.take()
        name: str = name_tok.value  # already upper-cased
        tok = self.peek()
        if not (tok.kind == "OP" and tok.text == "("):
            raise FormulaError(f"unknown name {name_tok.text!r}", name_tok.offset)
        self.take()
        args: list[Node] = []
        if not self.at_op(")"):
            args.append(self.argument())
            while self.at_op(","):
                self.take()
                args.append(self.argument())
        self.expect_op(")")
        arity = FUNCTION_ARITY.get(name)
        if arity is not None:
            lo, hi = arity
            if len(args) < lo or (hi is not None and len(args) > hi):
                raise FormulaError(
                    f"{name} takes {lo}" + ("" if hi == lo else f"..{hi or 'n'}")
                    + f" arguments, got {len(args)}",
                    name_tok.offset,
                )
        return Call(name, tuple(args))

    def argument(self) -> Node:
        tok = self.peek()
        if tok.kind == "RANGE":
            self.take()
            return tok.value
        return self.comparison()


def parse_formula(text: str) -> Node:
    """Parse a formula (must begin with ``=``) into an AST."""
    if not text.startswith("="):
        raise FormulaError("formula must start with '='", 0)
    return _Parser(tokenize(text)).parse()


# --- Printer ---------------------------------------------------------------

_LEVEL = {"cmp": 1, "&": 2, "add": 3, "mul": 4, "unary": 5, "pow": 6, "atom": 7}
_BIN_LEVEL = {"=": 1, "<>": 1, "<": 1, "<=": 1, ">": 1, ">=": 1,
              "&": 2, "+": 3, "-": 3, "*": 4, "/": 4, "^": 6}


def print_formula(node: Node) -> str:
    """Render an AST back to source, with minimal parentheses. The result
    reparses to a structurally equal AST."""
    return "=" + _print(node, 0)


def _print(node: Node, min_level: int) -> str:
    if isinstance(node, Lit):
        return _print_literal(node.value)
    if isinstance(node, Ref):
        return _sheet_prefix(node.sheet) + f"{index_to_col(node.col)}{node.row}"
    if isinstance(node, RangeRef):
        return (_sheet_prefix(node.sheet)
                + f"{index_to_col(node.col1)}{node.row1}"
                + f":{index_to_col(node.col2)}{node.row2}")
    if isinstance(node, Call):
        args = ",".join(_print(a, 0) for a in node.args)
        return f"{node.name}({args})"
    if isinstance(node, Unary):
        text = "-" + _print(node.operand, _LEVEL["unary"])
        return _wrap(text, _LEVEL["unary"], min_level)
    if isinstance(node, Binary):
        level = _BIN_LEVEL[node.op]
        if node.op == "^":
            # base must be an atom; exponent may be a unary expression
            text = _print(node.left, _LEVEL["atom"]) + "^" + _print(node.right, _LEVEL["unary"])
        else:
            text = _print(node.left, level) + node.op + _print(node.right, level + 1)
        return _wrap(text, level, min_level)
    raise TypeError(f"not an AST node: {node!r}")


def _wrap(text: str, level: int, min_level: int) -> str:
    return f"({text})" if level < min_level else text


def _print_literal(value: Union[float, str, bool]) -> str:
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, str):
        return '"' + value.replace('"', '""') + '"'
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _sheet_prefix(sheet: str | None) -> str:
    if sheet is None:
        return ""
    if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", sheet):
        return sheet + "!"
    return "'" + sheet.replace("'", "''") + "'!"


def collect_refs(node: Node) -> list[Union[Ref, RangeRef]]:
    """All cell and range references in an AST, in evaluation order."""
    out: list[Union[Ref, RangeRef]] = []
    _collect(node, out)
    return out


def _collect(node: Node, out: list) -> None:
    if isinstance(node, (Ref, RangeRef)):
        out.append(node)
    elif isinstance(node, Unary):
        _collect(node.operand, out)
    elif isinstance(node, Binary):
        _collect(node.left, out)
        _collect(node.right, out)
    elif isinstance(node, Call):
        for a in node.args:
            _collect(a, out)
