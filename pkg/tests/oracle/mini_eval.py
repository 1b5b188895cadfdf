"""Brute-force workbook evaluator used to produce expected test values.

Deliberately independent of the main package: it has its own tokenizer, a
table-driven precedence-climbing parser, and a naive recursive evaluator
with memoization. No dependency graph, no topological order, no
incremental state -- every evaluation starts from scratch. Cycle members
are found the dumb way (a cell is cyclic iff it can reach itself through
static references).

Values here are plain Python objects: float / str / bool, ``None`` for a
blank cell, and ``("err", kind)`` tuples for error values.
"""

from __future__ import annotations

import math
import re

ERRORS = ("#DIV/0!", "#REF!", "#VALUE!", "#CYCLE!", "#NAME?")

TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)
  | (?P<str>"(?:[^"]|"")*")
  | (?P<ref>(?:(?:'(?:[^']|'')+'|[A-Za-z_][A-Za-z0-9_]*)!)?\$?[A-Za-z]{1,2}\$?[0-9]+(?::\$?[A-Za-z]{1,2}\$?[0-9]+)?)(?![A-Za-z0-9_])
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|<>|[=<>+\-*/^&(),])
    """,
    re.VERBOSE,
)

BIN_PREC = {"=": 1, "<>": 1, "<": 1, "<=": 1, ">": 1, ">=": 1,
            "&": 2, "+": 3, "-": 3, "*": 4, "/": 4, "^": 6}
UNARY_PREC = 5
RIGHT_ASSOC = {"^"}


def col_num(letters: str) -> int:
    n = 0
    for ch in letters.upper():
        n = n * 26 + (ord(ch) - 64)
    return n


def _split_ref(text: str) -> tuple[str | None, int, int, int, int]:
    """Break a ref token into (sheet, c1, r1, c2, r2); single cells repeat."""
    sheet = None
    if "!" in text:
        prefix, text = text.split("!", 1)
        if prefix.startswith("'"):
            sheet = prefix[1:-1].replace("''", "'")
        else:
            sheet = prefix
    parts = text.split(":")
    cells = []
    for part in parts:
        m = re.fullmatch(r"\$?([A-Za-z]{1,2})\$?([0-9]+)", part)
        cells.append((col_num(m.group(1)), int(m.group(2))))
    (c1, r1) = cells[0]
    (c2, r2) = cells[-1]
    return sheet, min(c1, c2), min(r1, r2), max(c1, c2), max(r1, r2)


def tokenize(src: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    while pos < len(src):
        m = TOKEN_RE.match(src, pos)
        if m is None:
            raise ValueError(f"bad char at {pos} in {src!r}")
        pos = m.end()
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group()))
    out.append(("eof", ""))
    return out


class MiniParser:
    def __init__(self, formula: str):
        assert formula.startswith("=")
        self.toks = tokenize(formula[1:])
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def parse(self):
        node = self.expr(0)
        if self.peek()[0] != "eof":
            raise ValueError(f"trailing tokens: {self.peek()}")
        return node

    def expr(self, min_prec: int):
        lhs = self.unary()
        while True:
            kind, text = self.peek()
            if kind != "op" or text not in BIN_PREC or BIN_PREC[text] < min_prec:
                return lhs
            self.take()
            nxt = BIN_PREC[text] if text in RIGHT_ASSOC else BIN_PREC[text] + 1
            lhs = ("bin", text, lhs, self.expr(nxt))

    def unary(self):
        kind, text = self.peek()
        if kind == "op" and text == "-":
            self.take()
            # unary minus binds looser than ^, so its operand re-enters the
            # climb at the power level
            return ("un", "-", self.expr(BIN_PREC["^"]))
        return self.atom()

    def atom(self):
        kind, text = self.take()
        if kind == "num":
            return ("num", float(text))
        if kind == "str":
            return ("text", text[1:-1].replace('""', '"'))
        if kind == "ref":
            sheet, c1, r1, c2, r2 = _split_ref(text)
            if ":" in text:
                return ("range", sheet, c1, r1, c2, r2)
            return ("ref", sheet, c1, r1)
        if kind == "name":
            upper = text.upper()
            if upper == "TRUE":
                return ("bool", True)
            if upper == "FALSE":
                return ("bool", False)
            k, t = self.take()
            assert k == "op" and t == "(", f"name {text} not a call"
            args = []
            if self.peek() != ("op", ")"):
                args.append(self.expr(0))
                while self.peek() == ("op", ","):
                    self.take()
                    args.append(self.expr(0))
            assert self.take() == ("op", ")")
            return ("call", upper, args)
        if kind == "op" and text == "(":
            inner = self.expr(0)
            assert self.take() == ("op", ")")
            return inner
        raise ValueError(f"unexpected token {text!r}")


def err(kind):
    return ("err", kind)


def is_err(v):
    return isinstance(v, tuple) and len(v) == 2 and v[0] == "err"


def num_of(v):
    if is_err(v):
        return v
    if isinstance(v, bool):
        return 1.0 if v else 0.0
    if isinstance(v, float):
        return v
    if v is None:
        return 0.0
    return err("#VALUE!")


def text_of(v):
    if is_err(v):
        return v
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, float):
        if v == int(v) and abs(v) < 1e16:
            return str(int(v))
        return repr(v)
    if v is None:
        return ""
    return v


def bool_of(v):
    if is_err(v):
        return v
    if isinstance(v, bool):
        return v
    if isinstance(v, float):
        return v != 0.0
    if v is None:
        return False
    return err("#VALUE!")


def finite(x):
    return x if math.isfinite(x) else err("#VALUE!")


def tag(v):
    if isinstance(v, bool):
        return "b"
    if isinstance(v, float):
        return "n"
    return "t"


class MiniWorkbook:
    def __init__(self, doc: dict):
        self.doc = doc
        self.sheet_names = [s["name"] for s in doc["sheets"]]
        self.cells: dict[tuple[str, int, int], tuple] = {}
        for sheet in doc["sheets"]:
            for key, cell in sheet.get("cells", {}).items():
                m = re.fullmatch(r"([A-Z]{1,2})([0-9]+)", key)
                addr = (sheet["name"], col_num(m.group(1)), int(m.group(2)))
                if "f" in cell:
                    self.cells[addr] = ("formula", MiniParser(cell["f"]).parse())
                else:
                    v = cell["v"]
                    if isinstance(v, bool):
                        self.cells[addr] = ("lit", v)
                    elif isinstance(v, (int, float)):
                        self.cells[addr] = ("lit", float(v))
                    else:
                        self.cells[addr] = ("lit", v)
        self.cyclic = self._find_cycles()
        self.memo: dict[tuple[str, int, int], object] = {}

    # -- static reference edges -------------------------------------------

    def _static_refs(self, node, home: str, out: set):
        k = node[0]
        if k == "ref":
            sheet = node[1] or home
            out.add((sheet, node[2], node[3]))
        elif k == "range":
            sheet = node[1] or home
            for r in range(node[3], node[5] + 1):
                for c in range(node[2], node[4] + 1):
                    out.add((sheet, c, r))
        elif k == "un":
            self._static_refs(node[2], home, out)
        elif k == "bin":
            self._static_refs(node[2], home, out)
            self._static_refs(node[3], home, out)
        elif k == "call":
            for a in node[2]:
                self._static_refs(a, home, out)

    def _find_cycles(self) -> set:
        edges: dict[tuple, set] = {}
        for addr, cell in self.cells.items():
            if cell[0] == "formula":
                refs: set = set()
                self._static_refs(cell[1], addr[0], refs)
                edges[addr] = refs
        cyclic = set()
        for start in edges:
            # brute-force reachability from start's successors back to start
            stack = list(edges.get(start, ()))
            seen = set()
            while stack:
                cur = stack.pop()
                if cur == start:
                    cyclic.add(start)
                    break
                if cur in seen:
                    continue
                seen.add(cur)
                stack.extend(edges.get(cur, ()))
        return cyclic

    # -- evaluation --------------------------------------------------------

    def cell_value(self, sheet: str, col: int, row: int):
        if sheet not in self.sheet_names:
            return err("#REF!")
        addr = (sheet, col, row)
        if addr in self.memo:
            return self.memo[addr]
        if addr in self.cyclic:
            v = err("#CYCLE!")
        else:
            cell = self.cells.get(addr)
            if cell is None:
                v = None
            elif cell[0] == "lit":
                v = cell[1]
            else:
                v = self.eval_node(cell[1], sheet)
        self.memo[addr] = v
        return v

    def eval_node(self, node, home: str):
        k = node[0]
        if k in ("num", "text", "bool"):
            return node[1]
        if k == "ref":
            return self.cell_value(node[1] or home, node[2], node[3])
        if k == "range":
            return err("#VALUE!")  # bare range outside aggregate args
        if k == "un":
            v = num_of(self.eval_node(node[2], home))
            return v if is_err(v) else finite(-v)
        if k == "bin":
            return self.eval_bin(node, home)
        if k == "call":
            return self.eval_call(node[1], node[2], home)
        raise AssertionError(node)

    def eval_bin(self, node, home):
        op = node[1]
        lv = self.eval_node(node[2], home)
        rv = self.eval_node(node[3], home)
        if op in ("=", "<>", "<", "<=", ">", ">="):
            return self.compare(op, lv, rv)
        if op == "&":
            lt, rt = text_of(lv), text_of(rv)
            if is_err(lt):
                return lt
            if is_err(rt):
                return rt
            return lt + rt
        ln, rn = num_of(lv), num_of(rv)
        if is_err(ln):
            return ln
        if is_err(rn):
            return rn
        if op == "+":
            return finite(ln + rn)
        if op == "-":
            return finite(ln - rn)
        if op == "*":
            return finite(ln * rn)
        if op == "/":
            if rn == 0.0:
                return err("#DIV/0!")
            return finite(ln / rn)
        if op == "^":
            try:
                v = ln ** rn
            except ZeroDivisionError:
                return err("#DIV/0!")
            except (OverflowError, ValueError):
                return err("#VALUE!")
            if isinstance(v, complex):
                return err("#VALUE!")
            return finite(v)
        raise AssertionError(op)

    def compare(self, op, lv, rv):
        if is_err(lv):
            return lv
        if is_err(rv):
            return rv
        if lv is None and rv is None:
            lv = rv = 0.0
        elif lv is None:
            lv = {"b": False, "n": 0.0, "t": ""}[tag(rv)]
        elif rv is None:
            rv = {"b": False, "n": 0.0, "t": ""}[tag(lv)]
        if tag(lv) != tag(rv):
            if op == "=":
                return False
            if op == "<>":
                return True
            return err("#VALUE!")
        return {"=": lv == rv, "<>": lv != rv, "<": lv < rv,
                "<=": lv <= rv, ">": lv > rv, ">=": lv >= rv}[op]

    def _spread(self, args, home):
        """Yield scalar values of args, range members row-major."""
        for a in args:
            if a[0] == "range":
                sheet = a[1] or home
                for r in range(a[3], a[5] + 1):
                    for c in range(a[2], a[4] + 1):
                        yield self.cell_value(sheet, c, r)
            else:
                yield self.eval_node(a, home)

    def eval_call(self, name, args, home):
        if name in ("SUM", "AVERAGE", "MIN", "MAX", "COUNT"):
            nums = []
            for v in self._spread(args, home):
                if is_err(v):
                    return v
                if isinstance(v, float) and not isinstance(v, bool):
                    nums.append(v)
            if name == "COUNT":
                return float(len(nums))
            if name == "SUM":
                total = 0.0
                for x in nums:
                    total += x
                return finite(total)
            if not nums:
                return err("#DIV/0!")
            if name == "AVERAGE":
                total = 0.0
                for x in nums:
                    total += x
                return finite(total / len(nums))
            if name == "MIN":
                return min(nums)
            return max(nums)
        if name == "IF":
            cond = bool_of(self.eval_node(args[0], home))
            if is_err(cond):
                return cond
            if cond:
                return self.eval_node(args[1], home)
            if len(args) == 3:
                return self.eval_node(args[2], home)
            return False
        if name in ("AND", "OR"):
            flags = []
            for a in args:
                b = bool_of(self.eval_node(a, home))
                if is_err(b):
                    return b
                flags.append(b)
            return all(flags) if name == "AND" else any(flags)
        if name == "NOT":
            b = bool_of(self.eval_node(args[0], home))
            return b if is_err(b) else not b
        if name in ("ABS", "EXP", "LN", "SQRT"):
            x = num_of(self.eval_node(args[0], home))
            if is_err(x):
                return x
            if name == "ABS":
                return abs(x)
            if name == "EXP":
                try:
                    return finite(math.exp(x))
                except OverflowError:
                    return err("#VALUE!")
            if name == "LN":
                return err("#VALUE!") if x <= 0 else math.log(x)
            return err("#VALUE!") if x < 0 else math.sqrt(x)
        if name == "NPV":
            rate = num_of(self.eval_node(args[0], home))
            if is_err(rate):
                return rate
            if rate <= -1.0:
                return err("#DIV/0!")
            total, i = 0.0, 0
            for v in self._spread(args[1:], home):
                if is_err(v):
                    return v
                i += 1
                if v is None:
                    v = 0.0
                if not isinstance(v, float) or isinstance(v, bool):
                    return err("#VALUE!")
                total += v / (1.0 + rate) ** i
            return finite(total)
        return err("#NAME?")

    # -- corpus helpers ------------------------------------------------------

    def all_values(self) -> dict[str, object]:
        """Values of every cell present in the document, keyed Sheet!A1."""
        out = {}
        for (sheet, col, row) in sorted(self.cells):
            out[f"{sheet}!{col_letters(col)}{row}"] = self.cell_value(sheet, col, row)
        return out


def col_letters(n: int) -> str:
    out = ""
    while n > 0:
        n, rem = divmod(n - 1, 26)
        out = chr(65 + rem) + out
    return out


def value_to_jsonable(v) -> dict:
    if v is None:
        return {"blank": True}
    if is_err(v):
        return {"e": v[1]}
    if isinstance(v, bool):
        return {"b": v}
    if isinstance(v, float):
        return {"n": v}
    return {"s": v}
