"""Dependency graph: static reference edges, cycle detection, topo order.

Edges run from each formula cell to every cell (or range member) it
references, resolved statically from the AST. Cycles are the strongly
connected components with more than one member plus self-loops; members
evaluate to ``#CYCLE!``. The topological order covers exactly the acyclic
nodes, with ties broken by (sheet index, row, column); sheets that do not
exist sort after all real sheets.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .model import CellRef, WorkbookModel
from .parser import RangeRef, Ref, collect_refs


@dataclass
class DepGraph:
    nodes: set[CellRef]
    deps_of: dict[CellRef, tuple[CellRef, ...]]  # formula cell -> referenced cells
    dependents_of: dict[CellRef, list[CellRef]]  # cell -> formula cells reading it
    topo_order: list[CellRef]
    topo_pos: dict[CellRef, int] = field(repr=False, default_factory=dict)
    cycles: list[frozenset[CellRef]] = field(default_factory=list)
    cycle_members: frozenset[CellRef] = frozenset()


def expand_range(rng: RangeRef, home_sheet: str) -> list[CellRef]:
    """Range members in row-major order (the dialect's scan order)."""
    sheet = rng.sheet or home_sheet
    return [
        CellRef(sheet, col, row)
        for row in range(rng.row1, rng.row2 + 1)
        for col in range(rng.col1, rng.col2 + 1)
    ]


def resolve_ref(ref: Ref, home_sheet: str) -> CellRef:
    return CellRef(ref.sheet or home_sheet, ref.col, ref.row)


def build_dependency_graph(model: WorkbookModel) -> DepGraph:
    nodes: set[CellRef] = set()
    deps_of: dict[CellRef, tuple[CellRef, ...]] = {}
    dependents_of: dict[CellRef, list[CellRef]] = {}

    for sheet in model.sheets:
        for (col, row), cell in sheet.cells.items():
            ref = CellRef(sheet.name, col, row)
            nodes.add(ref)
            if not cell.is_formula:
                continue
            seen: set[CellRef] = set()
            ordered: list[CellRef] = []
            for raw in collect_refs(cell.formula):
                members = (
                    expand_range(raw, sheet.name)
                    if isinstance(raw, RangeRef)
                    else [resolve_ref(raw, sheet.name)]
                )
                for member in members:
                    if member not in seen:
                        seen.add(member)
                        ordered.append(member)
            deps_of[ref] = tuple(ordered)
            for dep in ordered:
                nodes.add(dep)
                dependents_of.setdefault(dep, []).append(ref)

    for fld in model.input_schema:
        nodes.add(fld.cell)
    for fld in model.output_schema:
        nodes.add(fld.cell)

    cycles = _strongly_connected_cycles(nodes, deps_of)
    cycle_members = frozenset().union(*cycles) if cycles else frozenset()
    topo_order = _topo_sort(model, nodes, deps_of, dependents_of, cycle_members)
    topo_pos = {ref: i for i, ref in enumerate(topo_order)}
    cycles.sort(key=lambda scc: min(_sort_key(model, ref) for ref in scc))
    return DepGraph(nodes, deps_of, dependents_of, topo_order, topo_pos, cycles, cycle_members)


def _sort_key(model: WorkbookModel, ref: CellRef) -> tuple:
    idx = model.sheet_index.get(ref.sheet)
    if idx is None:
        idx = len(model.sheets)
    return (idx, ref.sheet, ref.row, ref.col)


def _strongly_connected_cycles(
    nodes: set[CellRef], deps_of: dict[CellRef, tuple[CellRef, ...]]
) -> list[frozenset[CellRef]]:
    """Tarjan (iterative); returns SCCs with >1 member plus self-loops."""
    index: dict[CellRef, int] = {}
    lowlink: dict[CellRef, int] = {}
    on_stack: set[CellRef] = set()
    stack: list[CellRef] = []
    counter = 0
    out: list[frozenset[CellRef]] = []

    for root in nodes:
        if root in index:
            continue
        work: list[tuple[CellRef, int]] = [(root, 0)]
        while work:
            node, edge_i = work[-1]
            if edge_i == 0:
                index[node] = lowlink[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            advanced = False
            children = deps_of.get(node, ())
            while edge_i < len(children):
                child = children[edge_i]
                edge_i += 1
                if child not in index:
                    work[-1] = (node, edge_i)
                    work.append((child, 0))
                    advanced = True
                    break
                if child in on_stack:
                    lowlink[node] = min(lowlink[node], index[child])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
            if lowlink[node] == index[node]:
                scc: list[CellRef] = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    scc.append(member)
                    if member == node:
                        break
                if len(scc) > 1 or node in deps_of.get(node, ()):
                    out.append(frozenset(scc))
    return out


def _topo_sort(
    model: WorkbookModel,
    nodes: set[CellRef],
    deps_of: dict[CellRef, tuple[CellRef, ...]],
    dependents_of: dict[CellRef, list[CellRef]],
    cycle_members: frozenset[CellRef],
) -> list[CellRef]:
    """Kahn's algorithm over the acyclic nodes, heap-ordered for
    deterministic ties. Edges out of cycle members count as satisfied
    (their value, #CYCLE!, is known up front)."""
    in_deg: dict[CellRef, int] = {}
    for node in nodes:
        if node in cycle_members:
            continue
        deg = sum(
            1 for dep in deps_of.get(node, ()) if dep not in cycle_members
        )
        in_deg[node] = deg
    heap = [
        (_sort_key(model, node), node) for node, deg in in_deg.items() if deg == 0
    ]
    heapq.heapify(heap)
    order: list[CellRef] = []
    while heap:
        _, node = heapq.heappop(heap)
        order.append(node)
        for dependent in dependents_of.get(node, ()):
            if dependent in cycle_members:
                continue
            in_deg[dependent] -= 1
            if in_deg[dependent] == 0:
                heapq.heappush(heap, (_sort_key(model, dependent), dependent))
    return order
