"""Best-first branch and bound over binary variables with a gap certificate."""

from __future__ import annotations

import heapq
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..errors import Infeasible, LimitReached
from .model import FEAS_TOL, INT_TOL, MilpInstance
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, Basis, LpEngine

DIVE_EVERY = 50

# heuristic(lp_values, lo, hi) -> candidate point or None; candidates are verified.
Heuristic = Callable[[np.ndarray, np.ndarray, np.ndarray], "np.ndarray | None"]
# branch_hint(lp_values, var) -> value (0 or 1) of the child to explore first.
BranchHint = Callable[[np.ndarray, int], float]


@dataclass
class MilpSolution:
    status: str  # optimal | node_limit | time_limit
    values: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    lp_iterations: int = 0
    seconds: float = 0.0
    log: list = field(default_factory=list)

    def save_log(self, path) -> None:
        Path(path).write_text(json.dumps(self.log, indent=1))


def relative_gap(incumbent: float, bound: float) -> float:
    if not np.isfinite(incumbent):
        return float("inf")
    return max(0.0, (incumbent - bound) / max(abs(incumbent), 1.0))


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    depth: int = field(compare=False)
    fixes: tuple = field(compare=False)  # ((var, value), ...)
    basis: Basis | None = field(compare=False, default=None)


def _verify(instance: MilpInstance, x) -> bool:
    return x is not None and instance.is_feasible(x, tol=FEAS_TOL, int_tol=INT_TOL)


def solve_milp(
    instance: MilpInstance,
    gap_tol: float = 0.01,
    node_limit: int | None = None,
    time_limit: float | None = None,
    heuristic: Heuristic | None = None,
    raise_on_limit: bool = True,
    branch_hint: BranchHint | None = None,
) -> MilpSolution:
    """Minimize ``instance`` to relative gap ``gap_tol``.

    Nodes are taken best-first on their parent's bound. Until an incumbent
    exists, and then every ``DIVE_EVERY`` nodes, the search dives depth-first
    (backtracking through the dive's own siblings while no incumbent is
    known). Dives follow ``branch_hint`` or, without one, the rounded value.

    Raises Infeasible when the tree is exhausted without an integral point and
    LimitReached (carrying the partial solution) when a node or time limit
    stops the search early, unless ``raise_on_limit`` is false.
    """
    t0 = time.perf_counter()
    arr = instance.arrays()
    engine = LpEngine.from_instance(instance)
    root_lo, root_hi = arr.lo.copy(), arr.hi.copy()
    bin_idx = np.flatnonzero(arr.binary)

    log: list[dict] = []
    inc_x: np.ndarray | None = None
    inc_obj = float("inf")
    best_bound = -float("inf")
    nodes = 0
    seq = 0

    def emit(event: str, **kw):
        log.append({"event": event, "node": nodes, "time": time.perf_counter() - t0,
                    "bound": best_bound, "incumbent": inc_obj, **kw})

    def prune_level() -> float:
        if not np.isfinite(inc_obj):
            return float("inf")
        return inc_obj - max(gap_tol * max(abs(inc_obj), 1.0), 1e-9)

    def offer(x: np.ndarray, source: str) -> None:
        nonlocal inc_x, inc_obj
        if not _verify(instance, x):
            return
        obj = instance.objective_value(x)
        if obj < inc_obj - 1e-12:
            inc_x, inc_obj = x.copy(), obj
            emit("incumbent", source=source, objective=obj)

    heap: list[_Node] = [_Node(-float("inf"), 0, 0, ())]
    dive: _Node | None = None
    stack: list[_Node] = []  # siblings left behind by the current dive
    since_dive = 0
    status = OPTIMAL
    # Nodes pruned within the gap tolerance still bound the optimum from below.
    pruned_floor = float("inf")

    while heap or stack or dive is not None:
        open_bounds = [n.bound for n in heap] + [n.bound for n in stack]
        if dive is not None:
            open_bounds.append(dive.bound)
        new_bound = min(open_bounds + [pruned_floor, inc_obj])
        if new_bound > best_bound:
            best_bound = new_bound
            emit("bound")
        if np.isfinite(inc_obj) and relative_gap(inc_obj, best_bound) <= gap_tol:
            break
        if node_limit is not None and nodes >= node_limit:
            status = "node_limit"
            break
        if time_limit is not None and time.perf_counter() - t0 >= time_limit:
            status = "time_limit"
            break

        if dive is not None:
            node, dive = dive, None
            in_dive = True
        elif stack and inc_x is None:
            node = stack.pop()
            in_dive = True
        else:
            for n in stack:
                heapq.heappush(heap, n)
            stack.clear()
            node = heapq.heappop(heap)
            in_dive = inc_x is None or since_dive >= DIVE_EVERY
            if in_dive:
                since_dive = 0
        if node.bound >= prune_level():
            pruned_floor = min(pruned_floor, node.bound)
            continue

        lo, hi = root_lo.copy(), root_hi.copy()
        for v, val in node.fixes:
            lo[v] = hi[v] = val
        sol, basis = engine.solve(lo, hi, node.basis)
        nodes += 1
        since_dive += 1
        if sol.status == INFEASIBLE:
            continue
        if sol.status == UNBOUNDED:
            raise Infeasible("relaxation is unbounded; every variable needs finite bounds")
        if sol.objective >= prune_level():
            pruned_floor = min(pruned_floor, sol.objective)
            continue
        x = sol.values

        if nodes == 1 and heuristic is not None:
            cand = heuristic(x, lo, hi)
            if cand is not None:
                offer(np.asarray(cand, dtype=float), "heuristic")
                if sol.objective >= prune_level():
                    pruned_floor = min(pruned_floor, sol.objective)
                    continue

        xb = x[bin_idx]
        frac = np.abs(xb - np.round(xb))
        if bin_idx.size == 0 or frac.max() <= INT_TOL:
            offer(x, "lp")
            continue

        k = int(np.argmax(frac))  # first maximum, i.e. lowest index on ties
        var = int(bin_idx[k])
        up_first = (branch_hint(x, var) if branch_hint is not None else xb[k]) >= 0.5
        children = []
        for val in ((1.0, 0.0) if up_first else (0.0, 1.0)):
            seq += 1
            children.append(_Node(sol.objective, seq, node.depth + 1, node.fixes + ((var, val),), basis))
        if in_dive:
            dive = children[0]
            stack.append(children[1])
        else:
            for ch in children:
                heapq.heappush(heap, ch)

    if not heap and not stack and dive is None and status == OPTIMAL and np.isfinite(inc_obj):
        best_bound = max(best_bound, min(pruned_floor, inc_obj))
    seconds = time.perf_counter() - t0
    if inc_x is None and status == OPTIMAL:
        emit("infeasible")
        raise Infeasible(f"no integral feasible point ({nodes} nodes explored)")
    gap = relative_gap(inc_obj, best_bound)
    emit("done", status=status, gap=gap)
    result = MilpSolution(status, inc_x, inc_obj, best_bound, gap, nodes,
                          engine.iterations, seconds, log)
    if status != OPTIMAL and raise_on_limit:
        raise LimitReached(result)
    return result
