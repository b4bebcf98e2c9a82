"""Exhaustive activation-pattern enumeration: the exact optimum of a tiny MILP."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import Infeasible, TooManyBinaries
from .model import MilpInstance
from .simplex import OPTIMAL, LpEngine

MAX_BINARIES = 20


@dataclass
class OracleResult:
    objective: float
    values: np.ndarray
    pattern: tuple[int, ...]  # value per enumerated binary, in enumeration order
    binaries: tuple[int, ...]
    feasible_patterns: int
    patterns: int


def enumerate_patterns(instance: MilpInstance, binary_groups: Sequence[Sequence[int]] | None = None) -> OracleResult:
    """Fix every free binary to each of its 2^B assignments and keep the best LP.

    ``binary_groups`` only sets the enumeration order (e.g. one group per time
    step); binaries not listed are appended in index order. Every pattern is
    solved cold so the result does not depend on basis reuse.
    """
    arr = instance.arrays()
    free = [int(v) for v in instance.free_binaries()]
    order: list[int] = []
    for group in binary_groups or ():
        order.extend(int(v) for v in group if int(v) in free and int(v) not in order)
    order.extend(v for v in free if v not in order)
    if len(order) > MAX_BINARIES:
        raise TooManyBinaries(f"{len(order)} free binaries exceed the cap of {MAX_BINARIES}")

    engine = LpEngine.from_instance(instance)
    best = None
    feasible = 0
    total = 0
    for pattern in itertools.product((0, 1), repeat=len(order)):
        lo, hi = arr.lo.copy(), arr.hi.copy()
        lo[order] = pattern
        hi[order] = pattern
        sol, _ = engine.solve(lo, hi)
        total += 1
        if sol.status != OPTIMAL:
            continue
        feasible += 1
        if best is None or sol.objective < best[0]:
            best = (sol.objective, sol.values, pattern)
    if best is None:
        raise Infeasible("no activation pattern admits a feasible point")
    return OracleResult(best[0], best[1], tuple(best[2]), tuple(order), feasible, total)
