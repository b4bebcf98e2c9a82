"""In-memory linear / mixed-binary program representation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, NewType

import numpy as np
import scipy.sparse as sp

VarId = NewType("VarId", int)

LE, EQ, GE = "<=", "=", ">="
SENSES = (LE, EQ, GE)
FEAS_TOL = 1e-7
INT_TOL = 1e-6


@dataclass
class Variable:
    name: str
    lo: float
    hi: float
    binary: bool = False


@dataclass
class Constraint:
    vars: np.ndarray  # int indices
    coefs: np.ndarray
    sense: str
    rhs: float
    name: str


@dataclass
class LpArrays:
    A: sp.csr_matrix
    senses: np.ndarray  # object array of "<=", "=", ">="
    rhs: np.ndarray
    c: np.ndarray
    c0: float
    lo: np.ndarray
    hi: np.ndarray
    binary: np.ndarray  # bool mask


class MilpInstance:
    """Variables with bounds, sparse linear rows, a linear objective (minimized).

    Variable handles (``VarId``) are plain indices into this instance.
    """

    def __init__(self, name: str = "nnopf"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.obj_constant = 0.0
        self._names: set[str] = set()
        self._arrays: LpArrays | None = None

    # --- building -----------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def add_var(self, name: str | None = None, lo: float = 0.0, hi: float = math.inf,
                binary: bool = False) -> VarId:
        if name is None:
            name = f"v{len(self.variables)}"
        if name in self._names:
            raise ValueError(f"duplicate variable name {name!r}")
        if binary:
            lo, hi = max(0.0, lo), min(1.0, hi)
        if not lo <= hi:
            raise ValueError(f"variable {name}: lower bound {lo} exceeds upper bound {hi}")
        self._names.add(name)
        self.variables.append(Variable(name, float(lo), float(hi), bool(binary)))
        self._arrays = None
        return VarId(len(self.variables) - 1)

    def add_binary(self, name: str | None = None) -> VarId:
        return self.add_var(name, 0.0, 1.0, binary=True)

    def set_bounds(self, var: VarId, lo: float, hi: float) -> None:
        if not lo <= hi:
            raise ValueError(f"lower bound {lo} exceeds upper bound {hi}")
        v = self.variables[var]
        v.lo, v.hi = float(lo), float(hi)
        self._arrays = None

    def fix(self, var: VarId, value: float) -> None:
        self.set_bounds(var, value, value)

    def add_constraint(self, coeffs: Mapping[int, float] | Iterable[tuple[int, float]],
                       sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in SENSES:
            raise ValueError(f"sense must be one of {SENSES}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        merged: dict[int, float] = {}
        for v, a in items:
            v = int(v)
            if not 0 <= v < len(self.variables):
                raise IndexError(f"constraint references unknown variable {v}")
            merged[v] = merged.get(v, 0.0) + float(a)
        keys = sorted(k for k, a in merged.items() if a != 0.0)
        if name is None:
            name = f"c{len(self.constraints)}"
        self.constraints.append(
            Constraint(np.array(keys, dtype=int), np.array([merged[k] for k in keys]),
                       sense, float(rhs), name)
        )
        self._arrays = None
        return len(self.constraints) - 1

    def set_objective(self, coeffs: Mapping[int, float], constant: float = 0.0) -> None:
        self.objective = {int(k): float(v) for k, v in coeffs.items() if v != 0.0}
        self.obj_constant = float(constant)
        self._arrays = None

    def copy(self) -> "MilpInstance":
        other = MilpInstance(self.name)
        other.variables = [Variable(v.name, v.lo, v.hi, v.binary) for v in self.variables]
        other.constraints = [
            Constraint(c.vars.copy(), c.coefs.copy(), c.sense, c.rhs, c.name)
            for c in self.constraints
        ]
        other.objective = dict(self.objective)
        other.obj_constant = self.obj_constant
        other._names = set(self._names)
        return other

    # --- views --------------------------------------------------------

    def arrays(self) -> LpArrays:
        if self._arrays is None:
            n = len(self.variables)
            rows, cols, vals = [], [], []
            for i, con in enumerate(self.constraints):
                rows.append(np.full(len(con.vars), i))
                cols.append(con.vars)
                vals.append(con.coefs)
            m = len(self.constraints)
            if m:
                A = sp.csr_matrix(
                    (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                    shape=(m, n),
                )
            else:
                A = sp.csr_matrix((0, n))
            c = np.zeros(n)
            for k, v in self.objective.items():
                c[k] = v
            self._arrays = LpArrays(
                A=A,
                senses=np.array([con.sense for con in self.constraints], dtype=object),
                rhs=np.array([con.rhs for con in self.constraints], dtype=float),
                c=c,
                c0=self.obj_constant,
                lo=np.array([v.lo for v in self.variables], dtype=float),
                hi=np.array([v.hi for v in self.variables], dtype=float),
                binary=np.array([v.binary for v in self.variables], dtype=bool),
            )
        return self._arrays

    def binaries(self) -> list[VarId]:
        return [VarId(i) for i, v in enumerate(self.variables) if v.binary]

    def free_binaries(self) -> list[VarId]:
        return [VarId(i) for i, v in enumerate(self.variables) if v.binary and v.lo < v.hi]

    def var_index(self, name: str) -> VarId:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return VarId(i)
        raise KeyError(name)

    # --- checking -----------------------------------------------------

    def objective_value(self, x) -> float:
        arr = self.arrays()
        return float(arr.c @ np.asarray(x, dtype=float) + arr.c0)

    def violation(self, x) -> tuple[float, float]:
        """(worst row violation, worst bound violation) of a point."""
        arr = self.arrays()
        x = np.asarray(x, dtype=float)
        act = arr.A @ x if arr.A.shape[0] else np.zeros(0)
        row = 0.0
        if len(act):
            res = act - arr.rhs
            le = arr.senses == LE
            ge = arr.senses == GE
            eq = arr.senses == EQ
            viol = np.zeros_like(res)
            viol[le] = np.maximum(res[le], 0.0)
            viol[ge] = np.maximum(-res[ge], 0.0)
            viol[eq] = np.abs(res[eq])
            row = float(viol.max())
        bnd = float(max(np.max(arr.lo - x, initial=0.0), np.max(x - arr.hi, initial=0.0)))
        return row, bnd

    def integrality_violation(self, x) -> float:
        arr = self.arrays()
        xb = np.asarray(x, dtype=float)[arr.binary]
        if xb.size == 0:
            return 0.0
        return float(np.max(np.abs(xb - np.round(xb))))

    def is_feasible(self, x, tol: float = FEAS_TOL, int_tol: float | None = INT_TOL) -> bool:
        row, bnd = self.violation(x)
        if row > tol or bnd > tol:
            return False
        return int_tol is None or self.integrality_violation(x) <= int_tol

    def summary(self) -> dict:
        return {
            "variables": self.n_vars,
            "constraints": self.n_constraints,
            "binaries": len(self.binaries()),
            "free_binaries": len(self.free_binaries()),
        }
