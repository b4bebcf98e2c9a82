"""Bounded-variable revised simplex.

The program is held in computational form ``[A | I] (x, s) = b`` where each
row gets a logical variable ``s`` whose bounds encode the row sense. The basis
is kept as a sparse LU factorization plus a product-form eta file that is
refactorized every ``REFACTOR_EVERY`` pivots.

Cold solves run a phase-1 primal simplex on artificial columns starting from
the slack basis, then phase 2. Warm solves start from a stored basis and run
the dual simplex, which is what branch and bound needs after tightening a
variable bound. Dantzig pricing with a Harris ratio test is used by default;
after ``STALL_LIMIT`` consecutive non-improving pivots the primal switches to
Bland's rule until the objective moves again.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..errors import NumericalInstability
from .model import GE, LE, MilpInstance

BASIC, AT_LO, AT_HI, FREE = -1, 0, 1, 2

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-7
SINGULAR_TOL = 1e-11
PHASE1_TOL = 1e-8
WARM_DUAL_TOL = 1e-7
REFACTOR_EVERY = 64
STALL_LIMIT = 50

OPTIMAL, INFEASIBLE, UNBOUNDED, ITER_LIMIT = "optimal", "infeasible", "unbounded", "iteration_limit"


@dataclass
class LpSolution:
    status: str
    values: np.ndarray | None
    objective: float
    iterations: int = 0


@dataclass
class Basis:
    """Warm-start information: basic column per row plus nonbasic positions."""

    basis: np.ndarray
    status: np.ndarray


class _Simplex:
    """Mutable simplex state over a fixed column matrix."""

    def __init__(self, cols: sp.csc_matrix, colsT: sp.csr_matrix, b, lo, hi, x, status, basis):
        self.cols = cols
        self.colsT = colsT
        self.m = cols.shape[0]
        self.b = b
        self.lo = lo
        self.hi = hi
        self.x = x
        self.status = status
        self.basis = basis
        self.iterations = 0
        self._indptr = cols.indptr
        self._indices = cols.indices
        self._data = cols.data
        self.refactor()

    # --- linear algebra ------------------------------------------------

    def column(self, j: int) -> np.ndarray:
        v = np.zeros(self.m)
        s, e = self._indptr[j], self._indptr[j + 1]
        v[self._indices[s:e]] = self._data[s:e]
        return v

    def refactor(self) -> None:
        B = self.cols[:, self.basis].tocsc()
        try:
            self.lu = splu(B, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise NumericalInstability(f"basis factorization failed: {exc}") from exc
        piv = np.abs(self.lu.U.diagonal())
        if piv.size and piv.min() <= SINGULAR_TOL * max(piv.max(), 1.0):
            raise NumericalInstability("basis is numerically singular")
        self.etas: list[tuple[int, np.ndarray]] = []
        self.recompute_basics()

    def recompute_basics(self) -> None:
        xn = self.x.copy()
        xn[self.basis] = 0.0
        xb = self.ftran(self.b - self.cols @ xn)
        if not np.all(np.isfinite(xb)):
            raise NumericalInstability("non-finite basic solution")
        self.x[self.basis] = xb

    def ftran(self, a: np.ndarray) -> np.ndarray:
        w = self.lu.solve(a)
        for r, d in self.etas:
            wr = w[r] / d[r]
            if wr != 0.0:
                w -= wr * d
            w[r] = wr
        return w

    def btran(self, c: np.ndarray) -> np.ndarray:
        w = np.array(c, dtype=float)
        for r, d in reversed(self.etas):
            w[r] = (w[r] - (d @ w - d[r] * w[r])) / d[r]
        return self.lu.solve(w, trans="T")

    def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        y = self.btran(cost[self.basis])
        return cost - self.colsT @ y

    def _pivot(self, r: int, q: int, alpha: np.ndarray, leave_status: int, leave_value: float):
        p = self.basis[r]
        self.x[p] = leave_value
        self.status[p] = leave_status
        self.basis[r] = q
        self.status[q] = BASIC
        self.etas.append((r, alpha))
        if len(self.etas) >= REFACTOR_EVERY:
            self.refactor()

    # --- primal --------------------------------------------------------

    def primal(self, cost: np.ndarray, max_iter: int) -> str:
        stall = 0
        bland = False
        movable = self.hi > self.lo
        for _ in range(max_iter):
            d = self.reduced_costs(cost)
            st = self.status
            up = ((st == AT_LO) | (st == FREE)) & movable & (d < -DUAL_TOL)
            dn = ((st == AT_HI) | (st == FREE)) & movable & (d > DUAL_TOL)
            cand = np.flatnonzero(up | dn)
            if cand.size == 0:
                return OPTIMAL
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if d[q] < 0 else -1.0
            alpha = self.ftran(self.column(q))
            g = -direction * alpha

            xb = self.x[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            dec = g < -PIVOT_TOL
            inc = g > PIVOT_TOL
            ratio = np.full(self.m, np.inf)
            with np.errstate(invalid="ignore"):
                ratio[dec] = (xb[dec] - lob[dec]) / -g[dec]
                ratio[inc] = (hib[inc] - xb[inc]) / g[inc]
            ratio = np.maximum(ratio, 0.0)
            flip = self.hi[q] - self.lo[q]

            if bland:
                tmin = ratio.min() if self.m else np.inf
                if not np.isfinite(tmin) and not np.isfinite(flip):
                    return UNBOUNDED
                if flip <= tmin:
                    r = -1
                    theta = flip
                else:
                    ties = np.flatnonzero(ratio <= tmin + 1e-12)
                    r = int(ties[np.argmin(self.basis[ties])])
                    theta = ratio[r]
            else:
                relaxed = np.full(self.m, np.inf)
                with np.errstate(invalid="ignore"):
                    relaxed[dec] = (xb[dec] - lob[dec] + PRIMAL_TOL) / -g[dec]
                    relaxed[inc] = (hib[inc] - xb[inc] + PRIMAL_TOL) / g[inc]
                tmax = relaxed.min() if self.m else np.inf
                if not np.isfinite(tmax) and not np.isfinite(flip):
                    return UNBOUNDED
                if flip <= tmax:
                    r = -1
                    theta = flip
                else:
                    ok = np.flatnonzero(ratio <= tmax)
                    r = int(ok[np.argmax(np.abs(g[ok]))])
                    theta = ratio[r]

            self.iterations += 1
            self.x[q] += direction * theta
            self.x[self.basis] = xb + g * theta
            if r < 0:
                self.status[q] = AT_HI if direction > 0 else AT_LO
                self.x[q] = self.hi[q] if direction > 0 else self.lo[q]
            else:
                to_lo = g[r] < 0
                self._pivot(r, q, alpha, AT_LO if to_lo else AT_HI, lob[r] if to_lo else hib[r])

            if theta * abs(d[q]) <= 1e-12:
                stall += 1
                if stall > STALL_LIMIT:
                    bland = True
            else:
                stall = 0
                bland = False
        return ITER_LIMIT

    # --- dual ----------------------------------------------------------

    def make_dual_feasible(self, cost: np.ndarray) -> bool:
        """Repair nonbasic positions after bound changes; False if not dual feasible.

        Boxed nonbasics only move to the opposite bound when their reduced
        cost clearly prefers it, so a parent's optimal basis is left intact.
        """
        d = self.reduced_costs(cost)
        lo, hi, st = self.lo, self.hi, self.status
        nb = st != BASIC
        flo = np.isfinite(lo)
        fhi = np.isfinite(hi)
        boxed = nb & flo & fhi
        st[boxed & (st == FREE)] = AT_LO
        st[boxed & (st == AT_LO) & (d < -WARM_DUAL_TOL)] = AT_HI
        st[boxed & (st == AT_HI) & (d > WARM_DUAL_TOL)] = AT_LO
        st[nb & (lo == hi)] = AT_LO
        st[nb & (st != FREE) & ~flo & fhi] = AT_HI
        st[nb & (st != FREE) & ~fhi & flo] = AT_LO
        st[nb & ~flo & ~fhi] = FREE
        bad = (
            (nb & (st == AT_LO) & ~fhi & (d < -WARM_DUAL_TOL))
            | (nb & (st == AT_HI) & ~flo & (d > WARM_DUAL_TOL))
            | (nb & (st == FREE) & (np.abs(d) > WARM_DUAL_TOL))
        )
        self.x[st == AT_LO] = lo[st == AT_LO]
        self.x[st == AT_HI] = hi[st == AT_HI]
        self.x[st == FREE] = 0.0
        self.recompute_basics()
        return not bad.any()

    def dual(self, cost: np.ndarray, max_iter: int) -> str:
        movable = self.hi > self.lo
        stall = 0
        bland = False
        e = np.zeros(self.m)
        for _ in range(max_iter):
            xb = self.x[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            below = lob - xb
            above = xb - hib
            viol = np.maximum(below, above)
            bad = np.flatnonzero(viol > PRIMAL_TOL)
            if bad.size == 0:
                return OPTIMAL
            if bland:
                r = int(bad[np.argmin(self.basis[bad])])
            else:
                r = int(bad[np.argmax(viol[bad])])
            go_up = below[r] > above[r]
            target = lob[r] if go_up else hib[r]
            s = 1.0 if go_up else -1.0

            e[:] = 0.0
            e[r] = 1.0
            arow = self.colsT @ self.btran(e)
            d = self.reduced_costs(cost)
            st = self.status
            sa = s * arow
            elig = (
                ((st == AT_LO) & movable & (sa < -PIVOT_TOL))
                | ((st == AT_HI) & movable & (sa > PIVOT_TOL))
                | ((st == FREE) & (np.abs(arow) > PIVOT_TOL))
            )
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return INFEASIBLE
            dd = np.abs(d[cand])
            dd[(st[cand] == AT_LO) & (d[cand] < 0)] = 0.0
            dd[(st[cand] == AT_HI) & (d[cand] > 0)] = 0.0
            aa = np.abs(arow[cand])
            ratios = dd / aa
            if bland:
                tmin = ratios.min()
                q = int(cand[np.flatnonzero(ratios <= tmin + 1e-12)[0]])
            else:
                tmax = ((dd + DUAL_TOL) / aa).min()
                ok = np.flatnonzero(ratios <= tmax)
                q = int(cand[ok[np.argmax(aa[ok])]])

            alpha = self.ftran(self.column(q))
            aq = alpha[r]
            if abs(aq) <= PIVOT_TOL or abs(aq - arow[q]) > 1e-7 * (1.0 + abs(aq)):
                if self.etas:
                    self.refactor()
                    continue
                raise NumericalInstability("unstable dual simplex pivot")
            delta = (xb[r] - target) / aq
            self.iterations += 1
            self.x[q] += delta
            self.x[self.basis] = xb - delta * alpha
            step = ratios[np.searchsorted(cand, q)] * viol[r]
            self._pivot(r, q, alpha, AT_LO if go_up else AT_HI, target)

            if step <= 1e-12:
                stall += 1
                if stall > STALL_LIMIT:
                    bland = True
            else:
                stall = 0
                bland = False
        return ITER_LIMIT


class LpEngine:
    """Reusable LP solver for one constraint matrix with varying variable bounds."""

    def __init__(self, A, senses, rhs, c, c0: float = 0.0):
        A = sp.csc_matrix(A, dtype=float)
        self.m, self.n = A.shape
        self.A = A
        self.b = np.asarray(rhs, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.c0 = float(c0)
        senses = np.asarray(senses, dtype=object)
        self.slack_lo = np.where(senses == GE, -np.inf, 0.0)
        self.slack_hi = np.where(senses == LE, np.inf, 0.0)
        self.cols = sp.hstack([A, sp.identity(self.m, format="csc")], format="csc")
        self.colsT = self.cols.T.tocsr()
        self.cost = np.concatenate([self.c, np.zeros(self.m)])
        self.max_iter = 50_000 + 20 * (self.m + self.n)
        self.iterations = 0

    @classmethod
    def from_instance(cls, instance: MilpInstance) -> "LpEngine":
        arr = instance.arrays()
        return cls(arr.A, arr.senses, arr.rhs, arr.c, arr.c0)

    def _bounds(self, lo, hi):
        return (
            np.concatenate([np.asarray(lo, dtype=float), self.slack_lo]),
            np.concatenate([np.asarray(hi, dtype=float), self.slack_hi]),
        )

    def _result(self, sim: _Simplex, c=None) -> LpSolution:
        c = self.c if c is None else c
        x = sim.x[: self.n].copy()
        x = np.clip(x, sim.lo[: self.n], sim.hi[: self.n])
        return LpSolution(OPTIMAL, x, float(c @ x + self.c0), sim.iterations)

    def solve(self, lo, hi, warm: Basis | None = None) -> tuple[LpSolution, Basis | None]:
        """Solve with the given structural bounds; returns the final basis for reuse."""
        lo_f, hi_f = self._bounds(lo, hi)
        if np.any(lo_f > hi_f + PRIMAL_TOL):
            return LpSolution(INFEASIBLE, None, np.inf), None
        hi_f = np.maximum(hi_f, lo_f)
        if warm is not None:
            out = self._solve_warm(lo_f, hi_f, warm)
            if out is not None:
                return out
        return self._solve_cold(lo_f, hi_f)

    def reoptimize(self, c, lo, hi, warm: Basis | None = None) -> tuple[LpSolution, Basis | None]:
        """Minimize ``c @ x + c0`` over the same rows, starting from a primal feasible basis when given.

        Used for bound tightening, where many objectives share one feasible set.
        """
        c = np.asarray(c, dtype=float)
        lo_f, hi_f = self._bounds(lo, hi)
        if np.any(lo_f > hi_f + PRIMAL_TOL):
            return LpSolution(INFEASIBLE, None, np.inf), None
        hi_f = np.maximum(hi_f, lo_f)
        cost = np.concatenate([c, np.zeros(self.m)])
        if warm is not None:
            st = warm.status.copy()
            x = np.where(st == AT_HI, hi_f, np.where(st == AT_LO, lo_f, 0.0))
            x = np.where(np.isfinite(x), x, 0.0)
            try:
                sim = _Simplex(self.cols, self.colsT, self.b, lo_f, hi_f, x, st, warm.basis.copy())
                xb = sim.x[sim.basis]
                if np.all(xb >= lo_f[sim.basis] - 1e-7) and np.all(xb <= hi_f[sim.basis] + 1e-7):
                    return self._finish(sim, cost, c)
            except NumericalInstability:
                pass
        return self._solve_cold(lo_f, hi_f, cost, c)

    def _finish(self, sim: _Simplex, cost=None, c=None) -> tuple[LpSolution, Basis | None]:
        cost = self.cost if cost is None else cost
        status = sim.primal(cost, self.max_iter)
        self.iterations += sim.iterations
        if status == UNBOUNDED:
            return LpSolution(UNBOUNDED, None, -np.inf, sim.iterations), None
        if status != OPTIMAL:
            raise NumericalInstability(f"simplex stopped with status {status}")
        sim.recompute_basics()
        return self._result(sim, c), Basis(sim.basis.copy(), sim.status.copy())

    def _solve_warm(self, lo, hi, warm: Basis):
        N = self.n + self.m
        try:
            sim = _Simplex(self.cols, self.colsT, self.b, lo, hi, np.zeros(N),
                           warm.status.copy(), warm.basis.copy())
            if not sim.make_dual_feasible(self.cost):
                return None
            status = sim.dual(self.cost, self.max_iter)
        except NumericalInstability:
            return None
        if status == INFEASIBLE:
            self.iterations += sim.iterations
            return LpSolution(INFEASIBLE, None, np.inf, sim.iterations), None
        if status != OPTIMAL:
            return None
        try:
            return self._finish(sim)
        except NumericalInstability:
            return None

    def _solve_cold(self, lo, hi, cost=None, c=None) -> tuple[LpSolution, Basis | None]:
        n, m = self.n, self.m
        N = n + m
        x = np.zeros(N)
        status = np.full(N, AT_LO, dtype=int)
        flo = np.isfinite(lo[:n])
        fhi = np.isfinite(hi[:n])
        x[:n] = np.where(flo, lo[:n], np.where(fhi, hi[:n], 0.0))
        status[:n] = np.where(flo, AT_LO, np.where(fhi, AT_HI, FREE))

        res = self.b - self.A @ x[:n]
        slo, shi = lo[n:], hi[n:]
        ok = (res >= slo - PRIMAL_TOL) & (res <= shi + PRIMAL_TOL)
        art_rows = np.flatnonzero(~ok)
        basis = n + np.arange(m)
        x[n:] = res
        status[n:] = BASIC

        if art_rows.size == 0:
            sim = _Simplex(self.cols, self.colsT, self.b, lo, hi, x, status, basis)
            return self._finish(sim, cost, c)

        sbar = np.where(res[art_rows] < slo[art_rows], slo[art_rows], shi[art_rows])
        sign = np.sign(res[art_rows] - sbar)
        x[n + art_rows] = sbar
        status[n + art_rows] = np.where(sbar == slo[art_rows], AT_LO, AT_HI)
        k = art_rows.size
        art = sp.csc_matrix((sign, (art_rows, np.arange(k))), shape=(m, k))
        cols1 = sp.hstack([self.cols, art], format="csc")
        lo1 = np.concatenate([lo, np.zeros(k)])
        hi1 = np.concatenate([hi, np.full(k, np.inf)])
        x1 = np.concatenate([x, np.abs(res[art_rows] - sbar)])
        st1 = np.concatenate([status, np.full(k, BASIC)])
        basis[art_rows] = N + np.arange(k)
        cost1 = np.concatenate([np.zeros(N), np.ones(k)])

        sim = _Simplex(cols1, cols1.T.tocsr(), self.b, lo1, hi1, x1, st1, basis)
        st = sim.primal(cost1, self.max_iter)
        if st != OPTIMAL:
            raise NumericalInstability(f"phase 1 stopped with status {st}")
        infeas = float(sim.x[N:].sum())
        if infeas > PHASE1_TOL * (1.0 + np.abs(self.b).max(initial=0.0)):
            self.iterations += sim.iterations
            return LpSolution(INFEASIBLE, None, np.inf, sim.iterations), None

        # Artificial columns are +-e_i, so each basic one can be swapped for
        # its row's logical column without touching the rest of the basis.
        basis2 = sim.basis.copy()
        st2 = sim.status[:N].copy()
        for pos in np.flatnonzero(basis2 >= N):
            row = art_rows[basis2[pos] - N]
            basis2[pos] = n + row
            st2[n + row] = BASIC
        sim2 = _Simplex(self.cols, self.colsT, self.b, lo, hi, sim.x[:N].copy(), st2, basis2)
        sim2.iterations = sim.iterations
        return self._finish(sim2, cost, c)


def solve_lp(instance: MilpInstance) -> LpSolution:
    """Solve the continuous relaxation of ``instance`` (binaries relaxed to [0, 1])."""
    arr = instance.arrays()
    engine = LpEngine.from_instance(instance)
    sol, _ = engine.solve(arr.lo, arr.hi)
    return sol
