"""Exact mixed-integer encoding of a one-hidden-layer ReLU surrogate.

Each hidden neuron j gets a pre-activation ``z``, an output ``h`` and an
on/off binary ``delta`` tied together by the standard big-M disjunction::

    h >= z,  h >= 0,  h <= z + M-(1 - delta),  h <= M+ delta,
    z >= -M-(1 - delta),  z <= M+ delta

Input normalization is folded into the coefficients of the ``z`` equality
and output denormalization into the coefficients of the ``V`` equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidBounds, UnboundedInput
from .milp.model import EQ, GE, LE, MilpInstance, VarId
from .scenarios import NormStats
from .surrogate import MlpParams

TIGHTENED = "tightened"
FIXED_1000 = "fixed_1000"
POLICIES = (TIGHTENED, FIXED_1000)
FIXED_M = 1000.0


@dataclass
class NeuronBounds:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.lo.shape != self.hi.shape:
            raise InvalidBounds("lo and hi must have the same shape")
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise InvalidBounds("neuron bounds must be finite")
        if np.any(self.lo > self.hi):
            raise InvalidBounds("neuron lower bound exceeds upper bound")

    @property
    def inactive(self) -> np.ndarray:
        return self.hi <= 0.0

    @property
    def active(self) -> np.ndarray:
        return (self.lo >= 0.0) & ~self.inactive

    @property
    def free(self) -> np.ndarray:
        return ~(self.inactive | self.active)


@dataclass
class EncodedBlock:
    z_vars: list[VarId]
    h_vars: list[VarId]
    delta_vars: list[VarId]
    v_vars: list[VarId]
    bounds: NeuronBounds
    policy: str
    n_rows: int = 0
    free: list[int] = field(default_factory=list)

    @property
    def free_deltas(self) -> list[VarId]:
        return [self.delta_vars[j] for j in self.free]


@dataclass
class BigMReport:
    valid: bool
    m: float
    max_abs_bound: float
    violations: list[tuple[int, float, float]]  # (neuron, lo, hi)


def _check_box(input_lo, input_hi, n_in: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.asarray(input_lo, dtype=float)
    hi = np.asarray(input_hi, dtype=float)
    if lo.shape != (n_in,) or hi.shape != (n_in,):
        raise InvalidBounds(f"input bounds must have shape ({n_in},)")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise UnboundedInput("every input bound must be finite")
    if np.any(lo > hi):
        raise InvalidBounds("input lower bound exceeds upper bound")
    return lo, hi


def compute_activation_bounds(params: MlpParams, stats: NormStats, input_lo, input_hi) -> NeuronBounds:
    """Interval bounds on every pre-activation over a raw input box."""
    lo, hi = _check_box(input_lo, input_hi, params.n_in)
    nlo = stats.normalize_x(lo)
    nhi = stats.normalize_x(hi)
    a = params.w1 * nlo
    b = params.w1 * nhi
    return NeuronBounds(
        params.b1 + np.minimum(a, b).sum(axis=1),
        params.b1 + np.maximum(a, b).sum(axis=1),
    )


def output_bounds(params: MlpParams, stats: NormStats, bounds: NeuronBounds) -> tuple[np.ndarray, np.ndarray]:
    """Interval bounds on the denormalized outputs given neuron bounds."""
    hlo = np.maximum(bounds.lo, 0.0)
    hhi = np.maximum(bounds.hi, 0.0)
    a = params.w2 * hlo
    b = params.w2 * hhi
    ylo = params.b2 + np.minimum(a, b).sum(axis=1)
    yhi = params.b2 + np.maximum(a, b).sum(axis=1)
    return stats.denormalize_y(ylo), stats.denormalize_y(yhi)


def big_m_values(bounds: NeuronBounds, policy: str) -> tuple[np.ndarray, np.ndarray]:
    """(M+, M-) per neuron."""
    if policy == TIGHTENED:
        return bounds.hi.copy(), -bounds.lo.copy()
    if policy == FIXED_1000:
        m = np.full(bounds.lo.shape, FIXED_M)
        return m, m.copy()
    raise ValueError(f"big-M policy must be one of {POLICIES}")


def encode_time_step(
    instance: MilpInstance,
    params: MlpParams,
    stats: NormStats,
    x_vars: Sequence[VarId],
    bounds: NeuronBounds,
    big_m_policy: str = TIGHTENED,
    tag: str = "0",
) -> EncodedBlock:
    """Add the surrogate's constraints for one set of input variables.

    Neurons whose bounds prove them inactive (hi <= 0) or active (lo >= 0)
    get their binary fixed and skip the big-M rows.
    """
    if len(x_vars) != params.n_in:
        raise InvalidBounds(f"expected {params.n_in} input variables, got {len(x_vars)}")
    if bounds.lo.shape != (params.hidden,):
        raise InvalidBounds("neuron bounds do not match the hidden width")
    m_plus, m_minus = big_m_values(bounds, big_m_policy)
    rows0 = instance.n_constraints

    scale = params.w1 / stats.sigma_x  # (H, 2N)
    offset = params.b1 - scale @ stats.mu_x
    z_vars, h_vars, d_vars, free = [], [], [], []
    for j in range(params.hidden):
        lo_j, hi_j = float(bounds.lo[j]), float(bounds.hi[j])
        if big_m_policy == FIXED_1000:
            zlo, zhi = min(lo_j, -FIXED_M), max(hi_j, FIXED_M)
        else:
            zlo, zhi = lo_j, hi_j
        z = instance.add_var(f"z[{tag},{j}]", zlo, zhi)
        h = instance.add_var(f"h[{tag},{j}]", 0.0, max(zhi, 0.0))
        d = instance.add_var(f"d[{tag},{j}]", 0.0, 1.0, binary=True)
        row = [(z, 1.0)] + [(x, -float(scale[j, i])) for i, x in enumerate(x_vars)]
        instance.add_constraint(row, EQ, float(offset[j]), f"zdef[{tag},{j}]")
        if hi_j <= 0.0:
            instance.fix(d, 0.0)
            instance.fix(h, 0.0)
        elif lo_j >= 0.0:
            instance.fix(d, 1.0)
            instance.add_constraint([(h, 1.0), (z, -1.0)], EQ, 0.0, f"hact[{tag},{j}]")
        else:
            mp, mm = float(m_plus[j]), float(m_minus[j])
            instance.add_constraint([(h, 1.0), (z, -1.0)], GE, 0.0, f"hz[{tag},{j}]")
            instance.add_constraint([(h, 1.0)], GE, 0.0, f"hpos[{tag},{j}]")
            instance.add_constraint([(h, 1.0), (z, -1.0), (d, mm)], LE, mm, f"hoff[{tag},{j}]")
            instance.add_constraint([(h, 1.0), (d, -mp)], LE, 0.0, f"hon[{tag},{j}]")
            instance.add_constraint([(z, 1.0), (d, -mm)], GE, -mm, f"zlo[{tag},{j}]")
            instance.add_constraint([(z, 1.0), (d, -mp)], LE, 0.0, f"zhi[{tag},{j}]")
            free.append(j)
        z_vars.append(z)
        h_vars.append(h)
        d_vars.append(d)

    vlo, vhi = output_bounds(params, stats, bounds)
    v_vars = []
    for k in range(params.n_out):
        sig = float(stats.sigma_y[k])
        v = instance.add_var(f"V[{tag},{k}]", float(vlo[k]), float(vhi[k]))
        row = [(v, 1.0)] + [(h_vars[j], -sig * float(params.w2[k, j])) for j in range(params.hidden)]
        instance.add_constraint(row, EQ, sig * float(params.b2[k]) + float(stats.mu_y[k]), f"vdef[{tag},{k}]")
        v_vars.append(v)

    return EncodedBlock(z_vars, h_vars, d_vars, v_vars, bounds, big_m_policy,
                        instance.n_constraints - rows0, free)


def assert_valid_big_m(params: MlpParams, stats: NormStats, bounds: NeuronBounds, m: float = FIXED_M) -> BigMReport:
    """Check that a single constant M covers every pre-activation bound."""
    mag = np.maximum(np.abs(bounds.lo), np.abs(bounds.hi))
    bad = np.flatnonzero(mag > m)
    return BigMReport(
        valid=bad.size == 0,
        m=float(m),
        max_abs_bound=float(mag.max(initial=0.0)),
        violations=[(int(j), float(bounds.lo[j]), float(bounds.hi[j])) for j in bad],
    )
