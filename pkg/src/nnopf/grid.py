"""Radial feeder data model and backward/forward sweep power flow.

All electrical quantities are per unit on ``Network.s_base`` / ``Network.v_base``.
Injections follow the consumption-positive convention: a positive ``p_inj``
draws power from the feeder, a negative value (PV export) feeds it.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CycleDetected,
    Disconnected,
    InvalidRange,
    MultipleSlack,
    NetworkError,
    NonPositiveBase,
    NotConverged,
    NumericalFailure,
)

DEFAULT_S_BASE = 315e3  # VA, substation transformer rating
DEFAULT_V_BASE = 400.0  # V line-to-line
PF_TOL = 1e-8
PF_MAX_ITER = 100


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str  # "slack" or "load"
    base_voltage: float = DEFAULT_V_BASE


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    s_base: float
    v_base: float
    load_buses: tuple[int, ...]
    # Derived tree data, filled in by build_network.
    order: tuple[int, ...] = field(default=(), compare=False)
    parent: tuple[int, ...] = field(default=(), compare=False)
    parent_line: tuple[int, ...] = field(default=(), compare=False)

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_load(self) -> int:
        return len(self.load_buses)

    @property
    def s_base_kw(self) -> float:
        return self.s_base / 1e3

    def impedance_to_parent(self, bus: int) -> complex:
        line = self.lines[self.parent_line[bus]]
        return complex(line.r, line.x)

    def path_to_root(self, bus: int) -> list[int]:
        """Buses from ``bus`` up to (excluding) the slack."""
        path = []
        while bus != 0:
            path.append(bus)
            bus = self.parent[bus]
        return path


@dataclass
class PowerFlowResult:
    v_mag: np.ndarray
    v_ang: np.ndarray
    p_slack: float
    q_slack: float
    converged: bool
    iterations: int
    branch_current: np.ndarray  # complex current from parent into each bus (0 at slack)
    p_loss: float = 0.0
    q_loss: float = 0.0

    def load_bus_voltages(self, net: Network) -> np.ndarray:
        return self.v_mag[list(net.load_buses)]


def build_network(
    buses: Sequence[Bus],
    lines: Sequence[Line],
    s_base: float = DEFAULT_S_BASE,
    v_base: float = DEFAULT_V_BASE,
    load_buses: Sequence[int] | None = None,
) -> Network:
    """Validate a radial feeder and precompute its depth-first ordering.

    Raises CycleDetected, Disconnected, MultipleSlack or NonPositiveBase.
    """
    if not (s_base > 0 and v_base > 0):
        raise NonPositiveBase(f"bases must be positive, got s_base={s_base}, v_base={v_base}")
    buses = tuple(sorted(buses, key=lambda b: b.id))
    n = len(buses)
    if n < 1:
        raise NetworkError("network needs at least one bus")
    if [b.id for b in buses] != list(range(n)):
        raise NetworkError("bus ids must be dense 0..N-1")
    slacks = [b.id for b in buses if b.kind == "slack"]
    if len(slacks) > 1:
        raise MultipleSlack(f"found {len(slacks)} slack buses: {slacks}")
    if slacks != [0]:
        raise NetworkError("exactly one slack bus is required and it must be bus 0")
    for b in buses:
        if b.kind not in ("slack", "load"):
            raise NetworkError(f"unknown bus kind {b.kind!r}")
        if not b.base_voltage > 0:
            raise NonPositiveBase(f"bus {b.id} has non-positive base voltage")

    lines = tuple(lines)
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for k, ln in enumerate(lines):
        if not (0 <= ln.from_bus < n and 0 <= ln.to_bus < n) or ln.from_bus == ln.to_bus:
            raise NetworkError(f"line {k} references invalid buses")
        if ln.r < 0 or ln.x < 0 or (ln.r == 0 and ln.x == 0):
            raise NetworkError(f"line {k} needs r >= 0, x >= 0 and a nonzero impedance")
        adj[ln.from_bus].append((ln.to_bus, k))
        adj[ln.to_bus].append((ln.from_bus, k))

    parent = [-1] * n
    parent_line = [-1] * n
    seen = [False] * n
    order: list[int] = []
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        order.append(u)
        for v, k in sorted(adj[u], reverse=True):
            if k == parent_line[u]:
                continue
            if seen[v]:
                raise CycleDetected(f"line {k} closes a loop at bus {v}")
            seen[v] = True
            parent[v] = u
            parent_line[v] = k
            stack.append(v)
    if len(order) < n:
        missing = [i for i in range(n) if not seen[i]]
        raise Disconnected(f"buses {missing} are not reachable from the slack")
    if len(lines) != n - 1:
        raise CycleDetected("edge count does not match a spanning tree")

    if load_buses is None:
        load_buses = [b.id for b in buses if b.kind == "load"]
    load_buses = tuple(int(b) for b in load_buses)
    if len(set(load_buses)) != len(load_buses) or any(b <= 0 or b >= n for b in load_buses):
        raise NetworkError("load_buses must be distinct non-slack bus ids")

    return Network(
        buses=buses,
        lines=lines,
        s_base=float(s_base),
        v_base=float(v_base),
        load_buses=load_buses,
        order=tuple(order),
        parent=tuple(parent),
        parent_line=tuple(parent_line),
    )


def _injection_vector(net: Network, p_inj, q_inj) -> list[complex]:
    p = np.asarray(p_inj, dtype=float).ravel()
    q = np.asarray(q_inj, dtype=float).ravel()
    if p.shape != (net.n_load,) or q.shape != (net.n_load,):
        raise ValueError(f"injection vectors must have length {net.n_load}")
    s = [0j] * net.n_buses
    for k, bus in enumerate(net.load_buses):
        s[bus] = complex(p[k], q[k])
    return s


def _backward(net: Network, s: list[complex], v: list[complex]) -> list[complex]:
    """Aggregate branch currents from the leaves towards the root."""
    j = [0j] * net.n_buses
    for bus in reversed(net.order):
        if bus == 0:
            continue
        j[bus] += (s[bus] / v[bus]).conjugate()
        j[net.parent[bus]] += j[bus]
    return j


def _forward(net: Network, j: list[complex], v_slack: complex) -> list[complex]:
    v = [0j] * net.n_buses
    v[0] = v_slack
    for bus in net.order[1:]:
        v[bus] = v[net.parent[bus]] - net.impedance_to_parent(bus) * j[bus]
    return v


def run_power_flow(
    net: Network,
    p_inj,
    q_inj,
    tol: float = PF_TOL,
    max_iter: int = PF_MAX_ITER,
    v_slack: float = 1.0,
) -> PowerFlowResult:
    """Backward/forward sweep from a flat start.

    Converged when the infinity norm of the complex voltage update drops to
    ``tol``. Raises NotConverged (carrying the last iterate) or
    NumericalFailure.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    s = _injection_vector(net, p_inj, q_inj)
    v = [complex(v_slack, 0.0)] * net.n_buses
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        j = _backward(net, s, v)
        v_new = _forward(net, j, complex(v_slack, 0.0))
        change = max(abs(a - b) for a, b in zip(v_new, v))
        v = v_new
        if not math.isfinite(change):
            raise NumericalFailure("non-finite voltage during sweep")
        if change <= tol:
            converged = True
            break

    j = _backward(net, s, v)
    s_slack = v[0] * j[0].conjugate()
    loss = sum(abs(j[b]) ** 2 * net.impedance_to_parent(b) for b in range(1, net.n_buses))
    result = PowerFlowResult(
        v_mag=np.array([abs(x) for x in v]),
        v_ang=np.array([cmath.phase(x) for x in v]),
        p_slack=s_slack.real,
        q_slack=s_slack.imag,
        converged=converged,
        iterations=it,
        branch_current=np.array(j),
        p_loss=float(np.real(loss)),
        q_loss=float(np.imag(loss)),
    )
    if not np.all(np.isfinite(result.v_mag)):
        raise NumericalFailure("non-finite voltage magnitude")
    if not converged:
        raise NotConverged(it, result)
    return result


def two_bus_voltage(r: float, x: float, p: float, q: float, v1: float = 1.0) -> float:
    """Closed-form receiving-end magnitude of a single-line feeder.

    Larger root of |V2|^4 + |V2|^2 (2(rP + xQ) - |V1|^2) + (r^2 + x^2)(P^2 + Q^2) = 0.
    """
    b = 2.0 * (r * p + x * q) - v1 * v1
    c = (r * r + x * x) * (p * p + q * q)
    disc = b * b - 4.0 * c
    if disc < 0:
        raise NumericalFailure("no real power-flow solution (beyond the nose point)")
    u = (-b + math.sqrt(disc)) / 2.0
    return math.sqrt(u)


def synthesize_feeder(
    seed: int,
    n_buses: int = 10,
    r_range: tuple[float, float] = (0.03, 0.06),
    x_range: tuple[float, float] = (0.01, 0.02),
    branching_prob: float = 0.3,
    s_base: float = DEFAULT_S_BASE,
    v_base: float = DEFAULT_V_BASE,
) -> Network:
    """Deterministic random radial tree; every non-slack bus carries load.

    Each new bus hangs off its predecessor, or with ``branching_prob`` off a
    uniformly chosen earlier bus.
    """
    if n_buses < 2:
        raise InvalidRange("n_buses must be at least 2")
    for name, (lo, hi) in (("r_range", r_range), ("x_range", x_range)):
        if not (0 < lo <= hi) or not math.isfinite(hi):
            raise InvalidRange(f"{name} must satisfy 0 < lo <= hi, got {(lo, hi)}")
    if not 0.0 <= branching_prob <= 1.0:
        raise InvalidRange("branching_prob must lie in [0, 1]")

    rng = np.random.default_rng(seed)
    buses = [Bus(0, "slack", v_base)] + [Bus(i, "load", v_base) for i in range(1, n_buses)]
    lines = []
    for i in range(1, n_buses):
        if i > 1 and rng.random() < branching_prob:
            parent = int(rng.integers(0, i))
        else:
            parent = i - 1
        r = float(rng.uniform(*r_range))
        x = float(rng.uniform(*x_range))
        lines.append(Line(parent, i, r, x))
    return build_network(buses, lines, s_base, v_base)


# --- tabular text format -------------------------------------------------

_NET_MAGIC = "# nnopf-network v1"


def format_network(net: Network) -> str:
    out = [
        _NET_MAGIC,
        f"s_base {net.s_base!r}",
        f"v_base {net.v_base!r}",
        "load_buses " + " ".join(str(b) for b in net.load_buses),
        "[buses]",
        "id kind base_voltage",
    ]
    out += [f"{b.id} {b.kind} {b.base_voltage!r}" for b in net.buses]
    out += ["[lines]", "from_bus to_bus r x"]
    out += [f"{ln.from_bus} {ln.to_bus} {ln.r!r} {ln.x!r}" for ln in net.lines]
    return "\n".join(out) + "\n"


def parse_network(text: str) -> Network:
    lines = [ln.strip() for ln in text.splitlines()]
    if not lines or lines[0] != _NET_MAGIC:
        raise NetworkError("not an nnopf network file")
    header: dict[str, list[str]] = {}
    section = None
    buses: list[Bus] = []
    edges: list[Line] = []
    skip_header = False
    for ln in lines[1:]:
        if not ln or ln.startswith("#"):
            continue
        if ln.startswith("["):
            section = ln.strip("[]")
            skip_header = True
            continue
        if skip_header:
            skip_header = False
            continue
        tok = ln.split()
        if section is None:
            header[tok[0]] = tok[1:]
        elif section == "buses":
            buses.append(Bus(int(tok[0]), tok[1], float(tok[2])))
        elif section == "lines":
            edges.append(Line(int(tok[0]), int(tok[1]), float(tok[2]), float(tok[3])))
        else:
            raise NetworkError(f"unknown section [{section}]")
    return build_network(
        buses,
        edges,
        float(header["s_base"][0]),
        float(header["v_base"][0]),
        [int(b) for b in header.get("load_buses", [])],
    )


def save_network(net: Network, path) -> None:
    Path(path).write_text(format_network(net))


def load_network(path) -> Network:
    return parse_network(Path(path).read_text())
