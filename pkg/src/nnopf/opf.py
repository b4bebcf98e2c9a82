"""Multi-period OPF with an embedded ReLU voltage surrogate, a LinDistFlow
baseline, and post-hoc AC validation of the resulting schedules."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .devices import DeviceFleet, availability_mask, day_ahead_prices, reactive_ratio
from .encoder import (
    POLICIES,
    TIGHTENED,
    EncodedBlock,
    NeuronBounds,
    compute_activation_bounds,
    encode_time_step,
)
from .errors import (
    DimensionMismatch,
    Infeasible,
    InfeasibleWindow,
    LimitReached,
    NotConverged,
    NumericalFailure,
    OrderingMismatch,
    PowerFlowDiverged,
)
from .grid import Network, run_power_flow
from .milp.bnb import MilpSolution, solve_milp
from .milp.model import EQ, MilpInstance
from .milp.simplex import OPTIMAL, LpEngine
from .scenarios import Dataset, NormStats, compute_norm_stats, min_voltage_targets
from .surrogate import MlpParams, TrainConfig, activation_pattern, evaluate, train

FULL, MIN_VOLTAGE = "full", "min_voltage"
NN, LINDISTFLOW = "nn", "lindistflow"
TIGHTEN_PAD = 1e-7  # slack added to LP-derived neuron bounds


@dataclass(frozen=True)
class OpfConfig:
    horizon: int = 96
    dt: float = 0.25
    prices: tuple[float, ...] | None = None  # currency/kWh; None selects the synthetic curve
    v_lo: float = 0.95
    v_hi: float = 1.05
    gap_tol: float = 0.01
    model_variant: str = FULL
    big_m_policy: str = TIGHTENED
    node_limit: int | None = None
    time_limit: float | None = None
    heuristic: bool = False
    bound_tightening: int = 0  # rounds of LP-based neuron bound tightening

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.v_lo < self.v_hi:
            raise ValueError("v_lo must be below v_hi")
        if self.prices is not None and len(self.prices) != self.horizon:
            raise ValueError(f"prices must have length {self.horizon}")
        if self.model_variant not in (FULL, MIN_VOLTAGE):
            raise ValueError(f"model_variant must be {FULL!r} or {MIN_VOLTAGE!r}")
        if self.big_m_policy not in POLICIES:
            raise ValueError(f"big_m_policy must be one of {POLICIES}")
        if self.gap_tol < 0:
            raise ValueError("gap_tol must be >= 0")
        if self.bound_tightening < 0:
            raise ValueError("bound_tightening must be >= 0")

    def price_vector(self) -> np.ndarray:
        if self.prices is None:
            return day_ahead_prices(self.horizon, self.dt)
        return np.asarray(self.prices, dtype=float)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["prices"] = None if self.prices is None else list(self.prices)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OpfConfig":
        d = dict(d)
        if d.get("prices") is not None:
            d["prices"] = tuple(float(v) for v in d["prices"])
        return cls(**d)


@dataclass
class OpfModel:
    """A built instance plus the indices of every schedule variable."""

    kind: str
    instance: MilpInstance
    config: OpfConfig
    xp: np.ndarray  # (T, N) net active injection, p.u.
    xq: np.ndarray  # (T, N)
    ev_p: np.ndarray  # (E, T) kW
    ev_e: np.ndarray  # (E, T) kWh after each step
    hp_q: np.ndarray  # (B, T) kW thermal
    hp_p: np.ndarray  # (B, T) kW electric
    temp: np.ndarray  # (B, T) degC after each step
    pv_p: np.ndarray  # (T, N) kW
    imp: np.ndarray  # (T,) kW
    exp: np.ndarray  # (T,) kW
    v: np.ndarray  # (T, n_out) predicted magnitudes (NN) or squared magnitudes (LinDistFlow)
    ev_init: np.ndarray  # (E,) kWh
    temp_init: np.ndarray  # (B,) degC
    blocks: list[EncodedBlock] = field(default_factory=list)
    params: MlpParams | None = None
    stats: NormStats | None = None


@dataclass
class OpfSolution:
    kind: str
    variant: str
    status: str
    objective: float
    bound: float
    gap: float
    nodes: int
    seconds: float
    x_p: np.ndarray  # (T, N) p.u.
    x_q: np.ndarray
    ev_p: np.ndarray  # (E, T)
    ev_energy: np.ndarray  # (E, T + 1) including the initial state
    hp_p: np.ndarray  # (B, T)
    hp_q: np.ndarray  # (B, T) thermal
    temperatures: np.ndarray  # (B, T + 1)
    pv_p: np.ndarray  # (T, N)
    pv_q: np.ndarray  # (T, N)
    grid_import: np.ndarray  # (T,) kW, net consumption
    voltages: np.ndarray  # (T, n_out) predicted p.u.; n_out = 1 for the min-voltage model
    lp_iterations: int = 0

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "OpfSolution":
        kw = dict(d)
        for k in ("x_p", "x_q", "ev_p", "ev_energy", "hp_p", "hp_q", "temperatures", "pv_p",
                  "pv_q", "grid_import", "voltages"):
            kw[k] = np.asarray(kw[k], dtype=float)
        return cls(**kw)


@dataclass
class ValidationReport:
    ac_voltages: np.ndarray  # (T, n_buses)
    predicted: np.ndarray  # (T, n_out)
    compared_ac: np.ndarray  # AC counterpart of ``predicted``
    rmse: float
    mae: float
    max_deviation: float
    violations: list[tuple[int, int, float]]  # (step, bus, depth below v_lo), deepest first
    ac_objective: float
    ac_import: np.ndarray  # (T,) kW including losses
    min_ac_voltage: float

    def summary(self) -> dict:
        return {
            "RMSE": self.rmse,
            "MAE": self.mae,
            "Max Error": self.max_deviation,
            "violations": len(self.violations),
            "worst_violation": self.violations[0][2] if self.violations else 0.0,
            "min_ac_voltage": self.min_ac_voltage,
            "ac_objective": self.ac_objective,
        }


# --- building ---------------------------------------------------------------


def _check_inputs(net: Network, fleet: DeviceFleet, config: OpfConfig) -> None:
    fleet.check(net)
    if fleet.steps != config.horizon:
        raise ValueError(f"fleet spans {fleet.steps} steps but the horizon is {config.horizon}")
    if abs(fleet.dt - config.dt) > 1e-12:
        raise ValueError("fleet and config time steps differ")
    for ev in fleet.evs:
        mask = availability_mask(ev, config.horizon)
        reach = ev.e_init + ev.eta * ev.p_max * config.dt * mask.sum()
        if reach < ev.e_required - 1e-9:
            raise InfeasibleWindow(
                f"EV at bus {ev.bus} can reach {reach:.3f} kWh but needs {ev.e_required:.3f}"
            )


def _add_devices(inst: MilpInstance, net: Network, fleet: DeviceFleet, config: OpfConfig):
    """Device variables, dynamics and the injection/import coupling rows."""
    T, N, dt = config.horizon, net.n_load, config.dt
    s_kw = net.s_base_kw
    E, B = len(fleet.evs), len(fleet.buildings)

    ev_p = np.zeros((E, T), dtype=int)
    ev_e = np.zeros((E, T), dtype=int)
    for e, ev in enumerate(fleet.evs):
        mask = availability_mask(ev, T)
        for t in range(T):
            ev_p[e, t] = inst.add_var(f"pev[{e},{t}]", 0.0, ev.p_max if mask[t] else 0.0)
            lo = ev.e_required if t + 1 == ev.departure_step else 0.0
            ev_e[e, t] = inst.add_var(f"eev[{e},{t}]", lo, ev.e_max)
        for t in range(T):
            row = [(ev_e[e, t], 1.0), (ev_p[e, t], -ev.eta * dt)]
            if t == 0:
                inst.add_constraint(row, EQ, ev.e_init, f"evdyn[{e},{t}]")
            else:
                inst.add_constraint(row + [(ev_e[e, t - 1], -1.0)], EQ, 0.0, f"evdyn[{e},{t}]")

    hp_q = np.zeros((B, T), dtype=int)
    hp_p = np.zeros((B, T), dtype=int)
    temp = np.zeros((B, T), dtype=int)
    for b, (bld, hp) in enumerate(fleet.buildings):
        a = dt / bld.thermal_capacitance
        keep = 1.0 - a / bld.thermal_resistance
        for t in range(T):
            hp_p[b, t] = inst.add_var(f"php[{b},{t}]", 0.0, hp.p_max)
            hp_q[b, t] = inst.add_var(f"qhp[{b},{t}]", 0.0, hp.cop * hp.p_max)
            temp[b, t] = inst.add_var(f"tin[{b},{t}]", bld.comfort_lo[t], bld.comfort_hi[t])
            inst.add_constraint([(hp_p[b, t], 1.0), (hp_q[b, t], -1.0 / hp.cop)], EQ, 0.0, f"cop[{b},{t}]")
            gain = a / bld.thermal_resistance * bld.outdoor_temp[t]
            row = [(temp[b, t], 1.0), (hp_q[b, t], -a)]
            if t == 0:
                inst.add_constraint(row, EQ, keep * bld.t_init + gain, f"rc[{b},{t}]")
            else:
                inst.add_constraint(row + [(temp[b, t - 1], -keep)], EQ, gain, f"rc[{b},{t}]")

    pv_p = np.zeros((T, N), dtype=int)
    xp = np.zeros((T, N), dtype=int)
    xq = np.zeros((T, N), dtype=int)
    imp = np.zeros(T, dtype=int)
    exp = np.zeros(T, dtype=int)
    ev_cols = [fleet.column(ev.bus) for ev in fleet.evs]
    hp_cols = [fleet.column(bld.bus) for bld, _ in fleet.buildings]
    ev_qr = [reactive_ratio(ev.power_factor) for ev in fleet.evs]
    hp_qr = [reactive_ratio(hp.power_factor) for _, hp in fleet.buildings]
    ev_max = np.zeros((T, N))
    hp_max = np.zeros(N)
    for e, ev in enumerate(fleet.evs):
        ev_max[:, ev_cols[e]] += ev.p_max * availability_mask(ev, T)
    for b, (_, hp) in enumerate(fleet.buildings):
        hp_max[hp_cols[b]] += hp.p_max

    for t in range(T):
        total = []
        for k in range(N):
            pv_p[t, k] = inst.add_var(f"pdg[{t},{k}]", 0.0, float(fleet.pv[t, k]))
            base_p, base_q = float(fleet.base_p[t, k]), float(fleet.base_q[t, k])
            p_lo = (base_p - fleet.pv[t, k]) / s_kw
            p_hi = (base_p + ev_max[t, k] + hp_max[k]) / s_kw
            q_lo = (base_q - ev_max[t, k] * max(ev_qr, default=0.0)) / s_kw
            q_hi = (base_q + hp_max[k] * max(hp_qr, default=0.0)) / s_kw
            xp[t, k] = inst.add_var(f"xp[{t},{k}]", p_lo, p_hi)
            xq[t, k] = inst.add_var(f"xq[{t},{k}]", q_lo, q_hi)
            # Net consumption: load - DG + EV + HP (active); load - DG - EV + HP (reactive).
            prow = [(xp[t, k], s_kw), (pv_p[t, k], 1.0)]
            qrow = [(xq[t, k], s_kw)]
            for e in range(E):
                if ev_cols[e] == k:
                    prow.append((ev_p[e, t], -1.0))
                    if ev_qr[e]:
                        qrow.append((ev_p[e, t], ev_qr[e]))
            for b in range(B):
                if hp_cols[b] == k:
                    prow.append((hp_p[b, t], -1.0))
                    if hp_qr[b]:
                        qrow.append((hp_p[b, t], -hp_qr[b]))
            inst.add_constraint(prow, EQ, base_p, f"pnet[{t},{k}]")
            inst.add_constraint(qrow, EQ, base_q, f"qnet[{t},{k}]")
            total.append((xp[t, k], s_kw))
        big = float(np.sum(fleet.base_p[t]) + ev_max[t].sum() + hp_max.sum() + np.sum(fleet.pv[t])) + 1.0
        imp[t] = inst.add_var(f"imp[{t}]", 0.0, big)
        exp[t] = inst.add_var(f"exp[{t}]", 0.0, big)
        inst.add_constraint([(imp[t], 1.0), (exp[t], -1.0)] + [(v, -a) for v, a in total], EQ, 0.0, f"grid[{t}]")

    prices = config.price_vector()
    inst.set_objective({int(imp[t]): float(prices[t] * dt) for t in range(T)})
    return dict(xp=xp, xq=xq, ev_p=ev_p, ev_e=ev_e, hp_q=hp_q, hp_p=hp_p, temp=temp,
                pv_p=pv_p, imp=imp, exp=exp,
                ev_init=np.array([ev.e_init for ev in fleet.evs]),
                temp_init=np.array([bld.t_init for bld, _ in fleet.buildings]))


def build_nn_opf(
    net: Network,
    fleet: DeviceFleet,
    params: MlpParams,
    stats: NormStats,
    config: OpfConfig,
    surrogate_buses: Sequence[int] | None = None,
) -> OpfModel:
    """Full NN-constrained MILP: devices, injections, one encoded block per step."""
    if surrogate_buses is not None and tuple(surrogate_buses) != tuple(net.load_buses):
        raise OrderingMismatch(
            f"surrogate load buses {tuple(surrogate_buses)} differ from network {net.load_buses}"
        )
    n_out = net.n_load if config.model_variant == FULL else 1
    if params.n_in != 2 * net.n_load:
        raise OrderingMismatch(f"surrogate expects {params.n_in} inputs, network has {2 * net.n_load}")
    if params.n_out != n_out:
        raise DimensionMismatch(
            f"{config.model_variant} model needs {n_out} outputs, surrogate has {params.n_out}"
        )
    _check_inputs(net, fleet, config)
    model = _assemble_nn(net, fleet, params, stats, config, n_out)
    if config.big_m_policy == TIGHTENED:
        for _ in range(config.bound_tightening):
            model = _assemble_nn(net, fleet, params, stats, config, n_out, tighten_activation_bounds(model))
    return model


def _assemble_nn(net, fleet, params, stats, config, n_out, step_bounds=None) -> OpfModel:
    inst = MilpInstance("nn_opf")
    idx = _add_devices(inst, net, fleet, config)
    arr_lo = np.array([v.lo for v in inst.variables])
    arr_hi = np.array([v.hi for v in inst.variables])

    blocks = []
    v = np.zeros((config.horizon, n_out), dtype=int)
    for t in range(config.horizon):
        x_vars = list(idx["xp"][t]) + list(idx["xq"][t])
        if step_bounds is None:
            bounds = compute_activation_bounds(params, stats, arr_lo[x_vars], arr_hi[x_vars])
        else:
            bounds = step_bounds[t]
        blk = encode_time_step(inst, params, stats, x_vars, bounds, config.big_m_policy, tag=str(t))
        for k, var in enumerate(blk.v_vars):
            cur = inst.variables[var]
            lo = max(cur.lo, config.v_lo)
            hi = cur.hi if config.model_variant == MIN_VOLTAGE else min(cur.hi, config.v_hi)
            if lo > hi:
                raise Infeasible(f"voltage limits unreachable at step {t}, output {k}")
            inst.set_bounds(var, lo, hi)
            v[t, k] = var
        blocks.append(blk)
    return OpfModel(NN, inst, config, v=v, blocks=blocks, params=params, stats=stats, **idx)


def tighten_activation_bounds(model: OpfModel) -> list[NeuronBounds]:
    """Shrink each unstable neuron's interval to its range over the LP relaxation.

    The relaxation contains every MILP-feasible point, so the new intervals
    stay valid for the whole OPF while cutting off input combinations the
    device and voltage limits already exclude.
    """
    inst = model.instance
    arr = inst.arrays()
    engine = LpEngine.from_instance(inst)
    sol, basis = engine.solve(arr.lo, arr.hi)
    if sol.status != OPTIMAL:
        raise Infeasible(f"OPF relaxation is {sol.status}")
    out = []
    c = np.zeros(len(arr.lo))
    for blk in model.blocks:
        lo = blk.bounds.lo.copy()
        hi = blk.bounds.hi.copy()
        for j in blk.free:
            var = blk.z_vars[j]
            for sign in (1.0, -1.0):
                c[var] = sign
                res, nb = engine.reoptimize(c, arr.lo, arr.hi, basis)
                c[var] = 0.0
                if res.status != OPTIMAL:
                    continue
                basis = nb or basis
                val = res.values[var]
                pad = TIGHTEN_PAD * (1.0 + abs(val))
                if sign > 0:
                    lo[j] = max(lo[j], val - pad)
                else:
                    hi[j] = min(hi[j], val + pad)
            if lo[j] > hi[j]:
                lo[j] = hi[j] = 0.5 * (lo[j] + hi[j])
        out.append(NeuronBounds(lo, hi))
    return out


def build_lindistflow_opf(net: Network, fleet: DeviceFleet, config: OpfConfig) -> OpfModel:
    """Pure LP baseline with lossless linearized branch flows.

    Squared magnitudes obey w_child = w_parent - 2 (r P + x Q) where P, Q are
    the flows into the child's subtree; the slack is fixed at w = 1.
    """
    _check_inputs(net, fleet, config)
    inst = MilpInstance("lindistflow_opf")
    idx = _add_devices(inst, net, fleet, config)
    T, nb = config.horizon, net.n_buses
    col = {bus: k for k, bus in enumerate(net.load_buses)}
    children: dict[int, list[int]] = {b: [] for b in range(nb)}
    for b in range(1, nb):
        children[net.parent[b]].append(b)
    w = np.zeros((T, nb), dtype=int)
    for t in range(T):
        fp, fq = {}, {}
        for b in range(1, nb):
            fp[b] = inst.add_var(f"fp[{t},{b}]", -1e3, 1e3)
            fq[b] = inst.add_var(f"fq[{t},{b}]", -1e3, 1e3)
        for b in range(nb):
            lo, hi = (1.0, 1.0) if b == 0 else (config.v_lo**2, config.v_hi**2)
            w[t, b] = inst.add_var(f"w[{t},{b}]", lo, hi)
        for b in range(1, nb):
            prow = [(fp[b], 1.0)] + [(fp[c], -1.0) for c in children[b]]
            qrow = [(fq[b], 1.0)] + [(fq[c], -1.0) for c in children[b]]
            if b in col:
                prow.append((idx["xp"][t, col[b]], -1.0))
                qrow.append((idx["xq"][t, col[b]], -1.0))
            inst.add_constraint(prow, EQ, 0.0, f"pbal[{t},{b}]")
            inst.add_constraint(qrow, EQ, 0.0, f"qbal[{t},{b}]")
            line = net.lines[net.parent_line[b]]
            inst.add_constraint(
                [(w[t, b], 1.0), (w[t, net.parent[b]], -1.0), (fp[b], 2 * line.r), (fq[b], 2 * line.x)],
                EQ, 0.0, f"drop[{t},{b}]",
            )
    v = w[:, list(net.load_buses)]
    return OpfModel(LINDISTFLOW, inst, config, v=v, **idx)


# --- solving ----------------------------------------------------------------


def pattern_heuristic(model: OpfModel):
    """Fix each step's binaries to the activation pattern of the LP injections."""
    inst = model.instance
    engine = LpEngine.from_instance(inst)
    xcols = [np.concatenate([model.xp[t], model.xq[t]]) for t in range(model.config.horizon)]

    def run(x, lo, hi):
        lo, hi = lo.copy(), hi.copy()
        for t, blk in enumerate(model.blocks):
            if not blk.free:
                continue
            pat = activation_pattern(model.params, model.stats, x[xcols[t]])
            for j in blk.free:
                d = blk.delta_vars[j]
                if lo[d] == hi[d]:
                    continue
                lo[d] = hi[d] = 1.0 if pat[j] else 0.0
        sol, _ = engine.solve(lo, hi)
        return sol.values if sol.status == OPTIMAL else None

    return run


def sign_hint(model: OpfModel):
    """Dive towards the activation state matching the sign of the LP pre-activation."""
    z_of = {}
    for blk in model.blocks:
        for d, z in zip(blk.delta_vars, blk.z_vars):
            z_of[int(d)] = int(z)

    def hint(x, var):
        z = z_of.get(var)
        return float(x[var] >= 0.5) if z is None else float(x[z] > 0.0)

    return hint


def solve_opf(model: OpfModel) -> OpfSolution:
    """Solve a built model (branch and bound for NN models, one LP otherwise)."""
    cfg = model.config
    inst = model.instance
    t0 = time.perf_counter()
    if model.kind == LINDISTFLOW:
        arr = inst.arrays()
        sol, _ = LpEngine.from_instance(inst).solve(arr.lo, arr.hi)
        if sol.status != OPTIMAL:
            raise Infeasible(f"LinDistFlow LP is {sol.status}")
        ms = MilpSolution(OPTIMAL, sol.values, sol.objective, sol.objective, 0.0, 1, sol.iterations)
    else:
        heur = pattern_heuristic(model) if cfg.heuristic else None
        try:
            ms = solve_milp(inst, cfg.gap_tol, cfg.node_limit, cfg.time_limit, heuristic=heur,
                            branch_hint=sign_hint(model))
        except LimitReached as exc:
            if exc.solution.values is None:
                raise
            ms = exc.solution
    return extract_solution(model, ms, time.perf_counter() - t0)


def extract_solution(model: OpfModel, ms: MilpSolution, seconds: float) -> OpfSolution:
    x = ms.values
    E, T = model.ev_e.shape
    B = model.temp.shape[0]
    e_init = model.ev_init.reshape(E, 1)
    t_init = model.temp_init.reshape(B, 1)
    if model.kind == LINDISTFLOW:
        volts = np.sqrt(np.maximum(x[model.v], 0.0))
    else:
        volts = x[model.v]
    return OpfSolution(
        kind=model.kind,
        variant=model.config.model_variant if model.kind == NN else FULL,
        status=ms.status,
        objective=float(ms.objective),
        bound=float(ms.bound),
        gap=float(ms.gap),
        nodes=int(ms.nodes),
        seconds=float(seconds),
        x_p=x[model.xp],
        x_q=x[model.xq],
        ev_p=x[model.ev_p].reshape(E, T),
        ev_energy=np.hstack([e_init, x[model.ev_e].reshape(E, T)]),
        hp_p=x[model.hp_p].reshape(B, T),
        hp_q=x[model.hp_q].reshape(B, T),
        temperatures=np.hstack([t_init, x[model.temp].reshape(B, T)]),
        pv_p=x[model.pv_p],
        pv_q=np.zeros_like(x[model.pv_p]),
        grid_import=x[model.imp] - x[model.exp],
        voltages=volts,
        lp_iterations=int(ms.lp_iterations),
    )


# --- checks and validation ------------------------------------------------


def recompute_objective(solution: OpfSolution, fleet: DeviceFleet, config: OpfConfig) -> float:
    """Energy cost rebuilt from the device schedules alone."""
    prices = config.price_vector()
    total = fleet.base_p.sum(axis=1) - solution.pv_p.sum(axis=1)
    total = total + solution.ev_p.sum(axis=0) + solution.hp_p.sum(axis=0)
    return float(np.sum(prices * config.dt * np.maximum(total, 0.0)))


def dynamics_drift(solution: OpfSolution, fleet: DeviceFleet, config: OpfConfig) -> float:
    """Largest gap between solved states and a step-by-step device replay."""
    from .devices import building_temperature_transition, ev_energy_transition, hp_electric_power

    drift = 0.0
    for e, ev in enumerate(fleet.evs):
        cur = ev.e_init
        for t in range(config.horizon):
            cur = ev_energy_transition(cur, solution.ev_p[e, t], config.dt, ev.eta)
            drift = max(drift, abs(cur - solution.ev_energy[e, t + 1]))
    for b, (bld, hp) in enumerate(fleet.buildings):
        cur = bld.t_init
        for t in range(config.horizon):
            cur = building_temperature_transition(cur, solution.hp_q[b, t], bld.outdoor_temp[t], bld, config.dt)
            drift = max(drift, abs(cur - solution.temperatures[b, t + 1]))
            drift = max(drift, abs(hp_electric_power(solution.hp_q[b, t], hp.cop) - solution.hp_p[b, t]))
    return drift


def validate_solution(net: Network, fleet: DeviceFleet, solution: OpfSolution, config: OpfConfig) -> ValidationReport:
    """Run AC power flow on every step's solved injections and compare voltages."""
    T = config.horizon
    ac = np.zeros((T, net.n_buses))
    ac_import = np.zeros(T)
    for t in range(T):
        try:
            res = run_power_flow(net, solution.x_p[t], solution.x_q[t])
        except (NotConverged, NumericalFailure) as exc:
            raise PowerFlowDiverged(t) from exc
        ac[t] = res.v_mag
        ac_import[t] = res.p_slack * net.s_base_kw
    load_v = ac[:, list(net.load_buses)]
    if solution.voltages.shape[1] == 1 and net.n_load != 1:
        compared = load_v.min(axis=1, keepdims=True)
    else:
        compared = load_v
    err = solution.voltages - compared
    violations = [
        (int(t), int(net.load_buses[k]), float(config.v_lo - load_v[t, k]))
        for t, k in zip(*np.nonzero(load_v < config.v_lo))
    ]
    violations.sort(key=lambda v: (-v[2], v[0], v[1]))
    prices = config.price_vector()
    return ValidationReport(
        ac_voltages=ac,
        predicted=solution.voltages,
        compared_ac=compared,
        rmse=float(np.sqrt(np.mean(err**2))),
        mae=float(np.mean(np.abs(err))),
        max_deviation=float(np.max(np.abs(err))),
        violations=violations,
        ac_objective=float(np.sum(prices * config.dt * np.maximum(ac_import, 0.0))),
        ac_import=ac_import,
        min_ac_voltage=float(load_v.min()),
    )


# --- neuron sweep -----------------------------------------------------------


@dataclass
class SweepRow:
    hidden: int
    val_rmse: float
    test_rmse: float
    solve_seconds: float
    nodes: int
    objective: float
    gap: float
    free_binaries: int


def sweep_neurons(
    dataset: Dataset,
    net: Network,
    fleet: DeviceFleet,
    config: OpfConfig,
    h_list: Sequence[int],
    train_config: TrainConfig = TrainConfig(),
) -> list[SweepRow]:
    """Train one surrogate per width with a fixed seed and solve the same OPF."""
    if not h_list:
        raise ValueError("h_list must not be empty")
    if config.model_variant == FULL:
        data, stats, variant = dataset, compute_norm_stats(dataset), "full"
    else:
        data, stats = min_voltage_targets(dataset)
        variant = "full"  # the min-voltage view stores its single target as the full profile
    rows = []
    for h in h_list:
        params = train(data, stats, int(h), train_config, variant=variant)
        val = evaluate(params, stats, data, "val", variant) if len(data.val) else None
        test = evaluate(params, stats, data, "test", variant)
        model = build_nn_opf(net, fleet, params, stats, config, dataset.load_buses)
        sol = solve_opf(model)
        rows.append(SweepRow(
            hidden=int(h),
            val_rmse=val.rmse if val is not None else float("nan"),
            test_rmse=test.rmse,
            solve_seconds=sol.seconds,
            nodes=sol.nodes,
            objective=sol.objective,
            gap=sol.gap,
            free_binaries=len(model.instance.free_binaries()),
        ))
    return rows


# --- files ------------------------------------------------------------------

VALIDATION_HEADER = ["step", "bus", "v_ac", "v_pred", "deviation"]
MIN_VOLTAGE_HEADER = ["step", "v_min_ac", "v_min_pred", "v_lo"]
SWEEP_HEADER = ["hidden", "val_rmse", "test_rmse", "solve_seconds", "nodes", "objective", "gap", "free_binaries"]


def save_solution(path, solution: OpfSolution) -> None:
    Path(path).write_text(json.dumps(solution.to_dict(), indent=1))


def load_solution(path) -> OpfSolution:
    return OpfSolution.from_dict(json.loads(Path(path).read_text()))


def save_validation_csv(path, net: Network, report: ValidationReport) -> None:
    """Per-step per-bus rows; predictions are blank for buses a min-voltage model does not cover."""
    per_bus = report.predicted.shape[1] == net.n_load
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(VALIDATION_HEADER)
        for t in range(report.ac_voltages.shape[0]):
            for k, bus in enumerate(net.load_buses):
                v_ac = report.ac_voltages[t, bus]
                if per_bus:
                    pred = report.predicted[t, k]
                    w.writerow([t, bus, repr(float(v_ac)), repr(float(pred)), repr(float(pred - v_ac))])
                else:
                    w.writerow([t, bus, repr(float(v_ac)), "", ""])


def save_min_voltage_csv(path, report: ValidationReport, config: OpfConfig, net: Network) -> None:
    """Minimum-voltage trace per step, AC against predicted."""
    load_v = report.ac_voltages[:, list(net.load_buses)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MIN_VOLTAGE_HEADER)
        for t in range(load_v.shape[0]):
            w.writerow([t, repr(float(load_v[t].min())), repr(float(report.predicted[t].min())), config.v_lo])


def save_sweep_csv(path, rows: Sequence[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([getattr(r, k) for k in SWEEP_HEADER])


def summary_dict(solution: OpfSolution, report: ValidationReport | None = None) -> dict:
    label = "LinDistFlow" if solution.kind == LINDISTFLOW else (
        "NN-OPF (Model 1)" if solution.variant == FULL else "NN-OPF (Model 2)")
    out = {
        "model": label,
        "Runtime [s]": solution.seconds,
        "objective value": solution.objective,
        "bound": solution.bound,
        "gap": solution.gap,
        "nodes": solution.nodes,
        "status": solution.status,
    }
    if report is not None:
        out.update(report.summary())
    return out
