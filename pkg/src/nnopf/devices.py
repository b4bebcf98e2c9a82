"""Linear device models: EV charging, building thermal mass, heat pumps.

Powers are in kW, energies in kWh, temperatures in degC, time steps in hours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import WindowOutOfHorizon
from .grid import Network

DT_DEFAULT = 0.25
HORIZON_DEFAULT = 96


def reactive_ratio(power_factor: float) -> float:
    """Q/P for a constant lagging power factor."""
    if not 0.0 < power_factor <= 1.0:
        raise ValueError("power factor must lie in (0, 1]")
    return math.tan(math.acos(power_factor))


@dataclass(frozen=True)
class EvSpec:
    bus: int
    arrival_step: int
    departure_step: int
    e_init: float
    e_required: float
    e_max: float
    p_max: float
    eta: float = 0.92
    power_factor: float = 1.0

    def __post_init__(self):
        if not self.arrival_step < self.departure_step:
            raise ValueError("EV arrival must precede departure")
        if not 0.0 <= self.e_init <= self.e_required <= self.e_max:
            raise ValueError("EV energies must satisfy 0 <= e_init <= e_required <= e_max")
        if not self.p_max > 0:
            raise ValueError("EV p_max must be positive")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("EV efficiency must lie in (0, 1]")


@dataclass(frozen=True)
class BuildingSpec:
    bus: int
    thermal_resistance: float
    thermal_capacitance: float
    t_init: float
    comfort_lo: tuple[float, ...]
    comfort_hi: tuple[float, ...]
    outdoor_temp: tuple[float, ...]

    def __post_init__(self):
        if not (self.thermal_resistance > 0 and self.thermal_capacitance > 0):
            raise ValueError("thermal resistance and capacitance must be positive")
        if not len(self.comfort_lo) == len(self.comfort_hi) == len(self.outdoor_temp):
            raise ValueError("comfort and outdoor profiles must share one length")
        if any(lo > hi for lo, hi in zip(self.comfort_lo, self.comfort_hi)):
            raise ValueError("comfort_lo must not exceed comfort_hi")


@dataclass(frozen=True)
class HpSpec:
    cop: float
    p_max: float
    power_factor: float = 1.0

    def __post_init__(self):
        if not (self.cop > 0 and self.p_max > 0):
            raise ValueError("heat pump cop and p_max must be positive")


@dataclass(frozen=True, eq=False)
class DeviceFleet:
    """Devices plus per-step profiles.

    Profile arrays have shape (steps, N) with columns in ``load_buses`` order.
    """

    load_buses: tuple[int, ...]
    evs: tuple[EvSpec, ...]
    buildings: tuple[tuple[BuildingSpec, HpSpec], ...]
    pv: np.ndarray = field(repr=False)
    base_p: np.ndarray = field(repr=False)
    base_q: np.ndarray = field(repr=False)
    dt: float = DT_DEFAULT

    @property
    def steps(self) -> int:
        return self.base_p.shape[0]

    def column(self, bus: int) -> int:
        return self.load_buses.index(bus)

    def check(self, net: Network) -> None:
        if tuple(self.load_buses) != tuple(net.load_buses):
            raise ValueError("fleet load-bus ordering differs from the network")
        shape = (self.steps, net.n_load)
        for name in ("pv", "base_p", "base_q"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} profile must have shape {shape}")
        for ev in self.evs:
            if ev.bus not in net.load_buses:
                raise ValueError(f"EV at bus {ev.bus} is not on a load bus")
        for b, _ in self.buildings:
            if b.bus not in net.load_buses:
                raise ValueError(f"building at bus {b.bus} is not on a load bus")
            if len(b.outdoor_temp) != self.steps:
                raise ValueError("building profiles must span the fleet horizon")

    def ev_rating(self) -> np.ndarray:
        """Installed EV charging power per load bus (kW)."""
        out = np.zeros(len(self.load_buses))
        for ev in self.evs:
            out[self.column(ev.bus)] += ev.p_max
        return out

    def hp_rating(self) -> np.ndarray:
        out = np.zeros(len(self.load_buses))
        for b, hp in self.buildings:
            out[self.column(b.bus)] += hp.p_max
        return out


def ev_energy_transition(e: float, p: float, dt: float, eta: float) -> float:
    return e + eta * p * dt


def building_temperature_transition(
    t_in: float, q_hp: float, t_out: float, spec: BuildingSpec, dt: float
) -> float:
    """First-order RC step: heat input minus conduction losses to outdoors."""
    loss = (t_in - t_out) / spec.thermal_resistance
    return t_in + dt / spec.thermal_capacitance * (q_hp - loss)


def hp_electric_power(q_hp: float, cop: float) -> float:
    return q_hp / cop


def availability_mask(spec: EvSpec, T: int) -> np.ndarray:
    """True on steps [arrival, departure) when the EV is plugged in."""
    if spec.arrival_step < 0 or spec.departure_step > T:
        raise WindowOutOfHorizon(
            f"window [{spec.arrival_step}, {spec.departure_step}) exceeds horizon {T}"
        )
    mask = np.zeros(T, dtype=bool)
    mask[spec.arrival_step : spec.departure_step] = True
    return mask


# --- synthetic profiles ---------------------------------------------------


def residential_shape(hours: np.ndarray) -> np.ndarray:
    """Unit-peak household demand with morning and evening peaks."""
    s = (
        0.35
        + 0.30 * np.exp(-(((hours - 7.5) / 1.5) ** 2))
        + 0.75 * np.exp(-(((hours - 19.5) / 2.0) ** 2))
    )
    return s / s.max()


def pv_shape(hours: np.ndarray) -> np.ndarray:
    return np.clip(np.sin(np.pi * (hours - 7.0) / 10.0), 0.0, None) * ((hours > 7) & (hours < 17))


def outdoor_temperature(hours: np.ndarray) -> np.ndarray:
    return 6.0 + 4.0 * np.sin(2 * np.pi * (hours - 9.0) / 24.0)


def day_ahead_prices(steps: int = HORIZON_DEFAULT, dt: float = DT_DEFAULT, start_hour: float = 0.0) -> np.ndarray:
    """Synthetic day-ahead price curve (currency/kWh): cheap night, evening peak."""
    h = (start_hour + (np.arange(steps) + 0.5) * dt) % 24.0
    return np.round(
        0.12
        + 0.05 * np.exp(-(((h - 8.0) / 2.0) ** 2))
        + 0.14 * np.exp(-(((h - 19.0) / 2.5) ** 2))
        - 0.03 * ((h >= 22.0) | (h < 5.0)),
        6,
    )


def synthesize_fleet(
    net: Network,
    seed: int,
    steps: int = HORIZON_DEFAULT,
    dt: float = DT_DEFAULT,
    ev_penetration: float = 0.3,
    hp_penetration: float = 0.3,
    pv_penetration: float = 0.5,
    houses_per_bus: int = 3,
    start_hour: float = 0.0,
) -> DeviceFleet:
    """Deterministic synthetic fleet for a feeder.

    Penetrations are fractions of the ``houses_per_bus * N`` households that
    own an EV, a heat pump or rooftop PV.
    """
    rng = np.random.default_rng(seed)
    n = net.n_load
    hours = start_hour + (np.arange(steps) + 0.5) * dt
    houses = houses_per_bus * n

    peak = rng.uniform(1.2, 2.2, size=n) * houses_per_bus
    base_p = np.outer(residential_shape(hours % 24.0), peak)
    base_q = base_p * rng.uniform(0.15, 0.3, size=n)

    pv = np.zeros((steps, n))
    n_pv = int(round(pv_penetration * houses))
    for house in rng.choice(houses, size=n_pv, replace=False):
        pv[:, house % n] += rng.uniform(3.0, 5.0) * pv_shape(hours % 24.0)

    evs = []
    n_ev = int(round(ev_penetration * houses))
    for house in rng.choice(houses, size=n_ev, replace=False):
        arrive_h = rng.uniform(17.0, 19.5)
        arrival = int(np.clip(np.floor((arrive_h - start_hour) / dt), 0, steps - 1))
        e_init = float(np.round(rng.uniform(8.0, 16.0), 3))
        need = float(np.round(rng.uniform(6.0, 14.0), 3))
        window = (steps - arrival) * dt
        p_max = 7.4
        need = min(need, 0.8 * 0.92 * p_max * window)
        evs.append(
            EvSpec(
                bus=net.load_buses[house % n],
                arrival_step=arrival,
                departure_step=steps,
                e_init=e_init,
                e_required=e_init + need,
                e_max=40.0,
                p_max=p_max,
            )
        )

    buildings = []
    n_hp = int(round(hp_penetration * houses))
    t_out = tuple(float(v) for v in np.round(outdoor_temperature(hours % 24.0), 6))
    for house in rng.choice(houses, size=n_hp, replace=False):
        occupied = ((hours % 24.0) >= 17.0) | ((hours % 24.0) < 8.0)
        lo = np.where(occupied, 20.0, 17.0)
        hi = np.where(occupied, 23.0, 24.0)
        spec = BuildingSpec(
            bus=net.load_buses[house % n],
            thermal_resistance=float(np.round(rng.uniform(4.0, 6.0), 3)),
            thermal_capacitance=float(np.round(rng.uniform(2.5, 4.0), 3)),
            t_init=21.0,
            comfort_lo=tuple(float(v) for v in lo),
            comfort_hi=tuple(float(v) for v in hi),
            outdoor_temp=t_out,
        )
        buildings.append((spec, HpSpec(cop=3.0, p_max=3.0)))

    return DeviceFleet(
        load_buses=tuple(net.load_buses),
        evs=tuple(evs),
        buildings=tuple(buildings),
        pv=pv,
        base_p=base_p,
        base_q=base_q,
        dt=float(dt),
    )


def empty_fleet(net: Network, steps: int, dt: float = DT_DEFAULT) -> DeviceFleet:
    z = np.zeros((steps, net.n_load))
    return DeviceFleet(tuple(net.load_buses), (), (), z, z.copy(), z.copy(), dt)


# --- tabular text format -------------------------------------------------

_FLEET_MAGIC = "# nnopf-fleet v1"
_EV_COLS = "bus arrival_step departure_step e_init e_required e_max p_max eta power_factor"
_BLD_COLS = "bus thermal_resistance thermal_capacitance t_init cop hp_p_max hp_power_factor"


def _fmt(v) -> str:
    return repr(float(v))


def format_fleet(fleet: DeviceFleet) -> str:
    out = [
        _FLEET_MAGIC,
        f"steps {fleet.steps}",
        f"dt {fleet.dt!r}",
        "load_buses " + " ".join(str(b) for b in fleet.load_buses),
        "[evs]",
        _EV_COLS,
    ]
    for ev in fleet.evs:
        out.append(
            f"{ev.bus} {ev.arrival_step} {ev.departure_step} {_fmt(ev.e_init)} "
            f"{_fmt(ev.e_required)} {_fmt(ev.e_max)} {_fmt(ev.p_max)} {_fmt(ev.eta)} "
            f"{_fmt(ev.power_factor)}"
        )
    out += ["[buildings]", _BLD_COLS]
    for b, hp in fleet.buildings:
        out.append(
            f"{b.bus} {_fmt(b.thermal_resistance)} {_fmt(b.thermal_capacitance)} "
            f"{_fmt(b.t_init)} {_fmt(hp.cop)} {_fmt(hp.p_max)} {_fmt(hp.power_factor)}"
        )
    bus_cols = " ".join(f"bus{b}" for b in fleet.load_buses)
    for name in ("base_p", "base_q", "pv"):
        out += [f"[profile {name}]", "step " + bus_cols]
        arr = getattr(fleet, name)
        out += [f"{t} " + " ".join(_fmt(v) for v in arr[t]) for t in range(fleet.steps)]
    bld_cols = " ".join(f"b{i}" for i in range(len(fleet.buildings)))
    for name in ("outdoor_temp", "comfort_lo", "comfort_hi"):
        out += [f"[building {name}]", "step " + bld_cols]
        for t in range(fleet.steps):
            vals = [_fmt(getattr(b, name)[t]) for b, _ in fleet.buildings]
            out.append(" ".join([str(t)] + vals))
    return "\n".join(out) + "\n"


def parse_fleet(text: str) -> DeviceFleet:
    rows = [ln.strip() for ln in text.splitlines()]
    if not rows or rows[0] != _FLEET_MAGIC:
        raise ValueError("not an nnopf fleet file")
    header: dict[str, list[str]] = {}
    sections: dict[str, list[list[str]]] = {}
    current = None
    skip = False
    for ln in rows[1:]:
        if not ln or ln.startswith("#"):
            continue
        if ln.startswith("["):
            current = ln.strip("[]")
            sections[current] = []
            skip = True
            continue
        if skip:
            skip = False
            continue
        tok = ln.split()
        if current is None:
            header[tok[0]] = tok[1:]
        else:
            sections[current].append(tok)

    steps = int(header["steps"][0])
    dt = float(header["dt"][0])
    load_buses = tuple(int(b) for b in header["load_buses"])

    def matrix(name, width):
        data = sections.get(name, [])
        arr = np.array([[float(v) for v in row[1:]] for row in data], dtype=float)
        return arr.reshape(steps, width)

    evs = tuple(
        EvSpec(
            int(r[0]), int(r[1]), int(r[2]), float(r[3]), float(r[4]), float(r[5]),
            float(r[6]), float(r[7]), float(r[8]),
        )
        for r in sections.get("evs", [])
    )
    brows = sections.get("buildings", [])
    nb = len(brows)
    temps = {k: matrix(f"building {k}", nb) for k in ("outdoor_temp", "comfort_lo", "comfort_hi")}
    buildings = []
    for i, r in enumerate(brows):
        spec = BuildingSpec(
            bus=int(r[0]),
            thermal_resistance=float(r[1]),
            thermal_capacitance=float(r[2]),
            t_init=float(r[3]),
            comfort_lo=tuple(temps["comfort_lo"][:, i].tolist()),
            comfort_hi=tuple(temps["comfort_hi"][:, i].tolist()),
            outdoor_temp=tuple(temps["outdoor_temp"][:, i].tolist()),
        )
        buildings.append((spec, HpSpec(float(r[4]), float(r[5]), float(r[6]))))
    n = len(load_buses)
    return DeviceFleet(
        load_buses=load_buses,
        evs=evs,
        buildings=tuple(buildings),
        pv=matrix("profile pv", n),
        base_p=matrix("profile base_p", n),
        base_q=matrix("profile base_q", n),
        dt=dt,
    )


def save_fleet(fleet: DeviceFleet, path) -> None:
    Path(path).write_text(format_fleet(fleet))


def load_fleet(path) -> DeviceFleet:
    return parse_fleet(Path(path).read_text())


def fleet_equal(a: DeviceFleet, b: DeviceFleet) -> bool:
    return (
        a.load_buses == b.load_buses
        and a.evs == b.evs
        and a.buildings == b.buildings
        and a.dt == b.dt
        and all(np.array_equal(getattr(a, k), getattr(b, k)) for k in ("pv", "base_p", "base_q"))
    )

