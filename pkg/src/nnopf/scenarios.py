"""Supervised dataset generation: net injections -> bus voltage magnitudes."""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .devices import DeviceFleet
from .errors import EmptySplit, NotConverged, NumericalFailure, TooManyDivergences
from .grid import Network, run_power_flow

MAX_DIVERGENCE_SHARE = 0.05
_SPLIT_STREAM = 2**31 - 1


class ConstantColumnWarning(UserWarning):
    """A normalization column had zero spread and got sigma = 1."""


@dataclass(frozen=True)
class ScenarioConfig:
    n_samples: int = 5000
    load_scale_range: tuple[float, float] = (0.0, 1.3)
    pv_scale_range: tuple[float, float] = (0.0, 1.0)
    ev_scale_range: tuple[float, float] = (0.0, 1.0)
    hp_scale_range: tuple[float, float] = (0.0, 1.0)
    power_factor_range: tuple[float, float] = (0.1, 0.35)  # load Q/P ratio
    bus_spread: float = 0.5  # per-bus jitter around the common draw, fraction of the range
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        for name in (
            "load_scale_range",
            "pv_scale_range",
            "ev_scale_range",
            "hp_scale_range",
            "power_factor_range",
        ):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"{name} must be a finite interval with lo <= hi")
        if not 0.0 <= self.bus_spread <= 1.0:
            raise ValueError("bus_spread must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        for k, v in d.items():
            if k.endswith("_range"):
                d[k] = tuple(float(x) for x in v)
        return cls(**d)


@dataclass
class Dataset:
    inputs: np.ndarray  # (n, 2N): P_1..P_N, Q_1..Q_N in p.u.
    targets_full: np.ndarray  # (n, N) load-bus voltage magnitudes, p.u.
    targets_min: np.ndarray  # (n,)
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    load_buses: tuple[int, ...] = ()
    failures: int = 0
    config: ScenarioConfig | None = None

    @property
    def n_load(self) -> int:
        return self.targets_full.shape[1]

    def split(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def targets(self, variant: str = "full") -> np.ndarray:
        if variant == "full":
            return self.targets_full
        if variant == "min":
            return self.targets_min[:, None]
        raise ValueError(f"unknown target variant {variant!r}")


@dataclass
class NormStats:
    mu_x: np.ndarray
    sigma_x: np.ndarray
    mu_y: np.ndarray
    sigma_y: np.ndarray
    constant_x: list[int] = field(default_factory=list)
    constant_y: list[int] = field(default_factory=list)

    def normalize_x(self, x):
        return (np.asarray(x, dtype=float) - self.mu_x) / self.sigma_x

    def denormalize_x(self, xn):
        return np.asarray(xn, dtype=float) * self.sigma_x + self.mu_x

    def normalize_y(self, y):
        return (np.asarray(y, dtype=float) - self.mu_y) / self.sigma_y

    def denormalize_y(self, yn):
        return np.asarray(yn, dtype=float) * self.sigma_y + self.mu_y

    def to_dict(self) -> dict:
        return {
            "mu_x": self.mu_x.tolist(),
            "sigma_x": self.sigma_x.tolist(),
            "mu_y": self.mu_y.tolist(),
            "sigma_y": self.sigma_y.tolist(),
            "constant_x": list(self.constant_x),
            "constant_y": list(self.constant_y),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            np.asarray(d["mu_x"], dtype=float),
            np.asarray(d["sigma_x"], dtype=float),
            np.asarray(d["mu_y"], dtype=float),
            np.asarray(d["sigma_y"], dtype=float),
            list(d.get("constant_x", [])),
            list(d.get("constant_y", [])),
        )


def injection_ratings(net: Network, fleet: DeviceFleet) -> dict[str, np.ndarray]:
    """Per-bus maxima (kW) that the scale factors multiply."""
    fleet.check(net)
    return {
        "load": fleet.base_p.max(axis=0),
        "pv": fleet.pv.max(axis=0),
        "ev": fleet.ev_rating(),
        "hp": fleet.hp_rating(),
    }


def _draw_scales(rng, rng_range, n, spread):
    lo, hi = rng_range
    common = rng.uniform(lo, hi)
    jitter = (rng.uniform(size=n) - 0.5) * spread * (hi - lo)
    return np.clip(common + jitter, lo, hi)


def sample_injections(rng, ratings, config: ScenarioConfig, s_base_kw: float):
    n = len(ratings["load"])
    ls = _draw_scales(rng, config.load_scale_range, n, config.bus_spread)
    ps = _draw_scales(rng, config.pv_scale_range, n, config.bus_spread)
    es = _draw_scales(rng, config.ev_scale_range, n, config.bus_spread)
    hs = _draw_scales(rng, config.hp_scale_range, n, config.bus_spread)
    qr = rng.uniform(*config.power_factor_range, size=n)
    load = ls * ratings["load"]
    p = load - ps * ratings["pv"] + es * ratings["ev"] + hs * ratings["hp"]
    q = load * qr
    return p / s_base_kw, q / s_base_kw


def _generate_row(net, ratings, config, index):
    rng = np.random.default_rng([config.seed, index])
    p, q = sample_injections(rng, ratings, config, net.s_base_kw)
    try:
        res = run_power_flow(net, p, q)
    except (NotConverged, NumericalFailure):
        return None
    return np.concatenate([p, q]), res.load_bus_voltages(net)


def _generate_block(args):
    net, ratings, config, indices = args
    return [_generate_row(net, ratings, config, i) for i in indices]


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shuffled 80/10/10 split."""
    perm = np.random.default_rng([seed, _SPLIT_STREAM]).permutation(n)
    n_train = max(1, int(round(0.8 * n)))
    n_val = min(int(round(0.1 * n)), n - n_train)
    return (
        np.sort(perm[:n_train]),
        np.sort(perm[n_train : n_train + n_val]),
        np.sort(perm[n_train + n_val :]),
    )


def generate_dataset(
    net: Network, fleet: DeviceFleet, config: ScenarioConfig, workers: int = 1
) -> Dataset:
    """Sample operating points and run power flow on each.

    Row ``i`` draws from its own generator seeded by ``(config.seed, i)``, so
    the result does not depend on ``workers``. Diverging draws are skipped.
    """
    ratings = injection_ratings(net, fleet)
    rows: list[tuple[np.ndarray, np.ndarray]] = []
    failures = 0
    next_index = 0
    max_draws = int(math.ceil(config.n_samples / (1 - MAX_DIVERGENCE_SHARE))) + 1
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while len(rows) < config.n_samples:
            need = config.n_samples - len(rows)
            indices = list(range(next_index, next_index + need))
            next_index += need
            if pool is None:
                out = _generate_block((net, ratings, config, indices))
            else:
                chunks = [indices[k::workers] for k in range(workers)]
                parts = list(pool.map(_generate_block, [(net, ratings, config, c) for c in chunks]))
                by_index = {}
                for c, part in zip(chunks, parts):
                    by_index.update(zip(c, part))
                out = [by_index[i] for i in indices]
            for item in out:
                if item is None:
                    failures += 1
                else:
                    rows.append(item)
            if failures > MAX_DIVERGENCE_SHARE * next_index and next_index >= max_draws:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    if failures > MAX_DIVERGENCE_SHARE * next_index:
        raise TooManyDivergences(f"{failures} of {next_index} draws failed to converge")

    inputs = np.array([r[0] for r in rows])
    targets = np.array([r[1] for r in rows])
    train, val, test = split_indices(len(rows), config.seed)
    return Dataset(
        inputs=inputs,
        targets_full=targets,
        targets_min=targets.min(axis=1),
        train=train,
        val=val,
        test=test,
        load_buses=tuple(net.load_buses),
        failures=failures,
        config=config,
    )


def _column_stats(a: np.ndarray, label: str) -> tuple[np.ndarray, np.ndarray, list[int]]:
    mu = a.mean(axis=0)
    sigma = a.std(axis=0)  # population convention
    const = [int(i) for i in np.flatnonzero(sigma <= 1e-12)]
    if const:
        warnings.warn(
            f"constant {label} columns {const}: sigma set to 1", ConstantColumnWarning, stacklevel=3
        )
        sigma = sigma.copy()
        sigma[const] = 1.0
    return mu, sigma, const


def compute_norm_stats(dataset: Dataset, variant: str = "full") -> NormStats:
    """Column means and population standard deviations over the training split."""
    if len(dataset.train) == 0:
        raise EmptySplit("training split is empty")
    x = dataset.inputs[dataset.train]
    y = dataset.targets(variant)[dataset.train]
    mu_x, sd_x, cx = _column_stats(x, "input")
    mu_y, sd_y, cy = _column_stats(y, "target")
    return NormStats(mu_x, sd_x, mu_y, sd_y, cx, cy)


def min_voltage_targets(dataset: Dataset) -> tuple[Dataset, NormStats]:
    """Single-output view of ``dataset`` with its own normalization statistics."""
    view = Dataset(
        inputs=dataset.inputs,
        targets_full=dataset.targets_min[:, None].copy(),
        targets_min=dataset.targets_min,
        train=dataset.train,
        val=dataset.val,
        test=dataset.test,
        load_buses=dataset.load_buses,
        failures=dataset.failures,
        config=dataset.config,
    )
    return view, compute_norm_stats(view, "full")


# --- persistence -----------------------------------------------------------

INPUTS_CSV = "inputs.csv"
TARGETS_CSV = "targets.csv"
SIDECAR_JSON = "dataset.json"


def input_header(load_buses) -> list[str]:
    return [f"P_{b}" for b in load_buses] + [f"Q_{b}" for b in load_buses]


def target_header(load_buses) -> list[str]:
    return [f"V_{b}" for b in load_buses] + ["V_min"]


def save_dataset(dataset: Dataset, directory, extra: dict | None = None) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lb = dataset.load_buses
    paths = [d / INPUTS_CSV, d / TARGETS_CSV, d / SIDECAR_JSON]
    np.savetxt(paths[0], dataset.inputs, fmt="%.17g", delimiter=",",
               header=",".join(input_header(lb)), comments="")
    tgt = np.column_stack([dataset.targets_full, dataset.targets_min])
    np.savetxt(paths[1], tgt, fmt="%.17g", delimiter=",",
               header=",".join(target_header(lb)), comments="")
    meta = {
        "load_buses": list(lb),
        "n_samples": int(len(dataset.inputs)),
        "failures": dataset.failures,
        "split": {k: getattr(dataset, k).tolist() for k in ("train", "val", "test")},
        "config": asdict(dataset.config) if dataset.config else None,
        "norm_stats": {
            "full": compute_norm_stats(dataset, "full").to_dict(),
            "min": compute_norm_stats(dataset, "min").to_dict(),
        },
    }
    if extra:
        meta.update(extra)
    paths[2].write_text(json.dumps(meta, indent=1))
    return paths


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    meta = json.loads((d / SIDECAR_JSON).read_text())
    inputs = np.loadtxt(d / INPUTS_CSV, delimiter=",", skiprows=1, ndmin=2)
    tgt = np.loadtxt(d / TARGETS_CSV, delimiter=",", skiprows=1, ndmin=2)
    cfg = meta.get("config")
    return Dataset(
        inputs=inputs,
        targets_full=tgt[:, :-1],
        targets_min=tgt[:, -1],
        train=np.asarray(meta["split"]["train"], dtype=int),
        val=np.asarray(meta["split"]["val"], dtype=int),
        test=np.asarray(meta["split"]["test"], dtype=int),
        load_buses=tuple(meta["load_buses"]),
        failures=int(meta.get("failures", 0)),
        config=ScenarioConfig.from_dict(cfg) if cfg else None,
    )
