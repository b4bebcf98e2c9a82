"""Command-line pipeline: bundle -> dataset -> surrogate -> OPF solve -> AC validation.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .devices import day_ahead_prices, load_fleet, save_fleet, synthesize_fleet
from .errors import (
    Infeasible,
    InfeasibleWindow,
    LimitReached,
    NnopfError,
    OrderingMismatch,
    TooManyBinaries,
)
from .grid import load_network, save_network, synthesize_feeder
from .milp import enumerate_patterns
from .opf import (
    FULL,
    MIN_VOLTAGE,
    MIN_VOLTAGE_HEADER,
    SWEEP_HEADER,
    VALIDATION_HEADER,
    OpfConfig,
    build_lindistflow_opf,
    build_nn_opf,
    load_solution,
    save_min_voltage_csv,
    save_solution,
    save_sweep_csv,
    save_validation_csv,
    solve_opf,
    summary_dict,
    sweep_neurons,
    validate_solution,
)
from .scenarios import (
    INPUTS_CSV,
    TARGETS_CSV,
    ScenarioConfig,
    compute_norm_stats,
    generate_dataset,
    input_header,
    load_dataset,
    min_voltage_targets,
    save_dataset,
    target_header,
)
from .surrogate import (
    TrainConfig,
    evaluate,
    evaluate_min_voltage,
    load_surrogate,
    save_surrogate,
    train,
)

NETWORK_FILE = "network.txt"
FLEET_FILE = "fleet.txt"
PRICES_FILE = "prices.csv"
CONFIG_FILE = "config.json"
SURROGATE_FILE = "surrogate.json"
MANIFEST_FILE = "manifest.json"
PRICES_HEADER = ["step", "price"]


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _usage(msg: str) -> CliError:
    return CliError(2, msg)


def _runtime(msg: str) -> CliError:
    return CliError(3, msg)


# --- files ------------------------------------------------------------------


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: str, args: argparse.Namespace, inputs, outputs, seeds: dict) -> Path:
    """One manifest per output directory, digests of every input and output file."""
    doc = {
        "command": command,
        "arguments": {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
                      if k != "func"},
        "seeds": seeds,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {Path(p).name: sha256(p) for p in outputs},
        "tool_version": __version__,
    }
    path = out / MANIFEST_FILE
    path.write_text(json.dumps(doc, indent=1, sort_keys=True))
    return path


def _need(path: Path) -> Path:
    if not path.exists():
        raise _usage(f"missing file: {path}")
    return path


def save_prices(path, prices) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PRICES_HEADER)
        for t, c in enumerate(prices):
            w.writerow([t, repr(float(c))])


def load_prices(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != PRICES_HEADER:
        raise _usage(f"{path}: header must be {','.join(PRICES_HEADER)}")
    return np.array([float(r[1]) for r in rows[1:]])


def load_bundle(bundle: Path):
    """(network, fleet, opf config, scenario config) from a bundle directory."""
    if not bundle.is_dir():
        raise _usage(f"bundle directory not found: {bundle}")
    try:
        net = load_network(_need(bundle / NETWORK_FILE))
        fleet = load_fleet(_need(bundle / FLEET_FILE))
        cfg = json.loads(_need(bundle / CONFIG_FILE).read_text())
        prices = load_prices(_need(bundle / PRICES_FILE))
        opf_cfg = OpfConfig.from_dict({**cfg.get("opf", {}), "prices": tuple(prices)})
        scen = ScenarioConfig.from_dict(cfg.get("scenario", {}))
    except CliError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise _usage(f"invalid bundle {bundle}: {exc}") from exc
    return net, fleet, opf_cfg, scen


def bundle_inputs(bundle: Path) -> list[Path]:
    return [bundle / f for f in (NETWORK_FILE, FLEET_FILE, PRICES_FILE, CONFIG_FILE)]


# --- CSV schemas ------------------------------------------------------------

FIXED_SCHEMAS = {
    PRICES_FILE: PRICES_HEADER,
    "validation.csv": VALIDATION_HEADER,
    "min_voltage.csv": MIN_VOLTAGE_HEADER,
    "sweep.csv": SWEEP_HEADER,
}


def expected_header(path: Path) -> list[str] | None:
    name = path.name
    if name in FIXED_SCHEMAS:
        return FIXED_SCHEMAS[name]
    if name in (INPUTS_CSV, TARGETS_CSV):
        meta = path.parent / "dataset.json"
        if not meta.exists():
            return None
        buses = json.loads(meta.read_text())["load_buses"]
        return input_header(buses) if name == INPUTS_CSV else target_header(buses)
    return None


def check_csv(path) -> list[str]:
    """Problems with a numeric output CSV (empty list when it matches its schema)."""
    path = Path(path)
    want = expected_header(path)
    if want is None:
        return [f"{path}: no documented schema for this file name"]
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return [f"{path}: empty file"]
    problems = []
    if rows[0] != want:
        problems.append(f"{path}: header {rows[0]} differs from {want}")
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(want):
            problems.append(f"{path}:{i}: expected {len(want)} fields, got {len(row)}")
            continue
        for cell in row:
            if cell == "":
                continue
            try:
                float(cell)
            except ValueError:
                problems.append(f"{path}:{i}: non-numeric value {cell!r}")
                break
    return problems


# --- commands ---------------------------------------------------------------


def cmd_make_bundle(args) -> int:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    seed = 0 if args.seed is None else args.seed
    try:
        net = synthesize_feeder(seed, n_buses=args.buses)
        fleet = synthesize_fleet(net, seed, steps=args.steps, dt=args.dt, ev_penetration=args.ev,
                                 hp_penetration=args.hp, pv_penetration=args.pv,
                                 start_hour=args.start_hour)
        opf_cfg = OpfConfig(horizon=args.steps, dt=args.dt, v_lo=args.v_lo, bound_tightening=args.tighten)
        scen = ScenarioConfig(n_samples=args.samples, seed=seed)
    except ValueError as exc:
        raise _usage(str(exc)) from exc
    save_network(net, out / NETWORK_FILE)
    save_fleet(fleet, out / FLEET_FILE)
    prices = day_ahead_prices(args.steps, args.dt, args.start_hour)
    save_prices(out / PRICES_FILE, prices)
    opf_doc = opf_cfg.to_dict()
    opf_doc.pop("prices")
    (out / CONFIG_FILE).write_text(json.dumps({"opf": opf_doc, "scenario": asdict(scen)}, indent=1))
    outputs = bundle_inputs(out)
    write_manifest(out, "make-bundle", args, [], outputs, {"feeder": seed, "fleet": seed, "scenario": seed})
    print(f"bundle written to {out}: {net.n_buses} buses, {len(fleet.evs)} EVs, "
          f"{len(fleet.buildings)} heat pumps, {args.steps} steps")
    return 0


def cmd_gen_data(args) -> int:
    net, fleet, _, scen = load_bundle(args.bundle)
    if args.samples is not None:
        scen = replace(scen, n_samples=args.samples)
    if args.seed is not None:
        scen = replace(scen, seed=args.seed)
    try:
        ds = generate_dataset(net, fleet, scen, workers=args.threads)
    except ValueError as exc:
        raise _usage(str(exc)) from exc
    except NnopfError as exc:
        raise _runtime(f"data generation failed: {exc}") from exc
    args.out.mkdir(parents=True, exist_ok=True)
    paths = save_dataset(ds, args.out)
    write_manifest(args.out, "gen-data", args, bundle_inputs(args.bundle), paths, {"scenario": scen.seed})
    print(f"{len(ds.inputs)} samples ({ds.failures} diverged draws skipped), "
          f"min voltage {ds.targets_min.min():.4f} p.u.")
    return 0


def _metrics_table(report: dict) -> str:
    lines = [f"{'target':<12}{'RMSE':>12}{'MAE':>12}{'Max Error':>12}{'MAPE':>12}{'R2':>12}"]
    for name, m in report.items():
        lines.append(f"{name:<12}{m['RMSE']:>12.6f}{m['MAE']:>12.6f}{m['Max Error']:>12.6f}"
                     f"{m['MAPE']:>12.5f}{m['R2']:>12.6f}")
    return "\n".join(lines)


def cmd_train(args) -> int:
    if args.hidden < 1:
        raise _usage(f"--hidden must be a positive width, got {args.hidden}")
    data_dir = args.data
    _need(data_dir / INPUTS_CSV)
    ds = load_dataset(data_dir)
    try:
        cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch,
                          seed=0 if args.seed is None else args.seed)
    except ValueError as exc:
        raise _usage(str(exc)) from exc
    try:
        if args.variant == "full":
            stats = compute_norm_stats(ds, "full")
            params = train(ds, stats, args.hidden, cfg, "full")
            report = {
                "full": evaluate(params, stats, ds, "test", "full").as_dict(),
                "min_voltage": evaluate_min_voltage(params, stats, ds, "test").as_dict(),
            }
        else:
            view, stats = min_voltage_targets(ds)
            params = train(view, stats, args.hidden, cfg, "full")
            report = {"min_voltage": evaluate(params, stats, view, "test", "full").as_dict()}
    except NnopfError as exc:
        raise _runtime(f"training failed: {exc}") from exc
    args.out.mkdir(parents=True, exist_ok=True)
    sur = args.out / SURROGATE_FILE
    save_surrogate(sur, params, stats, args.variant, ds.load_buses)
    met = args.out / "metrics.json"
    met.write_text(json.dumps({"hidden": args.hidden, "variant": args.variant, "test": report}, indent=1))
    write_manifest(args.out, "train", args, [data_dir / INPUTS_CSV, data_dir / TARGETS_CSV],
                   [sur, met], {"train": cfg.seed, "split": ds.config.seed if ds.config else None})
    print(_metrics_table(report))
    return 0


def _load_surrogate_for(path: Path, variant: str):
    _need(path)
    params, stats, stored, buses = load_surrogate(path)
    want = "full" if variant == FULL else "min"
    if stored != want:
        raise _usage(f"{path} holds a {stored!r} surrogate but the model needs {want!r}")
    return params, stats, buses


def cmd_solve(args) -> int:
    net, fleet, cfg, _ = load_bundle(args.bundle)
    variant = FULL if args.model == 1 else MIN_VOLTAGE
    try:
        cfg = replace(cfg, model_variant=variant, big_m_policy=args.policy,
                      gap_tol=cfg.gap_tol if args.gap is None else args.gap,
                      node_limit=args.node_limit, time_limit=args.time_limit,
                      heuristic=args.heuristic,
                      bound_tightening=cfg.bound_tightening if args.tighten is None else args.tighten)
    except ValueError as exc:
        raise _usage(str(exc)) from exc
    inputs = bundle_inputs(args.bundle)
    try:
        if args.baseline == "lindistflow":
            model = build_lindistflow_opf(net, fleet, cfg)
        else:
            sur = args.surrogate or args.bundle / SURROGATE_FILE
            params, stats, buses = _load_surrogate_for(sur, variant)
            inputs.append(sur)
            model = build_nn_opf(net, fleet, params, stats, cfg, buses)
        sol = solve_opf(model)
        report = validate_solution(net, fleet, sol, cfg)
    except (OrderingMismatch, InfeasibleWindow, ValueError) as exc:
        raise _usage(str(exc)) from exc
    except (Infeasible, LimitReached) as exc:
        raise _runtime(f"solve failed: {exc}") from exc
    except NnopfError as exc:
        raise _runtime(str(exc)) from exc

    summary = summary_dict(sol, report)
    if args.oracle:
        if model.kind != "nn":
            raise _usage("--oracle needs a surrogate model")
        try:
            orc = enumerate_patterns(model.instance, [b.delta_vars for b in model.blocks])
        except TooManyBinaries as exc:
            raise _usage(str(exc)) from exc
        except Infeasible as exc:
            raise _runtime(f"oracle found no feasible pattern: {exc}") from exc
        diff = abs(sol.objective - orc.objective)
        agree = diff <= 1e-6 * max(1.0, abs(orc.objective)) + cfg.gap_tol * max(1.0, abs(sol.objective))
        summary["oracle objective"] = orc.objective
        summary["oracle agrees"] = bool(agree)
        print(f"oracle: solver {sol.objective:.9g} enumeration {orc.objective:.9g} "
              f"|diff| {diff:.3g} over {orc.patterns} patterns -> {'AGREE' if agree else 'DISAGREE'}")

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "solution.json", out / "validation.csv", out / "min_voltage.csv", out / "summary.json"]
    save_solution(paths[0], sol)
    save_validation_csv(paths[1], net, report)
    save_min_voltage_csv(paths[2], report, cfg, net)
    paths[3].write_text(json.dumps(summary, indent=1))
    write_manifest(out, "solve", args, inputs, paths, {})
    print(f"{summary['model']}: objective {sol.objective:.6f}, gap {sol.gap:.3g}, nodes {sol.nodes}, "
          f"max AC deviation {report.max_deviation:.6f} p.u., violations {len(report.violations)}")
    return 0


def cmd_validate(args) -> int:
    net, fleet, cfg, _ = load_bundle(args.bundle)
    sol_path = _need(args.solution)
    try:
        sol = load_solution(sol_path)
        cfg = replace(cfg, model_variant=sol.variant)
        report = validate_solution(net, fleet, sol, cfg)
    except (ValueError, KeyError, TypeError) as exc:
        raise _usage(f"invalid solution {sol_path}: {exc}") from exc
    except NnopfError as exc:
        raise _runtime(str(exc)) from exc
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "validation.csv", out / "min_voltage.csv", out / "summary.json"]
    save_validation_csv(paths[0], net, report)
    save_min_voltage_csv(paths[1], report, cfg, net)
    paths[2].write_text(json.dumps(summary_dict(sol, report), indent=1))
    write_manifest(out, "validate", args, bundle_inputs(args.bundle) + [sol_path], paths, {})
    print(f"max AC deviation {report.max_deviation:.6f} p.u., min AC voltage {report.min_ac_voltage:.5f}, "
          f"violations {len(report.violations)}")
    return 0


def _parse_widths(text: str) -> list[int]:
    try:
        widths = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise _usage(f"--hidden must be a comma separated list of integers: {text!r}") from exc
    if not widths:
        raise _usage("--hidden must list at least one width")
    if any(h < 1 for h in widths):
        raise _usage("hidden widths must be positive")
    return widths


def cmd_sweep(args) -> int:
    widths = _parse_widths(args.hidden)
    net, fleet, cfg, _ = load_bundle(args.bundle)
    _need(args.data / INPUTS_CSV)
    ds = load_dataset(args.data)
    try:
        cfg = replace(cfg, model_variant=FULL if args.model == 1 else MIN_VOLTAGE,
                      node_limit=args.node_limit, time_limit=args.time_limit,
                      bound_tightening=cfg.bound_tightening if args.tighten is None else args.tighten)
        tcfg = TrainConfig(epochs=args.epochs, seed=0 if args.seed is None else args.seed)
        rows = sweep_neurons(ds, net, fleet, cfg, widths, tcfg)
    except (ValueError, OrderingMismatch) as exc:
        raise _usage(str(exc)) from exc
    except NnopfError as exc:
        raise _runtime(f"sweep failed: {exc}") from exc
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "sweep.csv"
    save_sweep_csv(path, rows)
    write_manifest(args.out, "sweep", args, bundle_inputs(args.bundle) + [args.data / INPUTS_CSV],
                   [path], {"train": tcfg.seed})
    print(f"{'hidden':>6}{'test RMSE':>12}{'nodes':>8}{'seconds':>10}{'objective':>12}")
    for r in rows:
        print(f"{r.hidden:>6}{r.test_rmse:>12.6f}{r.nodes:>8}{r.solve_seconds:>10.2f}{r.objective:>12.4f}")
    return 0


def cmd_check(args) -> int:
    problems = []
    for p in args.files:
        if not p.exists():
            raise _usage(f"missing file: {p}")
        problems.extend(check_csv(p))
    for msg in problems:
        print(msg, file=sys.stderr)
    if problems:
        return 3
    print(f"{len(args.files)} file(s) match their schemas")
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed override (default: from config, else 0)")
    common.add_argument("--threads", type=int, default=1, help="worker processes (default 1, reproducible)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")

    p = argparse.ArgumentParser(prog="nnopf", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"nnopf {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("make-bundle", parents=[common], help="write a synthetic scenario bundle")
    s.add_argument("--buses", type=int, default=10)
    s.add_argument("--steps", type=int, default=96)
    s.add_argument("--dt", type=float, default=0.25)
    s.add_argument("--start-hour", type=float, default=0.0)
    s.add_argument("--ev", type=float, default=0.3)
    s.add_argument("--hp", type=float, default=0.3)
    s.add_argument("--pv", type=float, default=0.5)
    s.add_argument("--v-lo", type=float, default=0.95)
    s.add_argument("--samples", type=int, default=5000)
    s.add_argument("--tighten", type=int, default=0, help="rounds of LP-based neuron bound tightening")
    s.set_defaults(func=cmd_make_bundle)

    s = sub.add_parser("gen-data", parents=[common], help="sample operating points and run power flow")
    s.add_argument("--bundle", type=Path, required=True)
    s.add_argument("--samples", type=int, default=None)
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train", parents=[common], help="train a voltage surrogate")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--hidden", type=int, required=True)
    s.add_argument("--variant", choices=("full", "min"), default="full")
    s.add_argument("--epochs", type=int, default=500)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch", type=int, default=256)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("solve", parents=[common], help="solve the NN-OPF or the LinDistFlow baseline")
    s.add_argument("--bundle", type=Path, required=True)
    s.add_argument("--surrogate", type=Path, default=None)
    s.add_argument("--model", type=int, choices=(1, 2), default=1)
    s.add_argument("--baseline", choices=("lindistflow",), default=None)
    s.add_argument("--gap", type=float, default=None)
    s.add_argument("--policy", choices=("tightened", "fixed_1000"), default="tightened")
    s.add_argument("--node-limit", type=int, default=None)
    s.add_argument("--time-limit", type=float, default=None)
    s.add_argument("--tighten", type=int, default=None, help="override the bundle's tightening rounds")
    s.add_argument("--heuristic", action="store_true", help="try activation-pattern incumbents at the root")
    s.add_argument("--oracle", action="store_true", help="cross-check against pattern enumeration")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", parents=[common], help="hidden-width sensitivity table")
    s.add_argument("--bundle", type=Path, required=True)
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--hidden", type=str, required=True, help="comma separated widths, e.g. 5,10,20")
    s.add_argument("--model", type=int, choices=(1, 2), default=1)
    s.add_argument("--epochs", type=int, default=500)
    s.add_argument("--tighten", type=int, default=None)
    s.add_argument("--node-limit", type=int, default=None)
    s.add_argument("--time-limit", type=float, default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("validate", parents=[common], help="AC power flow check of a saved solution")
    s.add_argument("--bundle", type=Path, required=True)
    s.add_argument("--solution", type=Path, required=True)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("check", parents=[common], help="verify CSV outputs against their schemas")
    s.add_argument("files", type=Path, nargs="+")
    s.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
