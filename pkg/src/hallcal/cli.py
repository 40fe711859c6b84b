"""Command-line front end: generate scenarios, run one-shot solves,
calibrate by any of the three methods, and run the data-volume study.

Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 solver
failure. One --seed flag fans out to every component seed.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fileio
from .engine import (
    CalibConfig,
    CalibrationResult,
    KnowledgeSurrogateModel,
    VanillaSurrogateModel,
    calibrate,
    mae,
)
from .errors import (
    CalibrationAbortedError,
    CommandFailedError,
    HallcalError,
    InvalidInputError,
    NoConvergenceError,
    ParseError,
    SolverTimeoutError,
    UnknownMethodError,
)
from .hall import build_adjacency
from .optim import AdamConfig, Bounds, DeConfig, EsConfig, TrainConfig, cmaes_1p1
from .scenarios import _operating_state, _per_type_alpha, make_grid_layout
from .solver import ExternalSolver, ExternalSolverSpec, Scenario, ZonalSolver, synthesize_measurements
from .study import run_datavolume_study
from .surrogate import PenaltyParams

METHOD_KALIBRE = "kalibre"
METHOD_VANILLA = "vanilla"
METHOD_HEURISTIC = "heuristic"

SOLVER_EXIT_ERRORS = (NoConvergenceError, CommandFailedError, SolverTimeoutError,
                      CalibrationAbortedError, InvalidInputError)


@dataclass(frozen=True)
class RunSettings:
    """Everything a calibration run needs beyond the input files."""

    calib: CalibConfig = field(default_factory=CalibConfig)
    cut_threshold: float = 0.01
    es: EsConfig = field(default_factory=lambda: EsConfig(max_evals=18))
    mlp_learning_rate: float = 0.01


def _settings_from_doc(doc: dict, path) -> RunSettings:
    """Build RunSettings from a JSON config document; unknown keys error."""
    def sub(cls, key, **extra):
        payload = dict(doc.get(key, {}))
        payload.update(extra)
        try:
            return cls(**payload)
        except TypeError as exc:
            raise ParseError(f"{path}: bad {key} section ({exc})") from exc

    known = {"bounds", "max_iterations", "augment_batch", "input_noise_frac",
             "target_noise_sd", "penalty", "train", "de", "adam", "use_de",
             "seed", "cut_threshold", "es", "mlp_learning_rate"}
    unknown = set(doc) - known
    if unknown:
        raise ParseError(f"{path}: unknown config fields {sorted(unknown)}")

    bounds = doc.get("bounds", [0.01, 3.0])
    if not (isinstance(bounds, (list, tuple)) and len(bounds) == 2):
        raise ParseError(f"{path}: bounds must be [lower, upper]")
    calib = CalibConfig(
        bounds=Bounds(float(bounds[0]), float(bounds[1])),
        max_iterations=int(doc.get("max_iterations", 15)),
        augment_batch=int(doc.get("augment_batch", 16)),
        input_noise_frac=float(doc.get("input_noise_frac", 0.01)),
        target_noise_sd=float(doc.get("target_noise_sd", 0.1)),
        penalty=sub(PenaltyParams, "penalty"),
        train=sub(TrainConfig, "train"),
        de=sub(DeConfig, "de"),
        adam=sub(AdamConfig, "adam"),
        use_de=bool(doc.get("use_de", True)),
        seed=int(doc.get("seed", 0)),
    )
    return RunSettings(
        calib=calib,
        cut_threshold=float(doc.get("cut_threshold", 0.01)),
        es=sub(EsConfig, "es", max_evals=int(doc.get("es", {}).get("max_evals", 18))),
        mlp_learning_rate=float(doc.get("mlp_learning_rate", 0.01)),
    )


def load_settings(config_path, iters=None, seed=None) -> RunSettings:
    doc = fileio._load_json(config_path) if config_path else {}
    if not isinstance(doc, dict):
        raise ParseError(f"{config_path}: config must be a JSON object")
    settings = _settings_from_doc(doc, config_path or "<defaults>")
    calib = settings.calib
    if iters is not None:
        calib = replace(calib, max_iterations=iters)
    if seed is not None:
        calib = replace(calib, seed=seed)
        settings = replace(settings, es=replace(settings.es, seed=seed))
    if settings.es.max_evals == 18 and iters is not None:
        settings = replace(settings, es=replace(settings.es, max_evals=3 + iters))
    return replace(settings, calib=calib)


def settings_echo(settings: RunSettings) -> dict:
    c = settings.calib
    return {
        "bounds": [c.bounds.lower, c.bounds.upper],
        "max_iterations": c.max_iterations,
        "augment_batch": c.augment_batch,
        "input_noise_frac": c.input_noise_frac,
        "target_noise_sd": c.target_noise_sd,
        "penalty": {"dt_low": c.penalty.dt_low, "dt_high": c.penalty.dt_high,
                    "lam": c.penalty.lam, "kappa": c.penalty.kappa},
        "train": {"epochs": c.train.epochs, "learning_rate": c.train.learning_rate,
                  "decay": c.train.decay, "decay_every": c.train.decay_every},
        "de": {"population_size": c.de.population_size, "crossover_rate": c.de.crossover_rate,
               "max_iterations": c.de.max_iterations,
               "differential_weight": c.de.differential_weight, "seed": c.de.seed},
        "adam": {"learning_rate": c.adam.learning_rate, "steps": c.adam.steps,
                 "beta1": c.adam.beta1, "beta2": c.adam.beta2, "eps": c.adam.eps},
        "use_de": c.use_de,
        "seed": c.seed,
        "cut_threshold": settings.cut_threshold,
        "es": {"sigma0": settings.es.sigma0, "adapt_every": settings.es.adapt_every,
               "adapt_factor": settings.es.adapt_factor, "max_evals": settings.es.max_evals,
               "seed": settings.es.seed},
        "mlp_learning_rate": settings.mlp_learning_rate,
    }


# -- commands -----------------------------------------------------------------


def cmd_generate(out_dir, seed=0, n_cracs=4, n_servers=64, n_cold=16, n_hot=8,
                 noise_sd=0.1, recirculation=0.05, containment=True) -> dict:
    """Write layout, scenario, state, and synthesized measurement files."""
    rng = np.random.default_rng(seed)
    layout = make_grid_layout(n_cracs=n_cracs, n_servers=n_servers, n_cold=n_cold,
                              n_hot=n_hot, containment=containment)
    scenario = Scenario(layout=layout, alpha_true=_per_type_alpha(layout, rng),
                        recirculation_fraction=recirculation, sensor_noise_sd=noise_sd,
                        seed=seed)
    state = _operating_state(layout, rng)
    measurements = synthesize_measurements(scenario, state)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "layout": out / "layout.json",
        "scenario": out / "scenario.json",
        "state": out / "state.json",
        "measurements": out / "measurements.csv",
    }
    fileio.save_layout(layout, paths["layout"])
    fileio.save_scenario(scenario, paths["scenario"])
    fileio.save_state(state, paths["state"])
    fileio.save_measurements([s.id for s in layout.sensors], measurements,
                             paths["measurements"])
    return {k: str(v) for k, v in paths.items()}


def _make_solver(kind, layout, scenario, external_command=None, workdir=None,
                 timeout_s=60.0):
    if kind == "zonal":
        return ZonalSolver(scenario)
    if kind == "external":
        if not external_command:
            raise ParseError("--solver external requires --external-command")
        spec = ExternalSolverSpec(command=tuple(external_command.split()),
                                  workdir=Path(workdir or "external_work"),
                                  timeout_s=timeout_s)
        return ExternalSolver(spec, layout)
    raise ParseError(f"unknown solver kind {kind!r}")


def _write_calibration_report(out_dir: Path, method: str, settings: RunSettings,
                              inputs: dict, layout, measurements, result: CalibrationResult):
    out_dir.mkdir(parents=True, exist_ok=True)
    fileio.write_csv(out_dir / "traces.csv",
                     ["iteration", "validation_mae_c", "mean_l2", "mean_grad_mag",
                      "de_l2", "solver_calls", "dataset_size"],
                     [[t.iteration, t.validation_mae, t.mean_l2, t.mean_grad_mag,
                       t.de_l2, t.solver_calls, t.dataset_size] for t in result.traces])
    fileio.write_csv(out_dir / "timings.csv", ["iteration", "wall_time_s"],
                     [[t.iteration, t.wall_time_s] for t in result.traces])
    predicted = result.best_solver_temps
    fileio.write_csv(out_dir / "sensors.csv",
                     ["sensor_id", "aisle", "measured_c", "predicted_c"],
                     [[s.id, s.aisle, float(m), float(p)]
                      for s, m, p in zip(layout.sensors, measurements, predicted)])
    fileio.save_alpha([s.id for s in layout.servers], result.alpha_star,
                      out_dir / "alpha_star.csv")
    report = {
        "method": method,
        "inputs": inputs,
        "config": settings_echo(settings),
        "result": {
            "best_mae_c": result.best_mae,
            "n_solver_calls": result.n_solver_calls,
            "iterations": len(result.traces),
        },
    }
    fileio._dump_json(report, out_dir / "report.json")
    return report


def cmd_calibrate(layout_file, scenario_file, state_file, measurements_file,
                  out_dir, config_file=None, method=METHOD_KALIBRE,
                  solver_kind="zonal", external_command=None, workdir=None,
                  iters=None, seed=None) -> dict:
    """Run one calibration by the selected method and write its report."""
    layout = fileio.load_layout(layout_file)
    scenario = fileio.load_scenario(scenario_file, layout)
    state = fileio.load_state(state_file)
    measurements = fileio.load_measurements(measurements_file, [s.id for s in layout.sensors])
    settings = load_settings(config_file, iters=iters, seed=seed)
    solver = _make_solver(solver_kind, layout, scenario, external_command, workdir)
    inputs = {"layout": str(layout_file), "scenario": str(scenario_file),
              "state": str(state_file), "measurements": str(measurements_file),
              "solver": solver_kind}

    if method == METHOD_KALIBRE:
        priors = build_adjacency(layout, settings.cut_threshold)
        model = KnowledgeSurrogateModel(priors, settings.calib.penalty, settings.calib.train)
        result = calibrate(solver, model, measurements, state, layout, settings.calib)
    elif method == METHOD_VANILLA:
        mlp_train_cfg = replace(settings.calib.train, learning_rate=settings.mlp_learning_rate)
        model = VanillaSurrogateModel(layout, settings.calib.penalty, mlp_train_cfg,
                                      seed=settings.calib.seed)
        result = calibrate(solver, model, measurements, state, layout, settings.calib)
    elif method == METHOD_HEURISTIC:
        result = _heuristic_calibrate(solver, measurements, state, layout, settings)
    else:
        raise UnknownMethodError(f"unknown method {method!r}")

    return _write_calibration_report(Path(out_dir), method, settings, inputs,
                                     layout, measurements, result)


def _heuristic_calibrate(solver, measurements, state, layout, settings: RunSettings) -> CalibrationResult:
    """(1+1)-ES directly on solver MAE: one solver call per candidate."""
    from .engine import IterationTrace  # local import keeps module load light

    cache = {}

    def objective(alpha):
        temps = solver.solve(state.to_input(alpha))
        value = mae(temps, measurements)
        cache[solver.n_calls] = (alpha.copy(), temps, value)
        return value

    x0 = np.full(layout.n_servers, settings.calib.bounds.midpoint)
    res = cmaes_1p1(objective, settings.calib.bounds, settings.es, x0)
    best_call = min(cache, key=lambda k: cache[k][2])
    alpha_star, temps, best = cache[best_call]
    traces = [IterationTrace(iteration=i + 1, validation_mae=v, mean_l2=float("nan"),
                             mean_grad_mag=float("nan"), de_l2=None, solver_calls=i + 1,
                             dataset_size=0, wall_time_s=0.0)
              for i, v in enumerate(res.best_trace)]
    return CalibrationResult(alpha_star=alpha_star, best_mae=best,
                             best_solver_temps=temps, traces=traces,
                             n_solver_calls=solver.n_calls)


def cmd_solve(layout_file, scenario_file, state_file, alpha_file=None, out=None) -> np.ndarray:
    """One-shot zonal solve, at alpha_true unless an alpha file is given."""
    layout = fileio.load_layout(layout_file)
    scenario = fileio.load_scenario(scenario_file, layout)
    state = fileio.load_state(state_file)
    if alpha_file:
        alpha = fileio.load_alpha(alpha_file, [s.id for s in layout.servers])
    else:
        alpha = scenario.alpha_true
    temps = ZonalSolver(scenario).solve(state.to_input(alpha))
    if out:
        fileio.save_measurements([s.id for s in layout.sensors], temps, Path(out))
    return temps


def cmd_study_datavolume(layout_file, scenario_file, state_file, out_dir,
                         fractions=(0.05, 0.15, 0.30, 0.50), pool_size=200,
                         seed=0) -> list:
    """Data-volume study over the three surrogate designs."""
    layout = fileio.load_layout(layout_file)
    scenario = fileio.load_scenario(scenario_file, layout)
    state = fileio.load_state(state_file)
    cells = run_datavolume_study(scenario, state, list(fractions), pool_size, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_csv(out / "study.csv",
                     ["fraction", "surrogate", "n_train", "test_mae_c"],
                     [[c.fraction, c.surrogate, c.n_train, c.test_mae] for c in cells])
    fileio._dump_json({
        "pool_size": pool_size,
        "fractions": list(fractions),
        "seed": seed,
        "cells": [{"fraction": c.fraction, "surrogate": c.surrogate,
                   "n_train": c.n_train, "test_mae_c": c.test_mae} for c in cells],
    }, out / "study.json")
    return cells


# -- argument parsing ---------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hallcal",
                     description="Surrogate-assisted flow-rate calibration toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic hall scenario")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--cracs", type=int, default=4)
    g.add_argument("--servers", type=int, default=64)
    g.add_argument("--sensors-cold", type=int, default=16)
    g.add_argument("--sensors-hot", type=int, default=8)
    g.add_argument("--noise-sd", type=float, default=0.1)
    g.add_argument("--recirculation", type=float, default=0.05)
    g.add_argument("--no-containment", action="store_true")

    s = sub.add_parser("solve", help="one-shot zonal solve")
    s.add_argument("--layout", required=True)
    s.add_argument("--scenario", required=True)
    s.add_argument("--state", required=True)
    s.add_argument("--alpha", default=None, help="flow-rate csv; defaults to the hidden truth")
    s.add_argument("--out", default=None)

    c = sub.add_parser("calibrate", help="run one calibration")
    c.add_argument("--layout", required=True)
    c.add_argument("--scenario", required=True)
    c.add_argument("--state", required=True)
    c.add_argument("--measurements", required=True)
    c.add_argument("--config", default=None)
    c.add_argument("--method", choices=[METHOD_KALIBRE, METHOD_VANILLA, METHOD_HEURISTIC],
                   default=METHOD_KALIBRE)
    c.add_argument("--solver", choices=["zonal", "external"], default="zonal")
    c.add_argument("--external-command", default=None)
    c.add_argument("--workdir", default=None)
    c.add_argument("--iters", type=int, default=None)
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--out-dir", required=True)

    d = sub.add_parser("study-datavolume", help="training-data-volume study")
    d.add_argument("--layout", required=True)
    d.add_argument("--scenario", required=True)
    d.add_argument("--state", required=True)
    d.add_argument("--fractions", default="0.05,0.15,0.30,0.50")
    d.add_argument("--pool-size", type=int, default=200)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out-dir", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            paths = cmd_generate(args.out_dir, seed=args.seed, n_cracs=args.cracs,
                                 n_servers=args.servers, n_cold=args.sensors_cold,
                                 n_hot=args.sensors_hot, noise_sd=args.noise_sd,
                                 recirculation=args.recirculation,
                                 containment=not args.no_containment)
            for name, path in paths.items():
                print(f"{name}: {path}")
        elif args.command == "solve":
            temps = cmd_solve(args.layout, args.scenario, args.state,
                              alpha_file=args.alpha, out=args.out)
            if not args.out:
                for value in temps:
                    print(repr(float(value)))
        elif args.command == "calibrate":
            report = cmd_calibrate(args.layout, args.scenario, args.state,
                                   args.measurements, args.out_dir,
                                   config_file=args.config, method=args.method,
                                   solver_kind=args.solver,
                                   external_command=args.external_command,
                                   workdir=args.workdir, iters=args.iters,
                                   seed=args.seed)
            print(f"best MAE {report['result']['best_mae_c']:.4f} degC "
                  f"in {report['result']['n_solver_calls']} solver calls")
        elif args.command == "study-datavolume":
            fractions = [float(f) for f in args.fractions.split(",") if f]
            cells = cmd_study_datavolume(args.layout, args.scenario, args.state,
                                         args.out_dir, fractions=fractions,
                                         pool_size=args.pool_size, seed=args.seed)
            for c in cells:
                print(f"{c.surrogate:20s} frac {c.fraction:.2f} test MAE {c.test_mae:.3f}")
    except UnknownMethodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SOLVER_EXIT_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except HallcalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
