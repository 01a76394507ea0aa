"""Command line: ``analytic``, ``mc``, ``validate`` and ``figure`` subcommands.

Configurations are JSON objects with ``"schema_version": 1``.  Unknown keys
are rejected.  Exit codes: 0 success, 1 configuration error, 2 numerical
failure, 3 validation failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import medium as med
from . import montecarlo as mc
from .asymptotics import moments, scintillation as sc
from .lattice import centered_grid
from .propagator import PropagationPlan, RegimeScaling, plan_for
from .source import SourceSpec, load_temporal_kernel

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VALIDATION = 0, 1, 2, 3
CURVE_HEADER = ["abscissa", "s_T", "chi_ratio", "mean_intensity", "beta_case", "theta", "tau_over_T",
                "d", "sigma_m2", "r0", "rw", "k0"]
MC_HEADER = ["probe_r", "probe_x", "probe_t", "stat_name", "mc_mean", "mc_stderr", "asymptotic", "z_score",
             "n_realizations"]
FIGURE_LABEL = "shape reproduction"

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "dim": 1,
    "medium": {"kind": "gaussian", "sigma_R2": 1.0, "ell_m": 1.0, "path": None},
    "source": {"envelope_r0": 1.0, "coherence_kind": "gaussian", "coherence_rw": 1.0, "theta": 0.5,
               "beta": 1.0, "tau_s": 1.0, "temporal_kind": "exponential", "kernel_path": None,
               "bessel_modes": 256},
    "scaling": {"epsilon": 0.05, "regime": "kinetic", "eta": None, "k0": 1.0},
    "grid": {"n_per_axis": 1024, "dx": 0.25},
    "propagation": {"z_final": 1.0, "n_steps": None, "dz": None},
    "monte_carlo": {"n_realizations": 100, "master_seed": 0, "detector_T": 0.0, "n_time_samples": None,
                    "probes": [{"r": 0.0, "x": 0.0, "t": 0.0}], "statistics": ["intensity", "scintillation"]},
    "analytic": {"beta_case": "beta_eq_1", "detector_T": 1.0, "abscissa": None, "r": 0.0, "method": "auto"},
    "sweep": None,
    "output": {"csv": None, "plot": None},
}
PROBE_KEYS = {"r", "x", "t"}
SWEEP_KEYS = {"parameter", "values"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass
class RunConfig:
    raw: dict
    medium: med.MediumSpec
    source: SourceSpec
    scaling: RegimeScaling
    grid: object
    plan: PropagationPlan
    experiment: mc.ExperimentConfig
    analytic: dict
    sweep: Optional[dict] = None
    output: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# configuration

def _merge(defaults: dict, given: dict, where: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        path = f"{where}.{key}" if where else key
        if key not in defaults:
            raise ConfigError(f"unknown key '{path}'")
        if isinstance(defaults[key], dict) and value is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"'{path}' must be an object")
            out[key] = _merge(defaults[key], value, path)
        else:
            out[key] = value
    return out


def _guard(key: str, build):
    try:
        return build()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"'{key}': {exc}") from None


def _build(raw: dict) -> RunConfig:
    d = raw["dim"]
    if d not in (1, 2):
        raise ConfigError("'dim': must be 1 or 2")
    m = raw["medium"]
    if m["kind"] == "gaussian":
        medium = _guard("medium", lambda: med.MediumSpec("gaussian", float(m["sigma_R2"]), float(m["ell_m"]), d))
    elif m["kind"] == "none":
        medium = med.no_medium(d)
    elif m["kind"] == "tabulated":
        if not m["path"]:
            raise ConfigError("'medium.path': required for a tabulated medium")
        medium = _guard("medium.path", lambda: med.load_tabulated_spectrum(m["path"], d))
    else:
        raise ConfigError(f"'medium.kind': must be gaussian, tabulated or none, got {m['kind']!r}")

    s = dict(raw["source"])
    kernel_path = s.pop("kernel_path")
    kw = dict(envelope_r0=s["envelope_r0"], coherence_kind=s["coherence_kind"], coherence_rw=s["coherence_rw"],
              theta=s["theta"], beta=s["beta"], tau_s=s["tau_s"], dim=d, bessel_modes=s["bessel_modes"])
    if s["temporal_kind"] == "tabulated":
        if not kernel_path:
            raise ConfigError("'source.kernel_path': required for a tabulated temporal kernel")
        source = _guard("source", lambda: load_temporal_kernel(kernel_path, **kw))
    else:
        source = _guard("source", lambda: SourceSpec(temporal_kind=s["temporal_kind"], **kw))

    c = raw["scaling"]
    regime = c["regime"]
    scaling = _guard("scaling", lambda: RegimeScaling(float(c["epsilon"]), regime,
                                                       None if c["eta"] is None else float(c["eta"]),
                                                       float(c["k0"])))
    g = raw["grid"]
    grid = _guard("grid", lambda: centered_grid(d, int(g["n_per_axis"]), float(g["dx"])))
    _guard("grid", lambda: grid.require_extent(source.envelope_r0 * scaling.epsilon ** -source.beta, 4.0))

    p = raw["propagation"]
    if p["n_steps"] is not None and p["dz"] is not None:
        raise ConfigError("'propagation': give n_steps or dz, not both")
    if p["n_steps"] is not None:
        plan = _guard("propagation", lambda: PropagationPlan(float(p["z_final"]), int(p["n_steps"])))
    else:
        plan = _guard("propagation", lambda: plan_for(float(p["z_final"]), scaling, grid, medium, dz=p["dz"]))

    e = raw["monte_carlo"]
    probes = []
    for i, pr in enumerate(e["probes"]):
        extra = set(pr) - PROBE_KEYS
        if extra:
            raise ConfigError(f"unknown key 'monte_carlo.probes[{i}].{sorted(extra)[0]}'")
        probes.append(_guard(f"monte_carlo.probes[{i}]",
                             lambda pr=pr: mc.Probe(_point(pr.get("r", 0.0), d), _point(pr.get("x", 0.0), d),
                                                    float(pr.get("t", 0.0)))))
    experiment = _guard("monte_carlo", lambda: mc.ExperimentConfig(
        medium, source, scaling, grid, plan, int(e["n_realizations"]), int(e["master_seed"]),
        float(e["detector_T"]), e["n_time_samples"], tuple(probes), tuple(e["statistics"])))

    a = raw["analytic"]
    if a["beta_case"] not in moments.BETA_CASES:
        raise ConfigError(f"'analytic.beta_case': must be one of {moments.BETA_CASES}")
    if not float(a["detector_T"]) >= 0:
        raise ConfigError("'analytic.detector_T': must be >= 0")
    if a["abscissa"] is not None and (not a["abscissa"] or min(a["abscissa"]) < 0):
        raise ConfigError("'analytic.abscissa': must be a non-empty list of values >= 0")

    sweep = raw["sweep"]
    if sweep is not None:
        extra = set(sweep) - SWEEP_KEYS
        if extra or set(sweep) != SWEEP_KEYS:
            raise ConfigError("'sweep': needs exactly the keys 'parameter' and 'values'")
        _lookup(raw, sweep["parameter"])
        if not sweep["values"]:
            raise ConfigError("'sweep.values': must be non-empty")
    return RunConfig(raw, medium, source, scaling, grid, plan, experiment, a, sweep, raw["output"])


def _point(value, d: int):
    """Scalars broadcast to every coordinate."""
    return np.broadcast_to(np.asarray(value, dtype=float), (d,)) if np.ndim(value) == 0 else value


def _lookup(raw: dict, dotted: str):
    node = raw
    parts = dotted.split(".")
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"'sweep.parameter': {dotted!r} does not name an existing parameter")
        node = node[part]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigError(f"'sweep.parameter': {dotted!r} does not name an existing parameter")
    return node, parts[-1]


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    if "schema_version" not in data:
        raise ConfigError("'schema_version': required")
    if data["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"'schema_version': unsupported version {data['schema_version']!r}")
    return _build(_merge(DEFAULTS, data, ""))


def parse_config(path) -> RunConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"configuration file {path!r} not found")
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
    return config_from_dict(data)


def sweep_configs(cfg: RunConfig) -> list:
    if cfg.sweep is None:
        return [cfg]
    out = []
    for value in cfg.sweep["values"]:
        raw = copy.deepcopy(cfg.raw)
        node, key = _lookup(raw, cfg.sweep["parameter"])
        node[key] = value
        raw["sweep"] = None
        out.append(_build(raw))
    return out


# --------------------------------------------------------------------------
# analytic curves

def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def default_abscissa(source: SourceSpec) -> np.ndarray:
    """Log-spaced ``sigma_m2 z**3`` reaching 1e5 times the saturation scale ``3 r0**2``."""
    top = 1e5 * 3 * source.envelope_r0 ** 2
    return np.logspace(-2, math.log10(top), 61)


def analytic_curve(cfg: RunConfig) -> sc.ScintillationCurve:
    a = cfg.analytic
    sm2 = sc._sigma_m2(cfg.medium)
    abscissa = np.asarray(a["abscissa"] if a["abscissa"] is not None else default_abscissa(cfg.source), float)
    z_values = (abscissa / sm2) ** (1 / 3)
    return sc.scintillation_curve(z_values, cfg.medium, cfg.source, float(a["detector_T"]), a["beta_case"],
                                  a["r"], cfg.scaling.k0, a["method"])


def curve_rows(curve: sc.ScintillationCurve) -> list:
    p = curve.params
    rows = []
    for i in range(curve.abscissa.size):
        rows.append([curve.abscissa[i], curve.s_T[i], curve.chi_ratio[i], curve.mean_intensity[i], p["beta_case"],
                     float(p["theta"]), float(p["tau_over_T"]), p["d"], float(p["sigma_m2"]), float(p["r0"]),
                     float(p["rw"]), float(p["k0"])])
    return rows


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _plot_curves(curves, path, title, label_key="theta") -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for curve in curves:
        ax.semilogx(curve.abscissa, curve.s_T, label=f"{label_key}={curve.params[label_key]:.3g}")
    ax.set_xlabel(r"$\sigma_m^2 z^3$")
    ax.set_ylabel(r"$S_T$")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_analytic(cfg: RunConfig, out_csv: str, plot: Optional[str] = None) -> list:
    curves = [analytic_curve(c) for c in sweep_configs(cfg)]
    rows = [row for curve in curves for row in curve_rows(curve)]
    write_csv(out_csv, CURVE_HEADER, rows)
    plot = plot or os.path.splitext(out_csv)[0] + ".png"
    key = cfg.sweep["parameter"].split(".")[-1] if cfg.sweep else "theta"
    if key not in curves[0].params:
        key = "theta"
    _plot_curves(curves, plot, "time-averaged scintillation", key)
    return curves


# --------------------------------------------------------------------------
# Monte Carlo

def _coords(values) -> str:
    return " ".join(_fmt(float(v)) for v in values)


def mc_rows(result: mc.ExperimentResult) -> list:
    return [[_coords(r.probe_r), _coords(r.probe_x), float(r.probe_t), r.stat_name, float(r.mc_mean),
             float(r.mc_stderr), float(r.asymptotic), float(r.z_score), r.n_realizations] for r in result.rows]


def cmd_mc(cfg: RunConfig, out_csv: str, threads: int = 1) -> list:
    results = [mc.run_experiment(c.experiment, threads) for c in sweep_configs(cfg)]
    write_csv(out_csv, MC_HEADER, [row for res in results for row in mc_rows(res)])
    return results


# --------------------------------------------------------------------------
# figure presets

def figure_curves(preset: str) -> dict:
    """Parameter guesses for the published figure styles (shape reproduction only)."""
    panels = {}
    for kind in ("gaussian", "bessel"):
        medium = med.gaussian_medium(1.0, 1.0, 2)
        curves = []
        if preset == "theta":
            settings = [(th, 1.0) for th in (1.0, 0.5, 0.25)]
        elif preset == "tau":
            settings = [(0.5, tau) for tau in (10.0, 1.0, 0.1)]
        else:
            raise ValueError("preset must be 'theta' or 'tau'")
        for th, tau in settings:
            source = SourceSpec(envelope_r0=1.0, coherence_kind=kind, coherence_rw=1.0, theta=th, tau_s=tau, dim=2)
            z = default_abscissa(source) ** (1 / 3)
            curves.append(sc.scintillation_curve(z, medium, source, 1.0))
        panels[kind] = curves
    return panels


def figure_contour(kind: str, n: int = 25) -> tuple:
    """``S_T`` over ``(tau_s/T, theta)`` at ``sigma_m2 z**3 = 1``."""
    medium = med.gaussian_medium(1.0, 1.0, 2)
    taus = np.logspace(-2, 2, n)
    thetas = np.linspace(0.05, 1.0, n)
    grid = np.empty((n, n))
    for i, th in enumerate(thetas):
        for j, tau in enumerate(taus):
            source = SourceSpec(envelope_r0=1.0, coherence_kind=kind, coherence_rw=1.0, theta=th, tau_s=tau, dim=2)
            grid[i, j] = sc.scintillation_curve([1.0], medium, source, 1.0).s_T[0]
    return taus, thetas, grid


def cmd_figure(preset: str, out_png: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    base = os.path.splitext(out_png)[0]
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    if preset == "contour":
        rows = []
        for ax, kind in zip(axes, ("gaussian", "bessel")):
            taus, thetas, grid = figure_contour(kind)
            cs = ax.contourf(np.log10(taus), thetas, grid, levels=20)
            fig.colorbar(cs, ax=ax)
            ax.set_xlabel(r"$\log_{10}(\tau_s/T)$")
            ax.set_ylabel(r"$\theta$")
            ax.set_title(f"{kind} beam, $\\sigma_m^2z^3=1$ ({FIGURE_LABEL})")
            for i, th in enumerate(thetas):
                for j, tau in enumerate(taus):
                    rows.append([kind, float(tau), float(th), float(grid[i, j])])
        write_csv(base + ".csv", ["coherence_kind", "tau_over_T", "theta", "s_T"], rows)
    else:
        panels = figure_curves(preset)
        rows = []
        key = "theta" if preset == "theta" else "tau_over_T"
        for ax, (kind, curves) in zip(axes, panels.items()):
            for curve in curves:
                ax.semilogx(curve.abscissa, curve.s_T, label=f"{key}={curve.params[key]:.3g}")
                rows += curve_rows(curve)
            ax.set_xlabel(r"$\sigma_m^2 z^3$")
            ax.set_ylabel(r"$S_T$")
            ax.set_title(f"{kind} beam ({FIGURE_LABEL})")
            ax.legend()
        write_csv(base + ".csv", CURVE_HEADER, rows)
    fig.suptitle(FIGURE_LABEL)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120, metadata={"Description": FIGURE_LABEL})
    plt.close(fig)


# --------------------------------------------------------------------------
# entry point

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="itoscint", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("analytic", "mc", "validate", "figure"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", help="output path")
        p.add_argument("--seed", type=int, help="override monte_carlo.master_seed")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        if name == "validate":
            p.add_argument("--suite", choices=("analytic", "mc", "all"), default="analytic")
            p.add_argument("--criteria", help="comma-separated criterion numbers (default: whole suite)")
            p.add_argument("--tolerance-scale", type=float, default=1.0,
                           help="multiply every tolerance (test mode; 0 forces failures)")
        if name == "figure":
            p.add_argument("--preset", choices=("theta", "tau", "contour"), default="theta")
    return parser


def _out_path(args, cfg: Optional[RunConfig]) -> str:
    path = args.out or (cfg.output.get("csv") if cfg else None)
    if not path:
        raise ConfigError("an output path is required (--out or output.csv)")
    folder = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(folder) or not os.access(folder, os.W_OK):
        raise ConfigError(f"output directory {folder!r} is not writable")
    return path


def _load(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = parse_config(args.config)
    if args.seed is not None:
        raw = copy.deepcopy(cfg.raw)
        raw["monte_carlo"]["master_seed"] = args.seed
        cfg = _build(raw)
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "analytic":
            cfg = _load(args)
            cmd_analytic(cfg, _out_path(args, cfg), cfg.output.get("plot"))
            return EXIT_OK
        if args.command == "mc":
            cfg = _load(args)
            results = cmd_mc(cfg, _out_path(args, cfg), args.threads)
            return EXIT_OK if all(r.fraction_passing() >= 0.95 for r in results) else EXIT_VALIDATION
        if args.command == "figure":
            out = args.out or f"figure_{args.preset}.png"
            _out_path(argparse.Namespace(out=out), None)
            cmd_figure(args.preset, out)
            return EXIT_OK
        from . import validation
        if args.criteria:
            numbers = [int(n) for n in args.criteria.split(",")]
            results = [validation.run_criterion(n, args.tolerance_scale, args.threads) for n in numbers]
        else:
            results = validation.run_suite(args.suite, args.tolerance_scale, args.threads)
        report = validation.format_report(results)
        print(report)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(report + "\n")
        return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (moments.QuadratureError, FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
