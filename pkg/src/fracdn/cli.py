"""Command-line entry point: ``fracdn <group> <command> [options]``.

Outputs go to the directory in ``FRACDN_OUTPUT_DIR`` (default ``fracdn_output``)
unless an explicit path is given. Numbers are written with 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .domain import (
    BoundaryPatch,
    Grid,
    coefficients_from_config,
    grid_from_config,
    patch_from_config,
)
from .spectral import BoundarySpectralData, analytic_interval_bsd, assemble, boundary_flux, eigensolve

OUTPUT_ENV = "FRACDN_OUTPUT_DIR"


class ConfigError(ValueError):
    """Validation failure; the message starts with the offending field path."""


class MissingPresetError(FileNotFoundError):
    pass


def output_dir():
    d = Path(os.environ.get(OUTPUT_ENV, "fracdn_output"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _resolve(path, default_name):
    if path is None:
        return output_dir() / default_name
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _num(v):
    return f"{v + 0.0:.17g}"


# ---------------------------------------------------------------------------
# configuration

TASKS = ("forward", "dn", "sector", "recover", "gauge", "diag")


@dataclass
class RunConfig:
    problem: dict
    solver: dict = field(default_factory=dict)
    task: str = "forward"
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("<root>: config must be a JSON object")
        unknown = set(d) - {"problem", "solver", "task", "outputs"}
        if unknown:
            raise ConfigError(f"<root>: unknown keys {sorted(unknown)}")
        if "problem" not in d:
            raise ConfigError("problem: missing")
        cfg = cls(dict(d["problem"]), dict(d.get("solver", {})), d.get("task", "forward"), dict(d.get("outputs", {})))
        cfg.validate()
        return cfg

    def to_dict(self):
        return {"problem": self.problem, "solver": self.solver, "task": self.task, "outputs": self.outputs}

    def hash(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def validate(self):
        p = self.problem
        if self.task not in TASKS:
            raise ConfigError(f"task: must be one of {TASKS}, got {self.task!r}")
        a = p.get("alpha")
        if not isinstance(a, (int, float)) or not (0 < a < 2) or a == 1:
            raise ConfigError(f"problem.alpha: must lie in (0,1) or (1,2), got {a!r}")
        if "grid" not in p:
            raise ConfigError("problem.grid: missing")
        g = p["grid"]
        if len(g.get("extents", [])) != len(g.get("n_cells", [])) or len(g.get("extents", [])) not in (1, 2):
            raise ConfigError("problem.grid: extents and n_cells must both have length 1 or 2")
        T0 = p.get("T0", 1.0)
        T = p.get("T", T0)
        if not (0 < T0 <= T):
            raise ConfigError(f"problem.T0: must satisfy 0 < T0 <= T, got T0={T0}, T={T}")
        for name in ("s_in", "s_out"):
            if name in p:
                for s in p[name].get("segments", []):
                    edge = s[0] if isinstance(s, (list, tuple)) else s
                    if edge not in ("left", "right", "bottom", "top"):
                        raise ConfigError(f"problem.{name}.segments: unknown edge {edge!r}")
        for k, v in self.solver.get("tolerances", {}).items():
            if not v > 0:
                raise ConfigError(f"solver.tolerances.{k}: must be positive")
        for k in ("modes", "steps"):
            if k in self.solver and int(self.solver[k]) < 1:
                raise ConfigError(f"solver.{k}: must be a positive integer")


PRESETS = {
    "forward-1d": {
        "task": "forward",
        "problem": {
            "grid": {"extents": [1.0], "n_cells": [512]},
            "coefficients": {},
            "alpha": 0.5,
            "T": 1.0,
            "T0": 1.0,
            "s_in": {"segments": ["left"], "label": "in"},
            "s_out": {"segments": ["right"], "label": "out"},
            "input": {"width": 0.5},
        },
        "solver": {"modes": 64, "steps": 2000},
    },
    "recover-synthetic": {
        "task": "recover",
        "problem": {
            "grid": {"extents": [1.0], "n_cells": [64]},
            "analytic": True,
            "alpha": 0.5,
            "s_in": {"segments": ["left", "right"], "label": "in"},
            "s_out": {"segments": ["left", "right"], "label": "out"},
        },
        "solver": {"modes": 8},
    },
}


def load_preset(name, config_dir=None):
    if config_dir is not None:
        path = Path(config_dir) / f"{name}.json"
        if not path.exists():
            raise MissingPresetError(f"preset {name!r} not found in {config_dir}")
        return RunConfig.from_dict(json.loads(path.read_text()))
    if name not in PRESETS:
        raise MissingPresetError(f"unknown preset {name!r}")
    return RunConfig.from_dict(json.loads(json.dumps(PRESETS[name])))


def load_config(path):
    p = Path(path)
    if p.suffix != ".json" and p.name in PRESETS:
        return load_preset(p.name)
    try:
        d = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"<file>: {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<file>: invalid JSON ({exc})") from None
    return RunConfig.from_dict(d)


# ---------------------------------------------------------------------------
# problem construction


def _build(cfg):
    from .forward import BoundaryInput, PolyBump

    p = cfg.problem
    grid = grid_from_config(p["grid"])
    coeffs = coefficients_from_config(p.get("coefficients", {}), grid)
    s_in = patch_from_config(p.get("s_in", {"segments": ["left"], "label": "in"}), grid)
    s_out = patch_from_config(p.get("s_out", {"segments": ["right"], "label": "out"}), grid)
    alpha = float(p["alpha"])
    T0 = float(p.get("T0", 1.0))
    T = float(p.get("T", T0))
    spec = p.get("input", {})
    bump = PolyBump.for_order(alpha, float(spec.get("width", 0.5 * T0)), float(spec.get("amplitude", 1.0)),
                              float(spec.get("start", 0.0)))
    h = np.zeros(grid.shape)
    if spec.get("profile", "unit") == "sine" and grid.dim == 2:
        for node, ax, _ in s_in.nodes():
            y = node[1 - ax] * grid.h[1 - ax]
            h[node] = np.sin(np.pi * y / grid.extents[1 - ax])
    else:
        for node in s_in.node_indices:
            h[node] = 1.0
    if grid.dim == 2:
        # corners carry no meaningful normal
        for i in (0, -1):
            for j in (0, -1):
                h[i, j] = 0.0
    inp = BoundaryInput(bump, h, s_in, T0, T)
    return grid, coeffs, s_in, s_out, inp


def _bsd_for(cfg, grid, coeffs, n_modes=None):
    if cfg.problem.get("analytic"):
        return analytic_interval_bsd(n_modes or cfg.solver.get("modes", 8), grid)
    n_int = int(np.prod([n - 1 for n in grid.n_cells]))
    n = n_int if n_modes is None else min(n_modes, n_int)
    es = eigensolve(assemble(coeffs, grid), n)
    return boundary_flux(es, coeffs)


# ---------------------------------------------------------------------------
# report


@dataclass
class ExperimentReport:
    task: str
    metrics: dict
    passed: bool
    config_hash: str = ""
    version: str = __version__
    files: list = field(default_factory=list)
    runtime: float = 0.0
    criteria: list = field(default_factory=list)

    def to_dict(self):
        return {
            "task": self.task,
            "passed": self.passed,
            "metrics": self.metrics,
            "config_hash": self.config_hash,
            "version": self.version,
            "files": [str(f) for f in self.files],
            "runtime_s": self.runtime,
            "criteria": self.criteria,
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def run(cfg, out=None):
    """Execute a task pipeline and return its report; writes data files next to ``out``."""
    from . import dnmap
    from .forward import solve_spectral
    from .inverse import series_model, strip_poles

    t0 = time.perf_counter()
    task = cfg.task
    try:
        grid, coeffs, s_in, s_out, inp = _build(cfg)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"problem: {exc}") from exc
    alpha = float(cfg.problem["alpha"])
    files = []
    metrics = {}
    passed = True
    try:
        if task == "forward":
            n = int(cfg.solver.get("modes", 64))
            es = eigensolve(assemble(coeffs, grid), n)
            tr = solve_spectral(inp, es, alpha, int(cfg.solver.get("steps", 2000)))
            path = _resolve(out, "traj.json")
            csv_path = path.with_suffix(".csv")
            nodes = [ix for ix in [tuple(s // 2 for s in grid.shape)]]
            tr.save(path, csv_path, nodes)
            files += [path, csv_path]
            metrics = {"n_modes": n, "n_steps": len(tr.t) - 1, "max_abs_u_T0": float(np.abs(tr.at(inp.T0)).max())}
            passed = bool(np.all(np.isfinite(tr.fields)))
        elif task == "dn":
            bsd = _bsd_for(cfg, grid, coeffs, cfg.solver.get("modes"))
            if cfg.solver.get("oracle"):
                meas = dnmap.dn_oracle(inp, coeffs, alpha, s_out, int(cfg.solver.get("steps", 2000)))
            else:
                meas = dnmap.dn_apply(inp, bsd, alpha, s_out, sign=dnmap.DN_SIGN)
            path = _resolve(out, "dn.json")
            meas.save(path)
            files.append(path)
            metrics = {"max_abs_flux": float(np.abs(meas.flux).max()), "provenance": meas.provenance}
        elif task == "sector":
            bsd = _bsd_for(cfg, grid, coeffs, cfg.solver.get("modes"))
            sample = dnmap.sector_eval(inp, bsd, alpha, s_out)
            path = _resolve(out, "sector.csv")
            side = path.with_suffix(".json")
            sample.meta["model"] = series_model(bsd, alpha, s_in, s_out).to_dict()
            sample.save(path, side)
            files += [path, side]
            metrics = {"n_points": len(sample.z), "n_modes": bsd.n_modes}
        elif task == "recover":
            n = int(cfg.solver.get("modes", 8))
            bsd = _bsd_for(cfg, grid, coeffs, n)
            model = series_model(bsd, alpha, s_in, s_out)
            rec = strip_poles(model.continuation, n, alpha, model.basis_weights)
            path = _resolve(out, "bsd_hat.json")
            rec.save(path)
            files.append(path)
            rel = np.abs(rec.eigenvalues / bsd.eigenvalues[:n] - 1)
            metrics = {"lambda_hat": rec.eigenvalues.tolist(), "max_rel_error": float(rel.max())}
            passed = bool(rel.max() <= 1e-8)
        elif task == "gauge":
            rep = gauge_from_config(cfg)
            metrics = rep
            passed = rep["passed"]
        elif task == "diag":
            from .inverse import hassell_tao_ratio

            bsd = _bsd_for(cfg, grid, coeffs, cfg.solver.get("modes"))
            ratios, sup, flagged = hassell_tao_ratio(bsd, s_in)
            metrics = {"ratios": ratios.tolist(), "sup": float(sup[-1]), "flagged": flagged.tolist()}
            passed = len(flagged) == 0
    except ConfigError:
        raise
    except Exception as exc:
        raise RuntimeError(f"stage {task}: {type(exc).__name__}: {exc}") from exc
    return ExperimentReport(task, metrics, passed, cfg.hash(), __version__, files, time.perf_counter() - t0)


def gauge_from_config(cfg):
    """Gauge-invariance check from a config; ``problem.gauge`` holds bump parameters."""
    from .domain import isotropic_to_manifold
    from .inverse import GaugePair, gauge_invariance_check, gauge_transform, smooth_bump

    grid, coeffs, s_in, s_out, inp = _build(cfg)
    gspec = cfg.problem.get("gauge", {})
    center = gspec.get("center", [e / 2 for e in grid.extents])
    kappa = smooth_bump(grid, center, float(gspec.get("radius", 0.3)), float(gspec.get("amplitude", 0.2)))
    mc1 = isotropic_to_manifold(coeffs, grid.dim)
    pair = GaugePair(kappa, mc1, gauge_transform(mc1, kappa, grid), grid)
    alpha = float(cfg.problem["alpha"])
    n = cfg.solver.get("modes")
    d = gauge_invariance_check(pair, [inp], alpha, s_out, n)
    dc = gauge_invariance_check(pair, [inp], alpha, s_out, n, control=True)
    tol = float(cfg.solver.get("tolerances", {}).get("gauge", 1e-4))
    return {"discrepancy": d, "control_discrepancy": dc, "tolerance": tol, "passed": bool(d <= tol and dc >= 10 * d)}


def reproduce_all(selected=None, config_dir=None, echo=print):
    """Run the acceptance criteria; writes report JSON and a metrics CSV."""
    from .acceptance import run_criteria

    if config_dir is not None:
        for name in PRESETS:
            load_preset(name, config_dir)
    t0 = time.perf_counter()
    results = run_criteria(selected, echo=echo)
    d = output_dir()
    csv_path = d / "acceptance_metrics.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["criterion", "metric", "value", "passed"])
        for r in results:
            for k, v in r.metrics.items():
                val = _num(float(v)) if isinstance(v, (float, int, np.floating, np.integer)) and not isinstance(v, bool) else str(v)
                w.writerow([r.id, k, val, int(r.passed)])
    rep = ExperimentReport(
        "reproduce",
        {f"criterion_{r.id}": r.passed for r in results},
        all(r.passed for r in results),
        "",
        __version__,
        [csv_path],
        time.perf_counter() - t0,
        [r.to_dict() for r in results],
    )
    rep.save(d / "acceptance_report.json")
    return rep


# ---------------------------------------------------------------------------
# subcommands


def _cmd_ml_eval(args):
    from .mlf import ml_with_info

    routes = {0: "series", 1: "asymptotic", 2: "contour"}
    if args.csv:
        with open(args.csv, newline="") as fh:
            rows = list(csv.DictReader(fh))
        out = sys.stdout if args.out is None else open(args.out, "w", newline="")
        w = csv.writer(out)
        w.writerow(["alpha", "beta", "re_z", "im_z", "re_E", "im_E", "method", "error_estimate"])
        for row in rows:
            a = float(row.get("alpha") or args.alpha)
            b = float(row.get("beta") or args.beta)
            z = complex(float(row.get("re", row.get("re_z", 0.0))), float(row.get("im", row.get("im_z", 0.0))))
            v, m, e = ml_with_info(a, b, np.array([z]))
            v = complex(v[0])
            w.writerow([_num(a), _num(b), _num(z.real), _num(z.imag), _num(v.real), _num(v.imag), routes[int(m[0])], _num(float(e[0]))])
        if args.out is not None:
            out.close()
        return 0
    if args.alpha is None or args.beta is None:
        raise ConfigError("ml eval: --alpha and --beta are required without --csv")
    z = complex(args.re, args.im)
    v, m, e = ml_with_info(args.alpha, args.beta, np.array([z]))
    v = complex(v[0])
    print(f"{_num(v.real)} {_num(v.imag)} {routes[int(m[0])]} {_num(float(e[0]))}")
    return 0


def _cmd_forward(args):
    rep = run(_with_task(load_config(args.config), "forward"), args.out)
    print(json.dumps(rep.to_dict(), indent=2))
    return 0 if rep.passed else 1


def _with_task(cfg, task):
    cfg.task = task
    cfg.validate()
    return cfg


def _cmd_dn_compute(args):
    cfg = _with_task(load_config(args.config), "dn")
    if args.oracle:
        cfg.solver["oracle"] = True
    rep = run(cfg, args.out)
    print(json.dumps(rep.to_dict(), indent=2))
    return 0 if rep.passed else 1


def _cmd_dn_sector(args):
    rep = run(_with_task(load_config(args.config), "sector"), args.out)
    print(json.dumps(rep.to_dict(), indent=2))
    return 0


def _cmd_invert(args):
    from .inverse import SeriesModel, strip_poles

    meta = json.loads(Path(args.sector).read_text())
    if "model" not in meta:
        raise ConfigError("sector: sidecar carries no series model")
    model = SeriesModel.from_dict(meta["model"])
    n = args.modes
    rec = strip_poles(model.continuation, n, model.alpha, model.basis_weights)
    rec.meta["input_hash"] = hashlib.sha256(Path(args.sector).read_bytes()).hexdigest()[:16]
    rec.meta["modes"] = n
    path = _resolve(args.out, "bsd_hat.json")
    rec.save(path)
    print(json.dumps({"eigenvalues": [_num(v) for v in rec.eigenvalues], "out": str(path)}, indent=2))
    return 0


def _cmd_gauge(args):
    cfg = _with_task(load_config(args.config), "gauge")
    rep = gauge_from_config(cfg)
    print(json.dumps(rep, indent=2))
    return 0 if rep["passed"] else 1


def _parse_patch(text, grid):
    segs = []
    for part in text.split(","):
        bits = part.split(":")
        segs.append((bits[0],) if len(bits) == 1 else (bits[0], int(bits[1]), int(bits[2])))
    return BoundaryPatch(grid, tuple(segs), "cli")


def _cmd_hassell_tao(args):
    from .inverse import hassell_tao_ratio

    if args.bsd.startswith("analytic:"):
        n = int(args.bsd.split(":")[1])
        bsd = analytic_interval_bsd(n, Grid((1.0,), (64,)))
    else:
        bsd = BoundarySpectralData.load(args.bsd)
    patch = _parse_patch(args.patch, bsd.patch.grid)
    ratios, sup, flagged = hassell_tao_ratio(bsd, patch)
    out = {"ratios": [_num(r) for r in ratios], "sup": _num(sup[-1]), "flagged": flagged.tolist()}
    print(json.dumps(out, indent=2))
    return 0 if len(flagged) == 0 else 1


def _cmd_spectral(args):
    cfg = load_config(args.config)
    grid, coeffs, *_ = _build(cfg)
    bsd = _bsd_for(cfg, grid, coeffs, args.modes or cfg.solver.get("modes"))
    path = _resolve(args.out, "bsd.json")
    bsd.save(path)
    print(str(path))
    return 0


def _cmd_reproduce(args):
    sel = None if not args.only else [int(k) for k in args.only.split(",")]
    rep = reproduce_all(sel, args.config_dir)
    return 0 if rep.passed else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="fracdn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="group", required=True)

    ml_p = sub.add_parser("ml", help="Mittag-Leffler evaluation").add_subparsers(dest="cmd", required=True)
    ev = ml_p.add_parser("eval")
    ev.add_argument("--alpha", type=float)
    ev.add_argument("--beta", type=float)
    ev.add_argument("--re", type=float, default=0.0)
    ev.add_argument("--im", type=float, default=0.0)
    ev.add_argument("--csv", help="batch input with columns re, im (optional alpha, beta)")
    ev.add_argument("--out")
    ev.set_defaults(func=_cmd_ml_eval)

    fw = sub.add_parser("forward").add_subparsers(dest="cmd", required=True)
    s = fw.add_parser("solve")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_forward)

    dn = sub.add_parser("dn").add_subparsers(dest="cmd", required=True)
    s = dn.add_parser("compute")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--oracle", action="store_true", help="use the time-stepping oracle")
    s.set_defaults(func=_cmd_dn_compute)
    s = dn.add_parser("sector")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="CSV path; the JSON sidecar goes next to it")
    s.set_defaults(func=_cmd_dn_sector)

    sp = sub.add_parser("spectral").add_subparsers(dest="cmd", required=True)
    s = sp.add_parser("bsd")
    s.add_argument("--config", required=True)
    s.add_argument("--modes", type=int)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_spectral)

    inv = sub.add_parser("invert").add_subparsers(dest="cmd", required=True)
    s = inv.add_parser("recover")
    s.add_argument("--sector", required=True, help="sector JSON sidecar")
    s.add_argument("--modes", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_invert)

    ga = sub.add_parser("gauge").add_subparsers(dest="cmd", required=True)
    s = ga.add_parser("check")
    s.add_argument("--config", required=True)
    s.set_defaults(func=_cmd_gauge)

    dg = sub.add_parser("diag").add_subparsers(dest="cmd", required=True)
    s = dg.add_parser("hassell-tao")
    s.add_argument("--bsd", required=True, help="BSD JSON file or analytic:N for the unit interval")
    s.add_argument("--patch", required=True, help="edges, e.g. left or left:1:20,bottom")
    s.set_defaults(func=_cmd_hassell_tao)

    rp = sub.add_parser("reproduce")
    rp.add_argument("--only", help="comma-separated criterion numbers")
    rp.add_argument("--config-dir", help="directory that must hold the preset JSON files")
    rp.set_defaults(func=_cmd_reproduce)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingPresetError as exc:
        print(f"missing preset: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
