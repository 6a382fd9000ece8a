"""Command-line entry point: one job per invocation, artifacts + manifest in --out.

Exit codes: 0 success, 2 configuration error, 3 numerical accuracy failure,
4 optimizer did not converge (artifacts are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import Units, build_comb_profile, build_pulse, build_spectrum, validate
from .errors import (AccuracyError, ConfigError, DegenerateSubensembleError, DivergentMomentError,
                     GridCoverageError, InfeasibleProblem, InvalidArgument, SpinMemError)
from .fidelity import coherence, subensemble_kernel
from .figures import make_figure
from .io import canonical_json, sha256_bytes, sha256_file, write_csv, write_json
from .optimizer import OptimizationProblem, optimize
from .propagator import default_detuning_grid, selection_spectrum
from .scenario import ScenarioConfig, run_nv_case_study
from .transfer import discrete_oracle, quantile_spins, solve_transfer, transfer_grid

log = logging.getLogger("spinmem")

COMMANDS = ("fidelity", "select", "transfer", "optimize", "scenario", "figure")
NV_DEFAULTS = {
    "linewidth_MHz": 2.6, "splitting_MHz": 2.2, "total_spins": 1e12, "collective_coupling_MHz": 13.0,
    "kappa_inv_us": 55.0, "T_us": 700.0, "reduction": 5e3, "threshold": 0.95, "width_convention": "fwhm",
}
NV_SPECTRUM = {"preset": "nv", "linewidth_MHz": 2.6, "splitting_MHz": 2.2, "total_spins": 1e12,
               "width_convention": "fwhm"}

EXIT_CONFIG, EXIT_ACCURACY, EXIT_NOT_CONVERGED = 2, 3, 4


class _Job:
    def __init__(self, cfg, out, threads, base):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.base = base
        self.units = Units()
        self.artifacts = []
        self.derived = {}
        self.converged = True

    def csv(self, name, columns):
        self.artifacts.append(write_csv(self.out / name, columns))

    def json(self, name, obj):
        self.artifacts.append(write_json(self.out / name, obj))

    def spectrum(self):
        return build_spectrum(self.cfg.get("spectrum"), self.units, self.base)

    def pulse(self, required=True):
        block = self.cfg.get("pulse")
        if block is None:
            if required:
                raise ConfigError("this job needs a 'pulse' block")
            return None
        return build_pulse(block, self.units, self.base)

    def selection(self, pulse):
        grid = self.cfg.get("grid", {})
        span = grid.get("detuning_span_MHz")
        if span is not None:
            span = self.units.mhz("grid", "detuning_span_MHz", span)
        det = default_detuning_grid(pulse.duration, grid.get("detuning_points", 2049), span)
        return selection_spectrum(pulse, det, self.cfg.get("method", "exact"), self.threads)

    def taus(self):
        grid = self.cfg.get("grid", {})
        tmax = self.units.us("grid", "tau_max_us", grid.get("tau_max_us", 1.0))
        return np.linspace(0.0, tmax, grid.get("tau_points", 1001))

    def kernel(self, taus):
        s = self.spectrum()
        p = self.pulse(required=False)
        if p is None:
            return coherence(s, taus)
        sel = self.selection(p)
        self.derived["n_selected"] = float(subensemble_kernel(s, sel, [0.0]).meta["n_selected"])
        return subensemble_kernel(s, sel, taus)


def _run_fidelity(job: _Job):
    k = job.kernel(job.taus())
    F = np.abs(k.values) ** 2
    job.csv("fidelity.csv", {"tau_us": k.times, "F": F})
    job.csv("kernel.csv", {"tau_us": k.times, "F": F, "Re_g": k.values.real, "Im_g": k.values.imag})
    job.derived["F_end"] = float(F[-1])


def _run_select(job: _Job):
    p = job.pulse()
    sel = job.selection(p)
    job.csv("pulse.csv", {"t_us": p.midpoints, "omega_rad_per_us": p.values})
    job.csv("selection.csv", {"delta_rad_per_us": sel.detunings, "P": sel.probabilities})
    job.derived.update({"P_at_zero": float(np.interp(0.0, sel.detunings, sel.probabilities)),
                        "area": p.area, "energy": p.energy, "method": sel.method})
    if "spectrum" in job.cfg:
        job.derived["n_selected"] = float(subensemble_kernel(job.spectrum(), sel, [0.0]).meta["n_selected"])


def _run_transfer(job: _Job):
    block = job.cfg.get("transfer", {})
    if "coupling_MHz" in block:
        G = job.units.mhz("transfer", "coupling_MHz", block["coupling_MHz"])
    elif "tau_tr_us" in block:
        G = math.pi / job.units.us("transfer", "tau_tr_us", block["tau_tr_us"])
    else:
        raise ConfigError("transfer needs 'coupling_MHz' or 'tau_tr_us'")
    if "oracle_spins" in block and "pulse" in job.cfg:
        raise ConfigError("the discrete oracle samples the spectrum itself; drop 'pulse' to use it")
    grid = transfer_grid(math.pi / G, block.get("periods", 2.0), block.get("steps_per_period", 200))
    trace = solve_transfer(job.kernel(grid), G, grid)
    job.csv("transfer.csv", {"tau_us": trace.times, "Re_alpha": trace.alpha.real, "Im_alpha": trace.alpha.imag,
                             "prob": trace.probability})
    rev = trace.revivals()
    job.json("revivals.json", {"coupling_rad_per_us": G, "tau_tr_us": trace.tau_tr, "revivals": rev})
    job.derived["revivals"] = rev
    if "oracle_spins" in block:
        d, eta = quantile_spins(job.spectrum(), block["oracle_spins"], G)
        orc = discrete_oracle(d, eta, grid)
        job.csv("oracle.csv", {"tau_us": orc.times, "Re_alpha": orc.alpha.real, "Im_alpha": orc.alpha.imag,
                               "prob": orc.probability})
        job.derived["oracle_max_deviation"] = float(np.max(np.abs(orc.alpha - trace.alpha)))
        job.derived["oracle_norm_drift"] = orc.meta["norm_drift"]


def _run_optimize(job: _Job):
    b = job.cfg.get("optimize")
    if b is None:
        raise ConfigError("optimize needs an 'optimize' block")
    kw = {k: b[k] for k in ("objective", "method", "n_target", "parameterization", "n_nodes", "n_cells",
                            "detuning_points", "max_outer", "max_inner") if k in b}
    kw["T"] = job.units.us("optimize", "T_us", b["T_us"])
    kw["tau"] = job.units.us("optimize", "tau_us", b["tau_us"])
    if "comb" in b:
        kw["comb"] = build_comb_profile(b["comb"], job.units)
    if "initial" in b:
        kw["initial"] = build_pulse(b["initial"], job.units, job.base)
    if "spectrum" in job.cfg:
        kw["spectrum"] = job.spectrum()
    res = optimize(OptimizationProblem(threads=job.threads, **kw))
    job.csv("pulse.csv", {"t_us": res.pulse.midpoints, "omega_rad_per_us": res.pulse.values})
    job.json("diagnostics.json", res.diagnostics())
    job.derived.update({"objective": res.objective, "fidelity": res.fidelity, "converged": res.converged,
                        "area_residual": res.area_residual, "count_residual": res.count_residual,
                        "euler_lagrange": res.euler_lagrange})
    job.converged = res.converged


def scenario_config(block, units: Units) -> ScenarioConfig:
    kw = {}
    for key, attr in (("linewidth_MHz", "linewidth"), ("splitting_MHz", "splitting"),
                      ("collective_coupling_MHz", "collective_coupling")):
        if key in block:
            kw[attr] = units.mhz("scenario", key, block[key])
    for key, attr in (("T_us", "T"), ("tau_s_us", "tau_s")):
        if key in block:
            kw[attr] = units.us("scenario", key, block[key])
    if "kappa_inv_us" in block:
        units.applied["scenario.kappa_inv_us"] = "cavity lifetime us -> decay rate 1/us"
        kw["kappa"] = 1.0 / block["kappa_inv_us"]
    for key in ("total_spins", "reduction", "threshold", "width_convention", "n_cells", "detuning_points"):
        if key in block:
            kw[key] = block[key]
    return ScenarioConfig(**kw)


def _run_scenario(job: _Job):
    cfg = scenario_config(job.cfg.get("scenario", {}), job.units)
    rep = run_nv_case_study(cfg)
    job.json("report.json", rep.summary)
    job.csv("curves.csv", rep.curves)
    s = rep.summary
    job.derived.update({"tau_tr_us": s["tau_tr_us"], "tau_tr_reduced_us": s["tau_tr_reduced_us"],
                        "fidelity_slope_us": s["fidelity_slope_us"], "storage_time_us": s["storage_time_us"],
                        "storage_time_ratio": s["storage_time_ratio"]})


def _run_figure(job: _Job):
    n = job.cfg.get("figure")
    if n is None:
        raise ConfigError("figure job needs --figure or a 'figure' key")
    files, derived = make_figure(n, job.out, job.threads)
    job.artifacts.extend(files)
    job.derived.update(derived)


HANDLERS = {"fidelity": _run_fidelity, "select": _run_select, "transfer": _run_transfer,
            "optimize": _run_optimize, "scenario": _run_scenario, "figure": _run_figure}


def build_parser():
    ap = argparse.ArgumentParser(prog="spinmem", description="Spin-ensemble memory: selection, storage, transfer.")
    ap.add_argument("command", nargs="?", choices=COMMANDS, help="job type (or 'command' in the config)")
    ap.add_argument("--config", type=Path, help="JSON job configuration")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    ap.add_argument("--figure", type=int, help="figure id to reproduce (2-5)")
    ap.add_argument("--paper-defaults", action="store_true", help="load the NV-centre case-study values")
    ap.add_argument("--threads", type=int, default=None, help="worker threads for detuning sweeps")
    ap.add_argument("--verbose", action="store_true")
    return ap


def _error(kind, exc, code):
    payload = {"error": kind, "message": str(exc), "exit_code": code}
    if isinstance(exc, AccuracyError):
        payload["diagnostics"] = exc.diagnostics
    sys.stderr.write(canonical_json(payload) + "\n")
    return code


def _load(args):
    cfg = {}
    base = None
    if args.config is not None:
        try:
            cfg = json.loads(args.config.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        base = args.config.parent
    if args.command:
        if cfg.get("command", args.command) != args.command:
            raise ConfigError(f"command line says '{args.command}' but config says '{cfg['command']}'")
        cfg["command"] = args.command
    if args.figure is not None:
        cfg["figure"] = args.figure
        cfg.setdefault("command", "figure")
    if args.paper_defaults:
        cfg.setdefault("command", "scenario")
        cfg["scenario"] = {**NV_DEFAULTS, **cfg.get("scenario", {})}
        if cfg["command"] != "scenario":
            cfg.setdefault("spectrum", dict(NV_SPECTRUM))
    if "command" not in cfg:
        raise ConfigError("no command given (positional argument or 'command' in the config)")
    validate(cfg)
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg, base


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, base = _load(args)
        args.out.mkdir(parents=True, exist_ok=True)
        job = _Job(cfg, args.out, args.threads, base)
        log.info("running %s into %s", cfg["command"], args.out)
        HANDLERS[cfg["command"]](job)
    except (ConfigError, InvalidArgument, GridCoverageError, InfeasibleProblem) as exc:
        return _error(type(exc).__name__, exc, EXIT_CONFIG)
    except (AccuracyError, DivergentMomentError, DegenerateSubensembleError) as exc:
        return _error(type(exc).__name__, exc, EXIT_ACCURACY)
    except SpinMemError as exc:
        return _error(type(exc).__name__, exc, EXIT_CONFIG)

    manifest = {
        "tool": "spinmem",
        "version": __version__,
        "command": cfg["command"],
        "config": cfg,
        "config_sha256": sha256_bytes(canonical_json(cfg).encode()),
        "unit_conversions": job.units.applied,
        "internal_units": {"time": "us", "angular_frequency": "rad/us"},
        "artifacts": {Path(p).name: sha256_file(p) for p in job.artifacts},
        "derived": job.derived,
        "status": "ok" if job.converged else "not_converged",
    }
    write_json(args.out / "manifest.json", manifest)
    if not job.converged:
        return _error("NotConverged", "optimizer did not converge; best-so-far artifacts written",
                      EXIT_NOT_CONVERGED)
    log.info("wrote %d artifacts", len(job.artifacts))
    return 0


if __name__ == "__main__":
    sys.exit(main())
