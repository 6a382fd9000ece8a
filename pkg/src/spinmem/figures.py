"""Plot-ready data for the four figure families (CSV, one column per curve).

Times are in us and angular frequencies in rad/us; each figure picks a
reference time scale of 1 us (T, tau_tr or tau_s as appropriate).
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .fidelity import autocorr_fidelity, flat_spectrum, sin_pulse_fidelity, subensemble_kernel
from .io import write_csv, write_json
from .optimizer import OptimizationProblem, optimize, selected_count
from .propagator import default_detuning_grid, excite_probability_approx, selection_spectrum
from .pulses import CombProfile, make_comb, make_sin, make_square, make_truncated_sinc
from .transfer import analytic_transfer_sin, subensemble_transfer

FIGURES = (2, 3, 4, 5)


def figure_2(out: Path, threads=None):
    """Square vs sin pulse: envelopes, exact and first-order P, and delta^2 P."""
    T = 1.0
    sq, sn = make_square(T, 1024), make_sin(T, 1024)
    grid = default_detuning_grid(T, 2049)
    cols = {"delta_rad_per_us": grid}
    derived = {}
    for name, p in (("square", sq), ("sin", sn)):
        exact = selection_spectrum(p, grid, threads=threads).probabilities
        cols[f"P_exact_{name}"] = exact
        cols[f"P_approx_{name}"] = excite_probability_approx(p, grid)
        cols[f"delta2P_exact_{name}"] = grid ** 2 * exact
        derived[f"P0_{name}"] = float(exact[grid.size // 2])
    files = [write_csv(out / "fig2_pulses.csv", {"t_us": sq.midpoints, "omega_square": sq.values,
                                                 "omega_sin": sn.values}),
             write_csv(out / "fig2_spectra.csv", cols)]
    return files, derived


def figure_3(out: Path, threads=None):
    """F'(tau) for square / sin / closed form with T = 10 tau_tr, plus Rabi inset."""
    tau_tr = 1.0
    T = 10 * tau_tr
    flat = flat_spectrum()
    taus = np.linspace(0.0, T, 501)
    cols = {"tau_us": taus}
    derived = {}
    sels = {}
    for name, p in (("square", make_square(T)), ("sin", make_sin(T))):
        sel = selection_spectrum(p, threads=threads)
        sels[name] = sel
        cols[f"F_{name}"] = np.abs(subensemble_kernel(flat, sel, taus).values) ** 2
    cols["F_sin_closed_form"] = sin_pulse_fidelity(taus, T)
    rabi = {}
    for name, sel in sels.items():
        tr = subensemble_transfer(flat, sel, tau_tr)
        rabi["tau_us"] = tr.times
        rabi[f"prob_{name}"] = tr.probability
        derived[f"revival_{name}"] = tr.revivals()
    rabi["prob_closed_form"] = analytic_transfer_sin(rabi["tau_us"], tau_tr, T) ** 2
    files = [write_csv(out / "fig3_fidelity.csv", cols), write_csv(out / "fig3_rabi.csv", rabi)]
    return files, derived


def figure_4(out: Path, threads=None):
    """Comb pulses (m = 5) for delta-like, tau_s/5-wide and uniform xi, with their spectra."""
    tau_s, m = 1.0, 5
    profiles = {"delta": CombProfile.delta(tau_s, m), "rect": CombProfile.rectangle(tau_s, m, 9),
                "uniform": CombProfile.uniform(tau_s, m)}
    pulses = {k: make_comb(v) for k, v in profiles.items()}
    first = next(iter(pulses.values()))
    grid = np.linspace(-60 * math.pi, 60 * math.pi, 4097)
    pcols = {"t_us": first.midpoints}
    scols = {"delta_rad_per_us": grid}
    derived = {}
    for k, p in pulses.items():
        pcols[f"omega_{k}"] = p.values
        scols[f"P_exact_{k}"] = selection_spectrum(p, grid, threads=threads).probabilities
        derived[k] = {"F_at_tau_s": float(autocorr_fidelity(p, 1.0, tau_s)), "xi_energy": profiles[k].xi_energy,
                      "selected_spins_first_order": 2 * math.pi * p.energy}
    files = [write_csv(out / "fig4_pulses.csv", pcols), write_csv(out / "fig4_spectra.csv", scols)]
    write_json(out / "fig4_summary.json", derived)
    files.append(out / "fig4_summary.json")
    return files, derived


def figure_5(out: Path, threads=None):
    """Numerically optimised pulses: fixed N' over a long window vs shortest-T narrow selection."""
    T, M = 1.0, 256
    sinc = make_truncated_sinc(T, 3, M)
    long = OptimizationProblem("integrated", T=T, tau=0.05, method="exact", n_cells=M, n_nodes=64,
                               max_outer=15, max_inner=400, threads=threads)
    long.n_target = selected_count(long, sinc)
    short = OptimizationProblem("window", T=T, tau=0.03, method="exact", n_cells=M, n_nodes=32,
                                max_outer=15, max_inner=400, threads=threads)
    res_long, res_short = optimize(long), optimize(short)
    grid = default_detuning_grid(T, 2049)
    sin = make_sin(T, M)
    refs = {"opt_long": res_long.pulse, "sinc": sinc, "opt_short": res_short.pulse, "sin": sin}
    pcols = {"t_us": sin.midpoints}
    scols = {"delta_rad_per_us": grid}
    for k, p in refs.items():
        pcols[f"omega_{k}"] = p.values
        scols[f"P_exact_{k}"] = selection_spectrum(p, grid, threads=threads).probabilities
    files = [write_csv(out / "fig5_pulses.csv", pcols), write_csv(out / "fig5_spectra.csv", scols)]
    derived = {"long": res_long.diagnostics(), "short": res_short.diagnostics()}
    write_json(out / "fig5_optimizer.json", derived)
    files.append(out / "fig5_optimizer.json")
    derived = {"long_converged": res_long.converged, "short_converged": res_short.converged,
               "long_fidelity": res_long.fidelity, "short_objective": res_short.objective}
    return files, derived


def make_figure(n, out, threads=None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        fn = {2: figure_2, 3: figure_3, 4: figure_4, 5: figure_5}[int(n)]
    except (KeyError, ValueError):
        raise InvalidArgument(f"unknown figure {n}; choose from {FIGURES}") from None
    return fn(out, threads)
