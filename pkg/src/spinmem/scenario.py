"""Error budget for transfer + storage, and the NV-centre case study.

Units in this module follow the rest of the library: any consistent set.
:class:`ScenarioConfig` carries angular frequencies in rad/us and times in
us, which is what the command line hands over after unit conversion.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import AccuracyError, InvalidArgument
from .fidelity import coherence, subensemble_kernel
from .propagator import default_detuning_grid, selection_spectrum
from .pulses import make_sin, make_square
from .spectra import SpectralDensity, make_nv_triplet

TWO_PI = 2 * math.pi
VARIANCE_PREFACTOR = (2 / math.pi) ** 8
COUNT_PREFACTOR = math.pi ** 3.6 / 2 ** 4
PRINTED_MIN_PREFACTOR = 2.0


@dataclass(frozen=True)
class ErrorBudget:
    eps_tr: float
    eps_s: float
    total: float
    n_selected: float
    tau_tr: float
    printed_minimum: float | None = None
    degenerate: bool = False
    label: str = "model estimate"


def _check_positive(**kw):
    for k, v in kw.items():
        if not (v > 0 and math.isfinite(v)):
            raise InvalidArgument(f"{k} must be positive and finite, got {v}")


def budget_terms(n_selected, kappa, eta, n0, tau_s):
    """(eps_tr, eps_s) = (kappa pi / (eta sqrt N'), (2/pi)^8 (N'/n0)^2 tau_s^2)."""
    eps_tr = kappa * math.pi / (eta * math.sqrt(n_selected))
    eps_s = VARIANCE_PREFACTOR * (n_selected / n0) ** 2 * tau_s ** 2
    return eps_tr, eps_s


def budget_group(kappa, eta, n0, tau_s):
    """kappa^2 tau_s / (eta^2 n0), the single dimensionless group the minimum depends on."""
    return kappa ** 2 * tau_s / (eta ** 2 * n0)


def error_budget_closed_form(kappa, eta, n0, tau_s) -> ErrorBudget:
    """Stationary point of eps(N') in closed form.

    N' = (pi^{18/5} / 2^4) (kappa n0^2 / (eta tau_s^2))^{2/5}.  ``total`` is
    eps_tr + eps_s evaluated there (5 pi^{-4/5} X^{2/5} with X the budget
    group); ``printed_minimum`` is the rounded 2 X^{2/5}.
    """
    _check_positive(eta=eta, n0=n0, tau_s=tau_s)
    if kappa < 0:
        raise InvalidArgument("kappa must be non-negative")
    if kappa == 0:
        return ErrorBudget(0.0, 0.0, 0.0, 0.0, math.inf, 0.0, degenerate=True)
    n_opt = COUNT_PREFACTOR * (kappa * n0 ** 2 / (eta * tau_s ** 2)) ** 0.4
    eps_tr, eps_s = budget_terms(n_opt, kappa, eta, n0, tau_s)
    printed = PRINTED_MIN_PREFACTOR * budget_group(kappa, eta, n0, tau_s) ** 0.4
    return ErrorBudget(eps_tr, eps_s, eps_tr + eps_s, n_opt, math.pi / (eta * math.sqrt(n_opt)), printed)


def error_budget_numeric(kappa, eta, n0, tau_s) -> ErrorBudget:
    """Minimise eps(N') numerically (bounded search in log N' around the closed form)."""
    ref = error_budget_closed_form(kappa, eta, n0, tau_s)
    if ref.degenerate:
        return ref
    centre = math.log(ref.n_selected)

    def eps(logn):
        return sum(budget_terms(math.exp(logn), kappa, eta, n0, tau_s))

    res = minimize_scalar(eps, bounds=(centre - 12, centre + 12), method="bounded",
                          options={"xatol": 1e-10})
    n_opt = math.exp(res.x)
    eps_tr, eps_s = budget_terms(n_opt, kappa, eta, n0, tau_s)
    return ErrorBudget(eps_tr, eps_s, eps_tr + eps_s, n_opt, math.pi / (eta * math.sqrt(n_opt)))


def variance_of_selected(n0, T=None, n_selected=None):
    """<(omega - omega0)^2> ~ (2/pi)^8 (N'/n0)^2.

    Give either ``n_selected`` or a preparation time ``T``, in which case
    the sin-pulse count N' = pi^5 n0 / (16 T) is used (variance pi^2/T^2).
    """
    _check_positive(n0=n0)
    if (T is None) == (n_selected is None):
        raise InvalidArgument("give exactly one of T or n_selected")
    if n_selected is None:
        _check_positive(T=T)
        n_selected = math.pi ** 5 * n0 / (16 * T)
    _check_positive(n_selected=n_selected)
    return VARIANCE_PREFACTOR * (n_selected / n0) ** 2


# -- storage-time helpers ----------------------------------------------------------

def storage_time(fidelity_at, threshold, upper, samples=400, rtol=1e-3):
    """First tau where F'(tau) falls to ``threshold``: coarse scan, then Brent.

    ``fidelity_at`` maps an array of tau to F'.  Raises AccuracyError when
    the curve stays above the threshold up to ``upper``.
    """
    taus = np.linspace(0.0, upper, samples + 1)
    F = fidelity_at(taus)
    below = np.nonzero(F <= threshold)[0]
    if below.size == 0:
        raise AccuracyError("fidelity never reaches the threshold in the scanned range",
                            {"threshold": threshold, "upper": upper, "min_F": float(F.min())})
    k = below[0]
    if k == 0:
        return 0.0
    f = lambda t: float(fidelity_at(np.array([t]))[0]) - threshold
    return brentq(f, taus[k - 1], taus[k], rtol=rtol * 1e-3)


def fidelity_slope(s: SpectralDensity, tau_max, points=41):
    """t* in F(tau) ~ 1 - tau / t*, least squares through the origin on (0, tau_max]."""
    taus = np.linspace(0.0, tau_max, points)[1:]
    loss = 1.0 - np.abs(coherence(s, taus).values) ** 2
    slope = float(taus @ loss / (taus @ taus))
    return 1.0 / slope


# -- NV case study ---------------------------------------------------------------

@dataclass
class ScenarioConfig:
    """Physical inputs of a case study; rad/us for rates, us for times.

    Defaults are the NV-centre ensemble values: 2.6 MHz Lorentzian lines,
    2.2 MHz hyperfine splitting, 10^12 spins, collective coupling
    2 pi x 13 MHz, cavity lifetime 55 us, 0.7 ms preparation and a 5000-fold
    spin-count reduction.
    """

    linewidth: float = TWO_PI * 2.6
    splitting: float = TWO_PI * 2.2
    total_spins: float = 1e12
    collective_coupling: float = TWO_PI * 13.0
    kappa: float = 1 / 55.0
    T: float = 700.0
    reduction: float = 5e3
    threshold: float = 0.95
    width_convention: str = "fwhm"
    slope_window: float = 2e-3
    n_cells: int = 4096
    detuning_points: int = 2049
    tau_s: float | None = None

    def __post_init__(self):
        _check_positive(linewidth=self.linewidth, total_spins=self.total_spins,
                        collective_coupling=self.collective_coupling, T=self.T,
                        reduction=self.reduction, slope_window=self.slope_window)
        if self.kappa < 0 or self.splitting < 0:
            raise InvalidArgument("kappa and splitting must be non-negative")
        if not 0 < self.threshold < 1:
            raise InvalidArgument("threshold must lie in (0, 1)")
        if self.width_convention not in ("hwhm", "fwhm"):
            raise InvalidArgument("width_convention must be 'hwhm' or 'fwhm'")
        if self.collective_coupling <= self.kappa:
            warnings.warn("collective coupling does not exceed the cavity decay rate", RuntimeWarning)

    @property
    def single_coupling(self):
        return self.collective_coupling / math.sqrt(self.total_spins)

    def spectrum(self, convention=None):
        return make_nv_triplet(0.0, self.linewidth, self.splitting, self.total_spins,
                               convention or self.width_convention)


@dataclass
class CaseStudyReport:
    summary: dict
    curves: dict = field(default_factory=dict)

    def to_dict(self):
        return {"summary": self.summary, "curve_columns": sorted(self.curves)}


def _selected_curve(s, pulse, cfg, taus):
    grid = default_detuning_grid(pulse.duration, cfg.detuning_points)
    sel = selection_spectrum(pulse, grid)

    def F(t):
        return np.abs(subensemble_kernel(s, sel, t).values) ** 2

    return sel, F, F(taus)


def run_nv_case_study(cfg: ScenarioConfig | None = None, curve_points=401) -> CaseStudyReport:
    """Fidelity slope, transfer times, sin vs square storage curves and 95% times."""
    cfg = cfg or ScenarioConfig()
    out = {"config": asdict(cfg), "units": {"rate": "rad/us", "time": "us"}}

    slopes = {}
    for conv in ("hwhm", "fwhm"):
        slopes[conv] = fidelity_slope(cfg.spectrum(conv), cfg.slope_window)
    out["fidelity_slope_us"] = slopes
    out["fidelity_slope_us_primary"] = slopes[cfg.width_convention]

    tau_tr = math.pi / cfg.collective_coupling
    out["tau_tr_us"] = tau_tr
    out["tau_tr_reduced_us"] = tau_tr * math.sqrt(cfg.reduction)

    s = cfg.spectrum()
    taus = np.linspace(0.0, cfg.T, curve_points)
    curves = {"tau_us": taus}
    times = {}
    for name, factory in (("sin", make_sin), ("square", make_square)):
        pulse = factory(cfg.T, cfg.n_cells)
        sel, F, values = _selected_curve(s, pulse, cfg, taus)
        curves[f"F_{name}"] = values
        n_sel = float(subensemble_kernel(s, sel, [0.0]).meta["n_selected"])
        times[name] = storage_time(F, cfg.threshold, cfg.T)
        out[f"n_selected_{name}"] = n_sel
        out[f"tau_tr_selected_{name}_us"] = math.pi / (cfg.single_coupling * math.sqrt(n_sel))
    out["storage_time_us"] = times
    out["storage_time_ratio"] = times["sin"] / times["square"] if times["square"] > 0 else math.inf
    out["storage_time_original_us"] = storage_time(
        lambda t: np.abs(coherence(s, t).values) ** 2, cfg.threshold, 50 * slopes[cfg.width_convention])

    n0 = float(s.density(s.omega0))
    out["n0_per_rad_per_us"] = n0
    tau_s = cfg.tau_s if cfg.tau_s is not None else times["sin"]
    budget = error_budget_closed_form(cfg.kappa, cfg.single_coupling, n0, tau_s)
    out["error_budget"] = {**asdict(budget), "tau_s_us": tau_s}
    return CaseStudyReport(out, curves)
