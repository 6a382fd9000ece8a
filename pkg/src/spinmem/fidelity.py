"""Coherence kernel g(tau) and storage fidelity F(tau) = |g(tau)|^2.

    g(tau) = (1/N) ∫ n(omega) exp(-i (omega - omega0) tau) d omega

For a filtered subensemble n' = n P the same transform is normalised by
N' = ∫ n P d omega, so that F'(0) = 1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AccuracyError, DegenerateSubensembleError, InvalidArgument
from .propagator import SelectionSpectrum, excite_probability_approx
from .pulses import Pulse, autocorrelation, check_energy
from .quadrature import filon_transform, uniform_spacing
from .spectra import SpectralDensity, Tabulated, central_moment

KERNEL_TOL = 1e-10
_MAX_PANELS = 1 << 20


@dataclass(frozen=True, eq=False)
class CoherenceKernel:
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def fidelity(self):
        return fidelity_from_kernel(self)

    def to_csv(self, path):
        F = np.abs(self.values) ** 2
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau_us", "F", "Re_g", "Im_g"])
            for t, f, g in zip(self.times, F, self.values):
                w.writerow([repr(float(t)), repr(float(f)), repr(float(g.real)), repr(float(g.imag))])


@dataclass(frozen=True, eq=False)
class FidelityCurve:
    times: np.ndarray
    values: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau_us", "F"])
            for t, f in zip(self.times, self.values):
                w.writerow([repr(float(t)), repr(float(f))])


def _with_zero(taus):
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    return np.concatenate([[0.0], taus.ravel()]), taus.shape


def _adaptive_filon(fn, a, b, taus, omega0, scale, tol):
    n = 65
    prev = None
    while n <= _MAX_PANELS:
        x = np.linspace(a, b, n)
        cur = filon_transform(fn(x), a - omega0, x[1] - x[0], taus)
        if prev is not None:
            err = float(np.max(np.abs(cur - prev)))
            if err <= tol * scale:
                return cur
        prev = cur
        n = 2 * n - 1
    raise AccuracyError("oscillatory quadrature did not converge",
                        {"interval": (a, b), "last_change": err, "target": tol * scale, "nodes": n})


def _component_transform(s, c, taus, tol):
    if isinstance(c, Tabulated) and s.windows is None:
        return filon_transform(c.values, c.omega[0] - s.omega0, c.spacing, taus)
    if s.windows is None:
        return c.transform(taus, s.omega0)
    out = np.zeros(taus.shape, dtype=complex)
    scale = max(c.weight, 1e-300)
    for a, b in s.segments(c):
        out += _adaptive_filon(c.density, a, b, taus, s.omega0, scale, tol)
    return out


def coherence(s: SpectralDensity, taus, tol=KERNEL_TOL) -> CoherenceKernel:
    """g(tau) of a spectrum; closed forms for unwindowed analytic lines, Filon otherwise."""
    t, shape = _with_zero(taus)
    acc = np.zeros(t.shape, dtype=complex)
    for c in s.components:
        acc += _component_transform(s, c, t, tol)
    total = acc[0].real
    if not total > 0:
        raise DegenerateSubensembleError("spectrum has no weight")
    return CoherenceKernel(t[1:].reshape(shape), (acc[1:] / total).reshape(shape), {"total": total})


def fidelity_from_kernel(k: CoherenceKernel) -> FidelityCurve:
    return FidelityCurve(np.asarray(k.times), np.clip(np.abs(k.values) ** 2, 0.0, 1.0))


def fidelity(s: SpectralDensity, taus) -> FidelityCurve:
    return fidelity_from_kernel(coherence(s, taus))


def subensemble_kernel(s: SpectralDensity, sel: SelectionSpectrum, taus,
                       tail_correction=True) -> CoherenceKernel:
    """Kernel of n(omega) P(omega - omega0), normalised by N'.

    When the selection carries its pulse, the part of the first-order
    spectrum outside the detuning grid is restored from the pulse
    autocorrelation, using ∫ |Omega~(delta)|^2 exp(-i delta tau) d delta
    = 2 pi ∫ Omega(t + tau) Omega(t) dt and taking n flat beyond the grid.
    The exact and first-order spectra share their slow wings, so this
    removes the truncation error that otherwise rounds off the short-time
    behaviour.
    """
    delta = sel.detunings
    h = uniform_spacing(delta)
    if h is None or delta.size % 2 == 0:
        raise InvalidArgument("subensemble kernel needs a uniform detuning grid with an odd number of points")
    t, shape = _with_zero(taus)
    n = s.density(s.omega0 + delta)
    acc = filon_transform(n * sel.probabilities, delta[0], h, t)
    corrected = False
    if tail_correction and sel.pulse is not None:
        p = sel.pulse
        approx = sel.probabilities if sel.method == "approximate" else excite_probability_approx(p, delta)
        outside = 2 * math.pi * autocorrelation(p, np.abs(t)) - filon_transform(approx, delta[0], h, t)
        n_edge = 0.5 * (n[0] + n[-1])
        acc = acc + n_edge * outside
        corrected = True
    total = acc[0].real
    if not total > 0:
        raise DegenerateSubensembleError("selected subensemble is empty")
    return CoherenceKernel(t[1:].reshape(shape), (acc[1:] / total).reshape(shape),
                           {"n_selected": total, "tail_corrected": corrected, "method": sel.method})


def subensemble_fidelity(s: SpectralDensity, sel: SelectionSpectrum, taus, tail_correction=True) -> FidelityCurve:
    return fidelity_from_kernel(subensemble_kernel(s, sel, taus, tail_correction))


def selected_spins(s: SpectralDensity, sel: SelectionSpectrum, tail_correction=True) -> float:
    """N' = ∫ n(omega) P(omega - omega0) d omega."""
    return subensemble_kernel(s, sel, [0.0], tail_correction).meta["n_selected"]


def taylor_fidelity(s: SpectralDensity, tau, order: int) -> float:
    """|sum_{k<=order} (-1)^k tau^2k / (2k)! <(omega-omega0)^2k>|^2."""
    if int(order) != order or order < 0:
        raise InvalidArgument("order must be a non-negative integer")
    series = 0.0
    for k in range(int(order) + 1):
        mom = central_moment(s, 2 * k)
        series += (-1) ** k * tau ** (2 * k) / math.factorial(2 * k) * mom
    return series * series


def comb_fidelity_analytic(T, tau_s) -> float:
    """cos^2(pi / (T/tau_s + 1)) for the comb pulse with T = m tau_s."""
    if not (T > 0 and tau_s > 0):
        raise InvalidArgument("T and tau_s must be positive")
    m = T / tau_s
    if abs(m - round(m)) > 1e-9 * m or round(m) < 1:
        raise InvalidArgument(f"T / tau_s = {m} is not a positive integer")
    return math.cos(math.pi / (round(m) + 1)) ** 2


def autocorr_fidelity(p: Pulse, n0, tau):
    """Flat-spectrum first-order fidelity (A(tau) / A(0))^2.

    ``n0`` cancels between numerator and N' = 2 pi n0 ∫ Omega^2; it is kept
    so callers can pass the same arguments as to :func:`approximate_selected_spins`.
    """
    check_energy(p)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise InvalidArgument("tau must be non-negative")
    ratio = autocorrelation(p, tau) / p.energy
    return ratio * ratio


def approximate_selected_spins(p: Pulse, n0):
    """N' ≈ 2 pi n0 ∫ Omega^2 dt."""
    return 2 * math.pi * n0 * p.energy


def sin_pulse_fidelity(tau, T):
    """Closed-form first-order fidelity of the sin pulse; zero for tau >= T."""
    x = np.clip(np.asarray(tau, dtype=float) / T, 0.0, 1.0)
    g = (1 - x) * np.cos(math.pi * x) + np.sin(math.pi * x) / math.pi
    out = g * g
    return float(out) if out.ndim == 0 else out


def lorentzian_fidelity(halfwidth, tau):
    return np.exp(-2 * halfwidth * np.asarray(tau, dtype=float))


def rectangle_fidelity(halfwidth, tau):
    return np.sinc(halfwidth * np.asarray(tau, dtype=float) / math.pi) ** 2


def flat_spectrum(n0=1.0, omega0=0.0, halfwidth=1e12):
    """Practically flat density n0 around omega0 (a very wide rectangle)."""
    from .spectra import Rectangle
    return SpectralDensity((Rectangle(omega0, halfwidth, n0),), omega0=omega0, meta={"flat": True})
