"""Selection spectra P(delta) of a preparation pulse.

The exact route propagates |g> under H(t) = (delta/2) sigma_z + Omega(t) sigma_x
through the piecewise-constant envelope, one closed-form SU(2) step per
cell.  The approximate route is the first-order (Fourier) amplitude.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AccuracyError, InvalidArgument
from .pulses import Pulse

DEFAULT_DETUNING_POINTS = 2049
DEFAULT_SPAN = 40 * math.pi  # in units of 1/T


@dataclass(frozen=True, eq=False)
class SelectionSpectrum:
    detunings: np.ndarray
    probabilities: np.ndarray
    method: str
    pulse: Pulse | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.detunings, dtype=float)
        p = np.asarray(self.probabilities, dtype=float)
        if d.shape != p.shape or d.ndim != 1:
            raise InvalidArgument("detunings and probabilities must be 1-D arrays of equal length")
        if self.method not in ("exact", "approximate"):
            raise InvalidArgument("method must be 'exact' or 'approximate'")
        object.__setattr__(self, "detunings", d)
        object.__setattr__(self, "probabilities", p)

    def to_csv(self, path, sidecar=True):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["delta_rad_per_us", "P"])
            for a, b in zip(self.detunings, self.probabilities):
                w.writerow([repr(float(a)), repr(float(b))])
        if sidecar:
            info = {"method": self.method, **self.meta}
            if self.pulse is not None:
                info["pulse"] = {"family": self.pulse.family, "duration": self.pulse.duration,
                                 "n_cells": self.pulse.n_cells, "params": self.pulse.params}
            with open(str(path) + ".json", "w") as fh:
                json.dump(info, fh, indent=2, sort_keys=True, default=float)


def default_detuning_grid(T, points=DEFAULT_DETUNING_POINTS, span=None):
    """Symmetric grid over |delta| <= span (default 40 pi / T); ``points`` is forced odd."""
    if not T > 0:
        raise InvalidArgument("T must be positive")
    span = DEFAULT_SPAN / T if span is None else span
    points = int(points) | 1
    return np.linspace(-span, span, points)


def _step_coefficients(omega, delta, dt):
    """cos(r dt) and sin(r dt)/r for r = sqrt(delta^2/4 + omega^2)."""
    r = np.sqrt(0.25 * delta * delta + omega * omega)
    c = np.cos(r * dt)
    f = dt * np.sinc(r * dt / math.pi)
    return r, c, f


def propagate(values, dt, delta, check_unitarity=False):
    """Final amplitudes (a_g, a_e) starting from |g>, vectorised over ``delta``."""
    delta = np.asarray(delta, dtype=float)
    a = np.ones(delta.shape, dtype=complex)
    b = np.zeros(delta.shape, dtype=complex)
    half = 0.5 * delta
    worst = 0.0
    for om in values:
        _, c, f = _step_coefficients(om, delta, dt)
        a, b = (c - 1j * f * half) * a - 1j * f * om * b, -1j * f * om * a + (c + 1j * f * half) * b
        if check_unitarity:
            worst = max(worst, float(np.max(np.abs(np.abs(a) ** 2 + np.abs(b) ** 2 - 1))))
    if check_unitarity and worst > 1e-10:
        raise AccuracyError("propagation lost unitarity", {"max_norm_defect": worst})
    return (a, b, worst) if check_unitarity else (a, b)


def _map_chunks(fn, delta, threads):
    if threads is None or threads <= 1 or delta.size < 64:
        return fn(delta)
    chunks = np.array_split(delta, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(fn, chunks))
    return np.concatenate(parts)


def excite_probability_exact(p: Pulse, delta, threads=None):
    """|<e| U(T) |g>|^2 for detuning(s) ``delta``."""
    d = np.asarray(delta, dtype=float)
    out = _map_chunks(lambda x: np.abs(propagate(p.values, p.dt, x)[1]) ** 2, d.ravel(), threads)
    out = np.minimum(out, 1.0).reshape(d.shape)
    return float(out) if out.ndim == 0 else out


def fourier_amplitude(p: Pulse, delta):
    """∫_0^T Omega(t) exp(-i delta t) dt, exact for the piecewise-constant envelope."""
    d = np.asarray(delta, dtype=float).ravel()
    dt = p.dt
    shape = np.sinc(d * dt / (2 * math.pi)) * dt  # sin(x)/x with x = delta dt / 2
    out = np.empty(d.shape, dtype=complex)
    mids = p.midpoints
    step = max(1, (1 << 21) // p.n_cells)
    for s in range(0, d.size, step):
        dd = d[s:s + step]
        out[s:s + step] = np.exp(-1j * np.outer(dd, mids)) @ p.values
    out *= shape
    return out.reshape(np.shape(delta))


def excite_probability_approx(p: Pulse, delta, threads=None):
    """|∫ Omega(t) exp(-i delta t) dt|^2; not bounded by 1."""
    d = np.asarray(delta, dtype=float)
    out = _map_chunks(lambda x: np.abs(fourier_amplitude(p, x)) ** 2, d.ravel(), threads).reshape(d.shape)
    return float(out) if out.ndim == 0 else out


def square_closed_form(delta, T):
    """(pi^2/4) sinc^2(sqrt(pi^2 + delta^2 T^2)/2) for the square pi-pulse."""
    x = 0.5 * np.sqrt(math.pi ** 2 + (np.asarray(delta, dtype=float) * T) ** 2)
    return (math.pi ** 2 / 4) * np.sinc(x / math.pi) ** 2


def selection_spectrum(p: Pulse, grid=None, method="exact", threads=None):
    if grid is None:
        grid = default_detuning_grid(p.duration)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise InvalidArgument("detuning grid must be strictly increasing")
    if method == "exact":
        prob = excite_probability_exact(p, grid, threads)
    elif method == "approximate":
        prob = excite_probability_approx(p, grid, threads)
    else:
        raise InvalidArgument("method must be 'exact' or 'approximate'")
    return SelectionSpectrum(grid, np.asarray(prob), method, p, {"n_cells": p.n_cells, "duration": p.duration})


def probability_gradient(values, dt, delta):
    """P(delta) and dP/dOmega_k for every cell k (shape: len(delta) x M).

    Forward states are stored, then a backward sweep carries the co-state
    <e| U_M ... U_{k+1}; the step derivative is taken analytically.
    """
    values = np.asarray(values, dtype=float)
    delta = np.asarray(delta, dtype=float)
    M, K = values.size, delta.size
    half = 0.5 * delta
    states = np.empty((M + 1, 2, K), dtype=complex)
    states[0, 0] = 1.0
    states[0, 1] = 0.0
    coeff = []
    for k, om in enumerate(values):
        r, c, f = _step_coefficients(om, delta, dt)
        a, b = states[k]
        states[k + 1, 0] = (c - 1j * f * half) * a - 1j * f * om * b
        states[k + 1, 1] = -1j * f * om * a + (c + 1j * f * half) * b
        coeff.append((r, c, f))
    b_final = states[M, 1]
    prob = np.abs(b_final) ** 2

    grad = np.empty((K, M))
    # co-state row vector x = <e| U_M ... U_{k+1}
    x0 = np.zeros(K, dtype=complex)
    x1 = np.ones(K, dtype=complex)
    for k in range(M - 1, -1, -1):
        om = values[k]
        r, c, f = coeff[k]
        rdt = r * dt
        # q = d(sin(r dt)/r)/dr / r, regular at r -> 0
        small = rdt < 1e-3
        q = np.empty_like(r)
        rs = rdt[small]
        q[small] = -dt ** 3 / 3 * (1 - rs * rs / 10)
        rb = r[~small]
        q[~small] = (dt * np.cos(rb * dt) - np.sin(rb * dt) / rb) / (rb * rb)
        dI = -dt * om * f
        dh = q * om
        # dU = dI*1 - i [dh * h + f * sigma_x], h = half*sigma_z + om*sigma_x
        u00 = dI - 1j * dh * half
        u11 = dI + 1j * dh * half
        u01 = -1j * (dh * om + f)
        a, b = states[k]
        da = u00 * a + u01 * b
        db = u01 * a + u11 * b
        amp = x0 * da + x1 * db
        grad[:, k] = 2 * np.real(np.conj(b_final) * amp)
        # x <- x U_k
        g00 = c - 1j * f * half
        g11 = c + 1j * f * half
        g01 = -1j * f * om
        x0, x1 = x0 * g00 + x1 * g01, x0 * g01 + x1 * g11
    return prob, grad
