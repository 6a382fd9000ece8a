"""Field <-> ensemble excitation exchange.

The reduced dynamics is the Volterra integro-differential equation

    d alpha/d tau = -G^2 ∫_0^tau alpha(tau') g(tau - tau') d tau',

with G = eta_bar sqrt(N') the collective coupling and g the (complex)
coherence kernel of the subensemble.  :func:`discrete_oracle` integrates the
full field + J-spin amplitude equations instead and serves as a brute-force
check.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import AccuracyError, GridCoverageError, InvalidArgument
from .fidelity import CoherenceKernel, subensemble_kernel
from .quadrature import uniform_spacing

STEPS_PER_PERIOD = 200


@dataclass(frozen=True, eq=False)
class TransferTrace:
    times: np.ndarray
    alpha: np.ndarray
    coupling: float
    meta: dict = field(default_factory=dict)

    @property
    def tau_tr(self):
        return math.pi / self.coupling

    @property
    def probability(self):
        return np.abs(self.alpha) ** 2

    def at(self, tau):
        """alpha(tau), spline-interpolated off the grid."""
        tau = np.asarray(tau, dtype=float)
        idx = np.searchsorted(self.times, tau)
        exact = (idx < self.times.size) & np.isclose(self.times[np.minimum(idx, self.times.size - 1)], tau,
                                                     rtol=0, atol=1e-12 * self.times[-1])
        if np.all(exact):
            return self.alpha[np.minimum(idx, self.times.size - 1)]
        spline = CubicSpline(self.times, self.alpha)
        return spline(tau)

    def revivals(self, count=None):
        """{k: |alpha(k tau_tr)|^2} for every k tau_tr inside the trace."""
        kmax = int(math.floor(self.times[-1] / self.tau_tr * (1 + 1e-12)))
        if count is not None:
            kmax = min(kmax, count)
        ks = np.arange(1, kmax + 1)
        vals = np.abs(self.at(ks * self.tau_tr)) ** 2 if kmax else np.array([])
        return {int(k): float(v) for k, v in zip(ks, np.atleast_1d(vals))}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau_us", "Re_alpha", "Im_alpha", "prob"])
            for t, a in zip(self.times, self.alpha):
                w.writerow([repr(float(t)), repr(float(a.real)), repr(float(a.imag)), repr(float(abs(a) ** 2))])

    def revivals_json(self, path):
        with open(path, "w") as fh:
            json.dump({"coupling": self.coupling, "tau_tr": self.tau_tr,
                       "revivals": {str(k): v for k, v in self.revivals().items()}}, fh, indent=2)


def transfer_grid(tau_tr, periods=2.0, steps_per_period=STEPS_PER_PERIOD):
    """Uniform grid over ``periods`` Rabi periods (one period = 2 tau_tr)."""
    if not tau_tr > 0:
        raise InvalidArgument("tau_tr must be positive")
    n = int(round(periods * steps_per_period))
    return np.arange(n + 1) * (2 * tau_tr / steps_per_period)


def solve_transfer(kernel: CoherenceKernel, coupling, times=None) -> TransferTrace:
    """March the Volterra equation with the trapezoidal rule.

    Both the memory integral and the time derivative use the trapezoidal
    rule; the new value enters linearly, so the implicit step is solved in
    closed form (second order, no corrector iterations needed).
    """
    if not coupling > 0:
        raise InvalidArgument("collective coupling must be positive")
    kt = np.asarray(kernel.times, dtype=float)
    kv = np.asarray(kernel.values, dtype=complex)
    if times is None:
        times = kt
    times = np.asarray(times, dtype=float)
    h = uniform_spacing(times)
    if h is None or times[0] != 0.0:
        raise InvalidArgument("transfer grid must be uniform and start at 0")
    if kt.size == times.size and np.allclose(kt, times, rtol=0, atol=1e-12 * times[-1]):
        g = kv
    else:
        if kt[0] > 0 or kt[-1] < times[-1] * (1 - 1e-12):
            raise GridCoverageError(
                f"kernel covers [{kt[0]}, {kt[-1]}] but the transfer needs [0, {times[-1]}]")
        g = CubicSpline(kt, kv)(times)

    G2 = coupling * coupling
    n = times.size - 1
    alpha = np.zeros(n + 1, dtype=complex)
    memory = np.zeros(n + 1, dtype=complex)
    alpha[0] = 1.0
    denom = 1.0 + 0.25 * h * h * G2 * g[0]
    for k in range(n):
        # known part of I_{k+1} = h [g_{k+1} a_0/2 + sum_{j=1..k} g_{k+1-j} a_j + g_0 a_{k+1}/2]
        known = 0.5 * g[k + 1] * alpha[0]
        if k:
            known += np.dot(g[k:0:-1], alpha[1:k + 1])
        known *= h
        alpha[k + 1] = (alpha[k] - 0.5 * h * G2 * (memory[k] + known)) / denom
        memory[k + 1] = known + 0.5 * h * g[0] * alpha[k + 1]
    peak = float(np.max(np.abs(alpha)))
    if peak > 1 + 1e-6:
        raise AccuracyError("field amplitude exceeded 1; kernel is not a valid coherence or the step is too coarse",
                            {"max_abs_alpha": peak, "step": h})
    return TransferTrace(times, alpha, float(coupling), {"solver": "volterra-trapezoid", "step": h})


def subensemble_transfer(spectrum, selection, tau_tr, periods=2.0, steps_per_period=STEPS_PER_PERIOD,
                         tail_correction=True) -> TransferTrace:
    """Selection spectrum -> subensemble kernel -> Volterra, with G = pi / tau_tr."""
    grid = transfer_grid(tau_tr, periods, steps_per_period)
    kern = subensemble_kernel(spectrum, selection, grid, tail_correction)
    trace = solve_transfer(kern, math.pi / tau_tr, grid)
    trace.meta["n_selected"] = kern.meta["n_selected"]
    return trace


def analytic_transfer_sin(tau, tau_tr, T):
    """(1 - tau_tr^2/T^2) cos(pi tau / tau_tr) + tau_tr^2/T^2, valid for tau_tr << T."""
    eps = (tau_tr / T) ** 2
    out = (1 - eps) * np.cos(math.pi * np.asarray(tau, dtype=float) / tau_tr) + eps
    return float(out) if np.ndim(out) == 0 else out


def quantile_spins(s, count, coupling, samples=400001):
    """Deterministic ensemble: detunings at CDF midpoints (j - 1/2)/J, equal couplings.

    Returns (detunings, couplings) with sum |eta_j|^2 = coupling^2.
    """
    if int(count) != count or count < 1:
        raise InvalidArgument("spin count must be a positive integer")
    lo, hi = s.support()
    grid = np.linspace(lo, hi, samples)
    n = s.density(grid)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (n[1:] + n[:-1]) * np.diff(grid))])
    if cdf[-1] <= 0:
        raise InvalidArgument("spectrum has no weight to sample")
    cdf /= cdf[-1]
    q = (np.arange(count) + 0.5) / count
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    omega = np.interp(q, cdf[keep], grid[keep])
    eta = np.full(count, coupling / math.sqrt(count))
    return omega - s.omega0, eta


def discrete_oracle(detunings, couplings, times, method="rk4", norm_tol=1e-8, max_phase_step=0.02) -> TransferTrace:
    """Integrate the field + J-spin amplitude equations directly.

    Works in the frame b_j = beta_j exp(-i delta_j tau), where the system is
    time independent: d alpha = -i sum conj(eta_j) b_j, d b_j = -i delta_j b_j - i eta_j alpha.
    ``method="rk4"`` uses classical fourth-order Runge-Kutta with sub-steps
    so that (step x spectral radius bound) <= ``max_phase_step``; ``"eigh"``
    diagonalises the Hermitian generator.
    """
    delta = np.asarray(detunings, dtype=float)
    eta = np.asarray(couplings, dtype=complex)
    if delta.shape != eta.shape or delta.ndim != 1:
        raise InvalidArgument("detunings and couplings must be 1-D arrays of equal length")
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise InvalidArgument("oracle times must start at 0 and increase")
    G = float(np.sqrt(np.sum(np.abs(eta) ** 2)))

    if method == "eigh":
        J = delta.size
        H = np.zeros((J + 1, J + 1), dtype=complex)
        H[0, 1:] = np.conj(eta)
        H[1:, 0] = eta
        H[np.arange(1, J + 1), np.arange(1, J + 1)] = delta
        w, V = np.linalg.eigh(H)
        c0 = np.conj(V[0])
        states_alpha = (np.exp(-1j * np.outer(times, w)) * c0) @ V[0]
        norms = np.ones_like(times)
        alpha = states_alpha
    elif method == "rk4":
        bound = float(np.max(np.abs(delta), initial=0.0)) + G
        conj_eta = np.conj(eta)

        def rhs(a, b):
            return -1j * (conj_eta @ b), -1j * (delta * b + eta * a)

        a = 1.0 + 0.0j
        b = np.zeros(delta.size, dtype=complex)
        alpha = np.empty(times.size, dtype=complex)
        norms = np.empty(times.size)
        alpha[0] = a
        norms[0] = 1.0
        for i in range(1, times.size):
            span = times[i] - times[i - 1]
            nsub = max(1, int(math.ceil(span * bound / max_phase_step)))
            h = span / nsub
            for _ in range(nsub):
                ka1, kb1 = rhs(a, b)
                ka2, kb2 = rhs(a + 0.5 * h * ka1, b + 0.5 * h * kb1)
                ka3, kb3 = rhs(a + 0.5 * h * ka2, b + 0.5 * h * kb2)
                ka4, kb4 = rhs(a + h * ka3, b + h * kb3)
                a = a + h / 6 * (ka1 + 2 * ka2 + 2 * ka3 + ka4)
                b = b + h / 6 * (kb1 + 2 * kb2 + 2 * kb3 + kb4)
            alpha[i] = a
            norms[i] = abs(a) ** 2 + float(np.sum(np.abs(b) ** 2))
    else:
        raise InvalidArgument("method must be 'rk4' or 'eigh'")

    drift = float(np.max(np.abs(norms - 1)))
    if drift > norm_tol:
        raise AccuracyError("oracle norm drifted", {"norm_drift": drift, "tolerance": norm_tol})
    return TransferTrace(times, alpha, G if G > 0 else math.inf,
                         {"solver": f"oracle-{method}", "spins": int(delta.size), "norm_drift": drift})
