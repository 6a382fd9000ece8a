"""Constrained pulse design.

Maximise a storage-fidelity objective over a discretised envelope with the
pulse area pinned to pi/2 and, optionally, the selected spin count N' pinned
to a target.  Constraints are handled by an augmented-Lagrangian outer loop;
each inner problem is solved with L-BFGS-B using analytic gradients (the
first-order objectives are quadratic forms in the cell amplitudes, the exact
ones are differentiated through the propagator).

Decision variables are dimensionless (Omega T) so tolerances do not depend
on the time unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import InfeasibleProblem, InvalidArgument
from .fidelity import flat_spectrum
from .propagator import default_detuning_grid, probability_gradient
from .pulses import PI_AREA, CombProfile, Pulse, make_sin, make_truncated_sinc
from .quadrature import simpson_weights
from .spectra import SpectralDensity

OBJECTIVES = ("fidelity_at", "window", "integrated")
AREA_TOL = 1e-6
COUNT_TOL = 1e-4
REGULARIZATION = 1e-8


@dataclass
class OptimizationProblem:
    """One objective, area pi/2, optional N' target, fixed duration T.

    ``tau`` is the storage time for ``fidelity_at``, the window length for
    ``integrated`` (mean F' over [0, tau]) and only informational for
    ``window`` (the selected variance, which sets F' over any short window).
    """

    objective: str
    T: float
    tau: float
    spectrum: SpectralDensity | None = None
    method: str = "approximate"
    n_target: float | None = None
    parameterization: str = "nodes"
    n_nodes: int = 128
    n_cells: int = 1024
    comb: CombProfile | None = None
    initial: Pulse | None = None
    pin_ends: bool | None = None
    detuning_points: int = 1025
    detuning_span: float | None = None
    quadrature_points: int = 16
    max_outer: int = 40
    max_inner: int = 2000
    threads: int | None = None

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise InvalidArgument(f"objective must be one of {OBJECTIVES}")
        if self.method not in ("approximate", "exact"):
            raise InvalidArgument("method must be 'approximate' or 'exact'")
        if not self.T > 0:
            raise InvalidArgument("T must be positive")
        if not self.tau > 0:
            raise InvalidArgument("tau must be positive")
        if self.n_target is not None and not self.n_target > 0:
            raise InvalidArgument("N' target must be positive")
        if self.parameterization not in ("nodes", "comb"):
            raise InvalidArgument("parameterization must be 'nodes' or 'comb'")
        if self.parameterization == "comb":
            if self.comb is None:
                raise InvalidArgument("comb parameterization needs a CombProfile")
            if abs(self.comb.m * self.comb.tau_s - self.T) > 1e-9 * self.T:
                raise InvalidArgument("comb profile does not tile [0, T]")
        if self.spectrum is None:
            self.spectrum = flat_spectrum()
        if self.pin_ends is None:
            self.pin_ends = self.objective == "window"


@dataclass
class OptimizationResult:
    pulse: Pulse
    objective: float
    fidelity: float | None
    area_residual: float
    count_residual: float | None
    selected_spins: float
    converged: bool
    multipliers: dict
    euler_lagrange: dict
    log: list = field(default_factory=list)
    controls: np.ndarray | None = None

    def diagnostics(self):
        return {
            "objective": self.objective,
            "fidelity": self.fidelity,
            "area_residual": self.area_residual,
            "count_residual": self.count_residual,
            "selected_spins": self.selected_spins,
            "converged": self.converged,
            "multipliers": self.multipliers,
            "euler_lagrange": self.euler_lagrange,
            "iterations": self.log,
        }


# -- parameterisation ---------------------------------------------------------

def _basis(problem):
    """Matrix B with cell values s = B x / T, and the initial controls."""
    T = problem.T
    if problem.parameterization == "comb":
        prof = problem.comb
        B = np.kron(np.eye(prof.m), prof.xi[:, None] * prof.tau_s)
        return B, np.ones(prof.m)
    M = problem.n_cells
    mids = (np.arange(M) + 0.5) / M
    nodes = np.linspace(0.0, 1.0, problem.n_nodes)
    B = np.empty((M, problem.n_nodes))
    eye = np.eye(problem.n_nodes)
    for i in range(problem.n_nodes):
        B[:, i] = np.interp(mids, nodes, eye[i])
    if problem.pin_ends:
        B = B[:, 1:-1]
    return B, None


def _initial_controls(problem, B):
    T = problem.T
    if problem.initial is not None:
        target = problem.initial
        if target.n_cells != B.shape[0] or abs(target.duration - T) > 1e-12 * T:
            target = Pulse(target(np.linspace(0, T, B.shape[0], endpoint=False) + T / (2 * B.shape[0])), T)
    elif problem.n_target is not None and problem.parameterization == "nodes":
        target = make_truncated_sinc(T, 3, B.shape[0])
    else:
        target = make_sin(T, B.shape[0])
    x, *_ = np.linalg.lstsq(B, target.values * T, rcond=None)
    return x


# -- objectives ----------------------------------------------------------------

def _shift(v, j):
    """(shift(v, j))_k = v_{k+j}, zero outside."""
    out = np.zeros_like(v)
    if j >= 0:
        out[:v.size - j] = v[j:]
    else:
        out[-j:] = v[:v.size + j]
    return out


def _tau_nodes(problem):
    """Lags and weights: Gauss-Legendre mean over [0, tau] or the single lag tau."""
    if problem.objective == "integrated":
        u, w = np.polynomial.legendre.leggauss(problem.quadrature_points)
        return 0.5 * problem.tau * (u + 1), 0.5 * w
    return np.array([problem.tau]), np.array([1.0])


class _ApproxModel:
    """First-order objectives: everything is a quadratic form in s."""

    def __init__(self, problem, M):
        self.p = problem
        self.M = M
        self.dt = problem.T / M
        self.n0 = float(problem.spectrum.density(problem.spectrum.omega0))
        self.taus, self.qw = _tau_nodes(problem)

    def count(self, s):
        return 2 * math.pi * self.n0 * self.dt * (s @ s), 4 * math.pi * self.n0 * self.dt * s

    def _autocorr(self, s, tau):
        lag = min(tau / self.dt, self.M)
        j = min(int(math.floor(lag)), self.M - 1)
        r = lag - j
        val, grad = 0.0, np.zeros_like(s)
        for jj, w in ((j, 1 - r), (j + 1, r)):
            if w == 0 or jj >= self.M:
                continue
            val += w * self.dt * (s @ _shift(s, jj))
            grad += w * self.dt * (_shift(s, jj) + _shift(s, -jj))
        return val, grad

    def fidelity(self, s):
        a0 = self.dt * (s @ s)
        da0 = 2 * self.dt * s
        F, dF = 0.0, np.zeros_like(s)
        for tau, w in zip(self.taus, self.qw):
            a, da = self._autocorr(s, tau)
            q = a / a0
            F += w * q * q
            dF += w * 2 * q * (da / a0 - a * da0 / (a0 * a0))
        return F, dF

    def variance(self, s):
        """Band-limited <delta^2> T^2: sum (Delta s)^2 / (dt^2 sum s^2), zero padded."""
        pad = np.concatenate([[0.0], s, [0.0]])
        d = np.diff(pad)
        num = d @ d
        den = s @ s
        dnum = 2 * (d[:-1] - d[1:])
        T2dt2 = (self.p.T / self.dt) ** 2
        return T2dt2 * num / den, T2dt2 * (dnum / den - num * 2 * s / (den * den))


class _ExactModel:
    """Objectives built from the propagated selection spectrum on a detuning grid."""

    def __init__(self, problem, M):
        self.p = problem
        self.M = M
        self.dt = problem.T / M
        span = problem.detuning_span
        if span is None:
            # cover the bandwidth the controls can reach
            span = max(40 * math.pi, 2 * math.pi * problem.n_nodes) / problem.T
        grid = default_detuning_grid(problem.T, problem.detuning_points, span)
        self.delta = grid
        s = problem.spectrum
        self.w = simpson_weights(grid.size, grid[1] - grid[0]) * s.density(s.omega0 + grid)
        self.taus, self.qw = _tau_nodes(problem)
        self.phase = self.w[None, :] * np.exp(-1j * np.outer(self.taus, grid))
        self._cache = (None, None)

    def _spectrum(self, s):
        key, val = self._cache
        if key is not None and np.array_equal(key, s):
            return val
        threads = self.p.threads
        if threads and threads > 1:
            from concurrent.futures import ThreadPoolExecutor
            parts = np.array_split(np.arange(self.delta.size), threads)
            with ThreadPoolExecutor(threads) as pool:
                res = list(pool.map(lambda ix: probability_gradient(s, self.dt, self.delta[ix]), parts))
            val = (np.concatenate([r[0] for r in res]), np.vstack([r[1] for r in res]))
        else:
            val = probability_gradient(s, self.dt, self.delta)
        self._cache = (s.copy(), val)
        return val

    def count(self, s):
        P, dP = self._spectrum(s)
        return float(self.w @ P), self.w @ dP

    def fidelity(self, s):
        P, dP = self._spectrum(s)
        n = self.w @ P
        dn = self.w @ dP
        C = self.phase @ P
        dC = self.phase @ dP
        F = np.abs(C) ** 2 / n ** 2
        dF = (2 * np.real(np.conj(C)[:, None] * dC) / n ** 2) - (2 * np.abs(C) ** 2 / n ** 3)[:, None] * dn[None, :]
        return float(self.qw @ F), self.qw @ dF

    def variance(self, s):
        """(1 - F'(tau)) T^2 / tau^2, the window variance seen through the kernel.

        Tends to <delta^2> T^2 as tau -> 0 but, unlike the raw second moment,
        stays bounded when weight leaks past the detuning grid.
        """
        F, dF = self.fidelity(s)
        k = (self.p.T / self.p.tau) ** 2
        return k * (1.0 - F), -k * dF


def _model(problem, M):
    return (_ExactModel if problem.method == "exact" else _ApproxModel)(problem, M)


def _objective(model, s):
    """Value to minimise and its gradient wrt s."""
    if model.p.objective == "window":
        return model.variance(s)
    F, dF = model.fidelity(s)
    return 1.0 - F, -dF


def evaluate_objective(problem: OptimizationProblem, pulse: Pulse, method=None):
    """Objective of an arbitrary pulse under ``problem`` (optionally another method)."""
    prob = problem if method is None else _replace(problem, method=method)
    model = _model(prob, pulse.n_cells)
    return float(_objective(model, np.asarray(pulse.values, dtype=float))[0])


def selected_count(problem: OptimizationProblem, pulse: Pulse, method=None):
    """N' of ``pulse`` as the optimizer measures it (first-order or on the detuning grid)."""
    prob = problem if method is None else _replace(problem, method=method)
    return float(_model(prob, pulse.n_cells).count(np.asarray(pulse.values, dtype=float))[0])


def _replace(problem, **kw):
    from dataclasses import replace
    return replace(problem, **kw)


# -- Euler-Lagrange check ------------------------------------------------------

def euler_lagrange_residual(p, tau=None, lag=None):
    """Least-squares defect of s(t+tau) + s(t-tau) = lambda1 s(t) + lambda2.

    ``p`` is a Pulse (``tau`` rounded to whole cells) or a plain sequence of
    samples together with an integer ``lag``.  The interior (points whose
    both neighbours lie inside the pulse) gives the fit and the reported
    relative residual; the zero-padded boundary defect is reported apart.
    """
    if isinstance(p, Pulse):
        if tau is None:
            raise InvalidArgument("tau is required for a Pulse")
        if not 0 < tau < p.duration:
            raise InvalidArgument("tau must lie in (0, T)")
        s = np.asarray(p.values, dtype=float)
        L = max(1, int(round(tau / p.dt)))
    else:
        s = np.asarray(p, dtype=float)
        L = 1 if lag is None else int(lag)
    M = s.size
    if not 0 < L < M:
        raise InvalidArgument("lag must be between 1 and the number of samples - 1")
    lhs = _shift(s, L) + _shift(s, -L)
    inner = np.arange(L, M - L)
    norm = float(np.linalg.norm(s))
    if inner.size == 0:
        lam1, lam2 = 0.0, 0.0
        interior = 0.0
    else:
        A = np.column_stack([s[inner], np.ones(inner.size)])
        if np.linalg.matrix_rank(A) < 2:
            lam1 = float(lhs[inner] @ s[inner] / max(s[inner] @ s[inner], 1e-300))
            lam2 = 0.0
        else:
            (lam1, lam2), *_ = np.linalg.lstsq(A, lhs[inner], rcond=None)
        interior = float(np.linalg.norm(lhs[inner] - lam1 * s[inner] - lam2))
    edge = np.setdiff1d(np.arange(M), inner)
    boundary = float(np.linalg.norm(lhs[edge] - lam1 * s[edge] - lam2)) if edge.size else 0.0
    return {"relative": interior / norm if norm else 0.0, "boundary_relative": boundary / norm if norm else 0.0,
            "lambda1": float(lam1), "lambda2": float(lam2), "lag_cells": L}


# -- driver ----------------------------------------------------------------------

def optimize(problem: OptimizationProblem) -> OptimizationResult:
    B, x0 = _basis(problem)
    if x0 is None:
        x0 = _initial_controls(problem, B)
    M = B.shape[0]
    T = problem.T
    dt = T / M
    model = _model(problem, M)
    area_row = (dt / T) * B.sum(axis=0)  # area = area_row @ x
    if not np.any(area_row):
        raise InfeasibleProblem("no control can change the pulse area")
    # rescale the start onto the area constraint
    a0 = area_row @ x0
    x0 = x0 * (PI_AREA / a0) if a0 else x0 + PI_AREA / (area_row @ area_row) * area_row
    if problem.n_target is not None and problem.method == "approximate":
        # with the area pinned, N' can be raised without bound but not below its minimum (square pulse)
        floor = 2 * math.pi * model.n0 * PI_AREA ** 2 / T
        if problem.n_target < floor * (1 - 1e-9):
            raise InfeasibleProblem(f"N' target {problem.n_target} below the minimum {floor} reachable in T")

    D = np.diff(B, axis=0) / T
    reg_scale = REGULARIZATION * T ** 3 / dt

    def constraints(x):
        s = B @ x / T
        c = [(area_row @ x - PI_AREA) / PI_AREA]
        jac = [area_row / PI_AREA]
        if problem.n_target is not None:
            n, dn = model.count(s)
            c.append(n / problem.n_target - 1)
            jac.append((B.T @ dn) / (T * problem.n_target))
        return np.array(c), np.array(jac)

    def base(x):
        s = B @ x / T
        f, gs = _objective(model, s)
        ds = D @ x
        r = reg_scale * (ds @ ds)
        gx = B.T @ gs / T + reg_scale * 2 * (D.T @ ds)
        return f, r, gx

    def merit(x, mu, rho):
        f, r, g = base(x)
        c, J = constraints(x)
        val = f + r + mu @ c + 0.5 * rho * (c @ c)
        grad = g + J.T @ (mu + rho * c)
        return val, grad

    ncon = 1 + (problem.n_target is not None)
    mu = np.zeros(ncon)
    rho = 10.0
    x = x0.copy()
    log = []
    converged = False
    prev_viol = np.inf
    for it in range(problem.max_outer):
        before = merit(x, mu, rho)[0]
        res = minimize(merit, x, args=(mu, rho), jac=True, method="L-BFGS-B",
                       options={"maxiter": problem.max_inner, "gtol": 1e-12, "ftol": 1e-15, "maxcor": 30})
        after = float(res.fun)
        if after <= before:
            x = res.x
        else:
            after = before
        c, J = constraints(x)
        f, r, g = base(x)
        viol = np.abs(c)
        viol_abs = [viol[0] * PI_AREA] + list(viol[1:])
        stationarity = float(np.linalg.norm(g + J.T @ (mu + rho * c)))
        log.append({"outer": it, "merit_before": float(before), "merit_after": after,
                    "objective": float(f), "area_residual": float(c[0] * PI_AREA),
                    "count_residual": float(c[1]) if ncon > 1 else None,
                    "penalty": rho, "inner_iterations": int(res.nit), "stationarity": stationarity})
        ok_area = viol_abs[0] <= AREA_TOL
        ok_count = ncon == 1 or viol_abs[1] <= COUNT_TOL
        if ok_area and ok_count and stationarity <= 1e-6 * max(abs(f), 1.0) * math.sqrt(x.size):
            converged = True
            break
        mu = mu + rho * c
        if np.max(viol) > 0.25 * prev_viol:
            rho = min(rho * 10, 1e10)
        prev_viol = float(np.max(viol))

    s = B @ x / T
    pulse = Pulse(s, T, "optimized", {"objective": problem.objective, "method": problem.method,
                                      "parameterization": problem.parameterization})
    f = float(_objective(model, s)[0])
    fid = None if problem.objective == "window" else 1.0 - f
    n_sel = float(model.count(s)[0])
    c, _ = constraints(x)
    # multipliers of the fidelity functional; reported, never inputs
    multipliers = {"area": float(mu[0]), "count": float(mu[1]) if ncon > 1 else None}
    if problem.parameterization == "comb":
        el = euler_lagrange_residual(x, lag=1)
    else:
        el_tau = problem.tau if problem.objective != "window" else T / 8
        el_tau = min(el_tau, T * (1 - 1.0 / M))
        el = euler_lagrange_residual(pulse, el_tau)
    return OptimizationResult(pulse, f, fid, float(c[0] * PI_AREA), float(c[1]) if ncon > 1 else None,
                              n_sel, converged, multipliers, el, log, x)


def relative_l2(a: Pulse, b: Pulse):
    """||a - b|| / ||b|| on the cell grid (same number of cells required)."""
    if a.n_cells != b.n_cells:
        raise InvalidArgument("pulses must share the cell grid")
    return float(np.linalg.norm(a.values - b.values) / np.linalg.norm(b.values))
