"""Preparation envelopes Omega(t).

A pulse is stored as piecewise-constant amplitudes on M equal cells of
[0, T].  Factories fill each cell with the exact cell average of the
analytic envelope, so the stored area equals the analytic area up to
rounding and the propagator sees exactly the function that was integrated.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DegenerateSubensembleError, InvalidArgument

DEFAULT_CELLS = 4096
PI_AREA = math.pi / 2


@dataclass(frozen=True, eq=False)
class Pulse:
    values: np.ndarray
    duration: float
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise InvalidArgument("a pulse needs at least two cells")
        if not self.duration > 0:
            raise InvalidArgument("pulse duration must be positive")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("pulse amplitudes must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_cells(self):
        return self.values.size

    @property
    def dt(self):
        return self.duration / self.values.size

    @property
    def edges(self):
        return np.arange(self.n_cells + 1) * self.dt

    @property
    def midpoints(self):
        return (np.arange(self.n_cells) + 0.5) * self.dt

    @property
    def area(self):
        return float(self.values.sum() * self.dt)

    @property
    def energy(self):
        """∫ Omega(t)^2 dt."""
        return float(self.values @ self.values * self.dt)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.floor(t / self.dt).astype(int), 0, self.n_cells - 1)
        inside = (t >= 0) & (t <= self.duration)
        return np.where(inside, self.values[idx], 0.0)

    def padded(self, before=0, after=0):
        """Same envelope with ``before``/``after`` empty cells added (a time shift)."""
        v = np.concatenate([np.zeros(before), self.values, np.zeros(after)])
        return Pulse(v, self.dt * v.size, self.family, dict(self.params, padded=(before, after)))

    def scaled_to_area(self, area=PI_AREA):
        a = self.area
        if a == 0:
            raise InvalidArgument("cannot rescale a zero-area pulse")
        return Pulse(self.values * (area / a), self.duration, self.family, dict(self.params))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_us", "omega_rad_per_us"])
            for t, v in zip(self.midpoints, self.values):
                w.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def from_csv(cls, path, family="custom"):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t, v = data[:, 0], data[:, 1]
        if t.size < 2:
            raise InvalidArgument("pulse CSV needs at least two rows")
        dt = (t[-1] - t[0]) / (t.size - 1)
        return cls(v, dt * t.size, family)


def _check_T(T):
    if not T > 0:
        raise InvalidArgument("pulse duration T must be positive")


def make_square(T, n_cells=DEFAULT_CELLS):
    _check_T(T)
    return Pulse(np.full(n_cells, math.pi / (2 * T)), T, "square", {"T": T})


def make_sin(T, n_cells=DEFAULT_CELLS):
    """Omega0 sin(pi t / T) with Omega0 = pi^2 / 4T (area pi/2)."""
    _check_T(T)
    amp = math.pi ** 2 / (4 * T)
    edges = np.arange(n_cells + 1) * (T / n_cells)
    c = np.cos(math.pi * edges / T)
    # exact cell averages of amp*sin(pi t/T)
    values = amp * (T / math.pi) * (c[:-1] - c[1:]) / (T / n_cells)
    return Pulse(values, T, "sin", {"T": T, "peak": amp})


def make_truncated_sinc(T, zero_crossings, n_cells=DEFAULT_CELLS):
    """sinc envelope centred at T/2, cut at its (zero_crossings+1)-th zero on each side.

    ``zero_crossings`` counts the interior zeros per side, i.e. side lobes.
    The result is rescaled to area pi/2 and has negative lobes.
    """
    _check_T(T)
    if int(zero_crossings) != zero_crossings or zero_crossings < 1:
        raise InvalidArgument("zero_crossings must be an integer >= 1")
    lobe = T / (2 * (zero_crossings + 1))
    u = (np.arange(n_cells + 1) * (T / n_cells) - T / 2) / lobe
    si = special.sici(math.pi * u)[0] / math.pi
    values = np.diff(si) * lobe / (T / n_cells)
    p = Pulse(values, T, "sinc", {"T": T, "zero_crossings": int(zero_crossings), "lobe": lobe})
    return p.scaled_to_area()


@dataclass(frozen=True, eq=False)
class CombProfile:
    """Unit-area sub-pulse xi(t) on [0, tau_s], repeated ``m`` times by :func:`make_comb`."""

    xi: np.ndarray
    tau_s: float
    m: int
    kind: str = "custom"

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float)
        if xi.ndim != 1 or xi.size < 1:
            raise InvalidArgument("xi must be a 1-D array of cell values")
        if not self.tau_s > 0:
            raise InvalidArgument("tau_s must be positive")
        if int(self.m) != self.m or self.m < 1:
            raise InvalidArgument("repetition count m must be an integer >= 1")
        if np.any(xi < 0):
            raise InvalidArgument("xi must be non-negative")
        area = xi.sum() * self.tau_s / xi.size
        if abs(area - 1) > 1e-9:
            raise InvalidArgument(f"xi must have unit area, got {area}")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "m", int(self.m))

    @property
    def dt(self):
        return self.tau_s / self.xi.size

    @property
    def xi_energy(self):
        """∫ xi^2 dt over one period."""
        return float(self.xi @ self.xi * self.dt)

    @classmethod
    def uniform(cls, tau_s, m, cells_per_segment=45):
        return cls(np.full(cells_per_segment, 1.0 / tau_s), tau_s, m, "uniform")

    @classmethod
    def rectangle(cls, tau_s, m, width_cells, cells_per_segment=45):
        """Centred rectangle ``width_cells`` wide; use ``cells_per_segment // 5`` for width tau_s/5."""
        if not 1 <= width_cells <= cells_per_segment:
            raise InvalidArgument("rectangle width must fit inside one segment")
        xi = np.zeros(cells_per_segment)
        start = (cells_per_segment - width_cells) // 2
        xi[start:start + width_cells] = cells_per_segment / (width_cells * tau_s)
        return cls(xi, tau_s, m, "rectangle")

    @classmethod
    def delta(cls, tau_s, m, cells_per_segment=45):
        """One-cell stand-in for delta(t - tau_s/2): height 1/dt on the central cell."""
        return cls.rectangle(tau_s, m, 1, cells_per_segment)._retag("delta")

    def _retag(self, kind):
        return CombProfile(self.xi, self.tau_s, self.m, kind)


def comb_amplitude(m):
    """Omega0 = (pi/2) tan(pi / (2(m+1)))."""
    return 0.5 * math.pi * math.tan(0.5 * math.pi / (m + 1))


def comb_segment_weights(m):
    return np.sin(math.pi * (np.arange(m) + 1) / (m + 1))


def make_comb(profile: CombProfile, T=None):
    """m-fold repetition of xi, segment n scaled by Omega0 sin(pi(n+1)/(m+1))."""
    m = profile.m
    if T is None:
        T = m * profile.tau_s
    _check_T(T)
    ratio = T / profile.tau_s
    if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) != m:
        raise InvalidArgument(f"T / tau_s = {ratio} must equal the repetition count m = {m}")
    amp = comb_amplitude(m)
    values = np.concatenate([amp * w * profile.xi for w in comb_segment_weights(m)])
    return Pulse(values, m * profile.tau_s, "comb",
                 {"m": m, "tau_s": profile.tau_s, "xi": profile.kind, "peak": amp})


def correlation_table(p: Pulse):
    """R_j = sum_k s_{k+j} s_k for lags j = 0..M (R_M = 0)."""
    v = p.values
    full = np.correlate(v, v, mode="full")
    return np.append(full[v.size - 1:], 0.0)


def autocorrelation(p: Pulse, tau):
    """∫ Omega(t + tau) Omega(t) dt, exact for the piecewise-constant envelope.

    Vanishes for tau >= T.  Accepts scalars or arrays.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise InvalidArgument("autocorrelation lag must be non-negative")
    out = _autocorr_from_table(correlation_table(p), p.dt, tau)
    return float(out) if out.ndim == 0 else out


def _autocorr_from_table(table, dt, tau):
    M = table.size - 1
    lag = np.minimum(np.abs(tau) / dt, M)
    j = np.minimum(np.floor(lag).astype(int), M - 1)
    r = lag - j
    return dt * ((1 - r) * table[j] + r * table[j + 1])


def check_energy(p: Pulse):
    if p.energy <= 0:
        raise DegenerateSubensembleError("pulse has zero energy")
