"""Ensemble spectral densities n(omega).

A :class:`SpectralDensity` is a sum of primitive components, optionally
restricted to a set of pass-band windows.  Frequencies are angular
frequencies; the coherence kernel and all moments are taken about the
reference (carrier) frequency ``omega0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from .errors import DivergentMomentError, GridCoverageError, InvalidArgument
from .quadrature import simpson_weights, uniform_spacing

# Truncation policy for heavy tails, in half-widths (Lorentzian) or std (Gaussian).
LORENTZ_SUPPORT = 50.0
GAUSS_SUPPORT = 12.0


@dataclass(frozen=True)
class Lorentzian:
    """Lorentzian line, ``weight`` spins in total, half-width at half-maximum ``halfwidth``."""

    center: float
    halfwidth: float
    weight: float

    def __post_init__(self):
        if not self.halfwidth > 0:
            raise InvalidArgument("Lorentzian half-width must be positive")
        if self.weight < 0:
            raise InvalidArgument("component weight must be non-negative")

    @property
    def peak(self):
        return self.weight / (math.pi * self.halfwidth)

    def density(self, omega):
        x = (np.asarray(omega, dtype=float) - self.center) / self.halfwidth
        return self.peak / (1.0 + x * x)

    def cdf(self, omega):
        x = (np.asarray(omega, dtype=float) - self.center) / self.halfwidth
        return self.weight * (0.5 + np.arctan(x) / math.pi)

    def support(self):
        r = LORENTZ_SUPPORT * self.halfwidth
        return self.center - r, self.center + r

    def transform(self, taus, omega0):
        taus = np.asarray(taus, dtype=float)
        return self.weight * np.exp(-1j * (self.center - omega0) * taus - self.halfwidth * np.abs(taus))

    heavy_tailed = True


@dataclass(frozen=True)
class Rectangle:
    """Flat band of ``height`` spins per unit angular frequency on ``center ± halfwidth``."""

    center: float
    halfwidth: float
    height: float

    def __post_init__(self):
        if not self.halfwidth > 0:
            raise InvalidArgument("rectangle half-width must be positive")
        if self.height < 0:
            raise InvalidArgument("rectangle height must be non-negative")

    @property
    def weight(self):
        return 2.0 * self.halfwidth * self.height

    def density(self, omega):
        omega = np.asarray(omega, dtype=float)
        inside = np.abs(omega - self.center) <= self.halfwidth
        return np.where(inside, self.height, 0.0)

    def cdf(self, omega):
        omega = np.asarray(omega, dtype=float)
        lo = self.center - self.halfwidth
        return self.height * np.clip(omega - lo, 0.0, 2.0 * self.halfwidth)

    def support(self):
        return self.center - self.halfwidth, self.center + self.halfwidth

    def transform(self, taus, omega0):
        taus = np.asarray(taus, dtype=float)
        # np.sinc is sin(pi x)/(pi x)
        return self.weight * np.exp(-1j * (self.center - omega0) * taus) * np.sinc(self.halfwidth * taus / math.pi)

    heavy_tailed = False


@dataclass(frozen=True)
class Gaussian:
    center: float
    sigma: float
    weight: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidArgument("Gaussian std must be positive")
        if self.weight < 0:
            raise InvalidArgument("component weight must be non-negative")

    def density(self, omega):
        x = (np.asarray(omega, dtype=float) - self.center) / self.sigma
        return self.weight * np.exp(-0.5 * x * x) / (self.sigma * math.sqrt(2 * math.pi))

    def cdf(self, omega):
        x = (np.asarray(omega, dtype=float) - self.center) / (self.sigma * math.sqrt(2.0))
        return 0.5 * self.weight * special.erfc(-x)

    def support(self):
        r = GAUSS_SUPPORT * self.sigma
        return self.center - r, self.center + r

    def transform(self, taus, omega0):
        taus = np.asarray(taus, dtype=float)
        return self.weight * np.exp(-1j * (self.center - omega0) * taus - 0.5 * (self.sigma * taus) ** 2)

    heavy_tailed = False


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Density sampled on a uniform, odd-length grid of absolute angular frequencies.

    Pointwise evaluation interpolates linearly; integrals use Simpson/Filon
    panels on the nodes (cubic spline for partial, windowed segments).
    """

    omega: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if omega.shape != values.shape or omega.ndim != 1:
            raise InvalidArgument("tabulated grid and values must be 1-D arrays of equal length")
        if uniform_spacing(omega) is None or omega.size % 2 == 0 or omega.size < 3:
            raise InvalidArgument("tabulated spectra need a uniform increasing grid with an odd number of nodes")
        if np.any(values < 0):
            raise InvalidArgument("spectral density must be non-negative")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "values", values)

    def __eq__(self, other):
        return (isinstance(other, Tabulated) and np.array_equal(self.omega, other.omega)
                and np.array_equal(self.values, other.values))

    __hash__ = None

    @property
    def spacing(self):
        return (self.omega[-1] - self.omega[0]) / (self.omega.size - 1)

    @property
    def weight(self):
        return float(simpson_weights(self.omega.size, self.spacing) @ self.values)

    def density(self, omega):
        return np.interp(omega, self.omega, self.values, left=0.0, right=0.0)

    def support(self):
        return float(self.omega[0]), float(self.omega[-1])

    heavy_tailed = False


Component = Lorentzian | Rectangle | Gaussian | Tabulated


def _check_windows(windows):
    if windows is None:
        return None
    out = []
    for w in windows:
        lo, hi = float(w[0]), float(w[1])
        if not hi > lo:
            raise InvalidArgument(f"window [{lo}, {hi}] is empty or reversed")
        out.append((lo, hi))
    out.sort()
    for (_, hi), (lo, _) in zip(out, out[1:]):
        if lo < hi:
            raise InvalidArgument("windows overlap")
    return tuple(out)


@dataclass(frozen=True)
class SpectralDensity:
    components: tuple
    omega0: float = 0.0
    windows: tuple | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise InvalidArgument("a spectrum needs at least one component")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "windows", _check_windows(self.windows))

    def density(self, omega):
        omega = np.asarray(omega, dtype=float)
        n = sum(c.density(omega) for c in self.components)
        if self.windows is not None:
            n = n * self.in_windows(omega)
        return n

    def in_windows(self, omega):
        omega = np.asarray(omega, dtype=float)
        if self.windows is None:
            return np.ones(omega.shape, dtype=bool)
        mask = np.zeros(omega.shape, dtype=bool)
        for lo, hi in self.windows:
            mask |= (omega >= lo) & (omega <= hi)
        return mask

    def support(self):
        """Effective support: union hull of component supports, clipped to windows."""
        lo = min(c.support()[0] for c in self.components)
        hi = max(c.support()[1] for c in self.components)
        if self.windows is not None:
            if not self.windows:
                return self.omega0, self.omega0
            lo = max(lo, self.windows[0][0])
            hi = min(hi, self.windows[-1][1])
        return lo, hi

    def segments(self, component):
        """Intervals over which ``component`` contributes (windows ∩ its support)."""
        clo, chi = component.support()
        if self.windows is None:
            return [(clo, chi)]
        segs = []
        for lo, hi in self.windows:
            a, b = max(lo, clo), min(hi, chi)
            if b > a:
                segs.append((a, b))
        return segs

    @property
    def peak_density(self):
        """n(omega0)."""
        return float(self.density(self.omega0))


def total_spins(s: SpectralDensity) -> float:
    """∫ n(omega) d omega over the windowed support.

    Analytic components integrate over the whole line when unwindowed, so a
    Lorentzian of weight w has exactly w spins.
    """
    total = 0.0
    for c in s.components:
        if isinstance(c, Tabulated):
            if s.windows is None:
                total += c.weight
            else:
                for a, b in s.segments(c):
                    total += _tabulated_segment_integral(c, a, b)
            continue
        if s.windows is None:
            total += c.weight
        else:
            for lo, hi in s.windows:
                total += float(c.cdf(hi) - c.cdf(lo))
    return total


def _tabulated_segment_integral(c, a, b):
    # cubic spline through the nodes: same order as Simpson on whole panels, exact end cells
    return float(CubicSpline(c.omega, c.values).integrate(a, b))


def resample_segment(fn, a, b, n):
    n = max(3, n | 1)
    grid = np.linspace(a, b, n)
    return grid, fn(grid)


def central_moment(s: SpectralDensity, k: int) -> float:
    """Normalized moment ⟨(omega - omega0)^k⟩ for even k."""
    if int(k) != k or k < 0 or k % 2:
        raise InvalidArgument("only even, non-negative moments are supported")
    k = int(k)
    if k == 0:
        return 1.0
    if s.windows is None and any(c.heavy_tailed for c in s.components):
        raise DivergentMomentError(
            f"moment of order {k} diverges for an unwindowed Lorentzian spectrum")
    num = 0.0
    den = 0.0
    for c in s.components:
        for a, b in s.segments(c):
            if isinstance(c, Rectangle):
                lo, hi = max(a, c.center - c.halfwidth), min(b, c.center + c.halfwidth)
                if hi <= lo:
                    continue
                num += c.height * ((hi - s.omega0) ** (k + 1) - (lo - s.omega0) ** (k + 1)) / (k + 1)
                den += c.height * (hi - lo)
            elif isinstance(c, Tabulated):
                grid, vals = resample_segment(c.density, a, b, 8 * c.omega.size + 1)
                w = simpson_weights(grid.size, grid[1] - grid[0])
                num += float(w @ (vals * (grid - s.omega0) ** k))
                den += float(w @ vals)
            else:
                f = lambda x, c=c: float(c.density(x)) * (x - s.omega0) ** k
                pts = [p for p in (c.center, s.omega0) if a < p < b]
                num += integrate.quad(f, a, b, points=pts or None, limit=400, epsabs=0, epsrel=1e-11)[0]
                den += float(c.cdf(b) - c.cdf(a))
    if den <= 0:
        raise InvalidArgument("spectrum has no weight inside its windows")
    return num / den


def moments(s: SpectralDensity):
    """Mean offset, variance about omega0 and total count."""
    mean = _first_moment(s)
    return SpectrumMoments(mean_offset=mean, variance=central_moment(s, 2), total=total_spins(s))


def _first_moment(s):
    if s.windows is None and any(c.heavy_tailed for c in s.components):
        # principal value about each center; finite because the tails cancel
        tot = sum(c.weight for c in s.components)
        return sum(c.weight * (c.center - s.omega0) for c in s.components if not isinstance(c, Tabulated)) / tot
    num = den = 0.0
    for c in s.components:
        for a, b in s.segments(c):
            grid, vals = resample_segment(c.density, a, b, 20001)
            w = simpson_weights(grid.size, grid[1] - grid[0])
            num += float(w @ (vals * (grid - s.omega0)))
            den += float(w @ vals)
    return num / den


@dataclass(frozen=True)
class SpectrumMoments:
    mean_offset: float
    variance: float
    total: float


def restrict(s: SpectralDensity, windows: Sequence) -> SpectralDensity:
    """Ideal filter: keep n(omega) inside ``windows`` and zero elsewhere."""
    new = _check_windows(windows)
    if s.windows is not None:
        merged = []
        for lo, hi in new:
            for a, b in s.windows:
                x, y = max(lo, a), min(hi, b)
                if y > x:
                    merged.append((x, y))
        new = tuple(merged)
    return replace(s, windows=new)


def comb_windows(omega0, tau_s, halfwidth, orders):
    """Pass bands ``omega0 + 2 pi k / tau_s ± halfwidth`` for each k in ``orders``."""
    return [(omega0 + 2 * math.pi * k / tau_s - halfwidth, omega0 + 2 * math.pi * k / tau_s + halfwidth)
            for k in orders]


def apply_selection(s: SpectralDensity, p) -> SpectralDensity:
    """Tabulated subensemble n'(omega) = n(omega) P(omega - omega0) on the grid of ``p``."""
    delta = np.asarray(p.detunings, dtype=float)
    prob = np.asarray(p.probabilities, dtype=float)
    lo, hi = s.support()
    covers = delta[0] + s.omega0 <= lo and delta[-1] + s.omega0 >= hi
    edge = max(prob[0], prob[-1])
    if not covers and edge > 1e-2 * prob.max():
        raise GridCoverageError(
            "selection grid neither covers the spectrum support nor reaches the selection wings "
            f"(edge P / max P = {edge / prob.max():.3g})")
    omega = s.omega0 + delta
    values = s.density(omega) * prob
    meta = dict(s.meta)
    meta["selection"] = p.method
    return SpectralDensity((Tabulated(omega, values),), omega0=s.omega0, meta=meta)


def make_nv_triplet(center, width, splitting, total_N, convention="hwhm"):
    """Three equal Lorentzians at ``center``, ``center ± splitting`` (14N hyperfine triplet).

    ``width`` is read as a half-width (``convention="hwhm"``) or a full width
    (``"fwhm"``); the convention is recorded in ``meta``.
    """
    if convention not in ("hwhm", "fwhm"):
        raise InvalidArgument("convention must be 'hwhm' or 'fwhm'")
    if not width > 0:
        raise InvalidArgument("Lorentzian width must be positive")
    if splitting < 0:
        raise InvalidArgument("splitting must be non-negative")
    if not total_N > 0:
        raise InvalidArgument("total spin count must be positive")
    hw = width / 2 if convention == "fwhm" else width
    meta = {"width_convention": convention, "lorentz_halfwidth": hw, "splitting": splitting}
    if splitting == 0:
        return SpectralDensity((Lorentzian(center, hw, total_N),), omega0=center, meta=meta)
    comps = tuple(Lorentzian(center + k * splitting, hw, total_N / 3) for k in (-1, 0, 1))
    return SpectralDensity(comps, omega0=center, meta=meta)


def full_width_half_max(s: SpectralDensity, samples=40001):
    """Numerical FWHM of the density (outermost half-maximum crossings)."""
    lo, hi = s.support()
    centers = [_center(c) for c in s.components]
    reach = 20 * max(_scale(c) for c in s.components)
    grid = np.linspace(max(lo, min(centers) - reach), min(hi, max(centers) + reach), samples)
    n = s.density(grid)
    half = 0.5 * n.max()
    above = np.nonzero(n >= half)[0]
    i, j = above[0], above[-1]
    left = np.interp(half, [n[i - 1], n[i]], [grid[i - 1], grid[i]]) if i > 0 else grid[0]
    right = np.interp(half, [n[j + 1], n[j]], [grid[j + 1], grid[j]]) if j < grid.size - 1 else grid[-1]
    return float(right - left)


def _center(c):
    if isinstance(c, Tabulated):
        return 0.5 * (c.omega[0] + c.omega[-1])
    return c.center


def _scale(c):
    if isinstance(c, Tabulated):
        return (c.omega[-1] - c.omega[0]) / 40
    if isinstance(c, Gaussian):
        return c.sigma
    return c.halfwidth


def export_csv(s: SpectralDensity, path, omega):
    """Write ``omega_rad_per_us,density`` rows on the given grid."""
    omega = np.asarray(omega, dtype=float)
    n = s.density(omega)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega_rad_per_us", "density"])
        for a, b in zip(omega, n):
            w.writerow([repr(float(a)), repr(float(b))])
