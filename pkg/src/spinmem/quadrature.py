"""Oscillatory quadrature on uniform grids.

All transforms here use the sign convention ``∫ f(x) exp(-i x tau) dx``.
"""

import numpy as np

from .errors import InvalidArgument

# Below this |theta| the closed-form Filon weights lose digits to cancellation.
_SERIES_THETA = 1.0 / 6.0
_CHUNK = 1 << 21


def filon_weights(theta):
    """Filon weights (alpha, beta, gamma) for ``theta = tau * h``."""
    theta = np.abs(np.asarray(theta, dtype=float))
    alpha = np.empty_like(theta)
    beta = np.empty_like(theta)
    gamma = np.empty_like(theta)

    small = theta < _SERIES_THETA
    t = theta[small]
    t2 = t * t
    alpha[small] = t * t2 * (2 / 45 - t2 * (2 / 315 - t2 * 2 / 4725))
    beta[small] = 2 / 3 + t2 * (2 / 15 - t2 * (4 / 105 - t2 * 2 / 567))
    gamma[small] = 4 / 3 - t2 * (2 / 15 - t2 * (1 / 210 - t2 / 11340))

    t = theta[~small]
    s, c = np.sin(t), np.cos(t)
    t3 = t**3
    alpha[~small] = (t * t + t * s * c - 2 * s * s) / t3
    beta[~small] = 2 * (t * (1 + c * c) - 2 * s * c) / t3
    gamma[~small] = 4 * (s - t * c) / t3
    return alpha, beta, gamma


def filon_transform(values, x0, h, taus):
    """Filon-Simpson approximation of ``∫ f(x) exp(-i x tau) dx``.

    ``values`` are samples of f on ``x0 + h*arange(n)`` with n odd; f is
    interpolated quadratically on each panel pair and the oscillatory factor
    is integrated exactly.  At tau = 0 this reduces to Simpson's rule.
    Negative taus are allowed.
    """
    f = np.asarray(values)
    n = f.shape[0]
    if n < 3 or n % 2 == 0:
        raise InvalidArgument(f"Filon quadrature needs an odd number (>=3) of samples, got {n}")
    if h <= 0:
        raise InvalidArgument("grid spacing must be positive")
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    out = np.empty(taus.shape, dtype=complex)

    x = x0 + h * np.arange(n)
    w_even = np.zeros(n)
    w_even[0::2] = 1.0
    w_even[0] = w_even[-1] = 0.5
    w_odd = np.zeros(n)
    w_odd[1::2] = 1.0

    flat = taus.ravel()
    res = out.ravel()
    step = max(1, _CHUNK // n)
    for start in range(0, flat.size, step):
        tau = flat[start:start + step]
        alpha, beta, gamma = filon_weights(tau * h)
        phase = np.exp(-1j * np.outer(tau, x))
        fe = phase * f
        even = fe @ w_even
        odd = fe @ w_odd
        ends = fe[:, -1] - fe[:, 0]
        # sin(theta) is odd in theta, so alpha flips sign with tau
        res[start:start + step] = h * (1j * np.sign(tau) * alpha * ends + beta * even + gamma * odd)
    return out.reshape(taus.shape)


def simpson_weights(n, h):
    """Composite Simpson weights for n (odd) equally spaced samples."""
    if n < 3 or n % 2 == 0:
        raise InvalidArgument(f"Simpson's rule needs an odd number (>=3) of samples, got {n}")
    w = np.empty(n)
    w[1::2] = 4.0
    w[2::2] = 2.0
    w[0] = w[-1] = 1.0
    return w * h / 3.0


def uniform_spacing(x, rtol=1e-6):
    """Return the spacing of ``x`` if it is uniform and increasing, else None."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return None
    h = (x[-1] - x[0]) / (x.size - 1)
    if h <= 0 or np.max(np.abs(np.diff(x) - h)) > rtol * h:
        return None
    return h
