"""Closed-form reference fields: the local elliptic vortex and the rotating Bessel pair.

``J0`` and ``J1`` are computed here rather than taken from a special-function
library, so that reference values do not depend on the ambient build:

* ``|x| <= 8``: the ascending power series, summed until terms fall below
  ``1e-17`` of the running sum (cancellation costs at most two digits here);
* ``|x| > 8``: Miller's backward recurrence from order
  ``N = x + sqrt(200 x) + 20``, normalised by ``J0 + 2 sum J_2k = 1``.

Both branches agree with an independent reference to better than ``1e-13``
absolutely on ``[0, 200]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc

from .grid import GridSpec, WaveField
from .vortex import PointVortex

__all__ = [
    "bessel_j0",
    "bessel_j1",
    "J1_FIRST_PEAK",
    "J1_FIRST_ZERO",
    "J1_MAX",
    "LocalVortexModel",
    "BesselPairParams",
    "smooth_step",
    "radial_window",
    "erfc_window",
    "local_vortex_field",
    "local_phase",
    "local_compression",
    "local_velocity",
    "bessel_pair_field",
    "bessel_vortex_positions",
    "bessel_radii",
    "bessel_k_for_box",
]

_SERIES_MAX = 8.0


def _series(x: np.ndarray, order: int) -> np.ndarray:
    h = 0.5 * x
    term = np.ones_like(x) if order == 0 else h.copy()
    total = term.copy()
    q = -h * h
    for j in range(1, 200):
        term = term * q / (j * (j + order))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _miller(x: np.ndarray):
    n_top = int(np.max(x) + math.sqrt(200.0 * np.max(x)) + 20)
    n_top += n_top % 2
    bjp = np.zeros_like(x)
    bj = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    j0 = np.zeros_like(x)
    j1 = np.zeros_like(x)
    for j in range(n_top, 0, -1):
        bjm = (2.0 * j / x) * bj - bjp
        bjp, bj = bj, bjm
        # bj now holds J_{j-1}
        if (j - 1) % 2 == 0 and j - 1 > 0:
            norm += 2.0 * bj
        if j - 1 == 1:
            j1 = bj.copy()
        big = np.abs(bj) > 1e200
        if np.any(big):
            for arr in (bj, bjp, norm, j1):
                arr[big] *= 1e-200
    j0 = bj
    norm = norm + j0
    return j0 / norm, j1 / norm


def _bessel(x, order: int):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    ax = np.abs(np.atleast_1d(x)).astype(float)
    out = np.empty_like(ax)
    small = ax <= _SERIES_MAX
    if np.any(small):
        out[small] = _series(ax[small], order)
    if np.any(~small):
        j0, j1 = _miller(ax[~small])
        out[~small] = j0 if order == 0 else j1
    if order == 1:
        out = np.where(np.atleast_1d(x) < 0, -out, out)
    return float(out[0]) if scalar else out.reshape(x.shape)


def bessel_j0(x):
    return _bessel(x, 0)


def bessel_j1(x):
    return _bessel(x, 1)


def _j1_prime(x):
    return bessel_j0(x) - (bessel_j1(x) / x if x != 0 else 0.5)


J1_FIRST_PEAK = brentq(_j1_prime, 1.0, 3.0, xtol=1e-15)
J1_FIRST_ZERO = brentq(bessel_j1, 3.0, 4.5, xtol=1e-15)
J1_MAX = bessel_j1(J1_FIRST_PEAK)


# --- windows --------------------------------------------------------------------


def smooth_step(s):
    """C-infinity step: 0 for ``s <= 0``, 1 for ``s >= 1``."""
    s = np.clip(np.asarray(s, float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1 - s, 1)), 0.0)
    return a / (a + b)


def radial_window(grid: GridSpec, center, r_flat: float | None = None, r_zero: float | None = None) -> np.ndarray:
    """Radial bump, 1 within ``r_flat`` of ``center`` (minimum image) and 0 beyond ``r_zero``.

    Defaults are ``0.27 L`` and ``0.45 L``, so the flat disc covers the central half-box width.
    """
    L = grid.length
    r_flat = 0.27 * L if r_flat is None else r_flat
    r_zero = 0.45 * L if r_zero is None else r_zero
    if not 0 < r_flat < r_zero <= 0.5 * L:
        raise ValueError("need 0 < r_flat < r_zero <= L/2")
    r = _radius(grid, center)
    return 1.0 - smooth_step((r - r_flat) / (r_zero - r_flat))


def erfc_window(grid: GridSpec, center, r_half: float | None = None, width: float | None = None) -> np.ndarray:
    """Radial step with a Gaussian-smoothed edge at ``r_half``.

    Its Fourier tail falls like ``exp(-q^2 width^2 / 2)``, so spectral
    evolution carries almost nothing from the edge into the interior over
    times ``t << (r_half - r)^2``.  Defaults ``0.36 L`` and ``0.015 L``.
    """
    L = grid.length
    r_half = 0.36 * L if r_half is None else r_half
    width = 0.015 * L if width is None else width
    if not (0 < r_half < 0.5 * L and width > 0):
        raise ValueError("need 0 < r_half < L/2 and width > 0")
    r = _radius(grid, center)
    return 0.5 * erfc((r - r_half) / (math.sqrt(2.0) * width))


def _window(kind, grid, center, **kw):
    if kind in (None, False, "none"):
        return None
    if kind in (True, "bump"):
        return radial_window(grid, center, kw.get("r_flat"), kw.get("r_zero"))
    if kind == "erfc":
        return erfc_window(grid, center, kw.get("r_half"), kw.get("width"))
    raise ValueError(f"unknown window {kind!r}")


def _offsets(grid: GridSpec, center):
    mesh = grid.mesh()
    return [grid.minimum_image(m - c) for m, c in zip(mesh, center)]


def _radius(grid: GridSpec, center):
    d = _offsets(grid, center)
    return np.sqrt(sum(c * c for c in d))


# --- local elliptic vortex --------------------------------------------------------


@dataclass(frozen=True)
class LocalVortexModel:
    """Linear null ``a x' + i b y'`` in a frame rotated by ``orientation`` about ``x0``."""

    a: float
    b: float
    x0: tuple = (0.5, 0.5)
    orientation: float = 0.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")


def local_vortex_field(model: LocalVortexModel, grid: GridSpec, window="bump", **window_kw) -> WaveField:
    """``[a x' + i b y']`` sampled about ``x0`` and multiplied by a radial window.

    ``window`` is ``"bump"`` (compact, flat core), ``"erfc"`` or ``None``.
    """
    if grid.dims != 2:
        raise ValueError("the local vortex model is two-dimensional")
    x0 = np.asarray(model.x0, float)
    if np.any(x0 < 0) or np.any(x0 >= grid.length):
        raise ValueError(f"x0 {tuple(x0)} lies outside the box")
    dx, dy = _offsets(grid, x0)
    c, s = math.cos(model.orientation), math.sin(model.orientation)
    xr = c * dx + s * dy
    yr = -s * dx + c * dy
    psi = model.a * xr + 1j * model.b * yr
    meta = {"params": {"analytic": "local", "a": model.a, "b": model.b,
                       "x0": list(map(float, x0)), "orientation": model.orientation, "window": window or "none"}}
    w = _window(window, grid, x0, **window_kw)
    if w is not None:
        psi = psi * w
    return WaveField(grid, psi, 0.0, meta)


def local_phase(a: float, b: float, phi):
    """Continuous phase ``atan((b/a) tan phi)`` and its split ``(S, S_r, S_p)``.

    The branch follows the quadrant of ``phi``, which is the same as
    ``atan2(b sin phi, a cos phi)`` unwrapped so that ``S - phi`` is periodic.
    """
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    phi = np.asarray(phi, float)
    base = np.arctan2(b * np.sin(phi), a * np.cos(phi))
    # S - phi is 2pi-periodic and zero on the axes; pick the branch nearest phi
    s = base + 2.0 * np.pi * np.round((phi - base) / (2.0 * np.pi))
    return s, phi, s - phi


def local_compression(a: float, b: float, r, phi):
    """Laplacian of the local phase, ``ab (a^2 - b^2) sin 2phi / (r^2 (a^2 cos^2 + b^2 sin^2)^2)``.

    This is ``S''(phi) / r^2`` for ``S`` from ``local_phase``.
    """
    r = np.asarray(r, float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    phi = np.asarray(phi, float)
    den = a * a * np.cos(phi) ** 2 + b * b * np.sin(phi) ** 2
    return a * b * (a * a - b * b) * np.sin(2 * phi) / (r * r * den * den)


def local_velocity(a: float, b: float, r, phi) -> np.ndarray:
    """Leading-order velocity, azimuthal with speed ``ab / (r (a^2 cos^2 phi + b^2 sin^2 phi))``.

    Returns Cartesian components stacked on the last axis.
    """
    r = np.asarray(r, float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    phi = np.asarray(phi, float)
    speed = a * b / (r * (a * a * np.cos(phi) ** 2 + b * b * np.sin(phi) ** 2))
    return np.stack([-speed * np.sin(phi), speed * np.cos(phi)], axis=-1)


# --- Bessel pair ----------------------------------------------------------------


@dataclass(frozen=True)
class BesselPairParams:
    """``c0 - J1(kR) exp(i(phi - k^2 t / 2))`` about ``center``."""

    c0: float
    k: float
    center: tuple = (0.5, 0.5)

    def __post_init__(self):
        if not 0 < self.c0 < J1_MAX:
            raise ValueError(f"c0 must lie in (0, {J1_MAX:.4f}) for a vortex pair, got {self.c0}")
        if not self.k > 0:
            raise ValueError("k must be positive")


def bessel_k_for_box(length: float, fraction: float = 0.25) -> float:
    """Radial wavenumber that puts the first zero of ``J1`` at ``fraction * length``."""
    return J1_FIRST_ZERO / (fraction * length)


def bessel_radii(params: BesselPairParams) -> tuple[float, float]:
    """Inner and outer null radii, the roots of ``J1(kR) = c0`` about the first peak."""
    g = lambda x: bessel_j1(x) - params.c0  # noqa: E731
    inner = brentq(g, 0.0, J1_FIRST_PEAK, xtol=1e-15, rtol=1e-15)
    outer = brentq(g, J1_FIRST_PEAK, J1_FIRST_ZERO, xtol=1e-15, rtol=1e-15)
    return inner / params.k, outer / params.k


def bessel_angle(params: BesselPairParams, t: float) -> float:
    return math.fmod(0.5 * params.k**2 * t, 2.0 * math.pi)


def bessel_vortex_positions(params: BesselPairParams, t: float = 0.0) -> list[PointVortex]:
    """Inner (+1) and outer (-1) nulls on the ray at angle ``k^2 t / 2``."""
    theta = bessel_angle(params, t)
    c, s = math.cos(theta), math.sin(theta)
    out = []
    for r, q in zip(bessel_radii(params), (1, -1)):
        pos = (params.center[0] + r * c, params.center[1] + r * s)
        out.append(PointVortex(pos, q, (-1, -1)))
    return out


def bessel_pair_field(params: BesselPairParams, grid: GridSpec, t: float = 0.0, window="erfc",
                      **window_kw) -> WaveField:
    """Sampled Bessel pair; the ``J1`` part is multiplied by a radial window (``None`` disables).

    The default ``erfc`` window is centred on the first zero of ``J1`` with
    edge width ``0.09 / k``: it is 1 to ~1e-6 at both nulls for ``c0 >= 0.2``
    and suppresses the outer lobes, which would otherwise carry extra null
    rings whenever ``c0`` is below their peaks.  Pass ``r_half``/``width`` for
    a wider window, e.g. when comparing evolved fields over a large region.
    """
    if grid.dims != 2:
        raise ValueError("the Bessel pair is two-dimensional")
    dx, dy = _offsets(grid, params.center)
    r = np.sqrt(dx * dx + dy * dy)
    kr = params.k * r
    # J1(kR) e^{i phi} = J1(kR)/R (x + i y); J1(u)/u -> 1/2 at the axis
    ratio = np.where(kr > 0, bessel_j1(kr) / np.where(kr > 0, kr, 1.0), 0.5)
    amp = ratio * params.k * (dx + 1j * dy)
    if window == "erfc":
        window_kw.setdefault("r_half", min(J1_FIRST_ZERO / params.k, 0.4 * grid.length))
        window_kw.setdefault("width", 0.09 / params.k)
    w = _window(window, grid, params.center, **window_kw)
    if w is not None:
        amp = amp * w
    # reduce k^2 t / 2 modulo 2pi before the exponential to keep the phase exact
    phase = np.exp(-1j * bessel_angle(params, t))
    meta = {"params": {"analytic": "bessel", "c0": params.c0, "k": params.k,
                       "center": list(map(float, params.center)), "window": window or "none"}}
    return WaveField(grid, params.c0 - amp * phase, float(t), meta)
