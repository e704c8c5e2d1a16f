"""Point vortices: detection, kinematics and the induction baseline.

Plaquette windings sum the wrapped phase increments around the four edges of
a grid cell, counter-clockwise about the positive normal.  Positions are in
box units; the vortex in cell ``(i, j)`` lies in ``[i dx, (i+1) dx) x
[j dx, (j+1) dx)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .evolution import propagate
from .grid import GridSpec, WaveField, _fft, _ifft

__all__ = [
    "PointVortex",
    "DegenerateCornerError",
    "TangentSurfacesError",
    "TrackingAmbiguityError",
    "wrap_phase",
    "winding_array",
    "plaquette_winding",
    "bilinear_null",
    "detect_vortices_2d",
    "FieldJet",
    "refine_null",
    "vortex_velocity",
    "material_velocity",
    "null_advection_velocity",
    "regularized_material_velocity",
    "biot_savart_2d",
    "track_null",
    "track_nulls",
    "net_charge",
    "vortices_to_json",
    "vortices_from_json",
]


class DegenerateCornerError(ValueError):
    """A plaquette corner sample is exactly zero, so its phase is undefined."""


class TangentSurfacesError(ValueError):
    """grad Re(psi) and grad Im(psi) are parallel at the null."""


class TrackingAmbiguityError(RuntimeError):
    pass


@dataclass(frozen=True)
class PointVortex:
    position: tuple
    charge: int
    host_cell: tuple
    converged: bool = True

    @property
    def x(self) -> float:
        return self.position[0]

    @property
    def y(self) -> float:
        return self.position[1]


def wrap_phase(d):
    """Map phase differences into ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - d, 2.0 * np.pi)


def _check_corners(values):
    if np.any(values == 0):
        idx = tuple(int(i) for i in np.argwhere(values == 0)[0])
        raise DegenerateCornerError(f"psi == 0 exactly at grid point {idx}; shift the field by half a cell")


def winding_array(values: np.ndarray, axes=(0, 1)) -> np.ndarray:
    """Winding of every plaquette spanned by ``axes`` (lower-left corner indexing)."""
    a1, a2 = axes
    ph = np.angle(values)
    p1 = np.roll(ph, -1, a1)
    p12 = np.roll(p1, -1, a2)
    p2 = np.roll(ph, -1, a2)
    total = wrap_phase(p1 - ph) + wrap_phase(p12 - p1) + wrap_phase(p2 - p12) + wrap_phase(ph - p2)
    return np.rint(total / (2.0 * np.pi)).astype(np.int64)


def _face_axes(dims, face):
    if dims == 2:
        return (0, 1)
    if face not in (0, 1, 2):
        raise ValueError("3D plaquettes need face in {0, 1, 2} (normal axis)")
    return ((face + 1) % 3, (face + 2) % 3)


def plaquette_winding(f: WaveField, cell, face: int | None = None) -> int:
    """Winding number of one plaquette.

    In 3D, ``face`` is the normal axis and the plaquette is the lower face of
    ``cell`` with that normal, traversed counter-clockwise about ``+normal``.
    """
    a1, a2 = _face_axes(f.grid.dims, face)
    n = f.grid.n
    base = np.array(cell, dtype=int) % n
    e1 = np.zeros(f.grid.dims, int)
    e1[a1] = 1
    e2 = np.zeros(f.grid.dims, int)
    e2[a2] = 1
    corners = [base, base + e1, base + e1 + e2, base + e2]
    vals = np.array([f.values[tuple(c % n)] for c in corners])
    _check_corners(vals)
    ph = np.angle(vals)
    total = sum(wrap_phase(ph[(i + 1) % 4] - ph[i]) for i in range(4))
    return int(np.rint(total / (2.0 * np.pi)))


def bilinear_null(c00, c10, c01, c11, tol=1e-10, max_iter=20):
    """Zero of the bilinear interpolant on the unit square, vectorized.

    Returns ``(u, v, converged)``; non-converged entries sit at the centre.
    """
    c00, c10, c01, c11 = (np.asarray(c, dtype=complex) for c in (c00, c10, c01, c11))
    b = c10 - c00
    c = c01 - c00
    d = c11 - c10 - c01 + c00
    u = np.full(c00.shape, 0.5)
    v = np.full(c00.shape, 0.5)
    done = np.zeros(c00.shape, bool)
    for _ in range(max_iter):
        fval = c00 + b * u + c * v + d * u * v
        ju = b + d * v
        jv = c + d * u
        det = ju.real * jv.imag - jv.real * ju.imag
        det = np.where(det == 0, np.nan, det)
        du = -(jv.imag * fval.real - jv.real * fval.imag) / det
        dv = -(-ju.imag * fval.real + ju.real * fval.imag) / det
        du = np.where(done, 0.0, du)
        dv = np.where(done, 0.0, dv)
        u = u + du
        v = v + dv
        step = np.hypot(du, dv)
        done = done | (step < tol)
        if np.all(done | ~np.isfinite(step)):
            break
    inside = (u >= -tol) & (u <= 1 + tol) & (v >= -tol) & (v <= 1 + tol)
    ok = done & np.isfinite(u) & np.isfinite(v) & inside
    u = np.where(ok, np.clip(u, 0.0, 1.0), 0.5)
    v = np.where(ok, np.clip(v, 0.0, 1.0), 0.5)
    return u, v, ok


def detect_vortices_2d(f: WaveField) -> list[PointVortex]:
    """All point vortices of a 2D field, ordered by host cell."""
    if f.grid.dims != 2:
        raise ValueError("detect_vortices_2d needs a 2D field")
    psi = f.values
    _check_corners(psi)
    w = winding_array(psi)
    cells = np.argwhere(w != 0)
    if len(cells) == 0:
        return []
    n, dx = f.grid.n, f.grid.dx
    i, j = cells[:, 0], cells[:, 1]
    ip, jp = (i + 1) % n, (j + 1) % n
    u, v, ok = bilinear_null(psi[i, j], psi[ip, j], psi[i, jp], psi[ip, jp])
    xs = (i + u) * dx
    ys = (j + v) * dx
    return [
        PointVortex((float(x), float(y)), int(q), (int(a), int(b)), bool(c))
        for x, y, q, a, b, c in zip(xs, ys, w[i, j], i, j, ok)
    ]


def net_charge(vortices) -> int:
    return int(sum(p.charge for p in vortices))


# --- local derivatives at off-grid points ----------------------------------------


class FieldJet:
    """Spectral derivatives of ``psi`` up to second order, cubic-spline interpolated.

    Calling the jet on ``points`` (shape ``(npts, dims)``, box units) returns a
    dict with ``psi``, ``grad`` (``(npts, dims)``) and ``hess``
    (``(npts, dims, dims)``), all complex.
    """

    def __init__(self, f: WaveField):
        self.grid = f.grid
        g = f.grid
        coeffs = _fft(f.values)
        k = g.derivative_wavevector
        kfull = g.wavevector
        d = g.dims
        fields = {"psi": f.values}
        for a in range(d):
            fields[(a,)] = _ifft(1j * k[a] * coeffs)
        #: mean |grad psi|^2 over the grid, the scale for degeneracy tests
        self.grad_sq_mean = float(sum(np.mean(np.abs(fields[(a,)]) ** 2) for a in range(d)))
        for a in range(d):
            for b in range(a, d):
                ka = kfull[a] if a == b else k[a]
                kb = kfull[b] if a == b else k[b]
                fields[(a, b)] = _ifft(-ka * kb * coeffs)
        self._spl = {}
        for key, arr in fields.items():
            self._spl[key] = (
                ndimage.spline_filter(arr.real, order=3, mode="grid-wrap"),
                ndimage.spline_filter(arr.imag, order=3, mode="grid-wrap"),
            )

    def _eval(self, key, coords):
        re, im = self._spl[key]
        kw = dict(order=3, mode="grid-wrap", prefilter=False)
        return ndimage.map_coordinates(re, coords, **kw) + 1j * ndimage.map_coordinates(im, coords, **kw)

    def __call__(self, points, derivatives=2):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = self.grid.dims
        coords = (pts / self.grid.dx).T
        out = {"psi": self._eval("psi", coords)}
        if derivatives >= 1:
            out["grad"] = np.stack([self._eval((a,), coords) for a in range(d)], axis=-1)
        if derivatives >= 2:
            h = np.empty((pts.shape[0], d, d), dtype=complex)
            for a in range(d):
                for b in range(a, d):
                    h[:, a, b] = h[:, b, a] = self._eval((a, b), coords)
            out["hess"] = h
        return out


def refine_null(jet: FieldJet, x0, tol=1e-12, max_iter=30):
    """Newton iteration on the interpolated 2D field; returns ``(x, converged)`` per point."""
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    dx = jet.grid.dx
    conv = np.zeros(len(x), bool)
    for _ in range(max_iter):
        loc = jet(x, derivatives=1)
        psi, g = loc["psi"], loc["grad"]
        rx, ry, ix, iy = g[:, 0].real, g[:, 1].real, g[:, 0].imag, g[:, 1].imag
        det = rx * iy - ry * ix
        det = np.where(det == 0, np.nan, det)
        sx = -(iy * psi.real - ry * psi.imag) / det
        sy = -(-ix * psi.real + rx * psi.imag) / det
        sx = np.where(conv, 0.0, sx)
        sy = np.where(conv, 0.0, sy)
        step = np.hypot(sx, sy)
        # no single Newton step may exceed one cell
        lim = np.where(step > dx, dx / np.where(step > 0, step, 1), 1.0)
        x[:, 0] += sx * lim
        x[:, 1] += sy * lim
        conv |= step < tol * dx
        if np.all(conv | ~np.isfinite(step)):
            break
    return x, conv


def null_advection_velocity(grad: np.ndarray, lap: np.ndarray, scale: float = 0.0) -> np.ndarray:
    """Velocity ``w`` of a 2D null from local derivatives.

    Solves ``w . grad R = lap I / 2`` and ``w . grad I = -lap R / 2``.
    ``grad`` is ``(npts, 2)`` complex, ``lap`` is ``(npts,)`` complex.
    """
    grad = np.atleast_2d(grad)
    lap = np.atleast_1d(lap)
    rx, ry = grad[:, 0].real, grad[:, 1].real
    ix, iy = grad[:, 0].imag, grad[:, 1].imag
    det = rx * iy - ry * ix
    mag = np.hypot(rx, ry) * np.hypot(ix, iy)
    bad = (np.abs(det) <= 1e-12 * mag) | (np.abs(det) <= 1e-12 * scale) | (mag == 0)
    if np.any(bad):
        raise TangentSurfacesError(f"{int(np.count_nonzero(bad))} null(s) with parallel grad R and grad I")
    b1 = 0.5 * lap.imag
    b2 = -0.5 * lap.real
    wx = (iy * b1 - ry * b2) / det
    wy = (-ix * b1 + rx * b2) / det
    return np.stack([wx, wy], axis=-1)


def regularized_material_velocity(grad: np.ndarray, hess: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """``Im[grad psi* . (H - I lap/2) psi] / (2 |grad psi|^2)`` for 2D jets."""
    grad = np.atleast_2d(grad)
    hess = np.asarray(hess).reshape(-1, 2, 2)
    lap = hess[:, 0, 0] + hess[:, 1, 1]
    m = hess - 0.5 * lap[:, None, None] * np.eye(2)[None]
    num = np.einsum("pi,pij->pj", np.conj(grad), m).imag
    g2 = np.sum(np.abs(grad) ** 2, axis=-1)
    if np.any(g2 <= floor) or np.any(g2 == 0):
        raise TangentSurfacesError("|grad psi|^2 below the degeneracy floor")
    return num / (2.0 * g2[:, None])


def vortex_velocity(f: WaveField, x0, jet: FieldJet | None = None) -> np.ndarray:
    """Propagation velocity of the 2D null(s) at ``x0`` (one point or ``(npts, 2)``)."""
    if f.grid.dims != 2:
        raise ValueError("vortex_velocity works on 2D fields; use lines.line_velocity in 3D")
    jet = jet or FieldJet(f)
    x0 = np.asarray(x0, float)
    loc = jet(np.atleast_2d(x0))
    lap = np.trace(loc["hess"], axis1=1, axis2=2)
    w = null_advection_velocity(loc["grad"], lap, jet.grad_sq_mean)
    return w[0] if x0.ndim == 1 else w


def material_velocity(f: WaveField, x0, jet: FieldJet | None = None) -> np.ndarray:
    """Regularized material velocity at the null(s) ``x0``."""
    if f.grid.dims != 2:
        raise ValueError("material_velocity works on 2D fields")
    jet = jet or FieldJet(f)
    x0 = np.asarray(x0, float)
    loc = jet(np.atleast_2d(x0))
    v = regularized_material_velocity(loc["grad"], loc["hess"], 1e-12 * jet.grad_sq_mean)
    return v[0] if x0.ndim == 1 else v


# --- induction ------------------------------------------------------------------


def biot_savart_2d(vortices, x, exclude_index: int | None = None, length: float | None = None) -> np.ndarray:
    """Induced velocity ``sum q_j z x (x - x_j) / |x - x_j|^2`` at ``x``.

    With ``length`` set, separations use the minimum image in that periodic box.
    """
    pos = np.array([p.position for p in vortices], float).reshape(-1, 2)
    q = np.array([p.charge for p in vortices], float)
    keep = np.ones(len(pos), bool)
    if exclude_index is not None:
        keep[exclude_index] = False
    d = np.asarray(x, float)[None, :] - pos[keep]
    if length is not None:
        d = d - length * np.round(d / length)
    r2 = np.sum(d * d, axis=1)
    if np.any(r2 == 0):
        raise ZeroDivisionError("evaluation point coincides with a vortex")
    return np.array([np.sum(q[keep] * -d[:, 1] / r2), np.sum(q[keep] * d[:, 0] / r2)])


# --- tracking -------------------------------------------------------------------


def _nearest_nulls(vort, x0, grid: GridSpec):
    pos = np.array([p.position for p in vort], float).reshape(-1, 2)
    d = grid.minimum_image(pos[None, :, :] - np.atleast_2d(x0)[:, None, :])
    dist = np.hypot(d[..., 0], d[..., 1])
    order = np.argsort(dist, axis=1)
    return pos, dist, order


def track_nulls(f: WaveField, x0, dt: float, refine: bool = True):
    """Centred-difference velocities of the nulls at ``x0`` from re-detection at ``t +- dt``.

    Returns ``(velocities, ok)``; ``ok`` is False where the nearest-null match
    is ambiguous (another null within twice the displacement, or displacement
    of half a cell or more).
    """
    grid = f.grid
    x0 = np.atleast_2d(np.asarray(x0, float))
    ends = []
    ok = np.ones(len(x0), bool)
    for sign in (+1, -1):
        g = propagate(f, f.t + sign * dt)
        vort = detect_vortices_2d(g)
        if len(vort) == 0:
            raise TrackingAmbiguityError("no nulls found after propagation")
        pos, dist, order = _nearest_nulls(vort, x0, grid)
        rows = np.arange(len(x0))
        d1 = dist[rows, order[:, 0]]
        d2 = dist[rows, order[:, 1]] if pos.shape[0] > 1 else np.full(len(x0), np.inf)
        ok &= (d2 > 2.0 * d1) & (d1 < 0.5 * grid.dx)
        best = pos[order[:, 0]]
        if refine:
            best, conv = refine_null(FieldJet(g), best)
            ok &= conv
        ends.append(best)
    disp = grid.minimum_image(ends[0] - ends[1])
    return disp / (2.0 * dt), ok


def track_null(f: WaveField, x0, dt: float, refine: bool = True) -> np.ndarray:
    """Measured velocity of the null nearest ``x0``."""
    w, ok = track_nulls(f, np.asarray(x0, float)[None], dt, refine)
    if not ok[0]:
        raise TrackingAmbiguityError(f"null near {tuple(x0)} cannot be matched unambiguously at dt={dt}")
    return w[0]


# --- JSON -----------------------------------------------------------------------


def vortices_to_json(vortices, t: float, path=None, extra: dict | None = None, columns: dict | None = None):
    """Serialize to ``{dims: 2, t, vortices: [{x, y, charge, ...}]}``."""
    rows = []
    for i, p in enumerate(vortices):
        row = {"x": p.x, "y": p.y, "charge": p.charge}
        for name, vals in (columns or {}).items():
            val = vals[i]
            row[name] = None if val is None else [float(c) for c in val]
        rows.append(row)
    doc = {"dims": 2, "t": float(t), "vortices": rows}
    if extra:
        doc.update(extra)
    if path is not None:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)
    return doc


def vortices_from_json(src, grid: GridSpec | None = None):
    """Inverse of ``vortices_to_json``; accepts a path or a parsed document."""
    doc = src
    if not isinstance(src, dict):
        with open(src) as fh:
            doc = json.load(fh)
    if doc.get("dims") != 2:
        raise ValueError("not a 2D vortex document")
    out = []
    for row in doc["vortices"]:
        cell = (-1, -1)
        if grid is not None:
            cell = (int(math.floor(row["x"] / grid.dx)), int(math.floor(row["y"] / grid.dx)))
        out.append(PointVortex((float(row["x"]), float(row["y"])), int(row["charge"]), cell))
    return out, doc
