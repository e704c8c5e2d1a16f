"""Desk-scale run presets and the measurement pipelines built on them.

Times are given as fractions of the recurrence time ``L^2 / pi``.  Spectral
fit ranges are in mode units (``k L / 2 pi``).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .evolution import InitialConditionParams, propagate, propagate_many, random_phase_ic, recurrence_time
from .flow import clip_velocity, flow_spectra, fluid_variables, rotational_fraction
from .grid import GridSpec, WaveField
from .lines import face_windings
from .vortex import detect_vortices_2d, winding_array

__all__ = [
    "Preset",
    "PRESETS",
    "onset_time",
    "vortex_onset_time",
    "count_vortices",
    "prevortex_spectra",
    "steady_spectra",
    "averaged_spectra",
]


@dataclass(frozen=True)
class Preset:
    name: str
    dims: int
    n: int
    dk: float
    s_rms: float
    k_center: float = 0.0
    seeds: tuple = (1, 2, 3)
    kappa: float = 1.0
    steady_window: tuple = (0.05, 0.1)
    steady_samples: int = 6

    def grid(self) -> GridSpec:
        return GridSpec(self.dims, self.n)

    def params(self, seed: int) -> InitialConditionParams:
        return InitialConditionParams(self.dk, self.s_rms, self.k_center, seed)

    def initial(self, seed: int) -> WaveField:
        return random_phase_ic(self.grid(), self.params(seed))

    def onset_range(self) -> tuple[float, float]:
        """``[2 dk, k_nyq / 4]`` in mode units."""
        return 2.0 * self.dk, self.n / 8.0

    def scaling_range(self) -> tuple[float, float]:
        """``[4 dk, k_nyq / 4]``: beyond the injection band, below the resolution limit."""
        return 4.0 * self.dk, self.n / 8.0

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "2d": Preset("2d", 2, 512, dk=1.0, s_rms=3.0),
    "2d-strong": Preset("2d-strong", 2, 512, dk=1.0, s_rms=4.5),
    "3d-sparse": Preset("3d-sparse", 3, 64, dk=1.0, s_rms=1.0),
    "3d": Preset("3d", 3, 64, dk=1.0, s_rms=1.5, steady_samples=4),
    "2d-inject": Preset("2d-inject", 2, 512, dk=2.0, s_rms=1.0, k_center=32.0),
}


def _bisect(pred, t_lo: float, t_hi: float, iters: int) -> tuple[float, float]:
    """Shrink ``[t_lo, t_hi]`` with ``pred(t_lo)`` False and ``pred(t_hi)`` True."""
    for _ in range(iters):
        mid = 0.5 * (t_lo + t_hi)
        if pred(mid):
            t_hi = mid
        else:
            t_lo = mid
    return t_lo, t_hi


def onset_time(f0: WaveField, threshold: float = 1e-3, t_max_frac: float = 0.05, iters: int = 30) -> float:
    """Last time (to bisection precision) with rotational energy fraction below ``threshold``."""
    t_max = t_max_frac * recurrence_time(f0.grid)

    def above(t):
        g = propagate(f0, f0.t + t)
        return rotational_fraction(fluid_variables(g).v, g.grid) >= threshold

    if not above(t_max):
        raise RuntimeError(f"rotational fraction stays below {threshold} up to t={t_max:.3g}")
    lo, _ = _bisect(above, 0.0, t_max, iters)
    return f0.t + lo


def count_vortices(f: WaveField) -> int:
    """Point vortices (2D) or pierced faces (3D)."""
    if f.grid.dims == 2:
        return int(np.count_nonzero(winding_array(f.values)))
    return int(np.count_nonzero(face_windings(f)))


def vortex_onset_time(f0: WaveField, t_max_frac: float = 0.05, iters: int = 30) -> float:
    """Earliest time (to bisection precision) at which any vortex is detected."""
    t_max = t_max_frac * recurrence_time(f0.grid)

    def has(t):
        return count_vortices(propagate(f0, f0.t + t)) > 0

    if not has(t_max):
        raise RuntimeError(f"no vortices up to t={t_max:.3g}")
    _, hi = _bisect(has, 0.0, t_max, iters)
    return f0.t + hi


def prevortex_spectra(f0: WaveField, threshold: float = 1e-3, **kw):
    """Spectra at the onset time; returns ``(t, {total, potential, rotational})``."""
    t = onset_time(f0, threshold, **kw)
    g = propagate(f0, t)
    return t, flow_spectra(fluid_variables(g).v, g.grid)


def averaged_spectra(fields, kappa: float | None = 1.0):
    """Mean unclipped and clipped spectra over ``fields``.

    Returns a dict with keys ``unclipped`` and ``clipped`` (each a dict of
    total/potential/rotational spectra), ``n_clipped`` and ``vortices`` lists.
    """
    acc_u, acc_c = None, None
    n_clip, n_vort = [], []
    m = 0
    for g in fields:
        flow = fluid_variables(g)
        su = flow_spectra(flow.v, g.grid)
        acc_u = su if acc_u is None else {k: acc_u[k] + su[k] for k in su}
        if kappa is not None:
            cflow, nc = clip_velocity(flow, kappa)
            sc = flow_spectra(cflow.v, g.grid)
            acc_c = sc if acc_c is None else {k: acc_c[k] + sc[k] for k in sc}
            n_clip.append(nc)
        n_vort.append(count_vortices(g))
        m += 1
    if m == 0:
        raise ValueError("no fields to average")
    out = {"unclipped": {k: v.scaled(1.0 / m) for k, v in acc_u.items()}, "n_clipped": n_clip, "vortices": n_vort}
    if acc_c is not None:
        out["clipped"] = {k: v.scaled(1.0 / m) for k, v in acc_c.items()}
    return out


def steady_spectra(f0: WaveField, window=(0.05, 0.1), samples: int = 6, kappa: float | None = 1.0):
    """``averaged_spectra`` over ``samples`` evenly spaced times in ``window`` (fractions of T_rec)."""
    trec = recurrence_time(f0.grid)
    times = f0.t + trec * np.linspace(window[0], window[1], samples)
    return averaged_spectra(propagate_many(f0, times), kappa)


def vortex_sample(f: WaveField):
    """Detected 2D vortices, asserting zero net charge."""
    vort = detect_vortices_2d(f)
    net = sum(p.charge for p in vort)
    if net != 0:
        raise AssertionError(f"net charge {net} on a periodic snapshot")
    return vort
