"""Madelung fluid variables, Helmholtz decomposition and shell spectra.

Velocity arrays are stacked along axis 0: ``v[j]`` is the ``j``-th component.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .grid import GridSpec, WaveField, _fft, _ifft, gradient_array, laplacian_array

__all__ = [
    "FlowFields",
    "Spectrum",
    "PowerLawFit",
    "InsufficientDataError",
    "fluid_variables",
    "quantum_potential",
    "helmholtz_decompose",
    "energy_spectrum",
    "flow_spectra",
    "clip_velocity",
    "fit_power_law",
    "loglog_fit",
    "equipartition_ratio",
    "band_energy",
    "rotational_fraction",
    "write_spectrum_csv",
    "read_spectrum_csv",
]


class InsufficientDataError(ValueError):
    """Too few usable bins for a fit."""


@dataclass
class FlowFields:
    grid: GridSpec
    rho: np.ndarray
    v: np.ndarray
    t: float = 0.0
    flagged: np.ndarray | None = None
    v_p: np.ndarray | None = None
    v_r: np.ndarray | None = None
    v_mean: np.ndarray | None = None

    @property
    def speed(self) -> np.ndarray:
        return np.sqrt(np.sum(self.v**2, axis=0))


@dataclass
class PowerLawFit:
    slope: float
    amplitude: float
    r2: float
    lo: float
    hi: float
    npoints: int

    def as_dict(self) -> dict:
        return {"slope": self.slope, "amplitude": self.amplitude, "r2": self.r2,
                "lo": self.lo, "hi": self.hi, "npoints": self.npoints}


@dataclass
class Spectrum:
    """Energy per unit-width shell; ``k_bins`` are shell centres in units of 2*pi/L."""

    k_bins: np.ndarray
    energy: np.ndarray
    counts: np.ndarray
    fit: PowerLawFit | None = None

    def __add__(self, other: "Spectrum") -> "Spectrum":
        if len(self.energy) != len(other.energy):
            raise ValueError("spectra have different shell layouts")
        return Spectrum(self.k_bins, self.energy + other.energy, self.counts)

    def scaled(self, factor: float) -> "Spectrum":
        return Spectrum(self.k_bins, self.energy * factor, self.counts)

    def total(self) -> float:
        return float(np.sum(self.energy))


def fluid_variables(f: WaveField, rho_floor: float | None = None) -> FlowFields:
    """Density ``|psi|^2`` and velocity ``Im(psi* grad psi) / rho``.

    Points with ``rho < rho_floor`` are flagged; their velocity uses the floor
    in the denominator.  The default floor is ``1e-12 * max(rho)``.
    """
    psi = f.values
    rho = f.density
    if rho_floor is None:
        rho_floor = 1e-12 * float(rho.max())
    grad = gradient_array(psi, f.grid)
    flux = (np.conj(psi)[None] * grad).imag
    flagged = rho < rho_floor
    v = flux / np.maximum(rho, rho_floor)[None]
    return FlowFields(f.grid, rho, v, f.t, flagged)


def quantum_potential(f: WaveField, rho_floor: float | None = None):
    """``lap(sqrt(rho)) / (2 sqrt(rho))``; returns ``(Q, flagged)``."""
    rho = f.density
    if rho_floor is None:
        rho_floor = 1e-12 * float(rho.max())
    amp = np.sqrt(rho)
    lap = laplacian_array(amp, f.grid)
    flagged = rho < rho_floor
    q = lap / (2.0 * np.maximum(amp, math.sqrt(rho_floor)))
    return q, flagged


def _project(vk: np.ndarray, grid: GridSpec):
    """Split spectral vector coefficients into (potential, rotational, mean)."""
    k = grid.wavevector
    k2 = grid.k_squared.astype(float)
    zero = (0,) * grid.dims
    k2[zero] = 1.0
    div = sum(kj * vj for kj, vj in zip(k, vk)) / k2
    vp = np.stack([kj * div for kj in k])
    vp[(slice(None),) + zero] = 0.0
    vr = vk - vp
    mean = vk[(slice(None),) + zero].copy()
    vr[(slice(None),) + zero] = 0.0
    return vp, vr, mean


def helmholtz_decompose(flow: FlowFields) -> FlowFields:
    """Fill ``v_p``, ``v_r`` (k != 0 parts) and ``v_mean`` (the k = 0 mode)."""
    vk = np.stack([_fft(c) for c in flow.v])
    vp, vr, mean = _project(vk, flow.grid)
    return replace(
        flow,
        v_p=np.stack([_ifft(c).real for c in vp]),
        v_r=np.stack([_ifft(c).real for c in vr]),
        v_mean=mean.real,
    )


def _spectrum_from_coeffs(vk: np.ndarray, grid: GridSpec) -> Spectrum:
    shell = grid.shell_index.ravel()
    nb = int(shell.max()) + 1
    power = 0.5 * np.sum(vk.real**2 + vk.imag**2, axis=0).ravel()
    # bincount accumulates in flat index order, so the sums are reproducible
    energy = np.bincount(shell, weights=power, minlength=nb)
    counts = np.bincount(shell, minlength=nb)
    return Spectrum(np.arange(nb, dtype=float), energy, counts)


def energy_spectrum(vfield: np.ndarray, grid: GridSpec) -> Spectrum:
    """``E(b) = 1/2 sum |v_k|^2`` over shell ``b``; sums to ``<|v|^2>/2``."""
    vk = np.stack([_fft(c) for c in np.asarray(vfield)])
    return _spectrum_from_coeffs(vk, grid)


def flow_spectra(v: np.ndarray, grid: GridSpec) -> dict[str, Spectrum]:
    """Total, potential and rotational spectra of ``v`` from a single set of transforms."""
    vk = np.stack([_fft(c) for c in np.asarray(v)])
    vp, vr, _ = _project(vk, grid)
    return {
        "total": _spectrum_from_coeffs(vk, grid),
        "potential": _spectrum_from_coeffs(vp, grid),
        "rotational": _spectrum_from_coeffs(vr, grid),
    }


def rotational_fraction(v: np.ndarray, grid: GridSpec) -> float:
    s = flow_spectra(v, grid)
    ep, er = s["potential"].total(), s["rotational"].total()
    return er / (ep + er) if ep + er > 0 else 0.0


def clip_velocity(flow: FlowFields, kappa: float = 1.0):
    """Cap ``|v|`` at ``kappa / dx`` keeping its direction.

    Returns ``(clipped_flow, n_clipped)``; decomposition fields are dropped.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    vmax = kappa / flow.grid.dx
    speed = flow.speed
    over = speed > vmax
    scale = np.ones_like(speed)
    scale[over] = vmax / speed[over]
    clipped = replace(flow, v=flow.v * scale[None], v_p=None, v_r=None, v_mean=None)
    return clipped, int(np.count_nonzero(over))


def loglog_fit(x, y) -> tuple[float, float, float]:
    """Least-squares line through ``(log x, log y)``: ``(slope, amplitude, r2)``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    a = np.vstack([lx, np.ones_like(lx)]).T
    (slope, icpt), *_ = np.linalg.lstsq(a, ly, rcond=None)
    resid = ly - (slope * lx + icpt)
    sst = float(np.sum((ly - ly.mean()) ** 2))
    # a flat series has no variance to explain; rounding noise would make r2 meaningless
    flat = sst <= 1e-24 * max(1.0, float(np.sum(ly * ly)))
    r2 = 1.0 if flat else 1.0 - float(np.sum(resid**2)) / sst
    return float(slope), float(math.exp(icpt)), r2


def fit_power_law(spec: Spectrum, k_lo: float, k_hi: float) -> PowerLawFit:
    sel = (spec.k_bins >= k_lo) & (spec.k_bins <= k_hi) & (spec.counts > 0) & (spec.k_bins > 0)
    if np.count_nonzero(sel) < 5:
        raise InsufficientDataError(f"need >= 5 non-empty shells in [{k_lo}, {k_hi}], have {np.count_nonzero(sel)}")
    e = spec.energy[sel]
    if np.any(e <= 0):
        raise ValueError("non-positive shell energy inside the fit range")
    slope, amp, r2 = loglog_fit(spec.k_bins[sel], e)
    return PowerLawFit(slope, amp, r2, float(k_lo), float(k_hi), int(np.count_nonzero(sel)))


def _band(spec: Spectrum, k_lo, k_hi):
    return (spec.k_bins >= k_lo) & (spec.k_bins <= k_hi)


def band_energy(spec: Spectrum, k_lo: float, k_hi: float) -> float:
    return float(np.sum(spec.energy[_band(spec, k_lo, k_hi)]))


def equipartition_ratio(spec_p: Spectrum, spec_r: Spectrum, k_lo: float, k_hi: float) -> float:
    """Potential over rotational energy summed across shells in ``[k_lo, k_hi]``."""
    if len(spec_p.energy) != len(spec_r.energy):
        raise ValueError("spectra are not aligned")
    if not np.any(_band(spec_p, k_lo, k_hi)):
        raise ValueError(f"no shells in [{k_lo}, {k_hi}]")
    er = band_energy(spec_r, k_lo, k_hi)
    if er == 0.0:
        raise ZeroDivisionError("no rotational energy in range")
    return band_energy(spec_p, k_lo, k_hi) / er


def write_spectrum_csv(spec: Spectrum, path) -> None:
    with open(path, "w") as fh:
        fh.write("# k,E,count\n")
        for k, e, c in zip(spec.k_bins, spec.energy, spec.counts):
            fh.write(f"{k:.17g},{e:.17g},{int(c)}\n")


def read_spectrum_csv(path) -> Spectrum:
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return Spectrum(data[:, 0], data[:, 1], data[:, 2].astype(np.int64))
