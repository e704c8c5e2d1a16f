"""Random-phase initial conditions and the exact free-particle propagator.

Time evolution multiplies each Fourier mode by ``exp(-i |k|^2 dt / 2)``
(hbar = m = 1), so any target time is reached in one jump.  Random numbers
come from numpy's Philox4x64 counter-based generator seeded with the 64-bit
seed; the real parts of all mode amplitudes are drawn first (C order over the
``[ix, iy, (iz)]`` mode array), then the imaginary parts.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .grid import GridSpec, WaveField, _fft, _ifft

__all__ = [
    "InitialConditionParams",
    "random_phase_ic",
    "propagate",
    "propagate_many",
    "recurrence_time",
    "DEFAULT_DK",
    "DEFAULT_S_RMS",
]

#: Phase-spectrum width in units of 2*pi/L, by dimensionality.
DEFAULT_DK = {2: 20.0, 3: 10.0}
#: RMS phase amplitude in radians.
DEFAULT_S_RMS = 1.0


@dataclass(frozen=True)
class InitialConditionParams:
    """Parameters of the random phase field ``S``.

    ``dk`` and ``k_center`` are in units of ``2*pi/L``; ``s_rms`` in radians.
    """

    dk: float
    s_rms: float = DEFAULT_S_RMS
    k_center: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.dk > 0:
            raise ValueError(f"dk must be positive, got {self.dk}")
        if not self.s_rms > 0:
            raise ValueError(f"s_rms must be positive, got {self.s_rms}")
        if not self.k_center >= 0:
            raise ValueError(f"k_center must be non-negative, got {self.k_center}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @classmethod
    def for_dims(cls, dims: int, **kw) -> "InitialConditionParams":
        kw.setdefault("dk", DEFAULT_DK[dims])
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


def random_phase_ic(grid: GridSpec, params: InitialConditionParams) -> WaveField:
    """Unit-density field ``exp(i S)`` with a Gaussian-spectrum random phase ``S``."""
    rng = np.random.Generator(np.random.Philox(int(params.seed)))
    re = rng.standard_normal(grid.shape)
    im = rng.standard_normal(grid.shape)
    m_abs = np.sqrt(grid.mode_square)
    # variance exp(-(|m|-m_c)^2 / (2 dk^2))  ->  amplitude is its square root
    amp = np.exp(-((m_abs - params.k_center) ** 2) / (4.0 * params.dk**2))
    amp[(0,) * grid.dims] = 0.0
    phase = _ifft((re + 1j * im) * amp).real
    rms = math.sqrt(float(np.mean(phase**2)))
    if rms == 0.0:
        raise ValueError("phase spectrum is empty on this grid; increase dk")
    phase *= params.s_rms / rms
    meta = {"seed": int(params.seed), "params": {"ic": "random_phase", **params.to_dict()}}
    return WaveField(grid, np.exp(1j * phase), 0.0, meta)


def _phase_turns(grid: GridSpec, dt: float) -> np.ndarray:
    # |k|^2 dt / 2 = 2 pi * (|m|^2 * pi dt / L^2); reduce the turn count mod 1
    # before scaling so that dt = T_rec lands on whole turns to rounding.
    c = math.pi * dt / grid.length**2
    return np.mod(grid.mode_square * c, 1.0)


def propagate(f: WaveField, t_target: float) -> WaveField:
    """Evolve ``f`` exactly to ``t_target`` (forward or backward)."""
    t_target = float(t_target)
    if not math.isfinite(t_target):
        raise ValueError("t_target must be finite")
    dt = t_target - f.t
    if dt == 0.0:
        return f.with_values(f.values.copy(), t=t_target)
    coeffs = _fft(f.values)
    coeffs *= np.exp(-2j * np.pi * _phase_turns(f.grid, dt))
    return f.with_values(_ifft(coeffs), t=t_target)


def propagate_many(f: WaveField, times):
    """Yield ``f`` evolved to each of ``times``; transforms ``f`` only once."""
    coeffs = _fft(f.values)
    for t in times:
        t = float(t)
        phase = np.exp(-2j * np.pi * _phase_turns(f.grid, t - f.t))
        yield f.with_values(_ifft(coeffs * phase), t=t)


def recurrence_time(grid: GridSpec) -> float:
    """Smallest ``t > 0`` with every lattice propagator phase equal to one: ``L**2 / pi``."""
    return grid.length**2 / math.pi
