"""Periodic grids, wavefunction containers, spectral transforms and snapshots.

Arrays are indexed ``values[ix, iy]`` (2D) or ``values[ix, iy, iz]`` (3D), so
axis ``j`` of every array is the ``j``-th spatial coordinate.  Forward
transforms carry the ``1/n**dims`` factor, which makes the ``m = 0``
coefficient equal to the field mean.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.fft

__all__ = [
    "GridSpec",
    "WaveField",
    "SpectralField",
    "SnapshotError",
    "BadMagicError",
    "VersionMismatchError",
    "TruncatedSnapshotError",
    "DimensionMismatchError",
    "fft_workers",
    "forward_transform",
    "inverse_transform",
    "spectral_gradient",
    "spectral_laplacian",
    "gradient_array",
    "laplacian_array",
    "save_snapshot",
    "load_snapshot",
]

SNAPSHOT_MAGIC = b"QTRB"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIddQI")


def fft_workers() -> int:
    """Worker count for FFTs, capped by the ``QVORT_THREADS`` variable."""
    cap = os.environ.get("QVORT_THREADS")
    if cap:
        try:
            return max(1, int(cap))
        except ValueError:
            pass
    return 1


@dataclass(frozen=True)
class GridSpec:
    """Cubic periodic grid with ``n`` samples per axis over a box of side ``length``."""

    dims: int
    n: int
    length: float = 1.0

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ValueError(f"dims must be 2 or 3, got {self.dims}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not (self.length > 0 and np.isfinite(self.length)):
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dims

    @property
    def size(self) -> int:
        return self.n**self.dims

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dims

    @property
    def k_fundamental(self) -> float:
        return 2.0 * np.pi / self.length

    @property
    def k_nyquist(self) -> float:
        return np.pi * self.n / self.length

    @cached_property
    def mode_index_1d(self) -> np.ndarray:
        # [0, 1, ..., n/2-1, -n/2, ..., -1]
        return np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)

    def _axis_view(self, arr: np.ndarray, axis: int) -> np.ndarray:
        shape = [1] * self.dims
        shape[axis] = self.n
        return arr.reshape(shape)

    @cached_property
    def modes(self) -> tuple[np.ndarray, ...]:
        """Integer mode index per axis, broadcastable to ``shape``."""
        return tuple(self._axis_view(self.mode_index_1d, a) for a in range(self.dims))

    @cached_property
    def wavevector(self) -> tuple[np.ndarray, ...]:
        return tuple(self.k_fundamental * m for m in self.modes)

    @cached_property
    def derivative_wavevector(self) -> tuple[np.ndarray, ...]:
        """Wavevector with the Nyquist entry zeroed, for odd derivatives."""
        k1 = self.k_fundamental * self.mode_index_1d.astype(float)
        k1[self.n // 2] = 0.0
        return tuple(self._axis_view(k1, a) for a in range(self.dims))

    @cached_property
    def mode_square(self) -> np.ndarray:
        """Integer ``|m|**2`` on the full grid."""
        out = np.zeros(self.shape, dtype=np.int64)
        for m in self.modes:
            out = out + m * m
        return out

    @cached_property
    def k_squared(self) -> np.ndarray:
        return self.k_fundamental**2 * self.mode_square

    @cached_property
    def shell_index(self) -> np.ndarray:
        """Unit-width shell ``b`` with ``|m|`` in ``[b - 1/2, b + 1/2)``."""
        return np.floor(np.sqrt(self.mode_square) + 0.5).astype(np.int64)

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, ...]:
        x1 = np.arange(self.n) * self.dx
        return tuple(self._axis_view(x1, a) for a in range(self.dims))

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Dense coordinate arrays."""
        return tuple(np.broadcast_to(c, self.shape) for c in self.coordinates)

    def minimum_image(self, d):
        d = np.asarray(d, dtype=float)
        return d - self.length * np.round(d / self.length)


@dataclass
class WaveField:
    """Complex samples of the wavefunction at time ``t``."""

    grid: GridSpec
    values: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")

    @property
    def density(self) -> np.ndarray:
        return self.values.real**2 + self.values.imag**2

    def norm(self) -> float:
        # np.sum uses a fixed pairwise reduction order, so repeated calls are bit-identical.
        return float(np.sum(self.density) * self.grid.cell_volume)

    def with_values(self, values, t=None) -> "WaveField":
        return replace(self, values=values, t=self.t if t is None else t, meta=dict(self.meta))


@dataclass
class SpectralField:
    """Fourier coefficients indexed by integer mode in numpy FFT order."""

    grid: GridSpec
    coefficients: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict)


def _fft(values):
    return scipy.fft.fftn(values, norm="forward", workers=fft_workers())


def _ifft(coeffs):
    return scipy.fft.ifftn(coeffs, norm="forward", workers=fft_workers())


def forward_transform(f: WaveField) -> SpectralField:
    return SpectralField(f.grid, _fft(f.values), f.t, dict(f.meta))


def inverse_transform(s: SpectralField) -> WaveField:
    return WaveField(s.grid, _ifft(s.coefficients), s.t, dict(s.meta))


def gradient_array(values: np.ndarray, grid: GridSpec, coeffs: np.ndarray | None = None) -> np.ndarray:
    """Spectral gradient of a (real or complex) array, stacked along axis 0.

    Real input gives real output.
    """
    if coeffs is None:
        coeffs = _fft(values)
    out = np.stack([_ifft(1j * k * coeffs) for k in grid.derivative_wavevector])
    if not np.iscomplexobj(values):
        out = out.real
    return out


def laplacian_array(values: np.ndarray, grid: GridSpec, coeffs: np.ndarray | None = None) -> np.ndarray:
    if coeffs is None:
        coeffs = _fft(values)
    out = _ifft(-grid.k_squared * coeffs)
    if not np.iscomplexobj(values):
        out = out.real
    return out


def spectral_gradient(f: WaveField) -> list[WaveField]:
    """One field per axis: the inverse transform of ``i k_j psi_k``."""
    grads = gradient_array(f.values, f.grid)
    return [WaveField(f.grid, g, f.t, dict(f.meta)) for g in grads]


def spectral_laplacian(f: WaveField) -> WaveField:
    return WaveField(f.grid, laplacian_array(f.values, f.grid), f.t, dict(f.meta))


# --- snapshots -----------------------------------------------------------------


class SnapshotError(Exception):
    """Base class for unreadable snapshot files."""


class BadMagicError(SnapshotError):
    pass


class VersionMismatchError(SnapshotError):
    pass


class TruncatedSnapshotError(SnapshotError):
    pass


class DimensionMismatchError(SnapshotError):
    pass


def save_snapshot(f: WaveField, path) -> None:
    """Write ``f`` in the little-endian QTRB v1 layout (x index fastest)."""
    meta = dict(f.meta)
    seed = int(meta.pop("seed", 0) or 0)
    params = json.dumps(meta.get("params", meta), sort_keys=True).encode("utf-8")
    header = _HEADER.pack(
        SNAPSHOT_MAGIC, SNAPSHOT_VERSION, f.grid.dims, f.grid.n,
        float(f.grid.length), float(f.t), seed & 0xFFFFFFFFFFFFFFFF, len(params),
    )
    payload = np.ascontiguousarray(f.values.ravel(order="F"), dtype="<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(params)
        fh.write(payload)


def load_snapshot(path, dims: int | None = None) -> WaveField:
    """Read a QTRB snapshot; ``dims`` optionally asserts the expected dimensionality."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != SNAPSHOT_MAGIC:
        raise BadMagicError(f"{path}: not a QTRB snapshot (magic {blob[:4]!r})")
    if len(blob) < _HEADER.size:
        raise TruncatedSnapshotError(f"{path}: header truncated ({len(blob)} bytes)")
    _, version, fdims, n, length, t, seed, plen = _HEADER.unpack_from(blob)
    if version != SNAPSHOT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {SNAPSHOT_VERSION}")
    if dims is not None and fdims != dims:
        raise DimensionMismatchError(f"{path}: file holds a {fdims}D field, expected {dims}D")
    try:
        grid = GridSpec(int(fdims), int(n), float(length))
    except ValueError as exc:
        raise DimensionMismatchError(f"{path}: invalid grid header ({exc})") from None
    start = _HEADER.size
    if len(blob) < start + plen:
        raise TruncatedSnapshotError(f"{path}: params block truncated")
    params = json.loads(blob[start:start + plen].decode("utf-8")) if plen else {}
    start += plen
    need = grid.size * 16
    have = len(blob) - start
    if have < need:
        raise TruncatedSnapshotError(f"{path}: payload has {have} bytes, expected {need}")
    if have > need:
        raise DimensionMismatchError(f"{path}: payload has {have - need} trailing bytes for n={n}, dims={fdims}")
    flat = np.frombuffer(blob, dtype="<c16", count=grid.size, offset=start)
    values = flat.reshape(grid.shape, order="F").astype(np.complex128)
    return WaveField(grid, values, float(t), {"seed": int(seed), "params": params})
