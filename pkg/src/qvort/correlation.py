"""Two-point statistics of vortex points (2D) and line segments (3D).

Separations use the minimum image, so bins must stay within ``L/2``.  Pair
sums are normalised by the exact expectation for uniformly placed objects in
the periodic box:

* points: ``RR(b) = N (N - 1) / 2 * area(b) / L^2``; unsigned values are
  ``DD / RR - 1`` and signed values ``sum s_i s_j / RR``;
* segments: ``Lambda^2 * vol(b) / (2 V)``; undirected values are
  ``sum |dl_i||dl_j| / norm - 1`` and directed values ``sum dl_i . dl_j / norm``.

Standard errors assume independent pairs: ``sqrt(sum w^2) / norm`` per bin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .flow import InsufficientDataError, PowerLawFit, loglog_fit
from .grid import GridSpec

__all__ = [
    "CorrelationFunction",
    "NoScreeningError",
    "default_bins",
    "point_correlation_2d",
    "line_correlation_3d",
    "merge_correlations",
    "fit_gaussian_screening",
    "GaussianFit",
    "fit_correlation_power_law",
    "decade_fits",
    "noise_crossing",
    "write_correlation_csv",
    "read_correlation_csv",
]

KINDS = ("unsigned_point", "signed_point", "undirected_line", "directed_line")


class NoScreeningError(ValueError):
    """The leading bins of a signed correlation are not negative."""


@dataclass
class CorrelationFunction:
    bins: np.ndarray
    values: np.ndarray
    pair_counts: np.ndarray
    kind: str
    normalization: str
    stderr: np.ndarray | None = None
    fits: dict = field(default_factory=dict)
    #: raw pair sums, their squares and the uniform expectation, for exact merging
    weight_sum: np.ndarray | None = None
    weight_sq_sum: np.ndarray | None = None
    expected: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bins[1:] + self.bins[:-1])

    @property
    def populated(self) -> np.ndarray:
        return self.pair_counts > 0


def default_bins(grid: GridSpec, nbins: int = 64) -> np.ndarray:
    """Logarithmic edges from one cell to half the box."""
    return np.geomspace(grid.dx, 0.5 * grid.length, nbins + 1)


def _check_bins(bins, grid: GridSpec) -> np.ndarray:
    bins = np.asarray(bins, float)
    if bins.ndim != 1 or len(bins) < 2 or np.any(np.diff(bins) <= 0) or bins[0] < 0:
        raise ValueError("bin edges must be a strictly increasing 1D array")
    if bins[-1] > 0.5 * grid.length * (1 + 1e-12):
        raise ValueError(f"largest bin edge {bins[-1]} exceeds L/2 = {0.5 * grid.length}")
    return bins


def _pair_accumulate(pos, weights_fn, grid: GridSpec, bins, chunk=None):
    """Sum pair weights into bins over all unordered pairs ``i < j``.

    Rows are processed in fixed chunks and merged in order, so the result is
    reproducible.  Returns ``(counts, wsum, w2sum)`` with one weight column per
    requested statistic.
    """
    npts = len(pos)
    nb = len(bins) - 1
    counts = np.zeros(nb, np.int64)
    wsum = None
    w2sum = None
    L = grid.length
    # keep each row block near 2e6 separations regardless of input size
    chunk = chunk or max(1, 2_000_000 // max(npts, 1))
    for start in range(0, npts - 1, chunk):
        stop = min(start + chunk, npts - 1)
        rows = np.arange(start, stop)
        # upper triangle of this row block
        d = pos[None, :, :] - pos[rows, None, :]
        d -= L * np.round(d / L)
        r = np.sqrt(np.sum(d * d, axis=-1))
        cols = np.arange(npts)[None, :]
        mask = cols > rows[:, None]
        b = np.searchsorted(bins, r, side="right") - 1
        mask &= (b >= 0) & (b < nb) & (r < bins[-1])
        ii, jj = np.nonzero(mask)
        bb = b[ii, jj]
        gi = rows[ii]
        w = weights_fn(gi, jj)
        counts += np.bincount(bb, minlength=nb)
        part = np.stack([np.bincount(bb, weights=wc, minlength=nb) for wc in w])
        part2 = np.stack([np.bincount(bb, weights=wc * wc, minlength=nb) for wc in w])
        wsum = part if wsum is None else wsum + part
        w2sum = part2 if w2sum is None else w2sum + part2
    if wsum is None:
        wsum = np.zeros((1, nb))
        w2sum = np.zeros((1, nb))
    return counts, wsum, w2sum


def point_correlation_2d(vortices, grid: GridSpec, bins=None, signed: bool = False) -> CorrelationFunction:
    """Unsigned density contrast or signed charge correlation of 2D point vortices."""
    if grid.dims != 2:
        raise ValueError("point correlations are two-dimensional")
    bins = _check_bins(default_bins(grid) if bins is None else bins, grid)
    pos = np.array([p.position for p in vortices], float).reshape(-1, 2)
    q = np.array([p.charge for p in vortices], float)
    npts = len(pos)
    if npts < 2:
        raise InsufficientDataError(f"need at least 2 vortices, have {npts}")
    pos = np.mod(pos, grid.length)
    if signed:
        wfn = lambda i, j: [q[i] * q[j]]  # noqa: E731
    else:
        wfn = lambda i, j: [np.ones(len(i))]  # noqa: E731
    counts, wsum, w2sum = _pair_accumulate(pos, wfn, grid, bins)
    area = np.pi * (bins[1:] ** 2 - bins[:-1] ** 2)
    rr = 0.5 * npts * (npts - 1) * area / grid.length**2
    values = wsum[0] / rr
    stderr = np.sqrt(w2sum[0]) / rr
    if not signed:
        values = values - 1.0
        # for uniform points the count in a bin is Poisson with mean RR
        stderr = np.sqrt(rr) / rr
    kind = "signed_point" if signed else "unsigned_point"
    norm = "RR = N(N-1)/2 * annulus area / L^2" + ("" if signed else "; DD/RR - 1")
    return CorrelationFunction(bins, values, counts, kind, norm, stderr,
                               weight_sum=wsum[0], weight_sq_sum=w2sum[0], expected=rr)


def line_correlation_3d(lines, grid: GridSpec | None = None, bins=None, directed: bool = False) -> CorrelationFunction:
    """Segment-pair correlation of a traced line set (one segment per cell traversal)."""
    grid = grid or lines.grid
    if grid.dims != 3:
        raise ValueError("line correlations are three-dimensional")
    bins = _check_bins(default_bins(grid) if bins is None else bins, grid)
    mids, dl = lines.segments()
    lam = float(np.sum(np.linalg.norm(dl, axis=1))) if len(dl) else 0.0
    if lam <= 0:
        raise InsufficientDataError("line set has zero total length")
    mag = np.linalg.norm(dl, axis=1)
    if directed:
        wfn = lambda i, j: [np.sum(dl[i] * dl[j], axis=1)]  # noqa: E731
    else:
        wfn = lambda i, j: [mag[i] * mag[j]]  # noqa: E731
    counts, wsum, w2sum = _pair_accumulate(mids, wfn, grid, bins)
    vol = 4.0 / 3.0 * np.pi * (bins[1:] ** 3 - bins[:-1] ** 3)
    norm = lam**2 * vol / (2.0 * grid.length**3)
    values = wsum[0] / norm
    stderr = np.sqrt(w2sum[0]) / norm
    if not directed:
        values = values - 1.0
    kind = "directed_line" if directed else "undirected_line"
    desc = "Lambda^2 * shell volume / (2V)" + ("" if directed else "; minus 1")
    return CorrelationFunction(bins, values, counts, kind, desc, stderr,
                               weight_sum=wsum[0], weight_sq_sum=w2sum[0], expected=norm)


def merge_correlations(parts) -> CorrelationFunction:
    """Pool independent samples (e.g. snapshots or seeds) by summing pair sums and expectations."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to merge")
    first = parts[0]
    for p in parts[1:]:
        if p.kind != first.kind or not np.array_equal(p.bins, first.bins):
            raise ValueError("correlations differ in kind or binning")
    wsum = sum(p.weight_sum for p in parts)
    w2 = sum(p.weight_sq_sum for p in parts)
    exp = sum(p.expected for p in parts)
    counts = sum(p.pair_counts for p in parts)
    values = wsum / exp
    stderr = np.sqrt(w2) / exp
    if first.kind in ("unsigned_point", "undirected_line"):
        values = values - 1.0
    if first.kind == "unsigned_point":
        stderr = 1.0 / np.sqrt(exp)
    return CorrelationFunction(first.bins, values, counts, first.kind, first.normalization, stderr,
                               weight_sum=wsum, weight_sq_sum=w2, expected=exp)


@dataclass
class GaussianFit:
    amplitude: float
    sigma: float
    r2: float
    npoints: int

    def as_dict(self) -> dict:
        return {"amplitude": self.amplitude, "sigma": self.sigma, "r2": self.r2, "npoints": self.npoints}


def _gauss(r, a, s):
    return -a * np.exp(-(r * r) / (2.0 * s * s))


def fit_gaussian_screening(eta: CorrelationFunction, r_max: float | None = None, min_pairs: int = 10,
                           lead: int = 3) -> GaussianFit:
    """Least-squares fit of ``-A exp(-r^2 / (2 sigma^2))`` to bins holding ``min_pairs`` pairs or more.

    The first ``lead`` of those bins must average below zero.  Bins with a
    handful of pairs carry O(1) noise and are left out by default.
    """
    sel = eta.pair_counts >= min_pairs
    if r_max is not None:
        sel &= eta.centers <= r_max
    r = eta.centers[sel]
    y = eta.values[sel]
    if len(r) < 5:
        raise InsufficientDataError(f"need >= 5 populated bins, have {len(r)}")
    if not np.mean(y[:lead]) < 0:
        raise NoScreeningError("leading bins are not negative")
    a0 = float(-np.min(y))
    half = np.nonzero(y > -0.5 * a0)[0]
    imin = int(np.argmin(y))
    after = half[half > imin]
    s0 = float(r[after[0]]) if len(after) else float(r[len(r) // 2])
    popt, _ = curve_fit(_gauss, r, y, p0=(a0, s0), ftol=1e-15, xtol=1e-15, gtol=1e-15, maxfev=20000)
    a, s = float(popt[0]), abs(float(popt[1]))
    resid = y - _gauss(r, a, s)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / sst if sst > 0 else 1.0
    return GaussianFit(a, s, r2, len(r))


def noise_crossing(corr: CorrelationFunction, nsigma: float = 2.0, min_pairs: int = 10) -> float | None:
    """Lower edge of the first bin past the extremum where ``|value| < nsigma * stderr``.

    Only bins with at least ``min_pairs`` pairs are considered.
    """
    pop = np.nonzero(corr.pair_counts >= min_pairs)[0]
    if len(pop) == 0:
        return None
    start = pop[np.argmax(np.abs(corr.values[pop]))]
    for b in pop[pop > start]:
        if abs(corr.values[b]) < nsigma * corr.stderr[b]:
            return float(corr.bins[b])
    return None


def fit_correlation_power_law(corr: CorrelationFunction, r_lo: float, r_hi: float) -> PowerLawFit:
    """Log-log line through populated bins with centres in ``[r_lo, r_hi]``."""
    c = corr.centers
    sel = (c >= r_lo) & (c <= r_hi) & corr.populated
    if np.count_nonzero(sel) < 5:
        raise InsufficientDataError(f"need >= 5 populated bins in [{r_lo}, {r_hi}]")
    v = corr.values[sel]
    if np.any(v <= 0):
        raise ValueError("non-positive correlation inside the fit range")
    slope, amp, r2 = loglog_fit(c[sel], v)
    return PowerLawFit(slope, amp, r2, float(r_lo), float(r_hi), int(np.count_nonzero(sel)))


def decade_fits(corr: CorrelationFunction, min_points: int = 5, min_pairs: int = 10):
    """Power-law fits over every one-decade window ``[r, 10 r]`` inside the bin range.

    A window is fittable only when it holds at least ``min_points`` bins with
    ``min_pairs`` pairs or more and all of those are positive, the same
    domain as ``fit_correlation_power_law``.  Returns ``(fits, skipped)``:
    the ``PowerLawFit`` of each fittable window and the number of windows
    rejected because a bin was non-positive.
    """
    c = corr.centers
    use = corr.pair_counts >= min_pairs
    out, skipped = [], 0
    for lo in c[use]:
        if 10 * lo > corr.bins[-1]:
            break
        sel = use & (c >= lo) & (c <= 10 * lo)
        if np.count_nonzero(sel) < min_points:
            continue
        v = corr.values[sel]
        if np.any(v <= 0):
            skipped += 1
            continue
        slope, amp, r2 = loglog_fit(c[sel], v)
        out.append(PowerLawFit(slope, amp, r2, float(lo), float(10 * lo), int(np.count_nonzero(sel))))
    return out, skipped


def write_correlation_csv(corr: CorrelationFunction, path, fits=None) -> None:
    with open(path, "w") as fh:
        fh.write(f"# kind={corr.kind}; normalization={corr.normalization}\n")
        fh.write("# r_lo,r_hi,value,pair_count\n")
        for lo, hi, v, n in zip(corr.bins[:-1], corr.bins[1:], corr.values, corr.pair_counts):
            fh.write(f"{lo:.17g},{hi:.17g},{v:.17g},{int(n)}\n")
        for name, fit in (fits or corr.fits).items():
            d = fit.as_dict() if hasattr(fit, "as_dict") else dict(fit)
            body = ",".join(f"{k}={_fmt(v)}" for k, v in d.items())
            fh.write(f"# fit: {body}" + (f",name={name}" if name else "") + "\n")


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.17g}"
    return str(v)


def read_correlation_csv(path):
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    bins = np.append(data[:, 0], data[-1, 1])
    kind, norm = "unsigned_point", ""
    fits = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# kind="):
                head = line[2:].strip().split("; normalization=")
                kind = head[0].split("=", 1)[1]
                norm = head[1] if len(head) > 1 else ""
            elif line.startswith("# fit:"):
                fits.append(dict(kv.split("=", 1) for kv in line[6:].strip().split(",")))
    corr = CorrelationFunction(bins, data[:, 2], data[:, 3].astype(np.int64), kind, norm)
    return corr, fits
