"""Vortex lines in 3D from face windings.

Face ``(a, i, j, k)`` is the plaquette with normal axis ``a`` whose lower
corner is grid point ``(i, j, k)``; it spans axes ``a+1`` and ``a+2`` (mod 3)
and is traversed counter-clockwise about ``+e_a``.  A winding ``+1`` there
means a line crosses it along ``+e_a``, from cell ``c - e_a`` into cell
``c``.  Cells are labelled by their lower corner.

Lines are stored as unwrapped polylines through the face pierce points, one
segment per cell traversal.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, WaveField
from .vortex import FieldJet, TangentSurfacesError, _check_corners, bilinear_null, winding_array

__all__ = [
    "TopologyError",
    "VortexLine",
    "VortexLineSet",
    "face_windings",
    "pierced_face_counts",
    "trace_vortex_lines_3d",
    "line_velocity",
    "lines_to_json",
    "lines_from_json",
]


class TopologyError(RuntimeError):
    """Face windings are inconsistent inside a cell; indicates a bug."""


@dataclass
class VortexLine:
    points: np.ndarray
    closed: bool

    @property
    def segments(self) -> np.ndarray:
        """Segment vectors; a closed line includes the one back to its start."""
        p = self.points
        if self.closed:
            return np.roll(p, -1, axis=0) - p
        return np.diff(p, axis=0)

    @property
    def midpoints(self) -> np.ndarray:
        return self.points[: len(self.segments)] + 0.5 * self.segments

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(self.segments, axis=1)))


@dataclass
class VortexLineSet:
    grid: GridSpec
    lines: list = field(default_factory=list)
    t: float = 0.0

    @property
    def total_length(self) -> float:
        return float(sum(ln.length for ln in self.lines))

    def segments(self):
        """``(midpoints, dl)`` of all segments, midpoints wrapped into the box."""
        if not self.lines:
            return np.zeros((0, 3)), np.zeros((0, 3))
        mids = np.concatenate([ln.midpoints for ln in self.lines])
        dl = np.concatenate([ln.segments for ln in self.lines])
        return np.mod(mids, self.grid.length), dl

    def __len__(self):
        return len(self.lines)


def face_windings(f: WaveField) -> np.ndarray:
    """Windings stacked as ``w[a, i, j, k]`` for the three face orientations."""
    if f.grid.dims != 3:
        raise ValueError("face windings need a 3D field")
    _check_corners(f.values)
    return np.stack([winding_array(f.values, axes=((a + 1) % 3, (a + 2) % 3)) for a in range(3)])


def pierced_face_counts(w: np.ndarray) -> np.ndarray:
    """Number of line crossings through the six faces of every cell."""
    total = np.zeros(w.shape[1:], np.int64)
    for a in range(3):
        aw = np.abs(w[a])
        total += aw + np.roll(aw, -1, axis=a)
    return total


def _pierce_points(f: WaveField, a: int, idx: np.ndarray) -> np.ndarray:
    """Subpixel null on faces of orientation ``a`` with lower corners ``idx``."""
    n, dx = f.grid.n, f.grid.dx
    a1, a2 = (a + 1) % 3, (a + 2) % 3
    e1 = np.zeros(3, int)
    e1[a1] = 1
    e2 = np.zeros(3, int)
    e2[a2] = 1
    psi = f.values

    def at(off):
        c = (idx + off) % n
        return psi[c[:, 0], c[:, 1], c[:, 2]]

    u, v, _ = bilinear_null(at(0), at(e1), at(e2), at(e1 + e2))
    pts = idx.astype(float)
    pts[:, a1] += u
    pts[:, a2] += v
    return pts * dx


def _pair(ins, outs, pos):
    """Match in-units to out-units by minimal total length, ties to the lexicographically first."""
    if len(ins) == 1:
        return [(ins[0], outs[0])]
    best, best_len = None, np.inf
    for perm in itertools.permutations(range(len(outs))):
        total = sum(np.linalg.norm(pos[outs[p]] - pos[i]) for i, p in zip(ins, perm))
        if total < best_len - 1e-15:
            best, best_len = perm, total
    return [(i, outs[p]) for i, p in zip(ins, best)]


def trace_vortex_lines_3d(f: WaveField) -> VortexLineSet:
    grid = f.grid
    n, L = grid.n, grid.length
    w = face_windings(f)
    counts = pierced_face_counts(w)
    if np.any(counts % 2):
        bad = tuple(int(c) for c in np.argwhere(counts % 2)[0])
        raise TopologyError(f"odd pierced-face count in cell {bad}")

    # one unit per unit of |winding|, ordered by (axis, face index, copy)
    unit_pos, unit_from, unit_to = [], [], []
    for a in range(3):
        idx = np.argwhere(w[a] != 0)
        if len(idx) == 0:
            continue
        pts = _pierce_points(f, a, idx)
        ea = np.zeros(3, int)
        ea[a] = 1
        for c, p in zip(idx, pts):
            q = int(w[a][tuple(c)])
            below = tuple((c - ea) % n)
            here = tuple(c)
            src, dst = (below, here) if q > 0 else (here, below)
            for _ in range(abs(q)):
                unit_pos.append(p)
                unit_from.append(src)
                unit_to.append(dst)
    lines = VortexLineSet(grid, [], f.t)
    if not unit_pos:
        return lines
    pos = np.array(unit_pos)

    entering, leaving = {}, {}
    for u, (s, d) in enumerate(zip(unit_from, unit_to)):
        entering.setdefault(d, []).append(u)
        leaving.setdefault(s, []).append(u)
    successor = {}
    for cell in sorted(entering):
        ins, outs = entering[cell], leaving.get(cell, [])
        if len(ins) != len(outs):
            raise TopologyError(f"cell {cell}: {len(ins)} lines in, {len(outs)} out")
        # pierce points of the upper faces sit at coordinate n*dx when wrapped; unwrap locally
        base = np.array(cell) * grid.dx
        local = {u: base + grid.minimum_image(pos[u] - base) for u in ins + outs}
        for i, o in _pair(ins, outs, local):
            successor[i] = o

    seen = np.zeros(len(pos), bool)
    for start in range(len(pos)):
        if seen[start]:
            continue
        pts = [pos[start]]
        seen[start] = True
        u = successor[start]
        while u != start:
            if seen[u]:
                raise TopologyError("line chaining revisited a pierce")
            seen[u] = True
            pts.append(pts[-1] + grid.minimum_image(pos[u] - pts[-1]))
            u = successor[u]
        end = pts[-1] + grid.minimum_image(pos[start] - pts[-1])
        closed = bool(np.all(np.abs(end - pts[0]) < 0.5 * L))
        lines.lines.append(VortexLine(np.array(pts), closed))
        if not closed:
            # box-threading: keep the return segment so the polyline covers the full period
            lines.lines[-1].points = np.vstack([pts, end])
    return lines


def line_velocity(f: WaveField, lines: VortexLineSet, jet: FieldJet | None = None):
    """Null-advection velocity at every polyline vertex, perpendicular to the local tangent.

    Solves ``w . grad R = lap I / 2``, ``w . grad I = -lap R / 2`` with the
    gradients projected onto the plane normal to the tangent (central
    difference of neighbouring vertices) and the full 3D Laplacian.
    Returns one ``(m, 3)`` array per line.
    """
    jet = jet or FieldJet(f)
    out = []
    for ln in lines.lines:
        p = ln.points
        if ln.closed:
            tang = np.roll(p, -1, 0) - np.roll(p, 1, 0)
        else:
            tang = np.gradient(p, axis=0)
        tang /= np.linalg.norm(tang, axis=1, keepdims=True)
        loc = jet(np.mod(p, lines.grid.length))
        g, h = loc["grad"], loc["hess"]
        lap = np.trace(h, axis1=1, axis2=2)
        helper = np.where(np.abs(tang[:, :1]) < 0.9, [[1.0, 0, 0]], [[0, 1.0, 0]])
        e1 = np.cross(tang, helper)
        e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
        e2 = np.cross(tang, e1)
        gr, gi = g.real, g.imag
        m = np.stack([
            np.stack([np.sum(gr * e1, 1), np.sum(gr * e2, 1)], -1),
            np.stack([np.sum(gi * e1, 1), np.sum(gi * e2, 1)], -1),
        ], 1)
        det = np.linalg.det(m)
        scale = np.linalg.norm(gr, axis=1) * np.linalg.norm(gi, axis=1)
        if np.any(np.abs(det) <= 1e-12 * scale) or np.any(scale == 0):
            raise TangentSurfacesError("parallel grad R and grad I on a traced line")
        rhs = np.stack([0.5 * lap.imag, -0.5 * lap.real], -1)
        sol = np.linalg.solve(m, rhs[..., None])[..., 0]
        out.append(sol[:, :1] * e1 + sol[:, 1:] * e2)
    return out


def lines_to_json(lines: VortexLineSet, path=None, extra: dict | None = None):
    doc = {
        "dims": 3,
        "t": float(lines.t),
        "length": lines.grid.length,
        "n": lines.grid.n,
        "lines": [{"closed": ln.closed, "points": ln.points.tolist()} for ln in lines.lines],
    }
    if extra:
        doc.update(extra)
    if path is not None:
        with open(path, "w") as fh:
            json.dump(doc, fh)
    return doc


def lines_from_json(src, grid: GridSpec | None = None) -> VortexLineSet:
    doc = src
    if not isinstance(src, dict):
        with open(src) as fh:
            doc = json.load(fh)
    if doc.get("dims") != 3:
        raise ValueError("not a 3D line document")
    if grid is None:
        grid = GridSpec(3, int(doc["n"]), float(doc["length"]))
    out = VortexLineSet(grid, [], float(doc.get("t", 0.0)))
    for row in doc["lines"]:
        out.lines.append(VortexLine(np.asarray(row["points"], float).reshape(-1, 3), bool(row["closed"])))
    return out
