"""Fields H -> R^D: analytic closures and anisotropic grid samples.

Grid nodes sit at (cx + i h, cy + j h, cz + k h^2) for centered indices, so a
dilation by 2 maps a grid of spacing h onto one of spacing 2h node for node.
Grid values carry a validity mask; derivatives and mollifiers shrink it unless
run in a boundary-closing mode.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import group

# 4th-order first-derivative stencils
_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


class DomainShrinkError(ValueError):
    """Raised when a value is requested outside the valid (shrunken) grid extent."""


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    center: tuple
    h: float
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if len(self.center) != 3 or len(self.shape) != 3:
            raise ValueError("GridSpec needs a 3-point center and three node counts")
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")
        if any(n % 2 == 0 or n < 5 for n in self.shape):
            raise ValueError(f"node counts must be odd and at least 5, got {self.shape}")

    @classmethod
    def box(cls, h, half_xy, half_z, center=(0.0, 0.0, 0.0)):
        """Smallest odd-count grid covering |x|,|y| <= half_xy, |z| <= half_z."""
        nxy = 2 * int(round(half_xy / h)) + 1
        nz = 2 * int(round(half_z / (h * h))) + 1
        return cls(center, h, (nxy, nxy, nz))

    @property
    def hz(self):
        return self.h * self.h

    @property
    def spacings(self):
        return (self.h, self.h, self.hz)

    @property
    def size(self):
        return self.shape[0] * self.shape[1] * self.shape[2]

    @property
    def half_widths(self):
        return tuple((n - 1) / 2 * s for n, s in zip(self.shape, self.spacings))

    def axis(self, i):
        n = self.shape[i]
        return self.center[i] + (np.arange(n) - (n - 1) / 2) * self.spacings[i]

    def coords(self):
        return np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing="ij")

    def points(self):
        x, y, z = self.coords()
        return np.stack([x, y, z], axis=-1)

    def y_index_offset(self):
        """cy/h when it is an integer (needed for sheared X-lines), else None."""
        r = self.center[1] / self.h
        return int(round(r)) if abs(r - round(r)) < 1e-9 else None

    def refine(self):
        """Half spacing, same node counts: the central sub-box at double resolution."""
        return GridSpec(self.center, self.h / 2, self.shape)

    def padded(self, px, py, pz):
        """Same center and spacing with (px, py, pz) extra node layers on each face."""
        nx, ny, nz = self.shape
        return GridSpec(self.center, self.h, (nx + 2 * px, ny + 2 * py, nz + 2 * pz))

    def dilated(self, lam):
        """Grid whose nodes are δ_lam of this grid's nodes."""
        c = group.dilate(lam, np.array(self.center))
        return GridSpec(tuple(c), self.h * lam, self.shape)

    def to_dict(self):
        return {"center": list(self.center), "h": self.h, "hz": self.hz, "shape": list(self.shape)}


class Field:
    D: int

    def derive(self, word: str, **kw) -> "Field":
        return derive(self, word, **kw)


@dataclass
class AnalyticField(Field):
    """Closure-backed field. `fn` maps (n,3) points to (n,D).

    `deriv(word, pts)` may supply exact derivatives; missing words fall back
    to nested 4th-order differences along the flows.
    """

    fn: Callable
    D: int
    deriv: Callable | None = None
    step: float = 1e-3

    def __call__(self, pts):
        pts = group.as_points(pts)
        flat = pts.reshape(-1, 3)
        return np.asarray(self.fn(flat), dtype=float).reshape(pts.shape[:-1] + (self.D,))

    def derivative(self, word, pts):
        pts = group.as_points(pts)
        flat = pts.reshape(-1, 3)
        if not word:
            out = self.fn(flat)
        elif self.deriv is not None:
            out = self.deriv(word, flat)
            if out is None:
                out = _nested_difference(self, word, flat)
        else:
            out = _nested_difference(self, word, flat)
        return np.asarray(out, dtype=float).reshape(pts.shape[:-1] + (self.D,))

    def sample(self, spec: GridSpec) -> "GridField":
        return GridField(spec, self(spec.points()))


def _move(letter, t, pts):
    if letter in "XY":
        return group.flow(letter, t, pts)
    if letter == "Z":
        out = pts.copy()
        out[..., 2] = out[..., 2] + t
        return out
    raise ValueError(f"derivative letters are X, Y, Z; got {letter!r}")


def _nested_difference(f: AnalyticField, word, pts):
    # the rightmost letter acts first; Wg(p) = d/dt g(exp(tW)p)
    eta = f.step
    letter, rest = word[0], word[1:]

    def inner(q):
        return f.derivative(rest, q) if rest else np.asarray(f.fn(q), dtype=float)

    acc = 0.0
    for c, t in zip((1.0, -8.0, 8.0, -1.0), (-2 * eta, -eta, eta, 2 * eta)):
        acc = acc + c * inner(_move(letter, t, pts))
    return acc / (12.0 * eta)


class GridField(Field):
    """Values of shape (nx, ny, nz, D) on a GridSpec with a validity mask."""

    def __init__(self, spec: GridSpec, values, valid=None):
        values = np.asarray(values, dtype=float)
        if values.ndim == 3:
            values = values[..., None]
        if values.shape[:3] != spec.shape:
            raise GridMismatch(f"values of shape {values.shape} do not fit grid {spec.shape}")
        if valid is None:
            valid = np.ones(spec.shape, dtype=bool)
        self.spec = spec
        self.values = values
        self.valid = np.asarray(valid, dtype=bool)
        self.D = values.shape[3]

    def __repr__(self):
        return f"GridField(D={self.D}, shape={self.spec.shape}, valid={int(self.valid.sum())})"

    def _check(self, other):
        if isinstance(other, GridField):
            if other.spec != self.spec:
                raise GridMismatch("fields live on different grids")
            return other.values, other.valid
        return np.asarray(other, dtype=float), self.valid

    def __add__(self, other):
        v, m = self._check(other)
        return GridField(self.spec, self.values + v, self.valid & m)

    __radd__ = __add__

    def __sub__(self, other):
        v, m = self._check(other)
        return GridField(self.spec, self.values - v, self.valid & m)

    def __rsub__(self, other):
        v, m = self._check(other)
        return GridField(self.spec, v - self.values, self.valid & m)

    def __mul__(self, s):
        return GridField(self.spec, self.values * s, self.valid)

    __rmul__ = __mul__

    def __neg__(self):
        return GridField(self.spec, -self.values, self.valid)

    def copy(self):
        return GridField(self.spec, self.values.copy(), self.valid.copy())

    def crop(self, halo) -> "GridField":
        """Drop `halo` = (px, py, pz) node layers from each face."""
        sl = tuple(slice(p, n - p) for n, p in zip(self.spec.shape, halo))
        spec = GridSpec(self.spec.center, self.spec.h, tuple(n - 2 * p for n, p in zip(self.spec.shape, halo)))
        return GridField(spec, self.values[sl].copy(), self.valid[sl].copy())

    def valid_extent(self):
        """Bounding index box [lo, hi] (inclusive) of the valid nodes, or None."""
        idx = np.argwhere(self.valid)
        if idx.size == 0:
            return None
        return idx.min(axis=0).tolist(), idx.max(axis=0).tolist()

    def require_valid(self, where=None):
        mask = self.valid if where is None else self.valid[where]
        if not np.all(mask):
            raise DomainShrinkError(
                f"values requested outside the valid extent {self.valid_extent()} of grid {self.spec.shape}"
            )

    def at(self, i, j, k):
        if not self.valid[i, j, k]:
            raise DomainShrinkError(
                f"node {(i, j, k)} lies outside the valid extent {self.valid_extent()}"
            )
        return self.values[i, j, k]

    def dot(self, other: "GridField") -> "GridField":
        v, m = self._check(other)
        return GridField(self.spec, np.einsum("xyzd,xyzd->xyz", self.values, v)[..., None], self.valid & m)

    def norms(self):
        return np.linalg.norm(self.values, axis=-1)

    def sup(self):
        if not self.valid.any():
            raise DomainShrinkError("no valid nodes left")
        return float(np.max(self.norms()[self.valid]))

    def interpolate(self, pts):
        """Tensor cubic Lagrange interpolation; errors outside the valid extent."""
        pts = np.atleast_2d(group.as_points(pts))
        spec = self.spec
        idx_f = []
        for a in range(3):
            n = spec.shape[a]
            idx_f.append((pts[:, a] - spec.center[a]) / spec.spacings[a] + (n - 1) / 2)
        idx_f = np.stack(idx_f, axis=1)
        start = np.floor(idx_f).astype(np.int64) - 1
        for a in range(3):
            start[:, a] = np.clip(start[:, a], 0, spec.shape[a] - 4)
        if np.any(idx_f < -1e-9) or np.any(idx_f > np.array(spec.shape) - 1 + 1e-9):
            raise DomainShrinkError("interpolation point outside the grid extent")
        basis = []
        for a in range(3):
            t = idx_f[:, a][:, None] - (start[:, a][:, None] + np.arange(4)[None, :])
            L = np.ones((len(pts), 4))
            for i in range(4):
                for j in range(4):
                    if j != i:
                        L[:, i] *= t[:, j] / (i - j)
            basis.append(L)
        out = np.zeros((len(pts), self.D))
        for di, dj, dk in itertools.product(range(4), repeat=3):
            ii, jj, kk = start[:, 0] + di, start[:, 1] + dj, start[:, 2] + dk
            if not np.all(self.valid[ii, jj, kk]):
                raise DomainShrinkError("interpolation stencil touches invalid nodes")
            w = basis[0][:, di] * basis[1][:, dj] * basis[2][:, dk]
            out += w[:, None] * self.values[ii, jj, kk]
        return out


def as_grid(f: Field, spec: GridSpec | None = None) -> GridField:
    if isinstance(f, GridField):
        return f
    if spec is None:
        raise ValueError("an analytic field needs a GridSpec to be sampled")
    return f.sample(spec)


# -- derivatives ---------------------------------------------------------------


def _axis_diff(values, valid, axis, spacing, mode):
    """4th-order d/d(axis) of a (nx,ny,nz,D) array."""
    n = values.shape[axis]
    v = np.moveaxis(values, axis, 0)
    out = np.full_like(v, np.nan)
    out[2 : n - 2] = sum(c * v[i : n - 4 + i] for i, c in enumerate(_CENTRAL) if c != 0.0)
    m = np.moveaxis(valid, axis, 0)
    ok = np.zeros_like(m)
    ok[2 : n - 2] = np.logical_and.reduce([m[i : n - 4 + i] for i in range(5)])
    if mode == "closure":
        out[0] = sum(c * v[i] for i, c in enumerate(_EDGE0))
        out[1] = sum(c * v[i] for i, c in enumerate(_EDGE1))
        out[n - 1] = -sum(c * v[n - 1 - i] for i, c in enumerate(_EDGE0))
        out[n - 2] = -sum(c * v[n - 1 - i] for i, c in enumerate(_EDGE1))
        ok[0] = ok[1] = np.logical_and.reduce([m[i] for i in range(5)])
        ok[n - 1] = ok[n - 2] = np.logical_and.reduce([m[n - 1 - i] for i in range(5)])
    out = np.moveaxis(out / spacing, 0, axis)
    ok = np.moveaxis(ok, 0, axis)
    return np.where(ok[..., None], out, np.nan), ok


def _derive_letter(f: GridField, letter: str, mode: str) -> GridField:
    spec = f.spec
    if letter == "X":
        dx, okx = _axis_diff(f.values, f.valid, 0, spec.h, mode)
        dz, okz = _axis_diff(f.values, f.valid, 2, spec.hz, mode)
        y = spec.axis(1)[None, :, None, None]
        return GridField(spec, dx + y * dz, okx & okz)
    if letter == "Y":
        d, ok = _axis_diff(f.values, f.valid, 1, spec.h, mode)
        return GridField(spec, d, ok)
    if letter == "Z":
        d, ok = _axis_diff(f.values, f.valid, 2, spec.hz, mode)
        return GridField(spec, d, ok)
    raise ValueError(f"derivative letters are X, Y, Z; got {letter!r}")


def derive(f: Field, word: str, mode: str = "shrink", spec: GridSpec | None = None):
    """Apply the operator word to f; the rightmost letter acts first.

    Grid fields: 4th-order differences. mode="shrink" drops 2 nodes per letter
    at each affected boundary; mode="closure" uses one-sided 4th-order stencils.
    Analytic fields return an AnalyticField, or a GridField when `spec` is given.
    """
    if mode not in ("shrink", "closure"):
        raise ValueError("mode must be 'shrink' or 'closure'")
    if isinstance(f, AnalyticField):
        if spec is not None:
            return GridField(spec, f.derivative(word, spec.points()))
        return AnalyticField(lambda q, w=word: f.derivative(w, q), f.D)
    if not isinstance(f, GridField):
        raise TypeError("derive expects an AnalyticField or a GridField")
    out = f
    for letter in reversed(word):
        out = _derive_letter(out, letter, mode)
    return out


def horizontal_words(j: int):
    return ["".join(w) for w in itertools.product("XY", repeat=j)]


def gradient_stack(f: Field, j: int, mode="shrink", spec=None):
    """All j-fold words in X, Y applied to f, stacked: (nx,ny,nz, 2^j * D)."""
    if j == 0:
        g = as_grid(f, spec)
        return g.values, g.valid
    parts = [derive(f, w, mode=mode, spec=spec) for w in horizontal_words(j)]
    vals = np.concatenate([p.values for p in parts], axis=-1)
    valid = np.logical_and.reduce([p.valid for p in parts])
    return vals, valid


# -- norms -------------------------------------------------------------------


@dataclass(frozen=True)
class ScaledNorm:
    kind: str = "Ck"
    k: int = 0
    R: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in ("Ck", "CkAlpha"):
            raise ValueError("ScaledNorm kind is 'Ck' or 'CkAlpha'")
        if self.R <= 0:
            raise ValueError("scale R must be positive")
        if self.kind == "CkAlpha" and not 0 < self.alpha < 1:
            raise ValueError("Hölder exponent must lie in (0,1)")


def holder_pairs(spec: GridSpec, valid, n_random=10_000, seed=0, dmin=None, dmax=None):
    """Node pairs for Hölder quotients: all nearest-neighbour pairs plus seeded random pairs.

    Random pairs are drawn as a nested sequence, so a larger n_random always
    contains the pairs of a smaller one.
    """
    from .metric import cc_distance

    flat_valid = np.flatnonzero(valid.ravel())
    pairs = []
    shp = spec.shape
    idx = np.arange(spec.size).reshape(shp)
    for a in range(3):
        sl0 = [slice(None)] * 3
        sl1 = [slice(None)] * 3
        sl0[a] = slice(0, -1)
        sl1[a] = slice(1, None)
        p0, p1 = idx[tuple(sl0)].ravel(), idx[tuple(sl1)].ravel()
        ok = valid.ravel()[p0] & valid.ravel()[p1]
        pairs.append(np.stack([p0[ok], p1[ok]], axis=1))
    nn = np.concatenate(pairs)
    if n_random <= 0 or flat_valid.size < 2:
        return nn
    rng = np.random.default_rng(seed)
    pts = spec.points().reshape(-1, 3)
    dmin = spec.h if dmin is None else dmin
    dmax = min(spec.half_widths[0], spec.half_widths[1]) if dmax is None else dmax
    chosen = []
    count = 0
    batch = 4096
    for _ in range(200):
        if count >= n_random:
            break
        i = flat_valid[rng.integers(0, flat_valid.size, batch)]
        j = flat_valid[rng.integers(0, flat_valid.size, batch)]
        d = np.asarray(cc_distance(pts[i], pts[j]))
        keep = (d >= dmin) & (d <= dmax)
        sel = np.stack([i[keep], j[keep]], axis=1)[: n_random - count]
        chosen.append(sel)
        count += len(sel)
    return np.concatenate([nn] + chosen)


def holder_seminorm(values, valid, spec: GridSpec, alpha, pairs=None, **kw):
    from .metric import cc_distance

    if pairs is None:
        pairs = holder_pairs(spec, valid, **kw)
    flat = values.reshape(-1, values.shape[-1])
    pts = spec.points().reshape(-1, 3)
    i, j = pairs[:, 0], pairs[:, 1]
    d = np.asarray(cc_distance(pts[i], pts[j]))
    diff = np.linalg.norm(flat[i] - flat[j], axis=1)
    ok = d > 0
    if not ok.any():
        return 0.0
    return float(np.max(diff[ok] / d[ok] ** alpha))


def norm(f: Field, n: ScaledNorm, spec: GridSpec | None = None, mode="shrink", **holder_kw):
    """Σ_{j≤k} R^j sup|∇^j f| (+ R^{k+α} [∇^k f]_α), sup over valid nodes."""
    g = as_grid(f, spec)
    total = 0.0
    vals = valid = None
    for j in range(n.k + 1):
        if isinstance(f, AnalyticField):
            vals, valid = gradient_stack(f, j, spec=g.spec)
        else:
            vals, valid = gradient_stack(g, j, mode=mode)
        if not valid.any():
            raise DomainShrinkError(f"no valid nodes left for derivatives of order {j}")
        total += n.R**j * float(np.max(np.linalg.norm(vals[valid], axis=-1)))
    if n.kind == "CkAlpha":
        total += n.R ** (n.k + n.alpha) * holder_seminorm(vals, valid, g.spec, n.alpha, **holder_kw)
    return total


# -- wedges ----------------------------------------------------------------------


def gram(vectors):
    v = np.asarray(vectors, dtype=float)
    return v @ np.swapaxes(v, -1, -2)


def wedge_norm(vectors):
    """|v_1 ∧ ... ∧ v_k| = det(v_i·v_j)^{1/2}; vectors stacked on axis -2."""
    d = np.linalg.det(gram(vectors))
    return np.sqrt(np.maximum(d, 0.0))


def wedge_inner(u, v):
    """<u_1∧...∧u_k, v_1∧...∧v_k> = det(u_i·v_j)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.linalg.det(u @ np.swapaxes(v, -1, -2))


def wedge_norm_minors(vectors):
    """|v_1∧...∧v_k| from the exterior-algebra coordinates (all k×k minors).

    Independent of the Gram route; cost is C(D,k) determinants.
    """
    v = np.asarray(vectors, dtype=float)
    k, D = v.shape
    total = 0.0
    for cols in itertools.combinations(range(D), k):
        total += np.linalg.det(v[:, cols]) ** 2
    return math.sqrt(total)


# -- binary format ---------------------------------------------------------------

MAGIC = b"HEFD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIII5d")


def write_grid_field(path, f: GridField, frame_k: int = 0):
    """Little-endian: header, then validity bytes, then float64 values row-major."""
    spec = f.spec
    nx, ny, nz = spec.shape
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, nx, ny, nz, f.D, frame_k, *spec.center, spec.h, spec.hz)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(f.valid, dtype=np.uint8).tobytes())
        fh.write(np.ascontiguousarray(np.nan_to_num(f.values, nan=0.0), dtype="<f8").tobytes())


def read_grid_field(path):
    """Returns (GridField, frame_k)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, ver, nx, ny, nz, D, frame_k, cx, cy, cz, h, hz = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC or ver != FORMAT_VERSION:
        raise ValueError(f"{path}: not a grid-field file of version {FORMAT_VERSION}")
    spec = GridSpec((cx, cy, cz), h, (nx, ny, nz))
    off = _HEADER.size
    n = nx * ny * nz
    valid = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off).reshape(nx, ny, nz).astype(bool)
    off += n
    vals = np.frombuffer(raw, dtype="<f8", count=n * D, offset=off).reshape(nx, ny, nz, D).copy()
    vals[~valid] = np.nan
    return GridField(spec, vals, valid), frame_k


def export_slice_csv(path, f: GridField, axis: int = 2, index: int | None = None):
    """One row per node of a coordinate slice: x,y,z,valid,v0..v{D-1}."""
    spec = f.spec
    if index is None:
        index = (spec.shape[axis] - 1) // 2
    sl = [slice(None)] * 3
    sl[axis] = index
    pts = spec.points()[tuple(sl)].reshape(-1, 3)
    vals = f.values[tuple(sl)].reshape(-1, f.D)
    ok = f.valid[tuple(sl)].ravel()
    with open(path, "w") as fh:
        fh.write(",".join(["x", "y", "z", "valid"] + [f"v{i}" for i in range(f.D)]) + "\n")
        for p, v, m in zip(pts, vals, ok):
            cells = [repr(float(c)) for c in p] + [str(int(m))] + [repr(float(c)) for c in v]
            fh.write(",".join(cells) + "\n")
