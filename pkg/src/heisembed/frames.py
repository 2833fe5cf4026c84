"""Orthonormal frames on grid boxes: Gram-Schmidt, frame extension, the isometry field U.

Extension follows the contractible-box route: seed a unit normal at the grid
center, carry it outward along a breadth-first tree (projecting onto each
node's normal space), smooth with a bump partition of unity, and re-project.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .fields import GridField, GridSpec
from .metric import sr_norm
from .mollify import profile


class DependenceError(ValueError):
    def __init__(self, index, sigma, node=None):
        where = "" if node is None else f" at node {node}"
        super().__init__(f"vector {index} is numerically dependent on its predecessors{where} (singular value {sigma:.3e})")
        self.index = index
        self.sigma = sigma
        self.node = node


class PropagationCollapse(RuntimeError):
    pass


def gram_schmidt(vectors, tol=1e-10):
    """Orthonormalize rows of `vectors` (shape (..., k, D)).

    Returns (Q, ratios) where ratios[..., i] = |w_1∧…∧w_{i-1}| / |w_1∧…∧w_i|,
    i.e. 1 / (norm of the i-th vector after removing earlier directions).
    """
    V = np.array(vectors, dtype=float, copy=True)
    single = V.ndim == 2
    if single:
        V = V[None]
    batch = V.shape[:-2]
    V = V.reshape((-1,) + V.shape[-2:])
    n, k, D = V.shape
    if k > D:
        raise DependenceError(k - 1, 0.0)
    Q = np.zeros_like(V)
    ratios = np.zeros((n, k))
    scale = np.linalg.norm(V, axis=-1).max(axis=-1)
    for i in range(k):
        w = V[:, i].copy()
        for _ in range(2):  # re-orthogonalize once for full precision
            for j in range(i):
                w -= np.einsum("nd,nd->n", Q[:, j], w)[:, None] * Q[:, j]
        nrm = np.linalg.norm(w, axis=-1)
        bad = nrm <= tol * np.maximum(scale, 1e-300)
        if np.any(bad):
            node = int(np.argmax(bad))
            sv = np.linalg.svd(V[node, : i + 1], compute_uv=False)[-1]
            raise DependenceError(i, float(sv), None if single else np.unravel_index(node, batch))
        Q[:, i] = w / nrm[:, None]
        ratios[:, i] = 1.0 / nrm
    Q = Q.reshape(batch + (k, D))
    ratios = ratios.reshape(batch + (k,))
    return (Q[0], ratios[0]) if single else (Q, ratios)


def null_seed(frame, D=None):
    """Last column of the SVD null-space basis of a k×D frame (deterministic)."""
    frame = np.asarray(frame, dtype=float)
    _, _, vt = np.linalg.svd(frame, full_matrices=True)
    v = vt[-1]
    # fix the sign: largest-magnitude entry positive
    i = int(np.argmax(np.abs(v)))
    return v if v[i] >= 0 else -v


@lru_cache(maxsize=8)
def bfs_tree(shape):
    """Breadth-first order and parents from the center node of a box grid.

    Neighbour order: -x, +x, -y, +y, -z, +z.
    """
    nx, ny, nz = shape
    n = nx * ny * nz
    parent = np.full(n, -1, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    start = ((nx // 2) * ny + ny // 2) * nz + nz // 2
    order = np.empty(n, dtype=np.int64)
    order[0] = start
    seen[start] = True
    q = deque([start])
    pos = 1
    steps = ((-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1))
    while q:
        node = q.popleft()
        i, rem = divmod(node, ny * nz)
        j, k = divmod(rem, nz)
        for di, dj, dk in steps:
            a, b, c = i + di, j + dj, k + dk
            if 0 <= a < nx and 0 <= b < ny and 0 <= c < nz:
                nb = (a * ny + b) * nz + c
                if not seen[nb]:
                    seen[nb] = True
                    parent[nb] = node
                    order[pos] = nb
                    pos += 1
                    q.append(nb)
    order.flags.writeable = False
    parent.flags.writeable = False
    return order, parent


def _smooth_axis(v, axis, radius):
    """Bump-weighted average along one index axis, renormalized at the ends."""
    if radius <= 0:
        return v
    r = int(radius)
    taps = np.arange(-r, r + 1)
    w = profile(taps / (r + 1.0))
    n = v.shape[axis]
    out = np.zeros_like(v)
    norm = np.zeros(n)
    for t, wt in zip(taps, w):
        lo, hi = max(0, -t), min(n, n - t)
        if lo >= hi:
            continue
        dst = [slice(None)] * v.ndim
        src = [slice(None)] * v.ndim
        dst[axis] = slice(lo, hi)
        src[axis] = slice(lo + t, hi + t)
        out[tuple(dst)] += wt * v[tuple(src)]
        norm[lo:hi] += wt
    shp = [1] * v.ndim
    shp[axis] = n
    return out / norm.reshape(shp)


@dataclass
class FrameField:
    """Per-node orthonormal k-frames in R^D on a grid, stored as (nx,ny,nz,k,D)."""

    spec: GridSpec
    frames: np.ndarray
    smoothness: float = float("nan")
    history: list = field(default_factory=list)

    @property
    def k(self):
        return self.frames.shape[-2]

    @property
    def D(self):
        return self.frames.shape[-1]

    def gram_residual(self):
        G = np.einsum("...id,...jd->...ij", self.frames, self.frames)
        return float(np.max(np.abs(G - np.eye(self.k))))

    def deviation_constant(self, which=None):
        """max over adjacent nodes of |v_i(a) - v_i(b)| / d(a, b)."""
        return frame_smoothness(self.spec, self.frames if which is None else self.frames[..., which, :])


def frame_smoothness(spec: GridSpec, vecs):
    """Adjacent-node deviation constant of a (nx,ny,nz,k,D) or (nx,ny,nz,D) array."""
    if vecs.ndim == 4:
        vecs = vecs[..., None, :]
    h = spec.h
    y = spec.axis(1)
    worst = 0.0
    # x-neighbours: displacement [h, 0, -h y]; y-neighbours: [0, h, 0]; z: [0, 0, h^2]
    dx = np.asarray(sr_norm(np.stack([np.full_like(y, h), np.zeros_like(y), -h * y], axis=1)))
    for axis, dist in ((0, dx[None, :, None]), (1, h), (2, sr_norm(np.array([0.0, 0.0, spec.hz])))):
        a = [slice(None)] * 3
        b = [slice(None)] * 3
        a[axis] = slice(0, -1)
        b[axis] = slice(1, None)
        diff = np.linalg.norm(vecs[tuple(a)] - vecs[tuple(b)], axis=-1).max(axis=-1)
        d = dist if np.ndim(dist) == 0 else np.broadcast_to(dist, diff.shape)
        worst = max(worst, float(np.max(diff / d)))
    return worst


def _project_out(frames, v):
    for _ in range(2):
        c = np.einsum("nkd,nd->nk", frames, v)
        v = v - np.einsum("nk,nkd->nd", c, frames)
    return v


def extend_frame(ff: FrameField, seed=None, collapse=0.5, smooth_radius=4, buffer=None) -> FrameField:
    """Add one unit vector field orthogonal to the frame at every node.

    smooth_radius is in x/y nodes; the z radius is smooth_radius^2 nodes so the
    averaging window is a dilated box. `buffer`, when given, is a preallocated
    (n, kmax, D) array whose first k slots already hold the frame.
    """
    spec = ff.spec
    k, D = ff.k, ff.D
    if not 1 <= k <= D - 4:
        raise ValueError(f"frame extension needs 1 <= k <= D-4 (k={k}, D={D})")
    n = spec.size
    flat = ff.frames.reshape(n, k, D)
    order, parent = bfs_tree(spec.shape)
    if seed is None:
        seed = null_seed(flat[order[0]])
    seed = np.asarray(seed, dtype=float)
    seed = _project_out(flat[order[0]][None], seed[None])[0]
    seed /= np.linalg.norm(seed)
    if flat.dtype != np.float64 or flat.strides[-1] != 8:
        flat = np.ascontiguousarray(flat, dtype=np.float64)
    # kernels take any strides, so frames living in a larger buffer are not copied
    vec, bad = kernels.propagate_frame(order, parent, flat, seed, float(collapse))
    if bad >= 0:
        raise PropagationCollapse(
            f"projected vector fell below {collapse} at node {np.unravel_index(bad, spec.shape)}; input frames too rough"
        )
    raw = vec.reshape(spec.shape + (D,))
    sm = raw
    for axis, r in ((0, smooth_radius), (1, smooth_radius), (2, smooth_radius**2)):
        sm = _smooth_axis(sm, axis, min(r, (spec.shape[axis] - 1) // 2))
    w = _project_out(flat, sm.reshape(n, D))
    nrm = np.linalg.norm(w, axis=1)
    if np.any(nrm < 1e-3):
        node = int(np.argmin(nrm))
        raise PropagationCollapse(f"smoothed vector vanished at node {np.unravel_index(node, spec.shape)}")
    w /= nrm[:, None]
    if buffer is not None:
        buffer[:, k] = w
        frames = buffer[:, : k + 1].reshape(spec.shape + (k + 1, D))
    else:
        frames = np.concatenate([flat, w[:, None]], axis=1).reshape(spec.shape + (k + 1, D))
    out = FrameField(spec, frames, history=list(ff.history))
    out.history.append({"k": k + 1, "min_projected_norm": float(nrm.min())})
    return out


@dataclass
class IsometryField:
    """U(p): R^m -> R^D per node, stored as (nx,ny,nz,m,D) orthonormal rows."""

    spec: GridSpec
    columns: np.ndarray
    report: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.columns.shape[-2]

    def apply(self, s) -> GridField:
        """U(p) s(p) for an (nx,ny,nz,m) coefficient array or GridField."""
        if isinstance(s, GridField):
            valid, s = s.valid, s.values
        else:
            valid = None
        vals = np.einsum("xyzm,xyzmd->xyzd", np.asarray(s, dtype=float), self.columns)
        return GridField(self.spec, vals, valid)

    def isometry_residual(self, nodes=None):
        C = self.columns.reshape(-1, self.m, self.columns.shape[-1])
        if nodes is not None:
            C = C[nodes]
        eye = np.eye(self.m)
        worst = 0.0
        for s in range(0, len(C), CHUNK):
            G = np.einsum("nid,njd->nij", C[s : s + CHUNK], C[s : s + CHUNK])
            worst = max(worst, float(np.max(np.abs(G - eye))))
        return worst

    def orthogonality_residual(self, constraints):
        """max |(U e_j)·c| / |c| over nodes, columns and constraint vectors (…,6,D)."""
        D = self.columns.shape[-1]
        C = self.columns.reshape(-1, self.m, D)
        c = np.asarray(constraints, dtype=float).reshape(len(C), -1, D)
        worst = 0.0
        for s in range(0, len(C), CHUNK):
            cc = c[s : s + CHUNK]
            dots = np.einsum("nmd,nwd->nmw", C[s : s + CHUNK], cc)
            nrm = np.linalg.norm(cc, axis=-1)[:, None, :]
            worst = max(worst, float(np.max(np.abs(dots) / nrm)))
        return worst


CHUNK = 1 << 14

CONSTRAINT_WORDS = ("X", "Y", "Z", "XX", "YY", "XY")


def constraint_scales(M, A):
    return (1.0 / M, 1.0 / M, A, A, A, A)


def build_U(constraints, spec: GridSpec, m: int, M: float = 1.0, A: float = 1.0,
            smooth_radius=4, collapse=0.5, tol=1e-10) -> IsometryField:
    """Isometry field orthogonal to the six constraint vectors W P≤N0 ψ.

    `constraints` has shape (nx,ny,nz,6,D) in the order X, Y, Z, XX, YY, XY.
    """
    c = np.asarray(constraints, dtype=float)
    D = c.shape[-1]
    if c.shape[:3] != spec.shape or c.shape[3] != 6:
        raise ValueError("constraints must have shape (nx,ny,nz,6,D)")
    if 6 + m > D - 3:
        raise ValueError(f"need 6 + m <= D - 3 (m={m}, D={D})")
    scaled = c * np.array(constraint_scales(M, A))[:, None]
    n = spec.size
    try:
        Q, ratios = gram_schmidt(scaled.reshape(n, 6, D), tol=tol)
    except DependenceError as e:
        node = None if e.node is None else tuple(int(v) for v in np.unravel_index(int(e.node[0]), spec.shape))
        raise DependenceError(e.index, e.sigma, node) from None
    buf = np.zeros((n, 6 + m, D))
    buf[:, :6] = Q
    del Q, scaled
    ff = FrameField(spec, buf[:, :6].reshape(spec.shape + (6, D)))
    for _ in range(m):
        ff = extend_frame(ff, collapse=collapse, smooth_radius=smooth_radius, buffer=buf)
    cols = buf[:, 6:].reshape(spec.shape + (m, D))
    U = IsometryField(spec, cols)
    U.report = {
        "max_gram_schmidt_ratio": float(ratios.max()),
        "min_projected_norm": min(h["min_projected_norm"] for h in ff.history),
        "isometry_residual": U.isometry_residual(),
        "orthogonality_residual": U.orthogonality_residual(c),
        "smooth_radius": smooth_radius,
    }
    return U
