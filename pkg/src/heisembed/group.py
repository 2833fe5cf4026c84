"""Heisenberg group arithmetic in the coordinates [x, y, z].

The group law is [a,b,c][x,y,z] = [x+a, y+b, z+c+a*y]. All real-valued
routines accept either a single point of shape (3,) or a stack of shape
(..., 3) and broadcast over the leading axes.
"""

from __future__ import annotations

import numpy as np

IDENTITY = np.zeros(3)

_INT64_MAX = np.iinfo(np.int64).max


def as_points(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 3:
        raise ValueError(f"points need a trailing axis of length 3, got shape {p.shape}")
    return p


def mul(p, q):
    p = as_points(p)
    q = as_points(q)
    a, b, c = p[..., 0], p[..., 1], p[..., 2]
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    return np.stack(np.broadcast_arrays(x + a, y + b, z + c + a * y), axis=-1)


def inv(p):
    p = as_points(p)
    a, b, c = p[..., 0], p[..., 1], p[..., 2]
    return np.stack([-a, -b, a * b - c], axis=-1)


def dilate(lam, p):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("dilation factor must be positive")
    p = as_points(p)
    return np.stack(
        np.broadcast_arrays(p[..., 0] * lam, p[..., 1] * lam, p[..., 2] * (lam * lam)), axis=-1
    )


def flow(w: str, t, p):
    """Time-t flow of the right-invariant field X or Y.

    Equals left multiplication by [t,0,0] (for X) or [0,t,0] (for Y).
    """
    p = as_points(p)
    t = np.asarray(t, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if w == "X":
        return np.stack(np.broadcast_arrays(x + t, y, z + t * y), axis=-1)
    if w == "Y":
        return np.stack(np.broadcast_arrays(x, y + t, z), axis=-1)
    raise ValueError(f"flow is defined for 'X' or 'Y', not {w!r}")


def generator(w: str, t) -> np.ndarray:
    t = float(t)
    if w == "X":
        return np.array([t, 0.0, 0.0])
    if w == "Y":
        return np.array([0.0, t, 0.0])
    raise ValueError(f"unknown generator {w!r}")


def commutator(p, q):
    return mul(mul(mul(p, q), inv(p)), inv(q))


# -- lattice ---------------------------------------------------------------


class LatticeOverflow(OverflowError):
    pass


def _check_int(v):
    if not isinstance(v, (int, np.integer)):
        raise TypeError(f"lattice coordinates must be integers, got {type(v).__name__}")
    v = int(v)
    if abs(v) > _INT64_MAX:
        raise LatticeOverflow(f"lattice coordinate {v} exceeds the 64-bit range")
    return v


def lattice_point(a, b, c) -> tuple[int, int, int]:
    return (_check_int(a), _check_int(b), _check_int(c))


def lattice_mul(p, q) -> tuple[int, int, int]:
    a, b, c = lattice_point(*p)
    x, y, z = lattice_point(*q)
    # Python ints are unbounded, so the range check after the fact is exact.
    return lattice_point(x + a, y + b, z + c + a * y)


def lattice_inv(p) -> tuple[int, int, int]:
    a, b, c = lattice_point(*p)
    return lattice_point(-a, -b, a * b - c)


def lattice_mul_array(p, q):
    """Vectorized lattice product on int64 arrays with overflow detection."""
    p = np.asarray(p, dtype=np.int64)
    q = np.asarray(q, dtype=np.int64)
    a, b, c = p[..., 0], p[..., 1], p[..., 2]
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    lim = 2**31
    if np.any(np.abs(a) >= lim) or np.any(np.abs(y) >= lim):
        raise LatticeOverflow("lattice product may overflow int64")
    ay = a * y
    s = z + c
    if np.any((z > 0) & (c > 0) & (s < 0)) or np.any((z < 0) & (c < 0) & (s > 0)):
        raise LatticeOverflow("lattice product overflowed int64")
    out = s + ay
    if np.any((s > 0) & (ay > 0) & (out < 0)) or np.any((s < 0) & (ay < 0) & (out > 0)):
        raise LatticeOverflow("lattice product overflowed int64")
    return np.stack(np.broadcast_arrays(x + a, y + b, out), axis=-1)


def lattice_inv_array(p):
    p = np.asarray(p, dtype=np.int64)
    a, b, c = p[..., 0], p[..., 1], p[..., 2]
    if np.any(np.abs(a) >= 2**31) or np.any(np.abs(b) >= 2**31):
        raise LatticeOverflow("lattice inverse may overflow int64")
    return np.stack([-a, -b, a * b - c], axis=-1)
