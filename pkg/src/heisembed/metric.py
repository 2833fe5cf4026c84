"""Metrics on the Heisenberg group: word metric on the lattice, gauge, CC distances.

All distances are right-invariant: d(p, q) is the length of the displacement
g = q p^{-1}, the element whose left action carries p to q. Horizontal curves
move by left multiplication with flows of X and Y, so a curve with planar
projection (x(t), y(t)) starting at the identity picks up z = ∫ y dx.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import group, kernels

DEFAULT_NODE_CAP = 50_000_000
SOLVER_TOL = 1e-10
STRAIGHT_LINE_TOL = 1e-12


class MetricKind(str, enum.Enum):
    WORD = "word"
    GAUGE = "gauge"
    SUBRIEMANNIAN = "subriemannian"
    CCL1 = "ccl1"

    @classmethod
    def parse(cls, s) -> "MetricKind":
        if isinstance(s, cls):
            return s
        key = str(s).lower().replace("-", "").replace("_", "")
        aliases = {"sr": "subriemannian", "cc": "subriemannian", "l1": "ccl1"}
        key = aliases.get(key, key)
        for k in cls:
            if k.value == key:
                return k
        raise ValueError(f"unknown metric kind {s!r}; choose from {[k.value for k in cls]}")


class GeodesicSolverError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual


class BallTooLarge(MemoryError):
    pass


# -- word metric -------------------------------------------------------------


def estimated_ball_nodes(R: int) -> float:
    # |B(R)| ~ (31/72) R^4; round the constant up
    return 0.5 * float(R) ** 4 + 4.0 * R + 1.0


@dataclass(frozen=True)
class BallTable:
    """Exact word distances on the lattice ball of radius R.

    `dist[a+R, b+R, c+cmax]` holds the distance or -1 outside the ball.
    """

    R: int
    cmax: int
    dist: np.ndarray

    def __len__(self):
        return int(np.count_nonzero(self.dist >= 0))

    def distance(self, p) -> int:
        a, b, c = group.lattice_point(*p)
        if abs(a) > self.R or abs(b) > self.R or abs(c) > self.cmax:
            raise KeyError(f"{(a, b, c)} lies outside the word ball of radius {self.R}")
        d = int(self.dist[a + self.R, b + self.R, c + self.cmax])
        if d < 0:
            raise KeyError(f"{(a, b, c)} lies outside the word ball of radius {self.R}")
        return d

    def __contains__(self, p):
        try:
            self.distance(p)
        except KeyError:
            return False
        return True

    def lookup(self, pts) -> np.ndarray:
        """Vectorized distances for an (n,3) integer array; -1 outside the ball."""
        pts = np.asarray(pts, dtype=np.int64)
        a, b, c = pts[:, 0], pts[:, 1], pts[:, 2]
        inside = (np.abs(a) <= self.R) & (np.abs(b) <= self.R) & (np.abs(c) <= self.cmax)
        out = np.full(len(pts), -1, dtype=np.int64)
        out[inside] = self.dist[a[inside] + self.R, b[inside] + self.R, c[inside] + self.cmax]
        return out

    def points(self):
        """(points, distances) for every element of the ball, in index order."""
        idx = np.argwhere(self.dist >= 0)
        d = self.dist[idx[:, 0], idx[:, 1], idx[:, 2]].astype(np.int64)
        pts = idx - np.array([self.R, self.R, self.cmax])
        return pts.astype(np.int64), d

    def counts_by_radius(self) -> np.ndarray:
        """Number of lattice points at word distance exactly r, r = 0..R."""
        d = self.dist[self.dist >= 0]
        return np.bincount(d.astype(np.int64), minlength=self.R + 1)

    def to_csv(self, path) -> None:
        pts, d = self.points()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a", "b", "c", "dist"])
            for (a, b, c), dd in zip(pts.tolist(), d.tolist()):
                w.writerow([a, b, c, dd])


def word_ball(R: int, node_cap: float = DEFAULT_NODE_CAP) -> BallTable:
    """BFS over the lattice with generators [±1,0,0], [0,±1,0]."""
    if not isinstance(R, (int, np.integer)) or R < 1:
        raise ValueError("word_ball needs an integer radius R >= 1")
    if R > 127:
        raise BallTooLarge("distances are stored as int8; R must be at most 127")
    est = estimated_ball_nodes(int(R))
    if est > node_cap:
        raise BallTooLarge(f"word ball of radius {R} has ~{est:.3g} nodes, above the cap {node_cap:.3g}")
    # a word of length R has |c| <= R^2/4 (area bound for a path of l1 length R)
    cmax = int(R) * int(R) // 4 + 1
    dist, _ = kernels.bfs_word_ball(int(R), cmax)
    return BallTable(R=int(R), cmax=cmax, dist=dist)


# -- gauge -------------------------------------------------------------------


def gauge(p):
    p = group.as_points(p)
    return np.maximum(np.maximum(np.abs(p[..., 0]), np.abs(p[..., 1])), np.sqrt(np.abs(p[..., 2])))


def displacement(p, q):
    """g = q p^{-1}, so that g·p = q."""
    return group.mul(q, group.inv(p))


# -- sub-Riemannian (l2) distance -------------------------------------------
#
# Geodesics project to circular arcs. For chord length l and signed area
# A = c - ab/2 enclosed between the arc and its chord, the arc angle phi
# solves (phi - sin phi) / (8 sin^2(phi/2)) = |A| / l^2 and the length is
# l * phi / (2 sin(phi/2)). For phi > pi we switch to theta = pi - phi/2,
# which keeps relative precision when the arc closes up (l -> 0).


def _phi_minus_sin(phi):
    phi = np.asarray(phi, dtype=float)
    small = phi < 1e-2
    p2 = phi * phi
    series = phi * p2 / 6.0 * (1.0 - p2 / 20.0 * (1.0 - p2 / 42.0))
    return np.where(small, series, phi - np.sin(phi))


def _mu_small(phi):
    """Area ratio for arc angle phi in (0, pi]."""
    s = np.sin(phi / 2.0)
    return _phi_minus_sin(phi) / (8.0 * s * s)


def _mu_large(theta):
    """Area ratio for phi = 2(pi - theta), theta in (0, pi/2]."""
    s = np.sin(theta)
    return (2.0 * math.pi - 2.0 * theta + np.sin(2.0 * theta)) / (8.0 * s * s)


def _bisect_newton(fun, lo, hi, target, increasing):
    """Vectorized bracketed root-find of fun(x) = target: bisection then Newton."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        above = fun(mid) > target
        if increasing:
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        else:
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
    x = 0.5 * (lo + hi)
    for _ in range(30):
        fx = fun(x) - target
        step = 1e-7 * np.maximum(np.abs(x), 1e-12)
        dfx = (fun(x + step) - fun(x - step)) / (2.0 * step)
        xn = x - fx / np.where(dfx == 0, 1.0, dfx)
        out = (xn <= lo) | (xn >= hi) | ~np.isfinite(xn)
        xn = np.where(out, x, xn)
        done = np.abs(xn - x) <= 1e-15 * np.abs(x)
        x = xn
        if np.all(done):
            break
    res = np.abs(fun(x) - target) / np.maximum(target, 1e-300)
    return x, res


def sr_norm(g):
    """Sub-Riemannian length of the displacement g (vectorized over (...,3))."""
    g = group.as_points(g)
    a, b, c = g[..., 0], g[..., 1], g[..., 2]
    ell = np.hypot(a, b)
    area = np.abs(c - 0.5 * a * b)
    out = np.array(ell, dtype=float, copy=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(ell > 0, area / (ell * ell), np.inf)
    # beyond this twist the closed-loop formula is exact to O(t^{-1/2}) < 1e-16
    closed = (ell == 0) | (t > 1e32)
    out = np.where(closed, 2.0 * np.sqrt(math.pi * area), out)
    curved = (~closed) & (t >= STRAIGHT_LINE_TOL)
    if np.any(curved):
        tc = t[curved]
        ec = ell[curved]
        res_all = np.zeros_like(tc)
        val = np.empty_like(tc)
        lo_branch = tc <= math.pi / 8.0
        if np.any(lo_branch):
            tt = tc[lo_branch]
            phi, res = _bisect_newton(_mu_small, np.zeros_like(tt), np.full_like(tt, math.pi), tt, True)
            val[lo_branch] = ec[lo_branch] * phi / (2.0 * np.sin(phi / 2.0))
            res_all[lo_branch] = res
        hi_branch = ~lo_branch
        if np.any(hi_branch):
            tt = tc[hi_branch]
            # pi/(8 theta^2) <= mu_large(theta) <= pi^3/(16 theta^2) brackets the root at any twist
            lo = np.sqrt(math.pi / (8.0 * tt)) * (1.0 - 1e-12)
            hi = np.minimum(math.pi / 2.0, np.sqrt(math.pi**3 / (16.0 * tt)) * (1.0 + 1e-12))
            theta, res = _bisect_newton(_mu_large, lo, hi, tt, False)
            phi = 2.0 * (math.pi - theta)
            val[hi_branch] = ec[hi_branch] * phi / (2.0 * np.sin(theta))
            res_all[hi_branch] = res
        worst = float(np.max(res_all))
        if worst > SOLVER_TOL:
            raise GeodesicSolverError("geodesic twist equation did not converge", worst)
        out = np.array(out, dtype=float)
        out[curved] = val
    return float(out) if np.ndim(out) == 0 else out


# -- CC distance with l1 horizontal cost ------------------------------------


def _staircase_cost(params, a, b, c, x_first):
    beta, eps = params
    if abs(beta) < 1e-14:
        return np.inf
    if x_first:
        # X^alpha Y^beta X^gamma Y^delta X^eps
        alpha = a - eps - (c - eps * b) / beta
        gamma = a - alpha - eps
        delta = b - beta
    else:
        # Y^alpha X^beta Y^gamma X^delta Y^eps
        alpha = (c - (a - beta) * (b - eps)) / beta
        gamma = b - eps - alpha
        delta = a - beta
    return abs(alpha) + abs(beta) + abs(gamma) + abs(delta) + abs(eps)


def _staircase_grid(a, b, c, x_first, grid):
    B, E = np.meshgrid(grid, grid, indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        if x_first:
            alpha = a - E - (c - E * b) / B
            cost = np.abs(alpha) + np.abs(B) + np.abs(a - alpha - E) + np.abs(b - B) + np.abs(E)
        else:
            alpha = (c - (a - B) * (b - E)) / B
            cost = np.abs(alpha) + np.abs(B) + np.abs(b - E - alpha) + np.abs(a - B) + np.abs(E)
    cost = np.where(np.isfinite(cost), cost, np.inf)
    return B, E, cost


def ccl1_norm(g) -> float:
    """Upper bound for the l1 CC length of g from optimized 5-segment staircases."""
    g = np.asarray(group.as_points(g), dtype=float)
    if g.shape != (3,):
        raise ValueError("ccl1_norm takes a single point")
    lam = float(gauge(g))
    if lam == 0.0:
        return 0.0
    a, b, c = g[0] / lam, g[1] / lam, g[2] / (lam * lam)
    grid = np.linspace(-2.5, 2.5, 101)
    grid = grid[np.abs(grid) > 1e-9]
    # X^a Y^b followed by a commutator loop reaching the central part: always admissible
    best = abs(a) + abs(b) + 4.0 * math.sqrt(abs(c))
    for x_first in (True, False):
        B, E, cost = _staircase_grid(a, b, c, x_first, grid)
        order = np.argsort(cost, axis=None)[:4]
        for k in order:
            x0 = np.array([B.flat[k], E.flat[k]])
            r = minimize(
                _staircase_cost,
                x0,
                args=(a, b, c, x_first),
                method="Nelder-Mead",
                options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000},
            )
            best = min(best, float(r.fun), float(cost.flat[k]))
    return lam * best


# -- public API --------------------------------------------------------------


def cc_distance(p, q, kind=MetricKind.SUBRIEMANNIAN):
    kind = MetricKind.parse(kind)
    g = displacement(p, q)
    if kind is MetricKind.SUBRIEMANNIAN:
        return sr_norm(g)
    if kind is MetricKind.CCL1:
        g = np.asarray(g)
        if g.ndim == 1:
            return ccl1_norm(g)
        flat = g.reshape(-1, 3)
        return np.array([ccl1_norm(v) for v in flat]).reshape(g.shape[:-1])
    raise ValueError(f"cc_distance supports subriemannian or ccl1, not {kind.value}")


def distance(p, q, kind=MetricKind.SUBRIEMANNIAN, table: BallTable | None = None):
    """Dispatch over all metric kinds; the word metric needs a BallTable."""
    kind = MetricKind.parse(kind)
    if kind is MetricKind.GAUGE:
        return gauge(displacement(p, q))
    if kind is MetricKind.WORD:
        if table is None:
            raise ValueError("the word metric needs a BallTable")
        pl = group.lattice_point(*(int(round(v)) for v in np.asarray(p).tolist()))
        ql = group.lattice_point(*(int(round(v)) for v in np.asarray(q).tolist()))
        return table.distance(group.lattice_mul(ql, group.lattice_inv(pl)))
    return cc_distance(p, q, kind)


def snowflake(dist, eps):
    if not 0.0 < eps <= 0.5:
        raise ValueError("snowflake exponent needs 0 < eps <= 1/2")
    dist = np.asarray(dist, dtype=float)
    if np.any(dist < 0):
        raise ValueError("distances must be nonnegative")
    out = dist ** (1.0 - eps)
    return float(out) if out.ndim == 0 else out
