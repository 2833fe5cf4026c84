"""The oscillating map φ⁰ = V∘f built from an explicit automorphic immersion f.

f: H -> R^6 is (cos 2πx, sin 2πx, Re F1, Im F1, Re F2, Im F2) with the theta
series

    F1(x, y, z) = Σ_n exp(-π (y+n)^2) exp(2πi (z + n x)),
    F2(p)       = F1(g p),  g = [1/2, 1/4, 0].

Both are invariant under p -> p·γ for γ in the integer lattice (left and
right translations commute). On the lines y ∈ Z/2 the terms of F1 pair up so
that F1 and Y F1 become real multiples of one phase, which kills the wedge
wherever F2 happens to line up as well; the quarter shift in y keeps the two
copies' bad lines disjoint. The wedges do not depend on z: moving z rotates
all derivative vectors by one orthogonal map. All derivatives along words in X, Y, Z are exact: each theta term is
P(u) exp(-π u^2) exp(2πi(z + n x)) with u = y + n, and X, Y, Z act on the
polynomial P.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import minimize

from . import group
from .fields import wedge_norm

THETA_TERMS = 8
TWO_PI = 2.0 * math.pi
FREENESS_WORDS = ("X", "Y", "Z", "XX", "YY", "XY")
SHIFT = (0.5, 0.25)  # left translation [a, b, 0] used for the second theta copy


class ImmersionFailure(ValueError):
    def __init__(self, point, value):
        super().__init__(f"|Xf∧Yf∧Zf| = {value:.3e} at {np.round(point, 6).tolist()}")
        self.point = point
        self.value = value


def word_degree(word: str) -> int:
    return sum(2 if c == "Z" else 1 for c in word)


@lru_cache(maxsize=None)
def _theta_poly(word: str, shift_a: float, shift_b: float):
    """Complex polynomial in u acting on the theta terms for this word.

    With a left shift g = [a,b,c] the fields become X - bZ and Y + aZ.
    """
    poly = np.array([1.0 + 0j])
    for letter in reversed(word):
        if letter == "X":
            # 2πi (u - b) P
            poly = P.polymul(poly, np.array([-TWO_PI * 1j * shift_b, TWO_PI * 1j]))
        elif letter == "Y":
            # P' - 2π u P + 2πi a P
            poly = P.polyadd(
                P.polyder(poly),
                P.polymul(poly, np.array([TWO_PI * 1j * shift_a, -TWO_PI])),
            )
        elif letter == "Z":
            poly = poly * (TWO_PI * 1j)
        else:
            raise ValueError(f"derivative letters are X, Y, Z; got {letter!r}")
    return poly


def theta(word: str, pts, shift=(0.0, 0.0)):
    """Word derivative of F1(g·p) with g = [shift[0], shift[1], 0]; complex (n,)."""
    pts = np.asarray(pts, dtype=float)
    a, b = shift
    q = group.mul(np.array([a, b, 0.0]), pts) if (a or b) else pts
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    poly = _theta_poly(word, float(a), float(b))
    # center the truncated sum on the dominant term so that automorphy holds everywhere
    n0 = -np.round(y)
    out = np.zeros(np.shape(x), dtype=complex)
    for m in range(-THETA_TERMS, THETA_TERMS + 1):
        n = n0 + m
        u = y + n
        out += P.polyval(u, poly) * np.exp(-math.pi * u * u) * np.exp(TWO_PI * 1j * (z + n * x))
    return out


def _circle(word: str, x):
    if any(c != "X" for c in word):
        return np.zeros_like(x, dtype=complex)
    return (TWO_PI * 1j) ** len(word) * np.exp(TWO_PI * 1j * x)


class AutomorphicMap:
    """The explicit immersion f: H -> R^6 with exact word derivatives."""

    m_f = 6

    def __call__(self, pts):
        return self.derivative("", pts)

    def derivative(self, word: str, pts):
        pts = np.asarray(pts, dtype=float)
        e = _circle(word, pts[..., 0])
        f1 = theta(word, pts)
        f2 = theta(word, pts, SHIFT)
        return np.stack([e.real, e.imag, f1.real, f1.imag, f2.real, f2.imag], axis=-1)

    def immersion_wedge(self, pts):
        v = np.stack([self.derivative(w, pts) for w in "XYZ"], axis=-2)
        return wedge_norm(v)

    def automorphy_residual(self, pts, gammas=None):
        pts = np.asarray(pts, dtype=float)
        if gammas is None:
            gammas = lattice_generators()
        base = self(pts)
        worst = 0.0
        for g in gammas:
            moved = group.mul(pts, np.asarray(g, dtype=float))
            worst = max(worst, float(np.max(np.abs(self(moved) - base))))
        return worst


def lattice_generators():
    out = []
    for i in range(3):
        for s in (1, -1):
            v = [0, 0, 0]
            v[i] = s
            out.append(tuple(v))
    return out


def fundamental_grid(n: int, endpoint=False):
    """n^3 nodes of [0,1)^3 (or [0,1]^3), a fundamental domain of the right lattice action."""
    t = np.linspace(0.0, 1.0, n, endpoint=endpoint)
    x, y, z = np.meshgrid(t, t, t, indexing="ij")
    return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)


def boundary_grid(n: int):
    pts = fundamental_grid(n, endpoint=True)
    on_face = np.any((pts == 0.0) | (pts == 1.0), axis=1)
    return pts[on_face]


# -- Veronese lift -----------------------------------------------------------


def _triu_pairs(m):
    return [(i, j) for i in range(m) for j in range(i, m)]


def veronese(v):
    """(v, sym(v⊗v)) with upper-triangular layout and √2 on off-diagonal entries."""
    v = np.asarray(v, dtype=float)
    m = v.shape[-1]
    quad = [v[..., i] * v[..., j] * (1.0 if i == j else math.sqrt(2.0)) for i, j in _triu_pairs(m)]
    return np.concatenate([v, np.stack(quad, axis=-1)], axis=-1)


def veronese_dim(m_f):
    return m_f + m_f * (m_f + 1) // 2


def _subwords(word):
    """Yields (kept, rest) for every split of the letters into two ordered subwords."""
    k = len(word)
    for mask in range(1 << k):
        a = "".join(word[i] for i in range(k) if mask >> i & 1)
        b = "".join(word[i] for i in range(k) if not mask >> i & 1)
        yield a, b


@dataclass
class Phi0:
    """φ⁰ = V∘f together with its measured certificate."""

    f: AutomorphicMap = field(default_factory=AutomorphicMap)
    c0: float = float("nan")
    c_f: float = float("nan")
    certificate: dict = field(default_factory=dict)

    @property
    def m(self):
        return veronese_dim(self.f.m_f)

    def __call__(self, pts):
        return veronese(self.f(pts))

    def derivative(self, word: str, pts, cache=None):
        """Exact word derivative via the Leibniz rule on the quadratic block."""
        pts = np.asarray(pts, dtype=float)
        if cache is None:
            cache = {}

        def fd(w):
            if w not in cache:
                cache[w] = self.f.derivative(w, pts)
            return cache[w]

        lin = fd(word)
        m_f = self.f.m_f
        quad = np.zeros(pts.shape[:-1] + (m_f, m_f))
        for a, b in _subwords(word):
            quad += fd(a)[..., :, None] * fd(b)[..., None, :]
        iu, ju = np.triu_indices(m_f)
        scale = np.where(iu == ju, 1.0, math.sqrt(2.0))
        # the split sum already symmetrizes: entry (i,j) collects both orders
        sym = 0.5 * (quad + np.swapaxes(quad, -1, -2))
        return np.concatenate([lin, sym[..., iu, ju] * scale], axis=-1)

    def free_stack(self, pts):
        cache = {}
        return np.stack([self.derivative(w, pts, cache) for w in FREENESS_WORDS], axis=-2)

    def freeness(self, pts):
        return wedge_norm(self.free_stack(pts))

    def cj_norm(self, j: int, pts):
        """sup over pts of |∇^j φ⁰| (all 2^j horizontal words)."""
        cache = {}
        words = ["".join(w) for w in itertools.product("XY", repeat=j)] if j else [""]
        total = np.zeros(len(pts))
        for w in words:
            total += np.sum(self.derivative(w, pts, cache) ** 2, axis=-1)
        return float(np.sqrt(total.max()))


def polished_min(fun, pts, values, starts=4):
    """Grid minimum refined by local Nelder-Mead searches from the lowest nodes.

    `fun` maps (n,3) -> (n,). The domain is periodic under the lattice, so
    the searches may leave the unit cube freely.
    """
    order = np.argsort(values)[:starts]
    best_val = float(values[order[0]])
    best_pt = pts[order[0]]
    for i in order:
        r = minimize(
            lambda q: float(np.log(max(fun(q[None, :])[0], 1e-300))),
            pts[i],
            method="Nelder-Mead",
            options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 2000},
        )
        v = float(np.exp(r.fun))
        if v < best_val:
            best_val, best_pt = v, r.x
    return best_val, np.asarray(best_pt)


def build_phi0(f: AutomorphicMap | None = None, grid_n=33, refine_n=65, threshold=1e-6,
               automorphy_tol=1e-10, bj_max=8, bj_grid=5) -> Phi0:
    """Gate f (automorphy, immersion), then measure the freeness constant of V∘f.

    The freeness constant is the min of the 6-fold wedge over a grid_n^3
    fundamental-domain grid, repeated on a refine_n^3 grid for stability.
    """
    f = AutomorphicMap() if f is None else f
    bpts = boundary_grid(min(grid_n, 17))
    resid = f.automorphy_residual(bpts)
    if resid > automorphy_tol:
        raise ValueError(f"automorphy residual {resid:.3e} exceeds {automorphy_tol:.1e}")
    pts = fundamental_grid(grid_n)
    imm = f.immersion_wedge(pts)
    i_min = int(np.argmin(imm))
    if imm[i_min] < threshold:
        raise ImmersionFailure(pts[i_min], float(imm[i_min]))
    c_f, _ = polished_min(f.immersion_wedge, pts, imm)
    phi = Phi0(f=f)
    free = phi.freeness(pts)
    c0, c0_point = polished_min(phi.freeness, pts, free)
    if refine_n:
        rpts = fundamental_grid(refine_n)
        free_ref = phi.freeness(rpts)
        c0_ref, _ = polished_min(phi.freeness, rpts, free_ref)
    else:
        free_ref, c0_ref = None, float("nan")
    bpts_j = fundamental_grid(bj_grid)
    B = {j: phi.cj_norm(j, bpts_j) for j in range(bj_max + 1)}
    six = phi.free_stack(pts)
    sv_min = float(np.linalg.svd(six, compute_uv=False)[..., -1].min())
    phi.c0 = c0
    phi.c_f = c_f
    phi.certificate = {
        "c_f": phi.c_f,
        "c_f_grid_min": float(imm.min()),
        "c_f_max": float(imm.max()),
        "c0": c0,
        "c0_point": c0_point.tolist(),
        "c0_grid_min": float(free.min()),
        "c0_refined": c0_ref,
        "c0_refined_grid_min": float(free_ref.min()) if free_ref is not None else None,
        "c0_relative_change": abs(c0_ref - c0) / c0 if free_ref is not None else None,
        "smallest_singular_value": sv_min,
        "derivative_sup": {w: float(np.linalg.norm(six[:, i], axis=-1).max()) for i, w in enumerate(FREENESS_WORDS)},
        "B_j": {str(j): v for j, v in B.items()},
        "B_j_grid": f"{bj_grid}^3",
        "automorphy_residual": resid,
        "grid": {"fundamental_domain": "[0,1)^3", "n": grid_n, "refined_n": refine_n},
        "m_f": f.m_f,
        "m": phi.m,
        "theta_terms": 2 * THETA_TERMS + 1,
    }
    return phi


def rescaled_phi0(n: int, A: float, pts, phi: Phi0 | None = None, word: str = ""):
    """A^n φ⁰(δ_{A^{-n}} p), or its word derivative A^{n(1-deg)} (wφ⁰)(δ_{A^{-n}} p)."""
    phi = Phi0() if phi is None else phi
    lam = float(A) ** (-n)
    q = group.dilate(lam, pts)
    scale = float(A) ** n * lam ** word_degree(word)
    return scale * (phi.derivative(word, q) if word else phi(q))
