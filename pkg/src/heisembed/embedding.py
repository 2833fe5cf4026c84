"""Lacunary stacks of oscillating maps and the assembled maps Φ₁ and Φ.

Every component is stored in its own unit-scale normalization G_n, and

    φ_n(p) = A^n G_n(δ_{A^{-n}} p),    W φ_n(p) = A^{n(1-deg W)} (W G_n)(δ_{A^{-n}} p).

AssouadL2 stacks put G_n = φ⁰ into disjoint coordinate blocks. BoundedDim
stacks share one ambient space: starting from φ⁰ at the top scale, each lower
scale is solved on a grid so that its first derivatives are orthogonal to
those of the weighted sum of the scales above it.
"""

from __future__ import annotations

import enum
import gc
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import group
from .fields import (
    AnalyticField,
    Field,
    GridField,
    GridSpec,
    derive,
    read_grid_field,
    wedge_norm,
    write_grid_field,
)
from .frames import CONSTRAINT_WORDS, build_U
from .nashmoser import Ladder, SolverSchedule, bform, core_mask, solve
from .oscillator import Phi0, word_degree

MANIFEST_VERSION = 1


class StackMode(str, enum.Enum):
    ASSOUAD = "AssouadL2"
    BOUNDED = "BoundedDim"
    LARGE_EPS = "LargeEpsDirect"


def large_eps_threshold(A):
    return 1.0 / math.sqrt(math.log(A))


def _check_params(eps, A, N1, N2):
    if not 0.0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    if A < 4 or abs(math.log2(A) - round(math.log2(A))) > 1e-12:
        raise ValueError("A must be a power of 2, at least 4")
    if N2 < N1:
        raise ValueError("need N1 <= N2")


def phi0_field(phi: Phi0 | None = None) -> AnalyticField:
    phi = Phi0() if phi is None else phi
    return AnalyticField(phi, phi.m, deriv=lambda w, q: phi.derivative(w, q))


class GridBacked(Field):
    """Unit-scale component known on a grid; values and word derivatives by cubic interpolation."""

    def __init__(self, grid: GridField, mode="closure", core=None):
        self.grid = grid
        self.D = grid.D
        self.mode = mode
        self.core = core
        self._words = {"": grid}

    def word_grid(self, word) -> GridField:
        if word not in self._words:
            self._words[word] = derive(self.grid, word, self.mode)
        return self._words[word]

    def __call__(self, pts):
        return self.derivative("", pts)

    def derivative(self, word, pts):
        pts = group.as_points(pts)
        out = self.word_grid(word).interpolate(pts.reshape(-1, 3))
        return out.reshape(pts.shape[:-1] + (self.D,))


@dataclass
class Component:
    n: int
    field: Field
    block: int | None = None

    def value(self, A, pts, word=""):
        """W φ_n at pts (word empty: φ_n itself)."""
        lam = float(A) ** (-self.n)
        q = group.dilate(lam, pts)
        scale = float(A) ** (self.n * (1 - word_degree(word)))
        return scale * (self.field.derivative(word, q) if word else self.field(q))


@dataclass
class EmbeddingStack:
    eps: float
    A: float
    N1: int
    N2: int
    mode: StackMode
    components: list
    block_dim: int
    certificates: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def D_amb(self):
        if self.mode is StackMode.BOUNDED:
            return self.block_dim
        return self.block_dim * (self.N2 - self.N1 + 1)

    def component(self, n) -> Component:
        for c in self.components:
            if c.n == n:
                return c
        raise KeyError(f"no component at scale {n}")

    def embed(self, c: Component, v):
        """Place a component's values into the ambient space."""
        if c.block is None:
            return v
        out = np.zeros(v.shape[:-1] + (self.D_amb,))
        out[..., c.block * self.block_dim : (c.block + 1) * self.block_dim] = v
        return out

    def weight(self, n):
        return float(self.A) ** (-self.eps * n)


def mn_norm(eps, A, n, N):
    """M_{n,N} = (Σ_{n'=n}^{N} A^{-2ε(n'-n)})^{1/2}."""
    k = np.arange(0, N - n + 1)
    return float(math.sqrt(np.sum(float(A) ** (-2.0 * eps * k))))


# -- AssouadL2 -------------------------------------------------------------------


def build_assouad(eps, A, N1, N2, phi: Phi0 | None = None, mode=StackMode.ASSOUAD) -> EmbeddingStack:
    """φ_n = A^n φ⁰(δ_{A^{-n}}·) in block n - N1."""
    _check_params(eps, A, N1, N2)
    G = phi0_field(phi)
    comps = [Component(n, G, block=n - N1) for n in range(N1, N2 + 1)]
    return EmbeddingStack(eps, float(A), N1, N2, StackMode(mode), comps, G.D)


# -- BoundedDim ------------------------------------------------------------------


@dataclass(frozen=True)
class BoundedConfig:
    """Grid and solver settings for one scale of a BoundedDim stack (unit normalization)."""

    h: float = 1.0 / 32
    half_xy: float = 0.5
    half_z: float = 1.0 / 32
    halo: tuple = (12, 12, 14)
    D: int = 36
    N0: float = 16.0
    Nmax: float = 32.0
    sweeps: int = 8
    tol: float = 1e-7
    smooth_radius: int = 4

    def core_spec(self):
        return GridSpec.box(self.h, self.half_xy, self.half_z)

    def work_spec(self):
        return self.core_spec().padded(*self.halo)

    def to_dict(self):
        d = asdict(self)
        d["halo"] = list(self.halo)
        return d


def _psi_source(comps, n, A, eps, D):
    """Unit-scale ψ at scale n: Σ_{n'>n} A^{-ε(n'-n)} A^{-n} φ_{n'}(δ_{A^n} ·)."""
    above = [c for c in comps if c.n > n]

    def pad(v):
        if v.shape[-1] == D:
            return v
        out = np.zeros(v.shape[:-1] + (D,))
        out[..., : v.shape[-1]] = v
        return out

    def deriv(word, q):
        total = 0.0
        for c in above:
            k = c.n - n
            lam = float(A) ** (-k)
            s = float(A) ** (-eps * k) * float(A) ** (k * (1 - word_degree(word)))
            dq = group.dilate(lam, q)
            total = total + s * pad(c.field.derivative(word, dq) if word else c.field(dq))
        return total

    return AnalyticField(lambda q: deriv("", q), D, deriv=deriv)


def _wedge_ratio(a, b):
    return wedge_norm(np.stack([a, b], axis=-2)) / (np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1))


def scale_certificate(phi: GridField, psi: GridField, core, report, A, mode="closure"):
    """Per-scale checks on the core: orthogonality, derivative floors, wedge ratios, wedge growth."""
    d = {w: derive(phi, w, mode) for w in ("X", "Y")}
    s = {w: derive(psi, w, mode) for w in CONSTRAINT_WORDS}
    tot = {w: derive(phi + psi, w, mode) for w in CONSTRAINT_WORDS}
    nx = np.linalg.norm(d["X"].values, axis=-1)[core]
    ny = np.linalg.norm(d["Y"].values, axis=-1)[core]
    tx, ty = tot["X"].values[core], tot["Y"].values[core]
    six = np.stack([tot[w].values[core] for w in CONSTRAINT_WORDS], axis=-2)
    txy = np.linalg.norm(tx, axis=-1) * np.linalg.norm(ty, axis=-1)
    w2_tot = wedge_norm(np.stack([tx, ty], axis=-2)) ** 2
    w2_psi = wedge_norm(np.stack([s["X"].values[core], s["Y"].values[core]], axis=-2)) ** 2
    growth = w2_tot - w2_psi
    B = bform(phi, psi, mode)
    pointwise = np.sqrt(B.X**2 + B.Y**2)[core]
    scale = report["grad_phi_sup"] * report["grad_psi_sup"]
    six_ratio = wedge_norm(six) / txy
    return {
        "ortho_residual_sup": float(pointwise.max()),
        "ortho_residual_relative": float(pointwise.max() / scale),
        "ortho_scale": scale,
        "min_X_phi": float(nx.min()),
        "min_Y_phi": float(ny.min()),
        "xy_wedge_ratio_min": float(_wedge_ratio(tx, ty).min()),
        "six_wedge_ratio_min": float(six_ratio.min()),
        "implied_C0": {
            "nondegenerate": float(1.0 / min(nx.min(), ny.min())),
            "xy_wedge": float(_wedge_ratio(tx, ty).min() ** -0.25),
            "six_wedge": float(six_ratio.min() ** (-1.0 / 17)),
        },
        "wedge_growth_min": float(growth.min()),
        "wedge_growth_relative_min": float((growth / w2_psi).min()),
        "wedge_growth_nonnegative": bool(growth.min() >= 0.0),
        "A": A,
    }


def solve_scale(comps, n, eps, A, cfg: BoundedConfig, phi0: Phi0 | None = None):
    """One descending step: returns (unit-scale φ_n on the working grid, certificate)."""
    phi0 = Phi0() if phi0 is None else phi0
    spec = cfg.work_spec()
    core = core_mask(spec, cfg.halo)
    source = _psi_source(comps, n, A, eps, cfg.D)
    psi = source.sample(spec)
    pts = spec.points()
    flat = pts.reshape(-1, 3)
    M = max(float(np.linalg.norm(source.derivative(w, flat), axis=-1).reshape(spec.shape)[core].max()) for w in "XY")
    sched = SolverSchedule(N0=cfg.N0, Nmax=cfg.Nmax, sweeps=cfg.sweeps, tol=cfg.tol, M=M, A=A)
    lad = Ladder(psi, sched, source)
    low = lad.low(cfg.N0)
    cons = np.stack([derive(low, w, "closure").values for w in CONSTRAINT_WORDS], axis=-2)
    U = build_U(cons, spec, phi0.m, M=M, A=A, smooth_radius=cfg.smooth_radius)
    del cons
    gc.collect()
    tilde = U.apply(phi0(flat).reshape(spec.shape + (phi0.m,)))
    u_report = U.report
    del U
    gc.collect()
    phi, rep = solve(tilde, psi, 0, sched, lad, halo=cfg.halo)
    del lad
    rep.pop("bands", None)
    cert = scale_certificate(phi, psi, core, rep, A)
    cert["isometry"] = u_report
    cert["solver"] = rep
    return phi, cert


def build_bounded(eps, A, N1, N2, cfg: BoundedConfig | None = None, phi0: Phi0 | None = None,
                  progress=None) -> EmbeddingStack:
    """Descending construction: φ_{N2} = φ⁰ padded into R^D, then one grid solve per lower scale.

    Parameters with eps > 1/sqrt(log A) fall back to the direct block construction.
    """
    _check_params(eps, A, N1, N2)
    cfg = cfg or BoundedConfig()
    if eps > large_eps_threshold(A):
        stack = build_assouad(eps, A, N1, N2, phi0, mode=StackMode.LARGE_EPS)
        stack.config = {"bounded": cfg.to_dict()}
        return stack
    if N2 - N1 > 3:
        raise ValueError("BoundedDim stacks are limited to N2 - N1 <= 3")
    phi0 = Phi0() if phi0 is None else phi0
    if cfg.D < phi0.m + 9:
        raise ValueError(f"ambient dimension {cfg.D} must be at least m + 9 = {phi0.m + 9}")
    comps = [base_component(N2, phi0, cfg.D)]
    certs = {str(N2): {"base_case": True}}
    for n in range(N2 - 1, N1 - 1, -1):
        phi, cert = solve_scale(comps, n, eps, A, cfg, phi0)
        comps.append(Component(n, GridBacked(phi, core=cfg.halo)))
        certs[str(n)] = cert
        if progress:
            progress(n, cert)
    comps.sort(key=lambda c: c.n)
    return EmbeddingStack(eps, float(A), N1, N2, StackMode.BOUNDED, comps, cfg.D, certs, {"bounded": cfg.to_dict()})


def base_component(n, phi0: Phi0, D) -> Component:
    """Top scale of a BoundedDim stack: φ⁰ in the first m of D coordinates."""
    return Component(n, _padded(phi0_field(phi0), D))


def _padded(f: AnalyticField, D):
    def pad(v):
        out = np.zeros(v.shape[:-1] + (D,))
        out[..., : v.shape[-1]] = v
        return out

    return AnalyticField(lambda q: pad(f(q)), D, deriv=lambda w, q: pad(f.derivative(w, q)))


# -- assembled maps --------------------------------------------------------------


def assemble_phi1(stack: EmbeddingStack, pts):
    """Σ_{N1<=n<=N2} A^{-εn} (φ_n(p) − φ_n(0))."""
    pts = np.atleast_2d(group.as_points(pts))
    zero = np.zeros((1, 3))
    out = np.zeros((len(pts), stack.D_amb))
    for c in stack.components:
        v = c.value(stack.A, pts) - c.value(stack.A, zero)
        out += stack.weight(c.n) * stack.embed(c, v)
    return out


def assemble_phi(stack: EmbeddingStack, pts):
    """(Φ₁(δ_{2^m} p))_{m=0}^{M-1} with A = 2^M."""
    pts = np.atleast_2d(group.as_points(pts))
    M = int(round(math.log2(stack.A)))
    return np.concatenate([assemble_phi1(stack, group.dilate(2.0**m, pts)) for m in range(M)], axis=-1)


@dataclass
class AssembledMap:
    stack: EmbeddingStack
    kind: str = "phi"  # "phi" or "phi1"

    def __call__(self, pts):
        return assemble_phi(self.stack, pts) if self.kind == "phi" else assemble_phi1(self.stack, pts)

    @property
    def provenance(self):
        return {"mode": self.stack.mode.value, "assembly": self.kind}


# -- manifests -------------------------------------------------------------------


def save_manifest(stack: EmbeddingStack, path, header=None):
    """JSON manifest plus one grid-field file per grid-backed component, next to it."""
    base = os.path.splitext(path)[0]
    comps = []
    for c in stack.components:
        entry = {"n": c.n, "block": c.block}
        if isinstance(c.field, GridBacked):
            fname = f"{os.path.basename(base)}.n{c.n}.hefd"
            write_grid_field(os.path.join(os.path.dirname(path) or ".", fname), c.field.grid)
            entry.update(kind="grid", file=fname, halo=list(c.field.core) if c.field.core else None)
        else:
            entry["kind"] = "phi0"
        comps.append(entry)
    doc = {
        "format": "heisembed-stack",
        "version": MANIFEST_VERSION,
        "run_config": header or {},
        "eps": stack.eps,
        "A": stack.A,
        "N1": stack.N1,
        "N2": stack.N2,
        "mode": stack.mode.value,
        "block_dim": stack.block_dim,
        "D_amb": stack.D_amb,
        "config": stack.config,
        "components": comps,
        "certificates": stack.certificates,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"{type(v).__name__} is not serializable")


def load_manifest(path, phi0: Phi0 | None = None) -> EmbeddingStack:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "heisembed-stack" or doc.get("version") != MANIFEST_VERSION:
        raise ValueError(f"{path}: not a stack manifest of version {MANIFEST_VERSION}")
    mode = StackMode(doc["mode"])
    base = phi0_field(phi0)
    comps = []
    for e in doc["components"]:
        if e["kind"] == "grid":
            g, _ = read_grid_field(os.path.join(os.path.dirname(path) or ".", e["file"]))
            comps.append(Component(e["n"], GridBacked(g, core=tuple(e["halo"]) if e.get("halo") else None), e["block"]))
        elif mode is StackMode.BOUNDED:
            comps.append(Component(e["n"], _padded(base, doc["block_dim"]), e["block"]))
        else:
            comps.append(Component(e["n"], base, e["block"]))
    return EmbeddingStack(doc["eps"], doc["A"], doc["N1"], doc["N2"], mode, comps, doc["block_dim"],
                          doc.get("certificates", {}), doc.get("config", {}))
