"""Perturbative solver for B(φ, ψ) = F.

B(φ, ψ) = (Xφ·Xψ, Yφ·Yψ). Pointwise, any φ with φ·Wψ = 0 and φ·WWψ = -F_W
solves it, but that loses two derivatives. The staged solver instead builds φ
frequency band by frequency band against mollified copies of ψ, then feeds the
remaining residual back in (Neumann sweeps) and removes the last bit with one
direct pointwise solve.

All grid derivatives use `mode` ("closure" by default) and all mollifiers use
the family's boundary rule, so the solver works on the full grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import (
    AnalyticField,
    GridField,
    GridMismatch,
    GridSpec,
    ScaledNorm,
    as_grid,
    derive,
    norm,
    wedge_norm,
)
from .mollify import MollifierFamily, dyadic_ladder, lowpass_analytic

ROWS = ("X", "XX", "Y", "YY")


class DeterminantFloor(ValueError):
    def __init__(self, node, det, floor):
        self.node, self.det, self.floor = node, det, floor
        super().__init__(f"det(TT*) = {det:.3e} below floor {floor:.1e} at node {node}")


class PreconditionFailure(ValueError):
    pass


class SolverAbort(RuntimeError):
    def __init__(self, message, history):
        self.history = list(history)
        super().__init__(f"{message}; residual history {['%.3e' % r for r in self.history]}")


# -- bilinear form -------------------------------------------------------------


@dataclass
class BilinearResidual:
    X: np.ndarray
    Y: np.ndarray
    valid: np.ndarray
    spec: GridSpec
    history: list = field(default_factory=list)

    def as_field(self) -> GridField:
        return GridField(self.spec, np.stack([self.X, self.Y], axis=-1), self.valid)

    def sup(self):
        if not self.valid.any():
            return float("nan")
        return float(max(np.abs(self.X[self.valid]).max(), np.abs(self.Y[self.valid]).max()))

    def __sub__(self, F):
        Fx, Fy, Fv = _split(F, self.spec)
        return BilinearResidual(self.X - Fx, self.Y - Fy, self.valid & Fv, self.spec)


def _split(F, spec):
    """(F_X, F_Y, valid) from a 2-component GridField, an array, or 0."""
    if F is None or (np.isscalar(F) and F == 0):
        z = np.zeros(spec.shape)
        return z, z, np.ones(spec.shape, dtype=bool)
    if isinstance(F, BilinearResidual):
        return F.X, F.Y, F.valid
    if isinstance(F, GridField):
        if F.spec != spec:
            raise GridMismatch("forcing lives on a different grid")
        return F.values[..., 0], F.values[..., 1], F.valid
    F = np.asarray(F, dtype=float)
    return F[..., 0], F[..., 1], np.ones(spec.shape, dtype=bool)


def _grid_pair(phi, psi, spec=None):
    if isinstance(phi, GridField):
        spec = phi.spec
    elif isinstance(psi, GridField):
        spec = psi.spec
    phi, psi = as_grid(phi, spec), as_grid(psi, spec)
    if phi.spec != psi.spec:
        raise GridMismatch("φ and ψ live on different grids")
    if phi.D != psi.D:
        raise GridMismatch(f"ambient dimensions differ ({phi.D} vs {psi.D})")
    return phi, psi


def bform(phi, psi, mode="closure", spec=None) -> BilinearResidual:
    """(Xφ·Xψ, Yφ·Yψ) at every node."""
    phi, psi = _grid_pair(phi, psi, spec)
    out = {}
    valid = np.ones(phi.spec.shape, dtype=bool)
    for W in "XY":
        a, b = derive(phi, W, mode), derive(psi, W, mode)
        out[W] = np.einsum("...d,...d->...", a.values, b.values)
        valid &= a.valid & b.valid
    return BilinearResidual(out["X"], out["Y"], valid, phi.spec)


def bform_expanded(phi, psi, mode="closure", spec=None) -> BilinearResidual:
    """(W(φ·Wψ) − φ·WWψ)_{W=X,Y}: no derivative lands on φ directly."""
    phi, psi = _grid_pair(phi, psi, spec)
    out = {}
    valid = np.ones(phi.spec.shape, dtype=bool)
    for W in "XY":
        Wpsi = derive(psi, W, mode)
        inner = derive(phi.dot(Wpsi), W, mode)
        second = phi.dot(derive(psi, W + W, mode))
        out[W] = inner.values[..., 0] - second.values[..., 0]
        valid &= inner.valid & second.valid
    return BilinearResidual(out["X"], out["Y"], valid, phi.spec)


# -- constraint operator -----------------------------------------------------------


@dataclass
class ConstraintOperator:
    """Rows (Xψ, XXψ, Yψ, YYψ) per node, optionally equilibrated by `scales`.

    Scaling row i by s_i and the right-hand side by the same s_i leaves the
    pseudoinverse solution unchanged; it only improves the Gram conditioning.
    """

    spec: GridSpec
    rows: np.ndarray  # (n, 4, D), already scaled
    scales: np.ndarray  # (4,)
    valid: np.ndarray  # (nx, ny, nz)
    gram: np.ndarray  # (n, 4, 4)
    gram_inv: np.ndarray

    @classmethod
    def from_field(cls, psi, mode="closure", scales=(1.0, 1.0, 1.0, 1.0), spec=None):
        psi = as_grid(psi, spec)
        parts = [derive(psi, w, mode) for w in ROWS]
        s = np.asarray(scales, dtype=float)
        rows = np.stack([p.values for p in parts], axis=-2)
        valid = np.logical_and.reduce([p.valid for p in parts])
        return cls.from_rows(psi.spec, rows, s, valid)

    @classmethod
    def from_rows(cls, spec: GridSpec, rows, scales=(1.0, 1.0, 1.0, 1.0), valid=None):
        """rows: (nx, ny, nz, 4, D) unscaled, in row order X, XX, Y, YY."""
        s = np.asarray(scales, dtype=float)
        rows = np.asarray(rows, dtype=float)
        rows = rows.reshape(spec.size, 4, rows.shape[-1]) * s[None, :, None]
        valid = np.ones(spec.shape, dtype=bool) if valid is None else valid
        flat_ok = valid.ravel()
        rows = np.where(flat_ok[:, None, None], rows, 0.0)
        G = np.einsum("nid,njd->nij", rows, rows)
        Gs = np.where(flat_ok[:, None, None], G, np.eye(4))
        try:
            Ginv = np.linalg.inv(Gs)
        except np.linalg.LinAlgError:
            # a rank-deficient node is left for check_floor to report by position
            Ginv = np.linalg.pinv(Gs)
        return cls(spec, rows, s, valid, G, Ginv)

    @property
    def D(self):
        return self.rows.shape[-1]

    def det(self):
        """det(TT*) of the unscaled rows (= |Xψ∧XXψ∧Yψ∧YYψ|²)."""
        d = np.linalg.det(self.gram) / np.prod(self.scales) ** 2
        return np.where(self.valid.ravel(), d, np.nan).reshape(self.spec.shape)

    def diagnostics(self):
        ok = self.valid.ravel()
        if not ok.any():
            return {"valid_nodes": 0}
        ev = np.linalg.eigvalsh(self.gram[ok])
        det = self.det().ravel()[ok]
        return {
            "valid_nodes": int(ok.sum()),
            "min_det": float(det.min()),
            "max_det": float(det.max()),
            "max_condition": float(np.sqrt(ev[:, -1] / ev[:, 0]).max()),
            "row_scales": self.scales.tolist(),
        }

    def check_floor(self, floor):
        if floor is None or floor <= 0:
            return
        d = self.det()
        bad = np.where(self.valid, d, np.inf) < floor
        if bad.any():
            node = np.unravel_index(int(np.argmin(np.where(bad, d, np.inf))), self.spec.shape)
            raise DeterminantFloor(tuple(int(i) for i in node), float(d[node]), floor)

    def apply(self, v):
        """T v per node: (v·Xψ, v·XXψ, v·Yψ, v·YYψ), unscaled."""
        vals = v.values if isinstance(v, GridField) else np.asarray(v, dtype=float)
        out = np.einsum("nid,nd->ni", self.rows, vals.reshape(self.spec.size, self.D)) / self.scales
        return out.reshape(self.spec.shape + (4,))


def pseudoinverse_solve(T: ConstraintOperator, rhs, floor=None) -> GridField:
    """T*(TT*)^{-1} rhs per node; rhs is (nx,ny,nz,4) in row order X, XX, Y, YY."""
    T.check_floor(floor)
    if isinstance(rhs, GridField):
        r_valid, rhs = rhs.valid, rhs.values
    else:
        r_valid = np.ones(T.spec.shape, dtype=bool)
    r = np.asarray(rhs, dtype=float).reshape(T.spec.size, 4) * T.scales
    coef = np.einsum("nij,nj->ni", T.gram_inv, r)
    sol = np.einsum("ni,nid->nd", coef, T.rows)
    valid = T.valid & r_valid
    sol[~valid.ravel()] = np.nan
    return GridField(T.spec, sol.reshape(T.spec.shape + (T.D,)), valid)


def _rhs(a=None, b=None, c=None, d=None, shape=None):
    z = np.zeros(shape)
    return np.stack([z if v is None else v for v in (a, b, c, d)], axis=-1)


def _finite(f: GridField) -> GridField:
    return GridField(f.spec, np.where(f.valid[..., None], f.values, 0.0), f.valid)


# -- schedule and ladder context ---------------------------------------------------


@dataclass(frozen=True)
class SolverSchedule:
    N0: float = 16.0
    Nmax: float = 64.0
    sweeps: int = 8
    tol: float = 1e-8  # relative to sup|∇φ| sup|∇ψ|
    M: float = 1.0
    A: float = 1.0
    det_floor: float = 0.0
    mode: str = "closure"
    boundary: str = "truncate"
    lines: str = "grid"
    polish: bool = True
    lfe_tol: float = 1e-2  # precondition: sup|B(φ̃, P≤N0 ψ)| relative

    def __post_init__(self):
        for v in (self.N0, self.Nmax):
            if v <= 0 or abs(math.log2(v) - round(math.log2(v))) > 1e-12:
                raise ValueError("N0 and Nmax must be powers of 2")
        if not self.N0 < self.Nmax:
            raise ValueError("need N0 < Nmax")
        if self.sweeps < 0:
            raise ValueError("sweep count must be non-negative")

    @property
    def ladder(self):
        return dyadic_ladder(self.N0, self.Nmax)

    @property
    def family(self):
        return MollifierFamily(boundary=self.boundary, lines=self.lines)

    @property
    def row_scales(self):
        return (1.0 / self.M, self.A, 1.0 / self.M, self.A)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class Ladder:
    """Mollified copies of a fixed ψ and their constraint operators, built once.

    With an analytic `source` for ψ the copies come from a padded grid, so
    they carry no boundary truncation error.
    """

    def __init__(self, psi: GridField, schedule: SolverSchedule, source: AnalyticField | None = None):
        self.psi = psi
        self.source = source
        self.schedule = schedule
        self.family = schedule.family
        self._low = {}
        self._ops = {}

    def low(self, N):
        """P≤N ψ; N = inf means ψ itself."""
        if N not in self._low:
            if math.isinf(N):
                self._low[N] = self.psi
            elif self.source is not None:
                self._low[N] = lowpass_analytic(self.source, N, self.psi.spec)
            else:
                self._low[N] = _finite(self.family.lowpass(self.psi, N))
        return self._low[N]

    def band(self, N):
        return self.low(N) - self.low(N / 2)

    def op(self, N) -> ConstraintOperator:
        if N not in self._ops:
            s = self.schedule
            self._ops[N] = ConstraintOperator.from_field(self.low(N), s.mode, s.row_scales)
            self._ops[N].check_floor(s.det_floor)
        return self._ops[N]

    def lowpass(self, f: GridField, N) -> GridField:
        return _finite(self.family.lowpass(f, N))


def _forcing(F, spec):
    Fx, Fy, Fv = _split(F, spec)
    return GridField(spec, np.stack([Fx, Fy], axis=-1), Fv)


def _solve_low(lad: Ladder, tilde_phi: GridField, F: GridField, N0):
    PF = lad.lowpass(F, N0)
    T = lad.op(N0)
    shape = lad.psi.spec.shape
    corr = pseudoinverse_solve(T, _rhs(b=-PF.values[..., 0], d=-PF.values[..., 1], shape=shape))
    return tilde_phi + corr, PF


def _solve_band(lad: Ladder, phi_prev: GridField, F: GridField, N):
    mode = lad.schedule.mode
    low_phi = lad.lowpass(phi_prev, N)
    band_psi = lad.band(N)
    band_F = lad.lowpass(F, N) - lad.lowpass(F, N / 2)
    coeffs = []
    for w in ROWS:
        c = -derive(low_phi, w, mode).dot(band_psi).values[..., 0]
        if w == "XX":
            c = c - band_F.values[..., 0]
        elif w == "YY":
            c = c - band_F.values[..., 1]
        coeffs.append(c)
    return pseudoinverse_solve(lad.op(N), np.stack(coeffs, axis=-1)), low_phi, band_psi, band_F


def low_freq_solve(tilde_phi, psi, F, N0, schedule: SolverSchedule | None = None, ladder=None,
                   check=True):
    """φ≤N0 = φ̃ + T_{P≤N0 ψ}^{-1}(0, -P≤N0 F_X, 0, -P≤N0 F_Y).

    Returns (φ≤N0, certificate). The certificate compares B(φ≤N0, P≤N0 ψ)
    with P≤N0 F; `check` also gates the precondition B(φ̃, P≤N0 ψ) ≈ 0.
    """
    schedule = schedule or SolverSchedule(N0=N0, Nmax=2 * N0)
    tilde_phi, psi = _grid_pair(tilde_phi, psi)
    lad = ladder or Ladder(psi, schedule)
    F = _forcing(F, psi.spec)
    mode = schedule.mode
    low = lad.low(N0)
    scale = _grad_sup(tilde_phi, mode) * _grad_sup(low, mode)
    pre = bform(tilde_phi, low, mode).sup()
    if check and scale > 0 and pre > schedule.lfe_tol * scale:
        raise PreconditionFailure(
            f"B(φ̃, P≤N0 ψ) = {pre:.3e} exceeds {schedule.lfe_tol:.1e} relative to {scale:.3e}"
        )
    phi, PF = _solve_low(lad, tilde_phi, F, N0)
    resid = (bform(phi, low, mode) - PF).sup()
    return phi, {"precondition": pre, "precondition_scale": scale, "identity_residual": resid}


def staged_sweep(phi_prev, psi, F, N, schedule: SolverSchedule | None = None, ladder=None):
    """φ_N = T_{P≤N ψ}^{-1}(a_N, b_N, c_N, d_N); returns (φ_N, certificate).

    The certificate is the residual of
    B(φ_N, P≤N ψ) + B(P≤N φ_{<N}, P_N ψ) − P_N F, which vanishes up to the
    discrete product-rule defect.
    """
    schedule = schedule or SolverSchedule(N0=N / 2, Nmax=N)
    phi_prev, psi = _grid_pair(phi_prev, psi)
    lad = ladder or Ladder(psi, schedule)
    F = _forcing(F, psi.spec)
    mode = schedule.mode
    phi_N, low_phi, band_psi, band_F = _solve_band(lad, phi_prev, F, N)
    lhs = bform(phi_N, lad.low(N), mode)
    cross = bform(low_phi, band_psi, mode)
    resid = BilinearResidual(lhs.X + cross.X, lhs.Y + cross.Y, lhs.valid & cross.valid, lhs.spec) - band_F
    return phi_N, {"identity_residual": resid.sup(), "c2_norm": _c2(phi_N, mode)}


def _grad_sup(f: GridField, mode, mask=True):
    vals = [derive(f, w, mode) for w in "XY"]
    nrm = np.sqrt(sum(np.sum(v.values**2, axis=-1) for v in vals))
    ok = np.logical_and.reduce([v.valid for v in vals]) & mask
    return float(nrm[ok].max()) if ok.any() else float("nan")


def _c2(f: GridField, mode):
    return norm(f, ScaledNorm("Ck", 2, 1.0), mode=mode)


def staged_pass(tilde_phi: GridField, F: GridField, lad: Ladder):
    """Low-frequency solve plus the whole dyadic ladder; returns (φ, per-band log)."""
    s = lad.schedule
    phi, _ = _solve_low(lad, tilde_phi, F, s.N0)
    log = []
    for N in s.ladder:
        inc, *_ = _solve_band(lad, phi, F, N)
        phi = phi + inc
        log.append({"N": N, "increment_sup": inc.sup()})
    return phi, log


def telescoped_residual(tilde_phi, psi, F, schedule: SolverSchedule, ladder=None):
    """Both sides of the high-high identity after one staged pass (no Neumann).

    Returns (direct, assembled): direct = B(φ≤Nmax, P≤Nmax ψ) − P≤Nmax F and
    assembled = Σ_N B(P_N ψ, P_{>N} φ_{<N}) computed term by term.
    """
    tilde_phi, psi = _grid_pair(tilde_phi, psi)
    lad = ladder or Ladder(psi, schedule)
    F = _forcing(F, psi.spec)
    mode = schedule.mode
    phi, _ = _solve_low(lad, tilde_phi, F, schedule.N0)
    X = np.zeros(psi.spec.shape)
    Y = np.zeros(psi.spec.shape)
    for N in schedule.ladder:
        inc, low_phi, band_psi, _ = _solve_band(lad, phi, F, N)
        hh = bform(band_psi, phi - low_phi, mode)
        X, Y = X + hh.X, Y + hh.Y
        phi = phi + inc
    Nmax = schedule.Nmax
    direct = bform(phi, lad.low(Nmax), mode) - lad.lowpass(F, Nmax)
    assembled = BilinearResidual(X, Y, direct.valid, psi.spec)
    return direct, assembled


def hypothesis_report(psi: GridField, M, A, mode="closure"):
    """Measured constants for ψ: first-derivative band, freeness, second-derivative size."""
    words = ("X", "Y", "Z", "XX", "YY", "XY")
    d = {w: derive(psi, w, mode) for w in words}
    ok = np.logical_and.reduce([v.valid for v in d.values()])
    nx = np.linalg.norm(d["X"].values, axis=-1)[ok]
    ny = np.linalg.norm(d["Y"].values, axis=-1)[ok]
    six = np.stack([d[w].values for w in words], axis=-2)[ok]
    two = np.stack([d["X"].values, d["Y"].values], axis=-2)[ok]
    free = wedge_norm(six)
    xy = wedge_norm(two)
    hess = max(float(np.linalg.norm(d[w].values, axis=-1)[ok].max()) for w in ("XX", "YY", "XY"))
    return {
        "M": M,
        "A": A,
        "xy_ratio_min": float(min(nx.min(), ny.min()) / M),
        "xy_ratio_max": float(max(nx.max(), ny.max()) / M),
        "xy_wedge_min_over_M2": float(xy.min() / M**2),
        "freeness_min_over_A-4M2": float(free.min() / (A**-4 * M**2)),
        "second_derivative_sup_times_A": hess * A,
    }


# -- full solver -------------------------------------------------------------------


def core_mask(spec: GridSpec, halo):
    """Nodes at least `halo` = (px, py, pz) nodes away from every face."""
    out = np.zeros(spec.shape, dtype=bool)
    sl = tuple(slice(p, n - p) for n, p in zip(spec.shape, halo))
    out[sl] = True
    return out


def _ramp(n, full, rim):
    d = np.minimum(np.arange(n), n - 1 - np.arange(n)).astype(float)
    t = np.clip((d - rim) / (full - rim), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def taper(spec: GridSpec, halo, reach, rim=2):
    """Smooth cutoff: 1 on the core grown by `reach`, 0 within `rim` nodes of a face."""
    full = [p - r for p, r in zip(halo, reach)]
    if min(f - rim for f in full) < 1:
        raise ValueError(f"halo {tuple(halo)} too thin for reach {tuple(reach)} plus a rim of {rim}")
    rx, ry, rz = (_ramp(n, f, rim) for n, f in zip(spec.shape, full))
    return rx[:, None, None] * ry[None, :, None] * rz[None, None, :]


def smoother_reach(spec: GridSpec, N):
    rho = 1.0 / (N * spec.h)
    return (math.ceil(rho) + 2, math.ceil(rho) + 2, math.ceil(rho * rho) + 2)


def _sup_on(R: GridField, mask):
    ok = R.valid & mask
    if not ok.any():
        return float("nan")
    return float(np.max(R.norms()[ok]))


def solve(tilde_phi, psi, F=0, schedule: SolverSchedule | None = None, ladder=None, halo=None):
    """Staged pass, Neumann re-injection of the residual, final pointwise polish.

    With `halo` = (px, py, pz) the outer node layers act as ghost cells: the
    residual is tapered to zero there before it is fed back, and every
    reported residual is measured on the core only.

    Returns (φ, report). Raises SolverAbort if the residual fails to decrease
    over two consecutive sweeps while still above tolerance.
    """
    schedule = schedule or SolverSchedule()
    tilde_phi, psi = _grid_pair(tilde_phi, psi)
    spec = psi.spec
    lad = ladder or Ladder(psi, schedule)
    mode = schedule.mode
    F = _forcing(F, spec)
    if halo is None:
        core = np.ones(spec.shape, dtype=bool)
        tau = None
    else:
        core = core_mask(spec, halo)
        tau = taper(spec, halo, smoother_reach(spec, schedule.N0))[..., None]
    grad_psi = _grad_sup(psi, mode, core)
    report = {
        "schedule": schedule.to_dict(),
        "halo": None if halo is None else list(halo),
        "hypotheses": hypothesis_report(psi, schedule.M, schedule.A, mode),
        "conditioning": {f"N={N:g}": lad.op(N).diagnostics() for N in [schedule.N0] + schedule.ladder},
    }
    report["precondition_residual"] = _sup_on(_forcing(bform(tilde_phi, lad.low(schedule.N0), mode), spec), core)

    def residual(phi):
        return _forcing(bform(phi, psi, mode) - F, spec)

    def feed(R):
        if tau is None:
            return R
        return GridField(spec, np.where(R.valid[..., None], R.values, 0.0) * tau)

    # the pass on (φ̃, F) is term 0 of the Neumann series, so the history starts at B(φ̃, ψ) − F
    history = [_sup_on(residual(tilde_phi), core)]
    phi, bands = staged_pass(tilde_phi, F, lad)
    report["bands"] = [bands]
    R = residual(phi)
    history.append(_sup_on(R, core))
    stalls = 0
    for sweep in range(schedule.sweeps):
        scale = _grad_sup(phi, mode, core) * grad_psi
        if history[-1] <= schedule.tol * scale:
            break
        inc, bands = staged_pass(GridField(spec, np.zeros_like(phi.values)), -1.0 * feed(R), lad)
        phi = phi + inc
        report["bands"].append(bands)
        R = residual(phi)
        history.append(_sup_on(R, core))
        stalls = stalls + 1 if history[-1] >= history[-2] else 0
        if stalls >= 2:
            raise SolverAbort(f"residual did not decrease over two sweeps (sweep {sweep + 1})", history)
    report["neumann_history"] = list(history)
    if schedule.polish:
        T = lad.op(math.inf)
        Rv = feed(R).values
        phi = phi + pseudoinverse_solve(T, _rhs(b=Rv[..., 0], d=Rv[..., 1], shape=spec.shape))
        R = residual(phi)
        history.append(_sup_on(R, core))
    grad_phi = _grad_sup(phi, mode, core)
    report["residual_history"] = history
    report["final_residual"] = history[-1]
    report["grad_phi_sup"] = grad_phi
    report["grad_psi_sup"] = grad_psi
    report["relative_residual"] = history[-1] / (grad_phi * grad_psi)
    ratios = [history[i] / history[i + 1] for i in range(len(report["neumann_history"]) - 1)]
    report["contraction"] = ratios
    delta = phi - tilde_phi
    report["cross_terms"] = {
        "X(phi-tilde)·Ypsi": _sup_dot(derive(delta, "X", mode), derive(psi, "Y", mode), core),
        "Y(phi-tilde)·Xpsi": _sup_dot(derive(delta, "Y", mode), derive(psi, "X", mode), core),
    }
    inner = (lambda f: f) if halo is None else (lambda f: f.crop(halo))
    c2_delta = _c2(inner(delta), mode)
    c2_psi = _c2(inner(psi), mode)
    report["derivative_loss"] = {"C2(phi-tilde)": c2_delta, "C2(psi)": c2_psi, "ratio": c2_delta / c2_psi}
    return phi, report


def _sup_dot(a: GridField, b: GridField, mask=True):
    d = a.dot(b)
    return float(np.abs(d.values[..., 0][d.valid & mask]).max())


def sample_analytic(f, spec: GridSpec) -> GridField:
    return f.sample(spec) if isinstance(f, AnalyticField) else as_grid(f, spec)
