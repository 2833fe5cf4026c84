"""Dilated mollifier family standing in for Littlewood-Paley projections.

The kernel is a product bump K([a,b,c]) = k(a) k(b) k(c) on the gauge box
{gauge <= 1}. Writing g = [0,0,c][0,b,0][a,0,0] turns the group convolution

    (K * f)(p) = ∫ K(g) f(g^{-1} p) dg

into three one-dimensional averages along flow lines, applied in the order
X (sheared in z), then Y, then Z. At parameter N the radii are 1/N in x, y
and 1/N^2 in z, i.e. K_N(g) = N^4 K(δ_N g).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from . import kernels
from .fields import AnalyticField, DomainShrinkError, GridField, GridSpec

MIN_SAMPLES = 16


def bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def bump_mass() -> float:
    val, _ = quad(lambda t: float(bump(t)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def profile(s):
    """Unit-mass 1D profile supported in [-1, 1]."""
    return bump(s) / bump_mass()


@dataclass(frozen=True)
class MollifierFamily:
    samples: int = MIN_SAMPLES
    boundary: str = "shrink"
    lines: str = "group"  # "grid": unsheared x-lines, a grid-coordinate smoother

    def __post_init__(self):
        if self.samples < MIN_SAMPLES:
            raise ValueError(f"at least {MIN_SAMPLES} quadrature samples per axis are required")
        if self.boundary not in ("shrink", "truncate"):
            raise ValueError("boundary mode is 'shrink' or 'truncate'")
        if self.lines not in ("group", "grid"):
            raise ValueError("lines are 'group' (sheared X-lines) or 'grid'")

    def kernel(self, N, g):
        """K_N(g) = N^4 K(δ_N g) evaluated pointwise."""
        g = np.asarray(g, dtype=float)
        return N**4 * profile(N * g[..., 0]) * profile(N * g[..., 1]) * profile(N * N * g[..., 2])

    def mass(self, n=512):
        """Midpoint-rule Haar integral of K over its support box (same for every K_N)."""
        t = (np.arange(n) + 0.5) / n * 2.0 - 1.0
        w = 2.0 / n
        one = np.sum(profile(t)) * w
        return float(one**3)

    def lowpass(self, f: GridField, N) -> GridField:
        return lowpass(f, N, self)

    def band(self, f: GridField, N) -> GridField:
        return self.lowpass(f, N) - self.lowpass(f, N / 2)

    def highpass(self, f: GridField, N) -> GridField:
        return f - self.lowpass(f, N)


def _samples(rho, nmin):
    q = max(nmin, 2 * int(math.ceil(2.0 * rho)))
    q += q % 2
    tau = -rho + (np.arange(q) + 0.5) * (2.0 * rho / q)
    w = profile(tau / rho)
    return tau, w / w.sum()


def _line_bounds(spec: GridSpec, axis: str):
    """Admissible integer offsets [m_lo, m_hi] along each node's flow line."""
    nx, ny, nz = spec.shape
    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    if axis == "X":
        lo, hi = -i, nx - 1 - i
        jy = spec.y_index_offset()
        if jy is None:
            raise ValueError("sheared X-lines need the grid's y-center on a multiple of h")
        J = j - (ny - 1) // 2 + jy
        pos, neg = J > 0, J < 0
        zlo = np.full_like(k, np.iinfo(np.int64).min // 4)
        zhi = np.full_like(k, np.iinfo(np.int64).max // 4)
        # k + m J in [0, nz-1]
        zlo[pos] = -((k[pos]) // J[pos])
        zhi[pos] = (nz - 1 - k[pos]) // J[pos]
        zlo[neg] = -((nz - 1 - k[neg]) // (-J[neg]))
        zhi[neg] = k[neg] // (-J[neg])
        lo = np.maximum(lo, zlo)
        hi = np.minimum(hi, zhi)
        stride = ny * nz + J  # flat step for m=1: i+1 and k+J
        return lo, hi, stride
    if axis == "x":
        return -i, nx - 1 - i, np.full_like(i, ny * nz)
    if axis == "Y":
        return -j, ny - 1 - j, np.full_like(j, nz)
    if axis == "Z":
        return -k, nz - 1 - k, np.ones_like(k)
    raise ValueError(axis)


@lru_cache(maxsize=64)
def _pass_plan(spec: GridSpec, axis: str, rho: float, nmin: int, truncate: bool):
    tau, w = _samples(rho, nmin)
    m_min = int(math.floor(-rho)) - 3
    m_max = int(math.floor(rho)) + 3
    ntaps = m_max - m_min + 1
    lo, hi, stride = _line_bounds(spec, axis)
    W, ok = kernels.line_weights(
        np.ascontiguousarray(lo, dtype=np.int64),
        np.ascontiguousarray(hi, dtype=np.int64),
        np.ascontiguousarray(tau),
        np.ascontiguousarray(w),
        m_min,
        ntaps,
        bool(truncate),
    )
    base = np.arange(spec.size, dtype=np.int64)
    offs = np.arange(m_min, m_max + 1, dtype=np.int64)
    idx = base[:, None] + offs[None, :] * stride[:, None]
    idx = np.where(W != 0.0, idx, base[:, None])
    used = [t for t in range(ntaps) if np.any(W[:, t] != 0.0)]
    return W, ok, idx, used


def line_pass(f: GridField, axis: str, rho: float, family: MollifierFamily) -> GridField:
    """Average along X-, Y- or Z-lines with radius rho measured in nodes."""
    spec = f.spec
    W, ok, idx, used = _pass_plan(spec, axis, float(rho), family.samples, family.boundary == "truncate")
    vin = f.values.reshape(spec.size, f.D)
    vin = np.where(f.valid.reshape(-1, 1), vin, 0.0)
    mask_in = f.valid.ravel()
    out = np.zeros_like(vin)
    valid = ok.copy()
    for t in used:
        wt = W[:, t]
        src = idx[:, t]
        out += wt[:, None] * vin[src]
        valid &= (wt == 0.0) | mask_in[src]
    out[~valid] = np.nan
    shape = spec.shape + (f.D,)
    return GridField(spec, out.reshape(shape), valid.reshape(spec.shape))


def lowpass(f: GridField, N, family: MollifierFamily | None = None) -> GridField:
    if family is None:
        family = MollifierFamily()
    if N <= 0:
        raise ValueError("frequency parameter must be positive")
    spec = f.spec
    rho = 1.0 / (N * spec.h)
    if family.boundary == "shrink":
        half = np.array(spec.shape) // 2
        if rho + 2 > half[0] or rho + 2 > half[1] or rho * rho + 2 > half[2]:
            raise DomainShrinkError(
                f"kernel support at N={N} (radius {rho:.3g} nodes) exceeds the grid {spec.shape}"
            )
    out = line_pass(f, "X" if family.lines == "group" else "x", rho, family)
    out = line_pass(out, "Y", rho, family)
    out = line_pass(out, "Z", rho * rho, family)
    if not out.valid.any():
        raise DomainShrinkError(f"no node keeps its full kernel support at N={N}")
    return out


def padding(spec: GridSpec, N):
    """Node margins (x, y, z) that let a shrink-mode low-pass cover all of `spec`."""
    rho = 1.0 / (N * spec.h)
    pxy = int(math.ceil(rho)) + 3
    jy = spec.y_index_offset() or 0
    # a sheared X-line climbs |J| z-nodes per x-step; the stencil reaches 2 steps past rho
    jmax = (spec.shape[1] - 1) // 2 + pxy + abs(jy)
    pz = (int(math.ceil(rho)) + 2) * jmax + int(math.ceil(rho * rho)) + 3
    return pxy, pxy, pz


def lowpass_analytic(f: AnalyticField, N, spec: GridSpec, family: MollifierFamily | None = None) -> GridField:
    """Low-pass of an analytic field, valid on every node of `spec`.

    The field is sampled on a grid padded by the kernel reach, filtered in
    shrink mode and cropped, so no boundary truncation enters.
    """
    family = MollifierFamily(samples=family.samples if family else MIN_SAMPLES,
                             lines=family.lines if family else "group")
    px, py, pz = padding(spec, N)
    nx, ny, nz = spec.shape
    big = GridSpec(spec.center, spec.h, (nx + 2 * px, ny + 2 * py, nz + 2 * pz))
    out = lowpass(f.sample(big), N, family)
    sl = (slice(px, px + nx), slice(py, py + ny), slice(pz, pz + nz))
    vals, ok = out.values[sl], out.valid[sl]
    if not ok.all():
        raise DomainShrinkError("padded low-pass left invalid nodes inside the target grid")
    return GridField(spec, np.ascontiguousarray(vals), ok.copy())


def project(f: GridField, family: MollifierFamily, band: str, N) -> GridField:
    band = band.lower()
    if band == "lowpass":
        return family.lowpass(f, N)
    if band == "band":
        return family.band(f, N)
    if band == "highpass":
        return family.highpass(f, N)
    raise ValueError("band is LowPass, Band or HighPass")


def dyadic_ladder(N0, Nmax):
    if N0 <= 0 or Nmax <= N0:
        raise ValueError("need 0 < N0 < Nmax")
    for v in (N0, Nmax):
        if abs(math.log2(v) - round(math.log2(v))) > 1e-12:
            raise ValueError("ladder endpoints must be powers of 2")
    out = []
    N = N0 * 2
    while N <= Nmax * (1 + 1e-12):
        out.append(N)
        N *= 2
    return out
