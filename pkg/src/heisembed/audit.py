"""Distortion audits for assembled maps.

Pairs are stratified by distance into scale buckets A^{n-0.1} <= d <= 2A^{n-0.1}.
The ratio for a pair is |Φ(p) − Φ(q)| / d(p,q)^{1-ε}; distortion is the largest
ratio over the smallest.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import group, metric
from .embedding import EmbeddingStack, StackMode
from .metric import MetricKind

BUCKET_SHIFT = 0.1
OUT_OF_BUCKET = np.iinfo(np.int64).min


def bucket_bounds(n, A):
    lo = float(A) ** (n - BUCKET_SHIFT)
    return lo, 2.0 * lo


def bucket_of(d, A):
    """Bucket index n with A^{n-0.1} <= d <= 2A^{n-0.1}, or OUT_OF_BUCKET."""
    d = np.asarray(d, dtype=float)
    guess = np.floor(np.log(d) / math.log(A) + BUCKET_SHIFT).astype(np.int64)
    out = np.full(d.shape, OUT_OF_BUCKET, dtype=np.int64)
    # the log can land just below an edge, so the next index is tried as well
    for n in (guess + 1, guess):
        lo = np.power(float(A), n - BUCKET_SHIFT)
        inside = (d >= lo * (1 - 1e-12)) & (d <= 2.0 * lo * (1 + 1e-12))
        out = np.where(inside, n, out)
    return out


@dataclass
class PairSample:
    p: np.ndarray
    q: np.ndarray
    d: np.ndarray
    bucket: np.ndarray
    A: float
    metric: str
    domain: dict
    empty_buckets: list = field(default_factory=list)

    def __len__(self):
        return len(self.d)

    def subset(self, idx):
        return PairSample(self.p[idx], self.q[idx], self.d[idx], self.bucket[idx], self.A, self.metric,
                          dict(self.domain), list(self.empty_buckets))


def _random_directions(rng, k):
    """Displacements with unit sub-Riemannian length, spread over all twist angles."""
    g = rng.uniform(-1.0, 1.0, size=(k, 3))
    return group.dilate(1.0 / metric.sr_norm(g), g)


def sample_continuous(buckets, count, A, seed=0, budget=4):
    """Base point and offset both live at the bucket scale: p = δ_s p̂, q = (δ_s ĝ)·p.

    The right-invariant distance d(p, q) = |q p^{-1}| is recomputed from the
    stored points; pairs whose recomputed distance leaves the bucket are
    rejected, and a bucket that stays empty after `budget` rounds is reported.
    """
    rng = np.random.default_rng(seed)
    P, Q, D, Bk, empty = [], [], [], [], []
    for n in buckets:
        lo, hi = bucket_bounds(n, A)
        got = 0
        for _ in range(budget):
            need = count - got
            if need <= 0:
                break
            s = float(A) ** n
            base = group.dilate(s, rng.uniform(-1.0, 1.0, size=(need, 3)))
            target = rng.uniform(lo, hi, size=need)
            g = group.dilate(target, _random_directions(rng, need))
            q = group.mul(g, base)
            d = metric.sr_norm(metric.displacement(base, q))
            ok = bucket_of(d, A) == n
            P.append(base[ok])
            Q.append(q[ok])
            D.append(d[ok])
            Bk.append(np.full(int(ok.sum()), n, dtype=np.int64))
            got += int(ok.sum())
        if got == 0:
            empty.append(int(n))
    domain = {"kind": "continuous", "buckets": [int(b) for b in buckets], "count": count, "seed": seed}
    return PairSample(np.concatenate(P), np.concatenate(Q), np.concatenate(D), np.concatenate(Bk), float(A),
                      MetricKind.SUBRIEMANNIAN.value, domain, empty)


def sample_word(R, count, A, seed=0, table=None, budget=50):
    """Pairs (p, g·p) inside the open lattice ball B(R) = {|γ| < R}, g ∈ B(R), g ≠ 0.

    p and g are uniform over B(R); pairs whose second endpoint leaves the
    ball are rejected. d(p, g·p) = |g| is read from the BFS table, so every
    pair of ball points at distance < R can occur.
    """
    table = table or metric.word_ball(R)
    pts, dist = table.points()
    inside = dist < R
    pts, dist = pts[inside], dist[inside]
    nonzero = np.flatnonzero(dist > 0)
    rng = np.random.default_rng(seed)
    P, Q, D = [], [], []
    got = 0
    for _ in range(budget):
        if got >= count:
            break
        k = 2 * (count - got)
        p = pts[rng.integers(0, len(pts), size=k)]
        ig = nonzero[rng.integers(0, len(nonzero), size=k)]
        q = group.lattice_mul_array(pts[ig], p)
        dq = table.lookup(q)
        ok = np.flatnonzero((dq >= 0) & (dq < R))[: count - got]
        P.append(p[ok])
        Q.append(q[ok])
        D.append(dist[ig[ok]].astype(float))
        got += ok.size
    p, q, d = np.concatenate(P), np.concatenate(Q), np.concatenate(D)
    domain = {"kind": "word", "R": int(R), "count": count, "seed": seed}
    return PairSample(p.astype(float), q.astype(float), d, bucket_of(d, A), float(A), MetricKind.WORD.value, domain)


def sample_pairs(domain, buckets=None, count=100, A=4, seed=0):
    """`domain` is "continuous" (needs buckets) or ("word", R)."""
    if domain == "continuous":
        if buckets is None:
            raise ValueError("continuous sampling needs bucket indices")
        return sample_continuous(buckets, count, A, seed)
    if isinstance(domain, tuple) and domain[0] == "word":
        return sample_word(int(domain[1]), count, A, seed)
    raise ValueError(f"unknown domain {domain!r}")


# -- distortion ------------------------------------------------------------------


@dataclass
class DistortionReport:
    eps: float
    ratios: np.ndarray
    per_bucket: dict
    distortion: float
    in_bucket_distortion: float
    out_of_bucket: dict
    sample: PairSample
    differences: np.ndarray

    def summary(self):
        return {
            "eps": self.eps,
            "pairs": len(self.ratios),
            "distortion": self.distortion,
            "in_bucket_distortion": self.in_bucket_distortion,
            "min_ratio": float(self.ratios.min()),
            "max_ratio": float(self.ratios.max()),
            "per_bucket": self.per_bucket,
            "out_of_bucket": self.out_of_bucket,
            "empty_buckets": self.sample.empty_buckets,
            "domain": self.sample.domain,
            "metric": self.sample.metric,
        }

    def to_json(self, header=None):
        doc = {"run_config": header or {}, "report": self.summary()}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["px", "py", "pz", "qx", "qy", "qz", "d", "diff", "ratio", "bucket"])
        s = self.sample
        for i in range(len(self.ratios)):
            b = "" if s.bucket[i] == OUT_OF_BUCKET else int(s.bucket[i])
            w.writerow([*map(repr, map(float, s.p[i])), *map(repr, map(float, s.q[i])),
                        repr(float(s.d[i])), repr(float(self.differences[i])), repr(float(self.ratios[i])), b])
        return buf.getvalue()


def _spread(r):
    return float(r.max() / r.min())


def distortion(phi_map, sample: PairSample, eps, chunk=4096, workers=1) -> DistortionReport:
    diffs = np.empty(len(sample))

    def one(s):
        a = phi_map(sample.p[s : s + chunk])
        b = phi_map(sample.q[s : s + chunk])
        diffs[s : s + chunk] = np.linalg.norm(a - b, axis=-1)

    starts = range(0, len(sample), chunk)
    if workers > 1:
        # chunks write disjoint slices, so the result does not depend on scheduling
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, starts))
    else:
        for s in starts:
            one(s)
    ratios = diffs / sample.d ** (1.0 - eps)
    if not np.all(np.isfinite(ratios)) or np.any(ratios <= 0):
        raise ValueError("ratios must be finite and positive; a pair collapsed under the map")
    per = {}
    inb = sample.bucket != OUT_OF_BUCKET
    for n in sorted(set(sample.bucket[inb].tolist())):
        r = ratios[sample.bucket == n]
        per[str(n)] = {"count": int(r.size), "min": float(r.min()), "max": float(r.max())}
    outb = ratios[~inb]
    out = {"count": int(outb.size)}
    if outb.size:
        out.update(min=float(outb.min()), max=float(outb.max()), distortion=_spread(outb))
    return DistortionReport(
        eps=float(eps),
        ratios=ratios,
        per_bucket=per,
        distortion=_spread(ratios),
        in_bucket_distortion=_spread(ratios[inb]) if inb.any() else float("nan"),
        out_of_bucket=out,
        sample=sample,
        differences=diffs,
    )


# -- fits ------------------------------------------------------------------------


def loglog_fit(x, y):
    """OLS of log y on log x: slope, intercept, R²."""
    r = stats.linregress(np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float)))
    return {"slope": float(r.slope), "intercept": float(r.intercept), "r2": float(r.rvalue**2)}


# -- F_eps comparability ---------------------------------------------------------


def feps(g, eps, M):
    """M|x|^{1-ε} + M|y|^{1-ε} + |z|^{(1-ε)/2} of a displacement g = [x,y,z]."""
    g = group.as_points(g)
    e = 1.0 - eps
    return M * np.abs(g[..., 0]) ** e + M * np.abs(g[..., 1]) ** e + np.abs(g[..., 2]) ** (e / 2)


def feps_check(phi_map, sample: PairSample, eps, M):
    """Two-sided constants of |Φ(p) − Φ(q)| / F_ε(q p^{-1})."""
    diffs = np.linalg.norm(phi_map(sample.p) - phi_map(sample.q), axis=-1)
    F = feps(metric.displacement(sample.p, sample.q), eps, M)
    r = diffs / F
    return {"c_low": float(r.min()), "c_high": float(r.max()), "spread": float(r.max() / r.min()), "M": M}


# -- Bessel-type identity --------------------------------------------------------


def _grads(stack: EmbeddingStack, c, pts):
    return [stack.embed(c, c.value(stack.A, pts, w)) for w in "XY"]


def bessel_check(stack: EmbeddingStack, points, n0=None):
    """Compare |Σ_{n>=n0} A^{-εn}∇φ_n|² with Σ_{n>=n0} A^{-2εn}|∇φ_n|², ∇ = (X, Y).

    For BoundedDim stacks the cross terms are the per-scale bilinear residuals,
    so the deviation is bounded by 2√2 Σ_n A^{-2εn} sup|B_n| over the same
    denominator; that bound is built from the recorded certificates only.
    """
    n0 = stack.N1 if n0 is None else n0
    pts = np.atleast_2d(group.as_points(points))
    comps = [c for c in stack.components if c.n >= n0]
    total = [0.0, 0.0]
    diag = np.zeros(len(pts))
    for c in comps:
        gx, gy = _grads(stack, c, pts)
        w = stack.weight(c.n)
        total[0] = total[0] + w * gx
        total[1] = total[1] + w * gy
        diag += w * w * (np.sum(gx**2, axis=-1) + np.sum(gy**2, axis=-1))
    full = np.sum(total[0] ** 2, axis=-1) + np.sum(total[1] ** 2, axis=-1)
    dev = np.abs(full - diag) / diag
    out = {"n0": n0, "points": len(pts), "max_deviation": float(dev.max())}
    if stack.mode is StackMode.BOUNDED:
        num = 0.0
        for c in comps:
            cert = stack.certificates.get(str(c.n), {})
            if "ortho_residual_sup" in cert:
                num += 2.0 * math.sqrt(2.0) * stack.weight(c.n) ** 2 * cert["ortho_residual_sup"]
        bound = num / diag
        out["max_bound"] = float(bound.max())
        out["max_ratio_to_bound"] = float(np.max(dev / bound)) if num > 0 else float("inf")
    return out
