"""Acceptance suite: one test per criterion, each prints a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`; the lines are also
collected into the terminal summary. The bounded-dimension stack is built
once per module and shared by criteria 6 and 9.
"""

import itertools
import math
import time

import numpy as np
import pytest
from conftest import record_criterion

from heisembed import audit, group, metric
from heisembed.cli import run
from heisembed.embedding import AssembledMap, build_assouad, build_bounded
from heisembed.fields import AnalyticField, GridSpec
from heisembed.nashmoser import ConstraintOperator, SolverSchedule, bform, bform_expanded, pseudoinverse_solve, telescoped_residual
from heisembed.oscillator import Phi0, build_phi0

pytestmark = pytest.mark.slow


def report(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(line)
    record_criterion(number, passed, detail)
    return passed


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(1.0, np.abs(b))


# -- 1 ---------------------------------------------------------------------------


def test_group_exactness():
    t = time.perf_counter()
    rng = np.random.default_rng(1)
    n = 100_000
    p, q, r = (rng.uniform(-10, 10, size=(n, 3)) for _ in range(3))
    lam = np.exp(rng.uniform(np.log(1 / 16), np.log(16), size=n))
    s, u = rng.uniform(-5, 5, size=(2, n))
    worst = {
        "assoc": rel_err(group.mul(group.mul(p, q), r), group.mul(p, group.mul(q, r))).max(),
        "inverse": max(rel_err(group.mul(p, group.inv(p)), 0 * p).max(), rel_err(group.mul(group.inv(p), p), 0 * p).max()),
        "dilation": rel_err(group.dilate(lam, group.mul(p, q)), group.mul(group.dilate(lam, p), group.dilate(lam, q))).max(),
    }
    flow = 0.0
    for w in "XY":
        gen = np.zeros((n, 3))
        gen[:, "XY".index(w)] = s
        flow = max(flow, rel_err(group.flow(w, s, p), group.mul(gen, p)).max())
        flow = max(flow, rel_err(group.flow(w, u, group.flow(w, s, p)), group.flow(w, s + u, p)).max())
    worst["flow"] = flow
    dt = time.perf_counter() - t
    ok = max(worst.values()) <= 1e-12 and dt < 5
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert report(1, ok, f"{4 * n} checks, worst relative error {detail}; {dt:.2f}s")


# -- 2 ---------------------------------------------------------------------------


def test_word_metric_oracle():
    t = time.perf_counter()
    table = metric.word_ball(64)
    d001 = metric.distance([0, 0, 0], [0, 0, 1], "word", table=table)
    sizes = np.cumsum(table.counts_by_radius())
    Rs = [8, 16, 32, 64]
    fit = audit.loglog_fit(Rs, [sizes[R] for R in Rs])
    dt = time.perf_counter() - t
    ok = d001 == 4 and abs(fit["slope"] - 4) <= 0.3 and dt < 60
    assert report(2, ok, f"d(0,[0,0,1]) = {d001}; growth exponent {fit['slope']:.3f} over R=8..64; {dt:.1f}s")


# -- 3 ---------------------------------------------------------------------------


def test_scaling_law():
    t = time.perf_counter()
    rng = np.random.default_rng(3)
    p = rng.uniform(-3, 3, size=(1000, 3))
    q = rng.uniform(-3, 3, size=(1000, 3))
    d = metric.cc_distance(p, q)
    worst = 0.0
    # non-dyadic scales too: a power of two dilates exactly in floating point
    lams = (0.25, 1 / 3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0, 4.0)
    for lam in lams:
        dl = metric.cc_distance(group.dilate(lam, p), group.dilate(lam, q))
        worst = max(worst, float(np.max(np.abs(dl - lam * d) / (lam * d))))
    dt = time.perf_counter() - t
    ok = worst <= 1e-6 and dt < 30
    assert report(3, ok, f"max |d(δp,δq) - λd| / λd = {worst:.2e} over 1000 pairs x {len(lams)} scales; {dt:.2f}s")


# -- 4 ---------------------------------------------------------------------------


def test_cauchy_binet_and_pseudoinverse():
    t = time.perf_counter()
    rng = np.random.default_rng(4)
    spec = GridSpec((0, 0, 0), 1.0, (5, 5, 401))  # 10025 stacks, one per node
    n, D = spec.size, 7
    rows = np.zeros((0, 4, D))
    while len(rows) < n:
        draw = rng.normal(size=(n, 4, D))
        sv = np.linalg.svd(draw, compute_uv=False)
        rows = np.concatenate([rows, draw[sv[:, 0] / sv[:, -1] < 50]])[:n]  # well-conditioned only
    T = ConstraintOperator.from_rows(spec, rows.reshape(spec.shape + (4, D)))
    # exterior-algebra route: sum of squared 4x4 minors
    minors = sum(np.linalg.det(rows[:, :, list(c)]) ** 2 for c in itertools.combinations(range(D), 4))
    cb = float(np.max(np.abs(T.det().ravel() - minors) / minors))
    rhs = rng.normal(size=spec.shape + (4,))
    sol = pseudoinverse_solve(T, rhs)
    back = T.apply(sol)
    abcd = float(np.max(np.abs(back - rhs) / np.maximum(np.abs(rhs), np.abs(rhs).max(axis=-1, keepdims=True))))
    dt = time.perf_counter() - t
    ok = cb <= 1e-9 and abcd <= 1e-9 and dt < 10
    assert report(4, ok, f"det(TT*) vs minors {cb:.1e}; four dot products {abcd:.1e}; {n} stacks; {dt:.2f}s")


# -- 5 ---------------------------------------------------------------------------


def test_phi0_certificate():
    t = time.perf_counter()
    phi = build_phi0(grid_n=33, refine_n=65)
    c = phi.certificate
    dt = time.perf_counter() - t
    ok = c["automorphy_residual"] <= 1e-10 and c["c0"] > 0 and c["c0_relative_change"] <= 0.10 and dt < 120
    assert report(5, ok, f"automorphy {c['automorphy_residual']:.1e}; c0 {c['c0']:.4g} "
                         f"(refined {c['c0_refined']:.4g}, change {c['c0_relative_change']:.1%}); {dt:.1f}s")


# -- 6 and 9: shared bounded-dimension stack ---------------------------------------


@pytest.fixture(scope="module")
def bounded():
    marks = {}
    t = time.perf_counter()
    stack = build_bounded(1 / 8, 8, 0, 1, progress=lambda n, cert: marks.setdefault(n, time.perf_counter() - t))
    return stack, marks


def identity_refinement():
    """Residuals of the product-rule form and of the telescoped high-high sum at h and h/2."""
    two_pi = 2 * np.pi

    def psi_fn(q):
        x, y, z = q[..., 0], q[..., 1], q[..., 2]
        return np.stack([np.cos(two_pi * x), np.sin(two_pi * x), np.cos(two_pi * y), np.sin(two_pi * y),
                         0.3 * np.cos(two_pi * (z + 0.5 * x * y)), 0.2 * np.sin(two_pi * (x + y))], axis=-1)

    def phi_fn(q):
        x, y, z = q[..., 0], q[..., 1], q[..., 2]
        return np.stack([np.sin(two_pi * (x + 0.3 * z)), 0.5 * np.cos(two_pi * y), x * y, np.sin(two_pi * z),
                         np.cos(two_pi * (x - y)), 0.1 * x], axis=-1)

    def F_fn(q):
        x, y, z = q[..., 0], q[..., 1], q[..., 2]
        return np.stack([np.sin(two_pi * x) * np.cos(two_pi * y), 0.5 * np.cos(two_pi * (x + z))], axis=-1)

    out = {"product_rule": [], "telescoping": []}
    sched = SolverSchedule(N0=8, Nmax=16)
    for h in (1 / 16, 1 / 32):
        spec = GridSpec.box(h, 0.5, 1 / 8)
        psi = AnalyticField(psi_fn, 6).sample(spec)
        phi = AnalyticField(phi_fn, 6).sample(spec)
        F = AnalyticField(F_fn, 2).sample(spec)
        # the inner half-box is out of reach of every boundary-truncated smoother
        P = spec.points()
        inner = (np.abs(P[..., 0]) <= 0.25) & (np.abs(P[..., 1]) <= 0.25) & (np.abs(P[..., 2]) <= 1 / 16)
        a, b = bform(phi, psi), bform_expanded(phi, psi)
        out["product_rule"].append(max(np.abs(a.X - b.X)[inner].max(), np.abs(a.Y - b.Y)[inner].max()))
        direct, assembled = telescoped_residual(0 * phi, psi, F, sched)
        out["telescoping"].append(max(np.abs(direct.X - assembled.X)[inner].max(),
                                      np.abs(direct.Y - assembled.Y)[inner].max()))
    return {k: v[0] / v[1] for k, v in out.items()}, out


def test_perturbation_solver(bounded):
    stack, marks = bounded
    cert = stack.certificates["0"]
    rep = cert["solver"]
    contraction = rep["contraction"]
    geometric = len(contraction) >= 3 and all(c >= 2 for c in contraction[:3])
    final = cert["ortho_residual_relative"]
    ratios, raw = identity_refinement()
    elapsed = marks.get(0, float("nan"))
    ok = geometric and final <= 1e-6 and min(ratios.values()) >= 3 and elapsed < 600
    hist = ", ".join(f"{v:.2e}" for v in rep["residual_history"])
    assert report(6, ok, f"history [{hist}], contraction {[round(c, 1) for c in contraction]}; "
                         f"final relative {final:.2e}; refinement ratios product rule "
                         f"{ratios['product_rule']:.1f}, telescoping {ratios['telescoping']:.1f}; scale solve {elapsed:.0f}s")


# -- 7 ---------------------------------------------------------------------------


def test_assouad_exponent():
    t = time.perf_counter()
    A = 4
    sample = audit.sample_continuous(range(-15, 15), 100, A, seed=1)
    phi = Phi0()
    inv_eps = [4, 8, 16, 32]
    dist = []
    for k in inv_eps:
        stack = build_assouad(1 / k, A, -19, 44, phi)
        dist.append(audit.distortion(AssembledMap(stack), sample, 1 / k).distortion)
    fit = audit.loglog_fit(inv_eps, dist)
    dt = time.perf_counter() - t
    ok = 0.35 <= fit["slope"] <= 0.65 and fit["r2"] >= 0.9 and dt < 300
    assert report(7, ok, f"distortion {[round(d, 2) for d in dist]} at 1/ε = {inv_eps}; slope {fit['slope']:.3f}, "
                         f"R² {fit['r2']:.3f}; {dt:.0f}s")


# -- 8 ---------------------------------------------------------------------------


def test_word_ball_distortion():
    t = time.perf_counter()
    A = 4
    phi = Phi0()
    Rs = [8, 16, 32, 64]
    dist = []
    for R in Rs:
        eps = 1 / math.log(R)
        sample = audit.sample_word(R, 20_000, A, seed=3)
        stack = build_assouad(eps, A, -4, math.ceil(math.log(R, A)) + 20, phi)
        dist.append(audit.distortion(AssembledMap(stack), sample, eps).distortion)
    fit = audit.loglog_fit([math.log(R) for R in Rs], dist)
    dt = time.perf_counter() - t
    ok = fit["slope"] <= 0.7 and dt < 600
    assert report(8, ok, f"distortion {[round(d, 2) for d in dist]} at R = {Rs}; exponent vs log R "
                         f"{fit['slope']:.3f} (R² {fit['r2']:.2f}); {dt:.0f}s")


# -- 9 ---------------------------------------------------------------------------


def test_bounded_dimension_certificates(bounded):
    stack, marks = bounded
    cert = stack.certificates["0"]
    c0 = stack.component(0)
    core = c0.field.grid.crop(c0.field.core).spec
    pts = core.points().reshape(-1, 3)[::7]
    bessel = audit.bessel_check(stack, pts)
    # off-node points add cubic-interpolation error that the node certificates do not cover
    rng = np.random.default_rng(9)
    hw = np.array(core.half_widths) * 0.9
    off = audit.bessel_check(stack, rng.uniform(-hw, hw, size=(2000, 3)))
    ortho = cert["ortho_residual_relative"]
    growth_ok = cert["wedge_growth_nonnegative"]
    ratio = bessel["max_ratio_to_bound"]
    total = max(marks.values()) if marks else float("nan")
    ok = ortho <= 1e-5 and growth_ok and ratio <= 10 and total < 1800
    assert report(9, ok, f"orthogonality relative {ortho:.2e}; wedge growth min {cert['wedge_growth_min']:.4g} "
                         f"(non-negative {growth_ok}); Bessel deviation {bessel['max_deviation']:.2e} = "
                         f"{ratio:.2f} x bound over {len(pts)} core nodes (off-node, interpolated: "
                         f"{off['max_ratio_to_bound']:.0f} x); {total:.0f}s")


# -- 10 --------------------------------------------------------------------------


def test_cli_determinism(tmp_path):
    m = str(tmp_path / "m.json")
    pts = tmp_path / "pts.csv"
    pts.write_text("x,y,z\n0,0,0\n0.25,-1,3\n7,2,-5\n")
    runs = [
        ["embed", "--eps", "1/8", "--N1", "-2", "--N2", "4", "--out", m],
        ["eval", "--map", m, "--points", str(pts), "--out", str(tmp_path / "v.csv")],
        ["audit", "--map", m, "--eps", "1/8", "--buckets=-2:3", "--count", "50", "--seed", "9",
         "--out", str(tmp_path / "a.json"), "--csv", str(tmp_path / "a.csv"), "--workers", "3"],
        ["audit", "--map", m, "--domain", "word", "--R", "8", "--count", "500", "--eps", "1/8",
         "--out", str(tmp_path / "w.json")],
        ["metric", "--kind", "sr", "--to", "1,2,3", "--out", str(tmp_path / "d.json")],
        ["lp-test", "--out", str(tmp_path / "lp.json")],
    ]
    outputs = ["m.json", "v.csv", "a.json", "a.csv", "w.json", "d.json", "lp.json"]
    snapshots = []
    for _ in range(2):
        codes = [run(args) for args in runs]
        snapshots.append({name: (tmp_path / name).read_bytes() for name in outputs})
        assert codes == [0] * len(runs)
    same = [name for name in outputs if snapshots[0][name] == snapshots[1][name]]
    ok = len(same) == len(outputs)
    assert report(10, ok, f"{len(same)}/{len(outputs)} artifacts byte-identical across repeated runs")
