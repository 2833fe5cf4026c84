import itertools

import numpy as np
import pytest

from heisembed.fields import AnalyticField, GridField, GridSpec
from heisembed.nashmoser import (
    ConstraintOperator,
    DeterminantFloor,
    SolverSchedule,
    bform,
    bform_expanded,
    core_mask,
    low_freq_solve,
    pseudoinverse_solve,
    smoother_reach,
    taper,
)

TWO_PI = 2 * np.pi


def random_operator(rng, n, D=7, scales=(1.0, 1.0, 1.0, 1.0)):
    spec = GridSpec((0, 0, 0), 1.0, (n, 5, 5))
    rows = rng.normal(size=spec.shape + (4, D))
    return spec, rows, ConstraintOperator.from_rows(spec, rows, scales)


def test_pseudoinverse_against_svd_least_squares(rng):
    spec, rows, T = random_operator(rng, 5)
    rhs = rng.normal(size=spec.shape + (4,))
    sol = pseudoinverse_solve(T, rhs)
    flat_rows = rows.reshape(-1, 4, rows.shape[-1])
    flat_rhs = rhs.reshape(-1, 4)
    ref = np.stack([np.linalg.lstsq(r, b, rcond=None)[0] for r, b in zip(flat_rows, flat_rhs)])
    assert np.allclose(sol.values.reshape(ref.shape), ref, rtol=1e-9, atol=1e-11)
    # the four dot products reproduce the right-hand side
    assert np.allclose(T.apply(sol), rhs, rtol=1e-9, atol=1e-11)


def test_row_scaling_leaves_solution_unchanged(rng):
    spec, rows, T = random_operator(rng, 5)
    rhs = rng.normal(size=spec.shape + (4,))
    Ts = ConstraintOperator.from_rows(spec, rows, (0.01, 8.0, 0.5, 64.0))
    assert np.allclose(pseudoinverse_solve(T, rhs).values, pseudoinverse_solve(Ts, rhs).values, rtol=1e-9, atol=1e-12)
    assert np.allclose(T.det(), Ts.det(), rtol=1e-9)


def test_determinant_is_sum_of_squared_minors(rng):
    spec, rows, T = random_operator(rng, 5, D=6)
    flat = rows.reshape(-1, 4, 6)
    minors = np.array([sum(np.linalg.det(r[:, c]) ** 2 for c in itertools.combinations(range(6), 4)) for r in flat])
    assert np.allclose(T.det().ravel(), minors, rtol=1e-9)


def test_trivial_cases(rng):
    spec = GridSpec((0, 0, 0), 1.0, (5, 5, 5))
    Q = np.linalg.qr(rng.normal(size=(spec.size, 7, 4)))[0].transpose(0, 2, 1).reshape(spec.shape + (4, 7))
    T = ConstraintOperator.from_rows(spec, Q)
    assert np.all(pseudoinverse_solve(T, np.zeros(spec.shape + (4,))).values == 0)
    rhs = rng.normal(size=spec.shape + (4,))
    expected = np.einsum("xyzi,xyzid->xyzd", rhs, Q)
    assert np.allclose(pseudoinverse_solve(T, rhs).values, expected, atol=1e-12)


def test_determinant_floor_names_the_node(rng):
    spec, rows, _ = random_operator(rng, 5)
    rows[2, 3, 1, 1] = rows[2, 3, 1, 0]  # two equal rows at one node
    T = ConstraintOperator.from_rows(spec, rows)
    with pytest.raises(DeterminantFloor) as e:
        pseudoinverse_solve(T, np.zeros(spec.shape + (4,)), floor=1e-8)
    assert e.value.node == (2, 3, 1)


def psi_fn(q):
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    return np.stack([np.cos(TWO_PI * x), np.sin(TWO_PI * x), np.cos(TWO_PI * y), np.sin(TWO_PI * y),
                     0.3 * np.cos(TWO_PI * (z + 0.5 * x * y)), 0.2 * np.sin(TWO_PI * (x + y))], axis=-1)


def phi_fn(q):
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    return np.stack([np.sin(TWO_PI * (x + 0.3 * z)), 0.5 * np.cos(TWO_PI * y), x * y, np.sin(TWO_PI * z),
                     np.cos(TWO_PI * (x - y)), 0.1 * x], axis=-1)


def test_product_rule_form_converges():
    errs = []
    for h in (1 / 16, 1 / 32):
        spec = GridSpec.box(h, 0.5, 1 / 32)
        psi = AnalyticField(psi_fn, 6).sample(spec)
        phi = AnalyticField(phi_fn, 6).sample(spec)
        a, b = bform(phi, psi), bform_expanded(phi, psi)
        errs.append(max(np.abs(a.X - b.X).max(), np.abs(a.Y - b.Y).max()))
    assert errs[0] / errs[1] >= 3


def test_bform_exact_on_polynomials():
    spec = GridSpec.box(1 / 8, 0.5, 1 / 16)
    # Xφ = (1, 0), Xψ = (0, 1): orthogonal; Yφ = (0, 1), Yψ = (0, 1)... with φ = (x, y), ψ = (y^2, z)
    phi = AnalyticField(lambda q: q[..., :2], 2).sample(spec)
    psi = AnalyticField(lambda q: np.stack([q[..., 1] ** 2, q[..., 2]], -1), 2).sample(spec)
    B = bform(phi, psi)
    y = spec.coords()[1]
    # Xφ·Xψ = (1,0)·(0,y) = 0 ; Yφ·Yψ = (0,1)·(2y,0) = 0
    assert np.abs(B.X).max() < 1e-9 and np.abs(B.Y).max() < 1e-9
    B2 = bform(psi, psi)
    assert np.allclose(B2.X, y * y, atol=1e-9)
    assert np.allclose(B2.Y, 4 * y * y, atol=1e-9)


def test_zero_forcing_keeps_tilde():
    spec = GridSpec.box(1 / 16, 0.5, 1 / 32)
    psi = AnalyticField(psi_fn, 6).sample(spec)
    tilde = GridField(spec, np.zeros(spec.shape + (6,)))
    phi, cert = low_freq_solve(tilde, psi, 0, 4, SolverSchedule(N0=4, Nmax=8))
    assert np.all(phi.values == 0)
    assert cert["identity_residual"] == 0


def test_schedule_validation():
    with pytest.raises(ValueError):
        SolverSchedule(N0=3, Nmax=16)
    with pytest.raises(ValueError):
        SolverSchedule(N0=16, Nmax=16)
    assert SolverSchedule(N0=4, Nmax=32).ladder == [8, 16, 32]


def test_taper_shape():
    spec = GridSpec((0, 0, 0), 1 / 32, (57, 57, 93))
    halo = (12, 12, 14)
    reach = smoother_reach(spec, 16)
    tau = taper(spec, halo, reach)
    assert tau.min() >= 0 and tau.max() <= 1
    grown = core_mask(spec, [p - r for p, r in zip(halo, reach)])
    assert np.all(tau[grown] == 1)
    assert np.all(tau[:2] == 0) and np.all(tau[:, :, -2:] == 0)
    with pytest.raises(ValueError):
        taper(spec, (4, 4, 4), reach)
