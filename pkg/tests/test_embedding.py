import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heisembed import group
from heisembed.embedding import (
    AssembledMap,
    StackMode,
    assemble_phi,
    assemble_phi1,
    build_assouad,
    build_bounded,
    large_eps_threshold,
    load_manifest,
    mn_norm,
    save_manifest,
)
from heisembed.oscillator import Phi0, rescaled_phi0

PHI = Phi0()
coord = st.floats(-20, 20)
point = st.tuples(coord, coord, coord).map(np.array)


@given(point, point, st.sampled_from([1 / 4, 1 / 8, 1 / 32]))
def test_blocks_add_in_quadrature(p, q, eps):
    A, N1, N2 = 4.0, -2, 3
    stack = build_assouad(eps, A, N1, N2, PHI)
    lhs = np.sum((assemble_phi1(stack, p) - assemble_phi1(stack, q)) ** 2)
    rhs = sum(A ** (-2 * eps * n) * np.sum((rescaled_phi0(n, A, p, PHI) - rescaled_phi0(n, A, q, PHI)) ** 2)
              for n in range(N1, N2 + 1))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


def test_dimensions_and_base_point():
    stack = build_assouad(1 / 8, 8, 0, 4, PHI)
    assert stack.D_amb == 27 * 5
    assert np.all(assemble_phi1(stack, np.zeros(3)) == 0)
    assert assemble_phi(stack, np.zeros((2, 3))).shape == (2, 3 * 27 * 5)


@given(point, point)
def test_dilation_shifts_the_stack(p, q):
    # Φ₁ over scales N1..N2 at δ_A p equals A^{1-ε} Φ₁ over N1-1..N2-1 at p, up to the block relabeling
    A, eps = 4.0, 1 / 8
    hi = build_assouad(eps, A, 0, 4, PHI)
    lo = build_assouad(eps, A, -1, 3, PHI)
    P, Q = group.dilate(A, p), group.dilate(A, q)
    lhs = np.linalg.norm(assemble_phi1(hi, P) - assemble_phi1(hi, Q))
    rhs = A ** (1 - eps) * np.linalg.norm(assemble_phi1(lo, p) - assemble_phi1(lo, q))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


def test_word_derivative_scaling(rng):
    stack = build_assouad(1 / 8, 4, -1, 2, PHI)
    pts = rng.uniform(-3, 3, size=(5, 3))
    t = 1e-4
    for c in stack.components:
        for w in "XY":
            fwd = c.value(stack.A, group.flow(w, t, pts))
            bwd = c.value(stack.A, group.flow(w, -t, pts))
            numeric = (fwd - bwd) / (2 * t)
            assert np.allclose(c.value(stack.A, pts, w), numeric, rtol=1e-5, atol=1e-5 * np.abs(numeric).max())


def test_tail_norm():
    assert mn_norm(1 / 8, 4, 3, 3) == 1.0
    eps, A = 1 / 8, 4.0
    r = A ** (-2 * eps)
    assert mn_norm(eps, A, 0, 5) == pytest.approx(math.sqrt((1 - r**6) / (1 - r)))
    # the infinite tail is (1 - A^{-2ε})^{-1/2}
    assert mn_norm(eps, A, 0, 2000) == pytest.approx((1 - r) ** -0.5, rel=1e-12)


def test_parameter_guards():
    with pytest.raises(ValueError):
        build_assouad(0.6, 4, 0, 1)
    with pytest.raises(ValueError):
        build_assouad(1 / 8, 6, 0, 1)
    with pytest.raises(ValueError):
        build_assouad(1 / 8, 4, 2, 1)
    with pytest.raises(ValueError):
        build_bounded(1 / 8, 8, 0, 5)
    # for every admissible A the large-ε route starts above ε = 1/2 only when A < e^4
    assert large_eps_threshold(4) > 0.5 and large_eps_threshold(64) < 0.5


def test_large_eps_falls_back_to_blocks():
    stack = build_bounded(0.5, 64, 0, 1, phi0=PHI)
    assert stack.mode is StackMode.LARGE_EPS
    assert stack.D_amb == 27 * 2


def test_manifest_round_trip(tmp_path, rng):
    stack = build_assouad(1 / 16, 4, -2, 2, PHI)
    path = str(tmp_path / "s.json")
    save_manifest(stack, path, {"note": "unit"})
    back = load_manifest(path, PHI)
    pts = rng.uniform(-5, 5, size=(10, 3))
    assert np.array_equal(AssembledMap(stack)(pts), AssembledMap(back)(pts))
    assert back.mode is StackMode.ASSOUAD and back.D_amb == stack.D_amb
