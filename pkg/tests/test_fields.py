import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from heisembed.fields import (
    AnalyticField,
    DomainShrinkError,
    GridField,
    GridMismatch,
    GridSpec,
    ScaledNorm,
    derive,
    norm,
    read_grid_field,
    wedge_norm,
    wedge_norm_minors,
    write_grid_field,
)


def poly(q):
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    return np.stack([x * x, z, x * y, y * z], axis=-1)


# hand-derived with X = ∂x + y∂z, Y = ∂y
POLY_WORDS = {
    "X": lambda x, y, z: [2 * x, y, y, y * y],
    "Y": lambda x, y, z: [0 * x, 0 * x, x, z],
    "XX": lambda x, y, z: [2 + 0 * x, 0 * x, 0 * x, 0 * x],
    "YX": lambda x, y, z: [0 * x, 1 + 0 * x, 1 + 0 * x, 2 * y],
    "XY": lambda x, y, z: [0 * x, 0 * x, 1 + 0 * x, y],
    "Z": lambda x, y, z: [0 * x, 1 + 0 * x, 0 * x, y],
}


@pytest.mark.parametrize("word", sorted(POLY_WORDS))
@pytest.mark.parametrize("mode", ["shrink", "closure"])
def test_stencils_exact_on_low_degree_polynomials(word, mode):
    spec = GridSpec.box(1 / 8, 0.5, 1 / 16, center=(0.25, 0.125, 0.0))
    f = AnalyticField(poly, 4).sample(spec)
    d = derive(f, word, mode)
    x, y, z = spec.coords()
    ref = np.stack(POLY_WORDS[word](x, y, z), axis=-1)
    assert np.allclose(d.values[d.valid], ref[d.valid], atol=1e-9)
    if mode == "closure":
        assert d.valid.all()
    else:
        assert not d.valid.all()


def test_shrink_mode_margins():
    spec = GridSpec((0, 0, 0), 0.1, (11, 11, 11))
    f = GridField(spec, np.zeros(spec.shape + (1,)))
    lo, hi = derive(f, "Y", "shrink").valid_extent()
    assert lo == [0, 2, 0] and hi == [10, 8, 10]
    lo, hi = derive(f, "XY", "shrink").valid_extent()
    assert lo == [2, 2, 2] and hi == [8, 8, 8]


def smooth(q):
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    return np.stack([np.sin(2 * np.pi * (x + z)), np.cos(np.pi * y) * np.sin(np.pi * x)], axis=-1)


def test_fourth_order_convergence():
    errs = []
    f = AnalyticField(smooth, 2)
    for h in (1 / 8, 1 / 16):
        spec = GridSpec.box(h, 0.5, 1 / 16)
        d = derive(f.sample(spec), "XY", "closure")
        ref = f.derivative("XY", spec.points())
        errs.append(np.abs(d.values - ref).max())
    assert errs[0] / errs[1] > 10


def test_analytic_nested_differences_match_exact():
    f = AnalyticField(poly, 4)
    pts = np.array([[0.3, -0.2, 0.1], [1.0, 2.0, -1.0]])
    x, y, z = pts.T
    for w in ("X", "YX", "Z"):
        ref = np.stack(POLY_WORDS[w](x, y, z), axis=-1)
        assert np.allclose(f.derivative(w, pts), ref, atol=1e-7)


def test_interpolation_exact_on_cubics(rng):
    spec = GridSpec.box(1 / 4, 1.0, 1 / 4)

    def cubic(q):
        x, y, z = q[..., 0], q[..., 1], q[..., 2]
        return (x**3 - 2 * x * y * z + y**2 + 4 * z**3)[..., None]

    g = AnalyticField(cubic, 1).sample(spec)
    pts = rng.uniform([-0.9, -0.9, -0.2], [0.9, 0.9, 0.2], size=(200, 3))
    assert np.allclose(g.interpolate(pts), cubic(pts), atol=1e-12)
    with pytest.raises(DomainShrinkError):
        g.interpolate(np.array([[2.0, 0.0, 0.0]]))


def test_grid_arithmetic_checks_grids():
    a = GridField(GridSpec((0, 0, 0), 0.1, (5, 5, 5)), np.ones((5, 5, 5, 2)))
    b = GridField(GridSpec((0, 0, 0), 0.2, (5, 5, 5)), np.ones((5, 5, 5, 2)))
    with pytest.raises(GridMismatch):
        a + b
    with pytest.raises(ValueError):
        GridSpec((0, 0, 0), 0.1, (4, 5, 5))


def test_padded_then_cropped_is_identity(rng):
    spec = GridSpec.box(1 / 8, 0.5, 1 / 16)
    big = spec.padded(2, 3, 4)
    f = GridField(big, rng.normal(size=big.shape + (3,)))
    c = f.crop((2, 3, 4))
    assert c.spec == spec
    assert np.allclose(c.spec.points(), big.points()[2:-2, 3:-3, 4:-4])


def test_binary_round_trip(tmp_path, rng):
    spec = GridSpec((0.5, -0.25, 0.0), 1 / 8, (5, 7, 9))
    vals = rng.normal(size=spec.shape + (3,))
    valid = rng.random(spec.shape) > 0.2
    f = GridField(spec, vals, valid)
    path = tmp_path / "f.hefd"
    write_grid_field(path, f, frame_k=6)
    g, k = read_grid_field(path)
    assert k == 6 and g.spec == spec
    assert np.array_equal(g.valid, valid)
    assert np.array_equal(g.values[valid], vals[valid])
    assert np.isnan(g.values[~valid]).all()


@given(arrays(np.float64, (4, 7), elements=st.floats(-3, 3)))
def test_wedge_gram_route_matches_minors(v):
    a, b = wedge_norm(v), wedge_norm_minors(v)
    # compare squares: near rank deficiency the square root magnifies roundoff in det(Gram)
    hadamard = np.prod(np.sum(v * v, axis=1))
    assert a * a == pytest.approx(b * b, rel=1e-9, abs=1e-12 * hadamard)


def test_ck_norm_of_linear_field():
    spec = GridSpec.box(1 / 8, 0.5, 1 / 16)
    f = AnalyticField(lambda q: q[..., :1] * 3.0, 1)
    # sup|f| = 1.5 and |∇f| = |(Xf, Yf)| = 3
    assert norm(f, ScaledNorm("Ck", 1, 2.0), spec=spec) == pytest.approx(1.5 + 2.0 * 3.0, rel=1e-6)
