import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from kinetic_spaces import _core_py, backend, fields
from kinetic_spaces.grid import (
    GridFunction, GridSpec, dump_grid, flow_eval, flow_y_points, grid_d, grid_y, group_convolve,
    interpolate, interpolate_points, intrinsic_derivative, inverse_compose_points, load_grid, multi_index,
    sample, slice_csv, spec_for_field,
)
from kinetic_spaces.structure import GroupPoint, compose, invert, langevin, resolve_operator

T, X0, X1 = sp.symbols("t x0 x1", real=True)


def _sym_y(expr):
    # Y = d_t + <Bx, grad_x> for Langevin d=1: (Bx)_1 = x0
    return sp.diff(expr, T) + X0 * sp.diff(expr, X1)


def _check_against(u, expr, pts, tol=1e-11):
    f = sp.lambdify((T, X0, X1), expr, "numpy")
    ref = np.broadcast_to(f(pts[:, 0], pts[:, 1], pts[:, 2]), (pts.shape[0],))
    got = u.evaluate(pts)
    assert np.allclose(got, ref, rtol=tol, atol=tol * max(1.0, np.max(np.abs(ref))))


@pytest.fixture
def pts(rng):
    return rng.uniform(-0.9, 0.9, (40, 3))


def test_gaussian_derivatives_sympy(g1, pts):
    u = fields.gaussian(g1, [1.0, 0.7], a_t=0.5, center=[0.1, -0.2, 0.3], amplitude=1.5)
    e = 1.5 * sp.exp(-0.5 * (T - 0.1) ** 2 - 1.0 * (X0 + 0.2) ** 2 - 0.7 * (X1 - 0.3) ** 2)
    _check_against(u, e, pts)
    _check_against(u.apply_d(0), sp.diff(e, X0), pts)
    _check_against(u.apply_d(1), sp.diff(e, X1), pts)
    _check_against(u.apply_y(), _sym_y(e), pts)
    _check_against(u.deriv(1, (2, 0)), _sym_y(sp.diff(e, X0, 2)), pts)
    _check_against(u.apply_y().apply_y(), _sym_y(_sym_y(e)), pts)


def test_bump_derivatives_sympy(g1, pts):
    u = fields.bump(g1, [1.0, 1.2, 1.5])
    e = sp.exp(-1 / (1 - T ** 2)) * sp.exp(-1 / (1 - (X0 / 1.2) ** 2)) * sp.exp(-1 / (1 - (X1 / 1.5) ** 2))
    _check_against(u, e, pts)
    _check_against(u.apply_d(0).apply_d(0), sp.diff(e, X0, 2), pts, tol=1e-9)
    _check_against(u.apply_y(), _sym_y(e), pts, tol=1e-9)


def test_modulated_bump_sympy(g1, pts):
    u = fields.modulated_bump(g1, [1.0, 1.5, 1.5], omega=2.5, axis=1, phase=0.3)
    e = (sp.exp(-1 / (1 - T ** 2)) * sp.exp(-1 / (1 - (X0 / 1.5) ** 2)) * sp.exp(-1 / (1 - (X1 / 1.5) ** 2))
         * sp.cos(2.5 * X0 + 0.3))
    _check_against(u, e, pts)
    _check_against(u.apply_d(0), sp.diff(e, X0), pts, tol=1e-9)
    _check_against(u.apply_y(), _sym_y(e), pts, tol=1e-9)


def test_polynomial_y(g1, pts):
    u = fields.polynomial(g1, {(1, 0, 1): 2.0, (0, 2, 0): -1.0})
    e = 2 * T * X1 - X0 ** 2
    _check_against(u.apply_y(), _sym_y(e), pts)


def test_dilate_translate(g1, pts):
    u = fields.gaussian(g1, 1.0)
    lam = 1.7
    v = u.dilate(lam)
    sc = np.array([lam ** 2, lam, lam ** 3])
    assert np.allclose(v.evaluate(pts), u.evaluate(pts * sc))
    # Y commutes with left translations; derivatives of the dilate scale
    assert np.allclose(v.apply_y().evaluate(pts), lam ** 2 * u.apply_y().evaluate(pts * sc))
    assert np.allclose(v.apply_d(0).evaluate(pts), lam * u.apply_d(0).evaluate(pts * sc))
    z0 = GroupPoint(0.3, [0.2, -0.5])
    w = u.translate(z0)
    for p in pts[:5]:
        z = GroupPoint(p[0], p[1:])
        assert w.at(z) == pytest.approx(u.at(compose(g1, z0, z)), rel=1e-13)
        assert w.apply_y().at(z) == pytest.approx(u.apply_y().at(compose(g1, z0, z)), rel=1e-10)


def test_field_boxes(g1):
    b = fields.bump(g1, [1.0, 2.0, 3.0], center=[0.5, 0, 0])
    lo, hi = b.box()
    assert np.allclose(lo, [-0.5, -2, -3]) and np.allclose(hi, [1.5, 2, 3])
    assert b.dilate(2.0).box()[1] == pytest.approx([1.5 / 4, 1.0, 3.0 / 8])


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec((0, 0), (1,), (3, 3))
    with pytest.raises(ValueError):
        GridSpec((0,), (1,), (1,))
    s = GridSpec((0, 0), (1, 2), (5, 9))
    assert s.weights().sum() == pytest.approx(2.0)
    assert np.allclose(s.step, [0.25, 0.25])


def test_sample_overflow_names_axis(g1):
    u = fields.bump(g1, [1.0, 1.0, 3.0])
    with pytest.raises(ValueError, match="x2"):
        sample(u, GridSpec((-1.5, -1.5, -1.5), (1.5, 1.5, 1.5), (31, 31, 31)), margin=1)


def test_sample_margin_zero(g1):
    u = fields.bump(g1, 1.0)
    gf = sample(u, spec_for_field(u, 21, pad=0.5), margin=4)
    assert gf.values[:4].max() == 0 and gf.values[-4:].max() == 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.integers(0, 2**31 - 1))
def test_interpolation_exact_on_multilinear(c, seed):
    spec = GridSpec((-1, -1, -1), (1, 1, 1), (5, 6, 7))
    P = spec.points()
    f = lambda p: c[0] + c[1] * p[:, 0] * p[:, 1] + c[2] * p[:, 1] * p[:, 2] * p[:, 0] + c[3] * p[:, 2]
    gf = GridFunction(spec, f(P).reshape(spec.shape))
    q = np.random.default_rng(seed).uniform(-1, 1, (20, 3))
    assert np.allclose(interpolate_points(gf, q), f(q), atol=1e-12)


def test_backends_agree(rng):
    spec = GridSpec((-1, -1, -1), (1, 1, 1), (9, 9, 9))
    vals = rng.standard_normal(spec.shape).ravel()
    q = rng.uniform(-1.2, 1.2, (500, 3))
    a = backend.interp_multilinear(vals, np.array(spec.shape), np.array(spec.lo), spec.step, q)
    b = _core_py.interp_multilinear(vals, np.array(spec.shape), np.array(spec.lo), spec.step, q)
    assert np.allclose(a, b, atol=1e-14)
    w = rng.uniform(0, 1, 100)
    x, y = rng.standard_normal(100), rng.standard_normal(100)
    assert backend.weighted_pow_diff(x, y, w, 1.7) == pytest.approx(_core_py.weighted_pow_diff(x, y, w, 1.7), rel=1e-13)


def test_interpolate_outside(g1):
    gf = GridFunction(GridSpec((0, 0, 0), (1, 1, 1), (3, 3, 3)), np.ones((3, 3, 3)))
    with pytest.raises(ValueError):
        interpolate(gf, GroupPoint(2.0, [0, 0]))
    assert interpolate_points(gf, np.array([[2.0, 0, 0]]))[0] == 0


def test_grid_derivatives_converge(g1):
    u = fields.gaussian(g1, 2.0)
    errs_d, errs_y = [], []
    for n in (49, 97):
        spec = GridSpec((-6, -6, -6), (6, 6, 6), (n, n, n))
        gf = sample(u, spec, margin=4)
        P = spec.points()
        inner = np.all(np.abs(P) < 2.5, axis=1)
        errs_d.append(np.max(np.abs(grid_d(gf, 0).values.ravel() - u.apply_d(0).evaluate(P))[inner]))
        errs_y.append(np.max(np.abs(grid_y(gf).values.ravel() - u.apply_y().evaluate(P))[inner]))
    assert errs_d[0] / errs_d[1] > 3.0
    assert errs_y[1] < errs_y[0]


def test_intrinsic_derivative_margin(g1):
    u = fields.bump(g1, 1.0)
    gf = sample(u, spec_for_field(u, 15, pad=0.1), margin=1)
    with pytest.raises(ValueError, match="stencil"):
        intrinsic_derivative(gf, g1, multi_index(g1, 1, (1, 0)))
    # analytic route is exact
    a = intrinsic_derivative(u, g1, multi_index(g1, 1, (1, 0)))
    assert a is u.deriv(1, (1, 0))


def test_flow_eval(g1):
    z = GroupPoint(0.5, [1.0, 2.0])
    y = flow_eval(g1, z, "Y", 0.3)
    assert y.t == 0.8 and np.allclose(y.x, [1.0, 2.3])
    assert np.allclose(flow_eval(g1, z, 1, 0.5).x, [1.0, 2.5])
    with pytest.raises(ValueError):
        flow_eval(g1, z, "Z", 1.0)
    P = np.array([[0.5, 1.0, 2.0]])
    assert np.allclose(flow_y_points(g1, P, 0.3), [[0.8, 1.0, 2.3]])


def test_inverse_compose_points(g3, rng):
    a, b = rng.uniform(-1, 1, (5, 5)), rng.uniform(-1, 1, (5, 5))
    out = inverse_compose_points(g3, a, b)
    for i in range(5):
        za, zb = GroupPoint(a[i, 0], a[i, 1:]), GroupPoint(b[i, 0], b[i, 1:])
        assert np.allclose(out[i], compose(g3, invert(g3, za), zb).as_array(), atol=1e-13)


def test_dump_load_roundtrip(tmp_path, g1):
    u = fields.bump(g1, 1.0)
    gf = sample(u, spec_for_field(u, 9, pad=0.2), margin=1)
    path = tmp_path / "u.grid"
    dump_grid(gf, path)
    back = load_grid(path, g1)
    assert np.array_equal(back.values, gf.values)
    assert back.spec == gf.spec and back.margin == 1
    dump_grid(back, tmp_path / "v.grid")
    assert (tmp_path / "u.grid").read_bytes() == (tmp_path / "v.grid").read_bytes()


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "bad"
    p.write_bytes(b"hello\n")
    with pytest.raises(ValueError):
        load_grid(p)


def test_slice_csv(g1):
    u = fields.bump(g1, 1.0)
    gf = sample(u, spec_for_field(u, 11, pad=0.2), margin=1)
    text = slice_csv(gf, [0.0, None, 0.0])
    lines = text.strip().split("\n")
    assert lines[0] == "coord,value" and len(lines) == 12
    with pytest.raises(ValueError):
        slice_csv(gf, [None, None, 0.0])


def test_group_convolve_against_direct_sum(g1):
    f = fields.gaussian(g1, 1.0)
    kspec = GridSpec((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5), (5, 5, 5))
    kern = lambda w: np.exp(-np.sum(w ** 2, axis=1))
    out = GridSpec((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5), (2, 2, 2))
    conv = group_convolve(f, kern, g1, kspec, out)
    W = kspec.points()
    kw = kern(W) * kspec.weights()
    for z, val in zip(out.points(), conv.values.ravel()):
        zz = GroupPoint(z[0], z[1:])
        direct = sum(c * f.at(compose(g1, zz, invert(g1, GroupPoint(w[0], w[1:])))) for w, c in zip(W, kw))
        assert val == pytest.approx(direct, rel=1e-12)
