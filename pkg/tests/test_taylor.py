import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinetic_spaces import fields
from kinetic_spaces.grid import GridSpec
from kinetic_spaces.norms import QuadratureOptions
from kinetic_spaces.structure import GroupPoint, StructureError, BlockStructure, build_geometry, homogeneous_norm, langevin, resolve_operator
from kinetic_spaces.taylor import (
    BumpKernel, MissingCoefficientError, TaylorData, _bump_integral, apply_segments, chain_constant,
    chain_displacement, connect_chain, gamma_segments, mollify, mollify_inverse_rate, mollify_rate, taylor_data,
    taylor_eval, taylor_eval_points, taylor_remainder, taylor_remainder_rate, taylor_terms,
)

# int_{-1}^{1} exp(-1/(1-y^2)) dy, mpmath at 40 digits
I1 = 0.443993816168079437823048921171


def test_bump_integral_oracle():
    mpmath.mp.dps = 40
    ref = mpmath.quad(lambda y: mpmath.exp(-1 / (1 - y ** 2)), [-1, 0, 1])
    assert float(ref) == pytest.approx(I1, rel=1e-15)
    assert _bump_integral() == pytest.approx(I1, rel=1e-13)


def test_taylor_terms_langevin(g1):
    # orders: 0:(0,(0,0)); 1:(0,(1,0)); 2:(1,..),(0,(2,0)); 3:(0,(0,1)),(1,(1,0)),(0,(3,0))
    terms = taylor_terms(g1, 3)
    assert len(terms) == 1 + 1 + 2 + 3
    assert (0, (0, 1)) in terms and (1, (1, 0)) in terms


def _intrinsic_degree(g, mono):
    return 2 * mono[0] + int(sum(e * w for e, w in zip(mono[1:], g.weights())))


def _all_monomials(g, n, maxe=4):
    out = []
    for m in np.ndindex(*([maxe] * (g.N + 1))):
        if _intrinsic_degree(g, m) <= n:
            out.append(tuple(int(v) for v in m))
    return out


@pytest.mark.parametrize("name", ["langevin1", "three_layer"])
@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_polynomial_reproduction(name, n, rng):
    g = resolve_operator(name)
    monos = _all_monomials(g, n)
    poly = fields.polynomial(g, {m: float(c) for m, c in zip(monos, rng.uniform(-1, 1, len(monos)))})
    zs = rng.uniform(-1, 1, (20, g.N + 1))
    zetas = rng.uniform(-1, 1, (20, g.N + 1))
    exact = poly.evaluate(zs)
    assert np.allclose(taylor_eval_points(poly, g, n, zetas, zs), exact, atol=1e-10)


def test_polynomial_of_higher_degree_not_reproduced(g1):
    poly = fields.polynomial(g1, {(0, 0, 1): 1.0})  # x1 has degree 3
    zs, zetas = np.array([[0.3, 0.5, 0.7]]), np.array([[0.0, 0.0, 0.0]])
    assert abs(taylor_eval_points(poly, g1, 2, zetas, zs)[0] - 0.7) > 1e-3


def test_taylor_eval_matches_points(g1):
    u = fields.gaussian(g1, 1.0)
    zeta = GroupPoint(0.1, [0.2, -0.3])
    td = taylor_data(u, g1, zeta, 2)
    z = GroupPoint(0.15, [0.25, -0.2])
    a = taylor_eval(td, g1, z)
    b = taylor_eval_points(u, g1, 2, zeta.as_array()[None], z.as_array()[None])[0]
    assert a == pytest.approx(b, rel=1e-14)
    assert taylor_eval(td, g1, zeta) == pytest.approx(u.at(zeta), rel=1e-14)


def test_missing_coefficient(g1):
    td = TaylorData(GroupPoint(0, [0, 0]), 1, {(0, (0, 0)): 1.0})
    with pytest.raises(MissingCoefficientError):
        taylor_eval(td, g1, GroupPoint(0, [0, 0]))
    with pytest.raises(ValueError):
        TaylorData(GroupPoint(0, [0, 0]), -1, {})


@pytest.mark.parametrize("n", [0, 1, 2])
def test_remainder_slope(g1, n):
    u = fields.gaussian(g1, 1.0)
    fit = taylor_remainder_rate(u, g1, n, 2.0, [0.3, 0.5, -0.4], np.geomspace(0.01, 0.1, 5), QuadratureOptions(n=25))
    assert abs(fit.slope - (n + 1)) <= 0.3


def test_remainder_zero_at_zero_increment(g1):
    u = fields.gaussian(g1, 1.0)
    assert taylor_remainder(u, g1, 1, 2.0, [0.0, 0.0, 0.0], opts=QuadratureOptions(n=17)) == 0.0


def test_remainder_rate_degenerate(g1):
    with pytest.raises(ValueError):
        taylor_remainder_rate(fields.gaussian(g1, 1.0), g1, 1, 2.0, [0.3, 0.5, -0.4], [0.1, 0.1])


@pytest.mark.parametrize("name", ["langevin1", "langevin2", "three_layer"])
def test_kernel_support_in_unit_ball(name):
    g = resolve_operator(name)
    k = BumpKernel(g)
    lo, hi = k.box()
    # every corner of the box has homogeneous norm <= 1
    for corner in np.ndindex(*([2] * len(lo))):
        z = np.where(np.array(corner) == 0, lo, hi)
        assert homogeneous_norm(g, GroupPoint(z[0], z[1:])) <= 1.0 + 1e-12
    assert abs(k.mass() - 1) <= 1e-8


def test_kernel_mass_tensor(g1):
    k = BumpKernel(g1)
    assert abs(k.mass_tensor(120) - 1) < 1e-8
    _, w = k.nodes(8)
    assert np.sum(w) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        BumpKernel(g1, shift=1.0)


def test_mollify_reproduces_polynomials_of_low_degree(g1):
    # T_{n-1} reproduces degree <= n-1, so the mollifier is exact on them
    u = fields.bump(g1, [1.0, 1.2, 1.2])
    poly = fields.polynomial(g1, {(0, 1, 0): 0.7, (0, 0, 0): 0.2})
    poly.box = u.box
    poly.compact = True
    out = GridSpec((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5), (3, 3, 3))
    um = mollify(poly, g1, 2, 0.3, out_spec=out, margin=0)
    assert np.allclose(um.values.ravel(), poly.evaluate(out.points()), atol=1e-13)


def test_mollify_margin_check(g1):
    u = fields.gaussian(g1, 0.05)
    out = GridSpec((-1, -1, -1), (1, 1, 1), (9, 9, 9))
    with pytest.raises(ValueError):
        mollify(u, g1, 1, 0.5, out_spec=out, margin=2)
    with pytest.raises(ValueError):
        mollify(u, g1, 1, 1.5)


def test_mollify_worker_independent(g1):
    u = fields.gaussian(g1, 1.0)
    out = GridSpec((-1, -1, -1), (1, 1, 1), (5, 5, 5))
    a = mollify(u, g1, 1, 0.2, out_spec=out, margin=0, nodes=4, workers=1)
    b = mollify(u, g1, 1, 0.2, out_spec=out, margin=0, nodes=4, workers=3)
    assert np.array_equal(a.values, b.values)


@pytest.mark.slow
@pytest.mark.parametrize("n", [1, 2])
def test_mollify_slope(g1, n):
    u = fields.gaussian(g1, 1.0)
    fit = mollify_rate(u, g1, n, 2.0, np.geomspace(0.05, 0.8, 6), nodes=6)
    assert abs(fit.slope - n) <= 0.3


def test_mollify_rate_degenerate(g1):
    with pytest.raises(ValueError):
        mollify_rate(fields.gaussian(g1, 1.0), g1, 1, 2.0, [0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        mollify_inverse_rate(fields.gaussian(g1, 1.0), g1, 2, 1, 2.0)


def test_gamma_segments_structure():
    segs = gamma_segments(2, [1.0, 0.0], 0.5)
    assert len(segs) == 10
    assert [s.kind for s in segs].count("Y") == 6
    assert sum(s.delta for s in segs if s.kind == "Y") == pytest.approx(0.0)


def test_chain_displacement_langevin(g1):
    # gamma^(1): x0 += d; Y(d^2); x0 -= d; Y(-d^2) gives x1 displacement d^3
    disp = chain_displacement(g1, 1, [1.0, 0.0], 0.5)
    assert np.allclose(disp, [0.0, 0.125], atol=1e-15)


@pytest.mark.parametrize("name", ["langevin1", "langevin2", "three_layer"])
def test_connect_chain_reaches_target(name, rng):
    g = resolve_operator(name)
    for _ in range(10):
        z = GroupPoint(rng.normal(), rng.normal(size=g.N))
        xi = rng.normal(size=g.N)
        path = connect_chain(g, z, xi)
        end = path.endpoint(g)
        assert end.t == pytest.approx(z.t, abs=1e-12)
        assert np.allclose(end.x, z.x + xi, atol=1e-10)
        assert all(s.kind in ("d", "Y") for s in path.segments)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.floats(0.1, 10))
def test_chain_ratio_dilation_invariant(xi, lam):
    g = langevin(1)
    xi = np.array(xi)
    if np.linalg.norm(xi) < 1e-3:
        return
    a = connect_chain(g, GroupPoint(0, [0, 0]), xi).ratio
    b = connect_chain(g, GroupPoint(0, [0, 0]), xi * np.array([lam, lam ** 3])).ratio
    assert a == pytest.approx(b, rel=1e-9)


def test_chain_constant_finite(g1):
    c = chain_constant(g1, samples=100)
    assert 0 < c < 2


def test_chain_requires_hormander():
    g = build_geometry(BlockStructure((2, 2), (np.array([[1.0, 0.0], [0.0, 0.0]]),), strict=False))
    with pytest.raises(StructureError):
        connect_chain(g, GroupPoint(0, np.zeros(4)), np.ones(4))
