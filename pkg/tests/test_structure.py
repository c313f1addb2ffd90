import json

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from kinetic_spaces.structure import (
    BUILTIN_OPERATORS, BlockStructure, GroupPoint, MultiIndex, NoPreimageError, StructureError,
    build_geometry, check_hormander, commutator_field, compose, dilate, dilation_factors, flow_y,
    geometry_from_spec, homogeneous_norm, invert, langevin, load_operator, matrix_exp, matrix_power,
    operator_from_dict, operator_to_dict, quasi_triangle_constant, resolve_operator, solve_layer_preimage,
)


def test_langevin_dimensions():
    for d in (1, 2, 3):
        g = langevin(d)
        assert g.N == 2 * d and g.r == 1
        assert g.hom_dim == 4 * d + 2


def test_builtin_hom_dims():
    dims = {name: resolve_operator(name).hom_dim for name in BUILTIN_OPERATORS}
    assert dims == {"langevin1": 6, "langevin2": 10, "three_layer": 12}


@pytest.mark.parametrize("name", BUILTIN_OPERATORS)
def test_hom_dim_formula(name):
    g = resolve_operator(name)
    assert g.hom_dim == 2 + sum((2 * k + 1) * dk for k, dk in enumerate(g.layer_dims))


@pytest.mark.parametrize("name", BUILTIN_OPERATORS)
def test_nilpotent_exactly(name):
    g = resolve_operator(name)
    assert np.all(matrix_power(g, g.r + 1) == 0)
    assert g.nilpotency_degree == g.r + 1
    assert np.any(matrix_power(g, g.r) != 0)


def test_langevin_matrix():
    g = langevin(1)
    assert np.array_equal(g.B, [[0, 0], [1, 0]])


def test_matrix_exp_against_sympy(g3):
    s = sp.Symbol("s")
    Bs = sp.Matrix(g3.B.tolist()).applyfunc(sp.nsimplify)
    E = (Bs * s).exp()
    for val in (-1.3, 0.4, 2.0):
        ref = np.array(E.subs(s, val).evalf(30).tolist(), dtype=float)
        assert np.allclose(matrix_exp(g3, val), ref, atol=1e-14)


@pytest.mark.parametrize("name", BUILTIN_OPERATORS)
def test_det_exp_is_one(name):
    g = resolve_operator(name)
    for s in np.linspace(-4, 4, 17):
        assert abs(np.linalg.det(matrix_exp(g, s)) - 1) <= 1e-12


def test_bad_block_shape():
    with pytest.raises(StructureError):
        BlockStructure((2, 1), (np.ones((2, 1)),))


def test_rank_deficient_block():
    with pytest.raises(StructureError):
        BlockStructure((2, 2), (np.ones((2, 2)),))


def test_layer_dims_validation():
    with pytest.raises(ValueError):
        BlockStructure((1, 2), (np.ones((2, 1)),))
    with pytest.raises(ValueError):
        BlockStructure((2, 1), ())


def test_rank_test_detects_degenerate():
    bs = BlockStructure((2, 2), (np.array([[1.0, 0.0], [0.0, 0.0]]),), strict=False)
    g = build_geometry(bs)
    cert = check_hormander(g)
    assert not cert.hormander and cert.rank == 3


def test_operator_roundtrip(tmp_path, g3):
    path = tmp_path / "op.json"
    path.write_text(json.dumps(operator_to_dict(g3)))
    h = load_operator(str(path))
    assert np.array_equal(h.B, g3.B)
    assert operator_from_dict(operator_to_dict(g3)).hom_dim == 12


def test_resolve_unknown():
    with pytest.raises((FileNotFoundError, OSError)):
        resolve_operator("no_such_operator_file.json")


def _pt(rng, g, scale=2.0):
    return GroupPoint(rng.uniform(-scale, scale), rng.uniform(-scale, scale, g.N))


@pytest.mark.parametrize("name", BUILTIN_OPERATORS)
def test_group_axioms(name, rng):
    g = resolve_operator(name)
    e = GroupPoint(0.0, np.zeros(g.N))
    for _ in range(50):
        a, b, c = _pt(rng, g), _pt(rng, g), _pt(rng, g)
        lhs = compose(g, compose(g, a, b), c).as_array()
        rhs = compose(g, a, compose(g, b, c)).as_array()
        assert np.allclose(lhs, rhs, atol=1e-12, rtol=0)
        assert np.allclose(compose(g, a, invert(g, a)).as_array(), 0, atol=1e-12)
        assert np.allclose(compose(g, invert(g, a), a).as_array(), 0, atol=1e-12)
        assert np.allclose(compose(g, a, e).as_array(), a.as_array(), atol=1e-15)


def test_group_law_hand_value(g1):
    # (t,x) o (s,xi) = (t+s, e^{sB} x + xi), e^{sB} = [[1,0],[s,1]]
    z = compose(g1, GroupPoint(1.0, [2.0, 3.0]), GroupPoint(0.5, [1.0, -1.0]))
    assert z.t == 1.5
    # e^{0.5B} (2, 3) = (2, 4), plus (1, -1)
    assert np.allclose(z.x, [3.0, 3.0], atol=1e-15)


def test_dilation_is_automorphism(g3, rng):
    for _ in range(20):
        a, b = _pt(rng, g3), _pt(rng, g3)
        lam = rng.uniform(0.2, 5)
        lhs = dilate(g3, lam, compose(g3, a, b)).as_array()
        rhs = compose(g3, dilate(g3, lam, a), dilate(g3, lam, b)).as_array()
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_dilation_factors(g3):
    assert np.allclose(dilation_factors(g3, 2.0), [2, 2, 8, 32])


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 20), st.floats(-5, 5), st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_norm_homogeneity(lam, t, x):
    g = resolve_operator("three_layer")
    z = GroupPoint(t, x)
    n0 = homogeneous_norm(g, z)
    n1 = homogeneous_norm(g, dilate(g, lam, z))
    assert n1 == pytest.approx(lam * n0, rel=1e-14, abs=1e-300)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.lists(st.floats(-3, 3), min_size=2, max_size=2),
       st.floats(-3, 3), st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_inverse_of_product(t, x, s, xi):
    g = langevin(1)
    a, b = GroupPoint(t, x), GroupPoint(s, xi)
    lhs = invert(g, compose(g, a, b)).as_array()
    rhs = compose(g, invert(g, b), invert(g, a)).as_array()
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_norm_hand_value(g1):
    # |t|^{1/2} + |x0| + |x1|^{1/3}
    assert homogeneous_norm(g1, GroupPoint(4.0, [-3.0, 8.0])) == pytest.approx(2 + 3 + 2, rel=1e-15)


def test_flow_y_matches_composition(g2, rng):
    z = _pt(rng, g2)
    h = 0.7
    a = flow_y(g2, h, z).as_array()
    b = compose(g2, z, GroupPoint(h, np.zeros(g2.N))).as_array()
    assert np.allclose(a, b, atol=1e-14)


def test_quasi_triangle_constant_finite(g1):
    c = quasi_triangle_constant(g1, samples=500)
    assert 1.0 <= c < 10


def test_commutator_and_preimage(g3, rng):
    for n in range(g3.r + 1):
        target = np.zeros(g3.N)
        target[g3.layer_slice(n)] = rng.normal(size=g3.layer_dims[n])
        w = solve_layer_preimage(g3, n, target)
        assert np.all(w[g3.d:] == 0)
        assert np.allclose(commutator_field(g3, w, n), target, atol=1e-12)


def test_preimage_is_minimal_norm(g3):
    target = np.zeros(g3.N)
    target[g3.layer_slice(1)] = [2.0]
    w = solve_layer_preimage(g3, 1, target)
    # B_1 = [[1, 0.5]]: minimal norm solution is 2 (1, 0.5)/1.25
    assert np.allclose(w[:2], [1.6, 0.8], atol=1e-14)


def test_preimage_errors(g1):
    with pytest.raises(ValueError):
        solve_layer_preimage(g1, 1, [1.0, 1.0])
    bs = BlockStructure((2, 2), (np.array([[1.0, 0.0], [0.0, 0.0]]),), strict=False)
    with pytest.raises(NoPreimageError):
        solve_layer_preimage(build_geometry(bs), 1, [0, 0, 0, 1.0])


def test_multiindex_order():
    m = MultiIndex((1, 2), k=1, layer_of=(0, 1))
    assert m.b_length == 1 + 6
    assert m.intrinsic_order == 9
    with pytest.raises(ValueError):
        MultiIndex((-1,))


def test_geometry_from_spec():
    g = geometry_from_spec([1, 1], [[[2.0]]])
    assert g.hom_dim == 6 and g.B[1, 0] == 2.0
