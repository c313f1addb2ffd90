import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from kinetic_spaces import fields
from kinetic_spaces.grid import sample, spec_for_field
from kinetic_spaces.norms import (
    HolderSampling, NormEvaluator, Quadrature, QuadratureOptions, apply_word, c_ps, full_norm_terms,
    holder_norm, holder_seminorm_x, lp_norm, multiindex_terms, norm_report, seminorm_terms, slobodeckij_sandwich,
    slobodeckij_y, sobolev_norm, sobolev_seminorm,
)
from kinetic_spaces.structure import langevin, matrix_exp

OPTS = QuadratureOptions(n=33)


def test_c_ps_hand_values():
    assert c_ps(2, 0.5) == pytest.approx(2.0)
    assert c_ps(1, 0.5) == pytest.approx(8.0)
    # (int_{|h|>1} 2|h|^{-1-ps} dh)^{1/p}
    p, s = 3.0, 0.5
    val = 2 * 2 * integrate.quad(lambda h: h ** (-1 - p * s), 1, np.inf)[0]
    assert c_ps(p, s) == pytest.approx(val ** (1 / p), rel=1e-10)


def test_lp_gaussian_closed_form(g1):
    a = [1.0, 0.7]
    u = fields.gaussian(g1, a, a_t=0.5, amplitude=2.0)
    for p in (1.0, 2.0, 3.5):
        exact = 2.0 * (np.prod([np.sqrt(np.pi / (p * c)) for c in (0.5, 1.0, 0.7)])) ** (1 / p)
        assert lp_norm(u, p, opts=QuadratureOptions(n=41)) == pytest.approx(exact, rel=1e-6)


def _overlap(g, A, h):
    # int u(e^{hY} z) u(z) dz for u = exp(-z^T A z): a Gaussian integral
    D = g.N + 1
    M = np.eye(D)
    M[1:, 1:] = matrix_exp(g, h)
    c = np.zeros(D)
    c[0] = h
    Q = M.T @ A @ M + A
    b = 2 * M.T @ A @ c
    return np.pi ** (D / 2) / np.sqrt(np.linalg.det(Q)) * np.exp(b @ np.linalg.solve(Q, b) / 4 - c @ A @ c)


@pytest.mark.parametrize("full", [False, True])
def test_slobodeckij_gaussian_oracle(g1, full):
    A = np.diag([0.8, 1.0, 0.6])
    u = fields.gaussian(g1, [1.0, 0.6], a_t=0.8)
    norm2 = _overlap(g1, A, 0.0)
    f = lambda h: (2 * norm2 - 2 * _overlap(g1, A, h)) / h ** 2
    top = np.inf if full else 1.0
    ref = 2 * integrate.quad(f, 0, top, epsabs=0, epsrel=1e-11, limit=200)[0]
    got = slobodeckij_y(u, 2.0, 0.5, g1, opts=QuadratureOptions(n=41), full=full)
    assert got == pytest.approx(np.sqrt(ref), rel=2e-3)


def test_sandwich(g1):
    u = fields.bump(g1, [1.0, 1.2, 1.2])
    chk = slobodeckij_sandwich(u, 2.0, 0.5, g1, opts=OPTS)
    assert chk.holds


def test_restricted_below_full(g1):
    u = fields.gaussian(g1, 1.0)
    r = slobodeckij_y(u, 2.0, 0.5, g1, opts=OPTS)
    f = slobodeckij_y(u, 2.0, 0.5, g1, opts=OPTS, full=True)
    assert r < f <= (r ** 2 + c_ps(2.0, 0.5) ** 2 * lp_norm(u, 2.0, opts=OPTS) ** 2) ** 0.5 * (1 + 1e-9)


def test_term_lists():
    # |u|_{1,p}: d_i u in L^p plus the Y Slobodeckij term
    assert sorted(seminorm_terms(1, 1)) == sorted([((0,), "lp"), ((), "slob")])
    t2 = seminorm_terms(2, 1)
    assert ((0, 0), "lp") in t2 and (("Y",), "lp") in t2
    assert len(full_norm_terms(1, 1)) == 3


def test_multiindex_terms(g1):
    terms = multiindex_terms(g1, 2)
    assert (1, (0, 0)) in terms and (0, (2, 0)) in terms
    assert all(2 * k + sum(b * w for b, w in zip(beta, g1.weights())) == 2 for k, beta in terms)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_forms_agree(g1, n):
    u = fields.gaussian(g1, 1.0)
    quad = Quadrature(u, OPTS)
    ev = NormEvaluator(u, 2.0, g1, quad, "restricted")
    a = sobolev_seminorm(u, n, 2.0, g1, "recursive", _ev=ev)
    b = sobolev_seminorm(u, n, 2.0, g1, "words", _ev=ev)
    c = sobolev_seminorm(u, n, 2.0, g1, "multiindex", _ev=ev)
    assert a == pytest.approx(b, rel=1e-13)
    assert 0.2 < c / a < 5


def test_apply_word_grid_vs_analytic(g1):
    u = fields.gaussian(g1, 1.0)
    gf = sample(u, spec_for_field(u, 81, pad=0.0), margin=4)
    P = gf.spec.points()
    inner = np.all(np.abs(P) < 2.5, axis=1)
    for word in ([0], ["Y"], [0, "Y"]):
        a = apply_word(u, word).evaluate(P)
        b = apply_word(gf, word).values.ravel()
        assert np.max(np.abs(a - b)[inner]) < 0.05 * np.max(np.abs(a))


@settings(max_examples=8, deadline=None)
@given(st.sampled_from([0.5, 0.75, 1.5, 2.0, 3.0]), st.sampled_from([1.5, 2.0, 4.0]), st.sampled_from([1, 2]))
def test_scaling_exact(lam, p, n):
    g = langevin(1)
    u = fields.bump(g, [1.0, 1.2, 1.2])
    v = u.dilate(lam)
    opts = QuadratureOptions(n=17, bands=10)
    D = g.hom_dim
    lp = lp_norm(v, p, opts=opts) / lp_norm(u, p, opts=opts)
    assert lp == pytest.approx(lam ** (-D / p), rel=1e-10)
    s0 = sobolev_seminorm(u, n, p, g, y_variant="full", opts=opts)
    s1 = sobolev_seminorm(v, n, p, g, y_variant="full", opts=opts)
    assert s1 / s0 == pytest.approx(lam ** (n - D / p), rel=1e-10)


def test_norm_variants(g1):
    u = fields.gaussian(g1, 1.0)
    quad = Quadrature(u, OPTS)
    ev = NormEvaluator(u, 2.0, g1, quad, "restricted")
    full = sobolev_norm(u, 2, 2.0, g1, "full", _ev=ev)
    triple = sobolev_norm(u, 2, 2.0, g1, "triple", _ev=ev)
    semi = sobolev_seminorm(u, 2, 2.0, g1, _ev=ev)
    assert full >= semi and triple == pytest.approx(ev.term((), "lp") + semi)
    with pytest.raises(ValueError):
        sobolev_norm(u, 0, 2.0, g1)
    with pytest.raises(ValueError):
        sobolev_norm(u, 1, 2.0, g1, "other")


def test_holder_linear_oracle(g1):
    # a function linear in x0 on the sampled box has unit Lipschitz quotient
    u = fields.bump(g1, [1.0, 1.0, 1.0])
    lin = fields.polynomial(g1, {(0, 1, 0): 1.0})
    lin.box = u.box
    q = holder_seminorm_x(lin, 0, 1.0, g1, HolderSampling(n=5, levels=3))
    assert q == pytest.approx(1.0, rel=1e-12)
    q_half = holder_seminorm_x(lin, 0, 0.5, g1, HolderSampling(n=5, levels=3))
    # sup |h|^{1/2} over the largest step
    assert q_half == pytest.approx(np.sqrt(2.0 * 1.5), rel=1e-12)


def test_holder_refinement_monotone(g1):
    u = fields.gaussian(g1, 1.0)
    hs = HolderSampling(n=9, levels=8)
    a = holder_norm(u, 0, 0.25, g1, hs)
    b = holder_norm(u, 0, 0.25, g1, hs.refine())
    assert b >= a - 1e-14
    assert b / a < 1.5
    assert holder_norm(u, 1, 0.5, g1, hs) > holder_norm(u, 0, 0.5, g1, hs) * 0.5
    with pytest.raises(ValueError):
        holder_norm(u, 0, 1.5, g1)


def test_norm_report(g1):
    u = fields.gaussian(g1, 1.0)
    rep = norm_report(u, 2.0, orders=(1,), g=g1, holder=[(0, 0.5)], opts=OPTS)
    csv = rep.to_csv().splitlines()
    assert csv[0] == "quantity,order,value"
    assert {r.split(",")[0] for r in csv[1:]} == {"lp", "slobodeckij_y", "seminorm", "sobolev", "triple", "holder"}
    assert "p = 2" in rep.to_text()
