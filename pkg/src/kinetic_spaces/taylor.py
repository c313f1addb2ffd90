"""
Group Taylor polynomials, remainder rates, the group mollifier and
horizontal chains.

The order-``n`` Taylor polynomial of ``u`` at ``zeta = (s, xi)`` is

    T_n u(zeta, z) = sum_{2k + <beta>_B <= n} (t - s)^k (x - e^{(t-s)B} xi)^beta / (k! beta!)
                     * Y^k d^beta u(zeta),

where ``beta`` runs over multi-indices on all ``N`` space coordinates and the
increment ``(t - s, x - e^{(t-s)B} xi)`` is ``zeta^{-1} o z``.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy import integrate

from .fields import bump_1d
from .fitting import fit_power_law
from .grid import (
    GridFunction, GridSpec, compose_points, compose_points_right_inverse, inverse_compose_points,
)
from .norms import Quadrature, QuadratureOptions, lp_norm, multiindex_terms, sobolev_norm
from .parallel import chunks, ordered_map, worker_count
from .structure import (
    GroupPoint, StructureError, check_hormander, dilation_factors, homogeneous_norm, invert, matrix_exp,
    solve_layer_preimage,
)


class MissingCoefficientError(KeyError):
    pass


def taylor_terms(g, n):
    """All ``(k, beta)`` with ``2k + <beta>_B <= n``, sorted by order."""
    out = []
    for m in range(n + 1):
        out += multiindex_terms(g, m)
    return out


def _factorial_weight(k, beta):
    w = factorial(k)
    for b in beta:
        w *= factorial(b)
    return 1.0 / w


def _monomials(terms, inc):
    """``(t-s)^k (x - ...)^beta`` for increments ``inc`` of shape ``(M, N+1)``."""
    inc = np.atleast_2d(inc)
    out = np.empty((inc.shape[0], len(terms)))
    for j, (k, beta) in enumerate(terms):
        v = inc[:, 0] ** k
        for i, b in enumerate(beta):
            if b:
                v = v * inc[:, i + 1] ** b
        out[:, j] = v * _factorial_weight(k, beta)
    return out


@dataclass(frozen=True)
class TaylorData:
    """Coefficients ``Y^k d^beta u(zeta)`` for all intrinsic orders ``<= n``."""

    base: GroupPoint
    order: int
    coefficients: dict

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("order must be non-negative")


def taylor_data(u, g, zeta, n):
    """Collect the Taylor coefficients of an analytic field at ``zeta``."""
    pt = zeta.as_array()[None, :]
    coeffs = {(k, beta): float(u.deriv(k, beta).evaluate(pt)[0]) for k, beta in taylor_terms(g, n)}
    return TaylorData(zeta, n, coeffs)


def taylor_eval(td, g, z):
    """``T_n u(zeta, z)`` from stored coefficients.

    Raises
    ------
    MissingCoefficientError
        If a coefficient of order ``<= n`` is absent.
    """
    terms = taylor_terms(g, td.order)
    missing = [t for t in terms if t not in td.coefficients]
    if missing:
        raise MissingCoefficientError(f"missing Taylor coefficient {missing[0]}")
    z = np.atleast_2d(z.as_array() if isinstance(z, GroupPoint) else np.asarray(z, dtype=float))
    base = np.broadcast_to(td.base.as_array(), z.shape)
    inc = inverse_compose_points(g, base, z)
    c = np.array([td.coefficients[t] for t in terms])
    vals = _monomials(terms, inc) @ c
    return float(vals[0]) if vals.size == 1 else vals


def taylor_eval_points(u, g, n, zetas, z):
    """Vectorised ``T_n u(zeta_j, z_j)`` for analytic ``u`` and paired arrays."""
    zetas = np.atleast_2d(zetas)
    z = np.atleast_2d(z)
    terms = taylor_terms(g, n)
    inc = inverse_compose_points(g, zetas, z)
    mono = _monomials(terms, inc)
    out = np.zeros(z.shape[0])
    for j, (k, beta) in enumerate(terms):
        out += mono[:, j] * u.deriv(k, beta).evaluate(zetas)
    return out


def taylor_remainder(u, g, n, p, zeta, quad=None, opts=QuadratureOptions(n=41)):
    """``|| u - T_n u(. o zeta, .) ||_p``.

    With base point ``z o zeta`` the increment ``(z o zeta)^{-1} o z`` is the
    constant ``zeta^{-1}``, so the polynomial weights are computed once.
    """
    zeta = np.asarray(zeta.as_array() if isinstance(zeta, GroupPoint) else zeta, dtype=float)
    quad = quad or Quadrature(u, opts)
    Z = quad.Z
    moved = compose_points(g, Z, zeta)
    terms = taylor_terms(g, n)
    zi = invert(g, GroupPoint(zeta[0], zeta[1:])).as_array()
    mono = _monomials(terms, zi[None, :])[0]
    approx = np.zeros(Z.shape[0])
    for c, (k, beta) in zip(mono, terms):
        if c != 0.0:
            approx += c * u.deriv(k, beta).evaluate(moved)
    diff = quad.values(u) - approx
    if np.isinf(p):
        return float(np.max(np.abs(diff)))
    return quad.integrate(np.abs(diff) ** p) ** (1.0 / p)


def dilate_array(g, lam, z):
    z = np.asarray(z, dtype=float)
    return np.concatenate([[lam ** 2 * z[0]], dilation_factors(g, lam) * z[1:]])


def taylor_remainder_rate(u, g, n, p, zeta0, sigmas, opts=QuadratureOptions(n=41)):
    """Fit the remainder against ``||D_sigma zeta0||_B`` over ``sigmas``.

    Returns
    -------
    ExponentFit
        The slope is expected to be at least ``n + 1``.
    """
    sigmas = np.asarray(sigmas, dtype=float)
    if np.unique(sigmas).size < 2:
        raise ValueError("degenerate family: need at least two distinct dilation parameters")
    zeta0 = np.asarray(zeta0.as_array() if isinstance(zeta0, GroupPoint) else zeta0, dtype=float)
    quad = Quadrature(u, opts)
    scales, vals = [], []
    for s in sigmas:
        z = dilate_array(g, s, zeta0)
        scales.append(homogeneous_norm(g, GroupPoint(z[0], z[1:])))
        vals.append(taylor_remainder(u, g, n, p, z, quad))
    return fit_power_law(scales, vals)


# ---------------------------------------------------------------------------
# mollifier


@lru_cache(maxsize=None)
def _bump_integral():
    val, _ = integrate.quad(lambda y: np.exp(-1.0 / (1.0 - y * y)), -1.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


class BumpKernel:
    """Product bump supported in the unit homogeneous ball.

    Each axis gets a budget ``R_a``: ``q^2`` for time and ``q^(2i+1)/sqrt(d_i)``
    for a coordinate of layer ``i`` with ``q = 1/(r+2)``, so the box
    ``prod [-R_a, R_a]`` lies in ``{||z||_B <= 1}``. The 1-D bumps sit on
    ``[-0.4 R_a, R_a]``; the shift makes the first moments non-zero, so
    the mollifier error is exactly first order for ``n = 1``.
    """

    def __init__(self, g, shift=0.3):
        if not 0 <= shift < 1:
            raise ValueError("shift must lie in [0, 1)")
        self.geometry = g
        q = 1.0 / (g.r + 2)
        R = [q ** 2]
        for i, di in enumerate(g.layer_dims):
            R += [q ** (2 * i + 1) / np.sqrt(di)] * di
        self.budget = np.array(R)
        self.center = shift * self.budget
        self.radius = (1.0 - shift) * self.budget
        self.normalization = float(np.prod(self.radius) * _bump_integral() ** len(R))

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        v = np.ones(pts.shape[0])
        for a in range(pts.shape[1]):
            v = v * bump_1d((pts[:, a] - self.center[a]) / self.radius[a])
        return v / self.normalization

    def box(self):
        return self.center - self.radius, self.center + self.radius

    def nodes(self, m=12):
        """Interior trapezoid nodes and weights renormalised to unit mass."""
        lo, hi = self.box()
        spec = GridSpec(tuple(lo), tuple(hi), (m + 2,) * len(lo))
        pts = spec.points()
        w = self(pts) * spec.cell_volume()
        keep = w > 0
        pts, w = pts[keep], w[keep]
        return pts, w / np.sum(w)

    def mass(self):
        """``int phi`` as a product of adaptive 1-D integrals of the scaled factors."""
        total = 1.0 / self.normalization
        for c, r in zip(self.center, self.radius):
            val, _ = integrate.quad(lambda y: float(bump_1d(np.array([(y - c) / r]))[0]), c - r, c + r,
                                    epsabs=0.0, epsrel=1e-13, limit=200)
            total *= val
        return total

    def mass_tensor(self, m=48):
        """Tensor trapezoid integral of the kernel with ``m`` nodes per axis."""
        lo, hi = self.box()
        spec = GridSpec(tuple(lo), tuple(hi), (m,) * len(lo))
        return float(np.dot(spec.weights(), self(spec.points())))


def padded_spec(u, n, margin):
    """Grid with ``n`` points across the support box and ``margin`` extra cells per side."""
    lo, hi = u.box()
    step = (hi - lo) / (n - 1)
    return GridSpec(tuple(lo - margin * step), tuple(hi + margin * step), (n + 2 * margin,) * len(lo))


def mollify(u, g, n, epsilon, bump=None, out_spec=None, nodes=8, margin=4, workers=None, tol=1e-12):
    """Group mollifier ``u_{n,eps}`` sampled on a grid.

    ``u_{n,eps}(z) = int T_{n-1}u(z o (D_eps eta)^{-1}, z) phi(eta) d eta``;
    the Taylor increment is ``D_eps eta`` for every ``z``. The ``eta``
    integral uses the kernel nodes in fixed order; output points are split
    across workers.

    Parameters
    ----------
    u : AnalyticField
    g : Geometry
    n : int
        Order, at least 1.
    epsilon : float
        Scale in ``(0, 1]``.
    out_spec : GridSpec, optional
        Defaults to 33 points across the support of ``u`` plus ``margin`` cells.
    margin : int
        Boundary cells required to be negligible; they are set to 0.

    Returns
    -------
    GridFunction
    """
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    if n < 1:
        raise ValueError("order must be at least 1")
    bump = bump or BumpKernel(g)
    out_spec = out_spec or padded_spec(u, 33, margin)
    eta, w = bump.nodes(nodes)
    terms = taylor_terms(g, n - 1)
    fields = [u.deriv(k, beta) for k, beta in terms]
    inc = np.array([dilate_array(g, epsilon, e) for e in eta])
    mono = _monomials(terms, inc) * w[:, None]
    Z = out_spec.points()

    def run(sl):
        Zc = Z[sl]
        acc = np.zeros(Zc.shape[0])
        for j in range(inc.shape[0]):
            base = compose_points_right_inverse(g, Zc, inc[j])
            for c, f in zip(mono[j], fields):
                if c != 0.0:
                    acc += c * f.evaluate(base)
        return acc

    nw = worker_count() if workers is None else workers
    parts = ordered_map(run, chunks(Z.shape[0], nw), nw)
    vals = np.concatenate(parts).reshape(out_spec.shape)
    if margin > 0:
        band = np.ones(out_spec.shape, dtype=bool)
        band[tuple(slice(margin, c - margin) for c in out_spec.shape)] = False
        peak = float(np.max(np.abs(vals))) if vals.size else 0.0
        if peak > 0 and np.max(np.abs(vals[band])) > tol * peak:
            raise ValueError("mollified function does not vanish on the grid margin")
        vals = np.where(band, 0.0, vals)
    return GridFunction(out_spec, vals, margin, g)


DEFAULT_EPS_GRID = tuple(np.geomspace(0.05, 0.8, 8).tolist())


def mollify_rate(u, g, n, p, eps_grid=DEFAULT_EPS_GRID, drop=2, **kw):
    """Fit ``||u - u_{n,eps}||_p`` against ``eps``, discarding the ``drop`` largest scales."""
    eps = np.sort(np.asarray(eps_grid, dtype=float))
    if np.unique(eps).size - drop < 2:
        raise ValueError("degenerate family: too few scales after discarding")
    vals = []
    for e in eps:
        ue = mollify(u, g, n, float(e), **kw)
        diff = u.evaluate(ue.spec.points()) - np.ravel(ue.values)
        vals.append(float(np.dot(ue.spec.weights(), np.abs(diff) ** p)) ** (1.0 / p))
    used = np.arange(eps.size) < eps.size - drop
    return fit_power_law(eps, vals, used)


def mollify_inverse_rate(u, g, n, m, p, eps_grid=DEFAULT_EPS_GRID, drop=2, opts=QuadratureOptions(), **kw):
    """Fit ``||u_{n,eps}||_{W^{m,p}_B}`` against ``eps`` (grid derivatives).

    The slope is expected to be at least ``n - m``.
    """
    if m <= n:
        raise ValueError("need m > n")
    eps = np.sort(np.asarray(eps_grid, dtype=float))
    kw.setdefault("margin", m + 2)
    vals = []
    for e in eps:
        ue = mollify(u, g, n, float(e), **kw)
        vals.append(sobolev_norm(ue, m, p, g, opts=opts))
    used = np.arange(eps.size) < eps.size - drop
    if used.sum() < 2:
        used[:] = True
    return fit_power_law(eps, vals, used)


# ---------------------------------------------------------------------------
# horizontal chains


@dataclass(frozen=True)
class ChainSegment:
    """Flow of ``<v, grad_x>`` (``kind="d"``) or of ``Y`` (``kind="Y"``) for time ``delta``."""

    kind: str
    delta: float
    vector: tuple = ()


@dataclass(frozen=True)
class ChainPath:
    start: GroupPoint
    end: GroupPoint
    segments: tuple
    deltas: tuple
    ratio: float

    def endpoint(self, g):
        return apply_segments(g, self.segments, self.start)


def gamma_segments(k, v, delta):
    """Segments of ``gamma^(k)_{v,delta}``: ``gamma^(k-1)_delta``, ``Y`` for ``delta^2``,
    ``gamma^(k-1)_{-delta}``, ``Y`` for ``-delta^2``."""
    if k == 0:
        return [ChainSegment("d", float(delta), tuple(np.asarray(v, dtype=float).tolist()))]
    return (gamma_segments(k - 1, v, delta) + [ChainSegment("Y", float(delta) ** 2)]
            + gamma_segments(k - 1, v, -delta) + [ChainSegment("Y", -float(delta) ** 2)])


def apply_segments(g, segments, z):
    t, x = float(z.t), np.array(z.x, dtype=float)
    for seg in segments:
        if seg.kind == "Y":
            x = matrix_exp(g, seg.delta) @ x
            t += seg.delta
        else:
            x = x + seg.delta * np.array(seg.vector)
    return GroupPoint(t, x)


def chain_displacement(g, k, v, delta):
    """``S_k(delta) v``: the space displacement of ``gamma^(k)_{v,delta}``."""
    z = apply_segments(g, gamma_segments(k, v, delta), GroupPoint(0.0, np.zeros(g.N)))
    return z.x


def connect_chain(g, z, xi):
    """Chain of ``d``- and ``Y``-flows from ``z`` to ``z o (0, xi)``.

    Step ``k`` corrects layer ``k`` with ``gamma^(k)_{v_k,delta_k}``, where
    ``w_k`` is the minimal-norm layer-0 preimage of the remaining layer-``k``
    displacement under ``B^k``, ``delta_k = |w_k|^(1/(2k+1))`` and
    ``v_k = w_k/|w_k|``. Each ``gamma^(k)`` moves only layers ``>= k``.

    Raises
    ------
    StructureError
        If the rank condition fails.
    """
    if not check_hormander(g).hormander:
        raise StructureError("Hormander condition fails; no horizontal chain exists")
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape[0] != g.N:
        raise ValueError("xi must have length N")
    segments, deltas = [], []
    moved = np.zeros(g.N)
    for k in range(g.r + 1):
        sl = g.layer_slice(k)
        target = np.zeros(g.N)
        target[sl] = xi[sl] - moved[sl]
        if np.linalg.norm(target[sl]) <= 1e-15 * max(1.0, np.linalg.norm(xi)):
            deltas.append(0.0)
            continue
        w = solve_layer_preimage(g, k, target)
        size = float(np.linalg.norm(w))
        delta = size ** (1.0 / (2 * k + 1))
        v = w / size
        segs = gamma_segments(k, v, delta)
        segments += segs
        moved = moved + chain_displacement(g, k, v, delta)
        deltas.append(delta)
    xnorm = homogeneous_norm(g, GroupPoint(0.0, xi)) if np.any(xi) else 0.0
    ratio = max(deltas) / xnorm if xnorm > 0 else 0.0
    start = GroupPoint(float(z.t), np.array(z.x, dtype=float))
    end = GroupPoint(float(z.t), np.array(z.x, dtype=float) + xi)
    return ChainPath(start, end, tuple(segments), tuple(deltas), ratio)


def chain_constant(g, samples=400, seed=0):
    """Empirical ``c_B = max delta_k / |xi|_B`` over random directions.

    The ratio is invariant under dilations of ``xi``, so directions on the
    unit sphere suffice.
    """
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        xi = rng.standard_normal(g.N)
        best = max(best, connect_chain(g, GroupPoint(0.0, np.zeros(g.N)), xi).ratio)
    return best

