"""
Distribution functions, decreasing rearrangements, Lorentz quasi-norms,
level sequences, truncations and K-functional upper bounds.

A :class:`Rearrangement` is the step-function form of ``u*`` built from
sampled values and their cell measures: distinct levels
``L_1 > L_2 > ... > L_K > 0`` and cumulative measures
``M_j = Leb(|u| >= L_j)``. On ``[M_{j-1}, M_j)`` the rearrangement equals
``L_j`` and it vanishes beyond ``M_K``. All Lorentz integrals are then
closed-form sums over the steps.
"""

from dataclasses import dataclass
from math import gamma, pi

import numpy as np
from scipy import integrate

from .fields import AnalyticField, ComposedField
from .grid import GridFunction
from .norms import Quadrature, QuadratureOptions, lp_norm, sobolev_seminorm, sobolev_norm


@dataclass(frozen=True)
class Rearrangement:
    """Step-function rearrangement.

    Attributes
    ----------
    levels : ndarray
        Distinct positive values of ``|u|``, strictly decreasing.
    measures : ndarray
        ``measures[j] = Leb(|u| >= levels[j])``, strictly increasing.
    cell : float
        Smallest cell measure of the source sample (0 for exact data).
    """

    levels: np.ndarray
    measures: np.ndarray
    cell: float = 0.0

    @property
    def total(self):
        return float(self.measures[-1]) if self.measures.size else 0.0

    @property
    def sup(self):
        return float(self.levels[0]) if self.levels.size else 0.0

    def widths(self):
        return np.diff(np.concatenate([[0.0], self.measures]))

    def mu(self, lam):
        """``Leb(|u| > lam)`` (right-continuous, non-increasing)."""
        lam = np.asarray(lam, dtype=float)
        # number of levels strictly above lam
        j = np.searchsorted(-self.levels, -lam, side="left")
        m = np.concatenate([[0.0], self.measures])
        return m[j]

    def mu_left(self, lam):
        """``Leb(|u| >= lam)``, the left limit of ``mu`` at ``lam`` (infinite at 0)."""
        lam = np.asarray(lam, dtype=float)
        j = np.searchsorted(-self.levels, -lam, side="right")
        m = np.concatenate([[0.0], self.measures])
        return np.where(lam <= 0, np.inf, m[j])

    def ustar(self, t):
        """``u*(t) = inf {lam >= 0 : mu(lam) <= t}`` (right-continuous)."""
        t = np.asarray(t, dtype=float)
        j = np.searchsorted(self.measures, t, side="right")
        lv = np.concatenate([self.levels, [0.0]])
        return lv[j]

    def ustar_left(self, t):
        """Left limit ``u*(t-)``; ``u*(0-)`` is taken as ``u*(0)``."""
        t = np.asarray(t, dtype=float)
        j = np.searchsorted(self.measures, t, side="left")
        lv = np.concatenate([self.levels, [0.0]])
        return np.where(t <= 0, self.sup, lv[j])

    def lp_norm(self, p):
        if np.isinf(p):
            return self.sup
        return float(np.dot(self.widths(), self.levels ** p)) ** (1.0 / p)


def rearrange_values(values, weights, cell=None):
    """Rearrangement of samples ``values`` carrying measures ``weights``.

    Sorting is stable by sample index, so ties resolve deterministically.
    """
    v = np.abs(np.ravel(np.asarray(values, dtype=float)))
    w = np.ravel(np.asarray(weights, dtype=float))
    if v.shape != w.shape:
        raise ValueError("values and weights differ in size")
    if np.any(w < 0):
        raise ValueError("measures must be non-negative")
    keep = (v > 0) & (w > 0)
    v, w = v[keep], w[keep]
    if v.size == 0:
        return Rearrangement(np.zeros(0), np.zeros(0), float(cell or 0.0))
    order = np.argsort(-v, kind="stable")
    v, w = v[order], w[order]
    cum = np.cumsum(w)
    last = np.r_[v[1:] != v[:-1], True]
    return Rearrangement(v[last].copy(), cum[last].copy(), float(cell if cell is not None else w.min()))


def rearrange(u, spec=None, opts=QuadratureOptions()):
    """Rearrangement of a grid function or of an analytic field sampled on a grid.

    Cell measures are the trapezoidal weights, so ``||u*||_p`` matches the
    trapezoidal ``||u||_p`` of the same samples.
    """
    if isinstance(u, GridFunction):
        return rearrange_values(u.values, u.spec.weights(), u.spec.cell_volume())
    quad = Quadrature(u, opts, spec)
    return rearrange_values(quad.values(u), quad.W, quad.spec.cell_volume())


def step_rearrangement(levels, measures):
    """Rearrangement from explicit steps (``levels`` decreasing, ``measures`` increasing)."""
    levels = np.asarray(levels, dtype=float)
    measures = np.asarray(measures, dtype=float)
    if np.any(np.diff(levels) >= 0) or np.any(np.diff(measures) <= 0) or np.any(levels <= 0):
        raise ValueError("levels must be positive and strictly decreasing, measures strictly increasing")
    return Rearrangement(levels, measures, 0.0)


def lorentz_norm(r, p, q):
    """``||u||_{L^{p,q}} = || t^(1/p) u*(t) ||_{L^q(dt/t)}`` on a step rearrangement.

    Each step contributes ``L_j^q (p/q) (M_j^(q/p) - M_{j-1}^(q/p))``; for
    ``q = inf`` the value is ``max_j L_j M_j^(1/p)``.

    Raises
    ------
    ValueError
        If ``p < 1`` or ``q < 1``.
    """
    if p < 1 or q < 1:
        raise ValueError("need p >= 1 and q >= 1")
    if r.levels.size == 0:
        return 0.0
    if np.isinf(p):
        return r.sup
    M = r.measures
    if np.isinf(q):
        return float(np.max(r.levels * M ** (1.0 / p)))
    if q == p:
        return r.lp_norm(p)
    Mq = M ** (q / p)
    steps = np.diff(np.concatenate([[0.0], Mq]))
    return float((p / q) * np.dot(r.levels ** q, steps)) ** (1.0 / q)


def nesting_constant(p, q1, q2):
    """Constant ``c`` in ``||u||_{L^{p,q2}} <= c ||u||_{L^{p,q1}}`` for ``q1 <= q2``.

    From ``t^(1/p) u*(t) <= (q1/p)^(1/q1) ||u||_{L^{p,q1}}`` and Hoelder,
    ``c = max(1, (q1/p)^(1/q1 - 1/q2))``.
    """
    inv2 = 0.0 if np.isinf(q2) else 1.0 / q2
    return max(1.0, (q1 / p) ** (1.0 / q1 - inv2))


# ---------------------------------------------------------------------------
# closed-form rearrangements


def ball_volume(D):
    return pi ** (D / 2) / gamma(D / 2 + 1)


@dataclass(frozen=True)
class GaussianLevels:
    """Exact distribution of ``A exp(-sum a_i y_i^2)`` on ``R^D``.

    ``{u > lam}`` is an ellipsoid, so
    ``mu(lam) = V_D log(A/lam)^(D/2) / sqrt(prod a)`` and
    ``u*(t) = A exp(-(t sqrt(prod a) / V_D)^(2/D))``.
    """

    amplitude: float
    coeffs: tuple

    @property
    def D(self):
        return len(self.coeffs)

    def _scale(self):
        return ball_volume(self.D) / np.sqrt(np.prod(self.coeffs))

    def mu(self, lam):
        lam = np.asarray(lam, dtype=float)
        with np.errstate(divide="ignore"):
            arg = np.log(self.amplitude / np.maximum(lam, 1e-300))
        return np.where(lam < self.amplitude, self._scale() * np.maximum(arg, 0) ** (self.D / 2), 0.0)

    def ustar(self, t):
        t = np.asarray(t, dtype=float)
        return self.amplitude * np.exp(-(t / self._scale()) ** (2.0 / self.D))

    ustar_left = ustar

    def lp_norm(self, p):
        return self.amplitude * (np.pi ** (self.D / 2) / np.sqrt(np.prod(self.coeffs)) / p ** (self.D / 2)) ** (1.0 / p)

    def lorentz_norm(self, p, q):
        """Adaptive quadrature of the defining integral (closed form for ``q = inf``).

        For ``q = inf`` the maximiser of ``t^(1/p) u*(t)`` solves
        ``(t/S)^(2/D) = D/(2p)`` with ``S = V_D / sqrt(prod a)``.
        """
        if np.isinf(q):
            t = self._scale() * (self.D / (2 * p)) ** (self.D / 2)
            return float(self.amplitude * t ** (1 / p) * np.exp(-self.D / (2 * p)))
        f = lambda s: (np.exp(s / p) * float(self.ustar(np.exp(s)))) ** q
        val, _ = integrate.quad(f, -200, 60, limit=500, epsabs=0, epsrel=1e-12)
        return val ** (1.0 / q)


def gaussian_levels(u):
    """Closed-form levels for a field built by :func:`fields.gaussian` with centre 0 coefficients."""
    from .fields import GaussianFactor, ProductField
    if not isinstance(u, ProductField) or len(u.terms) != 1:
        raise ValueError("expected a single-term Gaussian product field")
    (mono, orders), coef = next(iter(u.terms.items()))
    if any(mono) or any(orders) or not all(isinstance(f, GaussianFactor) for f in u.factors):
        raise ValueError("expected a pure Gaussian product field")
    return GaussianLevels(abs(coef), tuple(f.a for f in u.factors))


# ---------------------------------------------------------------------------
# level sequences


@dataclass(frozen=True)
class TartarSequence:
    """Levels ``a_k = u*(e^k)`` on a window ``k_min..k_max`` (plus ``a_{k_max+1}``).

    ``levels[i]`` is ``a_{k_min + i}`` for ``i = 0..len(ks)``.
    """

    ks: tuple
    levels: np.ndarray
    upper: np.ndarray
    clipped: str = ""

    def a(self, k):
        i = k - self.ks[0]
        if not 0 <= i <= len(self.ks):
            raise IndexError(f"k={k} outside the window {self.ks[0]}..{self.ks[-1]}")
        return float(self.levels[i])

    @property
    def gaps(self):
        return self.levels[:-1] - self.levels[1:]

    def scaled_gaps(self, pstar):
        """``e^(k/p*) (a_k - a_{k+1})``; ``pstar = inf`` gives the plain gaps."""
        k = np.array(self.ks, dtype=float)
        return np.exp(k / pstar) * self.gaps if np.isfinite(pstar) else self.gaps.copy()

    def to_csv(self, pstar):
        lines = ["k,a_k,gap,scaled_gap"]
        for k, a, gp, sg in zip(self.ks, self.levels, self.gaps, self.scaled_gaps(pstar)):
            lines.append(f"{k},{a:.12g},{gp:.12g},{sg:.12g}")
        return "\n".join(lines) + "\n"


def tartar_sequence(r, k_window=(-40, 40), min_cells=50, floor=0.0):
    """Levels ``a_k = u*(e^k)`` with the bracketing ``u*(e^k) <= a_k <= u*(e^k-)``.

    The window is clipped to ``k`` with ``a_k > floor`` (and ``a_k > 0``),
    and, for sampled data, to ``e^k >= min_cells`` cell measures, below
    which ``u*`` only sees the top few samples.

    Raises
    ------
    ValueError
        If the clipped window is empty or the bracketing fails.
    """
    k0, k1 = int(k_window[0]), int(k_window[1])
    ks = np.arange(k0, k1 + 1)
    a = np.asarray(r.ustar(np.exp(ks.astype(float))), dtype=float)
    ok = a > max(floor, 0.0)
    cell = getattr(r, "cell", 0.0)
    notes = []
    if cell > 0:
        ok &= np.exp(ks) >= min_cells * cell
    if not np.all(ok):
        notes.append("clipped")
    ks = ks[ok]
    if ks.size == 0:
        raise ValueError("empty k window after clipping")
    ks = np.arange(ks[0], ks[-1] + 1)
    full = np.arange(ks[0], ks[-1] + 2).astype(float)
    levels = np.asarray(r.ustar(np.exp(full)), dtype=float)
    upper = np.asarray(r.ustar_left(np.exp(full)), dtype=float)
    if np.any(np.diff(levels) > 0):
        raise ValueError("level sequence is not non-increasing")
    if np.any(levels > upper * (1 + 1e-15)):
        raise ValueError("bracketing u*(e^k) <= a_k <= u*(e^k-) fails")
    return TartarSequence(tuple(int(k) for k in ks), levels, upper, ",".join(notes))


def check_level_measures(r, ts):
    """``mu(a_k) <= e^k <= mu(a_k-) <= mu(a_{k+1})`` for every ``k`` in the window."""
    ks = np.array(ts.ks, dtype=float)
    a = ts.levels[:-1]
    a_next = ts.levels[1:]
    e = np.exp(ks)
    first = r.mu(a) <= e * (1 + 1e-12)
    second = e <= r.mu_left(a) * (1 + 1e-12)
    # with a_{k+1} < a_k, {|u| >= a_k} is inside {|u| > a_{k+1}}; equal levels carry no condition
    third = (a_next >= a) | (r.mu_left(a) <= r.mu(a_next) * (1 + 1e-12))
    return bool(np.all(first & second & third))


def lorentz_from_levels(ts, p, q, gaps=False):
    """Partial ``l^q`` norm of ``e^(k/p) a_k`` (or of the gaps) over the window."""
    k = np.array(ts.ks, dtype=float)
    seq = np.exp(k / p) * (ts.gaps if gaps else ts.levels[:-1])
    if np.isinf(q):
        return float(np.max(seq))
    return float(np.sum(seq ** q)) ** (1.0 / q)


# ---------------------------------------------------------------------------
# truncations


@dataclass(frozen=True)
class Truncation:
    """``phi(v) = min(max(|v| - lo, 0), hi - lo)`` with ``lo = a_{k+1}``, ``hi = a_k``."""

    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi or self.lo < 0:
            raise ValueError("need 0 <= a_{k+1} <= a_k")

    def __call__(self, v):
        return np.clip(np.abs(v) - self.lo, 0.0, self.hi - self.lo)

    def derivative(self, v):
        """``phi'(v) = sign(v)`` on ``lo < |v| < hi``, 0 elsewhere."""
        v = np.asarray(v, dtype=float)
        a = np.abs(v)
        return np.where((a > self.lo) & (a < self.hi), np.sign(v), 0.0)


def truncation(ts, k):
    if k not in ts.ks:
        raise IndexError(f"k={k} outside the window {ts.ks[0]}..{ts.ks[-1]}")
    return Truncation(ts.a(k + 1), ts.a(k))


class TruncatedField(ComposedField):
    """``phi_k(u)`` for an analytic ``u``; the support box can be supplied."""

    def __init__(self, inner, phi, box=None):
        super().__init__(inner, phi, phi.derivative)
        self.phi = phi
        self._tbox = box

    def box(self):
        return self._tbox if self._tbox is not None else self.inner.box()


def truncate(u, ts, k, box=None):
    """``phi_k(u)`` as a grid function or a composed analytic field.

    Raises
    ------
    IndexError
        If ``k`` is outside the window.
    """
    phi = truncation(ts, k)
    if isinstance(u, GridFunction):
        return u.with_values(phi(u.values))
    return TruncatedField(u, phi, box)


def telescoped(v, ts):
    """``sum_{k in window} phi_k(v) = clip(|v|, a_{k_max+1}, a_{k_min}) - a_{k_max+1}``."""
    top, bottom = ts.levels[0], ts.levels[-1]
    return np.clip(np.abs(v), bottom, top) - bottom


def gaussian_level_box(levels, lam):
    """Box of ``{u >= lam}`` for exact Gaussian levels."""
    if lam <= 0 or lam >= levels.amplitude:
        raise ValueError("level outside (0, amplitude)")
    rad = np.sqrt(np.log(levels.amplitude / lam) / np.array(levels.coeffs))
    return -rad, rad


# ---------------------------------------------------------------------------
# K-functional


@dataclass(frozen=True)
class KCurve:
    """Upper bound for ``K(t, u)`` from mollifier decompositions.

    ``values[i] = min_eps (A_eps + t_i B_eps)`` over the candidate
    decompositions ``u = (u - u_eps) + u_eps``, together with the trivial
    ones ``(u, 0)`` and ``(0, u)``. A minimum of affine functions of ``t``
    is concave and non-decreasing.
    """

    ts: tuple
    values: tuple
    label: str = "mollifier upper bound"

    def to_csv(self):
        lines = [f"t,K  # {self.label}"]
        lines += [f"{t:.12g},{v:.12g}" for t, v in zip(self.ts, self.values)]
        return "\n".join(lines) + "\n"


def k_functional(u, p, g=None, pair="Lp-Linf", t_grid=None, eps_grid=None, m=2, n=1, opts=QuadratureOptions(), **kw):
    """Mollifier upper bound for ``K(t, u; Z1, Z2)``.

    Parameters
    ----------
    pair : {"Lp-Linf", "Lp-Wm"}
        ``(L^p, L^inf)`` or ``(L^p, W^{m,p}_B)``.

    Raises
    ------
    ValueError
        On an empty ``t`` grid or unknown pair.
    """
    from .taylor import mollify
    g = g or u.geometry
    if t_grid is None or len(t_grid) == 0:
        raise ValueError("empty t grid")
    if pair not in ("Lp-Linf", "Lp-Wm"):
        raise ValueError(f"unknown pair {pair!r}")
    eps_grid = eps_grid if eps_grid is not None else np.geomspace(0.05, 1.0, 8)
    cands = []
    quad = Quadrature(u, opts)
    z1 = lp_norm(u, p, quad)
    z2 = lp_norm(u, np.inf, quad) if pair == "Lp-Linf" else sobolev_norm(u, m, p, g, quad=quad)
    cands += [(z1, 0.0), (0.0, z2)]
    if np.all(np.abs(quad.values(u)) == 0):
        return KCurve(tuple(float(t) for t in t_grid), tuple(0.0 for _ in t_grid))
    kw.setdefault("margin", m + 2)
    for e in eps_grid:
        ue = mollify(u, g, n, float(e), **kw)
        diff = u.evaluate(ue.spec.points()) - np.ravel(ue.values)
        a = float(np.dot(ue.spec.weights(), np.abs(diff) ** p)) ** (1.0 / p)
        b = float(np.max(np.abs(ue.values))) if pair == "Lp-Linf" else sobolev_norm(ue, m, p, g, opts=opts)
        cands.append((a, b))
    A = np.array([c[0] for c in cands])
    Bv = np.array([c[1] for c in cands])
    vals = [float(np.min(A + t * Bv)) for t in t_grid]
    return KCurve(tuple(float(t) for t in t_grid), tuple(vals))


def bound_family_curve(hom_dim, p, t_grid, eps=None):
    """``min_eps (eps + t eps^(-d/p))``: the decomposition bound behind the crude embedding.

    Its log-log slope in ``t`` tends to ``p/(d + p)`` as ``t -> 0``.
    """
    eps = np.geomspace(1e-8, 1e2, 4001) if eps is None else np.asarray(eps)
    t = np.asarray(t_grid, dtype=float)
    vals = np.min(eps[None, :] + t[:, None] * eps[None, :] ** (-hom_dim / p), axis=1)
    return vals


def is_concave_nondecreasing(ts, vals, tol=1e-12):
    ts = np.asarray(ts, dtype=float)
    v = np.asarray(vals, dtype=float)
    if np.any(np.diff(v) < -tol * max(1.0, np.max(np.abs(v)))):
        return False
    if ts.size < 3:
        return True
    slopes = np.diff(v) / np.diff(ts)
    return bool(np.all(np.diff(slopes) <= tol * max(1.0, np.max(np.abs(slopes)))))


def synthetic_tail(kind, p, ks):
    """Step rearrangement with prescribed tail ``b_k = e^(k/p) a_k`` for ``k >= 1``.

    ``kind="convergent"`` uses ``b_k = 1/k`` (in ``l^2``), ``"divergent"``
    uses ``b_k = 1/sqrt(k)`` (not in ``l^2``). ``u*`` equals ``a_k`` on
    ``[e^(k-1), e^k)``.

    Returns
    -------
    (Rearrangement, ndarray)
        The step data and the levels ``a_k``.
    """
    ks = np.asarray(ks, dtype=int)
    if np.any(ks < 1):
        raise ValueError("synthetic tails use k >= 1")
    if kind == "convergent":
        b = 1.0 / ks
    elif kind == "divergent":
        b = 1.0 / np.sqrt(ks)
    else:
        raise ValueError("kind must be 'convergent' or 'divergent'")
    a = b * np.exp(-ks / p)
    return step_rearrangement(a, np.exp(ks.astype(float))), a


def tail_partial_sums(kind, p, q, K):
    """``(K, ||u_K||_{L^{p,q}}^q, sum_{k<=K} (e^(k/p) a_k)^q)`` for truncations ``u_K`` of the tail."""
    out = []
    for k in range(2, K + 1):
        r, a = synthetic_tail(kind, p, np.arange(1, k + 1))
        out.append((k, lorentz_norm(r, p, q) ** q, float(np.sum((np.exp(np.arange(1, k + 1) / p) * a) ** q))))
    return out
