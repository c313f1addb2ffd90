"""
Intrinsic quasi-norms: L^p, fractional Slobodeckij along ``Y``, intrinsic
Sobolev seminorms and norms, intrinsic Hoelder norms.

All integrals are tensor trapezoidal sums over a grid covering the
support box of the function. The ``h`` integral of the Slobodeckij
seminorm runs over dyadic bands ``[2^-(j+1), 2^-j]`` (both signs) with
Gauss-Legendre nodes inside each band. Points ``z`` with ``e^{hY} z``
outside the box contribute ``|u(z)|^p`` through the measure preserving
substitution ``w = e^{hY} z``, so the ``z`` grid never has to grow with
``h``.

The first-layer gradient norm is the sum of the coordinate norms,
``||grad_d u||_p = sum_i ||d_i u||_p``.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import backend
from .fields import AnalyticField
from .grid import GridFunction, flow_y_points, grid_d, grid_y, spec_for_field


def c_ps(p, s):
    """Sandwich constant ``(int_{|h|>1} 2 |h|^(-1-ps) dh)^(1/p) = (4/(ps))^(1/p)``."""
    return (4.0 / (p * s)) ** (1.0 / p)


@dataclass(frozen=True)
class QuadratureOptions:
    """Resolution knobs shared by the norm routines.

    Attributes
    ----------
    n : int
        Grid points per axis for analytic fields.
    bands : int
        Number of dyadic ``h`` bands for the restricted seminorm.
    band_nodes : int
        Gauss-Legendre nodes per band (1 gives the midpoint rule).
    extra_bands : int
        Additional bands for the unrestricted seminorm, whose top band
        starts at the time extent of the support.
    """

    n: int = 41
    bands: int = 20
    band_nodes: int = 3
    extra_bands: int = 4

    def refine(self):
        return QuadratureOptions(2 * self.n - 1, self.bands + 4, self.band_nodes + 1, self.extra_bands)


DEFAULT_OPTIONS = QuadratureOptions()


class Quadrature:
    """Integration grid for one function and its derivatives."""

    def __init__(self, u, opts=DEFAULT_OPTIONS, spec=None):
        if isinstance(u, GridFunction):
            spec = u.spec
        elif spec is None:
            spec = spec_for_field(u, opts.n)
        self.spec = spec
        self.Z = spec.points()
        self.W = spec.weights()
        self.lo = np.array(spec.lo)
        self.hi = np.array(spec.hi)
        self.opts = opts
        self._cache = {}

    def values(self, f):
        if isinstance(f, GridFunction) and f.spec == self.spec:
            return np.ravel(f.values)
        key = id(f)
        hit = self._cache.get(key)
        if hit is not None and hit[0] is f:
            return hit[1]
        v = np.asarray(f.evaluate(self.Z), dtype=float)
        self._cache[key] = (f, v)
        return v

    def inside(self, pts):
        # points on a face up to rounding count as inside, so that the
        # decision is invariant under dilations of the box
        slack = 1e-9 * (self.hi - self.lo)
        return np.all((pts >= self.lo - slack) & (pts <= self.hi + slack), axis=1)

    def integrate(self, vals):
        return float(np.dot(self.W, vals))


def lp_norm(u, p, quad=None, opts=DEFAULT_OPTIONS):
    """``(int |u|^p)^(1/p)``; ``p = inf`` gives the sampled sup.

    Raises
    ------
    ValueError
        If ``p < 1``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    quad = quad or Quadrature(u, opts)
    v = quad.values(u)
    if np.isinf(p):
        return float(np.max(np.abs(v))) if v.size else 0.0
    return quad.integrate(np.abs(v) ** p) ** (1.0 / p)


@lru_cache(maxsize=None)
def _band_rule(top, bands, nodes):
    """Nodes and weights on ``[top 2^-bands, top]`` split dyadically."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    hs, ws = [], []
    for j in range(bands):
        a, b = top * 2.0 ** -(j + 1), top * 2.0 ** -j
        hs.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(hs), np.concatenate(ws)


def _flow_difference_integral(u, g, p, h, quad, base):
    """``int |u(e^{hY} z) - u(z)|^p dz`` over all of ``R^(N+1)``."""
    moved = flow_y_points(g, quad.Z, h)
    vals = np.asarray(u.evaluate(moved), dtype=float)
    part = backend.weighted_pow_diff(vals, base, quad.W, float(p))
    back = flow_y_points(g, quad.Z, -h)
    outside = ~quad.inside(back)
    if np.any(outside):
        part += float(np.dot(quad.W[outside], np.abs(base[outside]) ** p))
    return part


def slobodeckij_y(u, p, s=0.5, g=None, quad=None, opts=DEFAULT_OPTIONS, full=False):
    """Fractional seminorm along ``Y``.

    Parameters
    ----------
    u : AnalyticField or GridFunction
    p : float
    s : float
        Order in ``(0, 1)``.
    g : Geometry, optional
        Defaults to ``u.geometry``.
    full : bool
        ``False`` integrates ``|h| <= 1`` (the defining seminorm);
        ``True`` integrates over all ``h``, the top band starting at the
        time extent ``H`` of the support and the tail ``|h| > H`` added in
        closed form as ``2 ||u||_p^p * 2 H^(-ps)/(ps)`` (supports of
        ``u`` and ``u(e^{hY} .)`` are disjoint there).

    Returns
    -------
    float
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    if p < 1:
        raise ValueError("p must be >= 1")
    g = g or u.geometry
    quad = quad or Quadrature(u, opts)
    base = quad.values(u)
    if full:
        top = float(quad.hi[0] - quad.lo[0])
        hs, ws = _band_rule(top, quad.opts.bands + quad.opts.extra_bands, quad.opts.band_nodes)
    else:
        top = 1.0
        hs, ws = _band_rule(1.0, quad.opts.bands, quad.opts.band_nodes)
    total = 0.0
    for h, w in zip(hs, ws):
        kern = w / h ** (p * s + 1)
        total += kern * (_flow_difference_integral(u, g, p, h, quad, base)
                         + _flow_difference_integral(u, g, p, -h, quad, base))
    if full:
        total += 2 * quad.integrate(np.abs(base) ** p) * 2 * top ** (-p * s) / (p * s)
    return total ** (1.0 / p)


@dataclass(frozen=True)
class SandwichCheck:
    restricted: float
    unrestricted: float
    upper: float
    c_ps: float

    @property
    def holds(self):
        return self.restricted <= self.unrestricted * (1 + 1e-9) and self.unrestricted <= self.upper * (1 + 1e-9)


def slobodeckij_sandwich(u, p, s=0.5, g=None, opts=DEFAULT_OPTIONS):
    """``[u] <= floor(u) <= [u] + c_{p,s} ||u||_p`` evaluated numerically."""
    quad = Quadrature(u, opts)
    r = slobodeckij_y(u, p, s, g, quad)
    f = slobodeckij_y(u, p, s, g, quad, full=True)
    c = c_ps(p, s)
    return SandwichCheck(r, f, r + c * lp_norm(u, p, quad), c)


# ---------------------------------------------------------------------------
# derivative words

def apply_word(u, word):
    """Apply a sequence of fields, first element first.

    ``word`` entries are integers ``i`` (``d/dx_i``) or ``"Y"``.
    """
    cache = u.__dict__.setdefault("_wcache", {}) if not isinstance(u, GridFunction) else {}
    key = tuple(word)
    if key in cache:
        return cache[key]
    f = u
    for i, op in enumerate(word):
        sub = tuple(word[: i + 1])
        if sub in cache:
            f = cache[sub]
            continue
        if isinstance(f, GridFunction):
            f = grid_y(f) if op == "Y" else grid_d(f, op)
        else:
            f = f.apply_y() if op == "Y" else f.apply_d(op)
        cache[sub] = f
    return f


def seminorm_terms(n, d):
    """Words and kinds (``"lp"`` or ``"slob"``) whose sum is ``|u|_{n,p,B}``.

    Expands ``|u|_1 = sum_i ||d_i u|| + [u]``,
    ``|u|_2 = sum_i |d_i u|_1 + ||Y u||`` and
    ``|u|_n = sum_i |d_i u|_{n-1} + |Y u|_{n-2}``.
    """
    if n < 0:
        raise ValueError("order must be non-negative")
    if n == 0:
        return [((), "lp")]
    if n == 1:
        return [((i,), "lp") for i in range(d)] + [((), "slob")]
    out = [((i,) + w, k) for i in range(d) for w, k in seminorm_terms(n - 1, d)]
    out += [(("Y",) + w, k) for w, k in seminorm_terms(n - 2, d)]
    return out


def full_norm_terms(n, d):
    """Words and kinds whose sum is ``||u||_{W^{n,p}_B}``."""
    if n == 0:
        return [((), "lp")]
    if n == 1:
        return [((), "lp")] + seminorm_terms(1, d)
    out = [((), "lp")]
    out += [((i,) + w, k) for i in range(d) for w, k in full_norm_terms(n - 1, d)]
    out += [(("Y",) + w, k) for w, k in full_norm_terms(n - 2, d)]
    return out


class NormEvaluator:
    """Caches ``||word u||_p`` and ``[word u]`` on one quadrature grid."""

    def __init__(self, u, p, g, quad, y_variant):
        if y_variant not in ("restricted", "full"):
            raise ValueError("y_variant must be 'restricted' or 'full'")
        self.u, self.p, self.g, self.quad = u, p, g, quad
        self.full = y_variant == "full"
        self.cache = {}

    def term(self, word, kind):
        key = (tuple(word), kind)
        if key not in self.cache:
            f = apply_word(self.u, word)
            if kind == "lp":
                self.cache[key] = lp_norm(f, self.p, self.quad)
            else:
                self.cache[key] = slobodeckij_y(f, self.p, 0.5, self.g, self.quad, full=self.full)
        return self.cache[key]


def _recursive_seminorm(ev, word, n, d):
    if n == 0:
        return ev.term(word, "lp")
    if n == 1:
        return sum(ev.term(word + (i,), "lp") for i in range(d)) + ev.term(word, "slob")
    if n == 2:
        return sum(_recursive_seminorm(ev, word + (i,), 1, d) for i in range(d)) + ev.term(word + ("Y",), "lp")
    return (sum(_recursive_seminorm(ev, word + (i,), n - 1, d) for i in range(d))
            + _recursive_seminorm(ev, word + ("Y",), n - 2, d))


def _recursive_full(ev, word, n, d):
    if n == 0:
        return ev.term(word, "lp")
    if n == 1:
        return ev.term(word, "lp") + _recursive_seminorm(ev, word, 1, d)
    return (ev.term(word, "lp") + sum(_recursive_full(ev, word + (i,), n - 1, d) for i in range(d))
            + _recursive_full(ev, word + ("Y",), n - 2, d))


def multiindex_terms(g, n):
    """``(k, beta)`` with ``2k + <beta>_B = n``; ``beta`` runs over all ``N`` coordinates."""
    w = g.weights()
    out = []

    def rec(i, rem, beta):
        if i == g.N:
            if rem % 2 == 0:
                out.append((rem // 2, tuple(beta)))
            return
        b = 0
        while b * w[i] <= rem:
            rec(i + 1, rem - b * w[i], beta + [b])
            b += 1

    rec(0, n, [])
    return sorted(out)


def _multiindex_seminorm(ev, g, n):
    total = 0.0
    for k, beta in multiindex_terms(g, n):
        word = tuple(i for i, b in enumerate(beta) for _ in range(b)) + ("Y",) * k
        total += ev.term(word, "lp")
    for k, beta in multiindex_terms(g, n - 1):
        word = tuple(i for i, b in enumerate(beta) for _ in range(b)) + ("Y",) * k
        total += ev.term(word, "slob")
    return total


def sobolev_seminorm(u, n, p, g=None, form="recursive", y_variant="restricted",
                     quad=None, opts=DEFAULT_OPTIONS, _ev=None):
    """Intrinsic seminorm ``|u|_{n,p,B}``.

    Parameters
    ----------
    u : AnalyticField or GridFunction
    n : int
        Order, at least 1.
    p : float
    form : {"recursive", "words", "multiindex"}
        ``recursive`` follows the inductive definition literally,
        ``words`` sums the expanded list of derivative words (same terms),
        ``multiindex`` is the equivalent ``sum ||Y^k d^beta u||`` form with
        ``2k + <beta>_B = n`` plus Slobodeckij terms of order ``n - 1``.
    y_variant : {"restricted", "full"}
        Slobodeckij seminorm over ``|h| <= 1`` or over all ``h``.
    """
    if n < 1:
        raise ValueError("order must be at least 1")
    g = g or u.geometry
    quad = quad or Quadrature(u, opts)
    ev = _ev or NormEvaluator(u, p, g, quad, y_variant)
    d = g.d
    if form == "recursive":
        return _recursive_seminorm(ev, (), n, d)
    if form == "words":
        return sum(ev.term(w, k) for w, k in seminorm_terms(n, d))
    if form == "multiindex":
        return _multiindex_seminorm(ev, g, n)
    raise ValueError(f"unknown form {form!r}")


def sobolev_norm(u, n, p, g=None, variant="full", y_variant="restricted",
                 quad=None, opts=DEFAULT_OPTIONS, _ev=None):
    """``||u||_{W^{n,p}_B}`` (``variant="full"``) or ``||u||_p + |u|_{n,p,B}`` (``"triple"``)."""
    if n < 1:
        raise ValueError("order must be at least 1")
    g = g or u.geometry
    quad = quad or Quadrature(u, opts)
    ev = _ev or NormEvaluator(u, p, g, quad, y_variant)
    if variant == "full":
        return _recursive_full(ev, (), n, g.d)
    if variant == "triple":
        return ev.term((), "lp") + _recursive_seminorm(ev, (), n, g.d)
    raise ValueError(f"unknown variant {variant!r}")


# ---------------------------------------------------------------------------
# Hoelder norms


@dataclass(frozen=True)
class HolderSampling:
    """Sample set for Hoelder sups: nested ``z`` grid and geometric ``h`` grid."""

    n: int = 17
    levels: int = 14
    pad: float = 0.25

    def refine(self):
        return HolderSampling(2 * self.n - 1, self.levels + 4, self.pad)


def _holder_points(u, hs):
    lo, hi = u.box()
    w = hi - lo
    lo, hi = lo - hs.pad * w, hi + hs.pad * w
    axes = [np.linspace(a, b, hs.n) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh]), hi - lo


def holder_quotient(f, g, X, expo, Z, hmax, levels):
    """``sup |f(e^{hX} z) - f(z)| / |h|^expo`` over samples ``z`` and ``h = +-hmax 2^-j``."""
    base = f.evaluate(Z)
    best = 0.0
    for j in range(levels + 1):
        for h in (hmax * 2.0 ** -j, -hmax * 2.0 ** -j):
            if X == "Y":
                moved = flow_y_points(g, Z, h)
            else:
                moved = Z.copy()
                moved[:, X + 1] += h
            q = np.max(np.abs(f.evaluate(moved) - base)) / abs(h) ** expo
            best = max(best, float(q))
    return best


def holder_norm(u, k, alpha, g=None, sampling=HolderSampling()):
    """Sampled intrinsic Hoelder norm ``||u||_{C^{k,alpha}_B}``.

    The sups are lower estimates from a finite sample; refining the
    sampling (nested grids) can only increase them.

    Parameters
    ----------
    u : AnalyticField
    k : int
        Order (0, 1, 2, ...).
    alpha : float
        Exponent in ``(0, 1]``.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    g = g or u.geometry
    Z, ext = _holder_points(u, sampling)
    hx = float(np.max(ext[1:]))
    ht = float(ext[0])

    def sup(f):
        return float(np.max(np.abs(f.evaluate(Z))))

    def c0(f):
        val = sup(f)
        val += sum(holder_quotient(f, g, i, alpha, Z, hx, sampling.levels) for i in range(g.d))
        val += holder_quotient(f, g, "Y", alpha / 2, Z, ht, sampling.levels)
        return val

    def ck(f, n):
        if n == 0:
            return c0(f)
        if n == 1:
            return (sup(f) + sum(c0(f.apply_d(i)) for i in range(g.d))
                    + holder_quotient(f, g, "Y", (alpha + 1) / 2, Z, ht, sampling.levels))
        return sup(f) + sum(ck(f.apply_d(i), n - 1) for i in range(g.d)) + ck(f.apply_y(), n - 2)

    return ck(u, k)


def holder_seminorm_x(u, X, alpha, g=None, sampling=HolderSampling()):
    """``||u||_{C^alpha_X}`` for a single field (``X`` an index or ``"Y"``)."""
    g = g or u.geometry
    Z, ext = _holder_points(u, sampling)
    m = 2 if X == "Y" else 1
    hmax = float(ext[0]) if X == "Y" else float(np.max(ext[1:]))
    return holder_quotient(u, g, X, alpha / m, Z, hmax, sampling.levels)


# ---------------------------------------------------------------------------
# report


@dataclass
class NormReport:
    """Structured collection of quasi-norm values for one function."""

    p: float
    lp: float
    slobodeckij_y: float
    seminorms: dict = field(default_factory=dict)
    sobolev: dict = field(default_factory=dict)
    triple: dict = field(default_factory=dict)
    holder: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def rows(self):
        yield ("lp", "", self.lp)
        yield ("slobodeckij_y", "", self.slobodeckij_y)
        for n, v in sorted(self.seminorms.items()):
            yield ("seminorm", str(n), v)
        for n, v in sorted(self.sobolev.items()):
            yield ("sobolev", str(n), v)
        for n, v in sorted(self.triple.items()):
            yield ("triple", str(n), v)
        for (k, a), v in sorted(self.holder.items()):
            yield ("holder", f"{k}:{a}", v)

    def to_csv(self):
        lines = ["quantity,order,value"]
        lines += [f"{q},{o},{v:.12g}" for q, o, v in self.rows()]
        return "\n".join(lines) + "\n"

    def to_text(self):
        out = [f"p = {self.p:g}"]
        out += [f"{q}{'[' + o + ']' if o else ''} = {v:.10g}" for q, o, v in self.rows()]
        for k, v in self.meta.items():
            out.append(f"# {k}: {v}")
        return "\n".join(out) + "\n"


def norm_report(u, p, orders=(1, 2), g=None, holder=(), opts=DEFAULT_OPTIONS, y_variant="restricted"):
    """Compute a :class:`NormReport` for ``u``."""
    g = g or u.geometry
    quad = Quadrature(u, opts)
    ev = NormEvaluator(u, p, g, quad, y_variant)
    rep = NormReport(p=p, lp=ev.term((), "lp"), slobodeckij_y=ev.term((), "slob"))
    for n in orders:
        rep.seminorms[n] = sobolev_seminorm(u, n, p, g, quad=quad, _ev=ev)
        rep.sobolev[n] = sobolev_norm(u, n, p, g, "full", quad=quad, _ev=ev)
        rep.triple[n] = sobolev_norm(u, n, p, g, "triple", quad=quad, _ev=ev)
    for k, a in holder:
        rep.holder[(k, a)] = holder_norm(u, k, a, g)
    rep.meta = {
        "grid": "x".join(str(c) for c in quad.spec.counts),
        "bands": opts.bands,
        "band_nodes": opts.band_nodes,
        "y_seminorm": y_variant,
        "backend": backend.NAME,
    }
    return rep


def is_analytic(u):
    return isinstance(u, AnalyticField)
