"""
Closed-form test functions with exact intrinsic derivatives.

A :class:`ProductField` is a finite sum of terms

    c * t^m0 * x_1^m1 * ... * x_N^mN * prod_j f_j^(o_j)(z_{a_j}),

where each ``f_j`` is a one-dimensional factor (Gaussian, smooth bump,
cosine or constant) acting on coordinate axis ``a_j`` and ``o_j`` is the
order of its derivative. This family is closed under ``d/dx_i``, ``d/dt``
and multiplication by coordinates, hence under ``Y = <Bx, grad> + d_t``,
so every ``Y^k d^beta u`` is again a ``ProductField`` computed by
differentiation rules rather than by finite differences.

Axis 0 is time; axis ``i + 1`` is the space coordinate ``x_i``.
"""

from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P

from .structure import dilation_factors, matrix_exp, matrix_exp_batch


def as_points(g, t, x=None):
    """Stack ``t`` and ``x`` into an ``(M, N+1)`` array of points."""
    if x is None:
        pts = np.asarray(t, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        return pts
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.asarray(x, dtype=float).reshape(t.size, g.N)
    return np.column_stack([t, x])


class Factor1D:
    """One-dimensional smooth factor ``f`` on a single axis."""

    axis = 0

    def derivatives(self, y, kmax):
        """Return ``[f(y), f'(y), ..., f^(kmax)(y)]``."""
        raise NotImplementedError

    def support(self):
        """Interval outside of which ``f`` is negligible (or zero)."""
        raise NotImplementedError

    def key(self):
        raise NotImplementedError


class ConstFactor(Factor1D):
    def __init__(self, axis):
        self.axis = axis

    def derivatives(self, y, kmax):
        out = [np.ones_like(y)]
        out += [np.zeros_like(y) for _ in range(kmax)]
        return out

    def support(self):
        return (-np.inf, np.inf)

    def key(self):
        return ("const", self.axis)


@lru_cache(maxsize=None)
def _hermite_like(a, k):
    # f = exp(-a u^2): f^(k) = P_k(u) f with P_{k+1} = P_k' - 2 a u P_k
    polys = [np.array([1.0])]
    for _ in range(k):
        p = polys[-1]
        polys.append(P.polysub(P.polyder(p) if p.size > 1 else np.array([0.0]),
                               P.polymulx(2 * a * p)))
    return tuple(tuple(p) for p in polys)


class GaussianFactor(Factor1D):
    """``exp(-a (y - c)^2)``."""

    def __init__(self, axis, a, center=0.0, tail=40.0):
        if a <= 0:
            raise ValueError("Gaussian factor needs a > 0")
        self.axis, self.a, self.c, self.tail = axis, float(a), float(center), tail

    def derivatives(self, y, kmax):
        u = y - self.c
        f = np.exp(-self.a * u * u)
        polys = _hermite_like(self.a, kmax)
        return [P.polyval(u, np.array(p)) * f for p in polys]

    def support(self):
        w = np.sqrt(self.tail / self.a)
        return (self.c - w, self.c + w)

    def key(self):
        return ("gauss", self.axis, self.a, self.c)


@lru_cache(maxsize=None)
def _bump_polys(k):
    # b = exp(-1/(1-y^2)), g = 1-y^2: b^(k) = R_k g^(-2k) b,
    # R_{k+1} = R_k' g^2 + 4k y g R_k - 2 y R_k
    g = np.array([1.0, 0.0, -1.0])
    polys = [np.array([1.0])]
    for j in range(k):
        R = polys[-1]
        dR = P.polyder(R) if R.size > 1 else np.array([0.0])
        nxt = P.polyadd(P.polymul(dR, P.polymul(g, g)), P.polymul(4 * j * np.array([0.0, 1.0]), P.polymul(g, R)))
        nxt = P.polysub(nxt, P.polymulx(2 * R))
        polys.append(nxt)
    return tuple(tuple(p) for p in polys)


def bump_1d(y):
    """Standard C-infinity bump ``exp(-1/(1-y^2))`` on ``(-1, 1)``."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    m = np.abs(y) < 1
    out[m] = np.exp(-1.0 / (1.0 - y[m] ** 2))
    return out


class BumpFactor(Factor1D):
    """``exp(-1/(1-s^2))`` with ``s = (y - c)/r``, zero for ``|s| >= 1``."""

    def __init__(self, axis, radius, center=0.0):
        if radius <= 0:
            raise ValueError("bump radius must be positive")
        self.axis, self.r, self.c = axis, float(radius), float(center)

    def derivatives(self, y, kmax):
        s = (y - self.c) / self.r
        inside = np.abs(s) < 1
        si = s[inside]
        g = 1.0 - si * si
        polys = _bump_polys(kmax)
        out = []
        for k, p in enumerate(polys):
            v = np.zeros_like(s)
            with np.errstate(under="ignore"):
                v[inside] = P.polyval(si, np.array(p)) * np.exp(-1.0 / g - 2 * k * np.log(g)) / self.r ** k
            out.append(v)
        return out

    def support(self):
        return (self.c - self.r, self.c + self.r)

    def key(self):
        return ("bump", self.axis, self.r, self.c)


class CosFactor(Factor1D):
    """``cos(w y + phase)``."""

    def __init__(self, axis, omega, phase=0.0):
        self.axis, self.w, self.phase = axis, float(omega), float(phase)

    def derivatives(self, y, kmax):
        return [self.w ** k * np.cos(self.w * y + self.phase + k * np.pi / 2) for k in range(kmax + 1)]

    def support(self):
        return (-np.inf, np.inf)

    def key(self):
        return ("cos", self.axis, self.w, self.phase)


class AnalyticField:
    """Base class: a function on ``R^(N+1)`` with derivative access.

    Subclasses implement :meth:`evaluate` on ``(M, N+1)`` point arrays,
    :meth:`apply_d` (``d/dx_i``) and :meth:`apply_y` (``Y``). The
    default :meth:`deriv` builds ``Y^k d^beta u`` from those.
    """

    geometry = None
    max_order = np.inf
    compact = False

    def evaluate(self, pts):
        raise NotImplementedError

    def __call__(self, t, x=None):
        return self.evaluate(as_points(self.geometry, t, x))

    def at(self, z):
        return float(self.evaluate(np.concatenate([[z.t], z.x])[None, :])[0])

    def apply_d(self, i):
        raise NotImplementedError(f"{type(self).__name__} has no derivatives")

    def apply_y(self):
        raise NotImplementedError(f"{type(self).__name__} has no derivatives")

    def apply_dt(self):
        raise NotImplementedError(f"{type(self).__name__} has no time derivative")

    def deriv(self, k=0, beta=None):
        """``Y^k d^beta u`` (derivatives in ``x`` first, then ``k`` times ``Y``)."""
        key = (int(k), tuple(beta) if beta is not None else ())
        cache = self.__dict__.setdefault("_dcache", {})
        if key in cache:
            return cache[key]
        f = self
        if beta is not None:
            for i, b in enumerate(beta):
                for _ in range(int(b)):
                    f = f.apply_d(i)
        for _ in range(int(k)):
            f = f.apply_y()
        cache[key] = f
        return f

    def box(self):
        """Bounding box ``(lo, hi)`` of the (effective) support."""
        raise NotImplementedError

    # convenience algebra
    def __add__(self, other):
        return SumField([self, other])

    def __mul__(self, c):
        return ScaledField(self, c)

    __rmul__ = __mul__

    def __neg__(self):
        return ScaledField(self, -1.0)

    def __sub__(self, other):
        return SumField([self, ScaledField(other, -1.0)])

    def dilate(self, lam):
        return DilatedField(self, lam)

    def translate(self, zeta):
        return TranslatedField(self, zeta)


class ProductField(AnalyticField):
    """Sum of polynomial-weighted products of 1-D factors (see module doc)."""

    def __init__(self, geometry, factors, terms):
        self.geometry = geometry
        self.factors = tuple(factors)
        # terms: dict (monomial tuple, order tuple) -> coefficient
        self.terms = {k: float(v) for k, v in terms.items() if v != 0.0}
        self.compact = any(isinstance(f, BumpFactor) for f in self.factors)

    @classmethod
    def from_factors(cls, geometry, factors, coef=1.0, monomial=None):
        nax = geometry.N + 1
        mono = tuple(monomial) if monomial is not None else (0,) * nax
        return cls(geometry, factors, {(mono, (0,) * len(factors)): coef})

    def _d_axis(self, a):
        out = {}
        for (m, o), c in self.terms.items():
            if m[a] > 0:
                mm = list(m)
                mm[a] -= 1
                key = (tuple(mm), o)
                out[key] = out.get(key, 0.0) + c * m[a]
            for j, f in enumerate(self.factors):
                if f.axis == a:
                    oo = list(o)
                    oo[j] += 1
                    key = (m, tuple(oo))
                    out[key] = out.get(key, 0.0) + c
        return out

    def _mul_axis(self, terms, a, coef):
        out = {}
        for (m, o), c in terms.items():
            mm = list(m)
            mm[a] += 1
            key = (tuple(mm), o)
            out[key] = out.get(key, 0.0) + coef * c
        return out

    def apply_d(self, i):
        return ProductField(self.geometry, self.factors, self._d_axis(i + 1))

    def apply_dt(self):
        return ProductField(self.geometry, self.factors, self._d_axis(0))

    def apply_y(self):
        B = self.geometry.B
        acc = dict(self._d_axis(0))
        for i, j in zip(*np.nonzero(B)):
            part = self._mul_axis(self._d_axis(i + 1), j + 1, B[i, j])
            for k, v in part.items():
                acc[k] = acc.get(k, 0.0) + v
        return ProductField(self.geometry, self.factors, acc)

    def evaluate(self, pts):
        pts = np.asarray(pts, dtype=float)
        M = pts.shape[0]
        if not self.terms:
            return np.zeros(M)
        nax = pts.shape[1]
        maxo = [0] * len(self.factors)
        maxm = [0] * nax
        for m, o in self.terms:
            for j, oj in enumerate(o):
                maxo[j] = max(maxo[j], oj)
            for a, ma in enumerate(m):
                maxm[a] = max(maxm[a], ma)
        ftab = [f.derivatives(pts[:, f.axis], maxo[j]) for j, f in enumerate(self.factors)]
        ptab = []
        for a in range(nax):
            col = [np.ones(M)]
            for _ in range(maxm[a]):
                col.append(col[-1] * pts[:, a])
            ptab.append(col)
        out = np.zeros(M)
        for (m, o), c in sorted(self.terms.items()):
            v = np.full(M, c)
            for a, ma in enumerate(m):
                if ma:
                    v = v * ptab[a][ma]
            for j, oj in enumerate(o):
                v = v * ftab[j][oj]
            out += v
        return out

    def box(self):
        nax = self.geometry.N + 1
        lo = np.full(nax, -np.inf)
        hi = np.full(nax, np.inf)
        for f in self.factors:
            a, b = f.support()
            lo[f.axis] = max(lo[f.axis], a)
            hi[f.axis] = min(hi[f.axis], b)
        return lo, hi

    def times(self, other):
        """Pointwise product with another ProductField."""
        if not isinstance(other, ProductField):
            raise TypeError("can only multiply ProductFields")
        factors = self.factors + other.factors
        terms = {}
        for (m1, o1), c1 in self.terms.items():
            for (m2, o2), c2 in other.terms.items():
                key = (tuple(a + b for a, b in zip(m1, m2)), o1 + o2)
                terms[key] = terms.get(key, 0.0) + c1 * c2
        return ProductField(self.geometry, factors, terms)


class SumField(AnalyticField):
    def __init__(self, parts):
        self.parts = list(parts)
        self.geometry = self.parts[0].geometry
        self.compact = all(p.compact for p in self.parts)

    def evaluate(self, pts):
        return sum(p.evaluate(pts) for p in self.parts)

    def apply_d(self, i):
        return SumField([p.apply_d(i) for p in self.parts])

    def apply_y(self):
        return SumField([p.apply_y() for p in self.parts])

    def apply_dt(self):
        return SumField([p.apply_dt() for p in self.parts])

    def box(self):
        boxes = [p.box() for p in self.parts]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)


class ScaledField(AnalyticField):
    def __init__(self, inner, c):
        self.inner, self.c = inner, float(c)
        self.geometry = inner.geometry
        self.compact = inner.compact

    def evaluate(self, pts):
        return self.c * self.inner.evaluate(pts)

    def apply_d(self, i):
        return ScaledField(self.inner.apply_d(i), self.c)

    def apply_y(self):
        return ScaledField(self.inner.apply_y(), self.c)

    def apply_dt(self):
        return ScaledField(self.inner.apply_dt(), self.c)

    def box(self):
        return self.inner.box()


class DilatedField(AnalyticField):
    """``z -> u(D_lam z)``; derivatives pick up the homogeneous weights."""

    def __init__(self, inner, lam):
        if not lam > 0:
            raise ValueError("dilation parameter must be positive")
        self.inner, self.lam = inner, float(lam)
        self.geometry = inner.geometry
        self.compact = inner.compact
        self._scale = np.concatenate([[self.lam ** 2], dilation_factors(self.geometry, self.lam)])

    def evaluate(self, pts):
        return self.inner.evaluate(np.asarray(pts) * self._scale)

    def apply_d(self, i):
        return ScaledField(DilatedField(self.inner.apply_d(i), self.lam), self._scale[i + 1])

    def apply_y(self):
        return ScaledField(DilatedField(self.inner.apply_y(), self.lam), self.lam ** 2)

    def apply_dt(self):
        return ScaledField(DilatedField(self.inner.apply_dt(), self.lam), self.lam ** 2)

    def box(self):
        lo, hi = self.inner.box()
        return lo / self._scale, hi / self._scale


class TranslatedField(AnalyticField):
    """``z -> u(zeta o z)``; left translations commute with ``d_x`` and ``Y``."""

    def __init__(self, inner, zeta):
        self.inner, self.zeta = inner, zeta
        self.geometry = inner.geometry
        self.compact = inner.compact

    def evaluate(self, pts):
        pts = np.asarray(pts, dtype=float)
        g = self.geometry
        E = matrix_exp_batch(g, pts[:, 0])
        x = np.einsum("kij,j->ki", E, self.zeta.x) + pts[:, 1:]
        return self.inner.evaluate(np.column_stack([pts[:, 0] + self.zeta.t, x]))

    def apply_d(self, i):
        return TranslatedField(self.inner.apply_d(i), self.zeta)

    def apply_y(self):
        return TranslatedField(self.inner.apply_y(), self.zeta)

    def box(self):
        lo, hi = self.inner.box()
        g = self.geometry
        # preimage of the box under z -> zeta o z: t - s, x - exp(tB) xi on t-range
        tlo, thi = lo[0] - self.zeta.t, hi[0] - self.zeta.t
        ts = np.linspace(tlo, thi, 65) if np.isfinite(tlo) and np.isfinite(thi) else np.array([0.0])
        shifts = np.stack([matrix_exp(g, s) @ self.zeta.x for s in ts])
        nlo = np.concatenate([[tlo], lo[1:] - shifts.max(axis=0)])
        nhi = np.concatenate([[thi], hi[1:] - shifts.min(axis=0)])
        return nlo, nhi


class ComposedField(AnalyticField):
    """``F(u)`` for a Lipschitz scalar map ``F``; first derivatives by the chain rule."""

    max_order = 1

    def __init__(self, inner, F, dF, order=0):
        self.inner, self.F, self.dF = inner, F, dF
        self.geometry = inner.geometry
        self.compact = inner.compact
        self._order = order

    def evaluate(self, pts):
        return self.F(self.inner.evaluate(pts))

    def _chain(self, du):
        if self._order >= 1:
            raise NotImplementedError("only first derivatives of composed fields are available")
        inner, dF = self.inner, self.dF

        class _D(AnalyticField):
            max_order = 0

            def __init__(s):
                s.geometry = inner.geometry
                s.compact = inner.compact

            def evaluate(s, pts):
                return dF(inner.evaluate(pts)) * du.evaluate(pts)

            def box(s):
                return inner.box()

        return _D()

    def apply_d(self, i):
        return self._chain(self.inner.apply_d(i))

    def apply_y(self):
        return self._chain(self.inner.apply_y())

    def box(self):
        return self.inner.box()


class CallableField(AnalyticField):
    """Wrap a vectorised callable ``f(pts)``; no derivatives."""

    max_order = 0

    def __init__(self, geometry, func, box, compact=True):
        self.geometry, self.func = geometry, func
        self._box = (np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float))
        self.compact = compact

    def evaluate(self, pts):
        return np.asarray(self.func(np.asarray(pts, dtype=float)), dtype=float)

    def box(self):
        return self._box


# ---------------------------------------------------------------------------
# test family constructors


def gaussian(g, a=1.0, a_t=None, center=None, amplitude=1.0):
    """Anisotropic Gaussian ``A exp(-sum a_i (x_i - c_i)^2 - a_t (t - c_t)^2)``.

    Parameters
    ----------
    g : Geometry
    a : float or sequence
        Space coefficients, scalar or one per coordinate.
    a_t : float, optional
        Time coefficient (defaults to the first space coefficient).
    center : array_like, optional
        Length ``N+1`` center ``(t, x)``.
    amplitude : float
    """
    a = np.broadcast_to(np.asarray(a, dtype=float), (g.N,))
    a_t = float(a[0] if a_t is None else a_t)
    c = np.zeros(g.N + 1) if center is None else np.asarray(center, dtype=float)
    factors = [GaussianFactor(0, a_t, c[0])] + [GaussianFactor(i + 1, a[i], c[i + 1]) for i in range(g.N)]
    return ProductField.from_factors(g, factors, amplitude)


def bump(g, radius=1.0, center=None, amplitude=1.0):
    """Product of 1-D bumps with per-axis radii."""
    r = np.broadcast_to(np.asarray(radius, dtype=float), (g.N + 1,))
    c = np.zeros(g.N + 1) if center is None else np.asarray(center, dtype=float)
    factors = [BumpFactor(a, r[a], c[a]) for a in range(g.N + 1)]
    return ProductField.from_factors(g, factors, amplitude)


def polynomial(g, terms):
    """Polynomial from ``{monomial exponents (t, x_1..x_N): coefficient}``."""
    factors = [ConstFactor(0)]
    return ProductField(g, factors, {(tuple(m), (0,)): c for m, c in terms.items()})


def monomial_in(g, axis, power=1, coef=1.0):
    m = [0] * (g.N + 1)
    m[axis] = power
    return polynomial(g, {tuple(m): coef})


def modulated_bump(g, radius=1.0, omega=2.0, axis=1, center=None, phase=0.0):
    """Bump times an oscillation ``cos(omega z_axis + phase)``."""
    b = bump(g, radius, center)
    osc = ProductField.from_factors(g, [CosFactor(axis, omega, phase)])
    return b.times(osc)


def gaussian_times_poly(g, monomial, a=1.0, coef=1.0):
    base = gaussian(g, a)
    poly = ProductField(g, [ConstFactor(0)], {(tuple(monomial), (0,)): coef})
    return base.times(poly)


def field_box(field, pad=0.0):
    lo, hi = field.box()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("field has unbounded support; give an explicit box")
    w = hi - lo
    return lo - pad * w, hi + pad * w
