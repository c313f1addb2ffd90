"""
Covariance matrix, Gaussian fundamental solution and kernel quadratures.

For ``A_0 = diag(I_d, 0)`` the covariance

    C_t = int_0^t exp(sB) A_0 exp(sB)^T ds

is a matrix polynomial in ``t`` of degree ``2r + 1`` because ``B`` is
nilpotent. The fundamental solution of ``K = 1/2 sum_{i<=d} d_ii - Y`` is

    Gamma(t, x) = (2 pi)^(-N/2) det(C_t)^(-1/2) exp(-<C_t^{-1} x, x>/2),  t > 0,

and zero for ``t <= 0``.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np

from .grid import GridFunction, GridSpec, inverse_compose_points
from .structure import (
    check_hormander,
    dilation_factors,
    homogeneous_norm_arrays,
    matrix_exp_batch,
)


class KernelUndefinedError(ValueError):
    """Raised when ``C_t`` is singular for some ``t > 0``."""


@dataclass(frozen=True)
class CovariancePolynomial:
    """``C_t = sum_m coeffs[m] t^m``.

    Attributes
    ----------
    geometry : Geometry
    coeffs : ndarray, shape (2r+2, N, N)
    exact : list or None
        Rational coefficients when ``B`` has integer entries.
    """

    geometry: object
    coeffs: np.ndarray
    exact: object = None

    def evaluate(self, t):
        """``C_t`` for scalar ``t``."""
        out = np.zeros(self.coeffs.shape[1:])
        for m in range(self.coeffs.shape[0] - 1, -1, -1):
            out = out * t + self.coeffs[m]
        return out

    def evaluate_batch(self, t):
        t = np.asarray(t, dtype=float).reshape(-1)
        out = np.zeros((t.size,) + self.coeffs.shape[1:])
        for m in range(self.coeffs.shape[0] - 1, -1, -1):
            out = out * t[:, None, None] + self.coeffs[m]
        return out

    def derivative(self, t):
        """``dC_t/dt`` for scalar ``t``."""
        out = np.zeros(self.coeffs.shape[1:])
        for m in range(self.coeffs.shape[0] - 1, 0, -1):
            out = out * t + m * self.coeffs[m]
        return out

    def derivative_batch(self, t):
        t = np.asarray(t, dtype=float).reshape(-1)
        out = np.zeros((t.size,) + self.coeffs.shape[1:])
        for m in range(self.coeffs.shape[0] - 1, 0, -1):
            out = out * t[:, None, None] + m * self.coeffs[m]
        return out

    @property
    def degree(self):
        return self.coeffs.shape[0] - 1


def covariance(g):
    """Exact covariance polynomial by termwise integration.

    ``exp(sB) A_0 exp(sB)^T = sum_{j,k} s^(j+k) B^j A_0 (B^k)^T / (j! k!)``,
    integrated from 0 to ``t``.
    """
    N, r, d = g.N, g.r, g.d
    A0 = np.zeros((N, N))
    A0[:d, :d] = np.eye(d)
    deg = 2 * r + 1
    coeffs = np.zeros((deg + 1, N, N))
    exact = None
    if g.exact:
        ipow = [np.round(p).astype(np.int64) for p in g.powers]
        exact = [[[Fraction(0)] * N for _ in range(N)] for _ in range(deg + 1)]
        for j in range(r + 1):
            for k in range(r + 1):
                M = ipow[j][:, :d] @ ipow[k][:, :d].T
                den = factorial(j) * factorial(k) * (j + k + 1)
                for a in range(N):
                    for b in range(N):
                        if M[a, b]:
                            exact[j + k + 1][a][b] += Fraction(int(M[a, b]), den)
        for m in range(deg + 1):
            coeffs[m] = np.array([[float(v) for v in row] for row in exact[m]])
    else:
        for j in range(r + 1):
            for k in range(r + 1):
                M = g.powers[j] @ A0 @ g.powers[k].T
                coeffs[j + k + 1] += M / (factorial(j) * factorial(k) * (j + k + 1))
    coeffs.setflags(write=False)
    return CovariancePolynomial(g, coeffs, exact)


def covariance_quadrature(g, t, **quad_kw):
    """``C_t`` by adaptive quadrature of its defining integral (reference)."""
    from scipy.integrate import quad_vec

    N, d = g.N, g.d
    A0 = np.zeros((N, N))
    A0[:d, :d] = np.eye(d)

    def integrand(s):
        E = matrix_exp_batch(g, [s])[0]
        return E @ A0 @ E.T

    quad_kw.setdefault("epsabs", 0.0)
    quad_kw.setdefault("epsrel", 1e-13)
    val, _ = quad_vec(integrand, 0.0, t, **quad_kw)
    return val


@dataclass(frozen=True)
class KernelValue:
    """``Gamma``, its first-layer gradient and ``Y Gamma`` at one point."""

    gamma: float
    grad_d: np.ndarray
    y_gamma: float


def _kernel_parts(cp, t, x, floor):
    """Vectorised Gamma, grad_x Gamma, d_t Gamma and Hessian pieces."""
    g = cp.geometry
    t = np.asarray(t, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(t.size, g.N)
    M = t.size
    gamma = np.zeros(M)
    grad = np.zeros((M, g.N))
    dt = np.zeros(M)
    Cinv = np.zeros((M, g.N, g.N))
    pos = t > 0
    if np.any(pos):
        tp = t[pos]
        C = cp.evaluate_batch(tp)
        try:
            L = np.linalg.cholesky(C)
        except np.linalg.LinAlgError as exc:
            raise KernelUndefinedError("C_t is not positive definite; Hormander condition fails") from exc
        logdet = 2 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
        Ci = np.linalg.inv(C)
        Ci = 0.5 * (Ci + np.transpose(Ci, (0, 2, 1)))
        xp = x[pos]
        y = np.einsum("kij,kj->ki", Ci, xp)
        quad = np.einsum("ki,ki->k", xp, y)
        logg = -0.5 * g.N * np.log(2 * np.pi) - 0.5 * logdet - 0.5 * quad
        gam = np.where(logg > floor, np.exp(np.maximum(logg, floor)), 0.0)
        Cd = cp.derivative_batch(tp)
        # d_t log Gamma = -tr(C^{-1} C')/2 + <C^{-1} C' C^{-1} x, x>/2
        tr = np.einsum("kij,kji->k", Ci, Cd)
        qd = np.einsum("ki,kij,kj->k", y, Cd, y)
        gamma[pos] = gam
        grad[pos] = -gam[:, None] * y
        dt[pos] = gam * (-0.5 * tr + 0.5 * qd)
        Cinv[pos] = Ci
    return gamma, grad, dt, Cinv


def gamma_arrays(cp, t, x, floor=-700.0):
    """Vectorised kernel: returns ``(gamma, grad_x, y_gamma)`` arrays."""
    _require_hormander(cp)
    gamma, grad, dt, _ = _kernel_parts(cp, t, x, floor)
    g = cp.geometry
    x = np.asarray(x, dtype=float).reshape(-1, g.N)
    y_gamma = np.einsum("ki,ki->k", x @ g.B.T, grad) + dt
    return gamma, grad, y_gamma


def gamma_laplacian_d(cp, t, x, floor=-700.0):
    """``sum_{i<=d} d_ii Gamma`` in closed form."""
    gamma, grad, _, Ci = _kernel_parts(cp, t, x, floor)
    d = cp.geometry.d
    g = cp.geometry
    x = np.asarray(x, dtype=float).reshape(-1, g.N)
    y = np.einsum("kij,kj->ki", Ci, x)
    return gamma * (np.sum(y[:, :d] ** 2, axis=1) - np.trace(Ci[:, :d, :d], axis1=1, axis2=2))


def _require_hormander(cp):
    ok = cp.__dict__.get("_hormander")
    if ok is None:
        ok = check_hormander(cp.geometry).hormander
        cp.__dict__["_hormander"] = ok
    if not ok:
        raise KernelUndefinedError("C_t is singular: Hormander condition fails")


def gamma_eval(cp, z, floor=-700.0):
    """Kernel value at a group point.

    Parameters
    ----------
    cp : CovariancePolynomial
    z : GroupPoint
    floor : float
        Log-density below which the value is returned as 0.

    Returns
    -------
    KernelValue
    """
    gamma, grad, yg = gamma_arrays(cp, np.array([z.t]), z.x[None, :], floor)
    return KernelValue(float(gamma[0]), grad[0, : cp.geometry.d].copy(), float(yg[0]))


def kolmogorov_residual_fd(cp, z, h=1e-3):
    """Finite-difference ``1/2 sum_{i<=d} d_ii Gamma - Y Gamma`` and the scale ``|Y Gamma|``.

    The ``Y`` derivative is the symmetric flow difference along
    ``exp(hY)``; the second derivatives are central differences. Steps are
    relative to the intrinsic scales (``h sqrt(t)`` in space, ``h t`` along
    ``Y``) and a Richardson step lifts both to fourth order.
    """
    g = cp.geometry
    if z.t <= 0:
        raise ValueError("residual needs t > 0")

    def G(t, x):
        return gamma_arrays(cp, np.atleast_1d(t), np.atleast_2d(x))[0][0]

    def second(hh):
        acc = 0.0
        for i in range(g.d):
            e = np.zeros(g.N)
            e[i] = hh
            acc += (G(z.t, z.x + e) - 2 * G(z.t, z.x) + G(z.t, z.x - e)) / hh ** 2
        return acc

    def ydiff(hh):
        Ep = matrix_exp_batch(g, [hh])[0]
        Em = matrix_exp_batch(g, [-hh])[0]
        return (G(z.t + hh, Ep @ z.x) - G(z.t - hh, Em @ z.x)) / (2 * hh)

    hx, hy = h * np.sqrt(z.t), h * z.t
    lap = (4 * second(hx / 2) - second(hx)) / 3
    yg = (4 * ydiff(hy / 2) - ydiff(hy)) / 3
    return 0.5 * lap - yg, abs(yg)


def bulk_points(cp, n, seed=0, t_range=(0.2, 3.0), radius=2.0):
    """Random points ``(t, L_t eta)`` with ``|eta_i| <= radius`` where Gamma is not negligible."""
    g = cp.geometry
    rng = np.random.default_rng(seed)
    ts = rng.uniform(*t_range, size=n)
    eta = rng.uniform(-radius, radius, size=(n, g.N))
    L = np.linalg.cholesky(cp.evaluate_batch(ts))
    return ts, np.einsum("kij,kj->ki", L, eta)


def kernel_integral(cp, t, n=81, width=9.0):
    """``int Gamma(t, x) dx`` by the trapezoidal rule in whitened coordinates.

    The nodes are ``x = L_t eta`` with ``L_t`` the Cholesky factor of ``C_t``
    and ``eta`` a tensor grid on ``[-width, width]^N``; the Jacobian
    ``det L_t`` is applied explicitly.
    """
    g = cp.geometry
    C = cp.evaluate(t)
    L = np.linalg.cholesky(C)
    ax = np.linspace(-width, width, n)
    h = ax[1] - ax[0]
    w1 = np.full(n, h)
    w1[0] = w1[-1] = h / 2
    mesh = np.meshgrid(*([ax] * g.N), indexing="ij")
    eta = np.column_stack([m.ravel() for m in mesh])
    W = np.ones(1)
    for _ in range(g.N):
        W = np.multiply.outer(W, w1).ravel()
    x = eta @ L.T
    gam = gamma_arrays(cp, np.full(eta.shape[0], t), x)[0]
    return float(np.dot(W, gam) * np.prod(np.diag(L)))


@dataclass(frozen=True)
class SampleSpec:
    """Sampling region for the kernel bounds: ``t`` log-spaced, ``x`` uniform."""

    t_min: float = 1e-3
    t_max: float = 10.0
    x_max: float = 10.0
    n_t: int = 40
    n_x: int = 41

    def refine(self, factor=2):
        return SampleSpec(self.t_min, self.t_max, self.x_max,
                          (self.n_t - 1) * factor + 1, (self.n_x - 1) * factor + 1)


@dataclass(frozen=True)
class BoundReport:
    sup_gamma: float
    sup_y_gamma: float
    n_samples: int
    hom_dim: int


def bound_samples(cp, spec):
    """Sample points ``(t, x)`` for :func:`kernel_bound_check`."""
    g = cp.geometry
    ts = np.geomspace(spec.t_min, spec.t_max, spec.n_t)
    ax = np.linspace(-spec.x_max, spec.x_max, spec.n_x)
    mesh = np.meshgrid(ts, *([ax] * g.N), indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def kernel_bound_check(cp, spec=SampleSpec(), return_table=False):
    """Sampled suprema of ``||z||^(d-2) Gamma`` and ``||z||^d |Y Gamma|``.

    Parameters
    ----------
    cp : CovariancePolynomial
    spec : SampleSpec
    return_table : bool
        Also return the per-sample table ``(t, x, gamma, y_gamma, hom_norm, bound_ratio)``.
    """
    g = cp.geometry
    pts = bound_samples(cp, spec)
    gam, _, yg = gamma_arrays(cp, pts[:, 0], pts[:, 1:])
    nrm = homogeneous_norm_arrays(g, pts[:, 0], pts[:, 1:])
    D = g.hom_dim
    r1 = nrm ** (D - 2) * gam
    r2 = nrm ** D * np.abs(yg)
    rep = BoundReport(float(r1.max()), float(r2.max()), int(pts.shape[0]), D)
    if return_table:
        return rep, np.column_stack([pts, gam, yg, nrm, r1])
    return rep


def _gl(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def annulus_nodes(g, half_widths, q=4):
    """Gauss-Legendre nodes on ``Box \\ D_{1/2} Box`` split along coordinate planes.

    ``Box`` is ``prod [-a_i, a_i]``; each axis is cut at ``0`` and at the
    inner half-width so every sub-box avoids the origin and the kinks of
    the homogeneous norm sit on sub-box faces.
    """
    a = np.asarray(half_widths, dtype=float)
    D = a.size
    wts = np.concatenate([[2.0], 2.0 * g.layer_index() + 1])
    c = a * 0.5 ** wts
    cuts = [[(-a[i], -c[i], True), (-c[i], 0.0, False), (0.0, c[i], False), (c[i], a[i], True)] for i in range(D)]
    nodes, weights = [], []
    for choice in np.ndindex(*([4] * D)):
        segs = [cuts[i][choice[i]] for i in range(D)]
        if not any(s[2] for s in segs):
            continue
        xs, ws = zip(*[_gl(q, s[0], s[1]) for s in segs])
        mesh = np.meshgrid(*xs, indexing="ij")
        wm = np.meshgrid(*ws, indexing="ij")
        nodes.append(np.column_stack([m.ravel() for m in mesh]))
        weights.append(np.prod(np.stack([m.ravel() for m in wm]), axis=0))
    return np.vstack(nodes), np.concatenate(weights)


def riesz_potential(g, alpha, f, out_spec, levels=8, q=4, half_widths=None):
    """Group-convolution potential ``I_alpha f(z) = int f(zeta) ||zeta^{-1} o z||^(alpha - d) dzeta``.

    The ``w = zeta^{-1} o z`` integral is split into dyadic homogeneous
    shells ``D_{2^-k}(Box \\ D_{1/2} Box)``, ``k = 0..levels``, each mapped
    back to the first shell by a dilation. The innermost box is replaced by
    ``f(z)`` times the exact shell-sum of ``||w||^(alpha - d)``.

    Parameters
    ----------
    g : Geometry
    alpha : float
        Order, ``0 < alpha < hom_dim``.
    f : AnalyticField or GridFunction
    out_spec : GridSpec
    levels : int
        Number of refined shells.
    q : int
        Gauss-Legendre nodes per axis and sub-box.
    half_widths : array_like, optional
        Outer box for ``w``; by default large enough to cover the support
        of ``f`` seen from every output point.

    Returns
    -------
    GridFunction
    """
    D = g.hom_dim
    if not 0 < alpha < D:
        raise ValueError(f"alpha must lie in (0, {D})")
    Z = out_spec.points()
    if half_widths is None:
        flo, fhi = f.box()
        zeta = np.array(np.meshgrid(*[[lo_, hi_] for lo_, hi_ in zip(flo, fhi)], indexing="ij")).reshape(len(flo), -1).T
        zc = np.array(np.meshgrid(*[[lo_, hi_] for lo_, hi_ in zip(out_spec.lo, out_spec.hi)], indexing="ij")).reshape(len(flo), -1).T
        pairs_z = np.repeat(zc, zeta.shape[0], axis=0)
        pairs_s = np.tile(zeta, (zc.shape[0], 1))
        w = inverse_compose_points(g, pairs_s, pairs_z)
        half_widths = 1.05 * np.max(np.abs(w), axis=0)
    W, Wq = annulus_nodes(g, half_widths, q)
    nrm = homogeneous_norm_arrays(g, W[:, 0], W[:, 1:])
    base = Wq * nrm ** (alpha - D)
    acc = np.zeros(Z.shape[0])
    for k in range(levels + 1):
        lam = 0.5 ** k
        sc = np.concatenate([[lam ** 2], dilation_factors(g, lam)])
        Wk = W * sc
        coef = lam ** alpha
        for w, c in zip(Wk, base):
            E = matrix_exp_batch(g, [-w[0]])[0]
            pts = np.column_stack([Z[:, 0] - w[0], (Z[:, 1:] - w[1:]) @ E.T])
            acc += coef * c * f.evaluate(pts)
    A0 = float(np.sum(base))
    acc += f.evaluate(Z) * (0.5 ** ((levels + 1) * alpha)) * A0 / (1.0 - 0.5 ** alpha)
    return GridFunction(out_spec, acc.reshape(out_spec.shape), 0, g)


def kolmogorov_apply(u):
    """``K u = 1/2 sum_{i<=d} d_ii u - Y u`` as a callable on point arrays."""
    g = u.geometry
    lap = [u.deriv(0, tuple(2 if j == i else 0 for j in range(g.N))) for i in range(g.d)]
    yu = u.deriv(1, None)

    def Ku(pts):
        return 0.5 * sum(f.evaluate(pts) for f in lap) - yu.evaluate(pts)

    return Ku


@dataclass(frozen=True)
class Reconstruction:
    values: GridFunction
    exact: np.ndarray
    rel_l2_error: float
    n_tau: int
    n_space: int


def _trap_nodes(lo, hi, n):
    axes, ws = [], []
    for a, b in zip(lo, hi):
        x = np.linspace(a, b, n)
        w = np.full(n, x[1] - x[0])
        w[0] = w[-1] = w[0] / 2
        axes.append(x)
        ws.append(w)
    mesh = np.meshgrid(*axes, indexing="ij")
    W = np.ones(1)
    for w in ws:
        W = np.multiply.outer(W, w).ravel()
    return np.column_stack([m.ravel() for m in mesh]), W


def reconstruct_from_kernel(cp, u, out_spec, n_tau=24, n_space=21, eta_width=6.0):
    """Rebuild ``u`` from ``u(z) = -int Gamma(zeta^{-1} o z) K u(zeta) dzeta``.

    Writing ``zeta = (t - tau, xi)`` the integrand is
    ``Gamma(tau, x - exp(tau B) xi) K u(t - tau, xi)``. For each output time
    ``t`` the ``tau`` integral uses Gauss-Legendre nodes on
    ``[0, t - t_min]`` where ``t_min`` bounds the time support of ``u``.
    For each ``tau`` the space integral uses whichever trapezoidal grid
    resolves the narrower factor: the sheared grid
    ``x - exp(tau B) xi = L_tau eta`` (``L_tau`` the Cholesky factor of
    ``C_tau``) while the kernel is thinner than the support grid of ``u``,
    and the support grid afterwards. The sheared grid is a graded mesh that
    follows the anisotropic singularity of ``Gamma`` at the origin.

    Parameters
    ----------
    cp : CovariancePolynomial
    u : AnalyticField
        Compactly supported, with second derivatives.
    out_spec : GridSpec
    n_tau, n_space : int
        Quadrature resolution in time and per space axis.

    Returns
    -------
    Reconstruction
    """
    g = cp.geometry
    if not u.compact:
        raise ValueError("reconstruction needs a compactly supported field")
    Ku = kolmogorov_apply(u)
    Z = out_spec.points()
    lo, hi = u.box()
    eta, We = _trap_nodes([-eta_width] * g.N, [eta_width] * g.N, n_space)
    Xi, Wx = _trap_nodes(lo[1:], hi[1:], n_space)
    hx = float(np.max((hi[1:] - lo[1:]) / (n_space - 1)))
    acc = np.zeros(Z.shape[0])
    for tv in np.unique(Z[:, 0]):
        rows = np.nonzero(Z[:, 0] == tv)[0]
        X = Z[rows, 1:]
        T = tv - lo[0]
        if T <= 0:
            continue
        taus, wt = _gl(n_tau, 0.0, T)
        part = np.zeros(rows.size)
        for tau, wtau in zip(taus, wt):
            C = cp.evaluate(tau)
            L = np.linalg.cholesky(C)
            E = matrix_exp_batch(g, [tau])[0]
            Einv = matrix_exp_batch(g, [-tau])[0]
            thin = np.sqrt(np.linalg.eigvalsh(Einv @ C @ Einv.T)[0])
            if thin < 2 * hx:
                y = eta @ L.T
                gam = gamma_arrays(cp, np.full(y.shape[0], tau), y)[0]
                wy = We * gam * np.prod(np.diag(L))
                keep = wy != 0
                y, wy = y[keep], wy[keep]
                xs = ((X[:, None, :] - y[None, :, :]) @ Einv.T).reshape(-1, g.N)
                pts = np.column_stack([np.full(xs.shape[0], tv - tau), xs])
                part -= wtau * (Ku(pts).reshape(rows.size, -1) @ wy)
            else:
                Ci = np.linalg.inv(C)
                logc = -0.5 * g.N * np.log(2 * np.pi) - np.sum(np.log(np.diag(L)))
                kv = Wx * Ku(np.column_stack([np.full(Xi.shape[0], tv - tau), Xi]))
                keep = kv != 0
                shifted = Xi[keep] @ E.T
                y = X[:, None, :] - shifted[None, :, :]
                q = np.einsum("mki,ij,mkj->mk", y, Ci, y)
                gam = np.exp(np.maximum(logc - 0.5 * q, -700.0))
                part -= wtau * (gam @ kv[keep])
        acc[rows] = part
    exact = u.evaluate(Z)
    err = np.sqrt(np.sum((acc - exact) ** 2)) / max(np.sqrt(np.sum(exact ** 2)), 1e-300)
    return Reconstruction(GridFunction(out_spec, acc.reshape(out_spec.shape), 0, g), exact, float(err), n_tau, n_space)


def homogeneity_defect(cp, lam, t):
    """``max |C_{lam^2 t} - Dhat C_t Dhat| / max |C_{lam^2 t}|``."""
    Dh = np.diag(dilation_factors(cp.geometry, lam))
    A = cp.evaluate(lam ** 2 * t)
    Bm = Dh @ cp.evaluate(t) @ Dh
    return float(np.max(np.abs(A - Bm)) / np.max(np.abs(A)))


def spec_around(field, n):
    lo, hi = field.box()
    return GridSpec.from_box(lo, hi, n)
