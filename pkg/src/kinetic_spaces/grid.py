"""
Uniform grids on ``R^(N+1)``, sampled functions, flows and intrinsic
derivatives.

Grid axis 0 is time, axis ``i + 1`` is ``x_i``. Values outside the grid box
are taken to be zero, which matches the compact-support convention of the
test functions: every :class:`GridFunction` carries a margin band of cells
where its values vanish exactly, so flow-displaced points leaving the box
see the right value.
"""

from dataclasses import dataclass
import io

import numpy as np

from . import backend
from .fields import AnalyticField
from .structure import GroupPoint, matrix_exp, matrix_exp_batch, MultiIndex


@dataclass(frozen=True)
class GridSpec:
    """Axis bounds and point counts, time axis first.

    Parameters
    ----------
    lo, hi : tuple of float
    counts : tuple of int
    """

    lo: tuple
    hi: tuple
    counts: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        counts = tuple(int(c) for c in self.counts)
        if not (len(lo) == len(hi) == len(counts)):
            raise ValueError("lo, hi and counts must have equal length")
        if any(c < 2 for c in counts):
            raise ValueError("each axis needs at least 2 points")
        if not all(np.isfinite(lo) & np.isfinite(hi)) or any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("axis bounds must be finite with lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_box(cls, lo, hi, n):
        lo = np.asarray(lo, dtype=float)
        return cls(tuple(lo), tuple(np.asarray(hi, dtype=float)), tuple(np.broadcast_to(n, lo.shape)))

    @property
    def ndim(self):
        return len(self.counts)

    @property
    def shape(self):
        return self.counts

    @property
    def step(self):
        return (np.array(self.hi) - np.array(self.lo)) / (np.array(self.counts) - 1)

    def axes(self):
        return [np.linspace(a, b, c) for a, b, c in zip(self.lo, self.hi, self.counts)]

    def points(self):
        """All nodes as an ``(M, D)`` array in C order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def weights(self):
        """Tensor trapezoidal weights, flattened in C order."""
        w = np.ones(1)
        for c, h in zip(self.counts, self.step):
            w1 = np.full(c, h)
            w1[0] = w1[-1] = h / 2
            w = np.multiply.outer(w, w1).ravel()
        return w

    def cell_volume(self):
        return float(np.prod(self.step))

    def refine(self, factor=2):
        return GridSpec(self.lo, self.hi, tuple((c - 1) * factor + 1 for c in self.counts))

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.all((pts >= np.array(self.lo)) & (pts <= np.array(self.hi)), axis=1)


def default_spec(g, n=64, half_width=6.0):
    """Default grid: ``n`` points per axis on ``[-w, w]^(N+1)``."""
    D = g.N + 1
    return GridSpec((-half_width,) * D, (half_width,) * D, (n,) * D)


def spec_for_field(field, n=41, pad=0.0):
    """Grid adapted to the support box of an analytic field."""
    lo, hi = field.box()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("field has unbounded support; give an explicit grid")
    w = hi - lo
    return GridSpec.from_box(lo - pad * w, hi + pad * w, n)


class GridFunction:
    """Sampled function with a zero margin band.

    Parameters
    ----------
    spec : GridSpec
    values : ndarray
        Array of shape ``spec.shape``.
    margin : int
        Number of boundary cells on which the values are exactly 0.
    geometry : Geometry, optional
        Needed for flows and intrinsic derivatives.
    """

    def __init__(self, spec, values, margin=0, geometry=None):
        values = np.array(values, dtype=float).reshape(spec.shape)
        if margin > 0:
            band = np.ones(spec.shape, dtype=bool)
            band[tuple(slice(margin, c - margin) for c in spec.shape)] = False
            if np.any(values[band] != 0):
                raise ValueError("values must vanish on the declared margin")
        values.setflags(write=False)
        self.spec, self.values, self.margin, self.geometry = spec, values, int(margin), geometry

    compact = True

    def evaluate(self, pts):
        return interpolate_points(self, pts)

    def box(self):
        return np.array(self.spec.lo), np.array(self.spec.hi)

    def with_values(self, values, margin=None):
        return GridFunction(self.spec, values, self.margin if margin is None else margin, self.geometry)

    def integrate(self, values=None):
        v = self.values if values is None else values
        return float(np.dot(self.spec.weights(), np.ravel(v)))


def _margin_band(spec, margin):
    band = np.ones(spec.shape, dtype=bool)
    band[tuple(slice(margin, c - margin) for c in spec.shape)] = False
    return band


def sample(field, spec, margin=8, tol=1e-12):
    """Evaluate an analytic field on a grid.

    Compactly supported fields must have their support box inside the grid
    box minus the margin. Other fields must be below ``tol`` (relative to
    their maximum) on the margin band; they are then set to exactly zero
    there.

    Raises
    ------
    ValueError
        On support overflow, naming the offending axis.
    """
    g = field.geometry
    step = spec.step
    inner_lo = np.array(spec.lo) + margin * step
    inner_hi = np.array(spec.hi) - margin * step
    names = ["t"] + [f"x{i + 1}" for i in range(spec.ndim - 1)]
    if field.compact:
        lo, hi = field.box()
        for a in range(spec.ndim):
            if lo[a] < inner_lo[a] - 1e-12 or hi[a] > inner_hi[a] + 1e-12:
                raise ValueError(f"support overflows the grid on axis {names[a]}")
    vals = field.evaluate(spec.points()).reshape(spec.shape)
    if margin > 0:
        band = _margin_band(spec, margin)
        peak = np.max(np.abs(vals)) if vals.size else 0.0
        if peak > 0 and np.max(np.abs(vals[band])) > tol * peak:
            bad = np.argwhere(band & (np.abs(vals) > tol * peak))[0]
            axis = next(a for a in range(spec.ndim) if bad[a] < margin or bad[a] >= spec.shape[a] - margin)
            raise ValueError(f"support overflows the grid on axis {names[axis]}")
        vals = np.where(band, 0.0, vals)
    return GridFunction(spec, vals, margin, g)


def interpolate_points(u, pts):
    """Multilinear interpolation at an ``(M, D)`` array; zero outside the box."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    spec = u.spec
    return backend.interp_multilinear(
        np.ascontiguousarray(u.values, dtype=float).ravel(),
        np.array(spec.shape, dtype=np.int64),
        np.array(spec.lo), spec.step, pts,
    )


def interpolate(u, z):
    """Value of a grid function at a group point (multilinear).

    Raises
    ------
    ValueError
        If the point lies outside the grid box.
    """
    p = np.concatenate([[z.t], z.x])
    if not u.spec.contains(p)[0]:
        raise ValueError("point outside the grid box")
    return float(interpolate_points(u, p[None, :])[0])


def flow_eval(g, z, field, h):
    """Integral curve of a vector field through ``z`` at time ``h``.

    Parameters
    ----------
    g : Geometry
    z : GroupPoint
    field : "Y", int or array_like
        ``"Y"`` for the drift field, an integer ``i`` for ``d/dx_i`` or a
        vector ``v`` for ``<v, grad_x>``.
    h : float
    """
    if isinstance(field, str):
        if field != "Y":
            raise ValueError("field must be 'Y', an index or a vector")
        return GroupPoint(z.t + h, matrix_exp(g, h) @ z.x)
    if np.isscalar(field):
        v = np.zeros(g.N)
        v[int(field)] = 1.0
    else:
        v = np.asarray(field, dtype=float)
    return GroupPoint(z.t, z.x + h * v)


def flow_y_points(g, pts, h):
    """``exp(hY)`` applied to an ``(M, N+1)`` point array (scalar or per-point ``h``)."""
    pts = np.asarray(pts, dtype=float)
    h = np.asarray(h, dtype=float)
    out = np.empty_like(pts)
    out[:, 0] = pts[:, 0] + h
    x = pts[:, 1:]
    acc = x.copy()
    term = x
    fact = 1.0
    for j in range(1, g.r + 1):
        term = term @ g.B.T
        fact *= j
        acc = acc + (h[..., None] if h.ndim else h) ** j / fact * term
    out[:, 1:] = acc
    return out


def compose_points(g, pts, w):
    """``z o w`` for an ``(M, N+1)`` array ``z`` and a single point ``w``."""
    pts = np.asarray(pts, dtype=float)
    E = matrix_exp(g, w[0])
    return np.column_stack([pts[:, 0] + w[0], pts[:, 1:] @ E.T + w[1:]])


def compose_points_right_inverse(g, pts, w):
    """``z o w^{-1} = (t - s, exp(-sB)(x - xi))`` for a single ``w = (s, xi)``."""
    pts = np.asarray(pts, dtype=float)
    E = matrix_exp(g, -w[0])
    return np.column_stack([pts[:, 0] - w[0], (pts[:, 1:] - w[1:]) @ E.T])


def inverse_compose_points(g, zeta, pts):
    """``zeta^{-1} o z = (t - s, x - exp((t - s)B) xi)`` for arrays of ``zeta`` and ``z``."""
    zeta = np.asarray(zeta, dtype=float)
    pts = np.asarray(pts, dtype=float)
    dt = pts[:, 0] - zeta[:, 0]
    E = matrix_exp_batch(g, dt)
    return np.column_stack([dt, pts[:, 1:] - np.einsum("kij,kj->ki", E, zeta[:, 1:])])


def _central_diff(values, axis, h):
    out = np.zeros_like(values)
    sl_c = [slice(None)] * values.ndim
    sl_p = [slice(None)] * values.ndim
    sl_m = [slice(None)] * values.ndim
    sl_c[axis] = slice(1, -1)
    sl_p[axis] = slice(2, None)
    sl_m[axis] = slice(0, -2)
    out[tuple(sl_c)] = (values[tuple(sl_p)] - values[tuple(sl_m)]) / (2 * h)
    return out


def grid_d(u, i):
    """Central difference ``d/dx_i`` of a grid function."""
    if u.margin < 1:
        raise ValueError("stencil out of bounds: no margin left")
    vals = _central_diff(u.values, i + 1, u.spec.step[i + 1])
    vals = np.where(_margin_band(u.spec, u.margin - 1), 0.0, vals)
    return GridFunction(u.spec, vals, u.margin - 1, u.geometry)


def grid_y(u, h=None):
    """Symmetric flow difference ``(u(e^{hY}z) - u(e^{-hY}z)) / 2h``."""
    if u.margin < 1:
        raise ValueError("stencil out of bounds: no margin left")
    g = u.geometry
    if g is None:
        raise ValueError("grid function needs a geometry for Y derivatives")
    h = u.spec.step[0] if h is None else h
    pts = u.spec.points()
    vals = (interpolate_points(u, flow_y_points(g, pts, h)) - interpolate_points(u, flow_y_points(g, pts, -h))) / (2 * h)
    vals = vals.reshape(u.spec.shape)
    vals = np.where(_margin_band(u.spec, u.margin - 1), 0.0, vals)
    return GridFunction(u.spec, vals, u.margin - 1, g)


def intrinsic_derivative(u, g, idx):
    """``Y^k d^beta u`` by exact rules (analytic) or difference stencils (grid).

    Parameters
    ----------
    u : AnalyticField or GridFunction
    g : Geometry
    idx : MultiIndex

    Returns
    -------
    Same kind as ``u``.
    """
    if isinstance(u, AnalyticField):
        return u.deriv(idx.k, idx.beta)
    if u.geometry is None:
        u = GridFunction(u.spec, u.values, u.margin, g)
    order = sum(idx.beta) + idx.k
    if order > u.margin:
        raise ValueError("stencil out of bounds: derivative order exceeds the margin")
    f = u
    for i, b in enumerate(idx.beta):
        for _ in range(b):
            f = grid_d(f, i)
    for _ in range(idx.k):
        f = grid_y(f)
    return f


def multi_index(g, k=0, beta=None):
    beta = tuple(beta) if beta is not None else (0,) * g.N
    return MultiIndex(beta, k, tuple(g.layer_index()))


def group_convolve(f, kernel, g, kernel_spec, out_spec=None):
    """Quadrature of ``z -> int f(zeta) k(zeta^{-1} o z) dzeta``.

    Substituting ``w = zeta^{-1} o z`` (unit Jacobian) this is
    ``int f(z o w^{-1}) k(w) dw``; the ``w`` integral uses the trapezoidal
    nodes of ``kernel_spec`` and contributions are accumulated in a fixed
    node order.

    Parameters
    ----------
    f : GridFunction or AnalyticField
    kernel : callable
        Vectorised ``k(w)`` on ``(M, N+1)`` arrays.
    g : Geometry
    kernel_spec : GridSpec
        Box containing the support of ``k``.
    out_spec : GridSpec, optional
        Output grid; defaults to the grid of ``f``.

    Returns
    -------
    GridFunction
    """
    if out_spec is None:
        out_spec = f.spec
    W = kernel_spec.points()
    kw = np.asarray(kernel(W)) * kernel_spec.weights()
    keep = kw != 0
    W, kw = W[keep], kw[keep]
    Z = out_spec.points()
    acc = np.zeros(Z.shape[0])
    for w, c in zip(W, kw):
        acc += c * f.evaluate(compose_points_right_inverse(g, Z, w))
    return GridFunction(out_spec, acc.reshape(out_spec.shape), 0, g)


def dump_grid(u, path):
    """Write a grid function: text header lines then raw little-endian float64."""
    spec = u.spec
    header = (
        "kinetic-grid 1\n"
        f"ndim {spec.ndim}\n"
        f"lo {' '.join(repr(v) for v in spec.lo)}\n"
        f"hi {' '.join(repr(v) for v in spec.hi)}\n"
        f"counts {' '.join(str(c) for c in spec.counts)}\n"
        f"margin {u.margin}\n"
        "end\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def load_grid(path, geometry=None):
    """Read a grid function written by :func:`dump_grid`."""
    with open(path, "rb") as fh:
        meta = {}
        first = fh.readline().decode("ascii").strip()
        if first != "kinetic-grid 1":
            raise ValueError("not a grid file")
        while True:
            line = fh.readline().decode("ascii").strip()
            if line == "end":
                break
            key, _, rest = line.partition(" ")
            meta[key] = rest.split()
        data = fh.read()
    spec = GridSpec(
        tuple(float(v) for v in meta["lo"]),
        tuple(float(v) for v in meta["hi"]),
        tuple(int(v) for v in meta["counts"]),
    )
    vals = np.frombuffer(data, dtype="<f8").reshape(spec.shape)
    return GridFunction(spec, vals.copy(), int(meta["margin"][0]), geometry)


def slice_csv(u, axis_values):
    """CSV text of a 1-D slice: ``axis_values`` fixes all axes but one (``None``)."""
    free = [a for a, v in enumerate(axis_values) if v is None]
    if len(free) != 1:
        raise ValueError("exactly one free axis required")
    a = free[0]
    ax = u.spec.axes()[a]
    pts = np.tile(np.array([0.0 if v is None else v for v in axis_values]), (ax.size, 1))
    pts[:, a] = ax
    vals = interpolate_points(u, pts)
    buf = io.StringIO()
    buf.write("coord,value\n")
    for c, v in zip(ax, vals):
        buf.write(f"{c:.12g},{v:.12g}\n")
    return buf.getvalue()
