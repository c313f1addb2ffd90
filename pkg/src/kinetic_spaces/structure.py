"""
Block drift matrices and the induced homogeneous group.

The drift matrix ``B`` of a kinetic operator is assembled from a list of
layer dimensions ``d_0 >= d_1 >= ... >= d_r`` and ``r`` full-rank blocks
``B_j`` of shape ``d_j x d_{j-1}``. Each block sits in block row ``j`` and
block column ``j-1``; every other block is zero, so ``B`` is nilpotent of
degree ``r + 1``.

From ``B`` one gets the translation law

    (t, x) o (s, xi) = (t + s, exp(sB) x + xi),

the anisotropic dilations ``D_lam(t, x) = (lam^2 t, Dhat_lam x)`` where layer
``i`` scales as ``lam^(2i+1)``, the homogeneous norm and the homogeneous
dimension ``2 + sum_k (2k+1) d_k``.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial
import json

import numpy as np


class StructureError(ValueError):
    """Raised when a block violates the rank or shape requirements."""


@dataclass(frozen=True)
class BlockStructure:
    """Layer dimensions and the sub-diagonal blocks of ``B``.

    Parameters
    ----------
    layer_dims : tuple of int
        Non-increasing positive layer sizes ``d_0, ..., d_r``.
    blocks : tuple of ndarray
        ``r`` matrices, block ``j`` (1-based) of shape ``d_j x d_{j-1}``.
    strict : bool
        Enforce full row rank of every block. Degenerate structures are
        only useful for exercising the rank test.
    """

    layer_dims: tuple
    blocks: tuple
    strict: bool = True

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) == 0:
            raise ValueError("layer_dims must be non-empty")
        if any(d < 1 for d in dims):
            raise ValueError("layer dimensions must be positive")
        if any(dims[j] > dims[j - 1] for j in range(1, len(dims))):
            raise ValueError(f"layer_dims must be non-increasing, got {list(dims)}")
        if len(self.blocks) != len(dims) - 1:
            raise ValueError(
                f"expected {len(dims) - 1} blocks for {len(dims)} layers, got {len(self.blocks)}"
            )
        blocks = []
        for j, blk in enumerate(self.blocks, start=1):
            a = np.array(blk, dtype=float)
            if a.ndim == 1 and a.size == dims[j] * dims[j - 1]:
                a = a.reshape(dims[j], dims[j - 1])
            if a.shape != (dims[j], dims[j - 1]):
                raise StructureError(
                    f"block {j} has shape {a.shape}, expected ({dims[j]}, {dims[j - 1]})"
                )
            if self.strict and np.linalg.matrix_rank(a) != dims[j]:
                raise StructureError(f"block {j} is rank deficient (needs rank {dims[j]})")
            a.setflags(write=False)
            blocks.append(a)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "blocks", tuple(blocks))

    @property
    def r(self):
        return len(self.layer_dims) - 1

    @property
    def N(self):
        return sum(self.layer_dims)


@dataclass(frozen=True)
class GroupPoint:
    """A point ``(t, x)`` of the group ``R x R^N``."""

    t: float
    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", x)

    def as_array(self):
        return np.concatenate([[self.t], self.x])


@dataclass(frozen=True)
class MultiIndex:
    """A derivative ``Y^k d^beta`` together with its intrinsic weights."""

    beta: tuple
    k: int = 0
    layer_of: tuple = field(default=(), repr=False)

    def __post_init__(self):
        beta = tuple(int(b) for b in self.beta)
        if any(b < 0 for b in beta) or self.k < 0:
            raise ValueError("multi-index entries must be non-negative")
        object.__setattr__(self, "beta", beta)
        if not self.layer_of:
            object.__setattr__(self, "layer_of", (0,) * len(beta))

    @property
    def b_length(self):
        return sum((2 * layer + 1) * b for layer, b in zip(self.layer_of, self.beta))

    @property
    def intrinsic_order(self):
        return 2 * self.k + self.b_length


@dataclass(frozen=True)
class Geometry:
    """Assembled drift matrix and derived group data.

    Attributes
    ----------
    structure : BlockStructure
    B : ndarray
        ``N x N`` drift matrix.
    N, r : int
    hom_dim : int
        Homogeneous dimension.
    layer_offsets : tuple of int
        Cumulative offsets, layer ``i`` occupies ``[off[i], off[i+1])``.
    nilpotency_degree : int
        Smallest ``m`` with ``B^m = 0``.
    """

    structure: BlockStructure
    B: np.ndarray
    N: int
    r: int
    hom_dim: int
    layer_offsets: tuple
    nilpotency_degree: int
    exact: bool
    powers: tuple = field(repr=False)

    @property
    def d(self):
        return self.structure.layer_dims[0]

    @property
    def layer_dims(self):
        return self.structure.layer_dims

    def layer_index(self):
        """Layer number of every space coordinate."""
        out = np.empty(self.N, dtype=int)
        for i in range(self.r + 1):
            out[self.layer_offsets[i]:self.layer_offsets[i + 1]] = i
        return out

    def layer_slice(self, i):
        return slice(self.layer_offsets[i], self.layer_offsets[i + 1])

    def weights(self):
        """Dilation exponents ``2i+1`` of the space coordinates."""
        return 2 * self.layer_index() + 1


def _is_integral(a):
    return bool(np.all(np.isfinite(a)) and np.all(a == np.round(a)))


def _exact_powers(B_int, count):
    # python ints avoid any overflow or rounding in the products
    n = B_int.shape[0]
    M = [[int(v) for v in row] for row in B_int]
    P = [[int(i == j) for j in range(n)] for i in range(n)]
    out = [P]
    for _ in range(count):
        P = [[sum(P[i][k] * M[k][j] for k in range(n)) for j in range(n)] for i in range(n)]
        out.append(P)
    return out


def build_geometry(bs):
    """Assemble ``B`` from its blocks and compute the derived group data.

    Parameters
    ----------
    bs : BlockStructure

    Returns
    -------
    Geometry

    Raises
    ------
    StructureError
        If nilpotency of degree ``r+1`` fails (cannot happen for valid input).
    """
    dims = bs.layer_dims
    offsets = tuple(int(v) for v in np.concatenate([[0], np.cumsum(dims)]))
    N, r = bs.N, bs.r
    B = np.zeros((N, N))
    for j, blk in enumerate(bs.blocks, start=1):
        B[offsets[j]:offsets[j + 1], offsets[j - 1]:offsets[j]] = blk
    exact = _is_integral(B)
    powers = []
    if exact:
        ipow = _exact_powers(np.round(B).astype(np.int64), r + 1)
        if any(v != 0 for row in ipow[r + 1] for v in row):
            raise StructureError("B^(r+1) is not zero")
        nil = next(m for m in range(r + 2) if all(v == 0 for row in ipow[m] for v in row))
        powers = [np.array(p, dtype=float) for p in ipow[: r + 1]]
    else:
        P = np.eye(N)
        for _ in range(r + 1):
            powers.append(P)
            P = P @ B
        if np.abs(P).max() > 0:
            raise StructureError("B^(r+1) is not zero")
        nil = next(m for m in range(r + 2) if m == r + 1 or not np.any(np.linalg.matrix_power(B, m)))
    for p in powers:
        p.setflags(write=False)
    B.setflags(write=False)
    hom_dim = 2 + sum((2 * k + 1) * dk for k, dk in enumerate(dims))
    return Geometry(
        structure=bs, B=B, N=N, r=r, hom_dim=int(hom_dim), layer_offsets=offsets,
        nilpotency_degree=int(nil), exact=exact, powers=tuple(powers),
    )


def langevin(d=1):
    """Geometry of the Langevin operator in ``d`` velocity dimensions."""
    return build_geometry(BlockStructure((d, d), (np.eye(d),)))


def geometry_from_spec(layer_dims, blocks):
    return build_geometry(BlockStructure(tuple(layer_dims), tuple(blocks)))


def load_operator(path):
    """Read an operator description file.

    The file is JSON with keys ``layer_dims`` (list of int) and ``blocks``
    (list of matrices, each given either as nested rows or as a flat
    row-major list).
    """
    with open(path) as fh:
        data = json.load(fh)
    return operator_from_dict(data)


def operator_from_dict(data):
    if "layer_dims" not in data:
        raise ValueError("operator description needs 'layer_dims'")
    dims = [int(d) for d in data["layer_dims"]]
    raw = data.get("blocks", [])
    blocks = []
    for j, blk in enumerate(raw, start=1):
        a = np.array(blk, dtype=float)
        if a.ndim == 1 and j < len(dims):
            if a.size != dims[j] * dims[j - 1]:
                raise StructureError(
                    f"block {j} has {a.size} entries, expected {dims[j] * dims[j - 1]}"
                )
            a = a.reshape(dims[j], dims[j - 1])
        blocks.append(a)
    return build_geometry(BlockStructure(tuple(dims), tuple(blocks)))


def operator_to_dict(g):
    return {
        "layer_dims": list(g.layer_dims),
        "blocks": [np.asarray(b).tolist() for b in g.structure.blocks],
    }


def matrix_power(g, n):
    """``B^n`` (zero for ``n > r``)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n <= g.r:
        return g.powers[n]
    return np.zeros((g.N, g.N))


def matrix_exp(g, s):
    """``exp(sB)`` as the finite sum ``sum_{j<=r} s^j B^j / j!``."""
    E = np.zeros((g.N, g.N))
    for j in range(g.r + 1):
        E = E + (s ** j / factorial(j)) * g.powers[j]
    return E


def matrix_exp_batch(g, s):
    """Stack of ``exp(s_k B)`` for a 1-D array ``s``; shape ``(len(s), N, N)``."""
    s = np.asarray(s, dtype=float).reshape(-1)
    E = np.zeros((s.size, g.N, g.N))
    for j in range(g.r + 1):
        E += (s ** j / factorial(j))[:, None, None] * g.powers[j]
    return E


def kalman_matrix(g):
    A0 = np.zeros((g.N, g.d))
    A0[: g.d, : g.d] = np.eye(g.d)
    return np.hstack([g.powers[j] @ A0 if j <= g.r else 0 * A0 for j in range(g.r + 1)])


@dataclass(frozen=True)
class RankCertificate:
    hormander: bool
    rank: int
    N: int
    min_eig_C1: float = float("nan")


def check_hormander(g, with_covariance=False):
    """Kalman rank test for hypoellipticity.

    Parameters
    ----------
    g : Geometry
    with_covariance : bool
        Also report the smallest eigenvalue of ``C_1`` as a cross-check.

    Returns
    -------
    RankCertificate
    """
    K = kalman_matrix(g)
    if g.exact:
        rank = _exact_rank(K)
    else:
        rank = int(np.linalg.matrix_rank(K))
    lam = float("nan")
    if with_covariance:
        from .heat_kernel import covariance

        lam = float(np.linalg.eigvalsh(covariance(g).evaluate(1.0)).min())
    return RankCertificate(hormander=rank == g.N, rank=rank, N=g.N, min_eig_C1=lam)


def _exact_rank(K):
    rows = [[Fraction(int(round(v))) for v in row] for row in K]
    rank, ncol = 0, len(rows[0]) if rows else 0
    for c in range(ncol):
        piv = next((i for i in range(rank, len(rows)) if rows[i][c] != 0), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i][c] != 0:
                f = rows[i][c] / rows[rank][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[rank])]
        rank += 1
    return rank


def _check_dim(g, z):
    if z.x.shape[0] != g.N:
        raise ValueError(f"point has space dimension {z.x.shape[0]}, geometry has N={g.N}")


def compose(g, z, w):
    """Group product ``z o w``."""
    _check_dim(g, z)
    _check_dim(g, w)
    return GroupPoint(z.t + w.t, matrix_exp(g, w.t) @ z.x + w.x)


def invert(g, z):
    """Group inverse ``(-t, -exp(-tB) x)``."""
    _check_dim(g, z)
    return GroupPoint(-z.t, -(matrix_exp(g, -z.t) @ z.x))


def compose_arrays(g, t, x, s, xi):
    """Vectorised ``(t, x) o (s, xi)``; ``x`` and ``xi`` have shape ``(..., N)``."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.array(x, copy=True)
    term = x
    for j in range(1, g.r + 1):
        term = term @ g.B.T
        out = out + (s[..., None] ** j / factorial(j)) * term
    return t + s, out + xi


def dilation_factors(g, lam):
    """Diagonal of ``Dhat_lam``."""
    return float(lam) ** g.weights().astype(float)


def dilate(g, lam, z):
    """``D_lam z = (lam^2 t, Dhat_lam x)``."""
    if not lam > 0:
        raise ValueError("dilation parameter must be positive")
    _check_dim(g, z)
    return GroupPoint(lam ** 2 * z.t, dilation_factors(g, lam) * z.x)


def homogeneous_norm(g, z):
    """``|t|^(1/2) + sum_i |x^[i]|^(1/(2i+1))``."""
    _check_dim(g, z)
    return float(homogeneous_norm_arrays(g, np.array(z.t), z.x[None, :])[0])


def homogeneous_norm_arrays(g, t, x):
    """Vectorised homogeneous norm for ``t`` of shape ``(M,)`` and ``x`` of shape ``(M, N)``."""
    t = np.asarray(t, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1, g.N)
    out = np.sqrt(np.abs(t))
    for i in range(g.r + 1):
        layer = np.linalg.norm(x[:, g.layer_slice(i)], axis=1)
        out = out + layer ** (1.0 / (2 * i + 1))
    return out


def flow_y(g, h, z):
    """``exp(hY) z = (t + h, exp(hB) x)``."""
    return GroupPoint(z.t + h, matrix_exp(g, h) @ z.x)


def flow_coordinate(g, i, h, z):
    """``exp(h d_{x_i}) z = (t, x + h e_i)``."""
    x = np.array(z.x)
    x[i] += h
    return GroupPoint(z.t, x)


def commutator_field(g, v, n):
    """Coefficient vector ``B^n v`` of the iterated commutator ``X^(n)_v``."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != g.N:
        raise ValueError("v must have length N")
    if np.any(v[g.d:] != 0):
        raise ValueError("v must be supported on the first layer")
    if n < 0:
        raise ValueError("n must be non-negative")
    return matrix_power(g, n) @ v


class NoPreimageError(ValueError):
    """Raised when a layer target cannot be reached from the first layer."""


def solve_layer_preimage(g, n, target, tol=1e-10):
    """Minimal-norm ``w`` in layer 0 with ``B^n w = target``.

    Parameters
    ----------
    g : Geometry
    n : int
        Layer of the target, ``0 <= n <= r``.
    target : array_like
        Length-``N`` vector supported on layer ``n``.
    tol : float
        Residual tolerance certifying the solve.

    Returns
    -------
    ndarray
        Length-``N`` vector supported on layer 0.
    """
    target = np.asarray(target, dtype=float).reshape(-1)
    if target.shape[0] != g.N:
        raise ValueError("target must have length N")
    if not 0 <= n <= g.r:
        raise ValueError(f"layer {n} out of range 0..{g.r}")
    mask = np.ones(g.N, dtype=bool)
    mask[g.layer_slice(n)] = False
    if np.any(target[mask] != 0):
        raise ValueError(f"target must be supported on layer {n}")
    if not check_hormander(g).hormander:
        raise NoPreimageError("Hormander condition fails, layer maps are not onto")
    M = matrix_power(g, n)[g.layer_slice(n), : g.d]
    w0 = np.linalg.pinv(M) @ target[g.layer_slice(n)]
    w = np.zeros(g.N)
    w[: g.d] = w0
    res = np.linalg.norm(matrix_power(g, n) @ w - target)
    if res > tol * max(1.0, np.linalg.norm(target)):
        raise NoPreimageError(f"preimage residual {res:.3e} exceeds tolerance")
    return w


def quasi_triangle_constant(g, samples=2000, seed=0, scale=2.0):
    """Empirical bound ``max ||zeta^-1 o z|| / (||zeta|| + ||z||)`` over random pairs."""
    rng = np.random.default_rng(seed)
    t1 = rng.normal(scale=scale, size=samples)
    t2 = rng.normal(scale=scale, size=samples)
    x1 = rng.normal(scale=scale, size=(samples, g.N))
    x2 = rng.normal(scale=scale, size=(samples, g.N))
    # zeta^-1 o z = (t - s, x - exp((t - s)B) xi)
    dt = t2 - t1
    E = matrix_exp_batch(g, dt)
    dx = x2 - np.einsum("kij,kj->ki", E, x1)
    num = homogeneous_norm_arrays(g, dt, dx)
    den = homogeneous_norm_arrays(g, t1, x1) + homogeneous_norm_arrays(g, t2, x2)
    return float(np.max(num / den))


BUILTIN_OPERATORS = ("langevin1", "langevin2", "three_layer")


def builtin_operator_path(name):
    """Path of a shipped operator file (``langevin1``, ``langevin2``, ``three_layer``)."""
    from importlib import resources
    if name not in BUILTIN_OPERATORS:
        raise ValueError(f"unknown builtin operator {name!r}; choose from {', '.join(BUILTIN_OPERATORS)}")
    return str(resources.files("kinetic_spaces") / "data" / f"{name}.json")


def resolve_operator(ref):
    """Geometry from a builtin name or a path to an operator file."""
    if ref in BUILTIN_OPERATORS:
        return load_operator(builtin_operator_path(ref))
    return load_operator(ref)
