"""
Experiment harness: configured sweeps producing tables, fits and verdicts.

Every experiment is a pure function of its :class:`ExperimentConfig`; tables
are written with fixed float formatting, so repeated runs give identical
bytes. Several experiments in one lab file run as independent jobs on the
worker pool (``KINETIC_SPACES_WORKERS``) and are merged in file order.
"""

import csv
import io
import json
import os
from dataclasses import dataclass, field
from math import gamma as gamma_fn

import numpy as np
from scipy import integrate

from . import families
from .fitting import fit_power_law
from .heat_kernel import (
    SampleSpec, bulk_points, covariance, covariance_quadrature, gamma_arrays, homogeneity_defect,
    kernel_bound_check, kernel_integral, kolmogorov_residual_fd,
)
from .lorentz import (
    GaussianLevels, check_level_measures, gaussian_level_box, gaussian_levels, lorentz_norm,
    nesting_constant, rearrange, step_rearrangement, synthetic_tail, tail_partial_sums,
    tartar_sequence, truncate,
)
from .norms import (
    HolderSampling, NormEvaluator, Quadrature, QuadratureOptions, holder_norm, lp_norm,
    slobodeckij_y, sobolev_norm, sobolev_seminorm,
)
from .fields import AnalyticField
from .grid import flow_y_points
from .parallel import ordered_map
from .structure import (
    BUILTIN_OPERATORS, GroupPoint, check_hormander, compose, dilate, dilation_factors, homogeneous_norm,
    homogeneous_norm_arrays, invert, matrix_exp_batch, matrix_power, resolve_operator,
)
from .taylor import (
    BumpKernel, DEFAULT_EPS_GRID, mollify_inverse_rate, mollify_rate, taylor_eval_points, taylor_remainder_rate,
)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# exponents


def critical_exponent(p, hom_dim, k=1):
    """``p*_k`` from ``1/p*_k = 1/p - k/d``; ``inf`` when the right side is 0,
    negative values when it is negative."""
    inv = 1.0 / p - k / hom_dim
    return np.inf if inv == 0 else 1.0 / inv


def crude_theta(p, q, hom_dim):
    """``theta = d (1/p - 1/q)``."""
    return hom_dim * (1.0 / p - 1.0 / q)


def crude_upper(p, hom_dim):
    """``r = p (d + p) / d``: the crude embedding holds for ``q in [p, r)``."""
    return p * (hom_dim + p) / hom_dim


def holder_exponent(p, hom_dim):
    return 1.0 - hom_dim / p


# ---------------------------------------------------------------------------
# config and results


@dataclass
class ExperimentConfig:
    """One experiment.

    Attributes
    ----------
    experiment : str
        Registry key (see :func:`list_experiments`).
    name : str
        Label used for output files; defaults to the experiment key.
    operator : str
        Builtin operator name or path to an operator file.
    family : list
        Function specs (strings or dicts); defaults per experiment.
    params : dict
        Exponents, grids and resolutions.
    tolerance : float, optional
        Overrides the experiment's default tolerance.
    seed : int
    """

    experiment: str
    name: str = ""
    operator: str = "langevin1"
    family: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    tolerance: float = None
    seed: int = 0

    def __post_init__(self):
        if not self.name:
            self.name = self.experiment
        if self.experiment not in REGISTRY:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.tolerance is not None and not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        for key, val in self.params.items():
            if isinstance(val, (list, tuple)) and len(val) == 0:
                raise ConfigError(f"grid {key!r} is empty")
        for key in ("p",):
            if key in self.params:
                ps = self.params[key] if isinstance(self.params[key], (list, tuple)) else [self.params[key]]
                if any(float(v) < 1 for v in ps):
                    raise ConfigError("p must be >= 1")

    @classmethod
    def from_dict(cls, data):
        known = {"experiment", "name", "operator", "family", "params", "tolerance", "seed"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
        if "experiment" not in data:
            raise ConfigError("config needs 'experiment'")
        return cls(**data)

    def get(self, key, default):
        return self.params.get(key, default)

    def tol(self, default):
        return default if self.tolerance is None else float(self.tolerance)


def load_lab_file(path):
    """Read a lab file: a single config object or ``{"experiments": [...]}``."""
    with open(path) as fh:
        data = json.load(fh)
    items = data["experiments"] if isinstance(data, dict) and "experiments" in data else [data]
    if not items:
        raise ConfigError("no experiments in lab file")
    cfgs = [ExperimentConfig.from_dict(d) for d in items]
    names = [c.name for c in cfgs]
    if len(set(names)) != len(names):
        raise ConfigError("experiment names must be unique")
    return cfgs


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.12g}"
    return str(v)


@dataclass
class SweepResult:
    """Table, fits and verdict of one experiment."""

    name: str
    experiment: str
    columns: tuple
    rows: list
    verdict: bool
    criterion: str
    fits: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def to_json(self):
        return {
            "name": self.name,
            "experiment": self.experiment,
            "verdict": "PASS" if self.verdict else "FAIL",
            "criterion": self.criterion,
            "fits": {k: {"slope": _fmt(f.slope), "intercept": _fmt(f.intercept), "r2": _fmt(f.r2)}
                     for k, f in self.fits.items()},
            "summary": {k: _fmt(v) for k, v in self.summary.items()},
        }


def _family(cfg, g, default=None):
    specs = cfg.family or default or families.default_family(g)
    return [(families.describe(s), families.build_field(g, s)) for s in specs]


def _opts(cfg, key="resolution", default=41):
    return QuadratureOptions(n=int(cfg.get(key, default)))


def _drift(a, b):
    a, b = float(a), float(b)
    if not (np.isfinite(a) and np.isfinite(b)) or min(a, b) <= 0:
        return np.inf
    return max(a, b) / min(a, b)


# ---------------------------------------------------------------------------
# experiments


def run_scaling_suite(cfg):
    """Scaling factors of ``||.||_p`` and ``|.|_{n,p,B}`` under ``u -> u(D_lam .)``.

    The seminorm uses the Slobodeckij integral over all ``h``, which is the
    dilation-covariant form.
    """
    g = resolve_operator(cfg.operator)
    D = g.hom_dim
    lams = [float(v) for v in cfg.get("lambdas", [0.5, 1.0, 2.0, 4.0])]
    orders = [int(v) for v in cfg.get("orders", [1, 2])]
    ps = [float(v) for v in cfg.get("p", [1.5, 2.0, 4.0])]
    tol = cfg.tol(0.01)
    label, u = _family(cfg, g, [{"kind": "bump", "radius": [1.0] + [1.2] * g.N}])[0]
    opts = _opts(cfg)
    rows = []
    worst = 0.0
    for p in ps:
        base = NormEvaluator(u, p, g, Quadrature(u, opts), "full")
        ref = {"lp": base.term((), "lp")}
        for n in orders:
            ref[n] = sobolev_seminorm(u, n, p, g, y_variant="full", _ev=base)
        for lam in lams:
            v = u.dilate(lam)
            ev = NormEvaluator(v, p, g, Quadrature(v, opts), "full")
            meas = ev.term((), "lp") / ref["lp"]
            pred = lam ** (-D / p)
            dev = abs(meas / pred - 1)
            worst = max(worst, dev)
            rows.append(("lp", p, 0, lam, meas, pred, dev))
            for n in orders:
                meas = sobolev_seminorm(v, n, p, g, y_variant="full", _ev=ev) / ref[n]
                pred = lam ** (n - D / p)
                dev = abs(meas / pred - 1)
                worst = max(worst, dev)
                rows.append(("seminorm", p, n, lam, meas, pred, dev))
    return SweepResult(cfg.name, cfg.experiment, ("quantity", "p", "n", "lambda", "measured", "predicted", "rel_dev"),
                       rows, worst <= tol, f"max relative deviation <= {tol}",
                       summary={"max_rel_dev": worst, "hom_dim": D, "function": label})


def _w1p(u, p, g, opts):
    return sobolev_norm(u, 1, p, g, opts=opts)


def run_embedding_sweep(cfg, regime=None):
    """First-order embeddings in the three regimes ``p < d``, ``p > d``, ``p = d``."""
    g = resolve_operator(cfg.operator)
    D = g.hom_dim
    regime = regime or cfg.get("regime", "subcritical")
    tol_const = cfg.tol(0.01)
    res = [int(v) for v in cfg.get("resolutions", [29, 41])]
    fam = _family(cfg, g)
    rows = []
    summary = {"hom_dim": D, "regime": regime}
    if regime == "subcritical":
        p = float(cfg.get("p", 2.0))
        if not p < D:
            raise ConfigError(f"subcritical regime needs p < d = {D}")
        pstar = critical_exponent(p, D)
        qs = [float(v) for v in cfg.get("q", [p, pstar])]
        for q in qs:
            if q > pstar * (1 + 1e-12) or q < p:
                raise ConfigError(
                    f"q = {q:g} outside [p, p*] = [{p:g}, {pstar:g}]; p* is optimal: the scaled crude "
                    "inequality with q > p* fails as the scale parameter tends to 0")
        maxima = {}
        for n in res:
            opts = QuadratureOptions(n=n)
            for label, u in fam:
                quad = Quadrature(u, opts)
                w = sobolev_norm(u, 1, p, g, quad=quad)
                r = rearrange(u, quad.spec)
                for q in qs:
                    lor = lorentz_norm(r, q, p)
                    lq = lp_norm(u, q, quad)
                    rows.append((label, n, q, lor, lq, w, lor / w, lq / w))
                    key = q
                    maxima.setdefault(key, {})
                    maxima[key][n] = max(maxima[key].get(n, 0.0), lor / w, lq / w)
        drift = max(_drift(*[m[n] for n in res]) for m in maxima.values()) if len(res) > 1 else 1.0
        # dilate sub-family at q = p*: ||u_lam||_{L^{p*,p}} / |u_lam|_{1,p,B} is constant
        base = families.build_field(g, cfg.get("dilate_base", {"kind": "gaussian", "a": 1.0}))
        ratios = []
        opts = QuadratureOptions(n=res[-1])
        for lam in [float(v) for v in cfg.get("lambdas", [0.5, 1.0, 2.0])]:
            v = base.dilate(lam)
            quad = Quadrature(v, opts)
            semi = sobolev_seminorm(v, 1, p, g, y_variant="full", quad=quad)
            lor = lorentz_norm(rearrange(v, quad.spec), pstar, p)
            ratios.append(lor / semi)
            rows.append((f"dilate:{lam:g}", res[-1], pstar, lor, np.nan, semi, lor / semi, np.nan))
        spread = max(ratios) / min(ratios) - 1
        verdict = spread <= tol_const and drift <= 2.0 and all(np.isfinite(r[6]) for r in rows)
        summary.update({"p": p, "pstar": pstar, "dilate_spread": spread, "refinement_drift": drift})
        return SweepResult(cfg.name, cfg.experiment,
                           ("function", "resolution", "q", "lorentz_qp", "lq", "w1p", "ratio_lorentz", "ratio_lq"),
                           rows, verdict, f"ratios finite, drift <= 2, dilate spread <= {tol_const}", summary=summary)
    if regime == "supercritical":
        p = float(cfg.get("p", 8.0))
        if not p > D:
            raise ConfigError(f"supercritical regime needs p > d = {D}")
        alpha = holder_exponent(p, D)
        samplings = [HolderSampling(n=int(v)) for v in cfg.get("holder_samples", [13, 25])]
        maxima = []
        for n, hs in zip(res, samplings):
            opts = QuadratureOptions(n=n)
            m = 0.0
            for label, u in fam:
                w = _w1p(u, p, g, opts)
                h = holder_norm(u, 0, alpha, g, hs)
                rows.append((label, n, hs.n, alpha, h, w, h / w))
                m = max(m, h / w)
            maxima.append(m)
        drift = _drift(*maxima) if len(maxima) > 1 else 1.0
        summary.update({"p": p, "alpha": alpha, "max_ratio": max(maxima), "refinement_drift": drift})
        return SweepResult(cfg.name, cfg.experiment,
                           ("function", "resolution", "holder_samples", "alpha", "holder", "w1p", "ratio"),
                           rows, bool(np.isfinite(max(maxima)) and drift <= 2.0),
                           "Hoelder ratios finite, drift <= 2", summary=summary)
    if regime == "critical":
        p = float(cfg.get("p", D))
        if p != D:
            raise ConfigError(f"critical regime needs p = d = {D}")
        qs = [float(v) for v in cfg.get("q", [D, 1.5 * D, 2.0 * D])]
        if any(q < D for q in qs):
            raise ConfigError("critical regime uses q >= d")
        maxima = []
        for n in res:
            opts = QuadratureOptions(n=n)
            m = 0.0
            for label, u in fam:
                quad = Quadrature(u, opts)
                w = sobolev_norm(u, 1, p, g, quad=quad)
                r = rearrange(u, quad.spec)
                for q in qs:
                    lor = lorentz_norm(r, q, D)
                    rows.append((label, n, q, lor, w, lor / w))
                    m = max(m, lor / w)
            maxima.append(m)
        drift = _drift(*maxima) if len(maxima) > 1 else 1.0
        summary.update({"p": p, "max_ratio": max(maxima), "refinement_drift": drift})
        return SweepResult(cfg.name, cfg.experiment, ("function", "resolution", "q", "lorentz_qd", "w1d", "ratio"),
                           rows, bool(np.isfinite(max(maxima)) and drift <= 2.0),
                           "Lorentz ratios finite, drift <= 2", summary=summary)
    raise ConfigError(f"unknown regime {regime!r}")


def y_increment_envelope(u, g, p, deltas, lambdas, opts=QuadratureOptions(n=29), sample_n=21):
    """``Psi(delta) = sup_lam sup_z |u_lam(e^{delta Y} z) - u_lam(z)| / ||u_lam||_{W^{2,p}_B}``.

    ``u_lam = u(D_lam .)``. For one fixed smooth function the increment is
    linear in ``delta``; the supremum over the dilate family realises the
    worst case of the class and decays like ``delta^(1 - d/(2p))``.

    Returns
    -------
    (ndarray, ndarray, ndarray)
        ``Psi`` per delta, the maximising ``lam`` per delta and the full
        ratio table of shape ``(len(lambdas), len(deltas))``.
    """
    deltas = np.asarray(deltas, dtype=float)
    table = np.zeros((len(lambdas), deltas.size))
    for i, lam in enumerate(lambdas):
        v = u.dilate(float(lam))
        w2 = sobolev_norm(v, 2, p, g, opts=opts)
        lo, hi = v.box()
        axes = [np.linspace(a, b, sample_n) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        Z = np.column_stack([m.ravel() for m in mesh])
        base = v.evaluate(Z)
        for j, dl in enumerate(deltas):
            inc = np.max(np.abs(v.evaluate(flow_y_points(g, Z, dl)) - base))
            table[i, j] = inc / w2
    best = np.argmax(table, axis=0)
    return table.max(axis=0), np.asarray(lambdas)[best], table


def run_higher_order_sweep(cfg):
    """Second-order checks: ``Y``-Hoelder decay (``p > d``), ``[u]_{Y,1/2,p*}``
    bounds (``p < d``), ``W^{2,p} -> W^{1,p*}`` (``d/2 < p < d``) and
    ``W^{2,p} -> L^{p*_2}`` (``p < d/2``)."""
    g = resolve_operator(cfg.operator)
    D = g.hom_dim
    p = float(cfg.get("p", 8.0))
    if p == 1:
        raise ConfigError("second-order embeddings need p > 1")
    rows = []
    summary = {"p": p, "hom_dim": D}
    fits = {}
    verdict = True
    if p > D:
        target = 1.0 - D / (2 * p)
        tol = cfg.tol(0.1)
        deltas = np.geomspace(*cfg.get("delta_range", [1e-4, 1e-2]), int(cfg.get("n_delta", 7)))
        lams = np.geomspace(*cfg.get("lambda_range", [0.5, 400.0]), int(cfg.get("n_lambda", 36)))
        u = families.build_field(g, (cfg.family or [{"kind": "gaussian", "a": 1.0}])[0])
        psi, lam_best, _ = y_increment_envelope(u, g, p, deltas, lams, _opts(cfg, default=29))
        fit = fit_power_law(deltas, psi)
        fits["y_increment"] = fit
        interior = bool(np.all((lam_best > lams[0]) & (lam_best < lams[-1])))
        for dl, ps_, lb in zip(deltas, psi, lam_best):
            rows.append(("y_increment", dl, ps_, lb, target))
        ok = abs(fit.slope - target) <= tol and interior
        verdict &= ok
        summary.update({"target_slope": target, "slope": fit.slope, "maximiser_interior": interior})
    else:
        res = [int(v) for v in cfg.get("resolutions", [29, 41])]
        fam = _family(cfg, g)
        pstar = critical_exponent(p, D)
        parts = []
        if p < D:
            parts.append("y_frac")
        if D / 2 < p < D:
            parts.append("w1_pstar")
        if p < D / 2:
            parts.append("l_pstar2")
        maxima = {k: [] for k in parts}
        for n in res:
            opts = QuadratureOptions(n=n)
            m = {k: 0.0 for k in parts}
            for label, u in fam:
                quad = Quadrature(u, opts)
                w2 = sobolev_norm(u, 2, p, g, quad=quad)
                for part in parts:
                    if part == "y_frac":
                        val = slobodeckij_y(u, pstar, 0.5, g, quad)
                    elif part == "w1_pstar":
                        val = sobolev_norm(u, 1, pstar, g, quad=quad)
                    else:
                        val = lp_norm(u, critical_exponent(p, D, 2), quad)
                    rows.append((part, label, n, val, w2, val / w2))
                    m[part] = max(m[part], val / w2)
            for k in parts:
                maxima[k].append(m[k])
        for k in parts:
            drift = _drift(*maxima[k]) if len(res) > 1 else 1.0
            summary[f"{k}_max_ratio"] = max(maxima[k])
            summary[f"{k}_drift"] = drift
            verdict &= bool(np.isfinite(max(maxima[k])) and drift <= 2.0)
        summary["pstar"] = pstar
    cols = ("check", "scale_or_function", "value", "aux", "reference") if p > D else \
        ("check", "function", "resolution", "value", "w2p", "ratio")
    return SweepResult(cfg.name, cfg.experiment, cols, rows, bool(verdict),
                       "Y-increment slope within tolerance" if p > D else "ratios finite, drift <= 2",
                       fits=fits, summary=summary)


def run_trudinger_check(cfg):
    """``int_{|u| > delta} exp(lam |u|^(d/(d-1)))`` for ``p = d``, plus the level fit."""
    g = resolve_operator(cfg.operator)
    D = g.hom_dim
    p = float(cfg.get("p", D))
    if p != D:
        raise ConfigError(f"exponential integrability is the p = d = {D} case")
    expo = D / (D - 1)
    lams = [float(v) for v in cfg.get("lambdas", [0.5, 1.0, 2.0])]
    deltas = [float(v) for v in cfg.get("deltas", [0.1, 1.0])]
    spec = (cfg.family or [{"kind": "gaussian", "a": 1.0, "amp": 2.0}])[0]
    u = families.build_field(g, spec)
    levels = gaussian_levels(u)
    quad = Quadrature(u, _opts(cfg))
    vals = np.abs(quad.values(u))
    rows = []
    ok = True
    for lam in lams:
        for dl in deltas:
            mask = vals > dl
            grid_val = float(np.dot(quad.W[mask], np.exp(lam * vals[mask] ** expo)))
            m = float(levels.mu(dl))
            exact = integrate.quad(lambda t: np.exp(lam * float(levels.ustar(t)) ** expo), 0.0, m,
                                   epsabs=0, epsrel=1e-10, limit=200)[0] if m > 0 else 0.0
            bound = np.exp(lam * levels.amplitude ** expo) * m
            rows.append(("integral", lam, dl, grid_val, exact, bound))
            ok &= bool(np.isfinite(grid_val) and np.isfinite(exact) and exact <= bound * (1 + 1e-12))
    ks = np.arange(int(cfg.get("k_min", -20)), 1)
    a = levels.ustar(np.exp(ks.astype(float)))
    res = np.polyfit(np.abs(ks), a ** expo, 1)
    eps_hat = max(float(res[0]), 0.0)
    for k, ak in zip(ks, a):
        rows.append(("level", float(k), np.nan, float(ak ** expo), np.nan, np.nan))
    ok &= all(eps_hat < 1.0 / lam for lam in lams)
    return SweepResult(cfg.name, cfg.experiment, ("kind", "lambda_or_k", "delta", "value", "exact", "bound"),
                       rows, bool(ok), "integrals finite and below the pointwise bound; level slope < 1/lambda",
                       summary={"level_slope": eps_hat, "exponent": expo})


def run_crude_embedding(cfg):
    """``||u||_q <= C ||u||_p^(1-theta) |u|_{1,p,B}^theta`` for ``q in [p, r)``."""
    g = resolve_operator(cfg.operator)
    D = g.hom_dim
    p = float(cfg.get("p", 2.0))
    q = float(cfg.get("q", 2.5))
    r = crude_upper(p, D)
    if not p <= q < r:
        raise ConfigError(f"q must lie in [p, r) = [{p:g}, {r:g})")
    theta = crude_theta(p, q, D)
    tol = cfg.tol(0.01)
    rows = []
    maxima = []
    for n in [int(v) for v in cfg.get("resolutions", [29, 41])]:
        opts = QuadratureOptions(n=n)
        m = 0.0
        for label, u in _family(cfg, g):
            quad = Quadrature(u, opts)
            lq, lpv = lp_norm(u, q, quad), lp_norm(u, p, quad)
            semi = sobolev_seminorm(u, 1, p, g, quad=quad, y_variant="full")
            ratio = lq / (lpv ** (1 - theta) * semi ** theta)
            rows.append((label, n, lq, lpv, semi, ratio))
            m = max(m, ratio)
        maxima.append(m)
    base = families.build_field(g, cfg.get("dilate_base", {"kind": "gaussian", "a": 1.0}))
    ratios = []
    opts = QuadratureOptions(n=int(cfg.get("resolution", 41)))
    for lam in [float(v) for v in cfg.get("lambdas", [0.5, 1.0, 2.0])]:
        v = base.dilate(lam)
        quad = Quadrature(v, opts)
        lq, lpv = lp_norm(v, q, quad), lp_norm(v, p, quad)
        semi = sobolev_seminorm(v, 1, p, g, quad=quad, y_variant="full")
        ratios.append(lq / (lpv ** (1 - theta) * semi ** theta))
        rows.append((f"dilate:{lam:g}", opts.n, lq, lpv, semi, ratios[-1]))
    spread = max(ratios) / min(ratios) - 1
    drift = _drift(*maxima) if len(maxima) > 1 else 1.0
    return SweepResult(cfg.name, cfg.experiment, ("function", "resolution", "lq", "lp", "seminorm", "ratio"), rows,
                       bool(spread <= tol and drift <= 2.0 and np.isfinite(max(maxima))),
                       f"ratios finite, drift <= 2, dilate spread <= {tol}",
                       summary={"theta": theta, "r": r, "dilate_spread": spread, "refinement_drift": drift})


def run_interpolation(cfg):
    """``||u||_{W^{n,p}} <= C ||u||_{W^{m,p}}^(n/m) ||u||_p^(1-n/m)`` with a single fitted ``C``."""
    g = resolve_operator(cfg.operator)
    p = float(cfg.get("p", 2.0))
    n, m = int(cfg.get("n", 1)), int(cfg.get("m", 2))
    if not 1 <= n < m:
        raise ConfigError("need 1 <= n < m")
    theta = n / m
    default = families.default_family(g) + [{"kind": "gaussian", "a": 1.0, "dilate": lam} for lam in (0.25, 4.0)]
    fam = _family(cfg, g, default)
    rows = []
    chat = []
    for res in [int(v) for v in cfg.get("resolutions", [29, 41])]:
        opts = QuadratureOptions(n=res)
        c = 0.0
        for label, u in fam:
            quad = Quadrature(u, opts)
            ev = NormEvaluator(u, p, g, quad, "restricted")
            wn = sobolev_norm(u, n, p, g, quad=quad, _ev=ev)
            wm = sobolev_norm(u, m, p, g, quad=quad, _ev=ev)
            lpv = ev.term((), "lp")
            ratio = wn / (wm ** theta * lpv ** (1 - theta))
            rows.append((label, res, wn, wm, lpv, ratio))
            c = max(c, ratio)
        chat.append(c)
    drift = _drift(*chat) if len(chat) > 1 else 1.0
    return SweepResult(cfg.name, cfg.experiment, ("function", "resolution", "w_n", "w_m", "lp", "ratio"), rows,
                       bool(drift <= 2.0 and np.isfinite(max(chat))), "single constant, drift <= 2",
                       summary={"C_coarse": chat[0], "C_fine": chat[-1], "drift": drift})


def _intrinsic_degree(g, mono):
    w = g.weights()
    return 2 * mono[0] + int(sum(e * wi for e, wi in zip(mono[1:], w)))


def _monomials_up_to(g, n):
    w = g.weights()
    out = []

    def rec(i, rem, cur):
        if i == g.N + 1:
            out.append(tuple(cur))
            return
        wi = 2 if i == 0 else w[i - 1]
        e = 0
        while e * wi <= rem:
            rec(i + 1, rem - e * wi, cur + [e])
            e += 1

    rec(0, n, [])
    return out


def run_taylor_rates(cfg):
    """Remainder slopes against ``||zeta||_B`` and exact reproduction of polynomials."""
    g = resolve_operator(cfg.operator)
    orders = [int(v) for v in cfg.get("orders", [0, 1, 2])]
    p = float(cfg.get("p", 2.0))
    tol = cfg.tol(0.3)
    zeta0 = np.asarray(cfg.get("zeta0", [0.3] + [0.5, -0.4] * g.N)[: g.N + 1], dtype=float)
    sigmas = np.geomspace(*cfg.get("sigma_range", [0.01, 0.1]), int(cfg.get("n_sigma", 6)))
    u = families.build_field(g, (cfg.family or [{"kind": "gaussian", "a": 1.0}])[0])
    rng = np.random.default_rng(cfg.seed)
    rows, fits = [], {}
    ok = True
    for n in orders:
        fit = taylor_remainder_rate(u, g, n, p, zeta0, sigmas, _opts(cfg))
        fits[f"order_{n}"] = fit
        ok &= abs(fit.slope - (n + 1)) <= tol
        for s, v in zip(fit.scales, fit.values):
            rows.append(("remainder", n, s, v, n + 1))
        monos = _monomials_up_to(g, n)
        poly = families.fields.polynomial(g, {m: float(c) for m, c in zip(monos, rng.uniform(-1, 1, len(monos)))})
        zs = rng.uniform(-1, 1, (32, g.N + 1))
        zetas = rng.uniform(-1, 1, (32, g.N + 1))
        exact = poly.evaluate(zs)
        approx = taylor_eval_points(poly, g, n, zetas, zs)
        err = float(np.max(np.abs(exact - approx)) / max(1.0, np.max(np.abs(exact))))
        ok &= err <= 1e-8
        rows.append(("reproduction", n, np.nan, err, 0))
    return SweepResult(cfg.name, cfg.experiment, ("check", "order", "scale", "value", "target"), rows, bool(ok),
                       f"slopes within {tol} of n+1, reproduction <= 1e-8", fits=fits)


def run_mollifier_rates(cfg):
    """Approximation slopes, inverse-estimate slope and unit mass of the kernel."""
    g = resolve_operator(cfg.operator)
    orders = [int(v) for v in cfg.get("orders", [1, 2])]
    p = float(cfg.get("p", 2.0))
    tol = cfg.tol(0.3)
    eps = cfg.get("eps_grid", list(DEFAULT_EPS_GRID))
    u = families.build_field(g, (cfg.family or [{"kind": "gaussian", "a": 1.0}])[0])
    kw = {"nodes": int(cfg.get("kernel_nodes", 8))}
    rows, fits = [], {}
    ok = True
    for n in orders:
        fit = mollify_rate(u, g, n, p, eps, **kw)
        fits[f"approx_{n}"] = fit
        ok &= abs(fit.slope - n) <= tol
        for s, v, used in zip(fit.scales, fit.values, fit.used):
            rows.append(("approx", n, 0, s, v, int(used)))
    n, m = [int(v) for v in cfg.get("inverse", [1, 2])]
    opts = QuadratureOptions(n=int(cfg.get("inverse_resolution", 41)), bands=int(cfg.get("bands", 20)))
    fit = mollify_inverse_rate(u, g, n, m, p, eps, opts=opts, **kw)
    fits[f"inverse_{n}_{m}"] = fit
    ok &= fit.slope >= n - m - tol
    for s, v, used in zip(fit.scales, fit.values, fit.used):
        rows.append(("inverse", n, m, s, v, int(used)))
    mass = BumpKernel(g).mass()
    ok &= abs(mass - 1) <= 1e-8
    rows.append(("unit_mass", 0, 0, np.nan, mass, 1))
    return SweepResult(cfg.name, cfg.experiment, ("check", "n", "m", "eps", "value", "used"), rows, bool(ok),
                       f"slopes within {tol} of n, inverse slope >= n-m-{tol}, |mass-1| <= 1e-8",
                       fits=fits, summary={"mass_defect": abs(mass - 1)})


class HomogeneousPower(AnalyticField):
    """``||z||_B^(-gamma)`` with first-layer derivatives; unbounded at 0."""

    def __init__(self, g, gam):
        self.geometry, self.gam = g, float(gam)
        self.compact = False

    def evaluate(self, pts):
        pts = np.asarray(pts, dtype=float)
        with np.errstate(divide="ignore"):
            return homogeneous_norm_arrays(self.geometry, pts[:, 0], pts[:, 1:]) ** (-self.gam)

    def apply_d(self, i):
        g, gam = self.geometry, self.gam
        if i >= g.d:
            raise NotImplementedError("only first-layer derivatives")
        sl = g.layer_slice(0)

        class _D(AnalyticField):
            def evaluate(s, pts):
                pts = np.asarray(pts, dtype=float)
                nrm = homogeneous_norm_arrays(g, pts[:, 0], pts[:, 1:])
                x0 = pts[:, 1:][:, sl]
                r0 = np.linalg.norm(x0, axis=1)
                with np.errstate(divide="ignore", invalid="ignore"):
                    out = -gam * nrm ** (-gam - 1) * np.where(r0 > 0, x0[:, i] / r0, 0.0)
                # the singular point only occurs where truncations are flat
                return np.where(np.isfinite(out), out, 0.0)

        d = _D()
        d.geometry = g
        return d

    def box(self):
        inf = np.full(self.geometry.N + 1, np.inf)
        return -inf, inf


def homogeneous_ball_volume(g):
    """``Leb{||z||_B < 1}`` by the Dirichlet integral: ``2 Gamma(3) prod V_{d_i} Gamma(a_i + 1) / Gamma(d + 1)``
    with ``a_i = (2i+1) d_i``."""
    val = 2.0 * gamma_fn(3)
    for i, di in enumerate(g.layer_dims):
        val *= np.pi ** (di / 2) / gamma_fn(di / 2 + 1) * gamma_fn((2 * i + 1) * di + 1)
    return val / gamma_fn(g.hom_dim + 1)


@dataclass(frozen=True)
class PowerLevels:
    """Exact distribution of ``||z||_B^(-gamma)``: ``mu(lam) = |B_1| lam^(-d/gamma)``."""

    ball: float
    gam: float
    hom_dim: int

    def ustar(self, t):
        return (np.asarray(t, dtype=float) / self.ball) ** (-self.gam / self.hom_dim)

    ustar_left = ustar


def _ball_box(g, R):
    hi = np.concatenate([[R ** 2], np.concatenate([[R ** (2 * i + 1)] * di for i, di in enumerate(g.layer_dims)])])
    return -hi, hi


def run_tartar(cfg):
    """Level-gap bound with one constant across ``k`` and the ``l^p`` equivalence on two examples."""
    g = resolve_operator(cfg.operator)
    D = g.hom_dim
    p = float(cfg.get("p", 2.0))
    if not p < D:
        raise ConfigError("the level-gap study uses p < d")
    pstar = critical_exponent(p, D)
    u = families.build_field(g, (cfg.family or [{"kind": "gaussian", "a": 1.0}])[0])
    levels = gaussian_levels(u)
    ts = tartar_sequence(levels, tuple(cfg.get("k_window", [-6, 4])), floor=float(cfg.get("floor", 1e-6)))
    rows = []
    chat, terms = [], {}
    for res in [int(v) for v in cfg.get("resolutions", [29, 41])]:
        opts = QuadratureOptions(n=res)
        c = 0.0
        for k, sg in zip(ts.ks, ts.scaled_gaps(pstar)):
            f = truncate(u, ts, k, box=gaussian_level_box(levels, ts.a(k + 1)))
            semi = sobolev_seminorm(f, 1, p, g, opts=opts)
            rows.append(("gap_bound", res, k, sg, semi, sg / semi))
            c = max(c, sg / semi)
            terms[k] = semi
        chat.append(c)
    drift = _drift(*chat) if len(chat) > 1 else 1.0
    # level measures on the sampled rearrangement
    r = rearrange(u, opts=QuadratureOptions(n=int(cfg.get("resolution", 41))))
    ts_grid = tartar_sequence(r, (-40, 40))
    measures_ok = check_level_measures(r, ts_grid)
    # convergent example: terms decay at both window ends
    tv = np.array([terms[k] for k in ts.ks])
    edge = max(tv[0], tv[-1]) / tv.max()
    for k, v in zip(ts.ks, tv):
        rows.append(("lp_terms_convergent", 0, k, v ** p, np.nan, np.nan))
    # divergent example: critical power, every term equal by homogeneity
    gam = (D - p) / p
    pw = HomogeneousPower(g, gam)
    plev = PowerLevels(homogeneous_ball_volume(g), gam, D)
    pts = tartar_sequence(plev, tuple(cfg.get("power_window", [0, 3])))
    pv = []
    opts = QuadratureOptions(n=int(cfg.get("resolution", 41)))
    for k in pts.ks:
        # pad the ball so that no node sits on the outer level sphere, where
        # the derivative jumps
        R = 1.05 * pts.a(k + 1) ** (-1.0 / gam)
        f = truncate(pw, pts, k, box=_ball_box(g, R))
        semi = sobolev_seminorm(f, 1, p, g, y_variant="full", opts=opts)
        pv.append(semi)
        rows.append(("lp_terms_divergent", opts.n, k, semi ** p, np.nan, np.nan))
    pv = np.array(pv)
    flat = pv.max() / pv.min() - 1
    ok = drift <= 2.0 and np.isfinite(max(chat)) and measures_ok and edge <= 0.25 and flat <= 0.01
    return SweepResult(cfg.name, cfg.experiment, ("check", "resolution", "k", "lhs", "seminorm", "ratio"), rows,
                       bool(ok), "one constant (drift <= 2); convergent terms decay; divergent terms constant",
                       summary={"c_hat_coarse": chat[0], "c_hat_fine": chat[-1], "drift": drift,
                                "convergent_edge_ratio": edge, "divergent_spread": flat,
                                "level_measures": measures_ok, "pstar": pstar})


def run_lorentz_checks(cfg):
    """Equimeasurability, ``L^{p,p} = L^p`` on steps, tail equivalence and level measures."""
    g = resolve_operator(cfg.operator)
    ps = [float(v) for v in cfg.get("p", [1.0, 1.5, 2.0, 3.0, 6.0])]
    rows = []
    ok = True
    worst = 0.0
    opts = _opts(cfg, default=33)
    for label, u in _family(cfg, g):
        quad = Quadrature(u, opts)
        r = rearrange(u, quad.spec)
        for p in ps:
            a, b = r.lp_norm(p), lp_norm(u, p, quad)
            dev = abs(a / b - 1)
            worst = max(worst, dev)
            rows.append(("equimeasurable", label, p, a, b, dev))
            qs = sorted({1.0, 2.0, p, np.inf})
            vals = {q: lorentz_norm(r, p, q) for q in qs}
            for q1, q2 in zip(qs[:-1], qs[1:]):
                ok &= vals[q2] <= nesting_constant(p, q1, q2) * vals[q1] * (1 + 1e-12)
        ts = tartar_sequence(r, (-40, 40))
        ok &= check_level_measures(r, ts)
    ok &= worst <= 1e-12
    step = step_rearrangement([3.0, 2.0, 0.5], [0.5, 1.25, 4.0])
    for p in ps:
        a = lorentz_norm(step, p, p)
        b = float(np.sum(np.array([3.0, 2.0, 0.5]) ** p * np.array([0.5, 0.75, 2.75]))) ** (1 / p)
        rows.append(("step_lpp", "step", p, a, b, abs(a - b)))
        ok &= abs(a - b) <= 1e-12 * b
    K = int(cfg.get("tail_length", 60))
    for kind in ("convergent", "divergent"):
        sums = tail_partial_sums(kind, 2.0, 2.0, K)
        half = sums[K // 2 - 2]
        last = sums[-1]
        growth_norm = last[1] - half[1]
        growth_seq = last[2] - half[2]
        rows.append((f"tail_{kind}", kind, 2.0, last[1], last[2], growth_seq))
        # divergent: the half-to-full increment stays near log(2) times a constant
        if kind == "convergent":
            ok &= growth_seq < 0.05 and growth_norm < 0.05
        else:
            ok &= growth_seq > 0.5 and growth_norm > 0.3
    return SweepResult(cfg.name, cfg.experiment, ("check", "function", "p", "value", "reference", "deviation"),
                       rows, bool(ok), "equimeasurability <= 1e-12; exact L^{p,p}; tails; level measures",
                       summary={"max_equimeasurability_dev": worst})


def run_kernel_bounds(cfg):
    """Covariance, homogeneity, mass and residual identities of the kernel, and
    sampled suprema of ``||z||^(d-2) Gamma`` and ``||z||^d |Y Gamma|`` under two refinements."""
    g = resolve_operator(cfg.operator)
    cp = covariance(g)
    rows = []
    ok = True
    for t in (0.3, 1.0, 2.5):
        ref = covariance_quadrature(g, t)
        dev = float(np.max(np.abs(cp.evaluate(t) - ref)) / np.max(np.abs(ref)))
        rows.append(("covariance_vs_quadrature", t, dev, 1e-10))
        ok &= dev <= 1e-10
    for lam in (0.5, 2.0, 3.0):
        dev = homogeneity_defect(cp, lam, 0.7)
        rows.append(("covariance_homogeneity", lam, dev, 1e-12))
        ok &= dev <= 1e-12
    for t in (0.5, 1.0, 2.0):
        dev = abs(kernel_integral(cp, t) - 1)
        rows.append(("unit_integral", t, dev, 1e-6))
        ok &= dev <= 1e-6
    ts, xs = bulk_points(cp, 12, seed=cfg.seed)
    worst = 0.0
    for t, x in zip(ts, xs):
        res, scale = kolmogorov_residual_fd(cp, GroupPoint(t, x))
        worst = max(worst, abs(res) / scale)
    rows.append(("fd_residual", np.nan, worst, 1e-5))
    ok &= worst <= 1e-5
    D = g.hom_dim
    for lam in (0.5, 2.0):
        Dh = dilation_factors(g, lam)
        a = gamma_arrays(cp, lam ** 2 * ts, xs * Dh)[0] * lam ** (D - 2)
        b = gamma_arrays(cp, ts, xs)[0]
        dev = float(np.max(np.abs(a - b) / np.abs(b)))
        rows.append(("kernel_homogeneity", lam, dev, 1e-10))
        ok &= dev <= 1e-10
    spec = SampleSpec(**cfg.get("sample", {}))
    reps = [kernel_bound_check(cp, spec), kernel_bound_check(cp, spec.refine()),
            kernel_bound_check(cp, spec.refine().refine())]
    for i, r in enumerate(reps):
        rows.append(("sup_gamma", r.n_samples, r.sup_gamma, np.nan))
        rows.append(("sup_y_gamma", r.n_samples, r.sup_y_gamma, np.nan))
    tol = cfg.tol(0.05)
    d1 = max(abs(reps[i + 1].sup_gamma / reps[i].sup_gamma - 1) for i in range(2))
    d2 = max(abs(reps[i + 1].sup_y_gamma / reps[i].sup_y_gamma - 1) for i in range(2))
    ok &= max(d1, d2) <= tol and all(np.isfinite([r.sup_gamma for r in reps] + [r.sup_y_gamma for r in reps]))
    return SweepResult(cfg.name, cfg.experiment, ("check", "parameter", "value", "tolerance"), rows, bool(ok),
                       f"identities within tolerance; suprema drift <= {tol}",
                       summary={"drift_gamma": d1, "drift_y_gamma": d2, "fd_residual": worst})


def structure_checks(g, samples=64, seed=0):
    """Rows ``(check, value, tolerance, ok)`` for the algebraic identities of a geometry."""
    rng = np.random.default_rng(seed)
    rows = []
    P = matrix_power(g, g.r + 1)
    rows.append(("nilpotent", float(np.max(np.abs(P))), 0.0, bool(np.all(P == 0))))
    s = rng.uniform(-3, 3, samples)
    dets = np.linalg.det(matrix_exp_batch(g, s))
    dev = float(np.max(np.abs(dets - 1)))
    rows.append(("det_exp", dev, 1e-12, dev <= 1e-12))
    pts = [GroupPoint(*_split(rng.uniform(-2, 2, g.N + 1))) for _ in range(3 * samples)]
    assoc = inv = ident = 0.0
    e = GroupPoint(0.0, np.zeros(g.N))
    for a, b, c in zip(pts[0::3], pts[1::3], pts[2::3]):
        lhs = compose(g, compose(g, a, b), c).as_array()
        rhs = compose(g, a, compose(g, b, c)).as_array()
        assoc = max(assoc, float(np.max(np.abs(lhs - rhs)) / max(1.0, np.max(np.abs(lhs)))))
        inv = max(inv, float(np.max(np.abs(compose(g, a, invert(g, a)).as_array()))),
                  float(np.max(np.abs(compose(g, invert(g, a), a).as_array()))))
        ident = max(ident, float(np.max(np.abs(compose(g, a, e).as_array() - a.as_array()))),
                    float(np.max(np.abs(compose(g, e, a).as_array() - a.as_array()))))
    rows.append(("associativity", assoc, 1e-12, assoc <= 1e-12))
    rows.append(("inverse", inv, 1e-12, inv <= 1e-12))
    rows.append(("identity", ident, 1e-12, ident <= 1e-12))
    hom = 0.0
    for a in pts[:samples]:
        for lam in (0.3, 2.0, 7.5):
            n0 = homogeneous_norm(g, a)
            hom = max(hom, abs(homogeneous_norm(g, dilate(g, lam, a)) / (lam * n0) - 1))
    rows.append(("norm_homogeneity", hom, 1e-14, hom <= 1e-14))
    expected = 2 + sum((2 * k + 1) * dk for k, dk in enumerate(g.layer_dims))
    rows.append(("hom_dim", float(g.hom_dim), float(expected), g.hom_dim == expected))
    cert = check_hormander(g)
    rows.append(("hormander_rank", float(cert.rank), float(cert.N), bool(cert.hormander)))
    return rows


def _split(v):
    return float(v[0]), np.asarray(v[1:])


def run_structure(cfg):
    """Nilpotency, ``det e^(sB) = 1``, group axioms, norm homogeneity and ``d`` for each operator."""
    ops = cfg.get("operators", list(BUILTIN_OPERATORS))
    rows = []
    ok = True
    for ref in ops:
        g = resolve_operator(ref)
        for check, value, tol, passed in structure_checks(g, int(cfg.get("samples", 64)), cfg.seed):
            rows.append((ref, check, value, tol, passed))
            ok &= passed
        if "langevin" in str(ref):
            ok &= g.hom_dim == 4 * g.d + 2
    return SweepResult(cfg.name, cfg.experiment, ("operator", "check", "value", "tolerance", "ok"), rows, bool(ok),
                       "exact nilpotency; identities to 1e-12; norm homogeneity to machine precision")


REGISTRY = {
    "scaling": (run_scaling_suite, "scaling factors of L^p norms and intrinsic seminorms under dilations"),
    "embedding-subcritical": (lambda c: run_embedding_sweep(c, "subcritical"),
                              "p < d: Lorentz and L^q ratios, dilate constancy at p*"),
    "embedding-supercritical": (lambda c: run_embedding_sweep(c, "supercritical"),
                                "p > d: intrinsic Hoelder ratios"),
    "embedding-critical": (lambda c: run_embedding_sweep(c, "critical"), "p = d: Lorentz ratios for q >= d"),
    "higher-order": (run_higher_order_sweep, "second-order embeddings (Y-Hoelder decay, fractional Y bound)"),
    "trudinger": (run_trudinger_check, "p = d: exponential integrability and level-sequence fit"),
    "crude": (run_crude_embedding, "interpolated L^q bound for q in [p, p(d+p)/d)"),
    "interpolation": (run_interpolation, "W^n bounded by W^m and L^p with one constant"),
    "taylor": (run_taylor_rates, "Taylor remainder slopes and polynomial reproduction"),
    "mollifier": (run_mollifier_rates, "mollifier approximation and inverse-estimate slopes"),
    "tartar": (run_tartar, "level-gap bound and l^p equivalence of truncations"),
    "lorentz": (run_lorentz_checks, "rearrangement and Lorentz-norm identities"),
    "kernel-bounds": (run_kernel_bounds, "kernel identities and suprema stability"),
    "structure": (run_structure, "group algebra identities of the builtin operators"),
}


def list_experiments():
    return [(k, v[1]) for k, v in REGISTRY.items()]


def run_experiment(cfg):
    return REGISTRY[cfg.experiment][0](cfg)


def run_lab(cfgs, workers=None):
    """Run configs as independent jobs; results come back in config order."""
    return ordered_map(run_experiment, cfgs, workers)


def _plot_fits(result, outdir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for key, fit in result.fits.items():
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        x, y = np.asarray(fit.scales), np.asarray(fit.values)
        used = np.asarray(fit.used, dtype=bool)
        ax.loglog(x[used], y[used], "o", label="fitted")
        if np.any(~used):
            ax.loglog(x[~used], y[~used], "x", label="dropped")
        ax.loglog(x, np.exp(fit.intercept) * x ** fit.slope, "-", label=f"slope {fit.slope:.3f}")
        ax.set_title(f"{result.name}: {key}")
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(outdir, f"{result.name}-{key}.png"), dpi=100)
        plt.close(fig)


def emit_report(results, outdir, plots=False):
    """Write ``<name>.csv`` per result and ``summary.json``; return the exit code.

    With ``plots=True`` every fitted rate is also drawn to
    ``<name>-<fit>.png`` (needs matplotlib).

    Raises
    ------
    ValueError
        On an empty result list.
    OSError
        If the output directory cannot be written.
    """
    if not results:
        raise ValueError("no results to report")
    os.makedirs(outdir, exist_ok=True)
    for r in results:
        with open(os.path.join(outdir, f"{r.name}.csv"), "w", newline="") as fh:
            fh.write(r.to_csv())
        if plots and r.fits:
            _plot_fits(r, outdir)
    summary = {"results": [r.to_json() for r in results],
               "all_pass": all(r.verdict for r in results)}
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0 if summary["all_pass"] else 1


def read_report(outdir):
    """Load ``summary.json`` from a report directory."""
    path = os.path.join(outdir, "summary.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no summary.json in {outdir}")
    with open(path) as fh:
        return json.load(fh)
