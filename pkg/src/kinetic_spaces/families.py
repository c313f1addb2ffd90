"""
Test families and the textual function-spec grammar.

A function spec is ``kind`` or ``kind:key=value;key=value``. Values are
numbers or comma-separated number lists. Kinds:

``gaussian``
    ``a`` (space coefficients), ``at`` (time coefficient), ``amp``, ``center``.
``bump``
    ``radius`` (per axis, time first), ``center``, ``amp``.
``modbump``
    ``radius``, ``omega``, ``axis`` (1-based space axis, 0 for time), ``phase``, ``center``.
``poly``
    ``terms`` as ``e0-e1-...-eN/coef`` items separated by commas, exponents
    for ``(t, x_1, ..., x_N)``, for example ``poly:terms=0-1-0/1,1-0-0/0.5``.

Modifiers ``dilate=lam`` and ``translate=t,x1,...`` apply ``u(D_lam .)`` and
``u(zeta o .)`` afterwards.
"""

import numpy as np

from . import fields
from .structure import GroupPoint


class SpecError(ValueError):
    pass


def _numbers(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise SpecError(f"bad number list {text!r}") from exc
    if not vals:
        raise SpecError("empty value")
    return vals


def parse_function_spec(text):
    """Split a spec string into ``(kind, {key: raw value})``."""
    kind, _, rest = text.strip().partition(":")
    kind = kind.strip().lower()
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(";"))):
        key, eq, val = item.partition("=")
        if not eq:
            raise SpecError(f"expected key=value, got {item!r}")
        params[key.strip().lower()] = val.strip()
    return kind, params


def _scalar_or_list(vals):
    return vals[0] if len(vals) == 1 else vals


def build_field(g, spec):
    """Build an analytic field from a spec string or a dict ``{"kind": ..., ...}``.

    Raises
    ------
    SpecError
        On unknown kinds or malformed values.
    """
    if isinstance(spec, str):
        kind, raw = parse_function_spec(spec)
        params = {k: (v if k == "terms" else _scalar_or_list(_numbers(v))) for k, v in raw.items()}
    else:
        params = {k.lower(): v for k, v in spec.items() if k != "kind"}
        kind = str(spec.get("kind", "")).lower()
    dil = params.pop("dilate", None)
    tr = params.pop("translate", None)
    if kind == "gaussian":
        u = fields.gaussian(g, params.get("a", 1.0), params.get("at"), params.get("center"), params.get("amp", 1.0))
    elif kind == "bump":
        u = fields.bump(g, params.get("radius", 1.0), params.get("center"), params.get("amp", 1.0))
    elif kind == "modbump":
        u = fields.modulated_bump(g, params.get("radius", 1.0), params.get("omega", 2.0), int(params.get("axis", 1)),
                                  params.get("center"), params.get("phase", 0.0))
        if "amp" in params:
            u = u * float(params["amp"])
    elif kind == "poly":
        terms = params.get("terms")
        if not terms:
            raise SpecError("poly needs terms")
        out = {}
        items = terms if isinstance(terms, (list, tuple)) else str(terms).split(",")
        for item in items:
            if isinstance(item, str):
                mono, slash, coef = item.partition("/")
                exps = tuple(int(e) for e in mono.split("-"))
                c = float(coef) if slash else 1.0
            else:
                exps, c = tuple(item[0]), float(item[1])
            if len(exps) != g.N + 1:
                raise SpecError(f"monomial {item!r} needs {g.N + 1} exponents")
            out[exps] = out.get(exps, 0.0) + c
        u = fields.polynomial(g, out)
    else:
        raise SpecError(f"unknown function kind {kind!r}")
    if dil is not None:
        u = u.dilate(float(dil))
    if tr is not None:
        z = np.asarray(tr, dtype=float).reshape(-1)
        if z.size != g.N + 1:
            raise SpecError("translate needs N+1 numbers")
        u = u.translate(GroupPoint(z[0], z[1:]))
    return u


def default_family(g):
    """Embedding test family: Gaussians, a bump, a modulated bump, dilates and a translate."""
    N = g.N
    specs = [
        {"kind": "gaussian", "a": 1.0},
        {"kind": "gaussian", "a": list(np.linspace(0.6, 1.6, N)), "at": 0.8},
        {"kind": "bump", "radius": [1.0] + [1.2] * N},
        {"kind": "modbump", "radius": [1.0] + [1.5] * N, "omega": 2.5, "axis": 1},
        {"kind": "gaussian", "a": 1.0, "dilate": 0.5},
        {"kind": "gaussian", "a": 1.0, "dilate": 2.0},
        {"kind": "bump", "radius": [1.0] + [1.2] * N, "translate": [0.3] + [0.5] * N},
    ]
    return specs


def describe(spec):
    if isinstance(spec, str):
        return spec
    items = [f"{k}={v}" for k, v in sorted(spec.items()) if k != "kind"]
    return spec.get("kind", "?") + (":" + ";".join(items) if items else "")
