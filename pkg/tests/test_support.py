import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinetic_spaces import families, fields
from kinetic_spaces.fitting import fit_power_law
from kinetic_spaces.parallel import ENV_WORKERS, chunks, ordered_map, worker_count
from kinetic_spaces.structure import GroupPoint


def test_parse_spec():
    kind, params = families.parse_function_spec("Gaussian: a=1,2 ; amp=3")
    assert kind == "gaussian" and params == {"a": "1,2", "amp": "3"}
    with pytest.raises(families.SpecError):
        families.parse_function_spec("gaussian:a")


def test_build_from_string_and_dict_agree(g1, rng):
    a = families.build_field(g1, "gaussian:a=0.5,1.5;at=0.8;amp=2")
    b = families.build_field(g1, {"kind": "gaussian", "a": [0.5, 1.5], "at": 0.8, "amp": 2})
    pts = rng.normal(size=(10, 3))
    assert np.array_equal(a.evaluate(pts), b.evaluate(pts))


def test_build_modifiers(g1, rng):
    base = fields.gaussian(g1, 1.0)
    pts = rng.normal(size=(10, 3))
    assert np.allclose(families.build_field(g1, "gaussian:dilate=2").evaluate(pts), base.dilate(2.0).evaluate(pts))
    z = GroupPoint(0.1, [0.2, 0.3])
    assert np.allclose(families.build_field(g1, "gaussian:translate=0.1,0.2,0.3").evaluate(pts),
                       base.translate(z).evaluate(pts))


def test_build_poly(g1):
    u = families.build_field(g1, "poly:terms=0-1-0/2,1-0-0/0.5")
    assert u.evaluate(np.array([[2.0, 3.0, 5.0]]))[0] == pytest.approx(2 * 3 + 0.5 * 2)


@pytest.mark.parametrize("bad", ["nope", "poly", "poly:terms=1-1/1", "gaussian:a=x", "gaussian:translate=1,2"])
def test_build_errors(g1, bad):
    with pytest.raises(families.SpecError):
        families.build_field(g1, bad)


def test_default_family_builds(g2):
    specs = families.default_family(g2)
    assert len(specs) == 7
    for s in specs:
        u = families.build_field(g2, s)
        assert np.all(np.isfinite(u.evaluate(np.zeros((1, g2.N + 1)))))
        assert families.describe(s).startswith(s["kind"])


@given(st.floats(-3, 3), st.floats(-2, 2))
def test_fit_exact_power_law(slope, icpt):
    x = np.geomspace(0.01, 1, 6)
    fit = fit_power_law(x, np.exp(icpt) * x ** slope)
    assert fit.slope == pytest.approx(slope, abs=1e-9)
    assert fit.intercept == pytest.approx(icpt, abs=1e-9)


def test_fit_mask_and_errors():
    x = np.array([0.1, 0.2, 0.4, 0.8])
    y = x ** 2
    y[0] = 50
    fit = fit_power_law(x, y, used=[False, True, True, True])
    assert fit.slope == pytest.approx(2.0)
    assert fit.to_csv().splitlines()[1].endswith(",0")
    assert "slope=2.0" in fit.summary()
    with pytest.raises(ValueError):
        fit_power_law([1, 1], [1, 2])
    with pytest.raises(ValueError):
        fit_power_law([1, 2], [0, 2])


def test_ordered_map_preserves_order():
    items = list(range(50))
    assert ordered_map(lambda v: v * v, items, workers=4) == [v * v for v in items]
    assert ordered_map(lambda v: v, [], workers=3) == []


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv(ENV_WORKERS, "3")
    assert worker_count() == 3
    monkeypatch.setenv(ENV_WORKERS, "0")
    assert worker_count() == 1
    monkeypatch.setenv(ENV_WORKERS, "x")
    with pytest.raises(ValueError):
        worker_count()
    monkeypatch.delenv(ENV_WORKERS)
    assert worker_count(5) == 5


@given(st.integers(0, 200), st.integers(1, 20))
def test_chunks_cover(n, parts):
    sl = chunks(n, parts)
    assert sum(s.stop - s.start for s in sl) == n
    assert all(a.stop == b.start for a, b in zip(sl, sl[1:]))
