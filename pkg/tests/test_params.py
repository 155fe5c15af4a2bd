import pytest

from marfert.params import (
    PARAM_KEYS,
    ConfigError,
    ModelParams,
    SolverSettings,
    format_flat,
    load_params,
    parse_flat,
    save_params,
)


def test_baseline_values(base):
    f = base.to_flat()
    assert f["gamma_c"] == 1.582 and f["alpha_n"] == 3.211
    assert f["mu_b"] == -1.603 and f["sigma_b"] == 1.326
    assert f["kappa"] == 0.1 and f["beta"] == 0.96
    assert set(f) == set(PARAM_KEYS)


def test_past_differs_in_three_keys(base, past):
    assert set(base.diff(past)) == {"alpha_l", "mu_wf", "theta"}
    assert past.prefs.alpha_l == 1.858 and past.wages.mu_f == -0.144 and past.home.theta == 0.923


def test_roundtrip(tmp_path, base):
    path = tmp_path / "p.txt"
    save_params(base, path, header="round trip")
    assert load_params(path) == base


def test_missing_key_named(tmp_path, base):
    flat = base.to_flat()
    del flat["theta"]
    path = tmp_path / "p.txt"
    path.write_text(format_flat(flat))
    with pytest.raises(ConfigError, match="theta"):
        load_params(path)


def test_unknown_key_named(base):
    flat = base.to_flat()
    flat["zeta"] = 1.0
    with pytest.raises(ConfigError, match="zeta"):
        ModelParams.from_flat(flat)


@pytest.mark.parametrize("key,val", [("theta", 1.0), ("xi", 1.0), ("kappa", 0.0), ("sigma_b", -1.0), ("gamma_c", 1.0)])
def test_bounds_rejected(base, key, val):
    with pytest.raises(ValueError):
        base.with_values(**{key: val})


def test_parse_flat_comments_and_types():
    vals = parse_flat("a = 1  # int\nb = 2.5\n\n# only comment\nc = some/path.txt\n")
    assert vals == {"a": 1, "b": 2.5, "c": "some/path.txt"}
    assert isinstance(vals["a"], int)


@pytest.mark.parametrize("text", ["no equals sign", "= 3", "a = 1\na = 2"])
def test_parse_flat_errors(text):
    with pytest.raises(ConfigError):
        parse_flat(text)


def test_settings_overrides():
    s = SolverSettings().with_overrides(w_tol=1e-8, dist_tol=None)
    assert s.w_tol == 1e-8 and s.dist_tol == SolverSettings().dist_tol
