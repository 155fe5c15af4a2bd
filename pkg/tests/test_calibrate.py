import numpy as np
import pandas as pd
import pytest

from marfert.calibrate import (
    PENALTY,
    DecompositionError,
    EstimationSpec,
    MomentTarget,
    baseline_targets,
    decompose,
    distance_from_moments,
    estimate,
    load_spec,
    moment_distance,
    moment_residuals,
    parse_targets,
    past_targets,
    write_decomposition,
)
from marfert.equilibrium import FIT_MOMENTS, solve_equilibrium
from marfert.params import ConfigError, SolverSettings, save_params


def test_perfect_fit_is_zero():
    targets = [MomentTarget("cfr", 1.6), MomentTarget("single_l_m", 0.5)]
    assert distance_from_moments({"cfr": 1.6, "single_l_m": 0.5}, targets) == 0.0


def test_one_scale_unit_is_one():
    t = [MomentTarget("single_l_m", 0.5)]
    assert distance_from_moments({"single_l_m": 1.0}, t) == pytest.approx(1.0)
    # tiny targets use the floor as scale
    t = [MomentTarget("single_logw_gap", 0.001)]
    assert distance_from_moments({"single_logw_gap": 0.011}, t) == pytest.approx(1.0)


def test_order_of_targets_irrelevant():
    targets = baseline_targets()
    rng = np.random.default_rng(0)
    moments = {t.name: t.value * (1 + 0.1 * rng.normal()) for t in targets}
    perm = [targets[k] for k in rng.permutation(len(targets))]
    assert distance_from_moments(moments, targets) == pytest.approx(distance_from_moments(moments, perm), rel=1e-14)


def test_target_files():
    assert {t.name for t in baseline_targets()} == set(FIT_MOMENTS)
    assert [t.name for t in past_targets()] == ["single_l_m", "single_logw_gap", "wife_domestic_share"]


def test_parse_targets_validation():
    t = parse_targets({"cfr": 1.5, "cfr.weight": 2.0, "cfr.source": "table"})
    assert t == [MomentTarget("cfr", 1.5, 2.0, "table")]
    with pytest.raises(ConfigError):
        parse_targets({"bogus": 1.0})
    with pytest.raises(ConfigError):
        parse_targets({"cfr": 1.0, "cfr.colour": 2})
    with pytest.raises(ConfigError):
        parse_targets({"cfr": 1.0, "cfr.weight": 0.0})


def test_residual_table(eq):
    targets = baseline_targets()
    res = moment_residuals(eq.moments, targets)
    assert list(res.columns) == ["moment", "data", "model", "gap", "scaled_gap", "weight"]
    assert np.allclose(res["gap"], res["model"] - res["data"])
    assert (res["scaled_gap"] ** 2 * res["weight"]).sum() == pytest.approx(distance_from_moments(eq.moments, targets))


def test_solver_failure_penalised(base):
    tight = SolverSettings(dist_max_iter=1)
    assert moment_distance(base, baseline_targets(), tight) == PENALTY
    with pytest.raises(TypeError):
        moment_distance({"alpha_l": 1.0}, baseline_targets())


@pytest.fixture(scope="module")
def small(base):
    return base.with_values(n_wage_grid=7)


def test_recovers_leisure_weight(small):
    truth = small.with_values(alpha_l=2.0)
    target = solve_equilibrium(truth).moments.single_l_m
    spec = EstimationSpec(
        base=small, free={"alpha_l": (1.0, 3.5)}, targets=(MomentTarget("single_l_m", target),),
        budget=60, starts=3, seed=1, xatol=1e-7,
    )
    res = estimate(spec)
    assert res.params.prefs.alpha_l == pytest.approx(2.0, abs=0.01)
    assert res.n_evals <= 60 + 1
    assert res.trace["loss"].min() == pytest.approx(res.loss, abs=1e-12)


def test_empty_free_set(small):
    spec = EstimationSpec(base=small, free={}, targets=tuple(past_targets()))
    res = estimate(spec)
    assert res.params == small and res.n_evals == 1
    assert res.loss == pytest.approx(moment_distance(small, past_targets()))


def test_estimation_needs_a_feasible_point(small):
    spec = EstimationSpec(base=small, free={"alpha_l": (1.0, 3.0)}, targets=tuple(past_targets()), budget=3, starts=2)
    from marfert.calibrate import EstimationError

    with pytest.raises(EstimationError):
        estimate(spec, SolverSettings(dist_max_iter=1))


def test_spec_validation(small):
    with pytest.raises(ConfigError):
        EstimationSpec(base=small, free={"nope": (0, 1)}, targets=())
    with pytest.raises(ConfigError):
        EstimationSpec(base=small, free={"alpha_l": (2.0, 1.0)}, targets=())


def test_load_spec(tmp_path, small):
    save_params(small, tmp_path / "p.txt")
    (tmp_path / "t.txt").write_text("single_l_m = 0.5\n")
    (tmp_path / "s.txt").write_text("params = p.txt\ntargets = t.txt\nfree.theta = 0.6, 0.95\nbudget = 5\n")
    spec = load_spec(tmp_path / "s.txt")
    assert spec.free == {"theta": (0.6, 0.95)} and spec.budget == 5
    (tmp_path / "bad.txt").write_text("params = p.txt\nfree.theta = 0.6\n")
    with pytest.raises(ConfigError):
        load_spec(tmp_path / "bad.txt")


def test_null_decomposition(small, tmp_path):
    dec = decompose(small, small)
    t = dec.table
    assert list(t["row"]) == ["baseline", "leisure", "female_wage", "norms", "all"]
    assert np.allclose(t["marriage_rate"], t["marriage_rate"].iloc[0])
    assert np.allclose(t["cfr"], t["cfr"].iloc[0])
    assert dec.explained_marriage == 0.0 and dec.explained_cfr == 0.0
    write_decomposition(dec, tmp_path / "d.csv")
    back = pd.read_csv(tmp_path / "d.csv")
    assert back["row"].iloc[-1] == "explained_share"


def test_decomposition_flags(small):
    other = small.with_values(alpha_l=2.0, theta=0.8)
    t = decompose(small, other).table.set_index("row")
    assert t.loc["leisure", "alpha_l"] == 1 and t.loc["leisure", "theta"] == 0
    # mu_wf is unchanged, so its row equals the baseline
    assert t.loc["female_wage", "mu_wf"] == 0
    assert t.loc["female_wage", "cfr"] == pytest.approx(t.loc["baseline", "cfr"])
    assert t.loc["all"][["alpha_l", "theta"]].tolist() == [1, 1]


def test_decomposition_rejects_other_changes(small):
    with pytest.raises(ConfigError, match="beta"):
        decompose(small, small.with_values(beta=0.95))


def test_decomposition_failure_names_row(small):
    with pytest.raises(DecompositionError, match="baseline"):
        decompose(small, small, settings=SolverSettings(dist_max_iter=1))
