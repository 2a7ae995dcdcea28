"""Coupled urns: shared factors, cross statistics, combined intervals."""

import numpy as np
import pytest

from hrru import rng
from hrru.estimators import FROM_MN, FROM_ZN, plugin_estimates
from hrru.multi_urn import (
    CommonFactors,
    SystemState,
    UrnSpec,
    UrnSystem,
    conditional_independence_stat,
    linear_combination_ci,
    mean_reinforcement_test,
    per_urn_summary,
    run_system,
    system_step,
)
from hrru.urn_core import ConfigError, ParameterError, run_trajectory

UNIFORM3 = dict(values=(0, 1, 2), probs=(1 / 3, 1 / 3, 1 / 3))


def _dist(**kw):
    from hrru.urn_core import IntegerDistribution

    spec = dict(UNIFORM3)
    spec.update(kw)
    return IntegerDistribution(spec["values"], spec["probs"])


def _system(labels=("A", "B"), a=10, b=10, draw_base=2, reinforce_base=1,
            factors=None):
    urns = tuple(
        UrnSpec(label=lab, a=a, b=b, draw_base=draw_base, reinforce_base=reinforce_base)
        for lab in labels
    )
    return UrnSystem(urns=urns, factors=factors or CommonFactors())


def test_system_validation_collects_everything():
    with pytest.raises(ConfigError) as ei:
        UrnSystem(
            urns=(
                UrnSpec(label="A", a=0, b=5, draw_base=1, reinforce_base=1),
                UrnSpec(label="A", a=3, b=-2, draw_base=1, reinforce_base=0),
            ),
            factors=CommonFactors(),
        )
    problems = ei.value.problems
    # duplicate labels, a, b, reinforce_base: all reported in one pass
    assert len(problems) >= 4
    joined = " | ".join(problems)
    assert "distinct" in joined
    assert "a must" in joined and "b must" in joined


def test_system_validation_cross_checks_after_basics():
    # bound checks run once the per-urn basics are valid
    with pytest.raises(ConfigError) as ei:
        UrnSystem(
            urns=(
                UrnSpec(label="A", a=3, b=3, draw_base=9, reinforce_base=1),
                UrnSpec(label="B", a=2, b=2, draw_base=5, reinforce_base=1),
            ),
            factors=CommonFactors(),
        )
    assert any("k <= a + b" in p for p in ei.value.problems)


def test_system_rejects_factor_that_can_zero_the_draw():
    bad = _dist(values=(-1, 0, 1))
    with pytest.raises(ConfigError, match="min F' >= 1"):
        _system(draw_base=1, factors=CommonFactors(draw=bad))


def test_system_rejects_draw_bound_above_smallest_urn():
    with pytest.raises(ConfigError, match="k <= a \\+ b"):
        _system(a=2, b=1, draw_base=2, factors=CommonFactors(draw=_dist()))


def test_system_k_and_stride():
    sys2 = _system(draw_base=2, factors=CommonFactors(draw=_dist(), reinforce=_dist()))
    assert sys2.k == 4
    assert sys2.draw_stride == 4
    plain = _system(draw_base=3)
    assert plain.k == 3
    assert plain.draw_stride == 3


def test_shared_factors_are_identical_across_urns():
    sys2 = _system(factors=CommonFactors(draw=_dist(), reinforce=_dist()))
    state = SystemState.initial(sys2)
    streams = rng.SystemStreams.create(0, 0, sys2.labels)
    for t in range(30):
        state, records, (f_draw, f_reinf) = system_step(sys2, state, streams)
        assert records["A"].N - 2 == f_draw
        assert records["B"].N - 2 == f_draw
        assert records["A"].R - 1 == f_reinf
        assert records["B"].R - 1 == f_reinf


def test_single_urn_system_reduces_to_plain_trajectory():
    # one urn, no factors: the system must reproduce the single-urn
    # engine bit for bit, because the streams and ops are shared
    sys1 = _system(labels=("u0",), draw_base=2, reinforce_base=3)
    straj = run_system(sys1, 40, master_seed=5)
    single = straj.urns["u0"]
    cfg = single.config
    direct = run_trajectory(cfg, 40, 5)
    assert np.array_equal(single.X, direct.X)
    assert np.array_equal(single.H, direct.H)
    assert np.array_equal(single.S, direct.S)
    assert np.array_equal(single.Z, direct.Z)
    assert np.array_equal(single.M, direct.M)


def test_marginal_config_echo_matches_behavior():
    # factor-shifted draws echo as an explicit integer law
    sys2 = _system(factors=CommonFactors(draw=_dist()))
    straj = run_system(sys2, 25, master_seed=1)
    cfg = straj.urns["A"].config
    assert cfg.draw.iid_draws
    assert cfg.draw.bound == 4
    assert set(np.unique(straj.urns["A"].N)) <= {2, 3, 4}


def test_run_system_determinism_and_rep():
    sys2 = _system(factors=CommonFactors(reinforce=_dist()))
    a1 = run_system(sys2, 30, 9)
    a2 = run_system(sys2, 30, 9)
    assert np.array_equal(a1.urns["A"].X, a2.urns["A"].X)
    b = run_system(sys2, 30, 9, rep=4)
    assert not np.array_equal(a1.urns["A"].X, b.urns["A"].X)
    assert np.array_equal(a1.factor_reinforce, a2.factor_reinforce)


def test_conditional_independence_stat_centers_near_zero():
    sys2 = _system(factors=CommonFactors(reinforce=_dist()))
    straj = run_system(sys2, 4000, 3)
    stat = conditional_independence_stat(straj, "A", "B")
    assert stat.steps == 4000
    assert abs(stat.in_units_of_se) < 4.0
    with pytest.raises(ParameterError):
        conditional_independence_stat(straj, "A", "missing")


def test_per_urn_summary_matches_single_urn_estimators():
    sys2 = _system(factors=CommonFactors(draw=_dist()))
    straj = run_system(sys2, 50, 7)
    summaries = per_urn_summary(straj)
    for lab in ("A", "B"):
        est = plugin_estimates(straj.urns[lab])
        assert summaries[lab].estimates == est
        assert summaries[lab].z_n == straj.urns[lab].Z[-1]


def test_singleton_combination_equals_plain_interval():
    from hrru.estimators import proportion_interval, mean_interval

    sys2 = _system(factors=CommonFactors(reinforce=_dist()))
    straj = run_system(sys2, 60, 2)
    ci = linear_combination_ci(straj, {"A": 1.0}, "Z", 60, 0.95)
    solo = proportion_interval(straj.urns["A"], 0.05)
    assert ci.center == solo.center
    assert ci.half_width == solo.half_width
    ci_m = linear_combination_ci(straj, {"A": 1.0}, "M", 60, 0.95)
    solo_m = mean_interval(straj.urns["A"], 0.05)
    assert ci_m.center == solo_m.center
    assert ci_m.half_width == solo_m.half_width
    assert ci.basis == FROM_ZN and ci_m.basis == FROM_MN


def test_difference_combination_variance_adds():
    sys2 = _system(factors=CommonFactors(reinforce=_dist()))
    straj = run_system(sys2, 60, 2)
    from hrru.multi_urn import per_urn_summary as pus

    s = pus(straj)
    ci = linear_combination_ci(straj, {"A": 1.0, "B": -1.0}, "Z", 60, 0.95)
    assert ci.center == pytest.approx(s["A"].z_n - s["B"].z_n, rel=1e-15)
    var = s["A"].variances.v_n + s["B"].variances.v_n
    from hrru.estimators import normal_quantile

    assert ci.half_width == pytest.approx(
        normal_quantile(0.975) * np.sqrt(var / 60), rel=1e-12
    )


def test_linear_combination_validation():
    sys2 = _system()
    straj = run_system(sys2, 20, 0)
    with pytest.raises(ParameterError):
        linear_combination_ci(straj, {}, "Z", 20, 0.95)
    with pytest.raises(ParameterError):
        linear_combination_ci(straj, {"A": 0.0}, "Z", 20, 0.95)
    with pytest.raises(ParameterError):
        linear_combination_ci(straj, {"nope": 1.0}, "Z", 20, 0.95)
    with pytest.raises(ParameterError):
        linear_combination_ci(straj, {"A": 1.0}, "Q", 20, 0.95)
    with pytest.raises(ParameterError):
        linear_combination_ci(straj, {"A": 1.0}, "Z", 20, 1.5)


def test_mean_reinforcement_test_basics():
    sys3 = UrnSystem(
        urns=(
            UrnSpec(label="A", a=10, b=10, draw_base=2, reinforce_base=1),
            UrnSpec(label="B", a=10, b=10, draw_base=2, reinforce_base=1),
            UrnSpec(label="C", a=10, b=10, draw_base=2, reinforce_base=1),
        ),
        factors=CommonFactors(reinforce=_dist()),
    )
    straj = run_system(sys3, 300, 4)
    res = mean_reinforcement_test(straj, "A", ("B", "C"), 300, 0.05)
    assert res.applicable
    assert res.statistic is not None and res.statistic >= 0.0
    assert res.n == 300
    assert res.reference == ("B", "C")

    # relabeling the reference set must not change the statistic
    res2 = mean_reinforcement_test(straj, "A", ("C", "B"), 300, 0.05)
    assert res2.statistic == pytest.approx(res.statistic, rel=1e-12)

    # a tighter level can only make rejection easier
    res_tight = mean_reinforcement_test(straj, "A", ("B", "C"), 300, 0.5)
    assert res_tight.reject or not res.reject


def test_mean_reinforcement_test_inapplicable_when_variance_zero():
    # constant unit draws with constant reinforcement: the comparison
    # variance vanishes, so the test must decline rather than divide
    sys1 = UrnSystem(
        urns=(
            UrnSpec(label="A", a=5, b=5, draw_base=1, reinforce_base=2),
            UrnSpec(label="B", a=5, b=5, draw_base=1, reinforce_base=2),
        ),
        factors=CommonFactors(),
    )
    straj = run_system(sys1, 50, 0)
    res = mean_reinforcement_test(straj, "A", ("B",), 50, 0.05)
    assert not res.applicable
    assert res.statistic is None
    assert not res.reject


def test_mean_reinforcement_test_validation():
    sys2 = _system()
    straj = run_system(sys2, 20, 0)
    with pytest.raises(ParameterError):
        mean_reinforcement_test(straj, "A", (), 20, 0.05)
    with pytest.raises(ParameterError):
        mean_reinforcement_test(straj, "A", ("A",), 20, 0.05)
    with pytest.raises(ParameterError):
        mean_reinforcement_test(straj, "A", ("B", "B"), 20, 0.05)
    with pytest.raises(ParameterError):
        mean_reinforcement_test(straj, "missing", ("B",), 20, 0.05)
