from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from orsim.domain import validate_case
from orsim.fatigue import FatigueParams
from orsim.infection import InfectionParams
from orsim.sim import (
    AlertKind,
    ConfigError,
    Indicator,
    Simulation,
    batch,
    collective_risk,
    run,
)

EQUAL = {"surgeon.fatigue": 1.0, "staphy.infection": 1.0}


def small(cfg, horizon=50, **kw):
    """Shrunk copy of a config with a 50-particle world."""
    inf = replace(cfg.infection, n_susceptible=45, n_infected=5, n_decontaminant=5)
    return replace(cfg, horizon=horizon, reference_cycle=None, infection=inf, **kw)


@pytest.fixture(scope="module")
def default_trace(default_config):
    return run(default_config)


# -- collective_risk ---------------------------------------------------------


def test_risk_all_zero():
    assert collective_risk({"surgeon.fatigue": 0.0, "staphy.infection": 0}, EQUAL, population=500) == 0.0


def test_risk_half_and_half():
    assert collective_risk({"surgeon.fatigue": 2.5, "staphy.infection": 250}, EQUAL, population=500) == 0.5


def test_risk_hand_computed():
    got = collective_risk({"surgeon.fatigue": 4.0, "staphy.infection": 5}, EQUAL, population=500)
    assert got == pytest.approx(0.405, abs=1e-12)


def test_risk_weights():
    got = collective_risk({"surgeon.fatigue": 5.0, "staphy.infection": 0}, {"surgeon.fatigue": 3.0}, population=10)
    assert got == pytest.approx(0.75)


def test_risk_unknown_scale():
    with pytest.raises(KeyError):
        collective_risk({"surgeon.mood": 1.0}, {})


@given(st.floats(0, 5), st.floats(0, 5), st.integers(0, 500), st.floats(0, 10))
def test_risk_monotone_and_bounded(f1, f2, n, w):
    weights = {"surgeon.fatigue": w, "staphy.infection": 1.0}
    lo, hi = sorted((f1, f2))
    a = collective_risk({"surgeon.fatigue": lo, "staphy.infection": n}, weights, population=500)
    b = collective_risk({"surgeon.fatigue": hi, "staphy.infection": n}, weights, population=500)
    assert 0.0 <= a <= b <= 1.0


# -- step / run --------------------------------------------------------------


def test_constant_indicators_without_dynamics(default_config):
    flat = replace(default_config.agents[0], fatigue=FatigueParams(a=1.0, k=0.0))
    cfg = replace(
        default_config,
        horizon=10,
        reference_cycle=None,
        agents=(flat, *default_config.agents[1:]),
        infection=InfectionParams(n_susceptible=20, n_infected=0, n_decontaminant=2),
    )
    trace = run(cfg)
    assert [r.cycle for r in trace.rows] == list(range(10))
    assert {r.values for r in trace.rows} == {(1.0, 0.0)}
    assert not trace.events


def test_individual_alert_on_fatigue(default_config):
    cfg = small(default_config, horizon=3, thresholds={"personal.fatigue": 1.0, "staphy.infection": 1000})
    events = Simulation(cfg).step(0)
    assert [(e.kind, e.indicator) for e in events] == [(AlertKind.INDIVIDUAL, "surgeon.fatigue")]


def test_collective_only_alert(default_config):
    cfg = small(default_config, horizon=2, collective_threshold=0.1)
    events = Simulation(cfg).step(0)
    assert [e.kind for e in events] == [AlertKind.COLLECTIVE]


def test_class_threshold_fallback(default_config):
    ind = Indicator("nurse", "fatigue")
    assert default_config.threshold(ind) == 4.5
    assert default_config.threshold(Indicator("staphy", "infection")) == 350


def test_step_past_horizon(default_config):
    sim = Simulation(small(default_config, horizon=2))
    with pytest.raises(ValueError):
        sim.step(2)


def test_run_is_deterministic(default_config):
    cfg = small(default_config, horizon=120)
    a, b = run(cfg), run(cfg)
    assert a.rows == b.rows and a.events == b.events
    assert run(cfg, seed=2).rows != a.rows


def test_default_run_shape(default_trace, default_config):
    assert len(default_trace.rows) == default_config.horizon
    assert [r.cycle for r in default_trace.rows] == list(range(default_config.horizon))
    assert all(0.0 <= r.collective_score <= 1.0 for r in default_trace.rows)
    assert all(sum(r.counts) == 500 for r in default_trace.rows)
    assert default_trace.map_consulted


def test_default_run_fires_collective(default_trace, default_config):
    first = default_trace.first_collective()
    assert first is not None
    assert run(default_config).first_collective() == first


def test_default_run_has_silent_collective_alert(default_trace):
    assert any(r.collective_alert and not any(r.individual) for r in default_trace.rows)


def test_alert_flag_rule(default_trace, default_config):
    for r in default_trace.rows:
        expected = r.collective_score >= default_config.collective_threshold or r.crit_level == "critical"
        assert r.collective_alert == expected


def test_feed_cycles_carry_recommendations(default_trace):
    fed = [r.cycle for r in default_trace.rows if r.case_id is not None]
    assert fed == list(range(0, 2000, 100))
    assert all(r.recommendation for r in default_trace.rows if r.case_id is not None)


def test_retained_cases_validate(default_config):
    sim = Simulation(small(default_config, horizon=301))
    sim.run()
    assert len(sim.case_base) == 4
    for c in sim.case_base:
        validate_case(c, default_config.registry, default_config.taxonomy)


def test_four_indicators_skip_maps(default_config):
    names = ["surgeon.fatigue", "nurse.fatigue", "bistoury.mat_tiredness", "staphy.infection"]
    cfg = small(
        default_config,
        horizon=20,
        indicators=tuple(Indicator.parse(n) for n in names),
        thresholds={"personal.fatigue": 4.5, "material.mat_tiredness": 2.5, "staphy.infection": 350},
        weights={},
    )
    trace = run(cfg)
    assert not trace.map_consulted
    assert {r.crit_level for r in trace.rows} == {None}
    assert len(trace.rows[0].values) == 4


def test_dead_agent_indicator_rejected(default_config):
    cfg = replace(default_config, indicators=(*default_config.indicators, Indicator("anesthetist", "fatigue")))
    with pytest.raises(ConfigError) as exc:
        Simulation(cfg)
    assert any("anesthetist" in e for e in exc.value.errors)


def test_missing_threshold_rejected(default_config):
    with pytest.raises(ConfigError, match="threshold"):
        Simulation(replace(default_config, thresholds={"staphy.infection": 350}))


def test_map_axis_must_be_monitored(default_config):
    cfg = replace(default_config, indicators=default_config.indicators[:1], weights={})
    with pytest.raises(ConfigError, match="map axis"):
        Simulation(cfg)


# -- batch -------------------------------------------------------------------


def test_batch_single_run_zero_spread(default_config):
    res = batch(small(default_config), 1)
    assert res.score_std == 0.0 and len(res.trigger_cycles) == 1


def test_batch_seeds_and_repeatability(default_config):
    cfg = small(default_config, horizon=80)
    a, b = batch(cfg, 3, base_seed=7), batch(cfg, 3, base_seed=7)
    assert [r.seed for r in a.runs] == [7, 8, 9]
    assert a.runs == b.runs


def test_batch_runs_do_not_share_case_base(default_config):
    cfg = small(default_config, horizon=101)
    res = batch(cfg, 2, keep_traces=True)
    assert [t.rows[0].case_id for t in res.traces] == [0, 0]


def test_batch_requires_a_run(default_config):
    with pytest.raises(ValueError):
        batch(default_config, 0)
