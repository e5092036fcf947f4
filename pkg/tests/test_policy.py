import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from bama.errors import ConfigError, SolverError
from bama.inference import PosteriorState, expected_z, rt_density, rt_survival
from bama.policy import (
    MASTERY_TABLE,
    Action,
    BaselineConfig,
    History,
    LinearValueWeights,
    PolicyConfig,
    Reason,
    baseline_stability_decide,
    bellman_value,
    classify,
    continuation_value,
    decide,
    failure_rule,
    linear_continuation,
    linear_value,
    one_step_value,
)

S1 = PosteriorState(8, 2, 10, 12)
S2 = PosteriorState(6, 4, 10, 12)


def _empty_history(state, d=20.0):
    return History((expected_z(state, d).mean,), ())


@pytest.mark.parametrize(
    "field, value",
    [("eta", 1.0), ("eta", -0.1), ("xi", 1.5), ("d", 0.0), ("horizon", 0), ("quad_nodes", 0), ("min_items", -1), ("failure_mode", "x")],
)
def test_policy_config_rejects(field, value):
    with pytest.raises(ConfigError, match=field):
        PolicyConfig(**{field: value})


def test_min_items_cannot_exceed_max_items():
    with pytest.raises(ConfigError, match="min_items"):
        PolicyConfig(min_items=5, max_items=4)


def test_threshold():
    assert PolicyConfig(eta=0.8, xi=0.5).threshold == pytest.approx(2.5)


def _one_level_oracle(state, cfg):
    """Continuation with one quadrature level, integrated adaptively."""
    a, b, n, g = state.as_tuple()
    pc = a / (a + b)
    d, eta, thr = cfg.d, cfg.eta, cfg.threshold

    def child(da, db, t):
        m = expected_z(PosteriorState(a + da, b + db, n + 1, g + t), d).mean
        return min(m / (1 - eta), thr)

    def integrand(t):
        reward = max(0.0, 1 - t / d)
        val = pc * (reward + eta * child(1, 0, t)) + (1 - pc) * eta * child(0, 1, t)
        return val * rt_density(state, t)

    near, _ = integrate.quad(integrand, 0, d, epsabs=1e-12, epsrel=1e-12, limit=200)
    far, _ = integrate.quad(integrand, d, 2000 * (g + d), epsabs=1e-12, epsrel=1e-12, limit=400)
    # the remaining tail carries at most eta * thr per unit of probability
    return near + far


@pytest.mark.parametrize("state", [S1, S2, PosteriorState(0.95, 0.05, 3, 30), PosteriorState(2, 5, 1, 10), PosteriorState(3, 1, 0.6, 4)])
def test_one_level_recursion_matches_adaptive_quadrature(state):
    cfg = PolicyConfig(horizon=1, quad_nodes=16)
    assert continuation_value(state, cfg) == pytest.approx(_one_level_oracle(state, cfg), abs=2e-5)


def test_depth_equal_horizon_is_myopic():
    cfg = PolicyConfig()
    mean = expected_z(S2, cfg.d).mean
    assert bellman_value(S2, cfg, depth=cfg.horizon) == pytest.approx(min(mean / (1 - cfg.eta), cfg.threshold))
    with pytest.raises(ConfigError):
        bellman_value(S2, cfg, depth=cfg.horizon + 1)


def test_xi_zero_gives_zero():
    cfg = PolicyConfig(xi=0.0)
    for s in (S1, S2, PosteriorState(1, 1, 1, 10)):
        assert bellman_value(s, cfg) == 0.0


def test_eta_zero_example():
    cfg = PolicyConfig(eta=0.0, xi=0.5)
    assert bellman_value(S1, cfg) == pytest.approx(0.5)
    assert one_step_value(S1, cfg) == 0.5


@settings(max_examples=30, deadline=None)
@given(
    st.floats(0.1, 30),
    st.floats(0.1, 30),
    st.floats(0.3, 40),
    st.floats(0.5, 150),
    st.floats(0.0, 1.0),
)
def test_eta_zero_collapse(a, b, n, g, xi):
    state = PosteriorState(a, b, n, g)
    cfg = PolicyConfig(eta=0.0, xi=xi, horizon=2)
    assert bellman_value(state, cfg) == pytest.approx(one_step_value(state, cfg), abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 40), st.floats(0.05, 40), st.floats(0.2, 60), st.floats(0.05, 300))
def test_value_bounds(a, b, n, g):
    cfg = PolicyConfig(horizon=3)
    v = bellman_value(PosteriorState(a, b, n, g), cfg)
    assert 0.0 <= v <= cfg.threshold


def test_node_doubling_on_case_states():
    for s in (S1, S2, PosteriorState(0.95, 0.05, 3, 30), PosteriorState(5, 3, 8, 40)):
        v16 = bellman_value(s, PolicyConfig(quad_nodes=16))
        v32 = bellman_value(s, PolicyConfig(quad_nodes=32))
        assert abs(v16 - v32) < 1e-4


def test_quad_tol_raises_when_not_met():
    with pytest.raises(SolverError, match="quadrature"):
        continuation_value(PosteriorState(3, 2, 5, 20), PolicyConfig(quad_nodes=2, quad_tol=1e-12))
    # a loose tolerance passes
    continuation_value(PosteriorState(3, 2, 5, 20), PolicyConfig(quad_tol=1e-3))


def test_horizon_stability_on_case_states():
    cfg3, cfg4 = PolicyConfig(horizon=3, min_items=0), PolicyConfig(horizon=4, min_items=0)
    bound = cfg4.eta**3 / (1 - cfg4.eta)
    for s in (S1, S2):
        assert decide(s, _empty_history(s), cfg3).action == decide(s, _empty_history(s), cfg4).action
        assert abs(bellman_value(s, cfg3) - bellman_value(s, cfg4)) < bound


def test_decision_monotone_in_alpha():
    cfg = PolicyConfig(min_items=0, horizon=3)
    for b, n, g in [(2, 10, 12), (4, 10, 12), (1, 5, 8), (3, 6, 30)]:
        actions = [decide(PosteriorState(a, b, n, g), _empty_history(PosteriorState(a, b, n, g)), cfg).action for a in np.linspace(0.5, 20, 12)]
        first = next((i for i, act in enumerate(actions) if act is Action.STOP_MASTERED), len(actions))
        assert all(act is Action.STOP_MASTERED for act in actions[first:])


def test_decide_min_items():
    d = decide(S1, History((0.5, 0.6), (1,)), PolicyConfig())
    assert d.action is Action.CONTINUE and d.reason is Reason.MIN_ITEMS and d.value is None


def test_decide_s1_stops():
    d = decide(S1, _empty_history(S1), PolicyConfig(min_items=0))
    assert d.action is Action.STOP_MASTERED
    assert d.value >= d.threshold


def test_decide_low_mean_skips_solver():
    s = PosteriorState(1, 9, 10, 100)
    d = decide(s, History((0.5, 0.4, 0.45, 0.3), (0, 1, 0)), PolicyConfig())
    assert d.value is None
    assert d.action is Action.CONTINUE


def test_decide_max_items():
    cfg = PolicyConfig(max_items=4)
    s = PosteriorState(2, 5, 8, 60)
    d = decide(s, History((0.3, 0.35, 0.2, 0.3, 0.25), (1, 0, 1, 0)), cfg)
    assert d.action is Action.STOP_NOT_MASTERED and d.reason is Reason.MAX_ITEMS


def test_decide_decline_rule():
    s = PosteriorState(0.95, 3.05, 6, 60)
    d = decide(s, History((0.5, 0.42, 0.36, 0.31), (0, 0, 0)), PolicyConfig())
    assert d.action is Action.STOP_NOT_MASTERED and d.reason is Reason.DECLINE_RULE


@pytest.mark.parametrize(
    "estimates, fires",
    [((0.5, 0.42, 0.36, 0.31), True), ((0.5, 0.55, 0.48, 0.45), False), ((0.5, 0.42, 0.36), False), ((0.5, 0.5, 0.4, 0.3), False)],
)
def test_failure_rule_decline(estimates, fires):
    assert failure_rule(estimates, PolicyConfig()) is fires


def test_failure_rule_only_looks_at_first_window():
    assert failure_rule((0.5, 0.6, 0.5, 0.4, 0.3, 0.2), PolicyConfig()) is False


def test_failure_rule_consecutive():
    cfg = PolicyConfig(failure_mode="consecutive")
    assert failure_rule((), cfg, (1, 1, 1)) is False
    assert failure_rule((), cfg, (1, 0, 1)) is True
    assert failure_rule((), cfg, (1, 1)) is False
    with pytest.raises(ConfigError):
        failure_rule((), cfg)


@pytest.mark.parametrize(
    "z, label, directive",
    [(0.9, "Mastered", "StrongPass"), (0.3, "Undetermined", "WeakGoBack"), (0.05, "WheelSpinning", "RemedialStrategy")],
)
def test_classify_examples(z, label, directive):
    c = classify(z)
    assert (c.label, c.directive) == (label, directive)


def test_classify_printed_boundaries():
    uppers = (0.09, 0.25, 0.49, 0.74, 0.84, 1.0)
    for (lo, label, directive), hi in zip(MASTERY_TABLE, uppers):
        assert classify(lo).label == label
        assert classify(hi).label == label
        assert classify(hi).directive == directive


@given(st.floats(0.0, 1.0))
def test_classify_total(z):
    assert classify(z) == classify(z)


@pytest.mark.parametrize("z", [-0.01, 1.01, math.nan])
def test_classify_rejects(z):
    with pytest.raises(ConfigError):
        classify(z)


def test_linear_value_examples():
    assert linear_value(S1, LinearValueWeights()) == pytest.approx(-1.54)
    assert linear_value(S1, LinearValueWeights(0, 0, 0, 0)) == 0
    assert linear_value(S1, LinearValueWeights(1, 0, 0, 0)) == 8


def test_linear_continuation_matches_closed_form():
    # with affine children the integral only needs E[(1-T/d)^+] and E[T]
    cfg = PolicyConfig()
    w = LinearValueWeights()
    a, b, n, g = S2.as_tuple()
    pc = a / (a + b)
    reward = expected_z(S2, cfg.d).mean / pc
    mean_t = g / (n - 1)
    base = w.k1 * a + w.k2 * b + w.k3 * (n + 1) + w.k4 * (g + mean_t)
    want = pc * reward + cfg.eta * (base + pc * w.k1 + (1 - pc) * w.k2)
    # E[T] converges slowly under the truncated rule; compare loosely
    assert linear_continuation(S2, PolicyConfig(quad_nodes=64), w) == pytest.approx(want, abs=1e-3)


def test_baseline_constant_sequence_stops():
    d = baseline_stability_decide([0.7] * 6, BaselineConfig())
    assert d.stops and d.reason is Reason.BASELINE_STABILITY


def test_baseline_alternating_runs_to_cap():
    cfg = BaselineConfig()
    probs = [0.2, 0.8]
    for k in range(2, 27):
        d = baseline_stability_decide(probs, cfg)
        if d.stops:
            break
        probs.append(0.2 if k % 2 == 0 else 0.8)
    assert d.reason is Reason.MAX_ITEMS
    assert len(probs) - 1 == cfg.max_items


def test_baseline_validates():
    with pytest.raises(ConfigError):
        BaselineConfig(epsilon=0)
    with pytest.raises(ConfigError):
        BaselineConfig(delta=1.0)
    with pytest.raises(ConfigError):
        baseline_stability_decide([], BaselineConfig())


def test_survival_far_mass_used_by_oracle():
    # sanity for the oracle's truncated tail
    assert rt_survival(S2, 2000 * (S2.gamma + 20)) < 1e-30
