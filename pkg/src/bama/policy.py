"""Discounted optimal-stopping policy over the information state.

The stopping value is

    V(s) = min( E_t[ pc * ((1 - t/d)^+ + eta * V(s+)) + (1 - pc) * eta * V(s-) ],
                xi / (1 - eta) )

with ``s+ = (a+1, b, n+1, g+t)``, ``s- = (a, b+1, n+1, g+t)`` and ``t`` drawn
from the posterior-predictive Lomax law. The fixed point lives on a continuous
state space, so it is approximated by a depth-limited expectimax tree: every
level integrates ``t`` with :func:`bama.inference.lomax_quadrature`, and leaves
take the myopic value ``min(E[Z] / (1 - eta), xi / (1 - eta))``.

A node at level ``k`` is fully described by its number of correct answers ``j``
and its accumulated time, so the tree is stored as one array of ``gamma``
values per level (``Q**k`` entries) with a trailing axis over ``j = 0..k``.
Correct and incorrect children share the same time nodes.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, SolverError
from .inference import (
    PosteriorState,
    _unit_legendre,
    lomax_quadrature,
    lomax_rule,
    partial_credit_mean,
    predictive_mean_z,
)


class Action(str, enum.Enum):
    CONTINUE = "Continue"
    STOP_MASTERED = "StopMastered"
    STOP_NOT_MASTERED = "StopNotMastered"


class Reason(str, enum.Enum):
    VALUE_THRESHOLD = "value-threshold"
    DECLINE_RULE = "decline-rule"
    CONSECUTIVE_RULE = "consecutive-rule"
    MAX_ITEMS = "max-items"
    BASELINE_STABILITY = "baseline-stability"
    MIN_ITEMS = "min-items"


FAILURE_MODES = ("decline", "consecutive")


@dataclass(frozen=True)
class PolicyConfig:
    d: float = 20.0
    eta: float = 0.8
    xi: float = 0.5
    horizon: int = 4
    quad_nodes: int = 16
    min_items: int = 3
    max_items: int = 30
    decline_window: int = 3
    failure_mode: str = "decline"
    #: when set, every value is recomputed with doubled nodes and a change
    #: larger than this raises SolverError
    quad_tol: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.d) and self.d > 0):
            raise ConfigError(f"d: must be > 0, got {self.d!r}")
        if not (0.0 <= self.eta < 1.0):
            raise ConfigError(f"eta: must lie in [0, 1), got {self.eta!r}")
        if not (0.0 <= self.xi <= 1.0):
            raise ConfigError(f"xi: must lie in [0, 1], got {self.xi!r}")
        for name in ("horizon", "quad_nodes", "max_items", "decline_window"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name}: must be a positive integer, got {value!r}")
        if not isinstance(self.min_items, int) or isinstance(self.min_items, bool) or self.min_items < 0:
            raise ConfigError(f"min_items: must be a nonnegative integer, got {self.min_items!r}")
        if self.min_items > self.max_items:
            raise ConfigError("min_items: must not exceed max_items")
        if self.failure_mode not in FAILURE_MODES:
            raise ConfigError(f"failure_mode: must be one of {FAILURE_MODES}, got {self.failure_mode!r}")
        if self.quad_tol is not None and not self.quad_tol > 0:
            raise ConfigError(f"quad_tol: must be > 0, got {self.quad_tol!r}")

    @property
    def threshold(self) -> float:
        return self.xi / (1.0 - self.eta)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Decision:
    action: Action
    value: float | None
    threshold: float
    reason: Reason

    @property
    def stops(self) -> bool:
        return self.action is not Action.CONTINUE

    def to_dict(self) -> dict:
        return {
            "action": self.action.value,
            "value": self.value,
            "threshold": self.threshold,
            "reason": self.reason.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Decision":
        return cls(Action(data["action"]), data["value"], data["threshold"], Reason(data["reason"]))


@dataclass(frozen=True)
class History:
    """What the policy sees of an assessment so far.

    ``z_means`` starts with the prior's expected score and has one more entry
    than ``correct``.
    """

    z_means: tuple = ()
    correct: tuple = ()

    def __len__(self) -> int:
        return len(self.correct)


# --------------------------------------------------------------------------
# value recursion


def _myopic(mean, eta, threshold):
    return np.minimum(mean / (1.0 - eta), threshold)


def _barycentric(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / diff.prod(axis=1)


def _interpolate(nodes, bary, values, xq):
    """Evaluate the polynomial through ``(nodes, values[..., i])`` at ``xq[..., m]``."""
    diff = xq[..., :, None] - nodes
    diff[diff == 0.0] = 1e-300
    terms = bary / diff
    return np.matmul(terms, values[..., :, None])[..., 0] / terms.sum(axis=-1)


_FINE = 65
_INTERP_CACHE: dict[int, tuple] = {}


def _interp_tables(h: int):
    """Barycentric weights and node-to-grid matrices for ``h`` Gauss nodes."""
    if h not in _INTERP_CACHE:
        x, _ = _unit_legendre(h)
        bary = _barycentric(x)
        grid = np.linspace(0.0, 1.0, _FINE)
        eye = np.eye(h)
        to_grid = _interpolate(x, bary, eye, grid[None, :].repeat(h, 0))  # (h, M)
        _INTERP_CACHE[h] = (bary, grid, to_grid.T.copy())
    return _INTERP_CACHE[h]


def _capped_integral(values, weights, panels, x, w, cap):
    """Integrate ``min(c(y), cap)`` over each panel, one column per ``j``.

    ``values`` (shape ``(2, h, G, J)``: panel, node, parent, ``j``) samples a
    smooth, uncapped child value at the Gauss nodes ``x`` of each panel, with
    node ``weights`` of shape ``(2, h, G)``. The plain rule loses accuracy
    when the cap cuts through a panel, so such panels are re-integrated on two
    sub-panels split where the node interpolant crosses ``cap``. Returns the
    ``(G, J)`` integrals summed over both panels.
    """
    total = np.sum(weights[..., None] * np.minimum(values, cap), axis=1)  # (2, G, J)
    h = x.size
    if h < 2:
        return total.sum(axis=0)
    bary, grid, to_grid = _interp_tables(h)
    ends = np.tensordot(to_grid[[0, -1]], values, axes=(1, 1))  # (2 ends, 2, G, J)
    lo_val = np.minimum(values.min(axis=1), ends.min(axis=0))
    hi_val = np.maximum(values.max(axis=1), ends.max(axis=0))
    crossing = (lo_val < cap) & (hi_val > cap)
    if not crossing.any():
        return total.sum(axis=0)

    pi, gi, ji = np.nonzero(crossing)
    f = values[pi, :, gi, ji]
    s = f @ to_grid.T - cap
    k = np.argmax(np.sign(s[:, :-1]) != np.sign(s[:, 1:]), axis=1)
    rows = np.arange(k.size)
    s0, s1 = s[rows, k], s[rows, k + 1]
    frac = np.where(s1 != s0, s0 / np.where(s1 != s0, s0 - s1, 1.0), 0.5)
    root = (grid[k] + frac * (grid[k + 1] - grid[k]))[:, None]

    xs = np.concatenate([root * x, root + (1.0 - root) * x], axis=1)
    ws = np.concatenate([root * w, (1.0 - root) * w], axis=1)
    lo = panels.lo[gi, pi][:, None]
    span = (panels.hi[gi, pi] - panels.lo[gi, pi])[:, None]
    rho = span * panels.density(lo + span * xs) * panels.scale[gi, pi][:, None]
    capped = np.minimum(_interpolate(x, bary, f, xs), cap)
    total[pi, gi, ji] = np.sum(ws * rho * capped, axis=1)
    return total.sum(axis=0)


def _continuation(state: PosteriorState, cfg: PolicyConfig, levels: int, nodes: int) -> float:
    a, b, n, g = state.as_tuple()
    eta, d, thr = cfg.eta, cfg.d, cfg.threshold
    half = max(1, nodes // 2)
    x, w = _unit_legendre(half)

    # children are stored quadrature-node-major: child index = q * G + parent
    gammas = [np.array([g])]
    rules = []
    for k in range(levels):
        t, weights, panels = lomax_rule(n + k, gammas[k], d, nodes)
        rules.append((t, weights, panels))
        gammas.append((gammas[k][None, :] + t.T).ravel())

    # uncapped child values; the cap is applied inside the integral
    j = np.arange(levels + 1)
    leaf_mean = predictive_mean_z(a + j, b + levels - j, n + levels, gammas[levels][:, None], d)
    child = leaf_mean / (1.0 - eta)

    for k in range(levels - 1, -1, -1):
        t, weights, panels = rules[k]
        n_parent = t.shape[0]
        j = np.arange(k + 1)
        pc = (a + j) / (a + b + k)
        # the immediate reward has a closed form; only child values need quadrature
        reward = partial_credit_mean(n + k, gammas[k], d)[:, None]
        capped = _capped_integral(
            child.reshape(2, half, n_parent, k + 2),
            weights.T.reshape(2, half, n_parent),
            panels,
            x,
            w,
            thr,
        )
        child = pc * reward + eta * (pc * capped[:, 1:] + (1.0 - pc) * capped[:, : k + 1])
    return float(child[0, 0])


def continuation_value(state: PosteriorState, cfg: PolicyConfig, depth: int = 0) -> float:
    """First term of the stopping minimization, before capping at the threshold."""
    if not (0 <= depth <= cfg.horizon):
        raise ConfigError(f"depth must lie in [0, {cfg.horizon}], got {depth!r}")
    levels = cfg.horizon - depth
    if levels == 0:
        mean = float(predictive_mean_z(state.alpha, state.beta, state.n, state.gamma, cfg.d))
        return mean / (1.0 - cfg.eta)
    value = _continuation(state, cfg, levels, cfg.quad_nodes)
    if not math.isfinite(value):
        raise SolverError(f"non-finite continuation value at {state}")
    if cfg.quad_tol is not None:
        refined = _continuation(state, cfg, levels, 2 * cfg.quad_nodes)
        thr = cfg.threshold
        if abs(min(refined, thr) - min(value, thr)) > cfg.quad_tol:
            raise SolverError(
                f"quadrature not converged at {state}: {value:.6g} vs {refined:.6g} "
                f"with {cfg.quad_nodes} and {2 * cfg.quad_nodes} nodes"
            )
    return value


def bellman_value(state: PosteriorState, cfg: PolicyConfig, depth: int = 0) -> float:
    """Truncated stopping value ``V(s)``, always in ``[0, xi / (1 - eta)]``.

    ``depth`` counts levels already expanded above ``state``; the tree below it
    has ``cfg.horizon - depth`` quadrature levels, and ``depth == horizon``
    returns the myopic leaf value.
    """
    return min(continuation_value(state, cfg, depth), cfg.threshold)


def one_step_value(state: PosteriorState, cfg: PolicyConfig) -> float:
    """``min(E[Z], xi)``: the value at ``eta = 0``, where the future carries no weight."""
    mean = float(predictive_mean_z(state.alpha, state.beta, state.n, state.gamma, cfg.d))
    return min(mean, cfg.xi)


# --------------------------------------------------------------------------
# decisions


def failure_rule(estimates, cfg: PolicyConfig, correct=None) -> bool:
    """Early not-mastered rule.

    ``decline`` mode fires when the expected score fell strictly at each of the
    first ``decline_window`` updates (``estimates[0]`` is the prior mean).
    ``consecutive`` mode fires once the last ``decline_window`` responses are
    not all correct; it needs ``correct``.
    """
    w = cfg.decline_window
    if cfg.failure_mode == "decline":
        if len(estimates) < w + 1:
            return False
        return all(estimates[i + 1] < estimates[i] for i in range(w))
    if correct is None:
        raise ConfigError("consecutive failure mode needs the correctness sequence")
    if len(correct) < w:
        return False
    return not all(correct[-w:])


def decide(state: PosteriorState, history, cfg: PolicyConfig) -> Decision:
    """Stop/continue decision after ``len(history)`` responses.

    ``history`` is anything exposing ``z_means`` and ``correct`` (a
    :class:`History` or a transcript). Checks run in order: mastery, early
    failure, item cap. Nothing stops before ``min_items`` responses.

    The continuation term never exceeds ``E[Z] + eta * xi / (1 - eta)``, so
    when ``E[Z] < xi`` mastery is impossible and the tree is not evaluated;
    ``value`` is then ``None``, as it is before ``min_items``.
    """
    thr = cfg.threshold
    n_items = len(history.correct)
    if n_items < cfg.min_items:
        return Decision(Action.CONTINUE, None, thr, Reason.MIN_ITEMS)
    mean = float(predictive_mean_z(state.alpha, state.beta, state.n, state.gamma, cfg.d))
    value = None
    if mean >= cfg.xi - _BOUND_SLACK:
        value = bellman_value(state, cfg)
        if value >= thr:
            return Decision(Action.STOP_MASTERED, value, thr, Reason.VALUE_THRESHOLD)
    if failure_rule(history.z_means, cfg, history.correct):
        reason = Reason.DECLINE_RULE if cfg.failure_mode == "decline" else Reason.CONSECUTIVE_RULE
        return Decision(Action.STOP_NOT_MASTERED, value, thr, reason)
    if n_items >= cfg.max_items:
        return Decision(Action.STOP_NOT_MASTERED, value, thr, Reason.MAX_ITEMS)
    return Decision(Action.CONTINUE, value, thr, Reason.VALUE_THRESHOLD)


# covers the gap between the closed-form mean and its quadrature estimate
_BOUND_SLACK = 1e-6


# --------------------------------------------------------------------------
# mastery classes


@dataclass(frozen=True)
class MasteryClass:
    label: str
    directive: str


# (printed lower bound, label, directive); a value belongs to the row with the
# greatest lower bound not exceeding it, which closes the printed gaps
MASTERY_TABLE = (
    (0.0, "WheelSpinning", "RemedialStrategy"),
    (0.1, "Unengaged", "RemedialStrategy"),
    (0.26, "Undetermined", "WeakGoBack"),
    (0.5, "Familiar", "WeakPass"),
    (0.75, "Proficient", "Pass"),
    (0.85, "Mastered", "StrongPass"),
)
# printed upper bounds, for reporting only
MASTERY_UPPER = (0.09, 0.25, 0.49, 0.74, 0.84, 1.0)
_LOWER = [row[0] for row in MASTERY_TABLE]


def classify(mean_z: float) -> MasteryClass:
    if not (0.0 <= mean_z <= 1.0):
        raise ConfigError(f"mean_z must lie in [0, 1], got {mean_z!r}")
    _, label, directive = MASTERY_TABLE[bisect.bisect_right(_LOWER, mean_z) - 1]
    return MasteryClass(label, directive)


# --------------------------------------------------------------------------
# affine value approximation


@dataclass(frozen=True)
class LinearValueWeights:
    k1: float = 1.0
    k2: float = 1.0
    k3: float = -0.71
    k4: float = -0.37

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "k4"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name}: must be finite")


def linear_value(state: PosteriorState, w: LinearValueWeights) -> float:
    return w.k1 * state.alpha + w.k2 * state.beta + w.k3 * state.n + w.k4 * state.gamma


def linear_continuation(state: PosteriorState, cfg: PolicyConfig, w: LinearValueWeights) -> float:
    """Stopping first term with children valued by the affine approximation."""
    a, b, n, g = state.as_tuple()
    pc = a / (a + b)
    t, wt = lomax_quadrature(n, g, cfg.d, cfg.quad_nodes)
    reward = np.clip(1.0 - t / cfg.d, 0.0, None)
    up = w.k1 * (a + 1) + w.k2 * b + w.k3 * (n + 1) + w.k4 * (g + t)
    down = w.k1 * a + w.k2 * (b + 1) + w.k3 * (n + 1) + w.k4 * (g + t)
    return float(np.sum(wt * (pc * (reward + cfg.eta * up) + (1 - pc) * cfg.eta * down)))


# --------------------------------------------------------------------------
# predictive-stability baseline


@dataclass(frozen=True)
class BaselineConfig:
    epsilon: float = 0.01
    delta: float = 0.95
    max_items: int = 25
    window: int = 5
    #: final P(correct) at or above this is reported as mastered
    pass_level: float = 0.95

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ConfigError(f"epsilon: must lie in (0, 1), got {self.epsilon!r}")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError(f"delta: must lie in (0, 1), got {self.delta!r}")
        if not isinstance(self.max_items, int) or self.max_items < 1:
            raise ConfigError(f"max_items: must be a positive integer, got {self.max_items!r}")
        if not isinstance(self.window, int) or self.window < 1:
            raise ConfigError(f"window: must be a positive integer, got {self.window!r}")


def baseline_stability_decide(history, cfg: BaselineConfig) -> Decision:
    """Stop once the predicted P(correct) has stopped moving.

    ``history`` holds P(correct) before the first item and after every
    response. The decision stops when the share of the last ``window``
    one-step changes smaller than ``epsilon`` exceeds ``delta``, and always at
    ``max_items``. ``value`` is that share, ``threshold`` is ``delta``.
    """
    probs = np.asarray(history, dtype=float)
    if probs.size == 0:
        raise ConfigError("history must be nonempty")
    n_items = probs.size - 1
    changes = np.abs(np.diff(probs))[-cfg.window :]
    share = float(np.mean(changes < cfg.epsilon)) if changes.size == cfg.window else 0.0
    stop_action = Action.STOP_MASTERED if probs[-1] >= cfg.pass_level else Action.STOP_NOT_MASTERED
    if share > cfg.delta:
        return Decision(stop_action, share, cfg.delta, Reason.BASELINE_STABILITY)
    if n_items >= cfg.max_items:
        return Decision(stop_action, share, cfg.delta, Reason.MAX_ITEMS)
    return Decision(Action.CONTINUE, share, cfg.delta, Reason.BASELINE_STABILITY)
