"""Conjugate Beta/Gamma inference for the joint accuracy/speed score.

A response is a pair ``(p, t)``: correctness and response time in seconds.
Its score is ``Z = p * max(0, 1 - t/d)``. Correctness is Bernoulli(theta) with
a Beta(alpha, beta) prior; response time is Exponential(lambda) with a
Gamma(n, gamma) prior (shape n, rate gamma). Under the posterior predictive the
next response time is Lomax with shape ``n`` and scale ``gamma``::

    f(t) = n / (gamma + t) * (gamma / (gamma + t)) ** n
    S(t) = (gamma / (gamma + t)) ** n

Predictive moments of ``Z`` treat correctness and time as independent given the
state, so ``E[Z] = P(correct) * E[X]`` and ``E[Z^2] = P(correct) * E[X^2]``
with ``X = (1 - T/d)^+``.

Both moments of ``X`` have closed forms. Writing ``r = gamma / (gamma + d)`` and
``h(m) = (1 - r**(m-1)) / (m-1)`` (so ``h(1) = -log r``)::

    int_0^d S(s) ds         = gamma * h(n)
    int_0^d (d - s) S(s) ds = gamma * (gamma + d) * h(n) - gamma**2 * h(n-1)
    E[X]   = 1 - int_0^d S / d
    E[X^2] = 1 - 2 * int_0^d (d - s) S(s) ds / d**2

``h`` is evaluated through ``exprel`` so the ``n = 1`` and ``n = 2`` cases need
no special branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import exprel

from .errors import ConfigError

#: smallest admissible value of any posterior parameter
POSITIVE_FLOOR = 1e-9
DEFAULT_QUAD_NODES = 32


def _check_positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value >= POSITIVE_FLOOR):
        raise ConfigError(f"{name} must be finite and >= {POSITIVE_FLOOR}, got {value!r}")


@dataclass(frozen=True)
class Observation:
    """One response: correctness ``p`` in {0, 1} and time ``t`` in seconds."""

    p: int
    t: float

    def __post_init__(self):
        if self.p not in (0, 1):
            raise ConfigError(f"p must be 0 or 1, got {self.p!r}")
        if not (math.isfinite(self.t) and self.t >= 0):
            raise ConfigError(f"t must be finite and >= 0, got {self.t!r}")


@dataclass(frozen=True)
class PosteriorState:
    """Information state ``(alpha, beta, n, gamma)``.

    ``alpha``/``beta`` are pseudo-counts of correct/incorrect answers, ``n`` the
    pseudo-count of timed responses and ``gamma`` their pseudo-total time.
    """

    alpha: float
    beta: float
    n: float
    gamma: float

    def __post_init__(self):
        for name in ("alpha", "beta", "n", "gamma"):
            _check_positive(name, getattr(self, name))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.alpha, self.beta, self.n, self.gamma)

    @property
    def rate_estimate(self) -> float:
        """Posterior mean of the response rate, ``n / gamma``."""
        return self.n / self.gamma


@dataclass(frozen=True)
class StudentProfile:
    """Ground-truth accuracy ``theta`` and response rate ``lam`` (1/mean seconds)."""

    theta: float
    lam: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= 1.0):
            raise ConfigError(f"theta must lie in [0, 1], got {self.theta!r}")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ConfigError(f"lambda must be finite and > 0, got {self.lam!r}")


@dataclass(frozen=True)
class ScoreSummary:
    mean: float
    variance: float
    prob_correct: float


def _check_d(d: float) -> None:
    if not (math.isfinite(d) and d > 0):
        raise ConfigError(f"d must be finite and > 0, got {d!r}")


def z_score(p: int, t: float, d: float) -> float:
    """Score of a single response: ``p * max(0, 1 - t/d)``."""
    _check_d(d)
    if not (math.isfinite(t) and t >= 0):
        raise ConfigError(f"t must be finite and >= 0, got {t!r}")
    if p not in (0, 1):
        raise ConfigError(f"p must be 0 or 1, got {p!r}")
    return p * max(0.0, 1.0 - t / d)


def z_scores(p, t, d: float) -> np.ndarray:
    """Vectorized :func:`z_score` without per-element validation."""
    return np.asarray(p) * np.clip(1.0 - np.asarray(t, dtype=float) / d, 0.0, None)


def update_posterior(state: PosteriorState, obs: Observation) -> PosteriorState:
    return PosteriorState(
        state.alpha + obs.p,
        state.beta + 1 - obs.p,
        state.n + 1,
        state.gamma + obs.t,
    )


def fold_posterior(state: PosteriorState, observations) -> PosteriorState:
    for obs in observations:
        state = update_posterior(state, obs)
    return state


def prob_correct(state: PosteriorState) -> float:
    return state.alpha / (state.alpha + state.beta)


def rt_density(state: PosteriorState, t):
    """Posterior-predictive (Lomax) density of the next response time."""
    t = np.asarray(t, dtype=float)
    ratio = state.gamma / (state.gamma + t)
    out = state.n / (state.gamma + t) * ratio**state.n
    return float(out) if out.ndim == 0 else out


def rt_survival(state: PosteriorState, t):
    """``P(T > t)`` under the posterior predictive."""
    t = np.asarray(t, dtype=float)
    out = (state.gamma / (state.gamma + t)) ** state.n
    return float(out) if out.ndim == 0 else out


def _h(m, log_r):
    # (1 - r**(m-1)) / (m-1), continuous through m = 1
    return -log_r * exprel((m - 1.0) * log_r)


def partial_credit_moments(n, gamma, d: float):
    """First and second moment of ``(1 - T/d)^+`` with ``T ~ Lomax(n, gamma)``.

    Accepts scalars or broadcastable arrays for ``n`` and ``gamma``.
    """
    n = np.asarray(n, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    log_r = np.log(gamma) - np.log(gamma + d)
    h_n = _h(n, log_r)
    first = 1.0 - gamma * h_n / d
    tail = gamma * (gamma + d) * h_n - gamma**2 * _h(n - 1.0, log_r)
    second = 1.0 - 2.0 * tail / d**2
    first = np.clip(first, 0.0, 1.0)
    second = np.clip(second, 0.0, first)
    return first, second


def partial_credit_mean(n, gamma, d: float):
    """First moment only; the hot path of the value recursion."""
    n = np.asarray(n, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    log_r = np.log(gamma / (gamma + d))
    return np.clip(1.0 - gamma * _h(n, log_r) / d, 0.0, 1.0)


def expected_partial_credit(state: PosteriorState, d: float) -> float:
    """``E[(1 - T/d)^+]`` under the posterior predictive; closed form."""
    _check_d(d)
    first, _ = partial_credit_moments(state.n, state.gamma, d)
    return float(first)


def predictive_mean_z(alpha, beta, n, gamma, d: float):
    """Array version of ``expected_z(...).mean``."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return alpha / (alpha + beta) * partial_credit_mean(n, gamma, d)


def expected_z(state: PosteriorState, d: float) -> ScoreSummary:
    _check_d(d)
    pc = prob_correct(state)
    first, second = partial_credit_moments(state.n, state.gamma, d)
    mean = pc * float(first)
    var = max(0.0, pc * float(second) - mean**2)
    return ScoreSummary(mean=mean, variance=min(var, mean * (1.0 - mean)), prob_correct=pc)


@dataclass(frozen=True)
class LomaxPanels:
    """Two-panel integration geometry for ``T ~ Lomax(n, gamma)``.

    Panel 0 covers ``t > d``, panel 1 covers ``t <= d``. On each panel the
    integration variable ``y`` runs over ``[lo, hi]``; it is ``u = gamma /
    (gamma + t)`` when ``use_u`` (density ``n u^(n-1)``) and the survival
    probability ``v = u^n`` otherwise (unit density). ``scale`` corrects the
    far panel's quadrature mass to its exact value. Arrays have shape
    ``S + (2,)``.
    """

    n: float
    gamma: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    scale: np.ndarray
    use_u: bool

    def density(self, y):
        if self.use_u:
            return self.n * y ** (self.n - 1.0)
        return np.ones_like(y)

    def time(self, y):
        g = self.gamma[..., None, None]
        if self.use_u:
            return g * (1.0 / y - 1.0)
        # gamma * (v**(-1/n) - 1) with expm1 for v close to 1
        return g * np.expm1(-np.log(y) / self.n)

    def nodes(self, x, w):
        """Map unit-interval rule ``(x, w)`` to ``t`` and weights, shape ``S + (2, k)``."""
        span = (self.hi - self.lo)[..., None]
        y = self.lo[..., None] + span * x
        weights = w * span * self.density(y) * self.scale[..., None]
        return self.time(y), weights


def lomax_panels(n: float, gamma, d: float) -> LomaxPanels:
    """Integration panels for the Lomax law split at ``t = d``.

    For ``n >= 1`` the variable is ``u = gamma / (gamma + t)``, which maps
    ``[0, inf)`` onto ``(0, 1]``, turns the density into the polynomial
    ``n u^(n-1)`` and the reward into ``1 - gamma (1/u - 1) / d``. For
    ``n < 1`` that weight is singular at zero and ``v = u^n`` is used instead.
    """
    n = float(n)
    gamma = np.asarray(gamma, dtype=float)
    log_ud = np.log(gamma) - np.log(gamma + d)
    one = np.ones_like(gamma)
    if n >= 1.0:
        u_d = np.exp(log_ud)
        lo = np.stack([0.0 * one, u_d], axis=-1)
        hi = np.stack([u_d, one], axis=-1)
    else:
        v_d = np.exp(n * log_ud)
        lo = np.stack([0.0 * one, v_d], axis=-1)
        hi = np.stack([v_d, one], axis=-1)
    return LomaxPanels(n, gamma, lo, hi, np.ones_like(lo), n >= 1.0)


def lomax_quadrature(n: float, gamma, d: float, nodes: int = DEFAULT_QUAD_NODES, panels: LomaxPanels | None = None):
    """Quadrature nodes/weights for ``E[g(T)]`` with ``T ~ Lomax(n, gamma)``.

    The half-line is split at ``t = d`` so the kink of ``(1 - t/d)^+`` sits on a
    panel edge; each panel gets ``nodes // 2`` Gauss-Legendre points (see
    :func:`lomax_panels` for the change of variable). ``gamma`` may be an
    array of shape ``S``; returns ``t`` and ``w`` of shape
    ``S + (2 * (nodes // 2),)``, far panel first. With the ``u`` variable the
    far panel's weights are rescaled to its exact mass ``P(T > d)``.
    """
    t, w, _ = lomax_rule(n, gamma, d, nodes)
    return t, w


def lomax_rule(n: float, gamma, d: float, nodes: int = DEFAULT_QUAD_NODES):
    """Like :func:`lomax_quadrature` but also returns the :class:`LomaxPanels`."""
    half = max(1, nodes // 2)
    x, w = _unit_legendre(half)
    panels = lomax_panels(n, gamma, d)
    t, weights = panels.nodes(x, w)
    if panels.use_u:
        mass_far = np.exp(panels.n * (np.log(panels.gamma) - np.log(panels.gamma + d)))
        got = weights[..., 0, :].sum(axis=-1)
        factor = np.where(got > 0, mass_far / np.where(got > 0, got, 1.0), 0.0)
        scale = np.stack([factor, np.ones_like(factor)], axis=-1)
        panels = LomaxPanels(panels.n, panels.gamma, panels.lo, panels.hi, scale, True)
        weights = weights * scale[..., None]
    shape = t.shape[:-2] + (2 * half,)
    return t.reshape(shape), weights.reshape(shape), panels


_LEGENDRE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _unit_legendre(k: int):
    if k not in _LEGENDRE_CACHE:
        x, w = np.polynomial.legendre.leggauss(k)
        _LEGENDRE_CACHE[k] = ((x + 1.0) / 2.0, w / 2.0)
    return _LEGENDRE_CACHE[k]


def predictive_expectation(fn, state: PosteriorState, d: float, nodes: int = DEFAULT_QUAD_NODES) -> float:
    """``E[fn(T)]`` under the posterior predictive, by split quadrature."""
    t, w = lomax_quadrature(state.n, state.gamma, d, nodes)
    return float(np.sum(w * fn(t)))


def exponential_partial_credit_moments(lam, d: float):
    """First and second moment of ``(1 - T/d)^+`` with ``T ~ Exponential(lam)``.

    ``E[X] = 1 - (1 - e^-x)/x`` and ``E[X^2] = 1 - 2/x + 2(1 - e^-x)/x^2`` with
    ``x = lam * d``; the second is summed as a series for small ``x``.
    """
    x = np.asarray(lam, dtype=float) * d
    first = 1.0 - exprel(-x)
    with np.errstate(divide="ignore", invalid="ignore"):
        second_big = 1.0 - 2.0 * (1.0 - exprel(-x)) / x
    # 2 * sum_{k>=3} (-1)^(k+1) x^(k-2) / k!
    xs = np.minimum(x, 0.05)
    series = np.zeros_like(xs)
    for k in range(10, 2, -1):
        series = series * xs + 2.0 * (-1) ** (k + 1) / math.factorial(k)
    series = series * xs
    second = np.where(x < 0.05, series, second_big)
    return np.clip(first, 0.0, 1.0), np.clip(second, 0.0, 1.0)


def profile_z_moments(profile: StudentProfile, d: float) -> ScoreSummary:
    """Exact mean/variance of ``Z`` for a known ``(theta, lambda)``."""
    _check_d(d)
    first, second = exponential_partial_credit_moments(profile.lam, d)
    mean = profile.theta * float(first)
    var = max(0.0, profile.theta * float(second) - mean**2)
    return ScoreSummary(mean=mean, variance=min(var, mean * (1.0 - mean)), prob_correct=profile.theta)


def profile_mean_z(theta, lam, d: float):
    """Array version of ``profile_z_moments(...).mean``."""
    first, _ = exponential_partial_credit_moments(lam, d)
    return np.asarray(theta, dtype=float) * first


def predictive_z_density(state: PosteriorState, d: float, z):
    """Posterior-predictive law of ``Z``: ``(atom at 0, density on (0, 1])``.

    ``Z = 0`` when the answer is wrong or slower than ``d``; otherwise
    ``T = d (1 - Z)`` so the density is ``P(correct) * d * f(d (1 - z))``.
    """
    pc = prob_correct(state)
    atom = (1.0 - pc) + pc * rt_survival(state, d)
    z = np.asarray(z, dtype=float)
    dens = pc * d * rt_density(state, d * (1.0 - z))
    return float(atom), dens
