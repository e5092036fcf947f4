"""Synthetic students and full adaptive assessments.

Random streams: every student gets its own PCG64 generator seeded from
``SeedSequence(seed, spawn_key=(index,))``, so student ``index`` of a run with
``seed`` sees the same draws on any machine and independently of how many
other students are simulated. Each response consumes one uniform (correctness)
followed by one exponential (time).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .inference import (
    Observation,
    PosteriorState,
    ScoreSummary,
    StudentProfile,
    expected_z,
    prob_correct,
    update_posterior,
)
from .policy import (
    Action,
    BaselineConfig,
    Decision,
    MasteryClass,
    PolicyConfig,
    Reason,
    baseline_stability_decide,
    classify,
    decide,
)


def student_rng(seed: int, index: int = 0) -> np.random.Generator:
    if seed < 0 or index < 0:
        raise ConfigError("seed and stream index must be nonnegative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def sample_response(profile: StudentProfile, rng: np.random.Generator) -> Observation:
    p = int(rng.random() < profile.theta)
    t = float(rng.exponential(1.0 / profile.lam))
    return Observation(p, t)


def sample_responses(profile: StudentProfile, rng: np.random.Generator, size: int):
    """``size`` responses as arrays ``(p, t)``; same draw order as :func:`sample_response`."""
    u = np.empty(size)
    t = np.empty(size)
    for i in range(size):
        u[i] = rng.random()
        t[i] = rng.exponential(1.0 / profile.lam)
    return (u < profile.theta).astype(int), t


# --------------------------------------------------------------------------
# profile classes


@dataclass(frozen=True)
class ProfileClass:
    label: str
    theta_range: tuple[float, float]
    lambda_range: tuple[float, float]


PROFILE_CLASSES = {
    "Fluent": ProfileClass("Fluent", (0.75, 1.0), (0.5, 1.0)),
    "Accurate": ProfileClass("Accurate", (0.75, 1.0), (0.0, 0.5)),
    "Average": ProfileClass("Average", (0.25, 0.75), (0.0, 0.5)),
    "WheelSpinningOrUnengaged": ProfileClass("WheelSpinningOrUnengaged", (0.0, 0.25), (0.0, math.inf)),
}


def classify_profile(profile: StudentProfile) -> ProfileClass:
    """Map ``(theta, lambda)`` onto the four illustrative profile classes.

    Combinations outside the printed ranges are extended: high accuracy with
    ``lambda > 1`` counts as Fluent, middling accuracy with ``lambda >= 0.5``
    as Average.
    """
    theta, lam = profile.theta, profile.lam
    if theta <= 0.25:
        return PROFILE_CLASSES["WheelSpinningOrUnengaged"]
    if theta >= 0.75:
        return PROFILE_CLASSES["Accurate" if lam < 0.5 else "Fluent"]
    return PROFILE_CLASSES["Average"]


# --------------------------------------------------------------------------
# transcripts


@dataclass(frozen=True)
class Step:
    item: int
    obs: Observation
    posterior: PosteriorState
    summary: ScoreSummary
    decision: Decision

    def to_dict(self) -> dict:
        return {
            "item": self.item,
            "p": self.obs.p,
            "t": self.obs.t,
            "posterior": list(self.posterior.as_tuple()),
            "summary": asdict(self.summary),
            "decision": self.decision.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Step":
        return cls(
            data["item"],
            Observation(data["p"], data["t"]),
            PosteriorState(*data["posterior"]),
            ScoreSummary(**data["summary"]),
            Decision.from_dict(data["decision"]),
        )


@dataclass
class Transcript:
    config: PolicyConfig
    profile: StudentProfile
    prior: PosteriorState
    seed: int
    stream: int = 0
    steps: list[Step] = field(default_factory=list)
    final_class: MasteryClass | None = None

    @property
    def prior_summary(self) -> ScoreSummary:
        return expected_z(self.prior, self.config.d)

    @property
    def z_means(self) -> tuple:
        return (self.prior_summary.mean,) + tuple(s.summary.mean for s in self.steps)

    @property
    def correct(self) -> tuple:
        return tuple(s.obs.p for s in self.steps)

    @property
    def observations(self) -> list[Observation]:
        return [s.obs for s in self.steps]

    @property
    def final_decision(self) -> Decision | None:
        return self.steps[-1].decision if self.steps else None

    @property
    def posterior(self) -> PosteriorState:
        return self.steps[-1].posterior if self.steps else self.prior

    def __len__(self) -> int:
        return len(self.steps)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "profile": {"theta": self.profile.theta, "lambda": self.profile.lam},
            "prior": list(self.prior.as_tuple()),
            "seed": self.seed,
            "stream": self.stream,
            "steps": [s.to_dict() for s in self.steps],
            "final_class": None if self.final_class is None else asdict(self.final_class),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "Transcript":
        final = data.get("final_class")
        return cls(
            config=PolicyConfig(**data["config"]),
            profile=StudentProfile(data["profile"]["theta"], data["profile"]["lambda"]),
            prior=PosteriorState(*data["prior"]),
            seed=data["seed"],
            stream=data.get("stream", 0),
            steps=[Step.from_dict(s) for s in data["steps"]],
            final_class=None if final is None else MasteryClass(**final),
        )


def write_transcripts(path, transcripts) -> None:
    """One JSON record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for tr in transcripts:
            fh.write(tr.to_json() + "\n")


def read_transcripts(path) -> list[Transcript]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [Transcript.from_dict(json.loads(line)) for line in lines if line.strip()]


# --------------------------------------------------------------------------
# assessments


def run_assessment(
    profile: StudentProfile,
    prior: PosteriorState,
    cfg: PolicyConfig,
    seed: int,
    stream: int = 0,
) -> Transcript:
    """Administer items until the policy stops; at most ``cfg.max_items``."""
    rng = student_rng(seed, stream)
    tr = Transcript(cfg, profile, prior, seed, stream)
    state = prior
    z_means = [tr.prior_summary.mean]
    correct: list[int] = []
    for item in range(1, cfg.max_items + 1):
        obs = sample_response(profile, rng)
        state = update_posterior(state, obs)
        summary = expected_z(state, cfg.d)
        z_means.append(summary.mean)
        correct.append(obs.p)
        decision = decide(state, _View(tuple(z_means), tuple(correct)), cfg)
        if item == cfg.max_items and not decision.stops:
            decision = Decision(Action.STOP_NOT_MASTERED, decision.value, decision.threshold, Reason.MAX_ITEMS)
        tr.steps.append(Step(item, obs, state, summary, decision))
        if decision.stops:
            break
    tr.final_class = classify(tr.steps[-1].summary.mean)
    return tr


@dataclass(frozen=True)
class _View:
    z_means: tuple
    correct: tuple


@dataclass
class BaselineRun:
    profile: StudentProfile
    prior: PosteriorState
    probs: list[float]
    observations: list[Observation]
    decision: Decision

    @property
    def n_items(self) -> int:
        return len(self.observations)


def run_baseline_assessment(
    profile: StudentProfile,
    prior: PosteriorState,
    cfg: BaselineConfig,
    seed: int,
    stream: int = 0,
) -> BaselineRun:
    """Same student model, stopped by the predictive-stability baseline."""
    rng = student_rng(seed, stream)
    state = prior
    probs = [prob_correct(state)]
    observations = []
    while True:
        obs = sample_response(profile, rng)
        state = update_posterior(state, obs)
        observations.append(obs)
        probs.append(prob_correct(state))
        decision = baseline_stability_decide(probs, cfg)
        if decision.stops:
            return BaselineRun(profile, prior, probs, observations, decision)
