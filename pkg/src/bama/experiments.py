"""Seeded numerical experiments and their Monte Carlo oracles.

Every experiment is a pure function of its settings and seed. Outputs are CSV
tables with a fixed header plus a JSON sidecar holding the settings and seed;
no plotting.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import bisect

from .errors import ConfigError, InfeasibleError, SolverError
from .inference import (
    PosteriorState,
    StudentProfile,
    expected_z,
    predictive_mean_z,
    predictive_z_density,
    profile_mean_z,
    profile_z_moments,
    z_scores,
)
from .policy import (
    MASTERY_TABLE,
    MASTERY_UPPER,
    Action,
    History,
    LinearValueWeights,
    PolicyConfig,
    bellman_value,
    classify,
    continuation_value,
    decide,
    linear_continuation,
    linear_value,
)
from .simulator import sample_responses, student_rng

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"

SWEEP_HEADER = ("theta", "lambda", "ez_mc", "ez_exact", "stderr")
CONVERGENCE_HEADER = (
    "profile_id",
    "prior_id",
    "item",
    "med_abs_err_theta",
    "med_abs_err_lambda",
    "med_abs_err_z",
    "q25",
    "q75",
)
ISOCURVE_HEADER = ("level", "point_index", "theta", "lambda")
CASE_STUDY_HEADER = ("state_id", "alpha", "beta", "n", "gamma", "ez_mean", "value", "threshold", "decision")


# --------------------------------------------------------------------------
# Monte Carlo oracles


def mc_profile_z(profile: StudentProfile, d: float, draws: int, rng: np.random.Generator):
    """Sample mean and standard error of ``Z`` for a known profile."""
    p = rng.random(draws) < profile.theta
    t = rng.exponential(1.0 / profile.lam, draws)
    z = z_scores(p, t, d)
    return float(z.mean()), float(z.std(ddof=1) / math.sqrt(draws))


def mc_expected_z(state: PosteriorState, d: float, draws: int, rng: np.random.Generator):
    """Sample mean and standard error of ``Z`` under the posterior predictive.

    Draws the parameters from the posterior, then one response from them.
    """
    theta = rng.beta(state.alpha, state.beta, draws)
    lam = rng.gamma(state.n, 1.0 / state.gamma, draws)
    p = rng.random(draws) < theta
    t = rng.exponential(1.0, draws) / lam
    z = z_scores(p, t, d)
    return float(z.mean()), float(z.std(ddof=1) / math.sqrt(draws))


# --------------------------------------------------------------------------
# Figs. 1-2: sensitivity sweeps


@dataclass(frozen=True)
class SweepSpec:
    thetas: tuple
    lambdas: tuple
    d: float = 20.0
    draws: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not self.thetas or not self.lambdas:
            raise ConfigError("thetas/lambdas: grids must be nonempty")
        if any(not (0.0 <= th <= 1.0) for th in self.thetas):
            raise ConfigError("thetas: values must lie in [0, 1]")
        if any(not (lam > 0 and math.isfinite(lam)) for lam in self.lambdas):
            raise ConfigError("lambdas: values must be finite and > 0")
        if not (self.d > 0 and math.isfinite(self.d)):
            raise ConfigError("d: must be > 0")
        if self.draws < 2:
            raise ConfigError("draws: need at least 2")


def sensitivity_sweep(spec: SweepSpec) -> list[dict]:
    """Monte Carlo and exact ``E[Z]`` on a ``(theta, lambda)`` grid.

    All grid points reuse the same uniforms and unit exponentials (common
    random numbers), so the Monte Carlo column is monotone in both parameters
    draw by draw, like the exact one.
    """
    rng = student_rng(spec.seed)
    u = rng.random(spec.draws)
    e = rng.exponential(1.0, spec.draws)
    rows = []
    for theta in sorted(set(spec.thetas)):
        correct = u < theta
        for lam in sorted(set(spec.lambdas)):
            z = z_scores(correct, e / lam, spec.d)
            rows.append(
                {
                    "theta": float(theta),
                    "lambda": float(lam),
                    "ez_mc": float(z.mean()),
                    "ez_exact": float(profile_mean_z(theta, lam, spec.d)),
                    "stderr": float(z.std(ddof=1) / math.sqrt(spec.draws)),
                }
            )
    return rows


FIG1_THETAS = (0.1, 0.3, 0.5, 0.7, 0.9)
FIG1_LAMBDAS = (0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
FIG2_THETAS = tuple(round(0.1 * i, 1) for i in range(11))
FIG2_LAMBDAS = (0.02, 0.05, 0.1, 0.2, 0.5, 1.0)


# --------------------------------------------------------------------------
# Fig. 3: two profiles with the same mean


@dataclass
class EqualMeanResult:
    target: float
    profiles: dict  # arm -> StudentProfile
    summaries: dict  # arm -> ScoreSummary
    histograms: dict = field(default_factory=dict)  # arm -> (edges, counts)


def solve_lambda_for_mean(theta: float, target: float, d: float) -> float:
    """Rate at which a profile with accuracy ``theta`` has ``E[Z] = target``."""
    if not (0.0 < target < 1.0):
        raise InfeasibleError(f"target mean must lie in (0, 1), got {target!r}")
    if target >= theta:
        raise InfeasibleError(f"E[Z] < theta for every finite rate; target {target} >= theta {theta}")

    def gap(log_lam):
        return float(profile_mean_z(theta, math.exp(log_lam), d)) - target

    lo, hi = math.log(1e-9), math.log(1e9)
    if gap(hi) < 0:
        raise InfeasibleError(f"target {target} needs a rate above 1e9 at theta {theta}")
    return math.exp(bisect(gap, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=500))


def equal_mean_profiles(
    target_mean: float,
    d: float = 20.0,
    theta_average: float = 0.45,
    theta_accurate: float = 0.95,
    draws: int = 10_000,
    seed: int = 0,
    bins: int = 20,
) -> EqualMeanResult:
    """An 'average' (fast, half right) and an 'accurate' (slow, nearly always right)
    profile sharing the same exact ``E[Z]``."""
    profiles = {
        arm: StudentProfile(theta, solve_lambda_for_mean(theta, target_mean, d))
        for arm, theta in (("average", theta_average), ("accurate", theta_accurate))
    }
    summaries = {arm: profile_z_moments(p, d) for arm, p in profiles.items()}
    edges = np.linspace(0.0, 1.0, bins + 1)
    hists = {}
    for index, (arm, prof) in enumerate(profiles.items()):
        p, t = sample_responses(prof, student_rng(seed, index), draws)
        counts, _ = np.histogram(z_scores(p, t, d), bins=edges)
        hists[arm] = (edges, counts)
    return EqualMeanResult(target_mean, profiles, summaries, hists)


# --------------------------------------------------------------------------
# Figs. 4-6: convergence of the online estimates


@dataclass(frozen=True)
class ConvergenceSpec:
    profiles: tuple  # ((profile_id, StudentProfile), ...)
    priors: tuple  # ((prior_id, PosteriorState), ...)
    replications: int = 500
    items: int = 30
    seed: int = 0
    d: float = 20.0

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications: must be >= 1")
        if self.items < 1:
            raise ConfigError("items: must be >= 1")
        if not self.profiles or not self.priors:
            raise ConfigError("profiles/priors: must be nonempty")


@dataclass
class ConvergenceResult:
    spec: ConvergenceSpec
    # (profile_id, prior_id) -> array (replications, items + 1); column 0 is the prior
    err_theta: dict
    err_lambda: dict
    err_z: dict
    true_z: dict  # profile_id -> exact E[Z]

    def median(self, kind: str, profile_id: str, prior_id: str) -> np.ndarray:
        table = {"theta": self.err_theta, "lambda": self.err_lambda, "z": self.err_z}[kind]
        return np.median(table[(profile_id, prior_id)], axis=0)

    def rows(self) -> list[dict]:
        out = []
        for pid, _ in self.spec.profiles:
            for qid, _ in self.spec.priors:
                key = (pid, qid)
                med_t = np.median(self.err_theta[key], axis=0)
                med_l = np.median(self.err_lambda[key], axis=0)
                q25, med_z, q75 = np.percentile(self.err_z[key], [25, 50, 75], axis=0)
                for item in range(self.spec.items + 1):
                    out.append(
                        {
                            "profile_id": pid,
                            "prior_id": qid,
                            "item": item,
                            "med_abs_err_theta": float(med_t[item]),
                            "med_abs_err_lambda": float(med_l[item]),
                            "med_abs_err_z": float(med_z[item]),
                            "q25": float(q25[item]),
                            "q75": float(q75[item]),
                        }
                    )
        return out


def convergence_study(spec: ConvergenceSpec) -> ConvergenceResult:
    """Per-item estimation error of accuracy, rate and expected score.

    Replication ``r`` of profile ``i`` uses stream ``i * replications + r``;
    all prior arms see the same responses.
    """
    err_theta, err_lambda, err_z, true_z = {}, {}, {}, {}
    for i, (pid, prof) in enumerate(spec.profiles):
        p = np.empty((spec.replications, spec.items), dtype=int)
        t = np.empty((spec.replications, spec.items))
        for r in range(spec.replications):
            p[r], t[r] = sample_responses(prof, student_rng(spec.seed, i * spec.replications + r), spec.items)
        zeros = np.zeros((spec.replications, 1))
        n_correct = np.hstack([zeros, np.cumsum(p, axis=1)])
        total_time = np.hstack([zeros, np.cumsum(t, axis=1)])
        k = np.arange(spec.items + 1)
        true_z[pid] = profile_z_moments(prof, spec.d).mean
        for qid, prior in spec.priors:
            alpha = prior.alpha + n_correct
            beta = prior.beta + k - n_correct
            n = prior.n + k
            gamma = prior.gamma + total_time
            err_theta[(pid, qid)] = np.abs(alpha / (alpha + beta) - prof.theta)
            err_lambda[(pid, qid)] = np.abs(n / gamma - prof.lam)
            err_z[(pid, qid)] = np.abs(predictive_mean_z(alpha, beta, n, gamma, spec.d) - true_z[pid])
    return ConvergenceResult(spec, err_theta, err_lambda, err_z, true_z)


UNINFORMATIVE = PosteriorState(1.0, 1.0, 1.0, 10.0)
INFORMATIVE_ACCURACY = PosteriorState(0.75, 0.25, 1.0, 10.0)
OPTIMISTIC = PosteriorState(0.75, 0.25, 1.0, 1.0)
CALIBRATED = PosteriorState(0.95, 0.05, 3.0, 30.0)


def load_profiles(name: str) -> tuple:
    """``(id, StudentProfile)`` pairs from ``configs/<name>.json``."""
    data = json.loads((CONFIG_DIR / f"{name}.json").read_text())
    return tuple((row["id"], StudentProfile(row["theta"], row["lambda"])) for row in data["profiles"])


def fig6_speed_readings(d: float = 20.0) -> list[dict]:
    """``E[Z]`` of the two borderline Fig. 6 profiles under two unit readings.

    ``rate``: the printed number is the exponential rate. ``fraction-of-d``:
    the printed number is the mean response time as a fraction of ``d``.
    """
    rows = []
    for theta, printed in ((0.5, 0.048), (0.6, 0.067)):
        for reading, lam in (("rate", printed), ("fraction-of-d", 1.0 / (printed * d))):
            rows.append(
                {
                    "theta": theta,
                    "printed_speed": printed,
                    "reading": reading,
                    "lambda": lam,
                    "ez_exact": float(profile_mean_z(theta, lam, d)),
                }
            )
    return rows


# --------------------------------------------------------------------------
# Fig. 7: isocurves


@dataclass
class IsocurveGrid:
    thetas: np.ndarray
    lambdas: np.ndarray
    mean: np.ndarray  # (len(thetas), len(lambdas))
    curves: dict  # level -> array of (theta, lambda) points

    def at(self, theta: float, lam: float) -> float:
        i = int(np.argmin(np.abs(self.thetas - theta)))
        j = int(np.argmin(np.abs(self.lambdas - lam)))
        return float(self.mean[i, j])


ISO_LEVELS = tuple(round(0.1 * k, 1) for k in range(1, 10))


def isocurve_grid(resolution: int = 101, d: float = 20.0, lam_max: float = 1.0, levels=ISO_LEVELS) -> IsocurveGrid:
    """Exact ``E[Z]`` on a grid, plus its level sets.

    The mean factorizes as ``theta * g(lambda)``, so on every grid rate the
    level-``c`` curve passes through ``theta = c / g(lambda)``; points with
    ``theta > 1`` are dropped.
    """
    if resolution < 2:
        raise ConfigError("resolution: need at least 2 points per axis")
    thetas = np.linspace(0.0, 1.0, resolution)
    lambdas = np.linspace(lam_max / resolution, lam_max, resolution)
    g = profile_mean_z(1.0, lambdas, d)
    mean = thetas[:, None] * g[None, :]
    curves = {}
    for level in levels:
        theta_on_curve = level / g
        keep = theta_on_curve <= 1.0
        curves[level] = np.column_stack([theta_on_curve[keep], lambdas[keep]])
    return IsocurveGrid(thetas, lambdas, mean, curves)


# --------------------------------------------------------------------------
# Fig. 8: stopping decisions for two close states


CASE_STATES = (("s1", PosteriorState(8.0, 2.0, 10.0, 12.0)), ("s2", PosteriorState(6.0, 4.0, 10.0, 12.0)))
CASE_EXPECTED = {"s1": (0.75, Action.STOP_MASTERED), "s2": (0.56, Action.CONTINUE)}


class CaseStudyError(SolverError):
    pass


@dataclass
class CaseStudyReport:
    cfg: PolicyConfig
    rows: list
    linear: dict  # state_id -> {"affine": ..., "continuation": ...}
    distributions: dict  # state_id -> (atom, z grid, density)
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def decision_case_study(
    cfg: PolicyConfig | None = None,
    weights: LinearValueWeights | None = None,
    tol: float = 0.01,
) -> CaseStudyReport:
    """Evaluate both case-study states and collect every failed expectation.

    Decisions use an empty history with ``min_items = 0``; the states already
    summarize ten responses.
    """
    cfg = cfg or PolicyConfig()
    weights = weights or LinearValueWeights()
    if (cfg.eta, cfg.xi, cfg.d) != (0.8, 0.5, 20.0):
        raise ConfigError("case study is defined for eta=0.8, xi=0.5, d=20")
    run_cfg = PolicyConfig(**{**cfg.to_dict(), "min_items": 0})
    rows, linear, dists, failures = [], {}, {}, []
    z_grid = np.linspace(0.0, 1.0, 101)
    for sid, state in CASE_STATES:
        summary = expected_z(state, cfg.d)
        value = bellman_value(state, run_cfg)
        decision = decide(state, History((summary.mean,), ()), run_cfg)
        rows.append(
            {
                "state_id": sid,
                "alpha": state.alpha,
                "beta": state.beta,
                "n": state.n,
                "gamma": state.gamma,
                "ez_mean": summary.mean,
                "value": value,
                "threshold": run_cfg.threshold,
                "decision": decision.action.value,
            }
        )
        linear[sid] = {
            "affine": linear_value(state, weights),
            "continuation": linear_continuation(state, run_cfg, weights),
            "uncapped_continuation": continuation_value(state, run_cfg),
        }
        atom, density = predictive_z_density(state, cfg.d, z_grid[1:])
        dists[sid] = (atom, z_grid[1:], density)
        want_mean, want_action = CASE_EXPECTED[sid]
        if abs(summary.mean - want_mean) > tol:
            failures.append(f"{sid}: E[Z] = {summary.mean:.4f}, expected {want_mean} +/- {tol}")
        if decision.action is not want_action:
            failures.append(
                f"{sid}: decision {decision.action.value}, expected {want_action.value} "
                f"(continuation {linear[sid]['uncapped_continuation']:.4f} vs threshold {run_cfg.threshold:.4f})"
            )
    if not rows[0]["value"] > rows[1]["value"]:
        failures.append(f"V(s1) = {rows[0]['value']:.4f} is not above V(s2) = {rows[1]['value']:.4f}")
    return CaseStudyReport(run_cfg, rows, linear, dists, failures)


# --------------------------------------------------------------------------
# Table 1


TABLE1_PROBES = (0.05, 0.2, 0.3, 0.6, 0.8, 0.9)


def table1_rows() -> list[dict]:
    rows = []
    for (lo, label, directive), hi, probe in zip(MASTERY_TABLE, MASTERY_UPPER, TABLE1_PROBES):
        got = classify(probe)
        rows.append(
            {
                "z_lo": lo,
                "z_hi": hi,
                "label": label,
                "directive": directive,
                "probe": probe,
                "classified_label": got.label,
                "classified_directive": got.directive,
            }
        )
    return rows


# --------------------------------------------------------------------------
# output


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[h]) for h in header])
    return path


def write_sidecar(csv_path, meta: dict) -> Path:
    path = Path(csv_path).with_suffix(".json")
    path.write_text(json.dumps(meta, sort_keys=True, indent=2, default=_jsonable) + "\n", encoding="utf-8")
    return path


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    raise TypeError(f"not serializable: {type(obj)!r}")


def write_manifest(outdir, paths) -> Path:
    outdir = Path(outdir)
    entries = {
        Path(p).name: hashlib.sha256(Path(p).read_bytes()).hexdigest() for p in sorted(paths, key=lambda p: Path(p).name)
    }
    path = outdir / "manifest.json"
    path.write_text(json.dumps(entries, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


FIGURES = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "table1")


def reproduce(figure: str, seed: int, outdir, replications: int = 500) -> list[Path]:
    """Write the tables behind one figure plus ``manifest.json``.

    Raises :class:`CaseStudyError` after writing the fig8 outputs when any of
    its expectations fails.
    """
    if figure not in FIGURES:
        raise ConfigError(f"figure: unknown id {figure!r}; choose from {', '.join(FIGURES)}")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    error = None

    def emit(name, header, rows, meta):
        path = write_csv(outdir / f"{name}.csv", header, rows)
        written.extend([path, write_sidecar(path, {"figure": figure, "seed": seed, **meta})])

    if figure in ("fig1", "fig2"):
        thetas, lambdas = (FIG1_THETAS, FIG1_LAMBDAS) if figure == "fig1" else (FIG2_THETAS, FIG2_LAMBDAS)
        spec = SweepSpec(thetas, lambdas, seed=seed)
        emit(f"{figure}_sweep", SWEEP_HEADER, sensitivity_sweep(spec), {"spec": asdict(spec)})
    elif figure == "fig3":
        res = equal_mean_profiles(0.42, seed=seed)
        prof_rows = [
            {
                "arm": arm,
                "theta": p.theta,
                "lambda": p.lam,
                "ez_mean": res.summaries[arm].mean,
                "ez_variance": res.summaries[arm].variance,
            }
            for arm, p in res.profiles.items()
        ]
        emit("fig3_profiles", ("arm", "theta", "lambda", "ez_mean", "ez_variance"), prof_rows, {"target": 0.42})
        hist_rows = [
            {"arm": arm, "bin_lo": float(edges[i]), "bin_hi": float(edges[i + 1]), "count": int(counts[i])}
            for arm, (edges, counts) in res.histograms.items()
            for i in range(len(counts))
        ]
        emit("fig3_histograms", ("arm", "bin_lo", "bin_hi", "count"), hist_rows, {"target": 0.42, "draws": 10_000})
    elif figure in ("fig4", "fig5", "fig6"):
        if figure == "fig4":
            profiles = (("mastered", StudentProfile(0.9, 0.2)),)
            priors = (("uninformative", UNINFORMATIVE), ("informative", INFORMATIVE_ACCURACY))
        elif figure == "fig5":
            profiles = load_profiles("fig5_profiles")
            priors = (("calibrated", CALIBRATED),)
        else:
            profiles = load_profiles("fig6_profiles")
            priors = (("conservative", UNINFORMATIVE), ("optimistic", OPTIMISTIC))
        spec = ConvergenceSpec(profiles, priors, replications=replications, seed=seed)
        res = convergence_study(spec)
        meta = {
            "profiles": {pid: asdict(p) for pid, p in profiles},
            "priors": {qid: asdict(q) for qid, q in priors},
            "true_ez": res.true_z,
            "replications": replications,
            "items": spec.items,
        }
        emit(f"{figure}_convergence", CONVERGENCE_HEADER, res.rows(), meta)
        if figure == "fig6":
            emit(
                "fig6_speed_readings",
                ("theta", "printed_speed", "reading", "lambda", "ez_exact"),
                fig6_speed_readings(),
                {"note": "recorded only; neither reading is asserted"},
            )
    elif figure == "fig7":
        grid = isocurve_grid()
        rows = [
            {"level": level, "point_index": i, "theta": float(th), "lambda": float(lam)}
            for level, pts in grid.curves.items()
            for i, (th, lam) in enumerate(pts)
        ]
        emit("fig7_isocurves", ISOCURVE_HEADER, rows, {"resolution": len(grid.thetas), "d": 20.0})
        grid_rows = [
            {"theta": float(th), "lambda": float(lam), "ez_exact": float(grid.mean[i, j])}
            for i, th in enumerate(grid.thetas)
            for j, lam in enumerate(grid.lambdas)
        ]
        emit("fig7_grid", ("theta", "lambda", "ez_exact"), grid_rows, {"resolution": len(grid.thetas)})
    elif figure == "fig8":
        report = decision_case_study()
        emit("fig8_case_study", CASE_STUDY_HEADER, report.rows, {"policy": report.cfg.to_dict(), "linear": report.linear, "failures": report.failures})
        dist_rows = [
            {"state_id": sid, "z": float(z), "density": float(f), "atom_at_zero": atom}
            for sid, (atom, zs, dens) in report.distributions.items()
            for z, f in zip(zs, dens)
        ]
        emit("fig8_distributions", ("state_id", "z", "density", "atom_at_zero"), dist_rows, {"d": 20.0})
        if not report.ok:
            error = CaseStudyError("; ".join(report.failures))
    else:
        emit(
            "table1",
            ("z_lo", "z_hi", "label", "directive", "probe", "classified_label", "classified_directive"),
            table1_rows(),
            {},
        )

    written.append(write_manifest(outdir, written))
    if error is not None:
        raise error
    return written
