"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a PASS/FAIL line that is repeated in the terminal summary.
"""

import itertools

import numpy as np
import pytest

from bama.cli import main
from bama.experiments import (
    CALIBRATED,
    UNINFORMATIVE,
    ConvergenceSpec,
    convergence_study,
    load_profiles,
    mc_expected_z,
    mc_profile_z,
)
from bama.inference import PosteriorState, StudentProfile, expected_z, profile_mean_z, profile_z_moments
from bama.policy import (
    Action,
    BaselineConfig,
    History,
    PolicyConfig,
    Reason,
    bellman_value,
    classify,
    continuation_value,
    decide,
    one_step_value,
)
from bama.simulator import run_assessment, run_baseline_assessment, student_rng

D = 20.0
S1 = PosteriorState(8, 2, 10, 12)
S2 = PosteriorState(6, 4, 10, 12)


def test_01_case_study_means(criterion):
    m1, m2 = expected_z(S1, D).mean, expected_z(S2, D).mean
    ok = abs(m1 - 0.75) <= 0.01 and abs(m2 - 0.56) <= 0.01
    criterion(1, ok, f"E[Z](s1) = {m1:.4f} (0.75 +/- 0.01), E[Z](s2) = {m2:.4f} (0.56 +/- 0.01)")


def test_02_prior_calibration(criterion):
    m = expected_z(CALIBRATED, D).mean
    criterion(2, abs(m - 0.50) <= 0.01, f"E[Z](0.95, 0.05, 3, 30) = {m:.4f} (0.50 +/- 0.01)")


def test_03_case_study_decisions(criterion):
    cfg = PolicyConfig(eta=0.8, xi=0.5, d=D, min_items=0)
    out = {}
    for name, s in (("s1", S1), ("s2", S2)):
        dec = decide(s, History((expected_z(s, D).mean,), ()), cfg)
        out[name] = (dec.action, bellman_value(s, cfg), continuation_value(s, cfg))
    ok = (
        out["s1"][0] is Action.STOP_MASTERED
        and out["s2"][0] is Action.CONTINUE
        and out["s1"][1] > out["s2"][1]
    )
    detail = (
        f"s1 -> {out['s1'][0].value} (want StopMastered), s2 -> {out['s2'][0].value} (want Continue); "
        f"V(s1) = {out['s1'][1]:.4f}, V(s2) = {out['s2'][1]:.4f}; "
        f"continuation {out['s1'][2]:.4f} / {out['s2'][2]:.4f} vs threshold {cfg.threshold:.4f}"
    )
    criterion(3, ok, detail)


def test_04_large_rate_asymptote(criterion):
    gaps = {th: abs(profile_z_moments(StudentProfile(th, 50.0), D).mean - th) for th in (0.3, 0.6, 0.9)}
    ok = all(g < 0.01 for g in gaps.values())
    criterion(4, ok, "max |mean - theta| at lambda=50: " + ", ".join(f"{k}: {v:.2e}" for k, v in gaps.items()))


def test_05_linearity_in_theta(criterion):
    thetas = np.linspace(0.0, 1.0, 101)
    worst = 0.0
    for lam in (0.01, 0.05, 0.1, 0.3, 1.0, 5.0):
        one = profile_z_moments(StudentProfile(1.0, lam), D).mean
        means = np.array([profile_z_moments(StudentProfile(th, lam), D).mean for th in thetas])
        worst = max(worst, float(np.max(np.abs(means - thetas * one))))
    criterion(5, worst < 1e-6, f"max |mean(theta) - theta * mean(1)| = {worst:.2e} (< 1e-6)")


def test_06_accuracy_convergence(criterion):
    spec = ConvergenceSpec(
        profiles=(("mastered", StudentProfile(0.9, 0.2)),),
        priors=(("uninformative", UNINFORMATIVE),),
        replications=500,
        seed=2024,
    )
    med = convergence_study(spec).median("theta", "mastered", "uninformative")[10]
    criterion(6, med <= 0.1, f"median |P(correct) - 0.9| at item 10 = {med:.4f} (<= 0.1)")


def test_07_score_convergence(criterion):
    profiles = load_profiles("fig5_profiles")
    spec = ConvergenceSpec(profiles=profiles, priors=(("calibrated", CALIBRATED),), replications=500, seed=2024)
    res = convergence_study(spec)
    meds = {pid: float(res.median("z", pid, "calibrated")[7]) for pid, _ in profiles}
    ok = all(m <= 0.1 for m in meds.values())
    criterion(7, ok, "median |E[Z] error| at item 7: " + ", ".join(f"{k} {v:.3f}" for k, v in meds.items()) + " (<= 0.1)")


def test_08_wheel_spinner_termination(criterion):
    """theta ~ U(0, 0.25), lambda ~ U(0.05, 1); both fixed before any run."""
    cfg = PolicyConfig()
    limit = cfg.min_items + 3
    actions, early_decline = [], 0
    for i in range(1000):
        draw = student_rng(12345, i)
        profile = StudentProfile(draw.uniform(0.0, 0.25), draw.uniform(0.05, 1.0))
        tr = run_assessment(profile, CALIBRATED, cfg, seed=2024, stream=i)
        final = tr.final_decision
        actions.append(final.action)
        early_decline += final.reason is Reason.DECLINE_RULE and len(tr) <= limit
    not_mastered = sum(a is Action.STOP_NOT_MASTERED for a in actions)
    ok = not_mastered == 1000 and early_decline >= 900
    criterion(
        8,
        ok,
        f"StopNotMastered {not_mastered}/1000 (want 1000); decline rule within {limit} items {early_decline}/1000 (want >= 900)",
    )


def test_09_oracle_equivalence(criterion):
    ab = ((0.95, 0.05), (1, 1), (3, 7), (8, 2), (20, 5))
    ng = ((1, 10), (3, 30), (10, 12), (2.5, 4), (25, 200))
    misses, worst = [], 0.0
    for k, ((a, b), (n, g)) in enumerate(itertools.product(ab, ng)):
        s = PosteriorState(a, b, n, g)
        mc, se = mc_expected_z(s, D, 1_000_000, student_rng(909, k))
        z = abs(mc - expected_z(s, D).mean) / se
        worst = max(worst, z)
        if z > 3:
            misses.append(s.as_tuple())
    for k, (th, lam) in enumerate(itertools.product((0.1, 0.3, 0.5, 0.7, 0.95), (0.02, 0.1, 0.3, 1.0, 3.0))):
        mc, se = mc_profile_z(StudentProfile(th, lam), D, 1_000_000, student_rng(910, k))
        z = abs(mc - profile_mean_z(th, lam, D)) / se
        worst = max(worst, z)
        if z > 3:
            misses.append((th, lam))
    criterion(9, not misses, f"50 comparisons, worst deviation {worst:.2f} standard errors (<= 3); misses: {misses}")


def test_10_solver_sanity(criterion):
    rng = np.random.default_rng(10)

    def random_state():
        return PosteriorState(rng.uniform(0.1, 20), rng.uniform(0.1, 20), rng.uniform(0.5, 30), rng.uniform(1, 100))

    cfg = PolicyConfig()
    zero_xi = PolicyConfig(xi=0.0)
    zero_eta = PolicyConfig(eta=0.0)
    xi_ok = all(bellman_value(random_state(), zero_xi) == 0.0 for _ in range(50))
    eta_gap = max(
        abs(bellman_value(s, zero_eta) - one_step_value(s, zero_eta)) for s in (random_state() for _ in range(50))
    )
    values = [bellman_value(random_state(), cfg) for _ in range(1000)]
    bounds_ok = all(0.0 <= v <= cfg.threshold for v in values)
    doubled = PolicyConfig(quad_nodes=2 * cfg.quad_nodes)
    grid = itertools.product((1, 8), (1, 3), (3, 10), (12, 30))
    dbl_gap = max(abs(bellman_value(PosteriorState(*s), cfg) - bellman_value(PosteriorState(*s), doubled)) for s in grid)
    ok = xi_ok and eta_gap < 1e-6 and bounds_ok and dbl_gap < 1e-4
    criterion(
        10,
        ok,
        f"xi=0 gives 0: {xi_ok}; eta=0 gap {eta_gap:.1e} (< 1e-6); 1000 values in [0, thr]: {bounds_ok}; "
        f"node doubling gap {dbl_gap:.1e} (< 1e-4)",
    )


def test_11_table1(criterion):
    want = {
        0.05: "WheelSpinning",
        0.2: "Unengaged",
        0.3: "Undetermined",
        0.6: "Familiar",
        0.8: "Proficient",
        0.9: "Mastered",
    }
    got = {z: classify(z).label for z in want}
    criterion(11, got == want, f"probes -> {got}")


def test_12_baseline_cap(criterion):
    cfg = BaselineConfig()
    lengths = [
        run_baseline_assessment(StudentProfile(0.8, 0.3), UNINFORMATIVE, cfg, seed=s).n_items for s in range(100)
    ]
    criterion(12, max(lengths) <= 25, f"items used over 100 seeds: min {min(lengths)}, max {max(lengths)} (<= 25)")


def test_13_reproduce_fig8_is_deterministic(criterion, tmp_path, capsys):
    codes = [main(["reproduce", "fig8", "--seed", "7", "--out", str(tmp_path / run)]) for run in ("a", "b")]
    capsys.readouterr()
    files = {run: {p.name: p.read_bytes() for p in sorted((tmp_path / run).iterdir())} for run in ("a", "b")}
    ok = files["a"] == files["b"] and "manifest.json" in files["a"] and "fig8_case_study.csv" in files["a"]
    criterion(
        13,
        ok,
        f"{len(files['a'])} files byte-identical across runs: {files['a'] == files['b']} (exit codes {codes})",
    )
