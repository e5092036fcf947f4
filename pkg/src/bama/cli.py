"""Command-line entry point.

Exit codes: 0 success, 1 solver or numerical failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import ConfigError, InfeasibleError, SolverError
from .experiments import FIGURES, SWEEP_HEADER, SweepSpec, reproduce, sensitivity_sweep, write_csv, write_manifest, write_sidecar
from .inference import PosteriorState, StudentProfile, expected_z
from .policy import History, PolicyConfig, decide
from .simulator import run_assessment, write_transcripts

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2

DEFAULT_PRIOR = {"alpha": 0.95, "beta": 0.05, "n": 3.0, "gamma": 30.0}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Validated contents of an ``assess`` config file."""

    profile: StudentProfile
    prior: PosteriorState
    policy: PolicyConfig
    seed: int = 0
    stream: int = 0


def _typed(section: str, key: str, value, kind: str):
    where = f"{section}.{key}"
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
    elif kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
    elif kind.startswith("float"):
        if value is None and "None" in kind:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    return value


def _build(cls, section: str, data, rename: dict | None = None):
    """Construct ``cls`` from a JSON object, naming the offending field on failure."""
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected an object, got {type(data).__name__}")
    rename = rename or {}
    kinds = {f.name: str(f.type) for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = rename.get(key, key)
        if name not in kinds:
            raise ConfigError(f"{section}.{key}: unknown field")
        kwargs[name] = _typed(section, key, value, kinds[name])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from None
    except ConfigError as exc:
        raise ConfigError(f"{section}.{exc}") from None


def load_run_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    return parse_run_config(data)


def parse_run_config(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    unknown = set(data) - {"profile", "prior", "policy", "seed", "stream"}
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown field")
    if "profile" not in data:
        raise ConfigError("profile: required")
    profile = _build(StudentProfile, "profile", data["profile"], {"lambda": "lam"})
    prior = _build(PosteriorState, "prior", data.get("prior", DEFAULT_PRIOR))
    policy = _build(PolicyConfig, "policy", data.get("policy", {}))
    seed = _typed("config", "seed", data.get("seed", 0), "int")
    stream = _typed("config", "stream", data.get("stream", 0), "int")
    if seed < 0 or stream < 0:
        raise ConfigError("seed: must be nonnegative" if seed < 0 else "stream: must be nonnegative")
    return RunConfig(profile, prior, policy, seed, stream)


# --------------------------------------------------------------------------
# commands


def cmd_assess(args) -> int:
    run = load_run_config(args.config)
    seed = run.seed if args.seed is None else args.seed
    tr = run_assessment(run.profile, run.prior, run.policy, seed, run.stream)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "transcript.jsonl"
    write_transcripts(path, [tr])
    final = tr.final_decision
    summary = {
        "decision": final.action.value,
        "reason": final.reason.value,
        "items": len(tr),
        "final_ez": tr.steps[-1].summary.mean,
        "mastery_class": tr.final_class.label,
        "directive": tr.final_class.directive,
        "transcript": str(path),
    }
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        print(f"decision:      {summary['decision']} ({summary['reason']})")
        print(f"items:         {summary['items']}")
        print(f"final E[Z]:    {summary['final_ez']:.4f}")
        print(f"mastery class: {summary['mastery_class']} -> {summary['directive']}")
        print(f"transcript:    {path}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    paths = reproduce(args.figure, args.seed, args.out, replications=args.replications)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_solve(args) -> int:
    state = PosteriorState(args.alpha, args.beta, args.n, args.gamma)
    cfg = PolicyConfig(
        d=args.d,
        eta=args.eta,
        xi=args.xi,
        horizon=args.horizon,
        quad_nodes=args.quad_nodes,
        min_items=0,
    )
    mean = expected_z(state, cfg.d).mean
    decision = decide(state, History((mean,), ()), cfg)
    result = {
        "state": list(state.as_tuple()),
        "ez_mean": mean,
        "value": decision.value,
        "threshold": decision.threshold,
        "action": decision.action.value,
        "reason": decision.reason.value,
    }
    if args.json:
        print(json.dumps(result, sort_keys=True))
    else:
        value = "n/a (E[Z] below xi)" if decision.value is None else f"{decision.value:.6f}"
        print(f"E[Z]:      {mean:.6f}")
        print(f"value:     {value}")
        print(f"threshold: {decision.threshold:.6f}")
        print(f"action:    {decision.action.value}")
    return EXIT_OK


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_sweep(args) -> int:
    spec = SweepSpec(args.thetas, args.lambdas, d=args.d, draws=args.draws, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = write_csv(out / "sweep.csv", SWEEP_HEADER, sensitivity_sweep(spec))
    meta = write_sidecar(path, {"seed": args.seed, "spec": dataclasses.asdict(spec)})
    write_manifest(out, [path, meta])
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bama", description="Adaptive mastery assessment with optimal stopping.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("assess", help="simulate one assessment from a JSON config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=".")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("reproduce", help="write the tables behind one figure")
    p.add_argument("figure", help=", ".join(FIGURES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.add_argument("--replications", type=int, default=500)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("solve", help="stopping value and decision for one state")
    for name in ("alpha", "beta", "n", "gamma"):
        p.add_argument(name, type=float)
    p.add_argument("--eta", type=float, default=0.8)
    p.add_argument("--xi", type=float, default=0.5)
    p.add_argument("--d", type=float, default=20.0)
    p.add_argument("--horizon", type=int, default=4)
    p.add_argument("--quad-nodes", type=int, default=16)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="Monte Carlo and exact E[Z] on a grid")
    p.add_argument("--thetas", type=_floats, default=(0.1, 0.3, 0.5, 0.7, 0.9))
    p.add_argument("--lambdas", type=_floats, default=(0.05, 0.1, 0.2, 0.5, 1.0))
    p.add_argument("--d", type=float, default=20.0)
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: seed: must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, InfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
