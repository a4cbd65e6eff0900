"""Command-line front end.

    fairalloc solve --kits 1,1 --algorithm efficient --member0 0.9,0.1,0.5,0.5 --member1 0.1,0.9,0.5,0.5
    fairalloc study1 --teams 50000 --seed 0 --out runs/study1
    fairalloc study2 --teams 1000 --team-type mixed --out runs/mixed
    fairalloc match --participant 0.26,0.92,0.42,0.54 --candidates runs/study1/filtered.csv
    fairalloc oracle-check --teams 200 --kits 3,3
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, metrics
from .experiments import (
    DEFAULT_THRESHOLD,
    load_candidates,
    run_study1,
    run_study2,
)
from .metrics import ScalingBounds
from .model import EpisodeConfig, TeamProfile
from .planner import (
    BRUTE_FORCE_MAX_KITS,
    DEFAULT_LAMBDA,
    Objective,
    RewardSpec,
    SolverConfig,
    brute_force_best_goal,
    solve,
)
from .records import RecordsError
from .teamgen import TeamKind, match_teammate, sample_team_uniform

log = logging.getLogger("fairalloc")


@dataclass
class RunConfig:
    kits: tuple[int, ...] = (8, 8)
    algorithm: str = "efficient"
    lam: float = DEFAULT_LAMBDA
    fea_bounds: str = "instance"
    gamma: float = 0.9
    tolerance: float = 1e-4
    max_iters: int = 100
    exact: bool = False
    teams: int = 1000
    threshold: float = DEFAULT_THRESHOLD
    team_type: str = "mixed"
    seed: int = 0
    out: str | None = None
    jobs: int = 1

    def validate(self):
        EpisodeConfig(tuple(self.kits))
        self.solver()
        if self.algorithm not in {o.value for o in Objective}:
            raise ValueError(f"algorithm: unknown {self.algorithm!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda: {self.lam} outside [0, 1]")
        if self.teams < 1:
            raise ValueError(f"teams: must be >= 1, got {self.teams}")
        if self.jobs < 1:
            raise ValueError(f"jobs: must be >= 1, got {self.jobs}")
        if self.team_type not in ("mixed", "twins"):
            raise ValueError(f"team_type: must be mixed or twins, got {self.team_type!r}")

    def episode(self) -> EpisodeConfig:
        return EpisodeConfig(tuple(self.kits))

    def solver(self) -> SolverConfig:
        return SolverConfig(self.gamma, self.tolerance, self.max_iters, self.exact)

    def echo(self, *keys) -> dict:
        d = asdict(self)
        d["kits"] = list(self.kits)
        return {k: d[k] for k in keys} if keys else d


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _coefficients(name: str, values, n: int) -> list[float]:
    if values is None:
        raise ValueError(f"{name}: required")
    if len(values) != 2 * n:
        raise ValueError(f"{name}: expected {2 * n} values (capabilities then preferences), got {len(values)}")
    for k, v in enumerate(values):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}[{k}]={v} outside [0, 1]")
    return list(values)


def _common(p: argparse.ArgumentParser, *, solver=True, study=False):
    p.add_argument("--config", type=Path, help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--kits", type=_int_list, help="kit count per task type, e.g. 8,8")
    if solver:
        p.add_argument("--gamma", type=float)
        p.add_argument("--tolerance", type=float)
        p.add_argument("--max-iters", dest="max_iters", type=int)
        p.add_argument("--exact", action="store_const", const=True, default=None,
                       help="evaluate policies by linear solve instead of sweeps")
    if study:
        p.add_argument("--teams", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=str)
        p.add_argument("--jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairalloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("solve", "rollout"):
        p = sub.add_parser(name, help="solve one team" if name == "solve" else "print the allocation rounds")
        _common(p)
        p.add_argument("--algorithm", choices=[o.value for o in Objective])
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--fea-bounds", dest="explicit_bounds", type=_float_list, metavar="MIN,MAX",
                       help="explicit |F_E| scaling bounds (default: the instance's goal states)")
        p.add_argument("--member0", type=_float_list, required=True, metavar="C..,P..")
        p.add_argument("--member1", type=_float_list, required=True, metavar="C..,P..")
        p.add_argument("--json", action="store_true")

    p = sub.add_parser("study1", help="Efficient vs Fair over uniformly sampled teams")
    _common(p, study=True)
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("study2", help="Efficient vs FEA over rejection-sampled teams")
    _common(p, study=True)
    p.add_argument("--team-type", dest="team_type", choices=["mixed", "twins"])
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--algorithms", default="efficient,fea")
    p.add_argument("--fea-bounds", dest="fea_bounds", choices=["population", "instance"])

    p = sub.add_parser("match", help="pick an agent teammate by L1 matching")
    p.add_argument("--participant", type=_float_list, required=True, metavar="C..,P..")
    p.add_argument("--candidates", type=Path, required=True)

    p = sub.add_parser("oracle-check", help="policy iteration vs brute force on small instances")
    _common(p)
    p.add_argument("--teams", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lambdas", type=_float_list, default=(0.0, 0.7, 1.0))
    return parser


def resolve_config(args: argparse.Namespace, command: str) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"config: cannot read {args.config}: {exc}")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"config: unknown keys {sorted(unknown)}")
    for k in known:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    if command == "study2" and "fea_bounds" not in values:
        values["fea_bounds"] = "population"
    if command == "oracle-check" and "teams" not in values:
        values["teams"] = 200
    if command == "oracle-check" and "kits" not in values:
        values["kits"] = (3, 3)
    if "kits" in values:
        values["kits"] = tuple(values["kits"])
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _spec(cfg: RunConfig, explicit=None) -> RewardSpec:
    objective = Objective(cfg.algorithm)
    if objective is not Objective.FEA:
        return RewardSpec(objective)
    bounds = ScalingBounds(*explicit) if explicit else None
    return RewardSpec.fea(cfg.lam, bounds)


def cmd_solve(args, cfg: RunConfig, show_rollout=False) -> int:
    episode = cfg.episode()
    m0 = _coefficients("member0", args.member0, episode.n)
    m1 = _coefficients("member1", args.member1, episode.n)
    if args.explicit_bounds is not None and len(args.explicit_bounds) != 2:
        raise ValueError("fea-bounds: expected MIN,MAX")
    profile = TeamProfile.from_member_vectors(m0, m1)
    spec = _spec(cfg, args.explicit_bounds)
    result = solve(episode, profile, spec, cfg.solver())
    goal = result.goal_state
    payload = {
        "algorithm": spec.name,
        "kits": list(episode.initial_kits),
        "rounds": episode.rounds,
        "goal_state": {"fetch": list(goal.fetch), "held": [list(h) for h in goal.held]},
        "goal_reward": result.goal_reward,
        "fair_reward": 1.0 - metrics.combined_fairness(goal, profile),
        "efficient_reward": metrics.efficiency(goal, profile),
        "fair_equity": metrics.fair_equity(goal, profile),
        "actions": [list(a) for a in result.trajectory.actions],
        "iterations": result.iterations,
        "converged": result.converged,
    }
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
        return 0
    print(f"algorithm      {spec.name}")
    print(f"kits           {episode.initial_kits} ({episode.rounds} rounds)")
    if show_rollout:
        for k, (state, action) in enumerate(result.trajectory.steps, 1):
            print(f"round {k:<2}       fetch={state.fetch} -> member0 gets {action[0]}, member1 gets {action[1]}")
    else:
        counts = {}
        for a in result.trajectory.actions:
            counts[tuple(a)] = counts.get(tuple(a), 0) + 1
        for a, c in sorted(counts.items()):
            print(f"action {a}  x{c}")
    print(f"goal held      member0={goal.held[0]} member1={goal.held[1]}")
    print(f"goal reward    {result.goal_reward:.6f}")
    print(f"fair reward    {payload['fair_reward']:.6f}")
    print(f"efficiency     {payload['efficient_reward']:.6f}")
    return 0


def _require_out(cfg: RunConfig):
    if not cfg.out:
        raise ValueError("out: an output directory is required")


def cmd_study1(args, cfg: RunConfig) -> int:
    _require_out(cfg)
    echo = cfg.echo("kits", "gamma", "tolerance", "max_iters", "exact", "teams", "threshold")
    result = run_study1(cfg.teams, cfg.episode(), cfg.seed, cfg.threshold, cfg.solver(),
                        cfg.out, cfg.jobs, config_echo=echo)
    n = len(result.filtered)
    print(f"teams simulated: {len(result.records)}; fair gap > {cfg.threshold:.2f}: {n}")
    for title, hist in (("Fair gap", result.fair_histogram), ("Efficiency gap", result.efficiency_histogram)):
        print(f"\n{title}")
        labels = hist.labels() + (["other"] if hist.overflow else [])
        cells = [f"{c:,} ({s * 100:.2f}%)" for c, s in zip(hist.counts, hist.shares())]
        if hist.overflow:
            cells.append(f"{hist.overflow:,} ({hist.overflow / hist.total * 100:.2f}%)")
        width = max(len(x) for x in labels + cells) + 2
        print("       " + "".join(x.ljust(width) for x in labels))
        print("Teams  " + "".join(x.ljust(width) for x in cells))
    print(f"\nwrote {cfg.out}")
    return 0


def cmd_study2(args, cfg: RunConfig) -> int:
    _require_out(cfg)
    algs = [a.strip() for a in args.algorithms.split(",")]
    if sorted(algs) != ["efficient", "fea"]:
        raise ValueError(f"algorithms: study 2 compares efficient,fea, got {args.algorithms!r}")
    echo = cfg.echo("kits", "gamma", "tolerance", "max_iters", "exact", "teams",
                    "team_type", "lam", "fea_bounds")
    result = run_study2(cfg.teams, TeamKind(cfg.team_type), cfg.episode(), cfg.seed, cfg.lam,
                        cfg.fea_bounds, cfg.solver(), cfg.out, cfg.jobs, config_echo=echo)
    order = "most_capable_first" if cfg.team_type == "mixed" else "sampled_order"
    print(f"{cfg.team_type} teams: {len(result.records)}  (H0 = "
          f"{'most capable member' if order == 'most_capable_first' else 'member 0 as sampled'})")
    print(f"{'algorithm':<11}{'member':<8}{'capable':>9}{'preferred':>11}")
    for alg, roles in result.means[order].items():
        for role, st in roles.items():
            print(f"{alg:<11}{role:<8}{st['capable']:>9.3f}{st['preferred']:>11.3f}")
    print(f"\nwrote {cfg.out}")
    return 0


def cmd_match(args) -> int:
    candidates = load_candidates(args.candidates)
    if not candidates:
        raise ValueError(f"candidates: {args.candidates} holds no teams")
    agent, l1 = match_teammate(args.participant, candidates)
    print("agent " + ",".join(f"{x:.4f}" for x in agent))
    print(f"L1 {l1:.4f}")
    return 0


def cmd_oracle_check(args, cfg: RunConfig) -> int:
    episode = cfg.episode()
    if sum(episode.initial_kits) > BRUTE_FORCE_MAX_KITS:
        raise ValueError(f"kits: {sum(episode.initial_kits)} kits exceeds the brute-force limit "
                         f"of {BRUTE_FORCE_MAX_KITS}")
    specs = [RewardSpec.efficient(), RewardSpec.fair()] + [RewardSpec.fea(lam) for lam in args.lambdas]
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    failures = 0
    for _ in range(cfg.teams):
        profile = sample_team_uniform(rng, episode.n)
        for spec in specs:
            got = solve(episode, profile, spec, cfg.solver()).goal_reward
            _, want = brute_force_best_goal(episode, profile, spec)
            gap = abs(got - want)
            worst = max(worst, gap)
            if gap > 1e-9:
                failures += 1
    label = ", ".join(["efficient", "fair"] + [f"fea(lambda={lam:g})" for lam in args.lambdas])
    status = "PASS" if failures == 0 else "FAIL"
    print(f"{status}: {cfg.teams} teams x [{label}] at kits={episode.initial_kits}; "
          f"max |planner - brute force| = {worst:.3e}; mismatches = {failures}")
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "match":
            return cmd_match(args)
        cfg = resolve_config(args, args.command)
        if args.command == "solve":
            return cmd_solve(args, cfg)
        if args.command == "rollout":
            return cmd_solve(args, cfg, show_rollout=True)
        if args.command == "study1":
            return cmd_study1(args, cfg)
        if args.command == "study2":
            return cmd_study2(args, cfg)
        return cmd_oracle_check(args, cfg)
    except (ValueError, RecordsError) as exc:
        print(f"fairalloc {args.command}: error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ValueError) else 1


if __name__ == "__main__":
    sys.exit(main())
