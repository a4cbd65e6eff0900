"""Simulation studies: per-team evaluation, gap histograms and allocation statistics."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__, metrics
from .metrics import ScalingBounds
from .model import EpisodeConfig, TeamProfile, Trajectory, JointAction, state_space
from .planner import RewardSpec, SolverConfig, solve
from .records import (
    CorruptRecordsError,
    RecordsError,
    csv_bytes,
    read_csv,
    write_csv,
    write_json,
)
from .teamgen import TeamKind, classify_team_type, sample_team_study2, sample_team_uniform

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.60
FAIR_GAP_BUCKETS = ((0.60, 0.70, False), (0.70, 0.80, False), (0.80, 0.90, True))
EFFICIENCY_GAP_BUCKETS = ((-0.10, 0.00, True), (-0.50, -0.10, False))
# Gaps of policies reaching equal-valued goals can differ from 0 by rounding only.
GAP_EPS = 1e-9
CHUNK = 250


class TeamEvaluationError(RuntimeError):
    def __init__(self, team_id: int, cause: Exception):
        super().__init__(f"team {team_id}: {cause}")
        self.team_id = team_id


class PersistenceError(RecordsError):
    pass


def derive_seed(master_seed: int, team_index: int) -> int:
    """Per-team seed; independent of evaluation order."""
    ss = np.random.SeedSequence([master_seed, team_index])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def coefficient_columns(n: int) -> list[str]:
    cols = []
    for i in range(2):
        cols += [f"c{i}_{j}" for j in range(n)] + [f"p{i}_{j}" for j in range(n)]
    return cols


def _profile_row(profile: TeamProfile) -> list[float]:
    return list(profile.member_vector(0) + profile.member_vector(1))


def _profile_from_row(values: Sequence[float]) -> TeamProfile:
    half = len(values) // 2
    return TeamProfile.from_member_vectors(values[:half], values[half:])


# -- Study #1 ---------------------------------------------------------------

@dataclass(frozen=True)
class TeamRecord:
    """One team scored under a baseline (Efficient) and a candidate (Fair/FEA) policy.

    Rewards are the fair reward ``1 - F`` and efficient reward ``E`` at the goal
    each policy actually reaches.
    """

    team_id: int
    seed: int
    profile: TeamProfile
    candidate_fair_reward: float
    candidate_efficient_reward: float
    baseline_fair_reward: float
    baseline_efficient_reward: float

    @property
    def fair_gap(self) -> float:
        return self.candidate_fair_reward - self.baseline_fair_reward

    @property
    def efficiency_gap(self) -> float:
        return self.candidate_efficient_reward - self.baseline_efficient_reward

    REWARD_COLUMNS = (
        "candidate_fair_reward",
        "candidate_efficient_reward",
        "baseline_fair_reward",
        "baseline_efficient_reward",
    )

    @classmethod
    def header(cls, n: int = 2) -> list[str]:
        return ["team_id", "seed", *coefficient_columns(n), *cls.REWARD_COLUMNS,
                "fair_gap", "efficiency_gap"]

    def to_row(self) -> list:
        return [self.team_id, self.seed, *_profile_row(self.profile),
                *(getattr(self, c) for c in self.REWARD_COLUMNS),
                self.fair_gap, self.efficiency_gap]

    @classmethod
    def from_row(cls, row: Sequence[str]) -> "TeamRecord":
        ncoef = len(row) - 2 - len(cls.REWARD_COLUMNS) - 2
        vals = [float(x) for x in row[2:]]
        coef, rewards = vals[:ncoef], vals[ncoef:ncoef + 4]
        return cls(int(row[0]), int(row[1]), _profile_from_row(coef), *rewards)


def evaluate_team(profile: TeamProfile, config: EpisodeConfig,
                  candidate: RewardSpec | None = None, baseline: RewardSpec | None = None,
                  solver: SolverConfig | None = None, team_id: int = 0, seed: int = 0) -> TeamRecord:
    candidate = candidate or RewardSpec.fair()
    baseline = baseline or RewardSpec.efficient()
    try:
        goal_c = solve(config, profile, candidate, solver).goal_state
        goal_b = solve(config, profile, baseline, solver).goal_state
        return TeamRecord(
            team_id, seed, profile,
            1.0 - metrics.combined_fairness(goal_c, profile), metrics.efficiency(goal_c, profile),
            1.0 - metrics.combined_fairness(goal_b, profile), metrics.efficiency(goal_b, profile),
        )
    except Exception as exc:
        raise TeamEvaluationError(team_id, exc) from exc


@dataclass(frozen=True)
class GapHistogram:
    """Counts per ``(lo, hi, hi_inclusive)`` bucket; values outside all buckets go to overflow."""

    buckets: tuple[tuple[float, float, bool], ...]
    counts: tuple[int, ...]
    overflow: int

    @property
    def total(self) -> int:
        return sum(self.counts) + self.overflow

    def labels(self) -> list[str]:
        return [f"[{lo:.2f}, {hi:.2f}{']' if inc else ')'}" for lo, hi, inc in self.buckets]

    def shares(self) -> list[float]:
        return [c / self.total if self.total else 0.0 for c in self.counts]

    def to_json(self) -> dict:
        return {
            "buckets": [{"label": lab, "lo": lo, "hi": hi, "hi_inclusive": inc, "count": c, "share": s}
                        for lab, (lo, hi, inc), c, s in
                        zip(self.labels(), self.buckets, self.counts, self.shares())],
            "overflow": self.overflow,
            "total": self.total,
        }


def histogram(values: Iterable[float], buckets=FAIR_GAP_BUCKETS, eps: float = 0.0) -> GapHistogram:
    counts = [0] * len(buckets)
    overflow = 0
    for v in values:
        for k, (lo, hi, inc) in enumerate(buckets):
            if lo - eps <= v and (v < hi or (inc and v <= hi + eps)):
                counts[k] += 1
                break
        else:
            overflow += 1
    return GapHistogram(tuple(buckets), tuple(counts), overflow)


def _study1_chunk(args) -> list[TeamRecord]:
    start, stop, master_seed, config, solver = args
    out = []
    for i in range(start, stop):
        seed = derive_seed(master_seed, i)
        profile = sample_team_uniform(np.random.default_rng(seed), config.n)
        out.append(evaluate_team(profile, config, solver=solver, team_id=i, seed=seed))
    return out


def _map_chunks(fn: Callable, tasks: list, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        yield from map(fn, tasks)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        yield from pool.map(fn, tasks)


@dataclass
class Study1Result:
    records: list[TeamRecord]
    filtered: list[TeamRecord]
    fair_histogram: GapHistogram
    efficiency_histogram: GapHistogram
    summary: dict = field(default_factory=dict)


def summarize_study1(records: list[TeamRecord], threshold: float) -> Study1Result:
    filtered = [r for r in records if r.fair_gap > threshold]
    fair_h = histogram((r.fair_gap for r in filtered), FAIR_GAP_BUCKETS)
    eff_h = histogram((r.efficiency_gap for r in filtered), EFFICIENCY_GAP_BUCKETS, eps=GAP_EPS)
    fair_gaps = np.array([r.fair_gap for r in records]) if records else np.zeros(0)
    eff_gaps = np.array([r.efficiency_gap for r in records]) if records else np.zeros(0)
    summary = {
        "num_teams": len(records),
        "num_filtered": len(filtered),
        "threshold": threshold,
        "min_fair_gap": float(fair_gaps.min()) if len(records) else None,
        "max_fair_gap": float(fair_gaps.max()) if len(records) else None,
        "min_efficiency_gap": float(eff_gaps.min()) if len(records) else None,
        "max_efficiency_gap": float(eff_gaps.max()) if len(records) else None,
    }
    return Study1Result(records, filtered, fair_h, eff_h, summary)


def _study_meta(kind: str, master_seed: int, config_echo: dict) -> dict:
    return {"study": kind, "master_seed": master_seed, "config": config_echo,
            "tool": "fairalloc", "tool_version": __version__}


PARTIAL_NAME = "records.partial.csv"
RESUME_NAME = "resume.json"


def _load_partial(out_dir: Path, expect: dict) -> list[TeamRecord]:
    marker_path = out_dir / RESUME_NAME
    if not marker_path.exists():
        return []
    marker = json.loads(marker_path.read_text())
    if marker.get("run") != expect:
        raise PersistenceError(f"{marker_path} belongs to a different run; remove it or change --out")
    _, rows = read_csv(out_dir / PARTIAL_NAME, verify=False)
    records = [TeamRecord.from_row(r) for r in rows]
    if len(records) != marker["next_team"]:
        raise CorruptRecordsError(f"{PARTIAL_NAME} has {len(records)} rows, marker says {marker['next_team']}")
    return records


def _flush_partial(out_dir: Path, records: list[TeamRecord], run: dict, n: int):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / PARTIAL_NAME).write_bytes(csv_bytes(TeamRecord.header(n), (r.to_row() for r in records)))
    (out_dir / RESUME_NAME).write_text(json.dumps({"run": run, "next_team": len(records)}, sort_keys=True))


def run_study1(num_teams: int, config: EpisodeConfig | None = None, master_seed: int = 0,
               threshold: float = DEFAULT_THRESHOLD, solver: SolverConfig | None = None,
               out_dir: str | Path | None = None, jobs: int = 1,
               config_echo: dict | None = None) -> Study1Result:
    """Sample teams uniformly, score Efficient vs Fair, and bucket the large fair gaps.

    With ``out_dir``, completed chunks are checkpointed so an interrupted run
    resumes from the last flushed team.
    """
    if num_teams < 1:
        raise ValueError("num_teams must be >= 1")
    config = config or EpisodeConfig()
    solver = solver or SolverConfig()
    echo = config_echo or {"kits": list(config.initial_kits), "threshold": threshold,
                           "teams": num_teams, **asdict(solver)}
    run_id = {"master_seed": master_seed, "config": echo}
    out = Path(out_dir) if out_dir is not None else None

    records = _load_partial(out, run_id) if out else []
    if records:
        log.info("resuming study 1 at team %d", len(records))
    tasks = [(s, min(s + CHUNK, num_teams), master_seed, config, solver)
             for s in range(len(records), num_teams, CHUNK)]
    for chunk in _map_chunks(_study1_chunk, tasks, jobs):
        records.extend(chunk)
        if out:
            try:
                _flush_partial(out, records, run_id, config.n)
            except OSError as exc:
                raise PersistenceError(f"checkpoint to {out} failed: {exc}") from exc
        log.debug("study 1: %d/%d teams", len(records), num_teams)

    result = summarize_study1(records, threshold)
    if out:
        try:
            persist_study1(result, out, _study_meta("study1", master_seed, echo))
            (out / PARTIAL_NAME).unlink(missing_ok=True)
            (out / RESUME_NAME).unlink(missing_ok=True)
        except OSError as exc:
            raise PersistenceError(f"writing study 1 results to {out} failed: {exc}") from exc
    return result


def persist_study1(result: Study1Result, out_dir: Path, meta: dict):
    out_dir = Path(out_dir)
    n = result.records[0].profile.n if result.records else 2
    persist_records(result.records, out_dir / "records.csv", meta, n)
    persist_records(result.filtered, out_dir / "filtered.csv", meta, n)
    write_json(out_dir / "histogram.json", {
        "fair_gap": result.fair_histogram.to_json(),
        "efficiency_gap": result.efficiency_histogram.to_json(),
        "summary": result.summary,
    }, meta)


def persist_records(records: Sequence, path: str | Path, meta: dict | None = None, n: int = 2) -> dict:
    """Write records as CSV and register the file in the directory manifest."""
    record_type = type(records[0]) if records else TeamRecord
    if records:
        n = records[0].profile.n
    meta = dict(meta or {})
    manifest = write_csv(Path(path), record_type.header(n), (r.to_row() for r in records), meta)
    return manifest


def load_records(path: str | Path, record_type=None) -> list:
    record_type = record_type or TeamRecord
    header, rows = read_csv(Path(path))
    try:
        return [record_type.from_row(r) for r in rows]
    except (ValueError, IndexError) as exc:
        raise CorruptRecordsError(f"{path}: {exc}") from exc


def load_candidates(path: str | Path) -> list[tuple[TeamProfile, int]]:
    """Both members of every stored team, as matching candidates."""
    records = load_records(path)
    return [(r.profile, i) for r in records for i in (0, 1)]


# -- Study #2 ---------------------------------------------------------------

@dataclass(frozen=True)
class AllocationStats:
    """Per-member share of rounds on their best-capability and best-preference type."""

    capable: tuple[float, float]
    preferred: tuple[float, float]


def allocation_stats(trajectory: Trajectory | Sequence[JointAction], profile: TeamProfile) -> AllocationStats:
    actions = trajectory.actions if isinstance(trajectory, Trajectory) else list(trajectory)
    rounds = len(actions)
    if rounds == 0:
        raise ValueError("empty trajectory")
    capable, preferred = [], []
    for m in (0, 1):
        best_c = int(np.argmax(profile.capability[m]))
        best_p = int(np.argmax(profile.preference[m]))
        capable.append(sum(a[m] == best_c for a in actions) / rounds)
        preferred.append(sum(a[m] == best_p for a in actions) / rounds)
    return AllocationStats(tuple(capable), tuple(preferred))


def encode_actions(actions: Sequence[JointAction]) -> str:
    return ";".join(f"{a0}-{a1}" for a0, a1 in actions)


def decode_actions(text: str) -> list[JointAction]:
    if not text:
        return []
    return [JointAction(*map(int, step.split("-"))) for step in text.split(";")]


STUDY2_ALGORITHMS = ("efficient", "fea")


@dataclass(frozen=True)
class Study2Record:
    team_id: int
    seed: int
    profile: TeamProfile
    most_capable: int
    efficient_actions: tuple[JointAction, ...]
    fea_actions: tuple[JointAction, ...]

    def actions(self, algorithm: str) -> tuple[JointAction, ...]:
        return getattr(self, f"{algorithm}_actions")

    def stats(self, algorithm: str) -> AllocationStats:
        return allocation_stats(self.actions(algorithm), self.profile)

    @classmethod
    def header(cls, n: int = 2) -> list[str]:
        cols = ["team_id", "seed", *coefficient_columns(n), "most_capable"]
        for alg in STUDY2_ALGORITHMS:
            cols += [f"{alg}_actions", f"{alg}_capable_0", f"{alg}_capable_1",
                     f"{alg}_preferred_0", f"{alg}_preferred_1"]
        return cols

    def to_row(self) -> list:
        row = [self.team_id, self.seed, *_profile_row(self.profile), self.most_capable]
        for alg in STUDY2_ALGORITHMS:
            st = self.stats(alg)
            row += [encode_actions(self.actions(alg)), *st.capable, *st.preferred]
        return row

    @classmethod
    def from_row(cls, row: Sequence[str]) -> "Study2Record":
        ncoef = len(row) - 3 - 5 * len(STUDY2_ALGORITHMS)
        coef = [float(x) for x in row[2:2 + ncoef]]
        rest = row[2 + ncoef:]
        return cls(int(row[0]), int(row[1]), _profile_from_row(coef), int(rest[0]),
                   tuple(decode_actions(rest[1])), tuple(decode_actions(rest[6])))


def population_scaling_bounds(profiles: Sequence[TeamProfile], config: EpisodeConfig) -> ScalingBounds:
    """``|F_E|`` range over every goal state of every team in a sample."""
    h0, h1 = state_space(config).goal_held
    lo, hi = np.inf, -np.inf
    for p in profiles:
        v = np.abs(metrics.fair_equity_batch(h0, h1, p))
        lo, hi = min(lo, float(v.min())), max(hi, float(v.max()))
    return ScalingBounds(lo, hi)


def _sample_study2(args) -> list[tuple[int, TeamProfile]]:
    start, stop, master_seed, kind, max_draws = args
    out = []
    for i in range(start, stop):
        seed = derive_seed(master_seed, i)
        out.append((seed, sample_team_study2(np.random.default_rng(seed), kind, max_draws)))
    return out


def _study2_chunk(args) -> list[Study2Record]:
    start, teams, config, fea_spec, solver = args
    out = []
    for k, (seed, profile) in enumerate(teams):
        team_id = start + k
        try:
            eff = solve(config, profile, RewardSpec.efficient(), solver).trajectory
            fea = solve(config, profile, fea_spec, solver).trajectory
        except Exception as exc:
            raise TeamEvaluationError(team_id, exc) from exc
        out.append(Study2Record(team_id, seed, profile, classify_team_type(profile).most_capable,
                                tuple(eff.actions), tuple(fea.actions)))
    return out


def mean_stats(records: Sequence[Study2Record], order: str = "most_capable") -> dict:
    """Fig.-4-shaped grid: algorithm -> role -> {capable, preferred} mean fraction.

    ``order="most_capable"`` labels the most capable member H0; ``"sampled"``
    keeps members in the order they were drawn.
    """
    grid = {}
    for alg in STUDY2_ALGORITHMS:
        sums = np.zeros((2, 2))
        for r in records:
            st = r.stats(alg)
            first = r.most_capable if order == "most_capable" else 0
            for role, m in enumerate((first, 1 - first)):
                sums[role] += (st.capable[m], st.preferred[m])
        means = sums / max(len(records), 1)
        grid[alg] = {f"H{role}": {"capable": float(means[role, 0]), "preferred": float(means[role, 1])}
                     for role in (0, 1)}
    return grid


@dataclass
class Study2Result:
    team_type: TeamKind
    records: list[Study2Record]
    bounds: ScalingBounds | None
    means: dict

    def to_json(self) -> dict:
        return {
            "team_type": self.team_type.value,
            "num_teams": len(self.records),
            "fea_bounds": None if self.bounds is None else asdict(self.bounds),
            "means": self.means,
        }


def run_study2(num_teams: int, team_type: TeamKind, config: EpisodeConfig | None = None,
               master_seed: int = 0, lam: float = 0.70, bounds: str | ScalingBounds = "population",
               solver: SolverConfig | None = None, out_dir: str | Path | None = None,
               jobs: int = 1, max_draws: int = 10**6, config_echo: dict | None = None) -> Study2Result:
    """Sample teams of one type, solve Efficient and FEA, and average allocation stats.

    ``bounds`` picks the ``|F_E|`` scaling for FEA: ``"population"`` (range over
    the whole sampled team set), ``"instance"`` (each team's own goal states), or
    explicit :class:`ScalingBounds`.
    """
    if num_teams < 1:
        raise ValueError("num_teams must be >= 1")
    team_type = TeamKind(team_type)
    config = config or EpisodeConfig()
    solver = solver or SolverConfig()

    sample_tasks = [(s, min(s + CHUNK, num_teams), master_seed, team_type, max_draws)
                    for s in range(0, num_teams, CHUNK)]
    teams = [t for chunk in _map_chunks(_sample_study2, sample_tasks, jobs) for t in chunk]

    if isinstance(bounds, ScalingBounds):
        resolved = bounds
    elif bounds == "population":
        resolved = population_scaling_bounds([p for _, p in teams], config)
    elif bounds == "instance":
        resolved = None
    else:
        raise ValueError(f"unknown bounds mode {bounds!r}")
    fea_spec = RewardSpec.fea(lam, resolved)

    solve_tasks = [(s, teams[s:s + CHUNK], config, fea_spec, solver) for s in range(0, num_teams, CHUNK)]
    records = [r for chunk in _map_chunks(_study2_chunk, solve_tasks, jobs) for r in chunk]

    means = {"most_capable_first": mean_stats(records, "most_capable"),
             "sampled_order": mean_stats(records, "sampled")}
    result = Study2Result(team_type, records, resolved, means)
    if out_dir is not None:
        echo = config_echo or {"kits": list(config.initial_kits), "teams": num_teams,
                               "team_type": team_type.value, "lambda": lam,
                               "bounds": bounds if isinstance(bounds, str) else asdict(bounds),
                               **asdict(solver)}
        meta = _study_meta("study2", master_seed, echo)
        out = Path(out_dir)
        try:
            persist_records(records, out / "teams.csv", meta, config.n)
            write_json(out / "mean_stats.json", result.to_json(), meta)
        except OSError as exc:
            raise PersistenceError(f"writing study 2 results to {out} failed: {exc}") from exc
    return result
