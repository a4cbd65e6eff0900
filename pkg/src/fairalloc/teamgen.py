"""Team sampling, team-type classification and L1 teammate matching."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import TeamProfile

COEFF_LOW, COEFF_HIGH = 0.01, 0.99
# Capability windows used when sampling Study #2 teams: (squares, letters).
STUDY2_CAPABILITY_INTERVALS = ((0.20, 0.32), (0.63, 1.00))
DEFAULT_DRAW_BUDGET = 10**6


class Correlation(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class TeamKind(enum.Enum):
    MIXED = "mixed"
    TWINS = "twins"
    NEGATIVE = "negative"


class TieError(ValueError):
    """Coefficients tie where a strict ordering is required; resample."""


class RejectionBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class TeamType:
    kind: TeamKind
    most_capable: int

    def __post_init__(self):
        if self.most_capable not in (0, 1):
            raise ValueError(f"most_capable must be 0 or 1, got {self.most_capable}")


def _strict_argmax(values) -> int:
    values = np.asarray(values, dtype=float)
    best = int(np.argmax(values))
    if np.count_nonzero(values == values[best]) > 1:
        raise TieError(f"no unique maximum in {values.tolist()}")
    return best


def classify_member_correlation(capability, preference) -> Correlation:
    """Positive when a member likes best the task type they are best at."""
    if _strict_argmax(capability) == _strict_argmax(preference):
        return Correlation.POSITIVE
    return Correlation.NEGATIVE


def most_capable_member(profile: TeamProfile) -> int:
    return _strict_argmax([max(row) for row in profile.capability])


def classify_team_type(profile: TeamProfile) -> TeamType:
    c0 = classify_member_correlation(profile.capability[0], profile.preference[0])
    c1 = classify_member_correlation(profile.capability[1], profile.preference[1])
    if c0 is c1:
        kind = TeamKind.TWINS if c0 is Correlation.POSITIVE else TeamKind.NEGATIVE
    else:
        kind = TeamKind.MIXED
    return TeamType(kind, most_capable_member(profile))


def sample_team_uniform(rng: np.random.Generator, n: int = 2) -> TeamProfile:
    """Every coefficient i.i.d. Uniform[0.01, 0.99]."""
    cap = rng.uniform(COEFF_LOW, COEFF_HIGH, size=(2, n))
    pref = rng.uniform(COEFF_LOW, COEFF_HIGH, size=(2, n))
    return TeamProfile(cap, pref)


def _is_study2_type(profile: TeamProfile, target: TeamKind) -> bool:
    try:
        team = classify_team_type(profile)
    except TieError:
        return False
    if team.kind is not target:
        return False
    if target is TeamKind.MIXED:
        top = team.most_capable
        return classify_member_correlation(
            profile.capability[top], profile.preference[top]) is Correlation.NEGATIVE
    return True


def in_study2_intervals(profile: TeamProfile) -> bool:
    return all(
        lo <= row[j] <= hi
        for row in profile.capability
        for j, (lo, hi) in enumerate(STUDY2_CAPABILITY_INTERVALS)
    )


def sample_team_study2(rng: np.random.Generator, target: TeamKind,
                       max_draws: int = DEFAULT_DRAW_BUDGET) -> TeamProfile:
    """Rejection-sample a two-type team of the requested kind.

    Capabilities are drawn inside the Study #2 windows; preferences are
    Uniform[0.01, 0.99]. For Mixed teams the most capable member must be the
    negatively correlated one.
    """
    if target not in (TeamKind.MIXED, TeamKind.TWINS):
        raise ValueError(f"Study #2 samples Mixed or Twins teams, not {target.value}")
    lows = np.array([lo for lo, _ in STUDY2_CAPABILITY_INTERVALS])
    highs = np.array([hi for _, hi in STUDY2_CAPABILITY_INTERVALS])
    for _ in range(max_draws):
        cap = rng.uniform(lows, highs, size=(2, len(lows)))
        pref = rng.uniform(COEFF_LOW, COEFF_HIGH, size=(2, len(lows)))
        profile = TeamProfile(cap, pref)
        if _is_study2_type(profile, target):
            return profile
    raise RejectionBudgetExceeded(f"no {target.value} team accepted in {max_draws} draws")


def member_vector(profile: TeamProfile, member: int) -> np.ndarray:
    return np.array(profile.member_vector(member))


def match_teammate(participant: Sequence[float],
                   candidates: Sequence[tuple[TeamProfile, int]]) -> tuple[np.ndarray, float]:
    """Find the candidate member closest to ``participant`` in L1 distance.

    Returns that member's teammate's coefficient vector (the agent to play
    against the participant) and the distance. Ties go to the earliest candidate.
    """
    if not candidates:
        raise ValueError("candidate set is empty")
    y = np.asarray(participant, dtype=float)
    pool = np.array([profile.member_vector(i) for profile, i in candidates])
    if pool.shape[1] != y.shape[0]:
        raise ValueError(f"participant has {y.shape[0]} coefficients, candidates have {pool.shape[1]}")
    dist = np.abs(pool - y).sum(axis=1)
    k = int(np.argmin(dist))
    profile, member = candidates[k]
    return member_vector(profile, 1 - member), float(dist[k])
