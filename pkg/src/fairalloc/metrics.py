"""Fairness and efficiency measures of an allocation state.

Scalar functions take an ``AllocationState``; the ``*_batch`` variants take the
held counts of many states as ``(m, n)`` arrays and are what the planner uses.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import NUM_MEMBERS, AllocationState, TeamProfile


class FeatureKind(enum.Enum):
    CAPABILITY = "capability"
    PREFERENCE = "preference"


@dataclass(frozen=True)
class ScalingBounds:
    min_abs_equity: float
    max_abs_equity: float

    def __post_init__(self):
        lo, hi = self.min_abs_equity, self.max_abs_equity
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError("scaling bounds must be finite")
        if lo < 0 or hi < lo:
            raise ValueError(f"need 0 <= min <= max, got ({lo}, {hi})")


def _features(profile: TeamProfile, kind: FeatureKind):
    if profile.h != NUM_MEMBERS:
        raise ValueError(f"fairness is defined for {NUM_MEMBERS} members, got {profile.h}")
    return profile.capability if kind is FeatureKind.CAPABILITY else profile.preference


def _check_balanced(state: AllocationState):
    if sum(state.held[0]) != sum(state.held[1]):
        raise ValueError(f"unbalanced allocation {state.held}")


def feature_fairness(state: AllocationState, profile: TeamProfile, kind: FeatureKind) -> float:
    """Signed imbalance of feature-weighted kits between member 0 and member 1.

    Lies in [-1, 1] for balanced states. Returns 0 before any kit is handed out.
    """
    f = _features(profile, kind)
    _check_balanced(state)
    h0, h1 = state.held
    total = sum(h0) + sum(h1)
    if total == 0:
        return 0.0
    num = sum(f[0][j] * h0[j] - f[1][j] * h1[j] for j in range(len(h0)))
    return num / (total / NUM_MEMBERS)


def combined_fairness(state: AllocationState, profile: TeamProfile) -> float:
    fc = feature_fairness(state, profile, FeatureKind.CAPABILITY)
    fp = feature_fairness(state, profile, FeatureKind.PREFERENCE)
    return abs((fc + fp) / NUM_MEMBERS)


def efficiency(state: AllocationState, profile: TeamProfile) -> float:
    """Capability-weighted share of the kits handed out so far."""
    c = _features(profile, FeatureKind.CAPABILITY)
    h0, h1 = state.held
    total = sum(h0) + sum(h1)
    if total == 0:
        return 0.0
    return sum(c[0][j] * h0[j] + c[1][j] * h1[j] for j in range(len(h0))) / total


def _equity_inputs(profile: TeamProfile) -> tuple[float, float]:
    inputs = tuple(sum(row) for row in _features(profile, FeatureKind.CAPABILITY))
    if any(x <= 0 for x in inputs):
        raise ValueError(f"degenerate profile: capability sums {inputs} must be positive")
    return inputs


def fair_equity(state: AllocationState, profile: TeamProfile) -> float:
    """Difference of the members' outcome/input ratios.

    Outcome is preference-weighted kits received; input is total capability.
    """
    in0, in1 = _equity_inputs(profile)
    p = profile.preference
    h0, h1 = state.held
    out0 = sum(p[0][j] * h0[j] for j in range(len(h0)))
    out1 = sum(p[1][j] * h1[j] for j in range(len(h1)))
    return out0 / in0 - out1 / in1


def minmax_scale(value: float, bounds: ScalingBounds) -> float:
    lo, hi = bounds.min_abs_equity, bounds.max_abs_equity
    if hi == lo:
        return 0.0
    return min(1.0, max(0.0, (value - lo) / (hi - lo)))


def predicted_rating(reward: float) -> float:
    """Map a reward in [0, 1] onto a 1..7 Likert rating."""
    if not 0.0 <= reward <= 1.0:
        raise ValueError(f"reward {reward} outside [0, 1]")
    return 1.0 + 6.0 * reward


# -- vectorized forms over many states -------------------------------------

def feature_fairness_batch(h0, h1, profile: TeamProfile, kind: FeatureKind) -> np.ndarray:
    _features(profile, kind)
    f = profile.capability_array if kind is FeatureKind.CAPABILITY else profile.preference_array
    total = h0.sum(axis=1) + h1.sum(axis=1)
    num = h0 @ f[0] - h1 @ f[1]
    out = np.zeros_like(total)
    nz = total > 0
    out[nz] = num[nz] / (total[nz] / NUM_MEMBERS)
    return out


def combined_fairness_batch(h0, h1, profile: TeamProfile) -> np.ndarray:
    fc = feature_fairness_batch(h0, h1, profile, FeatureKind.CAPABILITY)
    fp = feature_fairness_batch(h0, h1, profile, FeatureKind.PREFERENCE)
    return np.abs((fc + fp) / NUM_MEMBERS)


def efficiency_batch(h0, h1, profile: TeamProfile) -> np.ndarray:
    c = profile.capability_array
    total = h0.sum(axis=1) + h1.sum(axis=1)
    num = h0 @ c[0] + h1 @ c[1]
    out = np.zeros_like(total)
    nz = total > 0
    out[nz] = num[nz] / total[nz]
    return out


def fair_equity_batch(h0, h1, profile: TeamProfile) -> np.ndarray:
    in0, in1 = _equity_inputs(profile)
    p = profile.preference_array
    return (h0 @ p[0]) / in0 - (h1 @ p[1]) / in1


def minmax_scale_batch(values, bounds: ScalingBounds) -> np.ndarray:
    lo, hi = bounds.min_abs_equity, bounds.max_abs_equity
    values = np.asarray(values, dtype=float)
    if hi == lo:
        return np.zeros_like(values)
    return np.clip((values - lo) / (hi - lo), 0.0, 1.0)
