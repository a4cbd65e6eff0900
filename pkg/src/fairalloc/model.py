"""Deterministic kit-allocation MDP for a robot serving two human teammates.

Each round the robot hands one kit to each member. A state records the kits
still waiting at the fetch station and the kits already handed to each member,
per task type. The episode ends once the fetch station is empty.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

NUM_MEMBERS = 2


@dataclass(frozen=True)
class TeamProfile:
    """Capability and preference coefficients, indexed ``[member][task_type]``."""

    capability: tuple[tuple[float, ...], ...]
    preference: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        cap = tuple(tuple(float(x) for x in row) for row in self.capability)
        pref = tuple(tuple(float(x) for x in row) for row in self.preference)
        object.__setattr__(self, "capability", cap)
        object.__setattr__(self, "preference", pref)
        if len(cap) != NUM_MEMBERS or len(pref) != NUM_MEMBERS:
            raise ValueError(f"team must have exactly {NUM_MEMBERS} members")
        n = len(cap[0])
        if n < 2:
            raise ValueError("need at least 2 task types")
        for name, family in (("capability", cap), ("preference", pref)):
            for i, row in enumerate(family):
                if len(row) != n:
                    raise ValueError(f"{name}[{i}] has {len(row)} entries, expected {n}")
                for j, x in enumerate(row):
                    if not 0.0 <= x <= 1.0:
                        raise ValueError(f"{name}[{i}][{j}]={x} outside [0, 1]")

    @property
    def n(self) -> int:
        return len(self.capability[0])

    @property
    def h(self) -> int:
        return len(self.capability)

    @cached_property
    def capability_array(self) -> np.ndarray:
        return np.array(self.capability, dtype=float)

    @cached_property
    def preference_array(self) -> np.ndarray:
        return np.array(self.preference, dtype=float)

    def member_vector(self, member: int) -> tuple[float, ...]:
        """Flat ``[c_0..c_{n-1}, p_0..p_{n-1}]`` vector for one member."""
        return self.capability[member] + self.preference[member]

    @classmethod
    def from_member_vectors(cls, v0, v1) -> "TeamProfile":
        v0, v1 = list(v0), list(v1)
        if len(v0) != len(v1) or len(v0) % 2:
            raise ValueError("member vectors must have equal, even length")
        n = len(v0) // 2
        return cls(capability=(v0[:n], v1[:n]), preference=(v0[n:], v1[n:]))

    def swapped(self) -> "TeamProfile":
        return TeamProfile(self.capability[::-1], self.preference[::-1])


@dataclass(frozen=True)
class EpisodeConfig:
    initial_kits: tuple[int, ...] = (8, 8)

    def __post_init__(self):
        kits = tuple(int(k) for k in self.initial_kits)
        object.__setattr__(self, "initial_kits", kits)
        if len(kits) < 2:
            raise ValueError("need at least 2 task types")
        if any(k < 0 for k in kits):
            raise ValueError(f"kit counts must be nonnegative, got {kits}")
        total = sum(kits)
        if total == 0 or total % NUM_MEMBERS:
            raise ValueError(
                f"total kits {total} must be a positive multiple of {NUM_MEMBERS}"
            )

    @property
    def n(self) -> int:
        return len(self.initial_kits)

    @property
    def rounds(self) -> int:
        return sum(self.initial_kits) // NUM_MEMBERS


class JointAction(NamedTuple):
    type_for_member0: int
    type_for_member1: int


@dataclass(frozen=True, order=True)
class AllocationState:
    fetch: tuple[int, ...]
    held: tuple[tuple[int, ...], tuple[int, ...]]

    def swapped(self) -> "AllocationState":
        return AllocationState(self.fetch, (self.held[1], self.held[0]))


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[tuple[AllocationState, JointAction], ...]
    terminal: AllocationState

    @property
    def actions(self) -> list[JointAction]:
        return [a for _, a in self.steps]

    def __len__(self):
        return len(self.steps)


def all_actions(n: int) -> list[JointAction]:
    """Every joint action, member-0 type major, member-1 type minor."""
    return [JointAction(a0, a1) for a0 in range(n) for a1 in range(n)]


def initial_state(config: EpisodeConfig) -> AllocationState:
    # EpisodeConfig validates itself; re-check here in case a caller bypassed it
    if sum(config.initial_kits) == 0 or sum(config.initial_kits) % NUM_MEMBERS:
        raise ValueError("invalid episode config")
    zeros = (0,) * config.n
    return AllocationState(config.initial_kits, (zeros, zeros))


def is_goal(state: AllocationState) -> bool:
    return not any(state.fetch)


def is_valid(state: AllocationState, action: JointAction) -> bool:
    a0, a1 = action
    n = len(state.fetch)
    if not (0 <= a0 < n and 0 <= a1 < n):
        return False
    if a0 == a1:
        return state.fetch[a0] >= 2
    return state.fetch[a0] >= 1 and state.fetch[a1] >= 1


def valid_actions(state: AllocationState) -> list[JointAction]:
    return [a for a in all_actions(len(state.fetch)) if is_valid(state, a)]


def transition(state: AllocationState, action: JointAction) -> AllocationState:
    """Successor state; an invalid action leaves the state unchanged."""
    if not is_valid(state, action):
        return state
    a0, a1 = action
    fetch = list(state.fetch)
    fetch[a0] -= 1
    fetch[a1] -= 1
    h0, h1 = list(state.held[0]), list(state.held[1])
    h0[a0] += 1
    h1[a1] += 1
    return AllocationState(tuple(fetch), (tuple(h0), tuple(h1)))


def enumerate_states(config: EpisodeConfig) -> list[AllocationState]:
    """All states reachable from the initial state, sorted lexicographically."""
    start = initial_state(config)
    seen = {start}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        for a in valid_actions(s):
            nxt = transition(s, a)
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return sorted(seen)


def enumerate_goal_states(config: EpisodeConfig) -> list[AllocationState]:
    return [s for s in enumerate_states(config) if is_goal(s)]


def held_arrays(states) -> tuple[np.ndarray, np.ndarray]:
    """Stack held counts of many states into two ``(len(states), n)`` arrays."""
    h0 = np.array([s.held[0] for s in states], dtype=float)
    h1 = np.array([s.held[1] for s in states], dtype=float)
    return h0, h1


@dataclass(frozen=True)
class StateSpace:
    """Index tables for a config's reachable states, shared by every team solved on it."""

    config: EpisodeConfig
    states: tuple[AllocationState, ...]
    next_state: np.ndarray = field(repr=False)  # (S, A) successor index
    valid: np.ndarray = field(repr=False)  # (S, A) bool
    goal: np.ndarray = field(repr=False)  # (S,) bool
    initial: int = 0

    @property
    def actions(self) -> list[JointAction]:
        return all_actions(self.config.n)

    @cached_property
    def index(self) -> dict[AllocationState, int]:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def goal_indices(self) -> np.ndarray:
        return np.flatnonzero(self.goal)

    @cached_property
    def goal_held(self) -> tuple[np.ndarray, np.ndarray]:
        return held_arrays([self.states[i] for i in self.goal_indices])


_SPACES: dict[EpisodeConfig, StateSpace] = {}


def state_space(config: EpisodeConfig) -> StateSpace:
    """Build (or fetch the cached) index tables for ``config``."""
    space = _SPACES.get(config)
    if space is not None:
        return space
    states = enumerate_states(config)
    index = {s: i for i, s in enumerate(states)}
    actions = all_actions(config.n)
    nxt = np.empty((len(states), len(actions)), dtype=np.intp)
    valid = np.zeros((len(states), len(actions)), dtype=bool)
    for i, s in enumerate(states):
        for k, a in enumerate(actions):
            ok = is_valid(s, a)
            valid[i, k] = ok
            nxt[i, k] = index[transition(s, a)] if ok else i
    goal = np.array([is_goal(s) for s in states])
    nxt.setflags(write=False)
    valid.setflags(write=False)
    goal.setflags(write=False)
    space = StateSpace(config, tuple(states), nxt, valid, goal, index[initial_state(config)])
    _SPACES[config] = space
    return space
