"""Reward construction, policy iteration and rollout for the allocation MDP."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import metrics
from .metrics import ScalingBounds
from .model import (
    AllocationState,
    EpisodeConfig,
    JointAction,
    StateSpace,
    TeamProfile,
    Trajectory,
    initial_state,
    is_goal,
    is_valid,
    state_space,
    transition,
    valid_actions,
)

DEFAULT_LAMBDA = 0.70
BRUTE_FORCE_MAX_KITS = 16
# Q-values this close to the best count as ties and resolve to the lowest action index.
TIE_TOLERANCE = 1e-12


class Objective(enum.Enum):
    EFFICIENT = "efficient"
    FAIR = "fair"
    FEA = "fea"


class NonConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class RewardSpec:
    """Which objective pays out at goal states.

    ``lam`` weights efficiency in the FEA objective and must be ``None`` for the
    others. ``bounds=None`` scales ``|F_E|`` over the instance's own goal states.
    """

    objective: Objective
    lam: float | None = None
    bounds: ScalingBounds | None = None

    def __post_init__(self):
        if self.objective is Objective.FEA:
            if self.lam is None or not 0.0 <= self.lam <= 1.0:
                raise ValueError(f"FEA needs lambda in [0, 1], got {self.lam}")
        else:
            if self.lam is not None:
                raise ValueError(f"lambda only applies to FEA, not {self.objective.value}")
            if self.bounds is not None:
                raise ValueError("scaling bounds only apply to FEA")

    @classmethod
    def efficient(cls) -> "RewardSpec":
        return cls(Objective.EFFICIENT)

    @classmethod
    def fair(cls) -> "RewardSpec":
        return cls(Objective.FAIR)

    @classmethod
    def fea(cls, lam: float = DEFAULT_LAMBDA, bounds: ScalingBounds | None = None) -> "RewardSpec":
        return cls(Objective.FEA, lam, bounds)

    @property
    def name(self) -> str:
        return self.objective.value


@dataclass(frozen=True)
class SolverConfig:
    discount: float = 0.9
    eval_tolerance: float = 1e-4
    max_iterations: int = 100
    exact_evaluation: bool = False

    def __post_init__(self):
        if not 0.0 < self.discount <= 1.0:
            raise ValueError(f"discount must be in (0, 1], got {self.discount}")
        if self.eval_tolerance <= 0:
            raise ValueError("eval_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


def fea_scaling_bounds(config: EpisodeConfig, profile: TeamProfile) -> ScalingBounds:
    """Range of ``|F_E|`` over every reachable goal state of the instance."""
    h0, h1 = state_space(config).goal_held
    values = np.abs(metrics.fair_equity_batch(h0, h1, profile))
    return ScalingBounds(float(values.min()), float(values.max()))


def _config_of_goal(goal: AllocationState) -> EpisodeConfig:
    return EpisodeConfig(tuple(a + b for a, b in zip(*goal.held)))


def goal_reward(goal: AllocationState, profile: TeamProfile, spec: RewardSpec) -> float:
    if not is_goal(goal):
        raise ValueError(f"{goal} is not a goal state")
    if spec.objective is Objective.EFFICIENT:
        return metrics.efficiency(goal, profile)
    if spec.objective is Objective.FAIR:
        return 1.0 - metrics.combined_fairness(goal, profile)
    bounds = spec.bounds or fea_scaling_bounds(_config_of_goal(goal), profile)
    scaled = metrics.minmax_scale(abs(metrics.fair_equity(goal, profile)), bounds)
    return spec.lam * metrics.efficiency(goal, profile) + (1.0 - spec.lam) * (1.0 - scaled)


def goal_rewards_batch(h0, h1, profile: TeamProfile, spec: RewardSpec,
                       bounds: ScalingBounds | None = None) -> np.ndarray:
    """Vectorized ``goal_reward`` over goal states given by held-count arrays."""
    if spec.objective is Objective.EFFICIENT:
        return metrics.efficiency_batch(h0, h1, profile)
    if spec.objective is Objective.FAIR:
        return 1.0 - metrics.combined_fairness_batch(h0, h1, profile)
    abs_fe = np.abs(metrics.fair_equity_batch(h0, h1, profile))
    if bounds is None:
        bounds = spec.bounds
    if bounds is None:
        bounds = ScalingBounds(float(abs_fe.min()), float(abs_fe.max()))
    scaled = metrics.minmax_scale_batch(abs_fe, bounds)
    return spec.lam * metrics.efficiency_batch(h0, h1, profile) + (1.0 - spec.lam) * (1.0 - scaled)


@dataclass(frozen=True)
class TabularMDP:
    space: StateSpace
    profile: TeamProfile
    spec: RewardSpec
    rewards: np.ndarray = field(repr=False)  # (S, A)
    goal_values: np.ndarray = field(repr=False)  # (S,), NaN off goal

    @property
    def config(self) -> EpisodeConfig:
        return self.space.config

    @property
    def num_states(self) -> int:
        return len(self.space.states)

    @property
    def num_actions(self) -> int:
        return self.space.next_state.shape[1]

    @cached_property
    def layers(self) -> list[np.ndarray]:
        """State indices grouped by rounds already played, last round first."""
        done = np.array([sum(s.held[0]) for s in self.space.states])
        return [np.flatnonzero(done == k) for k in range(self.config.rounds, -1, -1)]


def build_mdp(config: EpisodeConfig, profile: TeamProfile, spec: RewardSpec) -> TabularMDP:
    """Deterministic MDP whose only positive reward is paid on entering a goal.

    Invalid actions self-loop at reward -1; goal states absorb at reward 0.
    """
    if profile.n != config.n:
        raise ValueError(f"profile has {profile.n} task types, config has {config.n}")
    space = state_space(config)
    goal_values = np.full(len(space.states), np.nan)
    h0, h1 = space.goal_held
    goal_values[space.goal_indices] = goal_rewards_batch(h0, h1, profile, spec)

    rewards = np.where(space.valid, 0.0, -1.0)
    enters_goal = space.valid & space.goal[space.next_state]
    rewards[enters_goal] = goal_values[space.next_state[enters_goal]]
    rewards[space.goal] = 0.0
    return TabularMDP(space, profile, spec, rewards, goal_values)


@dataclass(frozen=True)
class Policy:
    space: StateSpace
    action_index: np.ndarray = field(repr=False)  # (S,), -1 at goal states

    def __post_init__(self):
        self.action_index.setflags(write=False)

    def action_for(self, state: AllocationState) -> JointAction:
        k = int(self.action_index[self.space.index[state]])
        if k < 0:
            raise KeyError(f"no action at goal state {state}")
        return self.space.actions[k]

    def __eq__(self, other):
        return (isinstance(other, Policy) and self.space.config == other.space.config
                and np.array_equal(self.action_index, other.action_index))

    def __hash__(self):
        return hash((self.space.config, self.action_index.tobytes()))


@dataclass(frozen=True)
class SolveResult:
    policy: Policy
    state_values: np.ndarray = field(repr=False)
    trajectory: Trajectory
    goal_reward: float
    iterations: int
    converged: bool

    @property
    def goal_state(self) -> AllocationState:
        return self.trajectory.terminal


def _evaluate_sweeps(mdp: TabularMDP, policy: np.ndarray, solver: SolverConfig,
                     values: np.ndarray) -> np.ndarray:
    # Gauss-Seidel over layers, goal side first: one sweep is exact for an
    # acyclic policy, so the tolerance test normally trips on the second sweep.
    S = mdp.num_states
    rows = np.arange(S)
    nxt = mdp.space.next_state[rows, policy]
    r = mdp.rewards[rows, policy]
    gamma = solver.discount
    v = values.copy()
    for _ in range(100_000):
        delta = 0.0
        for layer in mdp.layers:
            new = r[layer] + gamma * v[nxt[layer]]
            if len(layer):
                delta = max(delta, float(np.max(np.abs(new - v[layer]))))
            v[layer] = new
        if delta < solver.eval_tolerance:
            return v
    raise RuntimeError("policy evaluation did not converge")


def _evaluate_exact(mdp: TabularMDP, policy: np.ndarray, solver: SolverConfig) -> np.ndarray:
    S = mdp.num_states
    rows = np.arange(S)
    P = np.zeros((S, S))
    P[rows, mdp.space.next_state[rows, policy]] = 1.0
    r = mdp.rewards[rows, policy]
    if solver.discount == 1.0:
        # absorbing goals make I - P singular at gamma = 1; pin their values to 0
        P[mdp.space.goal] = 0.0
    return np.linalg.solve(np.eye(S) - solver.discount * P, r)


def _greedy(mdp: TabularMDP, values: np.ndarray, gamma: float) -> np.ndarray:
    q = mdp.rewards + gamma * values[mdp.space.next_state]
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - TIE_TOLERANCE, axis=1)


def policy_iteration(mdp: TabularMDP, solver: SolverConfig | None = None) -> SolveResult:
    """Howard policy iteration from the lowest-index valid action in every state."""
    solver = solver or SolverConfig()
    space = mdp.space
    policy = np.argmax(space.valid, axis=1)  # first valid action; 0 at goals
    values = np.zeros(mdp.num_states)
    converged = False
    iterations = 0
    while iterations < solver.max_iterations:
        iterations += 1
        if solver.exact_evaluation:
            values = _evaluate_exact(mdp, policy, solver)
        else:
            values = _evaluate_sweeps(mdp, policy, solver, values)
        improved = _greedy(mdp, values, solver.discount)
        improved[space.goal] = 0
        if np.array_equal(improved, policy):
            converged = True
            break
        policy = improved
    if not converged:
        warnings.warn(
            f"policy iteration hit max_iterations={solver.max_iterations} without a stable policy",
            NonConvergenceWarning,
            stacklevel=2,
        )
    actions = np.where(space.goal, -1, policy)
    pol = Policy(space, actions)
    traj = rollout(pol, mdp.config)
    reward = float(mdp.goal_values[space.index[traj.terminal]])
    values.setflags(write=False)
    return SolveResult(pol, values, traj, reward, iterations, converged)


def solve(config: EpisodeConfig, profile: TeamProfile, spec: RewardSpec,
          solver: SolverConfig | None = None) -> SolveResult:
    return policy_iteration(build_mdp(config, profile, spec), solver)


def rollout(policy: Policy, config: EpisodeConfig) -> Trajectory:
    state = initial_state(config)
    steps = []
    for _ in range(config.rounds):
        action = policy.action_for(state)
        if not is_valid(state, action):
            raise RuntimeError(f"policy picked invalid action {action} in {state}")
        steps.append((state, action))
        state = transition(state, action)
    if not is_goal(state):
        raise RuntimeError(f"rollout ended at non-goal state {state}")
    return Trajectory(tuple(steps), state)


def brute_force_best_goal(config: EpisodeConfig, profile: TeamProfile,
                          spec: RewardSpec) -> tuple[AllocationState, float]:
    """Score every reachable goal state directly and return the best one.

    Walks allocation sequences depth-first, independently of the planner's
    state tables. Ties go to the lexicographically smallest goal.
    """
    if sum(config.initial_kits) > BRUTE_FORCE_MAX_KITS:
        raise ValueError(
            f"{sum(config.initial_kits)} kits is too many to enumerate "
            f"(limit {BRUTE_FORCE_MAX_KITS})"
        )
    goals = set()
    seen = set()
    stack = [initial_state(config)]
    while stack:
        s = stack.pop()
        if s in seen:
            continue
        seen.add(s)
        if is_goal(s):
            goals.add(s)
        stack.extend(transition(s, a) for a in valid_actions(s))
    goals = sorted(goals)

    if spec.objective is Objective.FEA and spec.bounds is None:
        abs_fe = [abs(metrics.fair_equity(g, profile)) for g in goals]
        spec = replace(spec, bounds=ScalingBounds(min(abs_fe), max(abs_fe)))
    best, best_reward = None, -np.inf
    for g in goals:
        r = goal_reward(g, profile, spec)
        if r > best_reward:
            best, best_reward = g, r
    return best, best_reward
