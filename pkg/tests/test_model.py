from itertools import product

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairalloc.model import (
    AllocationState,
    EpisodeConfig,
    JointAction,
    all_actions,
    enumerate_goal_states,
    enumerate_states,
    initial_state,
    is_goal,
    state_space,
    transition,
    valid_actions,
)


def S(fetch, h0=None, h1=None):
    n = len(fetch)
    return AllocationState(tuple(fetch), (tuple(h0 or (0,) * n), tuple(h1 or (0,) * n)))


def bfs_oracle(kits):
    """Reachable states via raw tuple arithmetic, no model functions."""
    n = len(kits)
    start = (tuple(kits), (0,) * n, (0,) * n)
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for fetch, h0, h1 in frontier:
            for a0, a1 in product(range(n), repeat=2):
                f = list(fetch)
                f[a0] -= 1
                f[a1] -= 1
                if min(f) < 0:
                    continue
                g0, g1 = list(h0), list(h1)
                g0[a0] += 1
                g1[a1] += 1
                s = (tuple(f), tuple(g0), tuple(g1))
                if s not in seen:
                    seen.add(s)
                    nxt.append(s)
        frontier = nxt
    return {AllocationState(f, (a, b)) for f, a, b in seen}


kits_small = st.lists(st.integers(0, 4), min_size=2, max_size=3).filter(
    lambda k: 0 < sum(k) <= 8 and sum(k) % 2 == 0)


class TestInitialState:
    def test_zero_kits_rejected(self):
        with pytest.raises(ValueError):
            EpisodeConfig((0, 0))

    def test_odd_total_rejected(self):
        with pytest.raises(ValueError):
            EpisodeConfig((1, 2))

    def test_two_two(self):
        assert initial_state(EpisodeConfig((2, 2))) == S((2, 2))

    def test_default_horizon(self):
        cfg = EpisodeConfig((8, 8))
        assert initial_state(cfg).fetch == (8, 8)
        assert cfg.rounds == 8


@pytest.mark.parametrize("fetch, goal", [((0, 0), True), ((1, 0), False), ((0, 3), False)])
def test_is_goal(fetch, goal):
    assert is_goal(S(fetch)) is goal


class TestValidActions:
    def test_ample(self):
        assert valid_actions(S((2, 2))) == all_actions(2)

    def test_one_each(self):
        assert set(valid_actions(S((1, 1)))) == {(0, 1), (1, 0)}

    def test_goal_has_none(self):
        assert valid_actions(S((0, 0), (1, 1), (1, 1))) == []

    def test_action_order_member0_major(self):
        assert all_actions(2) == [(0, 0), (0, 1), (1, 0), (1, 1)]


class TestTransition:
    def test_mixed_types(self):
        assert transition(S((2, 2)), JointAction(0, 1)) == S((1, 1), (1, 0), (0, 1))

    def test_invalid_self_loops(self):
        s = S((1, 1))
        assert transition(s, JointAction(0, 0)) is s

    def test_same_type_uses_two(self):
        assert transition(S((2, 0)), JointAction(0, 0)) == S((0, 0), (1, 0), (1, 0))


class TestEnumeration:
    def test_one_one(self):
        states = enumerate_states(EpisodeConfig((1, 1)))
        assert len(states) == 3
        assert len(enumerate_goal_states(EpisodeConfig((1, 1)))) == 2

    def test_two_zero(self):
        assert len(enumerate_states(EpisodeConfig((2, 0)))) == 2
        assert enumerate_goal_states(EpisodeConfig((2, 0))) == [S((0, 0), (1, 0), (1, 0))]

    def test_two_two_matches_bfs(self):
        states = enumerate_states(EpisodeConfig((2, 2)))
        assert set(states) == bfs_oracle((2, 2))
        # member 0 ends with (a, 2 - a) for a in 0..2; member 1 gets the rest
        oracle_goals = {s for s in bfs_oracle((2, 2)) if s.fetch == (0, 0)}
        assert len(oracle_goals) == 3
        assert set(enumerate_goal_states(EpisodeConfig((2, 2)))) == oracle_goals

    def test_sorted(self):
        states = enumerate_states(EpisodeConfig((3, 3)))
        assert states == sorted(states)

    @settings(max_examples=40, deadline=None)
    @given(kits_small)
    def test_equals_bfs_oracle(self, kits):
        assert set(enumerate_states(EpisodeConfig(tuple(kits)))) == bfs_oracle(kits)


@settings(max_examples=40, deadline=None)
@given(kits_small)
def test_conservation_and_balance(kits):
    cfg = EpisodeConfig(tuple(kits))
    for s in enumerate_states(cfg):
        for j, k in enumerate(kits):
            assert s.fetch[j] + s.held[0][j] + s.held[1][j] == k
        assert sum(s.held[0]) == sum(s.held[1])
        assert min(s.fetch + s.held[0] + s.held[1]) >= 0


@settings(max_examples=25, deadline=None)
@given(kits_small, st.randoms(use_true_random=False))
def test_fixed_horizon(kits, rnd):
    cfg = EpisodeConfig(tuple(kits))
    s = initial_state(cfg)
    steps = 0
    while not is_goal(s):
        s = transition(s, rnd.choice(valid_actions(s)))
        steps += 1
    assert steps == cfg.rounds


@settings(max_examples=40, deadline=None)
@given(kits_small, st.integers(0, 2), st.integers(0, 2))
def test_invalid_action_returns_equal_state(kits, a0, a1):
    cfg = EpisodeConfig(tuple(kits))
    n = cfg.n
    for s in enumerate_states(cfg):
        a = JointAction(a0 % n, a1 % n)
        if a not in valid_actions(s):
            assert transition(s, a) == s


def test_state_space_tables_consistent():
    space = state_space(EpisodeConfig((3, 3)))
    actions = space.actions
    for i, s in enumerate(space.states):
        for k, a in enumerate(actions):
            assert space.valid[i, k] == (a in valid_actions(s))
            assert space.states[space.next_state[i, k]] == transition(s, a)
    assert space.states[space.initial] == initial_state(space.config)
    assert list(space.goal_indices) == [i for i, s in enumerate(space.states) if is_goal(s)]
