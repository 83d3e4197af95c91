"""Full-information solvers: agent/mediator VI, JAM-VI, oracle, MPE."""

import numpy as np
import pytest

from fairlead import (ConfigurationError, ExplicitModel, MinWelfare,
                      agent_value_iteration, build_matrix_model,
                      enumeration_oracle, evaluate_mediator_policy,
                      full_state_mediator_vi, make_matrix_game,
                      mediator_value_iteration, sequential_jamvi,
                      truncated_mediator_operator, verify_mpe)

PHI = MinWelfare()


def repeated_pd_model():
    """One non-terminal state looping to itself with PD role payoffs."""
    transitions = {}
    rewards = {}
    payoffs = {0: (2.0, 1.0), 1: (3.0, -2.0)}
    for leader in range(2):
        for action in range(2):
            lead, follow = payoffs[action]
            vec = [follow, follow]
            vec[leader] = lead
            rewards[(0, leader, action)] = tuple(vec)
            transitions[(0, leader, action)] = ((0, 1.0),)
    model = ExplicitModel(2, (2, 2), ["loop"], set(), [(0, 1.0)],
                          transitions, rewards)
    model.validate()
    return model


def chain_model():
    """Two decision steps then a terminal state; leader 0 throughout."""
    states = ["s0", "s1", "end"]
    transitions = {}
    rewards = {}
    reward_map = {("s0", 0): (1.0, 2.0), ("s1", 0): (5.0, 1.0),
                  ("s0", 1): (0.0, 0.0), ("s1", 1): (0.0, 0.0)}
    for s, name in enumerate(states[:2]):
        for leader in range(2):
            for action in range(2):
                r0 = reward_map[(name, leader)][action]
                rewards[(s, leader, action)] = (r0, 0.0)
                transitions[(s, leader, action)] = ((s + 1, 1.0),)
    model = ExplicitModel(2, (2, 2), states, {2}, [(0, 1.0)],
                          transitions, rewards)
    model.validate()
    return model


def follower_period_model():
    """Agent 0 leads at s0 and s3; agent 1 leads the two states between."""
    states = ["s0", "s1", "s2", "s3", "end"]
    r0 = {("s0", 0, 0): 1.0, ("s0", 0, 1): 0.0,
          ("s1", 0, 0): 10.0, ("s1", 0, 1): 0.0,
          ("s2", 0, 0): 0.0, ("s2", 0, 1): 0.0,
          ("s3", 0, 0): 4.0, ("s3", 0, 1): 7.0,
          ("s0", 1, 0): 0.0, ("s0", 1, 1): 0.0,
          ("s1", 1, 0): 2.0, ("s1", 1, 1): 0.0,
          ("s2", 1, 0): 3.0, ("s2", 1, 1): 0.0,
          ("s3", 1, 0): 0.0, ("s3", 1, 1): 0.0}
    transitions = {}
    rewards = {}
    for s, name in enumerate(states[:4]):
        for leader in range(2):
            for action in range(2):
                rewards[(s, leader, action)] = (r0[(name, leader, action)], 0.0)
                transitions[(s, leader, action)] = ((s + 1, 1.0),)
    model = ExplicitModel(2, (2, 2), states, {4}, [(0, 1.0)],
                          transitions, rewards)
    model.validate()
    return model


class TestAgentValueIteration:
    def test_repeated_pd_geometric_series(self):
        model = repeated_pd_model()
        sol = agent_value_iteration(model, 0, [0], [[0], [0]], gamma=0.9,
                                    tol=1e-12)
        assert sol.q[(0, 1)] == pytest.approx(30.0, abs=1e-8)
        assert sol.q[(0, 0)] == pytest.approx(29.0, abs=1e-8)

    def test_myopic_limit_is_reward_table(self):
        model = chain_model()
        sol = agent_value_iteration(model, 0, [0, 0, 0], [[0] * 3, [0] * 3],
                                    gamma=0.0)
        for (s, a), value in sol.q.items():
            assert value == pytest.approx(model.rewards[(s, 0, a)][0])

    def test_backward_induction_by_hand(self):
        model = chain_model()
        sol = agent_value_iteration(model, 0, [0, 0, 0], [[0] * 3, [0] * 3],
                                    gamma=0.9)
        assert sol.q[(1, 0)] == pytest.approx(5.0)
        assert sol.q[(1, 1)] == pytest.approx(1.0)
        assert sol.q[(0, 0)] == pytest.approx(1.0 + 0.9 * 5.0)
        assert sol.q[(0, 1)] == pytest.approx(2.0 + 0.9 * 5.0)

    def test_follower_period_absorption(self):
        """k-step reads across a two-step follower period, by hand."""
        model = follower_period_model()
        mediator_policy = [0, 1, 1, 0, 0]
        policies = [[0] * 5, [0] * 5]
        sol = agent_value_iteration(model, 0, mediator_policy, policies,
                                    gamma=0.9)
        q_s3 = 7.0
        hand_s0 = 1.0 + 0.9 * (2.0 + 0.9 * (3.0 + 0.9 * q_s3))
        assert sol.q[(0, 0)] == pytest.approx(hand_s0, abs=1e-9)
        assert sol.q[(0, 1)] == pytest.approx(hand_s0 - 1.0, abs=1e-9)
        # counterfactual leadership read at a follower state
        hand_s1 = 10.0 + 0.9 * (3.0 + 0.9 * q_s3)
        assert sol.q[(1, 0)] == pytest.approx(hand_s1, abs=1e-9)

    def test_residual_decay_is_geometric(self):
        model = repeated_pd_model()
        sol = agent_value_iteration(model, 0, [0], [[0], [0]], gamma=0.9)
        residuals = [r for r in sol.residuals if r > 1e-12]
        for before, after in zip(residuals, residuals[1:]):
            assert after <= 0.9 * before + 1e-12


class TestMediatorValueIteration:
    def test_terminal_only_model_returns_rewards(self):
        game = make_matrix_game("chicken", steps_per_episode=1)
        model = build_matrix_model(game, use_history=True)
        policies = [np.zeros(model.n_states, dtype=int),
                    np.full(model.n_states, 2, dtype=int)]
        sol = mediator_value_iteration(model, policies, PHI, gamma=0.99)
        root = model.index[(0, (0.0, 0.0))]
        assert sol.qbar[root, 0] == pytest.approx([7.0, 2.0])
        assert sol.qbar[root, 1] == pytest.approx([6.0, 6.0])

    def test_bos_two_rounds_value_three(self):
        game = make_matrix_game("bos", steps_per_episode=2)
        model = build_matrix_model(game, use_history=True)
        policies = [np.zeros(model.n_states, dtype=int),
                    np.ones(model.n_states, dtype=int)]
        sol = mediator_value_iteration(model, policies, PHI, gamma=1.0)
        assert sol.initial_value(model) == pytest.approx(3.0, abs=1e-9)

    def test_myopic_mediator_is_greedy_on_rewards(self):
        game = make_matrix_game("chicken", steps_per_episode=4)
        model = build_matrix_model(game, use_history=True)
        policies = [np.zeros(model.n_states, dtype=int),
                    np.full(model.n_states, 2, dtype=int)]
        sol = mediator_value_iteration(model, policies, PHI, gamma=0.0)
        root = model.index[(0, (0.0, 0.0))]
        # leader 0 plays straight (min 2), leader 1 brakes (min 6)
        assert sol.policy[root] == 1

    @pytest.mark.parametrize("gamma", [0.99, 1.0])
    def test_truncated_identity_against_full_state_vi(self, gamma):
        game = make_matrix_game("chicken", steps_per_episode=3)
        model = build_matrix_model(game, use_history=True)
        policies = [np.zeros(model.n_states, dtype=int),
                    np.full(model.n_states, 2, dtype=int)]
        sol = mediator_value_iteration(model, policies, PHI, gamma=gamma,
                                       tol=1e-13)
        full = full_state_mediator_vi(model, policies, PHI, gamma=gamma,
                                      tol=1e-13)
        hist = np.array([model.history_of(s) for s in range(model.n_states)])
        for s in model.nonterminal():
            for leader in range(2):
                expected = hist[s] + sol.qbar[s, leader]
                assert np.max(np.abs(full[s, leader] - expected)) < 1e-9

    def test_contraction_with_fixed_successor_rule(self):
        game = make_matrix_game("chicken", steps_per_episode=3)
        model = build_matrix_model(game, use_history=True)
        policies = [np.zeros(model.n_states, dtype=int),
                    np.full(model.n_states, 2, dtype=int)]
        gamma = 0.99
        rule = np.arange(model.n_states) % 2
        operator = truncated_mediator_operator(model, policies, PHI, gamma,
                                               successor_rule=rule)
        rng = np.random.default_rng(0)
        shape = (model.n_states, 2, 2)
        for _ in range(100):
            q1 = rng.uniform(-10, 10, shape)
            q2 = rng.uniform(-10, 10, shape)
            lhs = np.max(np.abs(operator(q1) - operator(q2)))
            rhs = np.max(np.abs(q1 - q2))
            assert lhs <= gamma * rhs + 1e-12


class TestEnumerationOracle:
    def test_bos_two_rounds(self):
        game = make_matrix_game("bos", steps_per_episode=2)
        model = build_matrix_model(game, use_history=False)
        result = enumeration_oracle(model, PHI)
        assert result.value == pytest.approx(3.0)
        assert result.returns == pytest.approx((3.0, 3.0))

    def test_chicken_four_steps_all_brake(self):
        game = make_matrix_game("chicken", steps_per_episode=4)
        model = build_matrix_model(game, use_history=False)
        result = enumeration_oracle(model, PHI)
        assert result.value == pytest.approx(24.0)
        assert all(action == 2 for action in result.actions)

    def test_pd_four_steps_alternating_cooperation(self):
        game = make_matrix_game("pd", steps_per_episode=4)
        model = build_matrix_model(game, use_history=False)
        result = enumeration_oracle(model, PHI)
        assert result.value == pytest.approx(6.0)
        assert all(action == 0 for action in result.actions)
        assert sorted(result.leaders) == [0, 0, 1, 1]

    def test_four_player_extensions(self):
        chicken = build_matrix_model(
            make_matrix_game("chicken", agent_count=4), use_history=False)
        assert enumeration_oracle(chicken, PHI).value == pytest.approx(24.0)
        pd = build_matrix_model(
            make_matrix_game("pd", agent_count=4), use_history=False)
        assert enumeration_oracle(pd, PHI).value == pytest.approx(5.0)

    def test_size_guard_refuses_with_estimate(self):
        game = make_matrix_game("chicken", agent_count=4, steps_per_episode=8)
        model = build_matrix_model(game, use_history=False)
        with pytest.raises(ConfigurationError, match="leaves"):
            enumeration_oracle(model, PHI)


@pytest.fixture(scope="module")
def pd4():
    game = make_matrix_game("pd", steps_per_episode=4)
    model = build_matrix_model(game, use_history=True, use_endgame=True,
                               phi=PHI)
    return model, sequential_jamvi(model, PHI, rounds=30)


@pytest.fixture(scope="module")
def chicken4():
    game = make_matrix_game("chicken", steps_per_episode=4)
    model = build_matrix_model(game, use_history=True, use_endgame=True,
                               phi=PHI)
    return model, sequential_jamvi(model, PHI, rounds=30)


class TestSequentialJamVi:
    def test_converged_fixed_point(self, pd4):
        model, result = pd4
        assert result.converged
        again = sequential_jamvi(model, PHI, rounds=1)
        # one extra full pass from the fixed point changes nothing
        once_more = sequential_jamvi(model, PHI, rounds=result.rounds_run + 1)
        assert once_more.final_value == pytest.approx(result.final_value,
                                                      abs=1e-12)
        assert again is not None

    def test_pd4_matches_oracle_with_cooperation(self, pd4):
        model, result = pd4
        raw = build_matrix_model(make_matrix_game("pd", steps_per_episode=4),
                                 use_history=False)
        oracle = enumeration_oracle(raw, PHI)
        assert result.final_value == pytest.approx(oracle.value, abs=1e-8)
        # walk the equilibrium path: everyone cooperates, leaders rotate
        s = 0
        leaders = []
        while s not in model.terminal:
            leader = result.mediator_policy[s]
            action = result.agent_policies[leader][s]
            leaders.append(leader)
            assert action == 0
            s = model.transitions[(s, leader, action)][0][0]
        assert sorted(leaders) == [0, 0, 1, 1]

    @pytest.mark.parametrize("fixture", ["pd4", "chicken4"])
    def test_trace_monotone(self, fixture, request):
        _, result = request.getfixturevalue(fixture)
        values = [value for _, value in result.trace]
        for before, after in zip(values, values[1:]):
            assert after >= before - 1e-9

    def test_chicken4_matches_oracle(self, chicken4):
        model, result = chicken4
        raw = build_matrix_model(
            make_matrix_game("chicken", steps_per_episode=4),
            use_history=False)
        oracle = enumeration_oracle(raw, PHI)
        assert result.final_value == pytest.approx(oracle.value, abs=1e-8)

    def test_converged_profile_is_mpe(self, pd4):
        model, result = pd4
        ok, gap, _ = verify_mpe(model, result.agent_policies,
                                result.mediator_policy, gamma=1.0)
        assert ok, f"worst deviation gap {gap}"


class TestVerifyMpe:
    def test_hand_built_deviation_detected(self):
        game = make_matrix_game("pd", steps_per_episode=4)
        model = build_matrix_model(game, use_history=False)
        n = model.n_states
        cooperate = [np.zeros(n, dtype=int), np.zeros(n, dtype=int)]
        fixed_leader = np.zeros(n, dtype=int)
        ok, gap, gaps = verify_mpe(model, cooperate, fixed_leader, gamma=1.0)
        assert not ok
        assert gap > 0  # defecting as the fixed leader pays 3 > 2 per step

    def test_single_agent_greedy_policy_verifies(self):
        transitions = {(0, 0, a): ((1, 1.0),) for a in range(2)}
        rewards = {(0, 0, 0): (1.0,), (0, 0, 1): (4.0,)}
        model = ExplicitModel(1, (2,), ["s", "end"], {1}, [(0, 1.0)],
                              transitions, rewards)
        model.validate()
        sol = agent_value_iteration(model, 0, [0, 0], [[1, 0]], gamma=0.9)
        ok, gap, _ = verify_mpe(model, [sol.policy], [0, 0], gamma=0.9)
        assert ok and gap <= 1e-8


class TestModelText:
    def test_round_trip(self, tmp_path):
        model = build_matrix_model(make_matrix_game("pd", steps_per_episode=2),
                                   use_history=True)
        path = tmp_path / "model.txt"
        model.save_text(path)
        loaded = ExplicitModel.load_text(path)
        assert loaded.agent_count == model.agent_count
        assert loaded.n_states == model.n_states
        assert set(loaded.terminal) == set(model.terminal)
        for key, vec in model.rewards.items():
            assert loaded.rewards[key] == pytest.approx(vec)
        for s in range(model.n_states):
            assert loaded.history_of(s) == pytest.approx(model.history_of(s))

    def test_golden_file_solves(self, tmp_path):
        text = """# fairlead explicit model v1
agents 2
actions 2 2
state a
state b
init a 1.0
terminal b
reward a 0 0 1.0 0.0
reward a 0 1 5.0 0.0
reward a 1 0 0.0 0.0
reward a 1 1 0.0 0.0
trans a 0 0 b 1.0
trans a 0 1 b 1.0
trans a 1 0 b 1.0
trans a 1 1 b 1.0
"""
        path = tmp_path / "golden.txt"
        path.write_text(text)
        model = ExplicitModel.load_text(path)
        sol = agent_value_iteration(model, 0, [0, 0], [[0, 0], [0, 0]],
                                    gamma=0.9)
        assert sol.q[(0, 1)] == pytest.approx(5.0)

    def test_bad_row_sum_rejected(self):
        transitions = {(0, 0, 0): ((1, 0.5),)}
        rewards = {(0, 0, 0): (1.0,)}
        model = ExplicitModel(1, (1,), ["s", "end"], {1}, [(0, 1.0)],
                              transitions, rewards)
        with pytest.raises(ConfigurationError):
            model.validate()

    def test_parse_error_carries_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("agents 2\nactions 2 2\nstate a\nwhoops a b\n")
        with pytest.raises(ConfigurationError, match="line 4"):
            ExplicitModel.load_text(path)
