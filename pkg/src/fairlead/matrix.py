"""Iterated matrix games in leader-controller form.

Prisoner's Dilemma and Chicken pay by role: the leader's action implies
every follower's naive response, and payoffs attach to the leader/follower
roles. Battle of the Sexes pays by player identity instead (player 0
prefers the movie, player 1 the ballet). Episodes run a fixed number of
steps; the environment state is the step index and leader selection happens
at every step.
"""

from __future__ import annotations

from .errors import ConfigurationError, UsageError
from .games import Game

# action index -> (leader payoff, follower payoff), plus the follower's
# naive response to each leader action.
PD_ACTIONS = ("cooperate", "defect")
PD_PAYOFFS = {0: (2.0, 1.0), 1: (3.0, -2.0)}
PD_RESPONSE = {0: 0, 1: 1}

CHICKEN_ACTIONS = ("straight", "swerve", "brake")
CHICKEN_PAYOFFS = {0: (7.0, 2.0), 1: (2.0, 7.0), 2: (6.0, 6.0)}
CHICKEN_RESPONSE = {0: 1, 1: 0, 2: 2}

BOS_ACTIONS = ("movie", "ballet")
# (player 0 action, player 1 action) -> (player 0 payoff, player 1 payoff)
BOS_PAYOFFS = {
    (0, 0): (2.0, 1.0),
    (1, 1): (1.0, 2.0),
    (0, 1): (0.0, 0.0),
    (1, 0): (0.0, 0.0),
}


class MatrixGame(Game):
    """An iterated role-payoff matrix game (PD or Chicken) with N agents."""

    def __init__(
        self,
        actions,
        payoffs,
        response,
        agent_count=2,
        steps_per_episode=4,
        discount_agents=0.9,
        discount_mediator=0.99,
    ):
        if agent_count < 2:
            raise ConfigurationError("matrix games need at least 2 agents")
        self.actions = tuple(actions)
        self.payoffs = dict(payoffs)
        self.response = dict(response)
        self.agent_count = agent_count
        self.steps_per_episode = steps_per_episode
        self.discount_agents = discount_agents
        self.discount_mediator = discount_mediator

    def initial_state(self, rng):
        return 0

    def agent_actions(self, agent):
        return range(len(self.actions))

    def action_name(self, agent, action):
        return self.actions[action]

    def is_terminal(self, state):
        return state >= self.steps_per_episode

    def follower_response(self, state, leader, leader_action):
        if leader_action not in self.payoffs:
            raise UsageError(f"unknown action {leader_action}")
        follower_action = self.response[leader_action]
        return tuple(
            leader_action if i == leader else follower_action
            for i in range(self.agent_count)
        )

    def rewards(self, state, leader, joint_action):
        lead_pay, follow_pay = self.payoffs[joint_action[leader]]
        return tuple(
            lead_pay if i == leader else follow_pay
            for i in range(self.agent_count)
        )

    def transition(self, state, leader, leader_action, rng):
        return state + 1


class BattleOfSexes(Game):
    """Two-player Battle of the Sexes; the follower mirrors the leader."""

    agent_count = 2

    def __init__(self, steps_per_episode=2, discount_agents=0.9,
                 discount_mediator=0.99):
        self.actions = BOS_ACTIONS
        self.steps_per_episode = steps_per_episode
        self.discount_agents = discount_agents
        self.discount_mediator = discount_mediator

    def initial_state(self, rng):
        return 0

    def agent_actions(self, agent):
        return range(len(self.actions))

    def action_name(self, agent, action):
        return self.actions[action]

    def is_terminal(self, state):
        return state >= self.steps_per_episode

    def follower_response(self, state, leader, leader_action):
        if leader_action not in (0, 1):
            raise UsageError(f"unknown action {leader_action}")
        return (leader_action, leader_action)

    def rewards(self, state, leader, joint_action):
        return BOS_PAYOFFS[joint_action]

    def transition(self, state, leader, leader_action, rng):
        return state + 1


def make_matrix_game(name, agent_count=2, steps_per_episode=4, **kwargs):
    """Build one of the named matrix games: pd, chicken or bos."""
    if name == "pd":
        return MatrixGame(PD_ACTIONS, PD_PAYOFFS, PD_RESPONSE,
                          agent_count, steps_per_episode, **kwargs)
    if name == "chicken":
        return MatrixGame(CHICKEN_ACTIONS, CHICKEN_PAYOFFS, CHICKEN_RESPONSE,
                          agent_count, steps_per_episode, **kwargs)
    if name == "bos":
        if agent_count != 2:
            raise ConfigurationError("battle of the sexes is two-player")
        return BattleOfSexes(steps_per_episode, **kwargs)
    raise ConfigurationError(f"unknown matrix game {name!r}")
