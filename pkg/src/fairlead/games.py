"""Core model of a mediated Stackelberg game with dynamic leaders.

A game couples a finite-state environment with naive, scripted follower
responses: once a leader and its action are fixed at a state, every other
agent's action is a deterministic function of the state, so the transition
effectively depends only on the current leader's action (leader-controller
property). Agents are indexed 0..N-1 throughout the library.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import UsageError


@dataclass(frozen=True)
class StepOutcome:
    """Result of advancing the environment by one joint step.

    rewards holds the full per-agent payoff for the step; welfare holds the
    component that fairness accounting uses (resource rewards only in the
    gridworld, identical to rewards in matrix games). selection_due is true
    when the next step begins at a leader-selection state.
    """

    joint_action: tuple
    rewards: tuple
    welfare: tuple
    state: object
    terminal: bool
    selection_due: bool


class Game:
    """Abstract environment interface consumed by learners and solvers.

    Concrete games define the state representation; states are hashable and
    immutable, a game instance can be shared read-only across runs.
    """

    agent_count: int = 2
    discount_agents: float = 0.9
    discount_mediator: float = 0.99

    def initial_state(self, rng):
        raise NotImplementedError

    def agent_actions(self, agent: int) -> range:
        """Actions available to `agent` when it is the leader."""
        raise NotImplementedError

    def action_name(self, agent: int, action: int) -> str:
        return str(action)

    def is_terminal(self, state) -> bool:
        raise NotImplementedError

    def follower_response(self, state, leader: int, leader_action: int) -> tuple:
        """Deterministic joint action of all agents implied by the leader's move."""
        raise NotImplementedError

    def rewards(self, state, leader: int, joint_action: tuple) -> tuple:
        """Per-agent reward vector for the joint action at `state`."""
        raise NotImplementedError

    def transition(self, state, leader: int, leader_action: int, rng):
        """Sample the next state; depends only on (state, leader action)."""
        raise NotImplementedError

    def step(self, state, leader: int, leader_action: int, rng) -> StepOutcome:
        """Default step: scripted responses, rewards, then transition."""
        joint = self.follower_response(state, leader, leader_action)
        rewards = self.rewards(state, leader, joint)
        nxt = self.transition(state, leader, leader_action, rng)
        return StepOutcome(
            joint_action=joint,
            rewards=rewards,
            welfare=rewards,
            state=nxt,
            terminal=self.is_terminal(nxt),
            selection_due=not self.is_terminal(nxt),
        )

    # Observation hooks. Learners key their tables on these.
    def agent_obs(self, state, agent: int, leader: int):
        return state

    def mediator_obs(self, state):
        return state

    def leader_reward_vectors(self, state, leader: int) -> list:
        """(action, reward vector) for each action available to the leader.

        Used by the end-of-game transfer rule to judge whether the terminal
        leader action was the fairest one available.
        """
        out = []
        for action in self.agent_actions(leader):
            joint = self.follower_response(state, leader, action)
            out.append((action, self.rewards(state, leader, joint)))
        return out


def joint_step(game: Game, state, leader: int, leader_action: int, rng) -> StepOutcome:
    """Advance one step of the Stackelberg stage game.

    The leader commits `leader_action`, followers respond with their scripted
    naive responses, rewards are paid on the full joint action and the next
    state is sampled from the leader-controlled transition.
    """
    if game.is_terminal(state):
        raise UsageError("joint_step called on a terminal state")
    if leader_action not in game.agent_actions(leader):
        raise UsageError(
            f"action {leader_action} not available to agent {leader}"
        )
    return game.step(state, leader, leader_action, rng)


def episode_return(
    game: Game,
    agent_policies: Sequence,
    selection_policy,
    horizon: int,
    discounted: bool = False,
    rng=None,
    transfer_rule=None,
):
    """Roll out one episode and return the cumulative reward vector.

    agent_policies[i] maps an observed state to agent i's leader action;
    selection_policy maps (state, step index) to a leader id. The rollout
    stops at `horizon` steps or at a terminal state, whichever comes first.
    When a transfer rule is supplied, its zero-sum terminal transfer is added
    to the final step's rewards.
    """
    if horizon < 1:
        raise UsageError("horizon must be at least 1")
    state = game.initial_state(rng)
    totals = [0.0] * game.agent_count
    gamma = game.discount_agents if discounted else 1.0
    scale = 1.0
    for t in range(horizon):
        if game.is_terminal(state):
            break
        leader = selection_policy(state, t)
        action = agent_policies[leader](game.agent_obs(state, leader, leader))
        outcome = joint_step(game, state, leader, action, rng)
        rewards = outcome.rewards
        if outcome.terminal and transfer_rule is not None:
            theta = transfer_rule(game, state, leader, action, rewards)
            rewards = tuple(r + th for r, th in zip(rewards, theta))
        for i, r in enumerate(rewards):
            totals[i] += scale * r
        scale *= gamma
        state = outcome.state
    return tuple(totals)
