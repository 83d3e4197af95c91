"""Resource-collection gridworld with a leader-follower hierarchy.

Agents move on a small grid; the current leader decides which resource to
head for and collects it, which needs at least one follower standing next
to the leader. Followers are scripted: each move they pick the action that
brings them closest (Chebyshev distance) to the leader. Collecting the fair
(green) resource pays every agent 4; an unfair resource pays 5 to agents
who prefer that color and 1 to everyone else. Followers near the leader
earn a small auxiliary shaping reward that is excluded from the welfare
accounting.

Two variants: RC1 fields two green plus two unfair resources whose color is
redrawn per episode; RC2 fields two green plus one red and one blue. An
episode ends after two collections or at the step limit. Leader selection
is due at the start of an episode and right after every collection.
"""

from __future__ import annotations

from typing import NamedTuple

from .errors import ConfigurationError, UsageError
from .games import Game, StepOutcome

RED, BLUE, GREEN = 0, 1, 2
COLOR_NAMES = ("red", "blue", "green")

FORWARD, BACKWARD, TURN_LEFT, TURN_RIGHT, COLLECT = range(5)
ACTION_NAMES = ("forward", "backward", "turn-left", "turn-right", "collect")
MOVE_ACTIONS = (FORWARD, BACKWARD, TURN_LEFT, TURN_RIGHT)
# tie order when several moves are equally close to the leader
FOLLOWER_PRIORITY = (FORWARD, TURN_LEFT, TURN_RIGHT, BACKWARD)

# orientation: 0=N 1=E 2=S 3=W
HEADINGS = ((0, 1), (1, 0), (0, -1), (-1, 0))


class Resource(NamedTuple):
    x: int
    y: int
    color: int
    collected: bool


class RCState(NamedTuple):
    positions: tuple       # ((x, y), ...) per agent
    orientations: tuple    # heading index per agent
    resources: tuple       # Resource per slot
    steps: int
    collected: int


def chebyshev(a, b):
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


class ResourceCollection(Game):
    """RC1/RC2 gridworld; see module docstring for the rules."""

    def __init__(
        self,
        variant="rc1",
        agent_count=2,
        width=5,
        height=5,
        step_limit=50,
        max_collected=2,
        aux_reward=0.1,
        aux_radius=1,
        randomize_layout=False,
        discount_agents=0.9,
        discount_mediator=0.99,
    ):
        if variant not in ("rc1", "rc2"):
            raise ConfigurationError(f"unknown resource-collection variant {variant!r}")
        if agent_count not in (2, 4):
            raise ConfigurationError("resource collection supports 2 or 4 agents")
        self.variant = variant
        self.agent_count = agent_count
        self.width = width
        self.height = height
        self.step_limit = step_limit
        self.max_collected = max_collected
        self.aux_reward = aux_reward
        self.aux_radius = aux_radius
        self.randomize_layout = randomize_layout
        self.discount_agents = discount_agents
        self.discount_mediator = discount_mediator
        # even-indexed agents prefer red, odd-indexed prefer blue
        self.preferences = tuple(RED if i % 2 == 0 else BLUE
                                 for i in range(agent_count))
        self._layout = None

    # -- layout -----------------------------------------------------------

    def _sample_layout(self, rng):
        """Distinct cells for the four resources, free cells for agents."""
        cells = [(x, y) for x in range(self.width) for y in range(self.height)]
        picks = rng.sample(cells, 4 + self.agent_count)
        resource_cells = tuple(picks[:4])
        agent_cells = tuple(picks[4:])
        orientations = tuple(rng.randrange(4) for _ in range(self.agent_count))
        return resource_cells, agent_cells, orientations

    def initial_state(self, rng):
        if self.randomize_layout or self._layout is None:
            layout = self._sample_layout(rng)
            if not self.randomize_layout:
                self._layout = layout
        else:
            layout = self._layout
        resource_cells, agent_cells, orientations = layout
        if self.variant == "rc1":
            unfair = RED if rng.random() < 0.5 else BLUE
            colors = (GREEN, GREEN, unfair, unfair)
        else:
            colors = (GREEN, GREEN, RED, BLUE)
        resources = tuple(
            Resource(x, y, c, False)
            for (x, y), c in zip(resource_cells, colors)
        )
        return RCState(agent_cells, orientations, resources, 0, 0)

    # -- game interface ----------------------------------------------------

    def agent_actions(self, agent):
        return range(5)

    def action_name(self, agent, action):
        return ACTION_NAMES[action]

    def is_terminal(self, state):
        return (state.collected >= self.max_collected
                or state.steps >= self.step_limit)

    def can_collect_color(self, agent, color):
        return color == GREEN or color == self.preferences[agent]

    def _move(self, pos, orientation, action):
        if action == TURN_LEFT:
            return pos, (orientation - 1) % 4
        if action == TURN_RIGHT:
            return pos, (orientation + 1) % 4
        dx, dy = HEADINGS[orientation]
        if action == BACKWARD:
            dx, dy = -dx, -dy
        x = min(max(pos[0] + dx, 0), self.width - 1)
        y = min(max(pos[1] + dy, 0), self.height - 1)
        return (x, y), orientation

    def follower_move(self, state, follower, leader):
        """Movement action minimizing post-move Chebyshev distance to the leader."""
        if follower == leader:
            raise UsageError("follower policy queried for the current leader")
        pos = state.positions[follower]
        orient = state.orientations[follower]
        target = state.positions[leader]
        best_action, best_dist = None, None
        for action in FOLLOWER_PRIORITY:
            new_pos, _ = self._move(pos, orient, action)
            dist = chebyshev(new_pos, target)
            if best_dist is None or dist < best_dist:
                best_action, best_dist = action, dist
        return best_action

    def follower_response(self, state, leader, leader_action):
        if leader_action not in self.agent_actions(leader):
            raise UsageError(f"unknown action {leader_action}")
        return tuple(
            leader_action if i == leader else self.follower_move(state, i, leader)
            for i in range(self.agent_count)
        )

    def _resolve(self, state, leader, joint_action):
        """Apply a joint action: move everyone, then settle collection."""
        positions = []
        orientations = []
        for i in range(self.agent_count):
            action = joint_action[i]
            if action == COLLECT:
                if i != leader:
                    raise UsageError("only the leader may collect")
                positions.append(state.positions[i])
                orientations.append(state.orientations[i])
            else:
                pos, orient = self._move(
                    state.positions[i], state.orientations[i], action)
                positions.append(pos)
                orientations.append(orient)
        positions = tuple(positions)
        orientations = tuple(orientations)

        collected_slot = None
        resource_reward = (0.0,) * self.agent_count
        if joint_action[leader] == COLLECT:
            leader_pos = positions[leader]
            helper_near = any(
                i != leader and chebyshev(positions[i], leader_pos) <= self.aux_radius
                for i in range(self.agent_count)
            )
            if helper_near:
                for slot, res in enumerate(state.resources):
                    if res.collected or (res.x, res.y) != leader_pos:
                        continue
                    if not self.can_collect_color(leader, res.color):
                        continue
                    collected_slot = slot
                    if res.color == GREEN:
                        resource_reward = (4.0,) * self.agent_count
                    else:
                        resource_reward = tuple(
                            5.0 if self.preferences[i] == res.color else 1.0
                            for i in range(self.agent_count)
                        )
                    break
        return positions, orientations, collected_slot, resource_reward

    def _aux_rewards(self, positions, leader):
        leader_pos = positions[leader]
        return tuple(
            self.aux_reward
            if i != leader and chebyshev(positions[i], leader_pos) <= self.aux_radius
            else 0.0
            for i in range(self.agent_count)
        )

    def rewards(self, state, leader, joint_action):
        positions, _, _, resource_reward = self._resolve(state, leader, joint_action)
        aux = self._aux_rewards(positions, leader)
        return tuple(r + a for r, a in zip(resource_reward, aux))

    def transition(self, state, leader, leader_action, rng):
        joint = self.follower_response(state, leader, leader_action)
        positions, orientations, slot, _ = self._resolve(state, leader, joint)
        return self._next_state(state, positions, orientations, slot)

    def _next_state(self, state, positions, orientations, slot):
        resources = state.resources
        collected = state.collected
        if slot is not None:
            resources = tuple(
                res._replace(collected=True) if k == slot else res
                for k, res in enumerate(resources)
            )
            collected += 1
        return RCState(positions, orientations, resources,
                       state.steps + 1, collected)

    def step(self, state, leader, leader_action, rng):
        joint = self.follower_response(state, leader, leader_action)
        positions, orientations, slot, resource_reward = self._resolve(
            state, leader, joint)
        aux = self._aux_rewards(positions, leader)
        rewards = tuple(r + a for r, a in zip(resource_reward, aux))
        nxt = self._next_state(state, positions, orientations, slot)
        terminal = self.is_terminal(nxt)
        return StepOutcome(
            joint_action=joint,
            rewards=rewards,
            welfare=resource_reward,
            state=nxt,
            terminal=terminal,
            selection_due=slot is not None and not terminal,
        )

    # -- observations -----------------------------------------------------

    def _remaining(self, state):
        return tuple((r.x, r.y, r.color) for r in state.resources
                     if not r.collected)

    def agent_obs(self, state, agent, leader):
        return (state.positions[agent], state.orientations[agent],
                agent == leader, self._remaining(state))

    def mediator_obs(self, state):
        return (state.positions, state.orientations, self._remaining(state))

    def leader_reward_vectors(self, state, leader):
        """Welfare vector each leader action would earn this step."""
        out = []
        for action in self.agent_actions(leader):
            joint = self.follower_response(state, leader, action)
            _, _, _, resource_reward = self._resolve(state, leader, joint)
            out.append((action, resource_reward))
        return out
