"""Tabular Q-learning for self-interested leader policies.

An agent's value table is only consulted and updated at the steps where the
agent leads. Between two of its leaderships it passively accrues discounted
rewards into a pending record; when re-selected (or at episode end) the
record is flushed with a k-step temporal-difference target, where k is the
number of environment steps that elapsed.
"""

from __future__ import annotations


class EpsilonSchedule:
    """Exponential anneal from `start` to `end` across `total` episodes."""

    def __init__(self, start=0.5, end=0.01, total=1):
        self.start = start
        self.end = end
        self.total = max(1, total)
        self.decay = (end / start) ** (1.0 / self.total) if start > 0 else 0.0

    def value(self, episode):
        if self.start <= 0:
            return 0.0
        return max(self.end, self.start * self.decay ** episode)


class PendingStep:
    """One open leadership record: (state, action, accrued reward, steps)."""

    __slots__ = ("state", "action", "reward", "k")

    def __init__(self, state, action):
        self.state = state
        self.action = action
        self.reward = 0.0
        self.k = 0


class AgentLearner:
    """Per-agent leader policy learned with k-step Q-learning updates."""

    def __init__(self, agent, n_actions, alpha=0.1, gamma=0.9, rng=None):
        self.agent = agent
        self.n_actions = n_actions
        self.alpha = alpha
        self.gamma = gamma
        self.rng = rng
        self.q = {}           # observed state -> list of action values
        self.pending = None

    def values(self, state):
        row = self.q.get(state)
        if row is None:
            row = [0.0] * self.n_actions
            self.q[state] = row
        return row

    def greedy_action(self, state):
        row = self.q.get(state)
        if row is None:
            return 0
        best, best_v = 0, row[0]
        for a in range(1, self.n_actions):
            if row[a] > best_v:
                best, best_v = a, row[a]
        return best

    def on_leader_selected(self, state, epsilon=0.0):
        """Pick a leader action and open a new pending record.

        Any previous pending record is first flushed against the current
        state, which is exactly the k-step bootstrap state s^{t+k}.
        """
        if self.pending is not None:
            self.flush_pending(state)
        if epsilon > 0.0 and self.rng.random() < epsilon:
            action = self.rng.randrange(self.n_actions)
        else:
            action = self.greedy_action(state)
        self.pending = PendingStep(state, action)
        return action

    def accrue_follower_reward(self, reward, offset=None):
        """Add gamma^offset * reward to the open record and advance k.

        Offset 0 is the agent's own leader step; later offsets are the steps
        it spent as a follower. With no open record this is a no-op (the
        agent has not led yet this episode).
        """
        pending = self.pending
        if pending is None:
            return
        if offset is None:
            offset = pending.k
        if offset == 0:
            pending.reward += reward
        else:
            pending.reward += self.gamma ** offset * reward
        pending.k = offset + 1

    def flush_pending(self, bootstrap_state=None):
        """Apply the k-step TD update; None bootstraps against terminal."""
        pending = self.pending
        if pending is None:
            return
        target = pending.reward
        if bootstrap_state is not None:
            row = self.q.get(bootstrap_state)
            if row is not None:
                target += self.gamma ** pending.k * max(row)
        row = self.values(pending.state)
        a = pending.action
        row[a] += self.alpha * (target - row[a])
        self.pending = None

    def reset_episode(self):
        self.pending = None

    def copy_table(self):
        return {s: list(row) for s, row in self.q.items()}
