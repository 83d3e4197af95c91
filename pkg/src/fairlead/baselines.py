"""Comparison leader-selection schemes: fixed, alternating and vote-based,
plus the two mediator ablations (naive and pre-final)."""

from __future__ import annotations

from .errors import ConfigurationError


class FixedSelector:
    """Always returns the same leader."""

    def __init__(self, agent):
        self.agent = agent

    def reset(self):
        pass

    def select(self):
        return self.agent


class AlternatingSelector:
    """Rotates leadership in index order; the counter resets each episode."""

    def __init__(self, agent_count):
        self.agent_count = agent_count
        self.counter = 0

    def reset(self):
        self.counter = 0

    def select(self):
        leader = self.counter % self.agent_count
        self.counter += 1
        return leader


class VotingLearner:
    """Per-agent voting policy trained on the voter's own rewards.

    The voter commits a ballot at each selection stage; rewards accrued
    until the next stage form the Q-learning target for the committed
    (state, candidate) pair, bootstrapped on the best candidate there.
    """

    def __init__(self, agent, agent_count, alpha=0.1, gamma=0.9, rng=None):
        self.agent = agent
        self.agent_count = agent_count
        self.alpha = alpha
        self.gamma = gamma
        self.rng = rng
        self.q = {}         # observed state -> value per candidate
        self.pending = None  # (state, candidate, accrued reward, steps)

    def values(self, state):
        row = self.q.get(state)
        if row is None:
            row = [0.0] * self.agent_count
            self.q[state] = row
        return row

    def greedy_vote(self, state):
        row = self.q.get(state)
        if row is None:
            return 0
        best, best_v = 0, row[0]
        for c in range(1, self.agent_count):
            if row[c] > best_v:
                best, best_v = c, row[c]
        return best

    def cast_vote(self, state, epsilon=0.0, learning=True):
        if learning and self.pending is not None:
            self.flush(state)
        if epsilon > 0.0 and self.rng.random() < epsilon:
            vote = self.rng.randrange(self.agent_count)
        else:
            vote = self.greedy_vote(state)
        if learning:
            self.pending = [state, vote, 0.0, 0]
        return vote

    def accrue(self, reward):
        if self.pending is None:
            return
        self.pending[2] += self.gamma ** self.pending[3] * reward
        self.pending[3] += 1

    def flush(self, bootstrap_state=None):
        if self.pending is None:
            return
        state, vote, acc, k = self.pending
        target = acc
        if bootstrap_state is not None:
            row = self.q.get(bootstrap_state)
            if row is not None:
                target += self.gamma ** k * max(row)
        row = self.values(state)
        row[vote] += self.alpha * (target - row[vote])
        self.pending = None

    def reset_episode(self):
        self.pending = None

    def copy_table(self):
        return {s: list(row) for s, row in self.q.items()}


def tally_votes(votes, rng):
    """Plurality winner; ties broken uniformly at random."""
    counts = [0] * (max(votes) + 1)
    for v in votes:
        counts[v] += 1
    top = max(counts)
    winners = [c for c, n in enumerate(counts) if n == top]
    if len(winners) == 1:
        return winners[0]
    return winners[rng.randrange(len(winners))]


class VoteBasedSelector:
    """Each agent votes through its own learnable voting policy."""

    def __init__(self, agent_count, alpha=0.1, gamma=0.9, rng=None):
        self.agent_count = agent_count
        self.rng = rng
        self.voters = [
            VotingLearner(i, agent_count, alpha=alpha, gamma=gamma, rng=rng)
            for i in range(agent_count)
        ]

    def reset(self):
        for voter in self.voters:
            voter.reset_episode()

    def select(self, voter_states, epsilons, learning_flags):
        votes = [
            voter.cast_vote(voter_states[i], epsilons[i], learning_flags[i])
            for i, voter in enumerate(self.voters)
        ]
        return tally_votes(votes, self.rng), votes


MEDIATOR_VARIANTS = {
    "naive": (False, False),
    "pre-final": (True, False),
    "full": (True, True),
}


def make_ablation(variant):
    """Map a mediator variant name to its (use_history, use_endgame) flags."""
    try:
        return MEDIATOR_VARIANTS[variant]
    except KeyError:
        raise ConfigurationError(
            f"unknown mediator variant {variant!r}; expected one of "
            f"{sorted(MEDIATOR_VARIANTS)}"
        ) from None
