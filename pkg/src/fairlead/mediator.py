"""The fair Markov mediator: leader selection learned over history states.

The mediator keeps a truncated multi-objective table over environmental
states; the full Q-value at a mediator state (s, s_r) is read as
s_r + Qbar(s, a). Selection is greedy in the fairness measure applied to
that full read. Two optional stages extend the bare selection rule: the
history model (conditioning selection on within-episode cumulative rewards)
and the end-of-game stage (a zero-sum transfer that punishes an unfair
terminal leader action).
"""

from __future__ import annotations

from .errors import ConfigurationError, UsageError
from .fairness import FairnessMeasure, MinWelfare


class HistoryAccumulator:
    """Cumulative within-episode reward vector s_r; resets at episode start."""

    __slots__ = ("values",)

    def __init__(self, agent_count):
        self.values = (0.0,) * agent_count

    def reset(self):
        self.values = (0.0,) * len(self.values)

    def add(self, rewards):
        self.values = tuple(v + r for v, r in zip(self.values, rewards))
        return self.values


class MediatorPending:
    """Open semi-MDP transition: rewards discount-summed until next selection."""

    __slots__ = ("state", "leader", "reward", "discount")

    def __init__(self, state, leader, agent_count):
        self.state = state
        self.leader = leader
        self.reward = [0.0] * agent_count
        self.discount = 1.0


class MediatorLearner:
    """Multi-objective Q-learning over (environment state, leader) pairs."""

    def __init__(self, agent_count, phi: FairnessMeasure | None = None,
                 alpha=0.1, gamma=0.99, rng=None,
                 use_history=True, use_endgame=True):
        self.agent_count = agent_count
        self.phi = phi if phi is not None else MinWelfare()
        self.alpha = alpha
        self.gamma = gamma
        self.rng = rng
        self.use_history = use_history
        self.use_endgame = use_endgame
        # env state -> list over leaders of N-vectors (truncated values)
        self.qbar = {}
        self.pending = None

    def state_key(self, env_key, s_r):
        """Mediator state: environment observation plus s_r when history is on."""
        if self.use_history:
            return (env_key, s_r)
        return env_key

    def rows(self, key):
        rows = self.qbar.get(key)
        if rows is None:
            n = self.agent_count
            rows = [[0.0] * n for _ in range(n)]
            self.qbar[key] = rows
        return rows

    def full_read(self, key, s_r, leader):
        """Full Q-vector at a mediator state: s_r + truncated value."""
        rows = self.qbar.get(key)
        if rows is None:
            return list(s_r) if self.use_history else [0.0] * self.agent_count
        row = rows[leader]
        if self.use_history:
            return [h + v for h, v in zip(s_r, row)]
        return list(row)

    def greedy_leader(self, key, s_r):
        """Argmax of phi over the full reads, lowest index on ties.

        With the history model on, fairness ties go to the candidate with
        the smaller cumulative reward first: leadership is the reward the
        mediator hands to whoever has earned least so far.
        """
        phi = self.phi
        rows = self.qbar.get(key)
        use_history = self.use_history
        best, best_key = 0, None
        for a in range(self.agent_count):
            if rows is None:
                vec = s_r if use_history else (0.0,) * self.agent_count
            elif use_history:
                vec = [h + v for h, v in zip(s_r, rows[a])]
            else:
                vec = rows[a]
            key_a = (phi(vec), -s_r[a]) if use_history else (phi(vec), 0.0)
            if best_key is None or key_a > best_key:
                best, best_key = a, key_a
        return best

    def select_leader(self, env_key, s_r, epsilon=0.0):
        """Epsilon-greedy leader choice at mediator state (env_key, s_r)."""
        if epsilon > 0.0 and self.rng.random() < epsilon:
            return self.rng.randrange(self.agent_count)
        return self.greedy_leader(self.state_key(env_key, s_r), s_r)

    # -- learning ----------------------------------------------------------

    def begin_transition(self, env_key, s_r, leader):
        self.pending = MediatorPending(self.state_key(env_key, s_r), leader,
                                       self.agent_count)

    def accrue(self, rewards):
        pending = self.pending
        if pending is None:
            return
        d = pending.discount
        acc = pending.reward
        for i, r in enumerate(rewards):
            acc[i] += d * r
        pending.discount = d * self.gamma

    def complete_transition(self, env_key=None, s_r=None):
        """Close the open transition; omit arguments at a terminal state."""
        pending = self.pending
        if pending is None:
            return
        target = pending.reward
        if env_key is not None:
            next_key = self.state_key(env_key, s_r)
            greedy = self.greedy_leader(next_key, s_r)
            next_row = self.rows(next_key)[greedy]
            d = pending.discount
            target = [t + d * v for t, v in zip(target, next_row)]
        row = self.rows(pending.state)[pending.leader]
        alpha = self.alpha
        for i, t in enumerate(target):
            row[i] += alpha * (t - row[i])
        self.pending = None

    def update(self, env_key, s_r, leader, rewards, next_env_key=None,
               next_s_r=None):
        """One-step update form: reward now, bootstrap on the next selection."""
        self.begin_transition(env_key, s_r, leader)
        self.accrue(rewards)
        self.complete_transition(next_env_key, next_s_r)

    def reset_episode(self):
        self.pending = None

    def copy_table(self):
        return {s: [list(r) for r in rows] for s, rows in self.qbar.items()}


def endgame_transfer(phi, reward_vector, achievable_vectors, history=None,
                     r_max=None):
    """Zero-sum terminal transfer; null when the leader acted fairly.

    achievable_vectors lists the instantaneous reward vectors the terminal
    leader could have produced with its available actions. Fairness is
    judged on the episode outcome the leader controls: the historical
    reward vector at the terminal state plus the step vector. If the
    realized outcome already maximizes phi among the achievable ones, the
    transfer is zero. Otherwise each agent is pulled toward the mean
    outcome, component-wise clamped to [-r_max, r_max] with the last
    unclamped coordinate adjusted so the transfer still sums to zero.
    """
    n = len(reward_vector)
    if history is None:
        history = (0.0,) * n
    realized = tuple(h + r for h, r in zip(history, reward_vector))
    if r_max is None:
        r_max = max(realized) - min(realized)
    best = max(
        phi(tuple(h + r for h, r in zip(history, vec)))
        for vec in achievable_vectors
    )
    if phi(realized) >= best - 1e-12:
        return (0.0,) * n
    mean = sum(realized) / n
    theta = []
    clamped = []
    for r in realized:
        t = mean - r
        if t > r_max:
            t, hit = r_max, True
        elif t < -r_max:
            t, hit = -r_max, True
        else:
            hit = False
        theta.append(t)
        clamped.append(hit)
    residual = sum(theta)
    if residual != 0.0:
        for i in range(n - 1, -1, -1):
            if not clamped[i]:
                theta[i] -= residual
                break
    return tuple(theta)


class ThresholdHistorySelector:
    """Two-player rule mediator: lead goes to whoever has earned less so far.

    The first selection of each episode is uniformly random; afterwards
    agent 0 leads iff its cumulative reward is less than or equal to
    agent 1's.
    """

    def __init__(self, agent_count, rng):
        if agent_count != 2:
            raise ConfigurationError("threshold-history mediator is two-player")
        self.rng = rng
        self._first = True

    def reset(self):
        self._first = True

    def select(self, s_r):
        if self._first:
            self._first = False
            return self.rng.randrange(2)
        return 0 if s_r[0] <= s_r[1] else 1


def apply_transfer(game, state, leader, outcome, phi, history=None):
    """Compute the terminal transfer for a realized final step and apply it.

    `state` is the decision state at which the episode-ending action was
    taken and `history` the cumulative welfare vector before that step.
    Returns (theta, rewards + theta, welfare + theta). The transfer is
    computed on the welfare component (resource rewards in the gridworld)
    and added to both reward vectors.
    """
    if not outcome.terminal:
        raise UsageError("end-of-game transfer requested at a non-terminal step")
    achievable = [vec for _, vec in game.leader_reward_vectors(state, leader)]
    theta = endgame_transfer(phi, outcome.welfare, achievable, history=history)
    new_rewards = tuple(r + t for r, t in zip(outcome.rewards, theta))
    new_welfare = tuple(w + t for w, t in zip(outcome.welfare, theta))
    return theta, new_rewards, new_welfare
