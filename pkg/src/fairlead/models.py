"""Explicit tabular models for the full-information solvers.

An ExplicitModel enumerates states and stores the leader-controlled
transition kernel and per-agent reward vectors, one entry per
(state, leader, leader action) triple; follower responses are already
folded into the entries. States may carry a history label (the cumulative
reward vector along the unique path to them), which the mediator solvers
use as s_r. Models built from matrix games enumerate the (step, s_r) tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigurationError
from .mediator import endgame_transfer


@dataclass
class ExplicitModel:
    agent_count: int
    n_actions: tuple            # actions per agent
    states: list                # hashable labels, index order
    terminal: set               # state indices
    initial: list               # (state index, probability)
    transitions: dict = field(default_factory=dict)  # (s,l,a) -> ((s',p),...)
    rewards: dict = field(default_factory=dict)      # (s,l,a) -> reward tuple
    history: dict = field(default_factory=dict)      # s -> s_r tuple

    def __post_init__(self):
        self.index = {label: i for i, label in enumerate(self.states)}

    @property
    def n_states(self):
        return len(self.states)

    def history_of(self, s):
        return self.history.get(s, (0.0,) * self.agent_count)

    def nonterminal(self):
        return [s for s in range(self.n_states) if s not in self.terminal]

    def validate(self, tol=1e-12):
        """Check distribution rows, reward shapes and table completeness."""
        total_init = sum(p for _, p in self.initial)
        if abs(total_init - 1.0) > tol:
            raise ConfigurationError(f"initial distribution sums to {total_init}")
        for s in self.nonterminal():
            for leader in range(self.agent_count):
                for action in range(self.n_actions[leader]):
                    key = (s, leader, action)
                    if key not in self.transitions:
                        raise ConfigurationError(f"missing transition row {key}")
                    row = self.transitions[key]
                    total = sum(p for _, p in row)
                    if abs(total - 1.0) > tol:
                        raise ConfigurationError(
                            f"transition row {key} sums to {total}")
                    if any(not (0 <= t < self.n_states) for t, _ in row):
                        raise ConfigurationError(f"bad target in row {key}")
                    vec = self.rewards.get(key)
                    if vec is None or len(vec) != self.agent_count:
                        raise ConfigurationError(f"bad reward vector at {key}")
        return True

    def is_deterministic(self, tol=1e-12):
        return all(
            len(row) == 1 and abs(row[0][1] - 1.0) <= tol
            for row in self.transitions.values()
        )

    # -- plain-text tabular format -----------------------------------------

    def save_text(self, path):
        with open(path, "w") as fh:
            fh.write("# fairlead explicit model v1\n")
            fh.write(f"agents {self.agent_count}\n")
            fh.write("actions " + " ".join(map(str, self.n_actions)) + "\n")
            for i in range(self.n_states):
                fh.write(f"state {self._token(i)}\n")
            for s, p in self.initial:
                fh.write(f"init {self._token(s)} {p!r}\n")
            for s in sorted(self.terminal):
                fh.write(f"terminal {self._token(s)}\n")
            for s, vec in sorted(self.history.items()):
                fh.write(f"history {self._token(s)} "
                         + " ".join(repr(v) for v in vec) + "\n")
            for (s, l, a), vec in sorted(self.rewards.items()):
                fh.write(f"reward {self._token(s)} {l} {a} "
                         + " ".join(repr(v) for v in vec) + "\n")
            for (s, l, a), row in sorted(self.transitions.items()):
                for t, p in row:
                    fh.write(f"trans {self._token(s)} {l} {a} "
                             f"{self._token(t)} {p!r}\n")

    def _token(self, idx):
        label = self.states[idx]
        if isinstance(label, str) and " " not in label:
            return label
        return f"s{idx}"

    @classmethod
    def load_text(cls, path):
        agent_count = None
        n_actions = None
        states = []
        terminal = set()
        initial = []
        transitions = {}
        rewards = {}
        history = {}
        index = {}
        with open(path) as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                kind = parts[0]
                try:
                    if kind == "agents":
                        agent_count = int(parts[1])
                    elif kind == "actions":
                        n_actions = tuple(int(x) for x in parts[1:])
                    elif kind == "state":
                        index[parts[1]] = len(states)
                        states.append(parts[1])
                    elif kind == "init":
                        initial.append((index[parts[1]], float(parts[2])))
                    elif kind == "terminal":
                        terminal.add(index[parts[1]])
                    elif kind == "history":
                        history[index[parts[1]]] = tuple(
                            float(x) for x in parts[2:])
                    elif kind == "reward":
                        key = (index[parts[1]], int(parts[2]), int(parts[3]))
                        rewards[key] = tuple(float(x) for x in parts[4:])
                    elif kind == "trans":
                        key = (index[parts[1]], int(parts[2]), int(parts[3]))
                        transitions.setdefault(key, []).append(
                            (index[parts[4]], float(parts[5])))
                    else:
                        raise ValueError(f"unknown record {kind!r}")
                except (KeyError, ValueError, IndexError) as exc:
                    raise ConfigurationError(
                        f"{path}: line {line_no}: {exc}") from exc
        if agent_count is None or n_actions is None:
            raise ConfigurationError(f"{path}: missing agents/actions header")
        transitions = {k: tuple(v) for k, v in transitions.items()}
        model = cls(agent_count, n_actions, states, terminal, initial,
                    transitions, rewards, history)
        model.validate()
        return model


def build_matrix_model(game, use_history=True, use_endgame=False, phi=None):
    """Enumerate a matrix game's (step, cumulative reward) decision tree.

    When use_history is false the state is the bare step index, which makes
    the game a chain rather than a tree. The end-of-game stage, when enabled,
    folds the zero-sum transfer into the final step's reward vectors.
    """
    if use_endgame and phi is None:
        raise ConfigurationError("end-game stage needs a fairness measure")
    if use_endgame and not use_history:
        raise ConfigurationError(
            "the end-game stage conditions on cumulative rewards; "
            "build the model with use_history=True")
    n = game.agent_count
    steps = game.steps_per_episode
    zero = (0.0,) * n

    def label(t, s_r):
        return (t, s_r) if use_history else t

    start = label(0, zero)
    states = [start]
    index = {start: 0}
    history = {0: zero}
    terminal = set()
    transitions = {}
    rewards = {}
    frontier = [(0, zero)]
    while frontier:
        t, s_r = frontier.pop()
        s = index[label(t, s_r)]
        if t >= steps:
            terminal.add(s)
            continue
        final = t == steps - 1
        if final and use_endgame:
            achievable = {
                leader: [vec for _, vec in game.leader_reward_vectors(t, leader)]
                for leader in range(n)
            }
        for leader in range(n):
            for action in game.agent_actions(leader):
                joint = game.follower_response(t, leader, action)
                vec = game.rewards(t, leader, joint)
                if final and use_endgame:
                    theta = endgame_transfer(phi, vec, achievable[leader],
                                             history=s_r)
                    vec = tuple(r + th for r, th in zip(vec, theta))
                nxt_sr = tuple(h + r for h, r in zip(s_r, vec))
                nxt_label = label(t + 1, nxt_sr)
                if nxt_label not in index:
                    index[nxt_label] = len(states)
                    states.append(nxt_label)
                    history[index[nxt_label]] = nxt_sr if use_history else zero
                    frontier.append((t + 1, nxt_sr))
                key = (s, leader, action)
                rewards[key] = vec
                transitions[key] = ((index[nxt_label], 1.0),)
    n_actions = tuple(len(game.agent_actions(i)) for i in range(n))
    model = ExplicitModel(n, n_actions, states, terminal, [(0, 1.0)],
                          transitions, rewards,
                          history if use_history else {})
    model.validate()
    return model
