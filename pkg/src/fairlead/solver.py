"""Exact dynamic programming for agents and mediator under known models.

Implements best-response value iteration for an agent's k-step leader MDP
(with follower periods absorbed through an auxiliary linear system), the
mediator's multi-objective value iteration in truncated form, the joint
sequential scheme that alternates full-convergence best responses, an
exhaustive enumeration oracle, and Markov-perfect-equilibrium verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ConvergenceError, DomainError
from .fairness import GiniWelfare, MinWelfare, NashWelfare
from .models import ExplicitModel


def phi_over_rows(phi, arr):
    """Apply a fairness measure along the last axis of an array."""
    if isinstance(phi, MinWelfare):
        return arr.min(axis=-1)
    if isinstance(phi, GiniWelfare):
        return np.sort(arr, axis=-1) @ np.asarray(phi.weights)
    if isinstance(phi, NashWelfare):
        if (arr < 0).any():
            raise DomainError("Nash welfare is undefined for negative returns")
        return arr.prod(axis=-1)
    return np.apply_along_axis(phi, -1, arr)


def _dense_row(model, key, n):
    row = np.zeros(n)
    for t, p in model.transitions[key]:
        row[t] += p
    return row


def _policy_kernel(model, agent_policies, mediator_policy):
    """Transition matrix and reward vectors with every policy fixed."""
    n = model.n_states
    p = np.zeros((n, n))
    r = np.zeros((n, model.agent_count))
    for s in model.nonterminal():
        leader = mediator_policy[s]
        action = agent_policies[leader][s]
        key = (s, leader, action)
        p[s] = _dense_row(model, key, n)
        r[s] = model.rewards[key]
    return p, r


@dataclass
class AgentSolution:
    agent: int
    q: dict                 # (state index, action) -> value
    value: np.ndarray       # per-state value of the agent under its BR
    policy: np.ndarray      # greedy action per state
    residuals: list = field(default_factory=list)


def agent_value_iteration(model: ExplicitModel, agent, mediator_policy,
                          agent_policies, gamma, tol=1e-10, max_iter=100000,
                          phi=None):
    """Best-response Q for one agent's leader policy, others held fixed.

    States where the mediator selects another leader form follower periods;
    their discounted reward and absorption back into the agent's decision
    states are computed exactly by a linear solve, realizing the k-step
    Bellman operator in one step per decision state. When a fairness
    measure is supplied, exact ties in the extracted greedy policy break
    toward the fairer immediate reward vector.
    """
    n = model.n_states
    n_act = model.n_actions[agent]
    lead_states = [s for s in model.nonterminal() if mediator_policy[s] == agent]
    foll_states = [s for s in model.nonterminal() if mediator_policy[s] != agent]
    fpos = {s: i for i, s in enumerate(foll_states)}
    lpos = {s: i for i, s in enumerate(lead_states)}

    nf, nl = len(foll_states), len(lead_states)
    p_ff = np.zeros((nf, nf))
    p_fl = np.zeros((nf, nl))
    r_f = np.zeros(nf)
    for u in foll_states:
        leader = mediator_policy[u]
        key = (u, leader, agent_policies[leader][u])
        r_f[fpos[u]] = model.rewards[key][agent]
        for t, p in model.transitions[key]:
            if t in fpos:
                p_ff[fpos[u], fpos[t]] += p
            elif t in lpos:
                p_fl[fpos[u], lpos[t]] += p
    if nf:
        a = np.eye(nf) - gamma * p_ff
        absorbed = np.linalg.solve(a, np.hstack([r_f[:, None], gamma * p_fl]))
        chain_reward = absorbed[:, 0]
        chain_absorb = absorbed[:, 1:]
    else:
        chain_reward = np.zeros(0)
        chain_absorb = np.zeros((0, nl))

    # dense rows for the agent's own decisions at its decision states
    r_la = np.zeros((nl, n_act))
    p_la = np.zeros((nl * n_act, n))
    for s in lead_states:
        for act in range(n_act):
            key = (s, agent, act)
            r_la[lpos[s], act] = model.rewards[key][agent]
            p_la[lpos[s] * n_act + act] = _dense_row(model, key, n)

    q = np.zeros((nl, n_act))
    residuals = []
    for _ in range(max_iter):
        best = q.max(axis=1) if nl else np.zeros(0)
        z = np.zeros(n)
        for s in lead_states:
            z[s] = best[lpos[s]]
        if nf:
            zf = chain_reward + chain_absorb @ best
            for u in foll_states:
                z[u] = zf[fpos[u]]
        q_new = r_la + gamma * (p_la @ z).reshape(nl, n_act)
        residual = float(np.max(np.abs(q_new - q))) if nl else 0.0
        residuals.append(residual)
        q = q_new
        if residual < tol:
            break
    else:
        raise ConvergenceError(
            f"agent value iteration residual {residual:.3e} after {max_iter} sweeps",
            residual=residual)

    # extend Q to every non-terminal state (counterfactual leadership reads)
    best = q.max(axis=1) if nl else np.zeros(0)
    z = np.zeros(n)
    for s in lead_states:
        z[s] = best[lpos[s]]
    if nf:
        zf = chain_reward + chain_absorb @ best
        for u in foll_states:
            z[u] = zf[fpos[u]]
    q_all = {}
    policy = np.zeros(n, dtype=int)
    value = np.zeros(n)
    for s in model.nonterminal():
        vals = np.empty(n_act)
        for act in range(n_act):
            key = (s, agent, act)
            vals[act] = model.rewards[key][agent] + gamma * (
                _dense_row(model, key, n) @ z)
            q_all[(s, act)] = float(vals[act])
        policy[s] = _fair_argmax(model, phi, s, agent, vals)
        value[s] = z[s] if s in lpos or s in fpos else 0.0
    return AgentSolution(agent, q_all, value, policy, residuals)


def _fair_argmax(model, phi, s, agent, values, tol=1e-9):
    """Greedy action; exact-value ties prefer the fairer reward vector.

    Realizes the unique-action disambiguation behind the sequential scheme's
    convergence argument: an indifferent agent plays the action whose
    immediate outcome scores best under the fairness measure, then the
    lowest index.
    """
    best = values.max()
    tied = np.flatnonzero(values >= best - tol)
    if len(tied) == 1 or phi is None:
        return int(tied[0])
    return int(max(tied, key=lambda a: (phi(model.rewards[(s, agent, a)]), -a)))


def evaluate_agent_policy(model, agent, agent_policies, mediator_policy, gamma):
    """Per-state value of `agent` with every policy fixed (no deviation)."""
    n = model.n_states
    p, r = _policy_kernel(model, agent_policies, mediator_policy)
    live = model.nonterminal()
    idx = {s: i for i, s in enumerate(live)}
    a = np.eye(len(live)) - gamma * p[np.ix_(live, live)]
    v_live = np.linalg.solve(a, r[live, agent])
    value = np.zeros(n)
    for s in live:
        value[s] = v_live[idx[s]]
    return value


@dataclass
class MediatorSolution:
    qbar: np.ndarray        # (n_states, n_leaders, n_agents) truncated values
    policy: np.ndarray      # greedy leader per state
    values: np.ndarray      # phi of the full read under the greedy leader
    residuals: list = field(default_factory=list)

    def initial_value(self, model):
        return float(sum(p * self.values[s] for s, p in model.initial))


def _mediator_tables(model, agent_policies):
    """Reward vectors and dense rows for each (state, candidate leader)."""
    n = model.n_states
    n_agents = model.agent_count
    r = np.zeros((n, n_agents, n_agents))
    p = np.zeros((n * n_agents, n))
    for s in model.nonterminal():
        for leader in range(n_agents):
            key = (s, leader, agent_policies[leader][s])
            r[s, leader] = model.rewards[key]
            p[s * n_agents + leader] = _dense_row(model, key, n)
    return r, p


def _history_matrix(model):
    h = np.zeros((model.n_states, model.agent_count))
    for s in range(model.n_states):
        h[s] = model.history_of(s)
    return h


def _greedy_selection(model, scores, hist):
    """Phi-greedy leader per state; ties go to the historically-behind agent.

    Handing fairness-equivalent leadership to whoever has earned least is
    the history stage's incentive; remaining ties break to the lowest index.
    """
    n, n_agents = scores.shape
    greedy = np.zeros(n, dtype=int)
    for s in model.nonterminal():
        row = scores[s]
        best = row.max()
        tied = np.flatnonzero(row >= best - 1e-12)
        if len(tied) == 1:
            greedy[s] = tied[0]
        else:
            greedy[s] = min(tied, key=lambda a: (hist[s][a], a))
    return greedy


def _greedy_bootstrap(model, phi, qbar, hist, successor_rule=None):
    """Per-state bootstrap vector Q̄(s, a*) with a* phi-greedy on the full read."""
    n, n_agents, _ = qbar.shape
    boot = np.zeros((n, n_agents))
    if successor_rule is not None:
        for s in model.nonterminal():
            boot[s] = qbar[s, successor_rule[s]]
        return boot
    scores = phi_over_rows(phi, hist[:, None, :] + qbar)
    greedy = _greedy_selection(model, scores, hist)
    for s in model.nonterminal():
        boot[s] = qbar[s, greedy[s]]
    return boot


def truncated_mediator_operator(model, agent_policies, phi, gamma,
                                successor_rule=None):
    """The mediator's truncated Bellman operator as a reusable function.

    With successor_rule (a fixed leader per state) the phi-greedy choice at
    successor states is pinned, which makes the operator a plain gamma
    contraction in the sup norm.
    """
    r, p = _mediator_tables(model, agent_policies)
    hist = _history_matrix(model)
    n, n_agents = model.n_states, model.agent_count
    live = np.array(model.nonterminal(), dtype=int)

    def apply(qbar):
        boot = _greedy_bootstrap(model, phi, qbar, hist, successor_rule)
        out = np.zeros_like(qbar)
        prod = (p @ boot).reshape(n, n_agents, n_agents)
        out[live] = r[live] + gamma * prod[live]
        return out

    return apply


def mediator_value_iteration(model, agent_policies, phi, gamma,
                             tol=1e-10, max_iter=100000):
    """Fixed point of the truncated mediator operator with phi-greedy reads."""
    operator = truncated_mediator_operator(model, agent_policies, phi, gamma)
    hist = _history_matrix(model)
    qbar = np.zeros((model.n_states, model.agent_count, model.agent_count))
    residuals = []
    for _ in range(max_iter):
        q_new = operator(qbar)
        residual = float(np.max(np.abs(q_new - qbar)))
        residuals.append(residual)
        qbar = q_new
        if residual < tol:
            break
    else:
        raise ConvergenceError(
            f"mediator value iteration residual {residual:.3e}", residual=residual)
    scores = phi_over_rows(phi, hist[:, None, :] + qbar)
    policy = _greedy_selection(model, scores, hist)
    values = scores[np.arange(model.n_states), policy]
    for s in model.terminal:
        values[s] = 0.0
        policy[s] = 0
    return MediatorSolution(qbar, policy, values, residuals)


def full_state_mediator_vi(model, agent_policies, phi, gamma,
                           tol=1e-10, max_iter=100000):
    """Value iteration on full mediator reads over (state, history) pairs.

    Maintains the full Q directly (history included) while bootstrapping on
    the truncated portion of the successor read; used to cross-check the
    truncated fixed point through the additive identity.
    """
    r, p = _mediator_tables(model, agent_policies)
    hist = _history_matrix(model)
    n, n_agents = model.n_states, model.agent_count
    live = np.array(model.nonterminal(), dtype=int)
    q = np.zeros((n, n_agents, n_agents))
    for _ in range(max_iter):
        scores = phi_over_rows(phi, q)
        greedy = _greedy_selection(model, scores, hist)
        boot = np.zeros((n, n_agents))
        for s in model.nonterminal():
            boot[s] = q[s, greedy[s]] - hist[s]
        prod = (p @ boot).reshape(n, n_agents, n_agents)
        q_new = np.zeros_like(q)
        q_new[live] = r[live] + hist[live, None, :] + gamma * prod[live]
        residual = float(np.max(np.abs(q_new - q)))
        q = q_new
        if residual < tol:
            return q
    raise ConvergenceError(
        f"full-state mediator VI residual {residual:.3e}", residual=residual)


def evaluate_mediator_policy(model, agent_policies, mediator_policy, phi, gamma):
    """Vector returns and phi-values of a fixed mediator policy.

    Returns (per-state reward-to-go vectors, per-state phi of the full read,
    initial-distribution scalar value).
    """
    n = model.n_states
    p, r = _policy_kernel(model, agent_policies, mediator_policy)
    hist = _history_matrix(model)
    live = model.nonterminal()
    idx = {s: i for i, s in enumerate(live)}
    a = np.eye(len(live)) - gamma * p[np.ix_(live, live)]
    w_live = np.linalg.solve(a, r[live])
    w = np.zeros((n, model.agent_count))
    for s in live:
        w[s] = w_live[idx[s]]
    values = phi_over_rows(phi, hist + w)
    for s in model.terminal:
        values[s] = 0.0
    initial = float(sum(pr * values[s] for s, pr in model.initial))
    return w, values, initial


@dataclass
class JamViResult:
    agent_policies: list
    mediator_policy: np.ndarray
    trace: list                  # (turn label, initial-state mediator value)
    rounds_run: int
    converged: bool
    final_value: float
    mediator_solution: MediatorSolution


def sequential_jamvi(model, phi, gamma_agents=1.0, gamma_mediator=1.0,
                     rounds=20, tol=1e-10):
    """Turn-by-turn best responses: each agent in index order, then the mediator.

    Every turn runs its learner's value iteration to convergence. After each
    agent's turn the mediator's current policy is re-evaluated under the
    updated joint policy and the resulting initial-state value appended to
    the trace; the mediator's own turn appends its re-optimized value.
    """
    n = model.n_states
    agent_policies = [np.zeros(n, dtype=int) for _ in range(model.agent_count)]
    med = mediator_value_iteration(model, agent_policies, phi, gamma_mediator,
                                   tol=tol)
    mediator_policy = med.policy
    trace = [("mediator", med.initial_value(model))]
    rounds_run = 0
    converged = False
    for _ in range(rounds):
        rounds_run += 1
        changed = False
        for i in range(model.agent_count):
            sol = agent_value_iteration(model, i, mediator_policy,
                                        agent_policies, gamma_agents, tol=tol,
                                        phi=phi)
            if not np.array_equal(sol.policy, agent_policies[i]):
                changed = True
            agent_policies[i] = sol.policy
            _, _, value = evaluate_mediator_policy(
                model, agent_policies, mediator_policy, phi, gamma_mediator)
            trace.append((f"agent {i}", value))
        med = mediator_value_iteration(model, agent_policies, phi,
                                       gamma_mediator, tol=tol)
        if not np.array_equal(med.policy, mediator_policy):
            changed = True
        mediator_policy = med.policy
        trace.append(("mediator", med.initial_value(model)))
        if not changed:
            converged = True
            break
    _, _, final_value = evaluate_mediator_policy(
        model, agent_policies, mediator_policy, phi, gamma_mediator)
    return JamViResult(agent_policies, mediator_policy, trace, rounds_run,
                       converged, final_value, med)


@dataclass
class OracleResult:
    value: float
    leaders: tuple
    actions: tuple
    returns: tuple


def enumeration_oracle(model, phi, horizon=None, guard=10_000_000, gamma=1.0):
    """Exhaustive search over leader sequences and leader actions.

    Requires deterministic transitions and a single initial state; walks the
    full decision tree and returns the best achievable fairness value with a
    witnessing (leader, action) sequence. Refuses when the estimated leaf
    count exceeds the guard.
    """
    if not model.is_deterministic():
        raise ConfigurationError(
            "enumeration oracle requires deterministic transitions")
    if len(model.initial) != 1:
        raise ConfigurationError(
            "enumeration oracle requires a single initial state")
    depth = horizon if horizon is not None else _model_depth(model)
    branching = sum(model.n_actions)
    estimate = branching ** depth
    if estimate > guard:
        raise ConfigurationError(
            f"enumeration would visit about {estimate:.3e} leaves "
            f"(guard {guard:.1e})")

    start = model.initial[0][0]
    n_agents = model.agent_count
    best = {"value": None, "leaders": (), "actions": (), "returns": ()}

    def consider(acc, leaders, actions):
        value = phi(acc)
        if best["value"] is None or value > best["value"]:
            best.update(value=value, leaders=tuple(leaders),
                        actions=tuple(actions), returns=tuple(acc))

    def walk(s, depth_left, acc, disc, leaders, actions):
        if s in model.terminal or depth_left == 0:
            consider(acc, leaders, actions)
            return
        for leader in range(n_agents):
            for action in range(model.n_actions[leader]):
                key = (s, leader, action)
                r = model.rewards[key]
                nxt = model.transitions[key][0][0]
                leaders.append(leader)
                actions.append(action)
                walk(nxt, depth_left - 1,
                     tuple(a + disc * x for a, x in zip(acc, r)),
                     disc * gamma, leaders, actions)
                leaders.pop()
                actions.pop()

    walk(start, depth, (0.0,) * n_agents, 1.0, [], [])
    return OracleResult(best["value"], best["leaders"], best["actions"],
                        best["returns"])


def _model_depth(model):
    """Longest path to a terminal state; raises on cycles."""
    memo = {}
    visiting = set()

    def depth(s):
        if s in model.terminal:
            return 0
        if s in memo:
            return memo[s]
        if s in visiting:
            raise ConfigurationError(
                "model has cycles; pass an explicit horizon")
        visiting.add(s)
        d = 0
        for leader in range(model.agent_count):
            for action in range(model.n_actions[leader]):
                for t, _ in model.transitions[(s, leader, action)]:
                    d = max(d, 1 + depth(t))
        visiting.discard(s)
        memo[s] = d
        return d

    return max(depth(s) for s, _ in model.initial)


def verify_mpe(model, agent_policies, mediator_policy, gamma, tol=1e-8):
    """Check that no agent gains from a unilateral leader-policy deviation.

    Returns (is_mpe, worst gap, per-agent gaps); the gap is the largest
    improvement any best response achieves over the equilibrium value at
    any state.
    """
    gaps = []
    for agent in range(model.agent_count):
        best = agent_value_iteration(model, agent, mediator_policy,
                                     agent_policies, gamma)
        eq = evaluate_agent_policy(model, agent, agent_policies,
                                   mediator_policy, gamma)
        gap = max(
            (best.value[s] - eq[s] for s in model.nonterminal()),
            default=0.0,
        )
        gaps.append(float(gap))
    worst = max(gaps, default=0.0)
    return worst <= tol, worst, gaps
