"""Experiment orchestration: seeded training runs, evaluation and outputs.

A run couples one environment instance with per-agent leader learners and a
selection scheme. Sequential scheduling freezes all learners except one per
block of episodes (agents in index order, then the learned mediator, then
around again); simultaneous scheduling lets everyone update each episode.
All stochastic draws in a run flow through one seeded generator, so a
(config, seed) pair reproduces every emitted byte except wall-clock fields.
"""

from __future__ import annotations

import dataclasses
import json
import random
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import (AlternatingSelector, FixedSelector, VoteBasedSelector,
                        make_ablation)
from .config import RunConfig
from .errors import ConfigurationError, UsageError
from .fairness import evaluate_fairness, make_measure, MinWelfare
from .gridworld import ResourceCollection
from .matrix import make_matrix_game
from .mediator import MediatorLearner, ThresholdHistorySelector, apply_transfer
from .qlearning import AgentLearner, EpsilonSchedule
from . import tables

CSV_FLOAT = "%.10g"


@dataclass
class EpisodeRecord:
    episode: int
    returns: tuple          # full per-agent rewards (auxiliary included)
    welfare: tuple          # welfare returns (resource-only in gridworld)
    min_welfare: float
    leaders: tuple
    actions: tuple          # the leader's action at each step
    transfer: tuple | None


@dataclass
class EvalSummary:
    episodes: int
    mean_min_welfare: float
    std_min_welfare: float
    mean_returns: tuple
    mean_welfare: tuple


@dataclass
class RunResult:
    config: RunConfig
    seed: int
    train_min_welfare: np.ndarray
    eval_points: list
    final_eval: EvalSummary
    checkpoint: dict
    records: list = field(default_factory=list)
    wall_clock: float = 0.0


def build_game(config: RunConfig):
    if config.env in ("pd", "chicken", "bos"):
        return make_matrix_game(
            config.env, config.agents, config.steps_per_episode,
            discount_agents=config.gamma_agents,
            discount_mediator=config.gamma_mediator)
    if config.env in ("rc1", "rc2"):
        return ResourceCollection(
            variant=config.env, agent_count=config.agents,
            width=config.grid_width, height=config.grid_height,
            step_limit=config.step_limit, max_collected=config.max_collected,
            aux_reward=config.aux_reward, aux_radius=config.aux_radius,
            randomize_layout=config.randomize_layout,
            discount_agents=config.gamma_agents,
            discount_mediator=config.gamma_mediator)
    raise ConfigurationError(f"unknown env {config.env!r}")


class Trainer:
    """One seeded run: environment, learners, selector and schedules."""

    def __init__(self, config: RunConfig, seed: int, endgame=None):
        self.config = config
        self.seed = seed
        self.rng = random.Random(seed)
        self.game = build_game(config)
        self.n = self.game.agent_count
        self.phi = make_measure(config.phi, self.n)
        self.agents = [
            AgentLearner(i, len(self.game.agent_actions(i)),
                         alpha=config.alpha, gamma=config.gamma_agents,
                         rng=self.rng)
            for i in range(self.n)
        ]
        self.mediator = None
        self.selector = None
        self.endgame = False
        sel = config.selector
        if sel == "fixed":
            self.selector = FixedSelector(config.fixed_agent)
        elif sel == "alternating":
            self.selector = AlternatingSelector(self.n)
        elif sel == "vote":
            self.selector = VoteBasedSelector(
                self.n, alpha=config.alpha, gamma=config.gamma_agents,
                rng=self.rng)
        elif sel == "threshold":
            self.selector = ThresholdHistorySelector(self.n, self.rng)
        elif sel.startswith("jamql"):
            variant = {"jamql": "full", "jamql-naive": "naive",
                       "jamql-prefinal": "pre-final"}[sel]
            use_history, use_endgame = make_ablation(variant)
            self.mediator = MediatorLearner(
                self.n, phi=self.phi, alpha=config.alpha,
                gamma=config.gamma_mediator, rng=self.rng,
                use_history=use_history, use_endgame=use_endgame)
            self.endgame = use_endgame
        else:
            raise ConfigurationError(f"unknown selector {sel!r}")
        if endgame is not None:
            self.endgame = endgame
        # sequential learner slots: agents in index order, then the mediator
        self.slots = list(range(self.n))
        if self.mediator is not None:
            self.slots.append("mediator")
        self.schedule = EpsilonSchedule(config.epsilon_start,
                                        config.epsilon_end, config.episodes)

    # -- single episode ------------------------------------------------------

    def play_episode(self, episode, agent_learning, mediator_learning,
                     epsilon):
        """Roll one episode; returns an EpisodeRecord.

        agent_learning[i] marks agents that update this episode (their
        voting learners update with them); mediator_learning covers the
        learned mediator. With everything off this is a greedy evaluation
        rollout that touches no tables.
        """
        game, rng, n = self.game, self.rng, self.n
        mediator, selector = self.mediator, self.selector
        vote = isinstance(selector, VoteBasedSelector)
        state = game.initial_state(rng)
        s_r = (0.0,) * n
        for agent in self.agents:
            agent.reset_episode()
        if mediator is not None:
            mediator.reset_episode()
        elif selector is not None:
            selector.reset()

        returns = [0.0] * n
        welfare_total = [0.0] * n
        leaders = []
        actions = []
        transfer = None
        leader = None
        selection_due = True
        any_agent_learning = any(agent_learning)

        while True:
            if selection_due:
                if mediator is not None:
                    env_key = game.mediator_obs(state)
                    if mediator_learning:
                        mediator.complete_transition(env_key, s_r)
                        leader = mediator.select_leader(env_key, s_r, epsilon)
                        mediator.begin_transition(env_key, s_r, leader)
                    else:
                        leader = mediator.select_leader(env_key, s_r, 0.0)
                elif vote:
                    voter_states = [game.agent_obs(state, i, -1)
                                    for i in range(n)]
                    epsilons = [epsilon if agent_learning[i] else 0.0
                                for i in range(n)]
                    leader, _ = selector.select(voter_states, epsilons,
                                                agent_learning)
                elif isinstance(selector, ThresholdHistorySelector):
                    leader = selector.select(s_r)
                else:
                    leader = selector.select()
                leaders.append(leader)

            obs = game.agent_obs(state, leader, leader)
            agent = self.agents[leader]
            if agent_learning[leader]:
                action = agent.on_leader_selected(obs, epsilon)
            else:
                action = agent.greedy_action(obs)
            actions.append(action)

            outcome = game.step(state, leader, action, rng)
            rewards = outcome.rewards
            welfare = outcome.welfare
            if outcome.terminal and self.endgame:
                theta, rewards, welfare = apply_transfer(
                    game, state, leader, outcome, self.phi, history=s_r)
                if any(theta):
                    transfer = theta

            if any_agent_learning:
                for i in range(n):
                    if agent_learning[i]:
                        self.agents[i].accrue_follower_reward(rewards[i])
                if vote:
                    for i in range(n):
                        if agent_learning[i]:
                            selector.voters[i].accrue(rewards[i])
            if mediator is not None and mediator_learning:
                mediator.accrue(welfare)

            for i in range(n):
                returns[i] += rewards[i]
                welfare_total[i] += welfare[i]
            s_r = tuple(h + w for h, w in zip(s_r, welfare))
            state = outcome.state
            selection_due = outcome.selection_due
            if outcome.terminal:
                break

        if any_agent_learning:
            for i in range(n):
                if agent_learning[i]:
                    self.agents[i].flush_pending(None)
                    if vote:
                        selector.voters[i].flush(None)
        if mediator is not None and mediator_learning:
            mediator.complete_transition(None)

        welfare_total = tuple(welfare_total)
        return EpisodeRecord(
            episode=episode,
            returns=tuple(returns),
            welfare=welfare_total,
            min_welfare=min(welfare_total),
            leaders=tuple(leaders),
            actions=tuple(actions),
            transfer=transfer,
        )

    def learning_flags(self, episode):
        """Which learners update during this episode under the schedule."""
        if self.config.schedule == "simultaneous":
            return [True] * self.n, self.mediator is not None
        block = episode // self.config.block_episodes
        active = self.slots[block % len(self.slots)]
        agent_learning = [active == i for i in range(self.n)]
        return agent_learning, active == "mediator"

    def evaluate(self, episodes):
        """Greedy rollouts with learning disabled everywhere."""
        if episodes < 1:
            raise UsageError("evaluation needs at least one episode")
        off = [False] * self.n
        mins = np.empty(episodes)
        rets = np.empty((episodes, self.n))
        welf = np.empty((episodes, self.n))
        for e in range(episodes):
            rec = self.play_episode(-1, off, False, 0.0)
            mins[e] = rec.min_welfare
            rets[e] = rec.returns
            welf[e] = rec.welfare
        return EvalSummary(
            episodes=episodes,
            mean_min_welfare=float(mins.mean()),
            std_min_welfare=float(mins.std()),
            mean_returns=tuple(rets.mean(axis=0)),
            mean_welfare=tuple(welf.mean(axis=0)),
        )

    def checkpoint(self):
        out = {
            "meta": {
                "selector": self.config.selector,
                "env": self.config.env,
                "agents": self.n,
                "config_hash": self.config.config_hash(),
                "version": 1,
            },
            "agents": [agent.copy_table() for agent in self.agents],
        }
        if self.mediator is not None:
            out["mediator"] = self.mediator.copy_table()
        if isinstance(self.selector, VoteBasedSelector):
            out["voters"] = [v.copy_table() for v in self.selector.voters]
        return out

    def load_checkpoint(self, checkpoint):
        meta = checkpoint.get("meta", {})
        if meta.get("selector") != self.config.selector \
                or meta.get("env") != self.config.env \
                or meta.get("agents") != self.n:
            raise ConfigurationError(
                f"checkpoint {meta} is incompatible with this configuration")
        for agent, table in zip(self.agents, checkpoint["agents"]):
            agent.q = {s: list(row) for s, row in table.items()}
        if self.mediator is not None:
            self.mediator.qbar = {
                s: [list(r) for r in rows]
                for s, rows in checkpoint["mediator"].items()}
        if isinstance(self.selector, VoteBasedSelector):
            for voter, table in zip(self.selector.voters,
                                    checkpoint["voters"]):
                voter.q = {s: list(row) for s, row in table.items()}


def train(config: RunConfig, seed: int, keep_logs=False, log_sink=None,
          episode_hook=None, endgame=None):
    """Run one seeded training run and return its artifacts."""
    started = time.perf_counter()
    trainer = Trainer(config, seed, endgame=endgame)
    episodes = config.episodes
    train_min = np.empty(episodes)
    eval_points = []
    records = [] if keep_logs else None
    for episode in range(episodes):
        agent_learning, mediator_learning = trainer.learning_flags(episode)
        epsilon = trainer.schedule.value(episode)
        record = trainer.play_episode(episode, agent_learning,
                                      mediator_learning, epsilon)
        train_min[episode] = record.min_welfare
        if keep_logs:
            records.append(record)
        if log_sink is not None:
            log_sink(record)
        if episode_hook is not None:
            episode_hook(trainer, episode, record)
        if config.eval_every and (episode + 1) % config.eval_every == 0:
            summary = trainer.evaluate(config.eval_episodes)
            eval_points.append((episode + 1, summary.mean_min_welfare,
                                summary.mean_returns))
    final_eval = trainer.evaluate(config.eval_episodes)
    return RunResult(
        config=config,
        seed=seed,
        train_min_welfare=train_min,
        eval_points=eval_points,
        final_eval=final_eval,
        checkpoint=trainer.checkpoint(),
        records=records or [],
        wall_clock=time.perf_counter() - started,
    )


def evaluate(checkpoint, config: RunConfig, episodes: int, seed=0):
    """Greedy evaluation of a stored checkpoint under a configuration."""
    if episodes is None or episodes < 1:
        raise UsageError("evaluation needs a positive episode count")
    trainer = Trainer(config, seed)
    trainer.load_checkpoint(checkpoint)
    return trainer.evaluate(episodes)


# -- outputs ----------------------------------------------------------------

CSV_BASE_FIELDS = ("episode", "seed", "selector", "min_welfare")


def csv_header(agent_count):
    rets = [f"ret_{i + 1}" for i in range(agent_count)]
    return ",".join([*CSV_BASE_FIELDS[:4], *rets, "leaders", "transfers"])


def record_to_csv(record: EpisodeRecord, seed, selector):
    floats = [CSV_FLOAT % record.min_welfare]
    floats += [CSV_FLOAT % w for w in record.welfare]
    leaders = ";".join(str(l) for l in record.leaders)
    transfer = ""
    if record.transfer is not None:
        transfer = ";".join(CSV_FLOAT % t for t in record.transfer)
    return ",".join([str(record.episode), str(seed), selector,
                     *floats, leaders, transfer])


def write_csv(path, records_by_seed, config: RunConfig):
    with open(path, "w") as fh:
        fh.write(csv_header(config.agents) + "\n")
        for seed, records in records_by_seed:
            for record in records:
                fh.write(record_to_csv(record, seed, config.selector) + "\n")


def write_manifest(path, config: RunConfig, seeds, wall_clock):
    manifest = {
        "config": {k: v for k, v in config.canonical_items()},
        "config_hash": config.config_hash(),
        "seeds": list(seeds),
        "versions": {
            "fairlead": "0.1.0",
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
        "wall_clock_seconds": wall_clock,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def smooth(series, window=1000):
    series = np.asarray(series, dtype=float)
    if len(series) == 0:
        return series
    window = max(1, min(window, len(series)))
    kernel = np.ones(window) / window
    return np.convolve(series, kernel, mode="valid")


def write_plot(path, series_by_selector, episodes, config: RunConfig,
               window=1000):
    import matplotlib
    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": config.config_hash()}):
        fig, ax = plt.subplots(figsize=(7, 4))
        for selector, series in series_by_selector.items():
            smoothed = smooth(series, window)
            offset = len(series) - len(smoothed)
            x = np.arange(len(smoothed)) + offset
            ax.plot(x, smoothed, label=selector)
        ax.set_xlim(0, episodes)
        ax.set_xlabel("episode")
        ax.set_ylabel(f"min welfare (window {window})")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def emit_outputs(logs, out_dir, config: RunConfig, wall_clock=0.0,
                 eval_points=None, window=1000):
    """Write the CSV, manifest and SVG for a collection of episode logs.

    `logs` maps (seed, selector) to a list of EpisodeRecords; they land in
    one CSV ordered by seed, a JSON manifest and one smoothed min-welfare
    line per selector in the SVG.
    """
    import pathlib

    if not logs:
        raise UsageError("emit_outputs needs at least one episode log")
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "episodes.csv"
    with open(csv_path, "w") as fh:
        fh.write(csv_header(config.agents) + "\n")
        for (seed, selector), records in sorted(
                logs.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            for record in records:
                fh.write(record_to_csv(record, seed, selector) + "\n")
    write_manifest(out / "manifest.json", config,
                   sorted({seed for seed, _ in logs}), wall_clock)
    per_selector = {}
    for (seed, selector), records in sorted(
            logs.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        per_selector.setdefault(selector, []).append(
            np.array([r.min_welfare for r in records]))
    series_by_selector = {}
    for selector, seed_series in per_selector.items():
        length = min(len(s) for s in seed_series)
        stacked = np.vstack([s[:length] for s in seed_series])
        series_by_selector[selector] = stacked.mean(axis=0)
    episodes = max(len(r) for r in series_by_selector.values())
    write_plot(out / "welfare.svg", series_by_selector, episodes, config,
               window)
    if eval_points:
        with open(out / "greedy_eval.csv", "w") as fh:
            fh.write("episode,seed,selector,mean_min_welfare\n")
            for seed, selector, points in eval_points:
                for episode, mean_min, _ in points:
                    fh.write(f"{episode},{seed},{selector},"
                             + (CSV_FLOAT % mean_min) + "\n")
    return csv_path


def reproduce_endgame_experiment(config: RunConfig, seed=0, tail=1000):
    """Train with the threshold-history mediator with and without the
    end-of-game stage; report agent 0's per-step leader action frequencies
    over the final `tail` episodes of each run.
    """
    if config.episodes < 1:
        raise UsageError("endgame experiment needs a positive episode count")
    freqs = {}
    for use_endgame in (False, True):
        run_config = config.replace(selector="threshold",
                                    schedule="simultaneous")
        result = train(run_config, seed, keep_logs=True, endgame=use_endgame)
        counts = np.zeros((config.steps_per_episode,
                           len(build_game(config).agent_actions(0))))
        for record in result.records[-tail:]:
            for step, (leader, action) in enumerate(
                    zip(record.leaders, record.actions)):
                if leader == 0:
                    counts[step, action] += 1
        totals = counts.sum(axis=1, keepdims=True)
        totals[totals == 0] = 1.0
        freqs[use_endgame] = counts / totals
    return freqs
