"""Configuration parsing, scheduling, determinism and output artifacts."""

import copy
import json

import numpy as np
import pytest

from fairlead import (ConfigurationError, RunConfig, Trainer, UsageError,
                      evaluate, parse_config, smooth, train)
from fairlead.harness import csv_header, emit_outputs, record_to_csv
from fairlead import tables


def small_config(**kwargs):
    base = dict(env="chicken", selector="jamql", episodes=600,
                eval_every=0, eval_episodes=5)
    base.update(kwargs)
    return RunConfig(**base).validate()


class TestConfig:
    def test_defaults_follow_reported_hyperparameters(self):
        config = RunConfig().validate()
        assert config.episodes == 200000
        assert config.gamma_agents == 0.9
        assert config.gamma_mediator == 0.99
        assert config.epsilon_start == 0.5
        assert config.epsilon_end == 0.01
        assert config.block_episodes == 100
        assert config.buffer_capacity == 100000
        assert config.batch_size == 128
        assert config.learning_rate == 0.0001
        assert config.steps_per_episode == 4
        assert config.seeds == 5

    def test_file_parsing_with_comments(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("env = pd  # the dilemma\nepisodes = 1234\n"
                        "randomize_layout = true\n\n")
        config = parse_config(path, apply_env=False)
        assert config.env == "pd"
        assert config.episodes == 1234
        assert config.randomize_layout is True

    def test_parse_error_reports_line_and_key(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("episodes = soon\n")
        with pytest.raises(ConfigurationError, match="line 1"):
            parse_config(path, apply_env=False)
        path.write_text("episods = 5\n")
        with pytest.raises(ConfigurationError, match="episods"):
            parse_config(path, apply_env=False)

    def test_environment_override(self, tmp_path, monkeypatch):
        path = tmp_path / "run.cfg"
        path.write_text("episodes = 10\n")
        monkeypatch.setenv("FAIRLEAD_EPISODES", "77")
        config = parse_config(path)
        assert config.episodes == 77

    def test_explicit_overrides_win(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FAIRLEAD_EPISODES", "77")
        config = parse_config(None, episodes=5)
        assert config.episodes == 5

    def test_invalid_values_rejected(self):
        with pytest.raises(ConfigurationError):
            RunConfig(selector="dictator").validate()
        with pytest.raises(ConfigurationError):
            RunConfig(gamma_agents=1.5).validate()
        with pytest.raises(ConfigurationError):
            RunConfig(episodes=0).validate()

    def test_config_hash_is_stable(self):
        a = small_config()
        b = small_config()
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != small_config(episodes=601).config_hash()


class TestSchedules:
    def test_sequential_blocks_rotate_single_learner(self):
        config = small_config(episodes=600, block_episodes=100)
        trainer = Trainer(config, seed=0)
        # agents 0, 1 then the mediator, cyclically
        assert trainer.learning_flags(0) == ([True, False], False)
        assert trainer.learning_flags(150) == ([False, True], False)
        assert trainer.learning_flags(250) == ([False, False], True)
        assert trainer.learning_flags(300) == ([True, False], False)

    def test_simultaneous_everyone_learns(self):
        config = small_config(schedule="simultaneous")
        trainer = Trainer(config, seed=0)
        assert trainer.learning_flags(7) == ([True, True], True)

    def test_selector_without_mediator_cycles_agents_only(self):
        config = small_config(selector="alternating")
        trainer = Trainer(config, seed=0)
        assert trainer.learning_flags(250) == ([True, False], False)

    def test_at_most_one_learner_changes_per_block(self):
        config = small_config(episodes=600, selector="jamql")
        snapshots = []

        def hook(trainer, episode, record):
            if (episode + 1) % config.block_episodes == 0:
                snapshots.append(copy.deepcopy(trainer.checkpoint()))

        train(config, seed=3, episode_hook=hook)
        for before, after in zip(snapshots, snapshots[1:]):
            changed = sum(
                before["agents"][i] != after["agents"][i]
                for i in range(2)
            ) + (before.get("mediator") != after.get("mediator"))
            assert changed <= 1


class TestDeterminism:
    def test_identical_runs_produce_identical_csv(self):
        config = small_config(episodes=400, selector="vote")
        rows = []
        for _ in range(2):
            lines = []
            train(config, seed=9,
                  log_sink=lambda rec: lines.append(
                      record_to_csv(rec, 9, config.selector)))
            rows.append("\n".join(lines))
        assert rows[0] == rows[1]

    def test_different_seeds_differ(self):
        config = small_config(episodes=400)
        a = train(config, seed=0).train_min_welfare
        b = train(config, seed=1).train_min_welfare
        assert not np.array_equal(a, b)


class TestOutputs:
    def test_csv_and_manifest_and_plot(self, tmp_path):
        config = small_config(episodes=40, eval_every=20)
        result = train(config, seed=0, keep_logs=True)
        out = emit_outputs({(0, "jamql"): result.records}, tmp_path, config,
                           eval_points=[(0, "jamql", result.eval_points)])
        text = (tmp_path / "episodes.csv").read_text().splitlines()
        assert text[0] == csv_header(2)
        assert len(text) == 41
        # min_welfare column equals the minimum of the ret columns
        for line in text[1:]:
            parts = line.split(",")
            min_welfare = float(parts[3])
            rets = [float(parts[4]), float(parts[5])]
            assert min_welfare == pytest.approx(min(rets))
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["config_hash"] == config.config_hash()
        assert (tmp_path / "welfare.svg").exists()
        assert (tmp_path / "greedy_eval.csv").exists()
        assert out.name == "episodes.csv"

    def test_single_episode_log_gives_two_line_csv(self, tmp_path):
        config = small_config(episodes=1)
        result = train(config, seed=0, keep_logs=True)
        emit_outputs({(0, "jamql"): result.records}, tmp_path, config)
        lines = (tmp_path / "episodes.csv").read_text().splitlines()
        assert len(lines) == 2

    def test_plot_is_deterministic(self, tmp_path):
        config = small_config(episodes=30)
        result = train(config, seed=0, keep_logs=True)
        svgs = []
        for name in ("a", "b"):
            out = tmp_path / name
            emit_outputs({(0, "jamql"): result.records}, out, config)
            svgs.append((out / "welfare.svg").read_bytes())
        assert svgs[0] == svgs[1]

    def test_empty_logs_rejected(self, tmp_path):
        with pytest.raises(UsageError):
            emit_outputs({}, tmp_path, small_config())

    def test_smoothing_window(self):
        series = np.arange(10.0)
        smoothed = smooth(series, window=3)
        assert len(smoothed) == 8
        assert smoothed[0] == pytest.approx(1.0)


class TestEvaluate:
    @staticmethod
    def hand_tables(selector, brake_for=(0, 1)):
        """Checkpoint whose greedy policy is hand-chosen per agent."""
        config = small_config(selector=selector, episodes=10)
        trainer = Trainer(config, seed=0)
        checkpoint = trainer.checkpoint()
        for i in (0, 1):
            action = 2 if i in brake_for else 0
            for t in range(4):
                row = [0.0, 0.0, 0.0]
                row[action] = 1.0
                checkpoint["agents"][i][t] = row
        return config, checkpoint

    def test_optimal_chicken_policy_scores_24(self):
        config, checkpoint = self.hand_tables("fixed", brake_for=(0, 1))
        summary = evaluate(checkpoint, config, episodes=5)
        assert summary.mean_min_welfare == pytest.approx(24.0)
        assert summary.std_min_welfare == pytest.approx(0.0)

    def test_selfish_fixed_leader_scores_8(self):
        config, checkpoint = self.hand_tables("fixed", brake_for=())
        summary = evaluate(checkpoint, config, episodes=5)
        assert summary.mean_min_welfare == pytest.approx(8.0)

    def test_zero_episode_evaluation_rejected(self):
        config, checkpoint = self.hand_tables("fixed")
        with pytest.raises(UsageError):
            evaluate(checkpoint, config, episodes=0)

    def test_incompatible_checkpoint_rejected(self):
        config, checkpoint = self.hand_tables("fixed")
        other = small_config(selector="alternating")
        with pytest.raises(ConfigurationError):
            evaluate(checkpoint, other, episodes=1)


class TestTables:
    def test_round_trip_scalar_and_vector(self, tmp_path):
        scalar = {(0, (1.0, 2.0)): [0.5, -1.25], 3: [7.0]}
        vector = {"s": [[1.0, 2.0], [3.0, 4.0]]}
        tables.save_table(tmp_path / "s.tsv", scalar)
        tables.save_table(tmp_path / "v.tsv", vector)
        assert tables.load_table(tmp_path / "s.tsv") == scalar
        assert tables.load_table(tmp_path / "v.tsv") == vector
