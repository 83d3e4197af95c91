"""Mediated Stackelberg games with dynamic leaders.

Self-interested Q-learning agents take turns leading a leader-controller
Markov game; a fairness-maximizing mediator (or one of several baseline
rules) decides who leads when. Includes exact full-information solvers,
an enumeration oracle, a small from-scratch DQN stack, and an experiment
harness with seeded, reproducible runs.
"""

from .baselines import (AlternatingSelector, FixedSelector, VoteBasedSelector,
                        VotingLearner, make_ablation, tally_votes)
from .config import RunConfig, parse_config
from .errors import (ConfigurationError, ConvergenceError, DomainError,
                     FairleadError, UsageError)
from .fairness import (FairnessMeasure, GiniWelfare, MinWelfare, NashWelfare,
                       evaluate_fairness, make_measure)
from .games import Game, StepOutcome, episode_return, joint_step
from .gridworld import ResourceCollection
from .harness import (EpisodeRecord, EvalSummary, RunResult, Trainer,
                      build_game, emit_outputs, evaluate,
                      reproduce_endgame_experiment, smooth, train)
from .matrix import BattleOfSexes, MatrixGame, make_matrix_game
from .mediator import (HistoryAccumulator, MediatorLearner,
                       ThresholdHistorySelector, apply_transfer,
                       endgame_transfer)
from .models import ExplicitModel, build_matrix_model
from .nn import AdamState, DQNLearner, FeedforwardNet, ReplayBuffer, Transition
from .qlearning import AgentLearner, EpsilonSchedule
from .solver import (agent_value_iteration, enumeration_oracle,
                     evaluate_agent_policy, evaluate_mediator_policy,
                     full_state_mediator_vi, mediator_value_iteration,
                     sequential_jamvi, truncated_mediator_operator,
                     verify_mpe)

__version__ = "0.1.0"
