"""REINFORCE on the budgeted objective J for the linear softmax meta-controller."""

from dataclasses import dataclass, field
import logging

import numpy as np

from api.agent.controller import PolicyParams, kind_probabilities
from api.config.experiment import ExperimentConfig
from api.errors import NonFiniteGradientError
from api.harness.episode import run_episode
from api.sim.rng import make_stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpisodeSample:
    """Decisions of one episode (objects with features, mask, kind) and its realised J."""

    decisions: list
    J: float
    episode_id: int = 0


def log_policy_gradient(p: PolicyParams, features: np.ndarray, mask: np.ndarray, kind: int) -> np.ndarray:
    """d log pi(kind | features) / d weights."""
    probs = kind_probabilities(p, features, mask)
    onehot = np.zeros_like(probs)
    onehot[kind] = 1.0
    return np.outer(onehot - probs, features) / p.temperature


def score_function_gradient(
    p: PolicyParams,
    episodes: list[EpisodeSample],
    baseline: float | None = None,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """sum_i w_i (J_i - baseline) sum_d grad log pi(d).

    Defaults to equal weights 1/n and the mean-J baseline. Passing exact
    trajectory probabilities as ``weights`` with ``baseline=0`` gives the exact
    gradient of expected J over an enumerated trajectory set.
    """
    if not episodes:
        raise ValueError("score_function_gradient needs at least one episode")
    n = len(episodes)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    if baseline is None:
        baseline = float(np.mean([e.J for e in episodes]))

    grad = np.zeros_like(p.weights)
    for weight, episode in zip(w, episodes):
        score = np.zeros_like(p.weights)
        for d in episode.decisions:
            score += log_policy_gradient(p, d.features, d.mask, d.kind)
        contribution = weight * (episode.J - baseline) * score
        if not np.isfinite(contribution).all():
            logger.error(f"Non-finite policy gradient from episode {episode.episode_id}")
            raise NonFiniteGradientError(
                f"Policy gradient from episode {episode.episode_id} is not finite", episode_id=episode.episode_id
            )
        grad += contribution
    return grad


def reinforce_update(
    p: PolicyParams,
    episodes: list[EpisodeSample],
    learning_rate: float,
    baseline: float | None = None,
) -> PolicyParams:
    """One ascent step on E[J] with the mean-J baseline."""
    grad = score_function_gradient(p, episodes, baseline)
    return PolicyParams(p.weights + learning_rate * grad, p.temperature)


@dataclass
class TrainingResult:
    params: PolicyParams
    mean_J: list[float] = field(default_factory=list)

    def episodes_to_threshold(self, threshold: float, episodes_per_update: int) -> int | None:
        """Episodes consumed before an update batch first reaches mean J >= threshold."""
        for iteration, value in enumerate(self.mean_J):
            if value >= threshold:
                return (iteration + 1) * episodes_per_update
        return None


def train_policy(cfg: ExperimentConfig, seed: int) -> TrainingResult:
    """Train the adaptive controller on episodes seeded from the ``train`` stream of ``seed``."""
    training = cfg.agent.training
    params = PolicyParams.from_config(cfg.agent.initial_weights, cfg.agent.temperature)
    result = TrainingResult(params=params)
    if cfg.agent.controller != "adaptive":
        return result

    rng = make_stream(seed, "train")
    for iteration in range(training.iterations):
        episodes = []
        for e in range(training.episodes_per_update):
            episode_seed = int(rng.integers(0, 2**31 - 1))
            outcome = run_episode(cfg, episode_seed, policy=result.params)
            episodes.append(EpisodeSample(decisions=outcome.decisions, J=outcome.J, episode_id=e))
        batch_mean = float(np.mean([e.J for e in episodes]))
        result.mean_J.append(batch_mean)
        result.params = reinforce_update(result.params, episodes, training.learning_rate)
        logger.info(f"seed {seed} iteration {iteration + 1}/{training.iterations}: mean J {batch_mean:.4f}")
    return result
