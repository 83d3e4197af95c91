"""Fairness measures that scalarize per-agent return vectors.

Three measures are provided: minimum welfare (the default everywhere),
a generalized Gini welfare with non-increasing weights, and Nash welfare
(product of returns, defined for non-negative vectors only).
"""

from __future__ import annotations

from typing import Sequence

from .errors import ConfigurationError, DomainError


class FairnessMeasure:
    """Maps an N-vector of returns to a scalar. Larger is fairer/better."""

    name = "fairness"

    def __call__(self, returns: Sequence[float]) -> float:
        raise NotImplementedError


class MinWelfare(FairnessMeasure):
    """Smallest return across agents."""

    name = "min"

    def __call__(self, returns):
        return min(returns)


class GiniWelfare(FairnessMeasure):
    """Generalized Gini welfare: weighted sum of ascending-sorted returns.

    Weights must be non-negative, sum to 1 and be non-increasing, so the
    worst-off agent carries the largest weight. With weights (1, 0, ..., 0)
    this reduces to minimum welfare.
    """

    name = "ggf"

    def __init__(self, weights: Sequence[float]):
        weights = tuple(float(w) for w in weights)
        if any(w < 0 for w in weights):
            raise ConfigurationError("Gini weights must be non-negative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ConfigurationError("Gini weights must sum to 1")
        if any(weights[k] < weights[k + 1] for k in range(len(weights) - 1)):
            raise ConfigurationError("Gini weights must be non-increasing")
        self.weights = weights

    @classmethod
    def default(cls, agent_count: int) -> "GiniWelfare":
        """Dyadic weights w_k proportional to 2^-(k-1), normalized."""
        raw = [2.0 ** -(k) for k in range(agent_count)]
        total = sum(raw)
        return cls([w / total for w in raw])

    def __call__(self, returns):
        if len(returns) != len(self.weights):
            raise ConfigurationError(
                f"expected {len(self.weights)} returns, got {len(returns)}"
            )
        return sum(w * r for w, r in zip(self.weights, sorted(returns)))


class NashWelfare(FairnessMeasure):
    """Product of returns. Rejects negative entries rather than evaluating."""

    name = "nash"

    def __call__(self, returns):
        product = 1.0
        for r in returns:
            if r < 0:
                raise DomainError(
                    "Nash welfare is undefined for negative returns"
                )
            product *= r
        return product


def evaluate_fairness(
    measure: FairnessMeasure, returns: Sequence[float], agent_count: int | None = None
) -> float:
    """Apply a fairness measure to a return vector, validating its length."""
    if agent_count is not None and len(returns) != agent_count:
        raise ConfigurationError(
            f"return vector has length {len(returns)}, expected {agent_count}"
        )
    if not returns:
        raise ConfigurationError("return vector is empty")
    return measure(returns)


def make_measure(name: str, agent_count: int) -> FairnessMeasure:
    """Construct a measure from its config key: min, ggf or nash."""
    if name == "min":
        return MinWelfare()
    if name == "ggf":
        return GiniWelfare.default(agent_count)
    if name == "nash":
        return NashWelfare()
    raise ConfigurationError(f"unknown fairness measure {name!r}")
