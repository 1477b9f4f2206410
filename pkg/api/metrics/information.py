"""Exact information measures on finite alphabets.

All quantities are in bits. Probabilities below ``PROB_FLOOR`` count as exact
zeros in entropy sums (0 log 0 = 0).
"""

from dataclasses import dataclass, field
import json
import logging

import numpy as np
import pandas as pd

from api.errors import ConvergenceError, NotNormalizedError

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-15
NORMALIZATION_TOL = 1e-12
ZERO_TOL = 1e-12


def entropy(p) -> float:
    """Shannon entropy in bits of a probability vector."""
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > PROB_FLOOR]
    if p.size == 0:
        return 0.0
    return float(-(p * np.log2(p)).sum())


def binary_entropy(x: float) -> float:
    return entropy([x, 1.0 - x])


def _snap(value: float, upper: float | None = None) -> float:
    """Clamp round-off: values within ZERO_TOL of 0 become 0, and never exceed ``upper``."""
    if abs(value) < ZERO_TOL or value < 0.0:
        value = 0.0
    if upper is not None and value > upper:
        value = upper
    return value


@dataclass(frozen=True)
class ChannelMatrix:
    """Row-stochastic matrix p(output | input)."""

    matrix: np.ndarray
    inputs: tuple = ()
    outputs: tuple = ()

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] == 0 or matrix.shape[1] == 0:
            raise NotNormalizedError(f"Channel matrix must be a non-empty 2D array, got shape {matrix.shape}")
        if (matrix < 0).any():
            raise NotNormalizedError("Channel matrix has negative entries")
        sums = matrix.sum(axis=1)
        if np.abs(sums - 1.0).max() > NORMALIZATION_TOL:
            logger.error(f"Channel rows do not sum to 1: max deviation {np.abs(sums - 1.0).max():.3e}")
            raise NotNormalizedError("Channel rows must sum to 1 within 1e-12")
        object.__setattr__(self, "matrix", matrix)
        if not self.inputs:
            object.__setattr__(self, "inputs", tuple(range(matrix.shape[0])))
        if not self.outputs:
            object.__setattr__(self, "outputs", tuple(range(matrix.shape[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def delete_rows(self, rows) -> "ChannelMatrix":
        keep = [i for i in range(self.shape[0]) if i not in set(rows)]
        return ChannelMatrix(self.matrix[keep], tuple(self.inputs[i] for i in keep), self.outputs)

    def to_json(self) -> str:
        return json.dumps(
            {
                "inputs": [str(x) for x in self.inputs],
                "outputs": [str(y) for y in self.outputs],
                "matrix": self.matrix.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ChannelMatrix":
        data = json.loads(text)
        return cls(np.asarray(data["matrix"], dtype=float), tuple(data["inputs"]), tuple(data["outputs"]))


def mutual_information(p, ch: ChannelMatrix) -> float:
    """I(X;Y) for input distribution ``p`` through ``ch``."""
    p = np.asarray(p, dtype=float)
    joint = p[:, None] * ch.matrix
    return _snap(entropy(p @ ch.matrix) - (entropy(joint.ravel()) - entropy(p)))


@dataclass(frozen=True)
class CapacityResult:
    capacity: float
    input_distribution: np.ndarray
    lower: float
    upper: float
    iterations: int


def blahut_arimoto(ch: ChannelMatrix, tol: float = 1e-9, max_iter: int = 100_000) -> CapacityResult:
    """Channel capacity with a certified bracket.

    Each iteration evaluates D(x) = KL(W(.|x) || q) for the current input
    distribution p. I(p) = sum_x p(x) D(x) is a lower bound and max_x D(x)
    an upper bound on capacity; iteration stops once they are within
    ``tol``. The returned capacity is I(p) for the returned p.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    W = ch.matrix
    n_in, n_out = W.shape
    ceiling = float(np.log2(min(n_in, n_out)))
    support = W > PROB_FLOOR
    log_w = np.log2(np.where(support, W, 1.0))
    p = np.full(n_in, 1.0 / n_in)
    lower, upper = 0.0, np.inf

    for iteration in range(1, max_iter + 1):
        q = p @ W
        log_q = np.log2(np.where(q > 0, q, 1.0))
        divergence = np.where(support, W * (log_w - log_q[None, :]), 0.0).sum(axis=1)
        lower = float(p @ divergence)
        upper = float(divergence.max())
        if upper - lower <= tol:
            capacity = min(_snap(lower), ceiling)
            return CapacityResult(capacity, p, lower, upper, iteration)
        p = p * np.exp2(divergence - upper)
        p = p / p.sum()

    logger.error(f"Blahut-Arimoto did not converge in {max_iter} iterations: bracket [{lower}, {upper}]")
    raise ConvergenceError(
        f"Blahut-Arimoto bracket [{lower:.3e}, {upper:.3e}] still wider than {tol} after {max_iter} iterations",
        lower=lower,
        upper=upper,
    )


@dataclass(frozen=True)
class JointDistribution:
    """Finite-support joint law; each support element is a tuple of variables."""

    support: tuple
    probabilities: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=float)
        if len(self.support) != probs.size or probs.size == 0:
            raise NotNormalizedError("Joint support and probabilities must be non-empty and aligned")
        if (probs < 0).any():
            raise NotNormalizedError("Joint distribution has negative probabilities")
        if abs(probs.sum() - 1.0) > NORMALIZATION_TOL:
            logger.error(f"Joint distribution sums to {probs.sum()!r}")
            raise NotNormalizedError(f"Joint distribution sums to {probs.sum()!r}, not 1")
        object.__setattr__(self, "support", tuple(tuple(s) for s in self.support))
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "JointDistribution":
        items = sorted(mapping.items(), key=lambda kv: repr(kv[0]))
        return cls(tuple(k for k, _ in items), np.array([v for _, v in items], dtype=float))

    def frame(self) -> pd.DataFrame:
        """One column per flattened variable plus a probability column ``p``."""
        rows = [_flatten(outcome) for outcome in self.support]
        frame = pd.DataFrame(rows, columns=[f"v{i}" for i in range(len(rows[0]))])
        frame["p"] = self.probabilities
        return frame

    def to_json(self) -> str:
        return json.dumps(
            {"support": [list(map(str, _flatten(s))) for s in self.support], "p": self.probabilities.tolist()},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "JointDistribution":
        """Inverse of to_json up to flattening: variables come back as strings."""
        data = json.loads(text)
        return cls(tuple(tuple(s) for s in data["support"]), np.asarray(data["p"], dtype=float))


def _flatten(outcome) -> tuple:
    flat = []
    for part in outcome:
        if isinstance(part, (tuple, list)):
            flat.extend(part)
        else:
            flat.append(part)
    return tuple(flat)


def _marginal_entropy(frame: pd.DataFrame, columns: list[str]) -> float:
    if not columns:
        return 0.0
    return entropy(frame.groupby(columns, sort=False)["p"].sum().to_numpy())


def joint_from_channel(prior, ch: ChannelMatrix) -> JointDistribution:
    """p(x, o) = prior(x) p(o|x) over the channel's labels."""
    prior = np.asarray(prior, dtype=float)
    support, probs = [], []
    for i, x in enumerate(ch.inputs):
        for j, o in enumerate(ch.outputs):
            mass = prior[i] * ch.matrix[i, j]
            if mass > 0:
                support.append((x, o))
                probs.append(mass)
    probs = np.asarray(probs)
    return JointDistribution(tuple(support), probs / probs.sum())


def equivocation(joint: JointDistribution) -> tuple[float, float]:
    """(H(X|O), H(X)) for a joint over (x, o) pairs."""
    frame = joint.frame()
    h_x = _marginal_entropy(frame, ["v0"])
    h_xo = _marginal_entropy(frame, ["v0", "v1"])
    h_o = _marginal_entropy(frame, ["v1"])
    return _snap(h_xo - h_o, upper=h_x), h_x


@dataclass(frozen=True)
class InformationEstimate:
    bits: float
    mode: str
    terms: tuple = field(default=())


def directed_information(joint: JointDistribution, mode: str = "exact") -> InformationEstimate:
    """I(O_{1:n} -> A_{1:n}) = sum_tau I(O_{1:tau}; A_tau | A_{1:tau-1}).

    Support elements are ``(observations, actions)`` pairs of equal-length
    tuples. ``mode`` records whether the joint is exact or an empirical
    plug-in; the computation is the same.
    """
    lengths = {(len(o), len(a)) for o, a in joint.support}
    if len(lengths) != 1 or len(next(iter(lengths))) != 2 or len(set(next(iter(lengths)))) != 1:
        raise ValueError("Directed information needs equal-length observation and action sequences")
    n = next(iter(lengths))[0]
    frame = joint.frame()
    obs_cols = [f"v{i}" for i in range(n)]
    act_cols = [f"v{n + i}" for i in range(n)]

    terms = []
    for tau in range(n):
        past_a = act_cols[:tau]
        upto_a = act_cols[: tau + 1]
        upto_o = obs_cols[: tau + 1]
        term = (
            _marginal_entropy(frame, upto_a)
            - _marginal_entropy(frame, past_a)
            - _marginal_entropy(frame, upto_o + upto_a)
            + _marginal_entropy(frame, upto_o + past_a)
        )
        terms.append(_snap(term))
    return InformationEstimate(bits=float(sum(terms)), mode=mode, terms=tuple(terms))


def joint_from_trajectories(trajectories: list[tuple[tuple, tuple]]) -> JointDistribution:
    """Empirical plug-in joint of (observations, actions) trajectories."""
    if not trajectories:
        raise NotNormalizedError("No trajectories to build a joint from")
    counts: dict = {}
    for obs, acts in trajectories:
        key = (tuple(obs), tuple(acts))
        counts[key] = counts.get(key, 0) + 1
    total = len(trajectories)
    return JointDistribution.from_mapping({k: v / total for k, v in counts.items()})


def plug_in_directed_information(observations: list, actions: list, window: int = 1) -> InformationEstimate:
    """Plug-in directed information over sliding windows of one trajectory."""
    n = min(len(observations), len(actions))
    if n < window or window < 1:
        return InformationEstimate(bits=0.0, mode="plug_in")
    windows = [
        (tuple(observations[i : i + window]), tuple(actions[i : i + window]))
        for i in range(n - window + 1)
    ]
    estimate = directed_information(joint_from_trajectories(windows), mode="plug_in")
    return estimate
