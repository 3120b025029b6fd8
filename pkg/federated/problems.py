# federated/problems.py
"""
Finite-sum objectives f = (1/n) * sum_i f_i with per-client first-order oracles.

Two generators are provided:
  - gen_quadratic_logsum: diagonal quadratics plus a shared log-sum penalty
  - gen_logistic_nonconvex: sharded logistic loss plus a nonconvex regularizer

and helpers for the similarity constants (delta, Delta_1, L_1) that drive the
I-CGM parameter rules.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.special import expit

from federated.errors import DegenerateInputError, DataError, InvalidInputError

logger = logging.getLogger(__name__)

# ─── Constants ──────────────────────────────────────────────
DEFAULT_ZERO_EIG_VALUE = 1e-6
DELEGATE = 0


# ─── Client objectives ─────────────────────────────────────
class ClientObjective(ABC):
    """One local objective f_i, only reachable through its oracle."""

    dim: int

    @abstractmethod
    def value(self, x: np.ndarray) -> float:
        ...

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        ...

    def evaluate(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        return self.value(x), self.gradient(x)


class QuadraticLogSumClient(ClientObjective):
    """0.5*<diag(curvature) x, x> - <linear, x> + offset + sum_k log(1 + alpha*|x_k|).

    The quadratic part is the average of b diagonal quadratics
    0.5*<A_j (x - b_j), x - b_j>, collapsed into (curvature, linear, offset).
    """

    def __init__(self, curvature: np.ndarray, linear: np.ndarray, offset: float, alpha: float):
        curvature = np.asarray(curvature, dtype=float)
        linear = np.asarray(linear, dtype=float)
        if curvature.ndim != 1 or curvature.shape != linear.shape:
            raise InvalidInputError("curvature and linear must be 1-d vectors of equal length")
        if alpha < 0:
            raise InvalidInputError(f"alpha must be nonnegative, got {alpha}")
        self.curvature = curvature
        self.linear = linear
        self.offset = float(offset)
        self.alpha = float(alpha)
        self.dim = curvature.shape[0]
        self.curvature.setflags(write=False)
        self.linear.setflags(write=False)

    @classmethod
    def from_points(cls, diagonals: np.ndarray, points: np.ndarray, alpha: float) -> "QuadraticLogSumClient":
        """Build from b stacked diagonals A_j (b x d) and centres b_j (b x d)."""
        diagonals = np.atleast_2d(np.asarray(diagonals, dtype=float))
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if diagonals.shape != points.shape:
            raise InvalidInputError("diagonals and points must have the same shape")
        curvature = diagonals.mean(axis=0)
        linear = (diagonals * points).mean(axis=0)
        offset = 0.5 * float((diagonals * points ** 2).sum(axis=1).mean())
        return cls(curvature, linear, offset, alpha)

    def penalty(self, x: np.ndarray) -> float:
        return float(np.log1p(self.alpha * np.abs(x)).sum())

    def value(self, x: np.ndarray) -> float:
        quad = 0.5 * float(np.dot(self.curvature * x, x)) - float(np.dot(self.linear, x)) + self.offset
        return quad + self.penalty(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        # sign(0) = 0, so the penalty is flat at the kink
        penalty_grad = self.alpha * np.sign(x) / (1.0 + self.alpha * np.abs(x))
        return self.curvature * x - self.linear + penalty_grad


class LogisticClient(ClientObjective):
    """scale * sum_j log(1 + exp(-y_j <a_j, x>)) + alpha * sum_k x_k^2 / (1 + x_k^2)."""

    def __init__(self, features: sparse.csr_matrix, labels: np.ndarray, scale: float, alpha: float):
        if features.shape[0] != labels.shape[0]:
            raise InvalidInputError("features and labels disagree on the number of rows")
        if features.shape[0] == 0:
            raise InvalidInputError("a logistic client needs at least one row")
        self.features = sparse.csr_matrix(features, dtype=float)
        self.labels = np.asarray(labels, dtype=float)
        self.scale = float(scale)
        self.alpha = float(alpha)
        self.dim = self.features.shape[1]

    def value(self, x: np.ndarray) -> float:
        margins = self.labels * (self.features @ x)
        loss = self.scale * float(np.logaddexp(0.0, -margins).sum())
        x_sq = x ** 2
        return loss + self.alpha * float((x_sq / (1.0 + x_sq)).sum())

    def gradient(self, x: np.ndarray) -> np.ndarray:
        margins = self.labels * (self.features @ x)
        weights = -self.labels * expit(-margins)
        loss_grad = self.scale * np.asarray(self.features.T @ weights).ravel()
        return loss_grad + self.alpha * 2.0 * x / (1.0 + x ** 2) ** 2


class FunctionClient(ClientObjective):
    """Wraps plain callables; handy for hand-built instances."""

    def __init__(self, value_fn: Callable[[np.ndarray], float],
                 gradient_fn: Callable[[np.ndarray], np.ndarray], dim: int):
        self._value_fn = value_fn
        self._gradient_fn = gradient_fn
        self.dim = int(dim)

    def value(self, x: np.ndarray) -> float:
        return float(self._value_fn(x))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._gradient_fn(x), dtype=float).reshape(self.dim)


# ─── Problem instance ──────────────────────────────────────
@dataclass(frozen=True)
class ProblemInstance:
    clients: Tuple[ClientObjective, ...]
    dim: int
    lower_bound_hint: Optional[float] = None
    name: str = "problem"
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.clients) < 1:
            raise InvalidInputError("a problem needs at least one client")
        for i, client in enumerate(self.clients):
            if client.dim != self.dim:
                raise InvalidInputError(f"client {i} has dimension {client.dim}, expected {self.dim}")
        object.__setattr__(self, "clients", tuple(self.clients))

    @property
    def n(self) -> int:
        return len(self.clients)

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidInputError(f"point has shape {x.shape}, expected ({self.dim},)")
        return x

    def check_client(self, i: int) -> int:
        if not 0 <= int(i) < self.n:
            raise InvalidInputError(f"client index {i} outside [0, {self.n})")
        return int(i)

    def oracle_query(self, i: int, x) -> Tuple[float, np.ndarray]:
        client = self.clients[self.check_client(i)]
        return client.evaluate(self.check_point(x))

    def client_value(self, i: int, x) -> float:
        return self.clients[self.check_client(i)].value(self.check_point(x))

    def client_gradient(self, i: int, x) -> np.ndarray:
        return self.clients[self.check_client(i)].gradient(self.check_point(x))

    def client_gradients(self, x) -> np.ndarray:
        """All n client gradients stacked as an (n, d) array, in client order."""
        x = self.check_point(x)
        return np.stack([client.gradient(x) for client in self.clients])

    def full_objective(self, x) -> float:
        x = self.check_point(x)
        total = 0.0
        for client in self.clients:
            total += client.value(x)
        return total / self.n

    def full_gradient(self, x) -> np.ndarray:
        x = self.check_point(x)
        total = np.zeros(self.dim)
        for client in self.clients:
            total += client.gradient(x)
        return total / self.n


def oracle_query(problem: ProblemInstance, i: int, x) -> Tuple[float, np.ndarray]:
    return problem.oracle_query(i, x)


def full_objective(problem: ProblemInstance, x) -> float:
    return problem.full_objective(x)


def full_gradient(problem: ProblemInstance, x) -> np.ndarray:
    return problem.full_gradient(x)


# ─── Similarity constants ──────────────────────────────────
def sampling_ratio(n: int, m: int) -> float:
    return n / m


def participation_factor(n: int, m: int) -> float:
    """q_m = (n - m)/(n - 1); zero when every client participates."""
    if n == 1:
        return 0.0
    return (n - m) / (n - 1)


@dataclass(frozen=True)
class SimilarityConstants:
    delta: float
    delta1: float
    l1: float
    lmax: Optional[float] = None
    delta_max: Optional[float] = None

    def __post_init__(self):
        if self.delta < 0 or self.delta1 < 0:
            raise InvalidInputError("delta and delta1 must be nonnegative")
        if self.l1 <= 0:
            raise InvalidInputError(f"l1 must be positive, got {self.l1}")

    def n_m(self, n: int, m: int) -> float:
        return sampling_ratio(n, m)

    def q_m(self, n: int, m: int) -> float:
        return participation_factor(n, m)

    def delta_m(self, n: int, m: int) -> float:
        return math.sqrt(participation_factor(n, m) / m) * self.delta


@dataclass(frozen=True)
class ConstantSample:
    l1: float
    delta: float
    delta1: float
    lmax: float
    delta_max: float


def estimate_constants(problem: ProblemInstance, x_prev, x_next, delegate: int = DELEGATE) -> ConstantSample:
    """Local secant estimates of L_1, delta and Delta_1 between two points."""
    x_prev = problem.check_point(x_prev)
    x_next = problem.check_point(x_next)
    step = float(np.linalg.norm(x_prev - x_next))
    if step == 0.0:
        raise DegenerateInputError("estimate_constants needs two distinct points")

    diffs = problem.client_gradients(x_prev) - problem.client_gradients(x_next)
    full_diff = diffs.mean(axis=0)
    h_diffs = full_diff[None, :] - diffs
    h_norms = np.linalg.norm(h_diffs, axis=1)
    f_norms = np.linalg.norm(diffs, axis=1)
    return ConstantSample(
        l1=float(f_norms[delegate]) / step,
        delta=math.sqrt(float(np.mean(h_norms ** 2))) / step,
        delta1=float(h_norms[delegate]) / step,
        lmax=float(f_norms.max()) / step,
        delta_max=float(h_norms.max()) / step,
    )


@dataclass
class ConstantTracker:
    """Running maxima of secant samples."""

    l1: float = 0.0
    delta: float = 0.0
    delta1: float = 0.0
    lmax: float = 0.0
    delta_max: float = 0.0
    samples: int = 0

    def update(self, sample: ConstantSample) -> None:
        self.l1 = max(self.l1, sample.l1)
        self.delta = max(self.delta, sample.delta)
        self.delta1 = max(self.delta1, sample.delta1)
        self.lmax = max(self.lmax, sample.lmax)
        self.delta_max = max(self.delta_max, sample.delta_max)
        self.samples += 1

    def as_constants(self) -> SimilarityConstants:
        if self.samples == 0:
            raise DegenerateInputError("no samples recorded")
        return SimilarityConstants(delta=self.delta, delta1=self.delta1, l1=self.l1,
                                   lmax=self.lmax, delta_max=self.delta_max)


def sample_constants(problem: ProblemInstance, rng: np.random.Generator, center=None,
                     pairs: int = 32, radius: float = 1.0) -> SimilarityConstants:
    """Running-maximum estimates over random point pairs around ``center``."""
    center = np.zeros(problem.dim) if center is None else problem.check_point(center)
    tracker = ConstantTracker()
    for _ in range(pairs):
        x = center + radius * rng.standard_normal(problem.dim)
        y = center + radius * rng.standard_normal(problem.dim)
        tracker.update(estimate_constants(problem, x, y))
    logger.info("Sampled constants over %d pairs: L1=%.4g delta=%.4g Delta1=%.4g",
                pairs, tracker.l1, tracker.delta, tracker.delta1)
    return tracker.as_constants()


def quadratic_constants(problem: ProblemInstance, delegate: int = DELEGATE) -> SimilarityConstants:
    """Exact constants for quadratic/log-sum instances.

    The log-sum penalty is identical across clients and cancels in h_i, so
    delta and Delta_1 only depend on the averaged diagonals; its curvature is
    bounded by alpha^2 in magnitude.
    """
    clients = problem.clients
    if not all(isinstance(c, QuadraticLogSumClient) for c in clients):
        raise InvalidInputError("quadratic_constants needs a quadratic/log-sum problem")
    alpha = clients[0].alpha
    curv = np.stack([c.curvature for c in clients])
    dev = curv.mean(axis=0)[None, :] - curv
    penalty_curv = alpha ** 2
    return SimilarityConstants(
        delta=math.sqrt(float((dev ** 2).mean(axis=0).max())),
        delta1=float(np.abs(dev[delegate]).max()),
        l1=max(float(curv[delegate].max()), penalty_curv),
        lmax=max(float(curv.max()), penalty_curv),
        delta_max=float(np.abs(dev).max()),
    )


# ─── Quadratic + log-sum generator ─────────────────────────
@dataclass(frozen=True)
class QuadLogSumParams:
    alpha: float = 10.0
    b: int = 5
    n: int = 100
    d: int = 1000
    diag_base_range: Tuple[float, float] = (0.0, 110.0)
    noise_range: Tuple[float, float] = (0.0, 18.0)
    clip_range: Tuple[float, float] = (1.0, 100.0)
    zero_eig_fraction: float = 0.05
    zero_eig_value: float = DEFAULT_ZERO_EIG_VALUE
    point_range: Tuple[float, float] = (0.0, 10.0)
    noise_distribution: str = "uniform"

    def __post_init__(self):
        if self.alpha <= 0:
            raise InvalidInputError(f"alpha must be positive, got {self.alpha}")
        if self.n < 1 or self.d < 1 or self.b < 1:
            raise InvalidInputError("n, d and b must be positive")
        for name in ("diag_base_range", "noise_range", "clip_range", "point_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InvalidInputError(f"{name} is empty: ({lo}, {hi})")
        if self.clip_range[0] < 0:
            raise InvalidInputError("clip_range must lie within [0, inf)")
        if not 0.0 <= self.zero_eig_fraction <= 1.0:
            raise InvalidInputError(f"zero_eig_fraction must lie in [0, 1], got {self.zero_eig_fraction}")
        if self.noise_distribution != "uniform":
            raise InvalidInputError(f"unsupported noise distribution '{self.noise_distribution}'")

    @classmethod
    def desk(cls, **overrides) -> "QuadLogSumParams":
        return cls(**{"n": 20, "d": 50, **overrides})

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "QuadLogSumParams":
        kwargs: Dict[str, Any] = {}
        for key, value in raw.items():
            if key not in cls.__dataclass_fields__:
                raise InvalidInputError(f"unknown quadratic parameter '{key}'")
            kwargs[key] = tuple(value) if isinstance(value, list) else value
        return cls(**kwargs)


def gen_quadratic_logsum(params: QuadLogSumParams, seed: int) -> ProblemInstance:
    rng = np.random.default_rng(seed)
    n, b, d = params.n, params.b, params.d

    base = rng.uniform(*params.diag_base_range, size=d)
    noise = rng.uniform(*params.noise_range, size=(n, b, d))
    diagonals = np.clip(base[None, None, :] + noise, *params.clip_range)
    n_zero = int(round(params.zero_eig_fraction * d))
    if n_zero:
        zero_idx = np.argsort(rng.random((n, b, d)), axis=-1)[..., :n_zero]
        np.put_along_axis(diagonals, zero_idx, params.zero_eig_value, axis=-1)
    points = rng.uniform(*params.point_range, size=(n, b, d))

    clients = tuple(QuadraticLogSumClient.from_points(diagonals[i], points[i], params.alpha) for i in range(n))

    # f* >= min of the averaged quadratic since the penalty is nonnegative
    curv = np.mean([c.curvature for c in clients], axis=0)
    lin = np.mean([c.linear for c in clients], axis=0)
    off = float(np.mean([c.offset for c in clients]))
    safe = curv > 0
    lower = off - float(np.sum(lin[safe] ** 2 / (2.0 * curv[safe])))

    diagonals.setflags(write=False)
    logger.info("Generated quadratic/log-sum problem: n=%d d=%d b=%d seed=%s", n, d, b, seed)
    return ProblemInstance(
        clients=clients,
        dim=d,
        lower_bound_hint=lower,
        name="quadratic-logsum",
        metadata={"alpha": params.alpha, "diagonals": diagonals, "seed": seed},
    )


# ─── Logistic generator ────────────────────────────────────
def _contiguous_shards(n_rows: int, n: int) -> Sequence[np.ndarray]:
    return np.array_split(np.arange(n_rows), n)


def _dirichlet_shards(labels: np.ndarray, n: int, concentration: float,
                      rng: np.random.Generator) -> Sequence[np.ndarray]:
    buckets = [[] for _ in range(n)]
    for label in np.unique(labels):
        rows = np.flatnonzero(labels == label)
        proportions = rng.dirichlet(np.full(n, concentration))
        cuts = (np.cumsum(proportions)[:-1] * len(rows)).astype(int)
        for i, part in enumerate(np.split(rows, cuts)):
            buckets[i].extend(part.tolist())
    return [np.sort(np.asarray(bucket, dtype=int)) for bucket in buckets]


def gen_logistic_nonconvex(dataset, n: int, alpha: float, split: str = "contiguous",
                           dirichlet_alpha: float = 0.5, seed: Optional[int] = None) -> ProblemInstance:
    """Shard a labelled sparse dataset over n clients.

    f_i(x) = (n/M) sum_j log(1 + exp(-y_ij <a_ij, x>)) + alpha sum_k x_k^2/(1 + x_k^2),
    so the mean of the f_i is the global mean loss plus the regularizer.
    """
    features = sparse.csr_matrix(dataset.features, dtype=float)
    labels = np.asarray(dataset.labels, dtype=float)
    n_rows = features.shape[0]

    bad = ~np.isin(labels, (-1.0, 1.0))
    if bad.any():
        raise DataError(f"labels must be -1 or +1, found {labels[bad][0]!r} at row {int(np.flatnonzero(bad)[0]) + 1}")
    if n < 1 or n > n_rows:
        raise InvalidInputError(f"cannot split {n_rows} rows over {n} clients")
    if alpha < 0:
        raise InvalidInputError(f"alpha must be nonnegative, got {alpha}")

    if split == "contiguous":
        shards = _contiguous_shards(n_rows, n)
    elif split == "dirichlet":
        shards = _dirichlet_shards(labels, n, dirichlet_alpha, np.random.default_rng(seed))
    else:
        raise InvalidInputError(f"unknown split '{split}'")

    for i, rows in enumerate(shards):
        if len(rows) == 0:
            raise InvalidInputError(f"shard {i} is empty")

    scale = n / n_rows
    clients = tuple(LogisticClient(features[rows], labels[rows], scale, alpha) for rows in shards)
    logger.info("Built logistic problem: n=%d rows=%d d=%d split=%s", n, n_rows, features.shape[1], split)
    return ProblemInstance(
        clients=clients,
        dim=features.shape[1],
        lower_bound_hint=0.0,
        name="logistic-nonconvex",
        metadata={"alpha": alpha, "split": split, "shard_sizes": tuple(len(s) for s in shards)},
    )
