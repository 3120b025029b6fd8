# federated/estimators.py
"""
SAGA, loopless-SVRG and Recursive-Gradient (RG) estimators.

The functional operations (saga_step, svrg_step, rg_step, ...) mutate an
explicit state object and record every oracle query on the round handle they
are given. The GradientEstimator classes at the bottom wire them into the
round structure used by run_icgm: initialization, an optional hook after the
delegate step, and one RSS round per outer iteration.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from federated.cost_model import CostLedger, RoundHandle
from federated.errors import InvalidConfigError, InvalidInputError, InvalidSelectionError
from federated.problems import ProblemInstance

logger = logging.getLogger(__name__)

# ─── Constants ──────────────────────────────────────────────
# the SAGA aggregate is recomputed from the table this often to cap rounding drift
AGGREGATE_REFRESH_EVERY = 64
INIT_MODES = (0, 1, 2)


def _check_vector(v: np.ndarray, d: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (d,):
        raise InvalidInputError(f"{name} has shape {v.shape}, expected ({d},)")
    return v


# ─── Shared oracle plumbing ────────────────────────────────
def subset_mean_gradient(problem: ProblemInstance, subset: Sequence[int], x,
                         handle: Optional[RoundHandle] = None) -> np.ndarray:
    """grad f_S(x) = (1/|S|) sum_{i in S} grad f_i(x), reduced in client-index order.

    One query per client is recorded on ``handle``; ``handle=None`` is an
    uncharged measurement.
    """
    if len(subset) == 0:
        raise InvalidSelectionError("subset must be nonempty")
    x = problem.check_point(x)
    total = np.zeros(problem.dim)
    for i in sorted(subset):
        total += problem.client_gradient(i, x)
        if handle is not None:
            handle.record_queries(i)
    return total / len(subset)


def _subset_gradients(problem: ProblemInstance, subset: Sequence[int], x,
                      handle: Optional[RoundHandle]) -> np.ndarray:
    rows = []
    for i in subset:
        rows.append(problem.client_gradient(i, x))
        if handle is not None:
            handle.record_queries(i)
    return np.stack(rows)


def full_synchronization(problem: ProblemInstance, x, ledger: CostLedger) -> np.ndarray:
    """Contact every client through ceil(n/m) sequential ASS rounds.

    Returns the (n, d) stack of client gradients at x.
    """
    x = problem.check_point(x)
    grads = np.empty((problem.n, problem.dim))
    for block in ledger.config.sync_blocks(problem.n):
        with ledger.select_arbitrary(block) as handle:
            for i in block:
                grads[i] = problem.client_gradient(i, x)
                handle.record_queries(i)
    return grads


# ─── SAGA ──────────────────────────────────────────────────
@dataclass
class SagaState:
    table: np.ndarray
    aggregate: np.ndarray
    t: int = 0
    steps_since_refresh: int = 0

    @classmethod
    def from_table(cls, table: np.ndarray, t: int = 0) -> "SagaState":
        table = np.array(table, dtype=float)
        return cls(table=table, aggregate=table.mean(axis=0), t=t)

    def consistency_error(self) -> float:
        """Relative gap between the incremental aggregate and the table mean."""
        exact = self.table.mean(axis=0)
        scale = max(float(np.linalg.norm(exact)), 1.0)
        return float(np.linalg.norm(self.aggregate - exact)) / scale


def saga_begin(problem: ProblemInstance, x0, ledger: CostLedger) -> SagaState:
    """First full synchronization: b_i^0 = grad f_i(x^0)."""
    return SagaState.from_table(full_synchronization(problem, x0, ledger), t=0)


def saga_resync(state: SagaState, problem: ProblemInstance, x, ledger: CostLedger) -> None:
    """Replace the whole table by a full synchronization at x."""
    state.table = full_synchronization(problem, x, ledger)
    state.aggregate = state.table.mean(axis=0)
    state.steps_since_refresh = 0
    state.t += 1


def saga_init(problem: ProblemInstance, x0, x1, ledger: CostLedger) -> SagaState:
    """Two full synchronizations (2*ceil(n/m) ASS rounds) at x^0 then x^1."""
    state = saga_begin(problem, x0, ledger)
    saga_resync(state, problem, x1, ledger)
    return state


def saga_estimate(state: SagaState, problem: ProblemInstance, x, subset: Sequence[int],
                  handle: Optional[RoundHandle]) -> Tuple[np.ndarray, np.ndarray]:
    """G = grad f_S(x) - b_S + b, without touching the state.

    Returns (G, fresh) where fresh holds the per-client gradients at x.
    """
    if len(subset) == 0:
        raise InvalidSelectionError("subset must be nonempty")
    x = problem.check_point(x)
    idx = list(subset)
    fresh = _subset_gradients(problem, idx, x, handle)
    estimate = fresh.mean(axis=0) - state.table[idx].mean(axis=0) + state.aggregate
    return estimate, fresh


def saga_commit(state: SagaState, subset: Sequence[int], fresh: np.ndarray) -> None:
    """Store fresh gradients and move the aggregate by b += (1/n) sum_S (fresh - old)."""
    idx = list(subset)
    n = state.table.shape[0]
    state.aggregate = state.aggregate + (fresh.sum(axis=0) - state.table[idx].sum(axis=0)) / n
    state.table[idx] = fresh
    state.t += 1
    state.steps_since_refresh += 1
    if state.steps_since_refresh >= AGGREGATE_REFRESH_EVERY:
        drift = state.consistency_error()
        if drift > 1e-12:
            logger.warning("[SAGA] aggregate drift %.3g before re-anchoring", drift)
        state.aggregate = state.table.mean(axis=0)
        state.steps_since_refresh = 0


def saga_step(state: SagaState, problem: ProblemInstance, x_t, subset: Sequence[int],
              handle: Optional[RoundHandle]) -> np.ndarray:
    estimate, fresh = saga_estimate(state, problem, x_t, subset, handle)
    saga_commit(state, subset, fresh)
    return estimate


# ─── Loopless SVRG ─────────────────────────────────────────
@dataclass
class SvrgState:
    anchor: np.ndarray
    anchor_grad: np.ndarray
    p_b: float
    t: int = 0
    refreshes: int = 0

    def __post_init__(self):
        if not 0.0 < self.p_b <= 1.0:
            raise InvalidConfigError(f"p_b must lie in (0, 1], got {self.p_b}")


def svrg_init(problem: ProblemInstance, x0, ledger: CostLedger, p_b: float) -> SvrgState:
    x0 = problem.check_point(x0)
    grads = full_synchronization(problem, x0, ledger)
    return SvrgState(anchor=x0.copy(), anchor_grad=grads.mean(axis=0), p_b=p_b)


def svrg_refresh(state: SvrgState, problem: ProblemInstance, x, ledger: CostLedger) -> None:
    x = problem.check_point(x)
    state.anchor_grad = full_synchronization(problem, x, ledger).mean(axis=0)
    state.anchor = x.copy()
    state.refreshes += 1


def svrg_estimate(state: SvrgState, problem: ProblemInstance, x, subset: Sequence[int],
                  handle: Optional[RoundHandle]) -> Tuple[np.ndarray, np.ndarray]:
    """G = grad f_S(x) + grad f(w) - grad f_S(w). Returns (G, grad f_S(x))."""
    grad_s_x = subset_mean_gradient(problem, subset, x, handle)
    grad_s_w = subset_mean_gradient(problem, subset, state.anchor, handle)
    return grad_s_x + state.anchor_grad - grad_s_w, grad_s_x


def _svrg_advance(state: SvrgState, problem: ProblemInstance, x_t, subset: Sequence[int],
                  rng: np.random.Generator, ledger: CostLedger,
                  handle: Optional[RoundHandle]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    x_t = problem.check_point(x_t)
    # omega_0 is never drawn: w^0 = x^0 by construction
    if state.t > 0 and rng.random() < state.p_b:
        svrg_refresh(state, problem, x_t, ledger)
    state.t += 1
    if np.array_equal(state.anchor, x_t):
        return state.anchor_grad.copy(), None
    return svrg_estimate(state, problem, x_t, subset, handle)


def svrg_step(state: SvrgState, problem: ProblemInstance, x_t, subset: Sequence[int],
              rng: np.random.Generator, ledger: CostLedger, handle: Optional[RoundHandle]) -> np.ndarray:
    """Draw omega_t ~ Bernoulli(p_b) first; refresh the anchor on success, then estimate."""
    estimate, _ = _svrg_advance(state, problem, x_t, subset, rng, ledger, handle)
    return estimate


# ─── Recursive gradient ────────────────────────────────────
@dataclass
class RgState:
    g: np.ndarray
    beta: float
    inner: Union[SagaState, SvrgState, None] = None
    last_inner: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise InvalidConfigError(f"beta must lie in (0, 1], got {self.beta}")


def rg_step(state: RgState, G_t, grad_S_next, grad_S_curr) -> np.ndarray:
    """g^{t+1} = (1 - beta) g^t + beta G^t + grad f_S(x^{t+1}) - grad f_S(x^t)."""
    d = state.g.shape[0]
    G_t = _check_vector(G_t, d, "G_t")
    grad_S_next = _check_vector(grad_S_next, d, "grad_S_next")
    grad_S_curr = _check_vector(grad_S_curr, d, "grad_S_curr")
    g_next = (1.0 - state.beta) * state.g + state.beta * G_t + grad_S_next - grad_S_curr
    state.g = g_next
    state.last_inner = G_t
    return g_next


def rg_exact_round(state: RgState, problem: ProblemInstance, G_t, x_t, x_next,
                   subset: Sequence[int], handle: Optional[RoundHandle]) -> np.ndarray:
    """RG round whose inner estimate is already known (warm-up iterations)."""
    grad_S_curr = subset_mean_gradient(problem, subset, x_t, handle)
    grad_S_next = subset_mean_gradient(problem, subset, x_next, handle)
    return rg_step(state, G_t, grad_S_next, grad_S_curr)


def rg_saga_round(state: RgState, problem: ProblemInstance, x_t, x_next, subset: Sequence[int],
                  handle: Optional[RoundHandle]) -> np.ndarray:
    """SAGA at x^t and the RG correction on the same subset: 2 queries per client."""
    if not isinstance(state.inner, SagaState):
        raise InvalidConfigError("rg_saga_round needs a SAGA inner state")
    G_t, fresh = saga_estimate(state.inner, problem, x_t, subset, handle)
    grad_S_next = subset_mean_gradient(problem, subset, x_next, handle)
    saga_commit(state.inner, subset, fresh)
    return rg_step(state, G_t, grad_S_next, fresh.mean(axis=0))


def rg_svrg_round(state: RgState, problem: ProblemInstance, x_t, x_next, subset: Sequence[int],
                  rng: np.random.Generator, ledger: CostLedger, handle: Optional[RoundHandle]) -> np.ndarray:
    """SVRG at x^t and the RG correction on the same subset.

    Three queries per client (x^{t+1}, x^t, w^t) on a stale anchor; two after a refresh.
    """
    if not isinstance(state.inner, SvrgState):
        raise InvalidConfigError("rg_svrg_round needs an SVRG inner state")
    G_t, grad_S_curr = _svrg_advance(state.inner, problem, x_t, subset, rng, ledger, handle)
    if grad_S_curr is None:
        grad_S_curr = subset_mean_gradient(problem, subset, x_t, handle)
    grad_S_next = subset_mean_gradient(problem, subset, x_next, handle)
    return rg_step(state, G_t, grad_S_next, grad_S_curr)


# ─── Drivers used by the I-CGM loop ────────────────────────
class GradientEstimator(ABC):
    """Produces g^0 at init and g^{t+1} from one RSS round per outer iteration."""

    kind: str = ""

    def __init__(self):
        self.g: Optional[np.ndarray] = None
        self.last_inner: Optional[np.ndarray] = None

    @abstractmethod
    def initialize(self, problem: ProblemInstance, x0: np.ndarray, ledger: CostLedger,
                   rng: np.random.Generator) -> np.ndarray:
        ...

    def after_local_step(self, t: int, problem: ProblemInstance, x_next: np.ndarray, ledger: CostLedger) -> None:
        """Hook between the delegate step and the RSS round."""

    @abstractmethod
    def advance(self, t: int, problem: ProblemInstance, x_t: np.ndarray, x_next: np.ndarray,
                subset: Sequence[int], rng: np.random.Generator, ledger: CostLedger,
                handle: RoundHandle) -> np.ndarray:
        ...


class RgSagaEstimator(GradientEstimator):
    kind = "rg-saga"

    def __init__(self, beta: float, init_mode: int = 2):
        super().__init__()
        if init_mode not in INIT_MODES:
            raise InvalidConfigError(f"init_mode must be one of {INIT_MODES}, got {init_mode}")
        self.beta = beta
        self.init_mode = init_mode
        self.state: Optional[RgState] = None
        # exact (or approximate) inner estimates for the warm-up iterations
        self._warmup: Dict[int, np.ndarray] = {}

    def initialize(self, problem, x0, ledger, rng):
        if self.init_mode == 0:
            subset, handle = ledger.select_random(rng)
            with handle:
                fresh = _subset_gradients(problem, subset, x0, handle)
            approx = fresh.mean(axis=0)
            table = np.tile(approx, (problem.n, 1))
            table[list(subset)] = fresh
            inner = SagaState.from_table(table, t=0)
        else:
            inner = saga_begin(problem, x0, ledger)
        G0 = inner.aggregate.copy()
        self._warmup = {0: G0}
        self.state = RgState(g=G0.copy(), beta=self.beta, inner=inner)
        self.g = self.state.g
        return self.state.g

    def after_local_step(self, t, problem, x_next, ledger):
        if self.init_mode == 2 and t == 0:
            saga_resync(self.state.inner, problem, x_next, ledger)
            self._warmup[1] = self.state.inner.aggregate.copy()

    def advance(self, t, problem, x_t, x_next, subset, rng, ledger, handle):
        if t in self._warmup:
            g_next = rg_exact_round(self.state, problem, self._warmup.pop(t), x_t, x_next, subset, handle)
        else:
            g_next = rg_saga_round(self.state, problem, x_t, x_next, subset, handle)
        self.g = g_next
        self.last_inner = self.state.last_inner
        return g_next


class RgSvrgEstimator(GradientEstimator):
    kind = "rg-svrg"

    def __init__(self, beta: float, p_b: float):
        super().__init__()
        self.beta = beta
        self.p_b = p_b
        self.state: Optional[RgState] = None

    def initialize(self, problem, x0, ledger, rng):
        inner = svrg_init(problem, x0, ledger, self.p_b)
        self.state = RgState(g=inner.anchor_grad.copy(), beta=self.beta, inner=inner)
        self.g = self.state.g
        return self.state.g

    def advance(self, t, problem, x_t, x_next, subset, rng, ledger, handle):
        g_next = rg_svrg_round(self.state, problem, x_t, x_next, subset, rng, ledger, handle)
        self.g = g_next
        self.last_inner = self.state.last_inner
        return g_next


class SvrgDirectEstimator(GradientEstimator):
    """g^t = G^t: the SVRG estimate at x^{t+1} feeds the next delegate step directly."""

    kind = "svrg"

    def __init__(self, p_b: float):
        super().__init__()
        self.p_b = p_b
        self.state: Optional[SvrgState] = None

    def initialize(self, problem, x0, ledger, rng):
        self.state = svrg_init(problem, x0, ledger, self.p_b)
        # G^0 comes from the init sync; the next estimate draws omega_1
        self.state.t = 1
        self.g = self.state.anchor_grad.copy()
        return self.g

    def advance(self, t, problem, x_t, x_next, subset, rng, ledger, handle):
        self.last_inner = self.g
        self.g = svrg_step(self.state, problem, x_next, subset, rng, ledger, handle)
        return self.g


ESTIMATOR_KINDS = ("rg-saga", "rg-svrg", "svrg")


def make_estimator(kind: str, beta: float = 1.0, p_b: float = 1.0, init_mode: int = 2) -> GradientEstimator:
    if kind == "rg-saga":
        return RgSagaEstimator(beta=beta, init_mode=init_mode)
    if kind == "rg-svrg":
        return RgSvrgEstimator(beta=beta, p_b=p_b)
    if kind == "svrg":
        return SvrgDirectEstimator(p_b=p_b)
    raise InvalidConfigError(f"unknown estimator '{kind}', expected one of {ESTIMATOR_KINDS}")
