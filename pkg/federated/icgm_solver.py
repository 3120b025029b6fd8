# federated/icgm_solver.py
"""
Inexact composite gradient method (I-CGM).

Each outer iteration the delegate client approximately minimizes

    F_t(x) = f_1(x) + h_1(x^t) + <g^t - grad f_1(x^t), x - x^t> + (lam/2)||x - x^t||^2

with a few composite-gradient steps (fixed K, or K_t = Geom(p) + 1), then one
RSS round updates the gradient estimate g^{t+1}. Also houses the parameter
rules for the theorem-driven and the experiment-grade settings.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from federated.cost_model import CostConfig, CostLedger, RoundHandle
from federated.errors import DivergenceError, InvalidConfigError
from federated.estimators import ESTIMATOR_KINDS, INIT_MODES, make_estimator
from federated.problems import DELEGATE, ProblemInstance, SimilarityConstants, participation_factor
from federated.trace import RunTrace, measure

logger = logging.getLogger(__name__)

LOCAL_SOLVER_KINDS = ("const", "geometric")


# ─── Configuration ─────────────────────────────────────────
@dataclass(frozen=True)
class LocalSolverConfig:
    kind: str = "geometric"
    K: int = 10
    p: float = 0.1

    def validate(self) -> None:
        if self.kind not in LOCAL_SOLVER_KINDS:
            raise InvalidConfigError(f"local solver must be one of {LOCAL_SOLVER_KINDS}, got '{self.kind}'")
        if self.kind == "const" and self.K < 1:
            raise InvalidConfigError(f"K must be at least 1, got {self.K}")
        if self.kind == "geometric" and not 0.0 < self.p <= 1.0:
            raise InvalidConfigError(f"p must lie in (0, 1], got {self.p}")


@dataclass
class SolverConfig:
    lam: float
    estimator: str = "rg-saga"
    beta: float = 1.0
    p_b: float = 0.5
    local_solver: LocalSolverConfig = field(default_factory=LocalSolverConfig)
    T: int = 100
    epsilon: Optional[float] = None
    seed: int = 0
    init_mode: int = 2
    # curvature used by the local step; falls back to constants.l1
    local_curvature: Optional[float] = None
    early_stop: bool = False
    diagnostics: bool = True

    @property
    def label(self) -> str:
        return f"icgm-{self.estimator}"

    def validate(self, constants: Optional[SimilarityConstants] = None) -> None:
        if self.lam <= 0:
            raise InvalidConfigError(f"lambda must be positive, got {self.lam}")
        if self.estimator not in ESTIMATOR_KINDS:
            raise InvalidConfigError(f"unknown estimator '{self.estimator}'")
        if not 0.0 < self.beta <= 1.0:
            raise InvalidConfigError(f"beta must lie in (0, 1], got {self.beta}")
        if not 0.0 < self.p_b <= 1.0:
            raise InvalidConfigError(f"p_b must lie in (0, 1], got {self.p_b}")
        if self.T < 1:
            raise InvalidConfigError(f"T must be at least 1, got {self.T}")
        if self.init_mode not in INIT_MODES:
            raise InvalidConfigError(f"init_mode must be one of {INIT_MODES}, got {self.init_mode}")
        if self.local_curvature is not None and self.local_curvature <= 0:
            raise InvalidConfigError(f"local curvature must be positive, got {self.local_curvature}")
        if self.early_stop and self.epsilon is None:
            raise InvalidConfigError("early_stop needs epsilon")
        self.local_solver.validate()
        if constants is not None and self.lam <= constants.delta1:
            logger.warning("[ICGM] lambda=%.4g <= Delta_1=%.4g: outside the convergent regime",
                           self.lam, constants.delta1)


# ─── Subproblem ────────────────────────────────────────────
@dataclass(frozen=True)
class LocalSolveResult:
    x_next: np.ndarray
    steps: int
    # ||grad F_t(x_next)||, when known
    e_t: Optional[float] = None


def _delegate_gradient(problem: ProblemInstance, client: int, x, handle: Optional[RoundHandle]) -> np.ndarray:
    grad = problem.client_gradient(client, x)
    if handle is not None:
        handle.record_queries(client)
    return grad


def subproblem_gradient(problem: ProblemInstance, x, x_t, g_t, lam: float,
                        handle: Optional[RoundHandle] = None, client: int = DELEGATE,
                        grad_anchor: Optional[np.ndarray] = None) -> np.ndarray:
    """grad F_t(x) = grad f_1(x) + g^t - grad f_1(x^t) + lam (x - x^t)."""
    x = problem.check_point(x)
    x_t = problem.check_point(x_t)
    if grad_anchor is None:
        grad_anchor = _delegate_gradient(problem, client, x_t, handle)
    return _delegate_gradient(problem, client, x, handle) + g_t - grad_anchor + lam * (x - x_t)


def subproblem_value(problem: ProblemInstance, x, x_t, g_t, lam: float, client: int = DELEGATE,
                     grad_anchor: Optional[np.ndarray] = None) -> float:
    """F_t(x) minus the constant h_1(x^t). Uncharged; for checks only."""
    x = problem.check_point(x)
    x_t = problem.check_point(x_t)
    if grad_anchor is None:
        grad_anchor = problem.client_gradient(client, x_t)
    diff = x - x_t
    return (problem.client_value(client, x) + float(np.dot(g_t - grad_anchor, diff))
            + 0.5 * lam * float(np.dot(diff, diff)))


def local_cgm_step(problem: ProblemInstance, y_k, x_t, g_t, lam: float, curvature: float,
                   handle: Optional[RoundHandle] = None, client: int = DELEGATE,
                   grad_anchor: Optional[np.ndarray] = None,
                   grad_y: Optional[np.ndarray] = None) -> np.ndarray:
    """y_{k+1} = (L y_k + lam x^t + grad f_1(x^t) - g^t - grad f_1(y_k)) / (lam + L)."""
    if curvature <= 0:
        raise InvalidConfigError(f"curvature must be positive, got {curvature}")
    y_k = problem.check_point(y_k)
    x_t = problem.check_point(x_t)
    if grad_y is None:
        grad_y = _delegate_gradient(problem, client, y_k, handle)
    if grad_anchor is None:
        grad_anchor = grad_y if np.array_equal(y_k, x_t) else _delegate_gradient(problem, client, x_t, handle)
    return (curvature * y_k + lam * x_t + grad_anchor - g_t - grad_y) / (lam + curvature)


def cgm_const(problem: ProblemInstance, lam: float, K: int, x_t, g_t, handle: Optional[RoundHandle],
              curvature: float, client: int = DELEGATE) -> LocalSolveResult:
    """K local steps from x^t; returns the iterate with the smallest ||grad F_t|| among y_1..y_K."""
    if K < 1:
        raise InvalidConfigError(f"K must be at least 1, got {K}")
    x_t = problem.check_point(x_t)
    grad_anchor = _delegate_gradient(problem, client, x_t, handle)
    y, grad_y = x_t, grad_anchor
    best_y, best_norm = x_t, math.inf
    for k in range(1, K + 1):
        y_next = local_cgm_step(problem, y, x_t, g_t, lam, curvature, client=client,
                                grad_anchor=grad_anchor, grad_y=grad_y)
        # the gradient at y_K only serves the best-iterate rule and is not charged
        grad_next = _delegate_gradient(problem, client, y_next, handle if k < K else None)
        norm = float(np.linalg.norm(grad_next + g_t - grad_anchor + lam * (y_next - x_t)))
        if norm < best_norm:
            best_y, best_norm = y_next, norm
        y, grad_y = y_next, grad_next
    return LocalSolveResult(x_next=best_y, steps=K, e_t=best_norm)


def draw_local_steps(rng: np.random.Generator, p: float) -> int:
    """K_hat with P(K_hat = k) = (1 - p)^k p, k >= 0."""
    if not 0.0 < p <= 1.0:
        raise InvalidConfigError(f"p must lie in (0, 1], got {p}")
    return int(rng.geometric(p)) - 1


def cgm_rand(problem: ProblemInstance, lam: float, p: float, x_t, g_t, rng: np.random.Generator,
             handle: Optional[RoundHandle], curvature: float, client: int = DELEGATE,
             with_residual: bool = True) -> LocalSolveResult:
    """K_hat + 1 local steps with K_hat ~ Geom(p); returns the last iterate."""
    steps = draw_local_steps(rng, p) + 1
    x_t = problem.check_point(x_t)
    grad_anchor = _delegate_gradient(problem, client, x_t, handle)
    y, grad_y = x_t, grad_anchor
    for k in range(steps):
        y = local_cgm_step(problem, y, x_t, g_t, lam, curvature, client=client,
                           grad_anchor=grad_anchor, grad_y=grad_y)
        if k < steps - 1:
            grad_y = _delegate_gradient(problem, client, y, handle)
    e_t = None
    if with_residual:
        e_t = float(np.linalg.norm(subproblem_gradient(problem, y, x_t, g_t, lam, client=client,
                                                       grad_anchor=grad_anchor)))
    return LocalSolveResult(x_next=y, steps=steps, e_t=e_t)


def solve_local(cfg: LocalSolverConfig, problem: ProblemInstance, lam: float, x_t, g_t,
                rng: np.random.Generator, handle: Optional[RoundHandle], curvature: float,
                client: int = DELEGATE, with_residual: bool = True) -> LocalSolveResult:
    if cfg.kind == "const":
        return cgm_const(problem, lam, cfg.K, x_t, g_t, handle, curvature, client=client)
    return cgm_rand(problem, lam, cfg.p, x_t, g_t, rng, handle, curvature,
                    client=client, with_residual=with_residual)


# ─── Parameter rules ───────────────────────────────────────
class RgSagaParams(NamedTuple):
    lam: float
    beta: float
    p: float
    T: int


class SvrgParams(NamedTuple):
    lam: float
    beta: float
    p: float
    p_b: float
    T: int


class ExperimentParams(NamedTuple):
    lam: float
    beta: float
    p: float
    eta: float


def _delta_m(delta: float, n: int, m: int) -> float:
    return math.sqrt(participation_factor(n, m) / m) * delta


def geometric_local_probability(lam: float, delta1: float, L1: float) -> float:
    """p = (lam - Delta_1) / (8 (L_1 + lam))."""
    if lam <= delta1:
        raise InvalidConfigError(f"lambda={lam} must exceed Delta_1={delta1}")
    return (lam - delta1) / (8.0 * (L1 + lam))


def const_local_steps(L1: float, T: int, lam: float, delta1: float) -> int:
    """K = ceil(8 L_1 T / (lam - Delta_1))."""
    if lam <= delta1:
        raise InvalidConfigError(f"lambda={lam} must exceed Delta_1={delta1}")
    return math.ceil(8.0 * L1 * T / (lam - delta1))


def _horizon(scale: float, F0: float, epsilon: float) -> int:
    if epsilon <= 0:
        raise InvalidConfigError(f"epsilon must be positive, got {epsilon}")
    return max(1, math.ceil(256.0 * scale * F0 / epsilon ** 2))


def anchor_probability(n: int, m: int, c_a, c_r) -> float:
    """p_B = c_r / (c_a ceil(n/m))."""
    if c_r > c_a:
        raise InvalidConfigError(f"c_r={c_r} exceeds c_a={c_a}")
    return float(c_r) / (float(c_a) * math.ceil(n / m))


def default_params_rg_saga(delta1: float, delta: float, n: int, m: int, L1: float,
                           F0: float, epsilon: float) -> RgSagaParams:
    n_m = n / m
    delta_m = _delta_m(delta, n, m)
    lam = 3.0 * delta1 + 113.0 * math.sqrt(n_m) * delta_m
    beta = 1.0 / (112.0 * n_m)
    p = geometric_local_probability(lam, delta1, L1)
    T = _horizon(delta1 + 38.0 * math.sqrt(n_m) * delta_m, F0, epsilon)
    return RgSagaParams(lam=lam, beta=beta, p=p, T=T)


def default_params_rg_svrg(delta1: float, delta: float, n: int, m: int, L1: float, c_a, c_r,
                           F0: float, epsilon: float) -> SvrgParams:
    p_b = anchor_probability(n, m, c_a, c_r)
    delta_m = _delta_m(delta, n, m)
    lam = 3.0 * delta1 + 22.0 * delta_m / math.sqrt(p_b)
    p = geometric_local_probability(lam, delta1, L1)
    T = _horizon(delta1 + 8.0 * delta_m / math.sqrt(p_b), F0, epsilon)
    return SvrgParams(lam=lam, beta=p_b / 2.0, p=p, p_b=p_b, T=T)


def default_params_svrg_direct(delta1: float, delta: float, n: int, m: int, L1: float, c_a, c_r,
                               F0: float, epsilon: float) -> SvrgParams:
    p_b = anchor_probability(n, m, c_a, c_r)
    delta_m = _delta_m(delta, n, m)
    lam = 3.0 * delta1 + 16.0 * delta_m / p_b
    p = geometric_local_probability(lam, delta1, L1)
    T = _horizon(delta1 + 6.0 * delta_m / p_b, F0, epsilon)
    return SvrgParams(lam=lam, beta=1.0, p=p, p_b=p_b, T=T)


def experiment_params(delta: float, delta1: float, L: float, n: int, m: int,
                      lmax: Optional[float] = None) -> ExperimentParams:
    """Experiment-grade settings: p = delta/L, lam = sqrt(n)/m delta + Delta_1, beta = m/n, eta = 2 L_max."""
    p = min(1.0, delta / L)
    lam = math.sqrt(n) / m * delta + delta1
    eta = 2.0 * (lmax if lmax is not None else L)
    return ExperimentParams(lam=lam, beta=m / n, p=p, eta=eta)


# ─── Outer loop ────────────────────────────────────────────
@dataclass(frozen=True)
class IterationSnapshot:
    t: int
    x_t: np.ndarray
    x_next: np.ndarray
    g_t: np.ndarray
    G_t: Optional[np.ndarray]
    g_next: np.ndarray
    local: LocalSolveResult


@dataclass
class IcgmResult:
    trace: RunTrace
    x_bar: np.ndarray
    x_final: np.ndarray
    ledger: CostLedger


Observer = Callable[[IterationSnapshot], None]


def _finite_or_raise(v: np.ndarray, what: str, t: int, trace: RunTrace) -> None:
    if not np.all(np.isfinite(v)):
        raise DivergenceError(f"non-finite {what} at iteration {t}", trace=trace, iteration=t)


def run_icgm(problem: ProblemInstance, constants: SimilarityConstants, cost_config: CostConfig,
             config: SolverConfig, x0: Optional[np.ndarray] = None,
             rng: Optional[np.random.Generator] = None,
             observer: Optional[Observer] = None) -> IcgmResult:
    """Run T outer iterations: one DSS round, one RSS round and one trace row each."""
    config.validate(constants)
    rng = rng if rng is not None else np.random.Generator(np.random.Philox(config.seed))
    ledger = CostLedger(cost_config, problem.n)
    delegate = cost_config.delegate[0]
    curvature = config.local_curvature if config.local_curvature is not None else constants.l1
    estimator = make_estimator(config.estimator, beta=config.beta, p_b=config.p_b, init_mode=config.init_mode)
    trace = RunTrace(algo=config.label, metadata={
        "lam": config.lam, "beta": config.beta, "p_b": config.p_b, "T": config.T,
        "local_solver": config.local_solver.kind, "init_mode": config.init_mode, "curvature": curvature,
    })

    x = np.zeros(problem.dim) if x0 is None else problem.check_point(x0).copy()
    g = estimator.initialize(problem, x, ledger, rng)
    _finite_or_raise(g, "initial gradient", 0, trace)
    trace.record(0, ledger, measure(problem, x, g, with_value=config.diagnostics))
    logger.info("[ICGM] %s start: n=%d d=%d lam=%.4g T=%d init comm=%s",
                config.estimator, problem.n, problem.dim, config.lam, config.T, ledger.communication)

    x_bar = x
    eps_sq = config.epsilon ** 2 if config.epsilon is not None else None
    for t in range(config.T):
        with ledger.select_delegate() as handle:
            local = solve_local(config.local_solver, problem, config.lam, x, g, rng, handle, curvature,
                                client=delegate, with_residual=config.diagnostics)
        x_next = local.x_next
        _finite_or_raise(x_next, "iterate", t + 1, trace)

        estimator.after_local_step(t, problem, x_next, ledger)
        subset, handle = ledger.select_random(rng)
        with handle:
            g_next = estimator.advance(t, problem, x, x_next, subset, rng, ledger, handle)
        _finite_or_raise(g_next, "gradient estimate", t + 1, trace)

        row = trace.record(t + 1, ledger, measure(problem, x_next, g_next, with_value=config.diagnostics),
                           e_t=local.e_t if local.e_t is not None else float("nan"),
                           local_steps=local.steps)
        if observer is not None:
            observer(IterationSnapshot(t, x, x_next, g, estimator.last_inner, g_next, local))
        logger.debug("[ICGM] t=%d grad_norm_sq=%.4g comm=%s", t + 1, row.grad_norm_sq, row.cum_comm)

        # x_bar is uniform over x^1..x^{t+1} (reservoir of size one)
        if rng.random() * (t + 1) < 1.0:
            x_bar = x_next
        x, g = x_next, g_next
        if config.early_stop and row.grad_norm_sq <= eps_sq:
            logger.info("[ICGM] reached epsilon at t=%d", t + 1)
            break

    trace.final_point = x
    comm, local_total = ledger.totals()
    logger.info("[ICGM] %s done: comm=%s local=%d min grad_norm_sq=%.4g",
                config.estimator, comm, local_total, trace.min_grad_norm_sq)
    return IcgmResult(trace=trace, x_bar=x_bar, x_final=x, ledger=ledger)
