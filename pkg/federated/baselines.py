# federated/baselines.py
"""
Reference algorithms routed through the same cost ledger as I-CGM:
centralized GD, FedAvg, Scaffold (option-I control variates), FedRed-GD and
SABER-full.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from federated.cost_model import CostConfig, CostLedger
from federated.errors import DivergenceError, InvalidConfigError
from federated.estimators import SagaState, full_synchronization, saga_commit, subset_mean_gradient
from federated.icgm_solver import LocalSolverConfig, solve_local
from federated.problems import ProblemInstance, SimilarityConstants
from federated.trace import RunTrace, measure

logger = logging.getLogger(__name__)

BASELINE_KINDS = ("gd", "fedavg", "scaffold", "fedred-gd", "saber-full")


@dataclass
class BaselineConfig:
    algo: str
    T: int = 100
    step: float = 0.003
    K: int = 20
    lam: float = 1.0
    eta: Optional[float] = None
    # FedRed-GD anchor refresh probability
    p: float = 0.1
    # SABER-full full-gradient probability; None means m/n
    refresh_prob: Optional[float] = None
    local_solver: LocalSolverConfig = field(default_factory=LocalSolverConfig)
    seed: int = 0
    diagnostics: bool = True

    def validate(self) -> None:
        if self.algo not in BASELINE_KINDS:
            raise InvalidConfigError(f"unknown baseline '{self.algo}', expected one of {BASELINE_KINDS}")
        if self.step <= 0:
            raise InvalidConfigError(f"step size must be positive, got {self.step}")
        if self.K < 1:
            raise InvalidConfigError(f"K must be at least 1, got {self.K}")
        if self.T < 1:
            raise InvalidConfigError(f"T must be at least 1, got {self.T}")
        if self.algo == "fedred-gd" and not 0.0 < self.p <= 1.0:
            raise InvalidConfigError(f"p must lie in (0, 1], got {self.p}")
        if self.refresh_prob is not None and not 0.0 < self.refresh_prob <= 1.0:
            raise InvalidConfigError(f"refresh_prob must lie in (0, 1], got {self.refresh_prob}")
        if self.eta is not None and self.eta <= 0:
            raise InvalidConfigError(f"eta must be positive, got {self.eta}")
        self.local_solver.validate()


class _Recorder:
    """Trace bookkeeping shared by the baselines."""

    def __init__(self, algo: str, problem: ProblemInstance, ledger: CostLedger, diagnostics: bool):
        self.problem = problem
        self.ledger = ledger
        self.diagnostics = diagnostics
        self.trace = RunTrace(algo=algo)

    def record(self, t: int, x: np.ndarray, local_steps: int = 0) -> None:
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite iterate at iteration {t}", trace=self.trace, iteration=t)
        self.trace.record(t, self.ledger, measure(self.problem, x, with_value=self.diagnostics),
                          local_steps=local_steps)

    def finish(self, x: np.ndarray) -> RunTrace:
        self.trace.final_point = x
        comm, local = self.ledger.totals()
        logger.info("[%s] done: comm=%s local=%d min grad_norm_sq=%.4g",
                    self.trace.algo, comm, local, self.trace.min_grad_norm_sq)
        return self.trace


def _start(problem, x0):
    return np.zeros(problem.dim) if x0 is None else problem.check_point(x0).copy()


def run_gd(problem: ProblemInstance, cost_config: CostConfig, T: int, step: float,
           ledger: Optional[CostLedger] = None, x0=None, diagnostics: bool = True) -> RunTrace:
    """x^{t+1} = x^t - step * grad f(x^t), one full synchronization per iteration."""
    ledger = ledger or CostLedger(cost_config, problem.n)
    rec = _Recorder("gd", problem, ledger, diagnostics)
    x = _start(problem, x0)
    rec.record(0, x)
    for t in range(T):
        grad = full_synchronization(problem, x, ledger).mean(axis=0)
        x = x - step * grad
        rec.record(t + 1, x, local_steps=1)
    return rec.finish(x)


def _local_gd(problem: ProblemInstance, client: int, x: np.ndarray, K: int, step: float,
              handle, correction: Optional[np.ndarray] = None) -> np.ndarray:
    y = x.copy()
    for _ in range(K):
        grad = problem.client_gradient(client, y)
        handle.record_queries(client)
        if correction is not None:
            grad = grad + correction
        y = y - step * grad
    return y


def run_fedavg(problem: ProblemInstance, cost_config: CostConfig, T: int, K: int, step: float,
               rng: np.random.Generator, ledger: Optional[CostLedger] = None, x0=None,
               diagnostics: bool = True) -> RunTrace:
    """One RSS round per outer round; K local GD steps per client, then averaging."""
    ledger = ledger or CostLedger(cost_config, problem.n)
    rec = _Recorder("fedavg", problem, ledger, diagnostics)
    x = _start(problem, x0)
    rec.record(0, x)
    for r in range(T):
        subset, handle = ledger.select_random(rng)
        with handle:
            total = np.zeros(problem.dim)
            for i in sorted(subset):
                total += _local_gd(problem, i, x, K, step, handle)
        x = total / len(subset)
        rec.record(r + 1, x, local_steps=K)
    return rec.finish(x)


def run_scaffold(problem: ProblemInstance, cost_config: CostConfig, T: int, K: int, step: float,
                 rng: np.random.Generator, ledger: Optional[CostLedger] = None, x0=None,
                 diagnostics: bool = True) -> RunTrace:
    """Option-I control variates over a SAG aggregate.

    Per round: RSS to refresh b_i = grad f_i(x^t) on S_t and update b^t, then an
    ASS round to the same clients, who run K steps on f_i(x) + <b^t - grad f_i(x^t), x>.
    """
    ledger = ledger or CostLedger(cost_config, problem.n)
    rec = _Recorder("scaffold", problem, ledger, diagnostics)
    x = _start(problem, x0)
    sag = SagaState.from_table(full_synchronization(problem, x, ledger))
    rec.record(0, x)
    for t in range(T):
        subset, handle = ledger.select_random(rng)
        with handle:
            fresh = np.stack([problem.client_gradient(i, x) for i in subset])
            for i in subset:
                handle.record_queries(i)
        saga_commit(sag, subset, fresh)

        total = np.zeros(problem.dim)
        with ledger.select_arbitrary(subset) as handle:
            for row, i in enumerate(subset):
                correction = sag.aggregate - fresh[row]
                total += _local_gd(problem, i, x, K, step, handle, correction=correction)
        x = total / len(subset)
        rec.record(t + 1, x, local_steps=1 + K)
    return rec.finish(x)


def run_fedred_gd(problem: ProblemInstance, cost_config: CostConfig, T: int, lam: float, eta: float, p: float,
                  rng: np.random.Generator, ledger: Optional[CostLedger] = None, x0=None,
                  diagnostics: bool = True) -> RunTrace:
    """Doubly regularized delegate step with a randomly refreshed anchor.

    x_{t+1} = (eta x_t + lam x~_t - v_t) / (eta + lam),
    v_t = grad f_1(x_t) + grad f(x~_t) - grad f_1(x~_t).
    """
    if not 0.0 < p <= 1.0:
        raise InvalidConfigError(f"p must lie in (0, 1], got {p}")
    ledger = ledger or CostLedger(cost_config, problem.n)
    delegate = cost_config.delegate[0]
    rec = _Recorder("fedred-gd", problem, ledger, diagnostics)
    x = _start(problem, x0)

    anchor = x.copy()
    grads = full_synchronization(problem, anchor, ledger)
    anchor_full, anchor_delegate = grads.mean(axis=0), grads[delegate]
    rec.record(0, x)
    for t in range(T):
        with ledger.select_delegate() as handle:
            grad_1 = problem.client_gradient(delegate, x)
            handle.record_queries(delegate)
            v = grad_1 + anchor_full - anchor_delegate
            x_next = (eta * x + lam * anchor - v) / (eta + lam)
        if rng.random() < p:
            anchor = x_next.copy()
            grads = full_synchronization(problem, anchor, ledger)
            anchor_full, anchor_delegate = grads.mean(axis=0), grads[delegate]
        x = x_next
        rec.record(t + 1, x, local_steps=1)
    return rec.finish(x)


def run_saber_full(problem: ProblemInstance, cost_config: CostConfig, T: int, lam: float,
                   local_solver: LocalSolverConfig, rng: np.random.Generator, curvature: float,
                   refresh_prob: Optional[float] = None, ledger: Optional[CostLedger] = None, x0=None,
                   diagnostics: bool = True) -> RunTrace:
    """PAGE-style v^t with a full refresh w.p. refresh_prob (default m/n), then a
    regularized subproblem solved at one uniformly sampled client."""
    ledger = ledger or CostLedger(cost_config, problem.n)
    q = refresh_prob if refresh_prob is not None else cost_config.m / problem.n
    rec = _Recorder("saber-full", problem, ledger, diagnostics)
    x = _start(problem, x0)
    x_prev = x
    v = full_synchronization(problem, x, ledger).mean(axis=0)
    rec.record(0, x)
    for t in range(T):
        if t > 0:
            if rng.random() < q:
                v = full_synchronization(problem, x, ledger).mean(axis=0)
            else:
                subset, handle = ledger.select_random(rng)
                with handle:
                    v = v + subset_mean_gradient(problem, subset, x, handle) \
                        - subset_mean_gradient(problem, subset, x_prev, handle)
        (client,), handle = ledger.select_random(rng, size=1)
        with handle:
            local = solve_local(local_solver, problem, lam, x, v, rng, handle, curvature,
                                client=client, with_residual=False)
        x_prev, x = x, local.x_next
        rec.record(t + 1, x, local_steps=local.steps)
    return rec.finish(x)


def run_baseline(problem: ProblemInstance, constants: SimilarityConstants, cost_config: CostConfig,
                 cfg: BaselineConfig, x0=None, rng: Optional[np.random.Generator] = None) -> RunTrace:
    cfg.validate()
    rng = rng if rng is not None else np.random.Generator(np.random.Philox(cfg.seed))
    ledger = CostLedger(cost_config, problem.n)
    kwargs = dict(ledger=ledger, x0=x0, diagnostics=cfg.diagnostics)
    logger.info("[%s] start: n=%d d=%d T=%d", cfg.algo, problem.n, problem.dim, cfg.T)
    if cfg.algo == "gd":
        trace = run_gd(problem, cost_config, cfg.T, cfg.step, **kwargs)
    elif cfg.algo == "fedavg":
        trace = run_fedavg(problem, cost_config, cfg.T, cfg.K, cfg.step, rng, **kwargs)
    elif cfg.algo == "scaffold":
        trace = run_scaffold(problem, cost_config, cfg.T, cfg.K, cfg.step, rng, **kwargs)
    elif cfg.algo == "fedred-gd":
        eta = cfg.eta if cfg.eta is not None else 2.0 * (constants.lmax or constants.l1)
        trace = run_fedred_gd(problem, cost_config, cfg.T, cfg.lam, eta, cfg.p, rng, **kwargs)
    else:
        curvature = cfg.eta if cfg.eta is not None else (constants.lmax or constants.l1)
        trace = run_saber_full(problem, cost_config, cfg.T, cfg.lam, cfg.local_solver, rng, curvature,
                               refresh_prob=cfg.refresh_prob, **kwargs)
    trace.metadata.update({"step": cfg.step, "K": cfg.K, "lam": cfg.lam, "p": cfg.p,
                           "local_solver": cfg.local_solver.kind})
    return trace
