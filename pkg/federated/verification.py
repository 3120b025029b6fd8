# federated/verification.py
"""
Brute-force and statistical oracles for the estimators and solvers.

Exact checks enumerate every m-subset with itertools.combinations and never
touch the subset sampler; statistical checks average over seeded runs and
report standard errors. Each check returns one or more OracleReport rows.
"""

import argparse
import copy
import dataclasses
import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from federated.cost_model import CostConfig, CostLedger
from federated.errors import InvalidConfigError, InvalidInputError
from federated.estimators import (
    RgState, SagaState, SvrgState, rg_saga_round, rg_step, saga_commit, saga_estimate,
    subset_mean_gradient, svrg_estimate,
)
from federated.icgm_solver import (
    IterationSnapshot, LocalSolverConfig, SolverConfig, cgm_rand, default_params_rg_saga,
    draw_local_steps, local_cgm_step, run_icgm, subproblem_gradient, subproblem_value,
)
from federated.problems import (
    ProblemInstance, QuadLogSumParams, QuadraticLogSumClient, SimilarityConstants,
    gen_quadratic_logsum, participation_factor, quadratic_constants, sampling_ratio,
)
from utils.seeding import run_generator

logger = logging.getLogger(__name__)

# ─── Constants ──────────────────────────────────────────────
UNBIASED_TOL = 1e-10
ENUMERATION_MAX_N = 12
UNBIASED_KINDS = ("saga", "svrg", "rg-saga", "rg-svrg", "sag")


@dataclass
class OracleReport:
    name: str
    observed: float
    reference: float
    passed: bool
    samples: int = 1
    seed: Optional[int] = None
    tolerance: float = 0.0
    stderr: float = float("nan")
    # negative controls are expected to fail
    expected: bool = True
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.passed == self.expected

    def as_row(self) -> Dict[str, Any]:
        row = asdict(self)
        row["ok"] = self.ok
        row["details"] = repr(self.details) if self.details else ""
        return row


def reports_to_frame(reports: Sequence[OracleReport]) -> pd.DataFrame:
    return pd.DataFrame.from_records([r.as_row() for r in reports])


def write_reports(reports: Sequence[OracleReport], path) -> None:
    """CSV by default; JSON records when the path ends in .json."""
    frame = reports_to_frame(reports)
    path = Path(path)
    if path.suffix.lower() == ".json":
        frame.to_json(path, orient="records", indent=2)
    else:
        frame.to_csv(path, index=False)


# ─── Subset enumeration ────────────────────────────────────
def _all_subsets(n: int, m: int):
    if not 1 <= m <= n:
        raise InvalidInputError(f"m={m} must lie in [1, n={n}]")
    if n > ENUMERATION_MAX_N:
        raise InvalidInputError(f"enumeration over n={n} clients is too large (max {ENUMERATION_MAX_N})")
    return list(itertools.combinations(range(n), m))


def enumerate_subset_mean(vectors, m: int) -> Tuple[np.ndarray, float]:
    """Exact E_S[g_S] and E_S[||g_S - g||^2] over all m-subsets of the rows."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    n = vectors.shape[0]
    full = vectors.mean(axis=0)
    mean = np.zeros_like(full)
    deviation = 0.0
    subsets = _all_subsets(n, m)
    for subset in subsets:
        sub_mean = vectors[list(subset)].mean(axis=0)
        mean += sub_mean
        deviation += float(np.sum((sub_mean - full) ** 2))
    return mean / len(subsets), deviation / len(subsets)


def sampling_variance(vectors, m: int) -> float:
    """(n - m)/(n - 1) * sigma^2 / m with sigma^2 = (1/n) sum ||g_i - g||^2."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    n = vectors.shape[0]
    sigma_sq = float(np.mean(np.sum((vectors - vectors.mean(axis=0)) ** 2, axis=1)))
    return participation_factor(n, m) * sigma_sq / m


def check_sampling_identity(vectors, m: int, rtol: float = 1e-12) -> OracleReport:
    _, observed = enumerate_subset_mean(vectors, m)
    reference = sampling_variance(vectors, m)
    scale = float(np.mean(np.sum(np.atleast_2d(vectors) ** 2, axis=1)))
    passed = math.isclose(observed, reference, rel_tol=rtol, abs_tol=1e-15 * max(scale, 1.0))
    n = np.atleast_2d(vectors).shape[0]
    return OracleReport(name=f"sampling-identity n={n} m={m}", observed=observed, reference=reference,
                        passed=passed, samples=math.comb(n, m), tolerance=rtol)


# ─── Conditional unbiasedness ──────────────────────────────
def sag_step(state: SagaState, problem: ProblemInstance, x, subset: Sequence[int], handle=None) -> np.ndarray:
    """SAG: refresh the sampled table rows and use the aggregate b^t itself as the estimate."""
    x = problem.check_point(x)
    fresh = np.stack([problem.client_gradient(i, x) for i in subset])
    if handle is not None:
        for i in subset:
            handle.record_queries(i)
    saga_commit(state, subset, fresh)
    return state.aggregate.copy()


def _one_estimate(kind: str, state, problem: ProblemInstance, x, x_next, subset) -> np.ndarray:
    if kind == "saga":
        return saga_estimate(state, problem, x, subset, None)[0]
    if kind == "sag":
        return sag_step(state, problem, x, subset)
    if kind == "svrg":
        return svrg_estimate(state, problem, x, subset, None)[0]
    if kind == "rg-saga":
        return rg_saga_round(state, problem, x, x_next, subset, None)
    G_t, grad_s_x = svrg_estimate(state.inner, problem, x, subset, None)
    return rg_step(state, G_t, subset_mean_gradient(problem, subset, x_next), grad_s_x)


def check_conditional_unbiasedness(kind: str, problem: ProblemInstance, state, x, m: int,
                                   x_next=None, tol: float = UNBIASED_TOL) -> OracleReport:
    """Average the estimate over every m-subset and compare with its conditional mean.

    For SAGA/SVRG/SAG the target is grad f(x). For the RG kinds it is
    (1 - beta) g + beta grad f(x) + grad f(x_next) - grad f(x), the mean of
    g^{t+1} when the inner estimate is unbiased. The state is never mutated.
    """
    if kind not in UNBIASED_KINDS:
        raise InvalidConfigError(f"unknown estimator kind '{kind}', expected one of {UNBIASED_KINDS}")
    x = problem.check_point(x)
    is_rg = kind.startswith("rg-")
    if is_rg and x_next is None:
        raise InvalidInputError(f"{kind} needs x_next")

    # reference gradients straight from the client oracles
    grad_x = problem.client_gradients(x).mean(axis=0)
    if is_rg:
        grad_next = problem.client_gradients(x_next).mean(axis=0)
        reference = (1.0 - state.beta) * state.g + state.beta * grad_x + grad_next - grad_x
    else:
        reference = grad_x

    subsets = _all_subsets(problem.n, m)
    total = np.zeros(problem.dim)
    for subset in subsets:
        total += _one_estimate(kind, copy.deepcopy(state), problem, x, x_next, subset)
    mean = total / len(subsets)

    error = float(np.linalg.norm(mean - reference))
    bound = tol * max(1.0, float(np.linalg.norm(reference)))
    return OracleReport(name=f"unbiased {kind} n={problem.n} m={m}", observed=error, reference=0.0,
                        passed=error <= bound, samples=len(subsets), tolerance=bound,
                        expected=kind != "sag")


def random_estimator_state(kind: str, problem: ProblemInstance, rng: np.random.Generator,
                           beta: float = 0.3, p_b: float = 0.5, scale: float = 3.0):
    """A state with stale tables/anchors drawn at random points, for enumeration checks."""
    d = problem.dim
    if kind in ("saga", "sag", "rg-saga"):
        table = np.stack([problem.client_gradient(i, scale * rng.standard_normal(d)) for i in range(problem.n)])
        inner = SagaState.from_table(table, t=2)
    else:
        anchor = scale * rng.standard_normal(d)
        inner = SvrgState(anchor=anchor, anchor_grad=problem.client_gradients(anchor).mean(axis=0), p_b=p_b, t=1)
    if kind.startswith("rg-"):
        return RgState(g=scale * rng.standard_normal(d), beta=beta, inner=inner)
    return inner


# ─── SAG negative control ──────────────────────────────────
def _two_client_problem(curvatures, linears, name: str) -> ProblemInstance:
    clients = tuple(QuadraticLogSumClient([a], [b], 0.0, 0.0) for a, b in zip(curvatures, linears))
    return ProblemInstance(clients=clients, dim=1, name=name)


def _sag_saga_errors(problem: ProblemInstance, x0, x1) -> Tuple[float, float]:
    """Exact E_S over S in {{0}, {1}} of the SAG and SAGA errors at x1 with the table at x0."""
    base = SagaState.from_table(problem.client_gradients(x0))
    target = problem.client_gradients(x1).mean(axis=0)
    sag_err = saga_err = 0.0
    for subset in ((0,), (1,)):
        sag = sag_step(copy.deepcopy(base), problem, x1, subset)
        saga, _ = saga_estimate(base, problem, x1, subset, None)
        sag_err += 0.5 * float(np.sum((sag - target) ** 2))
        saga_err += 0.5 * float(np.sum((saga - target) ** 2))
    return sag_err, saga_err


def sag_counterexample(L: float = 2.0, c: float = 1.0, x0: float = 0.0, x1: float = 1.0) -> List[OracleReport]:
    """n = 2, m = 1: SAG's error is driven by f-differences, SAGA's by h-differences.

    Closed forms: SAG = (1/8) sum ||Df_i||^2, SAGA = (1/2) sum ||Dh_i||^2.
    The equal-curvature pair has Dh_i = 0, so SAGA is exact while SAG is not;
    the mirrored pair f_2 = -f_1 + c x checks both closed forms with Dh_i != 0.
    """
    p0, p1 = np.array([x0], dtype=float), np.array([x1], dtype=float)
    reports: List[OracleReport] = []
    instances = (
        ("equal-curvature", _two_client_problem([L, L], [0.0, -c], "sag-equal-curvature")),
        ("mirrored", _two_client_problem([L, -L], [0.0, -c], "sag-mirrored")),
    )
    for label, problem in instances:
        diffs = problem.client_gradients(p1) - problem.client_gradients(p0)
        h_diffs = diffs.mean(axis=0)[None, :] - diffs
        sag_closed = 0.125 * float(np.sum(diffs ** 2))
        saga_closed = 0.5 * float(np.sum(h_diffs ** 2))
        sag_err, saga_err = _sag_saga_errors(problem, p0, p1)
        for name, observed, reference in (("sag", sag_err, sag_closed), ("saga", saga_err, saga_closed)):
            reports.append(OracleReport(
                name=f"{name}-closed-form {label}", observed=observed, reference=reference,
                passed=math.isclose(observed, reference, rel_tol=1e-12, abs_tol=1e-15), samples=2,
                tolerance=1e-12,
            ))
        if label == "equal-curvature":
            reports.append(OracleReport(
                name="sag-exceeds-saga equal-curvature", observed=sag_err, reference=saga_err,
                passed=saga_err == 0.0 and sag_err > 0.0, samples=2,
                details={"closed_form": (L * (x1 - x0)) ** 2 / 4.0},
            ))
    return reports


# ─── Geometric local steps ─────────────────────────────────
def check_geometric_sampler(p: float, N: int = 100_000, seed: int = 0) -> List[OracleReport]:
    """Mean of K_hat within 3 standard errors of 1/p - 1, and P(K_hat = 0) close to p."""
    rng = run_generator(seed, "geometric", N)
    draws = np.fromiter((draw_local_steps(rng, p) for _ in range(N)), dtype=np.int64, count=N)
    mean = float(draws.mean())
    expected_mean = 1.0 / p - 1.0
    mean_err = 3.0 * math.sqrt((1.0 - p) / p ** 2 / N)
    zero_rate = float(np.mean(draws == 0))
    zero_err = 3.0 * math.sqrt(p * (1.0 - p) / N)
    return [
        OracleReport(name=f"geometric-mean p={p}", observed=mean, reference=expected_mean,
                     passed=abs(mean - expected_mean) <= mean_err, samples=N, seed=seed,
                     tolerance=mean_err, stderr=mean_err / 3.0),
        OracleReport(name=f"geometric-zero p={p}", observed=zero_rate, reference=p,
                     passed=abs(zero_rate - p) <= zero_err, samples=N, seed=seed,
                     tolerance=zero_err, stderr=zero_err / 3.0),
    ]


def check_local_query_rate(p: float, iterations: int = 10_000, seed: int = 0, rtol: float = 0.05) -> OracleReport:
    """Queries charged per DSS round by cgm_rand average 1/p."""
    problem = _two_client_problem([1.0, 1.0], [1.0, 1.0], "unit-quadratic")
    ledger = CostLedger(CostConfig(m=1), problem.n, keep_log=False)
    rng = run_generator(seed, "local-queries")
    x, g = np.zeros(1), problem.full_gradient(np.zeros(1))
    for _ in range(iterations):
        with ledger.select_delegate() as handle:
            cgm_rand(problem, 1.0, p, x, g, rng, handle, curvature=1.0, with_residual=False)
    observed = ledger.local_total / iterations
    return OracleReport(name=f"local-queries p={p}", observed=observed, reference=1.0 / p,
                        passed=abs(observed * p - 1.0) <= rtol, samples=iterations, seed=seed, tolerance=rtol)


# ─── Subproblem contracts ──────────────────────────────────
def check_subproblem_contracts(problem: ProblemInstance, constants: SimilarityConstants,
                               cost_config: CostConfig, config: SolverConfig, x0=None,
                               seed: int = 0) -> List[OracleReport]:
    """Replays every local solve of a run from its snapshot.

    Checks F_t(x^{t+1}) <= F_t(x^t) and ||grad F_t(y_{k+1})|| <= 2 L ||y_{k+1} - y_k||
    for each local step, with L the local curvature (>= L_1).
    """
    curvature = config.local_curvature if config.local_curvature is not None else constants.l1
    delegate = cost_config.delegate[0]
    descent_worst = -math.inf
    ratio_worst = 0.0
    steps_checked = 0
    replay_mismatch = 0.0

    def observer(snap: IterationSnapshot) -> None:
        nonlocal descent_worst, ratio_worst, steps_checked, replay_mismatch
        x_t, g_t = snap.x_t, snap.g_t
        start = subproblem_value(problem, x_t, x_t, g_t, config.lam, client=delegate)
        end = subproblem_value(problem, snap.x_next, x_t, g_t, config.lam, client=delegate)
        descent_worst = max(descent_worst, (end - start) / max(1.0, abs(start)))

        grad_anchor = problem.client_gradient(delegate, x_t)
        y = x_t
        for _ in range(snap.local.steps):
            y_next = local_cgm_step(problem, y, x_t, g_t, config.lam, curvature, client=delegate,
                                    grad_anchor=grad_anchor)
            move = float(np.linalg.norm(y_next - y))
            grad_norm = float(np.linalg.norm(subproblem_gradient(problem, y_next, x_t, g_t, config.lam,
                                                                 client=delegate, grad_anchor=grad_anchor)))
            # a zero move means y_k is already stationary for F_t
            if move > 0:
                ratio_worst = max(ratio_worst, grad_norm / (2.0 * curvature * move))
            y = y_next
            steps_checked += 1
        if config.local_solver.kind == "geometric":
            replay_mismatch = max(replay_mismatch, float(np.linalg.norm(y - snap.x_next)))

    rng = run_generator(seed, config.label, "contracts")
    run_icgm(problem, constants, cost_config, config, x0=x0, rng=rng, observer=observer)
    return [
        OracleReport(name="subproblem-descent", observed=descent_worst, reference=0.0,
                     passed=descent_worst <= 1e-12, samples=config.T, seed=seed, tolerance=1e-12),
        OracleReport(name="local-step-gradient-bound", observed=ratio_worst, reference=1.0,
                     passed=ratio_worst <= 1.0 + 1e-9, samples=steps_checked, seed=seed, tolerance=1e-9,
                     details={"replay_mismatch": replay_mismatch}),
    ]


# ─── Variance envelopes ────────────────────────────────────
@dataclass
class TrajectoryErrors:
    """Per-iteration squared quantities along one run, indexed by t."""

    grad_sq: List[float] = field(default_factory=list)       # ||grad f(x^t)||^2
    composite_sq: List[float] = field(default_factory=list)  # ||g^t - grad f(x^t)||^2
    inner_sq: List[float] = field(default_factory=list)      # ||G^t - grad f(x^t)||^2
    move_sq: List[float] = field(default_factory=lambda: [0.0])  # ||x^t - x^{t-1}||^2, t >= 1

    def observe(self, problem: ProblemInstance, snap: IterationSnapshot) -> None:
        grad = problem.client_gradients(snap.x_t).mean(axis=0)
        self.grad_sq.append(float(np.dot(grad, grad)))
        self.composite_sq.append(float(np.sum((snap.g_t - grad) ** 2)))
        inner = snap.G_t if snap.G_t is not None else snap.g_t
        self.inner_sq.append(float(np.sum((inner - grad) ** 2)))
        self.move_sq.append(float(np.sum((snap.x_next - snap.x_t) ** 2)))


def collect_trajectory(problem: ProblemInstance, constants: SimilarityConstants, cost_config: CostConfig,
                       config: SolverConfig, rng: np.random.Generator, x0=None) -> TrajectoryErrors:
    errors = TrajectoryErrors()
    run_icgm(problem, constants, cost_config, config, x0=x0, rng=rng,
             observer=lambda snap: errors.observe(problem, snap))
    return errors


def _bound_terms(kind: str, errors: TrajectoryErrors, T: int, n: int, m: int, delta: float,
                 beta: float, p_b: float) -> Dict[str, Tuple[float, float]]:
    """(lhs, rhs) for every envelope that applies to the estimator kind."""
    n_m = sampling_ratio(n, m)
    q_m = participation_factor(n, m)
    dm_sq = q_m / m * delta ** 2
    G, Sig, sig, chi = errors.grad_sq, errors.composite_sq, errors.inner_sq, errors.move_sq

    sum_sig = sum(sig[:T + 1])
    sum_Sig = sum(Sig[:T + 1])
    chi_1T = sum(chi[1:T + 1])
    spread = (n_m - 1.0 + math.sqrt(max(n_m ** 2 - n_m, 0.0))) / (n - 1) if n > 1 else 0.0
    rg_scale = 2.0 * beta - beta ** 2

    terms: Dict[str, Tuple[float, float]] = {}
    if kind == "rg-saga":
        G_1, G_mid, chi_2T = G[1], sum(G[2:T]), sum(chi[2:T + 1])
        terms["saga-variance"] = (sum_sig, 2.0 * n_m * q_m / m * G_1 + spread * G_mid + 4.0 * n_m ** 2 * dm_sq * chi_2T)
        terms["rg-saga-variance"] = (
            sum_Sig,
            4.0 * beta * n_m * q_m / ((2.0 - beta) * m) * G_1
            + 2.0 * beta * spread / (2.0 - beta) * G_mid
            + (8.0 * beta ** 2 * n_m ** 2 * dm_sq + 2.0 * dm_sq) / rg_scale * chi_1T,
        )
    elif kind == "rg-svrg":
        terms["svrg-variance"] = (sum_sig, 4.0 * dm_sq / p_b ** 2 * chi_1T)
        terms["rg-svrg-variance"] = (sum_Sig, (8.0 * beta ** 2 * dm_sq / p_b ** 2 + 2.0 * dm_sq) / rg_scale * chi_1T)
    else:
        terms["svrg-variance"] = (sum_Sig, 4.0 * dm_sq / p_b ** 2 * chi_1T)
    if kind.startswith("rg-"):
        terms["rg-error"] = (sum_Sig, 2.0 * beta / (2.0 - beta) * sum(sig[:T]) + 2.0 * dm_sq / rg_scale * chi_1T)
    return terms


def check_variance_bounds(problem: ProblemInstance, constants: SimilarityConstants, cost_config: CostConfig,
                          config: SolverConfig, runs: int = 200, T: Optional[int] = None, seed: int = 0,
                          rtol: float = 0.0, atol: float = 1e-12, x0=None) -> List[OracleReport]:
    """Seed-averaged LHS <= RHS for the estimator's variance envelopes.

    Each run is one extra outer iteration long so G^T, g^T and x^T are all observed.
    """
    if runs < 2:
        raise InvalidConfigError(f"runs must be at least 2, got {runs}")
    if config.estimator == "rg-saga" and config.init_mode != 2:
        raise InvalidConfigError("the SAGA envelopes assume two initial full synchronizations (init_mode=2)")
    T = config.T if T is None else T
    run_config = dataclasses.replace(config, T=T + 1)

    samples: Dict[str, List[Tuple[float, float]]] = {}
    for r in range(runs):
        rng = run_generator(seed, config.label, "variance", r)
        errors = collect_trajectory(problem, constants, cost_config, run_config, rng, x0=x0)
        terms = _bound_terms(config.estimator, errors, T, problem.n, cost_config.m, constants.delta,
                             config.beta, config.p_b)
        for name, pair in terms.items():
            samples.setdefault(name, []).append(pair)

    reports = []
    for name, pairs in samples.items():
        values = np.asarray(pairs)
        lhs, rhs = values.mean(axis=0)
        lhs_se, rhs_se = values.std(axis=0, ddof=1) / math.sqrt(runs)
        reports.append(OracleReport(
            name=f"{name} T={T}", observed=float(lhs), reference=float(rhs),
            passed=bool(lhs <= rhs * (1.0 + rtol) + atol), samples=runs, seed=seed,
            tolerance=rtol, stderr=float(lhs_se), details={"rhs_stderr": float(rhs_se)},
        ))
        logger.info("[Verify] %s: lhs=%.4g rhs=%.4g (se %.2g)", name, lhs, rhs, lhs_se)
    return reports


def compare_rg_saga_to_saga(problem: ProblemInstance, constants: SimilarityConstants, cost_config: CostConfig,
                            config: SolverConfig, seeds: Sequence[int], threshold: float = 0.9,
                            x0=None) -> OracleReport:
    """Fraction of paired seeds where the RG composite error beats the inner SAGA error on the same run."""
    if config.estimator != "rg-saga":
        raise InvalidConfigError("compare_rg_saga_to_saga needs the rg-saga estimator")
    wins = 0
    for seed in seeds:
        errors = collect_trajectory(problem, constants, cost_config, config,
                                    run_generator(seed, config.label), x0=x0)
        if sum(errors.composite_sq) < sum(errors.inner_sq):
            wins += 1
    fraction = wins / len(seeds)
    return OracleReport(name=f"rg-saga-beats-saga beta={config.beta:.4g}", observed=fraction,
                        reference=threshold, passed=fraction >= threshold, samples=len(seeds))


# ─── Rate envelope ─────────────────────────────────────────
def check_rate_envelope(problem: ProblemInstance, constants: SimilarityConstants, cost_config: CostConfig,
                        T: int, seeds: Sequence[int], x0=None) -> OracleReport:
    """Seed-averaged ||grad f(x_bar^T)||^2 <= 256 (Delta_1 + 38 sqrt(n_m) delta_m) F^0 / T."""
    n, m = problem.n, cost_config.m
    x0 = np.zeros(problem.dim) if x0 is None else problem.check_point(x0)
    if problem.lower_bound_hint is None:
        raise InvalidInputError("the rate envelope needs a lower bound on f")
    F0 = problem.full_objective(x0) - problem.lower_bound_hint
    params = default_params_rg_saga(constants.delta1, constants.delta, n, m, constants.l1, F0, epsilon=1.0)
    config = SolverConfig(lam=params.lam, estimator="rg-saga", beta=params.beta, T=T,
                          local_solver=LocalSolverConfig(kind="geometric", p=params.p), diagnostics=False)
    values = []
    for seed in seeds:
        result = run_icgm(problem, constants, cost_config, config, x0=x0, rng=run_generator(seed, config.label))
        grad = problem.full_gradient(result.x_bar)
        values.append(float(np.dot(grad, grad)))
    delta_m = constants.delta_m(n, m)
    bound = 256.0 * (constants.delta1 + 38.0 * math.sqrt(n / m) * delta_m) * F0 / T
    observed = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else float("nan")
    return OracleReport(name=f"rate-envelope T={T}", observed=observed, reference=bound, passed=observed <= bound,
                        samples=len(values), stderr=stderr, details={"lam": params.lam, "p": params.p})


# ─── Default suite ─────────────────────────────────────────
def run_default_suite(seed: int = 0, runs: int = 200, quick: bool = False) -> List[OracleReport]:
    """Everything `main.py verify` runs; ``quick`` trims sample counts for smoke runs."""
    rng = run_generator(seed, "suite")
    reports: List[OracleReport] = []

    for _ in range(10 if quick else 50):
        n = int(rng.integers(2, 9))
        vectors = rng.standard_normal((n, 3))
        for m in range(1, n + 1):
            reports.append(check_sampling_identity(vectors, m))

    for n in range(4, 7 if quick else 9):
        problem = gen_quadratic_logsum(QuadLogSumParams(n=n, d=3, b=2), seed=seed + n)
        x = rng.uniform(0.5, 2.0, size=3)
        x_next = x + 0.1 * rng.standard_normal(3)
        for m in range(1, n):
            for kind in ("saga", "svrg", "rg-saga", "rg-svrg"):
                state = random_estimator_state(kind, problem, rng)
                reports.append(check_conditional_unbiasedness(kind, problem, state, x, m, x_next=x_next))

    sag_problem = _two_client_problem([2.0, 2.0], [0.0, -1.0], "sag-equal-curvature")
    sag_state = SagaState.from_table(sag_problem.client_gradients(np.zeros(1)))
    reports.append(check_conditional_unbiasedness("sag", sag_problem, sag_state, np.ones(1), 1))
    reports.extend(sag_counterexample())

    for p in (0.5, 0.1, 0.01):
        reports.extend(check_geometric_sampler(p, N=10_000 if quick else 100_000, seed=seed))
    for p in (0.5, 0.1):
        reports.append(check_local_query_rate(p, iterations=2_000 if quick else 10_000, seed=seed))

    desk = gen_quadratic_logsum(QuadLogSumParams.desk(), seed=seed)
    desk_constants = quadratic_constants(desk)
    desk_cost = CostConfig(m=5)
    reports.extend(check_subproblem_contracts(
        desk, desk_constants, desk_cost,
        SolverConfig(lam=desk_constants.delta1 + desk_constants.delta, T=100,
                     local_solver=LocalSolverConfig(kind="geometric", p=0.2)),
        x0=np.ones(desk.dim), seed=seed,
    ))
    for T in ((100,) if quick else (100, 1000)):
        reports.append(check_rate_envelope(desk, desk_constants, desk_cost, T=T, seeds=range(5 if quick else 30)))

    small = gen_quadratic_logsum(QuadLogSumParams(n=16, d=10), seed=seed)
    small_constants = quadratic_constants(small)
    small_cost = CostConfig(m=4)
    n_m = small.n / small_cost.m
    lam = math.sqrt(small.n) / small_cost.m * small_constants.delta + small_constants.delta1
    local = LocalSolverConfig(kind="geometric", p=0.2)
    env_runs = 20 if quick else runs
    for estimator, beta in (("rg-saga", 1.0 / (4.0 * n_m)), ("rg-svrg", 0.25), ("svrg", 1.0)):
        config = SolverConfig(lam=lam, estimator=estimator, beta=beta, p_b=0.5, T=20, local_solver=local,
                              local_curvature=small_constants.lmax, diagnostics=False)
        reports.extend(check_variance_bounds(small, small_constants, small_cost, config, runs=env_runs, seed=seed))
    rg_config = SolverConfig(lam=lam, estimator="rg-saga", beta=1.0 / (4.0 * n_m), T=20, local_solver=local,
                             local_curvature=small_constants.lmax, diagnostics=False)
    reports.append(compare_rg_saga_to_saga(small, small_constants, small_cost, rg_config,
                                           seeds=range(20 if quick else 100)))
    return reports


# ---------------- CLI ----------------
def _parse_args():
    p = argparse.ArgumentParser(description="Run the estimator and solver oracles")
    p.add_argument("--report", default=None, help="Write reports to this CSV (or .json) path")
    p.add_argument("--seed", type=int, default=0, help="Master seed (default: 0)")
    p.add_argument("--runs", type=int, default=200, help="Runs per variance envelope (default: 200)")
    p.add_argument("--quick", action="store_true", help="Smaller sample counts")
    return p.parse_args()


def print_outcome(reports: Sequence[OracleReport]) -> int:
    """Print failures and a tally; returns the process exit code."""
    failed = [r for r in reports if not r.ok]
    for r in failed:
        print(f"[FAIL] {r.name}: observed={r.observed:.6g} reference={r.reference:.6g}")
    print(f"\n[INFO] {len(reports) - len(failed)}/{len(reports)} oracle reports as expected.")
    return 1 if failed else 0


def main():
    args = _parse_args()
    reports = run_default_suite(seed=args.seed, runs=args.runs, quick=args.quick)
    if args.report:
        write_reports(reports, args.report)
    raise SystemExit(print_outcome(reports))


if __name__ == "__main__":
    main()
