# bench/experiment.py
"""
Batch runner: one trace CSV per (algorithm, seed, sweep value) plus a
summary.json for the whole batch.
"""
import copy
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from bench.config import (
    COST_SWEEP_KEYS, PROBLEM_SWEEP_KEYS, AlgorithmSpec, ExperimentConfig, ProblemSpec,
)
from federated.baselines import BaselineConfig, run_baseline
from federated.cost_model import CostConfig
from federated.errors import DivergenceError, InvalidConfigError
from federated.icgm_solver import (
    LocalSolverConfig, SolverConfig, default_params_rg_saga, default_params_rg_svrg, default_params_svrg_direct,
    experiment_params, run_icgm,
)
from federated.libsvm import load_libsvm
from federated.problems import (
    ProblemInstance, QuadLogSumParams, SimilarityConstants, gen_logistic_nonconvex, gen_quadratic_logsum,
    sample_constants, quadratic_constants,
)
from federated.trace import RunTrace
from utils.seeding import run_generator

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
RESOLVED_CONFIG_FILE = "config.json"
ICGM_OVERRIDE_KEYS = ("lam", "beta", "p", "K", "local_solver", "p_b", "init_mode", "eta", "T", "early_stop")
BASELINE_OVERRIDE_KEYS = ("step", "K", "lam", "eta", "p", "refresh_prob", "local_solver", "local_p", "T")

# problems are deterministic in their ProblemSpec; each worker process builds each one once
_PROBLEM_CACHE: Dict[str, Tuple[ProblemInstance, SimilarityConstants]] = {}


@dataclass(frozen=True)
class RunTask:
    config: ExperimentConfig
    algorithm: AlgorithmSpec
    seed: int
    sweep_value: Any = None


@dataclass
class RunSummary:
    algo: str
    seed: int
    sweep: Optional[str]
    total_comm: float
    total_local: int
    min_grad_norm_sq: float
    final_f: Optional[float]
    diverged: bool
    runtime_ms: float


# ─── Problems ──────────────────────────────────────────────
def build_problem(spec: ProblemSpec) -> Tuple[ProblemInstance, SimilarityConstants]:
    key = json.dumps(asdict(spec), sort_keys=True)
    if key in _PROBLEM_CACHE:
        return _PROBLEM_CACHE[key]
    if spec.kind == "quadratic":
        problem = gen_quadratic_logsum(QuadLogSumParams.from_dict(spec.params), seed=spec.seed)
        constants = quadratic_constants(problem)
    else:
        dataset = load_libsvm(spec.dataset, n_features=spec.n_features, binarize_labels=spec.binarize_labels)
        problem = gen_logistic_nonconvex(dataset, spec.n, spec.alpha, split=spec.split,
                                         dirichlet_alpha=spec.dirichlet_alpha, seed=spec.seed)
        constants = sample_constants(problem, run_generator(spec.seed, "constants"),
                                     pairs=spec.sample_pairs, radius=spec.sample_radius)
    _PROBLEM_CACHE[key] = (problem, constants)
    return problem, constants


def apply_sweep(config: ExperimentConfig, value: Any) -> ExperimentConfig:
    """Copy of ``config`` with the sweep parameter set to ``value``."""
    if config.sweep is None:
        return config
    out = copy.deepcopy(config)
    param = config.sweep.param
    if param in COST_SWEEP_KEYS:
        out.cost[param.split(".", 1)[1]] = value
    elif param in PROBLEM_SWEEP_KEYS:
        if out.problem.kind == "quadratic":
            out.problem.params["n"] = value
        else:
            out.problem.n = value
    else:
        for algorithm in out.algorithms:
            algorithm.overrides[param] = value
    return out


def sweep_label(config: ExperimentConfig, value: Any) -> Optional[str]:
    if config.sweep is None:
        return None
    return f"{config.sweep.param}-{value}"


def trace_filename(algo: str, seed: int, sweep: Optional[str] = None) -> str:
    stem = f"{algo}__seed{seed}"
    if sweep is not None:
        stem += f"__{sweep}"
    return stem + ".csv"


# ─── Parameter resolution ──────────────────────────────────
def _check_overrides(algorithm: AlgorithmSpec, allowed) -> Dict[str, Any]:
    unknown = set(algorithm.overrides) - set(allowed)
    if unknown:
        raise InvalidConfigError(f"algorithm '{algorithm.name}': unknown overrides {sorted(unknown)}")
    return dict(algorithm.overrides)


def _initial_gap(problem: ProblemInstance, x0: np.ndarray) -> float:
    if problem.lower_bound_hint is None:
        raise InvalidConfigError("theorem parameters need a lower bound on f")
    return problem.full_objective(x0) - problem.lower_bound_hint


def _base_params(mode: str, estimator: str, problem: ProblemInstance, constants: SimilarityConstants,
                 cost_config: CostConfig, epsilon: Optional[float]) -> Dict[str, Any]:
    """lam, beta, p, p_b and local curvature for one parameter mode."""
    n, m = problem.n, cost_config.m
    lmax = constants.lmax if constants.lmax is not None else constants.l1
    if mode == "experiment":
        ep = experiment_params(constants.delta, constants.delta1, constants.l1, n, m, lmax=lmax)
        return {"lam": ep.lam, "beta": ep.beta, "p": ep.p, "p_b": m / n, "eta": ep.eta}
    if mode == "participation":
        n_m = n / m
        lam = math.sqrt(n_m) * constants.delta
        return {"lam": lam, "beta": 1.0 / n_m, "p": lam / (lam + lmax), "p_b": m / n, "eta": 2.0 * lmax}
    if mode == "theorem":
        if epsilon is None:
            raise InvalidConfigError("theorem parameters need epsilon")
        F0 = _initial_gap(problem, np.zeros(problem.dim))
        args = (constants.delta1, constants.delta, n, m, constants.l1)
        if estimator == "rg-saga":
            params = default_params_rg_saga(*args, F0, epsilon)
            out = {"lam": params.lam, "beta": params.beta, "p": params.p, "p_b": m / n}
        else:
            rule = default_params_rg_svrg if estimator == "rg-svrg" else default_params_svrg_direct
            params = rule(*args, cost_config.c_a, cost_config.c_r, F0, epsilon)
            out = {"lam": params.lam, "beta": params.beta, "p": params.p, "p_b": params.p_b}
        out.update(eta=None, theorem_T=params.T)
        return out
    return {"lam": None, "beta": m / n, "p": 0.1, "p_b": m / n, "eta": None}


def resolve_algorithm(algorithm: AlgorithmSpec, problem: ProblemInstance, constants: SimilarityConstants,
                      cost_config: CostConfig, config: ExperimentConfig,
                      seed: int) -> Union[SolverConfig, BaselineConfig]:
    if algorithm.algo == "icgm":
        overrides = _check_overrides(algorithm, ICGM_OVERRIDE_KEYS)
        params = _base_params(algorithm.params, algorithm.estimator, problem, constants, cost_config,
                              config.epsilon)
        if "theorem_T" in params:
            logger.info("[Bench] %s: theorem horizon T=%d (running T=%d)", algorithm.name,
                        params["theorem_T"], overrides.get("T", config.T))
        params.update({k: overrides[k] for k in ("lam", "beta", "p", "p_b", "eta") if k in overrides})
        if params["lam"] is None:
            raise InvalidConfigError(f"algorithm '{algorithm.name}': explicit params need lam")
        local = LocalSolverConfig(kind=overrides.get("local_solver", "geometric"),
                                  K=int(overrides.get("K", 10)), p=min(1.0, float(params["p"])))
        return SolverConfig(
            lam=float(params["lam"]), estimator=algorithm.estimator, beta=float(params["beta"]),
            p_b=float(params["p_b"]), local_solver=local, T=int(overrides.get("T", config.T)),
            epsilon=config.epsilon, seed=seed, init_mode=int(overrides.get("init_mode", 2)),
            local_curvature=params["eta"], early_stop=bool(overrides.get("early_stop", False)),
            diagnostics=config.diagnostics,
        )

    overrides = _check_overrides(algorithm, BASELINE_OVERRIDE_KEYS)
    params = _base_params("explicit" if algorithm.params == "explicit" else "experiment", "rg-saga",
                          problem, constants, cost_config, config.epsilon)
    lmax = constants.lmax if constants.lmax is not None else constants.l1
    default_step = 1.0 / lmax if algorithm.algo == "gd" else 0.003
    local = LocalSolverConfig(kind=overrides.get("local_solver", "geometric"), K=int(overrides.get("K", 20)),
                              p=min(1.0, float(overrides.get("local_p", params["p"]))))
    return BaselineConfig(
        algo=algorithm.algo, T=int(overrides.get("T", config.T)), step=float(overrides.get("step", default_step)),
        K=int(overrides.get("K", 20)), lam=float(overrides.get("lam", params["lam"] or 1.0)),
        eta=overrides.get("eta", params["eta"] if algorithm.algo == "saber-full" else None),
        p=float(overrides.get("p", cost_config.m / problem.n)), refresh_prob=overrides.get("refresh_prob"),
        local_solver=local, seed=seed, diagnostics=config.diagnostics,
    )


# ─── Runs ──────────────────────────────────────────────────
def _json_float(value: float) -> Optional[float]:
    return None if value is None or not math.isfinite(value) else float(value)


def run_single(task: RunTask, out_dir: Optional[Path] = None) -> Tuple[RunSummary, RunTrace]:
    config, algorithm, seed = task.config, task.algorithm, task.seed
    problem, constants = build_problem(config.problem)
    cost_config = CostConfig(**config.cost)
    resolved = resolve_algorithm(algorithm, problem, constants, cost_config, config, seed)
    rng = run_generator(seed, algorithm.name)
    sweep = sweep_label(config, task.sweep_value)

    start = time.perf_counter()
    diverged = False
    try:
        if isinstance(resolved, SolverConfig):
            trace = run_icgm(problem, constants, cost_config, resolved, rng=rng).trace
        else:
            trace = run_baseline(problem, constants, cost_config, resolved, rng=rng)
    except DivergenceError as e:
        logger.error("[Bench] %s seed=%d %s diverged at iteration %s: %s", algorithm.name, seed, sweep or "",
                     e.iteration, e)
        trace = e.trace if e.trace is not None else RunTrace(algo=algorithm.name)
        diverged = True
    runtime_ms = (time.perf_counter() - start) * 1000.0

    trace.metadata.update({"name": algorithm.name, "seed": seed, "sweep": sweep})
    if out_dir is not None:
        trace.write_csv(str(out_dir / trace_filename(algorithm.name, seed, sweep)))
    summary = RunSummary(
        algo=algorithm.name, seed=seed, sweep=sweep, total_comm=float(trace.total_comm),
        total_local=int(trace.total_local), min_grad_norm_sq=trace.min_grad_norm_sq,
        final_f=_json_float(trace.final_f), diverged=diverged, runtime_ms=round(runtime_ms, 3),
    )
    return summary, trace


def _run_task(args: Tuple[RunTask, Optional[str]]) -> RunSummary:
    task, out_dir = args
    summary, _ = run_single(task, Path(out_dir) if out_dir else None)
    return summary


def plan_tasks(config: ExperimentConfig) -> List[RunTask]:
    values = config.sweep.values if config.sweep is not None else [None]
    tasks = []
    for value in values:
        swept = apply_sweep(config, value)
        for algorithm in swept.algorithms:
            for seed in swept.seeds:
                tasks.append(RunTask(config=swept, algorithm=algorithm, seed=int(seed), sweep_value=value))
    return tasks


def write_summary(summaries: List[RunSummary], path: Path) -> None:
    records = []
    for s in summaries:
        record = asdict(s)
        record["min_grad_norm_sq"] = _json_float(s.min_grad_norm_sq)
        records.append(record)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(records, f, indent=2)


def run_experiment(config: ExperimentConfig, out_dir: Optional[str] = None) -> List[RunSummary]:
    config.validate()
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / RESOLVED_CONFIG_FILE, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2)

    tasks = plan_tasks(config)
    logger.info("[Bench] %s: %d runs (%d algorithms, %d seeds, %d sweep values), workers=%d",
                config.name, len(tasks), len(config.algorithms), len(config.seeds),
                len(config.sweep.values) if config.sweep else 1, config.workers)
    jobs = [(task, str(out)) for task in tasks]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            summaries = list(pool.map(_run_task, jobs))
    else:
        summaries = [_run_task(job) for job in jobs]

    write_summary(summaries, out / SUMMARY_FILE)
    n_diverged = sum(s.diverged for s in summaries)
    if n_diverged:
        logger.warning("[Bench] %d of %d runs diverged", n_diverged, len(summaries))
    logger.info("[Bench] wrote %d traces and %s to %s", len(summaries), SUMMARY_FILE, out)
    return summaries
