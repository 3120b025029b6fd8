# federated/trace.py
"""
Per-round run traces.

Every algorithm appends one TraceRow per outer round, read off the cost
ledger and the current iterate; RunTrace writes them as a CSV with a fixed
column order.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from federated.cost_model import CostLedger
from federated.problems import ProblemInstance

TRACE_COLUMNS = (
    "round", "cum_comm", "cum_local", "grad_norm_sq", "f_value",
    "e_t", "sigma_hat_sq", "local_steps", "n_a", "n_r", "n_d",
)


@dataclass(frozen=True)
class TraceRow:
    round: int
    cum_comm: Fraction
    cum_local: int
    grad_norm_sq: float
    f_value: float
    e_t: float
    sigma_hat_sq: float
    local_steps: int
    n_a: int
    n_r: int
    n_d: int


@dataclass(frozen=True)
class Measurement:
    grad_norm_sq: float
    f_value: float
    sigma_hat_sq: float


def measure(problem: ProblemInstance, x: np.ndarray, g: Optional[np.ndarray] = None,
            with_value: bool = True) -> Measurement:
    """Uncharged measurement of ||grad f(x)||^2, f(x) and ||g - grad f(x)||^2."""
    grad = problem.full_gradient(x)
    sigma = float(np.sum((g - grad) ** 2)) if g is not None else float("nan")
    value = problem.full_objective(x) if with_value else float("nan")
    return Measurement(grad_norm_sq=float(np.dot(grad, grad)), f_value=value, sigma_hat_sq=sigma)


@dataclass
class RunTrace:
    algo: str
    rows: List[TraceRow] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)
    final_point: Optional[np.ndarray] = field(default=None, repr=False)

    def record(self, round_: int, ledger: CostLedger, m: Measurement,
               e_t: float = float("nan"), local_steps: int = 0) -> TraceRow:
        row = TraceRow(
            round=round_,
            cum_comm=ledger.communication,
            cum_local=ledger.local_total,
            grad_norm_sq=m.grad_norm_sq,
            f_value=m.f_value,
            e_t=float(e_t),
            sigma_hat_sq=m.sigma_hat_sq,
            local_steps=int(local_steps),
            n_a=ledger.n_a,
            n_r=ledger.n_r,
            n_d=ledger.n_d,
        )
        self.rows.append(row)
        return row

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def total_comm(self) -> Fraction:
        return self.rows[-1].cum_comm if self.rows else Fraction(0)

    @property
    def total_local(self) -> int:
        return self.rows[-1].cum_local if self.rows else 0

    @property
    def min_grad_norm_sq(self) -> float:
        return min((r.grad_norm_sq for r in self.rows), default=float("nan"))

    @property
    def final_f(self) -> float:
        return self.rows[-1].f_value if self.rows else float("nan")

    def to_frame(self) -> pd.DataFrame:
        records = []
        for r in self.rows:
            records.append({
                "round": r.round,
                "cum_comm": float(r.cum_comm),
                "cum_local": r.cum_local,
                "grad_norm_sq": r.grad_norm_sq,
                "f_value": r.f_value,
                "e_t": r.e_t,
                "sigma_hat_sq": r.sigma_hat_sq,
                "local_steps": r.local_steps,
                "n_a": r.n_a,
                "n_r": r.n_r,
                "n_d": r.n_d,
            })
        return pd.DataFrame.from_records(records, columns=list(TRACE_COLUMNS))

    def write_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False)
