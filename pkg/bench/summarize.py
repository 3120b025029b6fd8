# bench/summarize.py
"""
Threshold tables over a directory of trace CSVs.

For every (algorithm, sweep value) and gradient-norm threshold the table gives
the communication and local cost at the first round with grad_norm_sq at or
below the threshold, averaged over seeds with min and max. Runs that never get
there contribute their total budget and are counted as not reached.
"""
import argparse
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import pandas as pd

from bench.trace_integrity import TraceIntegrityChecker

logger = logging.getLogger(__name__)

TRACE_NAME = re.compile(r"^(?P<algo>.+?)__seed(?P<seed>\d+)(?:__(?P<sweep>.+))?\.csv$")
SUMMARY_TABLE_FILE = "summary_table.csv"
TABLE_COLUMNS = (
    "algo", "sweep", "threshold", "seeds", "reached",
    "comm_mean", "comm_min", "comm_max", "local_mean", "local_min", "local_max",
    "initial_gap_mean",
)


@dataclass
class TraceRecord:
    algo: str
    seed: int
    sweep: str
    frame: pd.DataFrame


def parse_trace_name(name: str) -> Optional[Tuple[str, int, str]]:
    match = TRACE_NAME.match(name)
    if match is None:
        return None
    return match["algo"], int(match["seed"]), match["sweep"] or ""


def load_traces(in_dir, checker: Optional[TraceIntegrityChecker] = None) -> List[TraceRecord]:
    """Read every trace CSV in ``in_dir``; files failing the integrity check are skipped."""
    in_dir = Path(in_dir)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"trace directory not found: {in_dir}")
    checker = checker or TraceIntegrityChecker()
    records = []
    for path in sorted(in_dir.glob("*.csv")):
        parsed = parse_trace_name(path.name)
        if parsed is None:
            continue
        frame = pd.read_csv(path)
        result = checker.check_frame(frame)
        if not result.passed:
            logger.warning("[Summary] skipping %s: %s", path.name,
                           {k: v for k, v in result.error_counts.items() if v})
            continue
        if frame.empty:
            logger.warning("[Summary] skipping %s: no rows", path.name)
            continue
        algo, seed, sweep = parsed
        records.append(TraceRecord(algo=algo, seed=seed, sweep=sweep, frame=frame))
    logger.info("[Summary] loaded %d traces from %s", len(records), in_dir)
    return records


def cost_to_reach(frame: pd.DataFrame, threshold: float) -> Tuple[float, int, bool]:
    """(comm, local, reached) at the first row with grad_norm_sq <= threshold, else the run totals."""
    hit = frame.index[frame["grad_norm_sq"] <= threshold]
    row = frame.loc[hit[0]] if len(hit) else frame.iloc[-1]
    return float(row["cum_comm"]), int(row["cum_local"]), bool(len(hit))


def best_objective(records: Sequence[TraceRecord]) -> float:
    values = [r.frame["f_value"].min() for r in records]
    finite = [v for v in values if isinstance(v, float) and math.isfinite(v)]
    return min(finite) if finite else float("nan")


def summarize(in_dir, thresholds: Sequence[float], out_path: Optional[str] = None) -> pd.DataFrame:
    records = load_traces(in_dir)
    f_star = best_objective(records)
    rows = []
    for r in records:
        initial_gap = float(r.frame["f_value"].iloc[0]) - f_star
        for threshold in thresholds:
            comm, local, reached = cost_to_reach(r.frame, threshold)
            rows.append({"algo": r.algo, "sweep": r.sweep, "seed": r.seed, "threshold": float(threshold),
                         "comm": comm, "local": local, "reached": reached, "initial_gap": initial_gap})
    if not rows:
        table = pd.DataFrame(columns=list(TABLE_COLUMNS))
    else:
        per_run = pd.DataFrame.from_records(rows)
        grouped = per_run.groupby(["algo", "sweep", "threshold"], sort=True)
        table = grouped.agg(
            seeds=("seed", "nunique"),
            reached=("reached", "sum"),
            comm_mean=("comm", "mean"),
            comm_min=("comm", "min"),
            comm_max=("comm", "max"),
            local_mean=("local", "mean"),
            local_min=("local", "min"),
            local_max=("local", "max"),
            initial_gap_mean=("initial_gap", "mean"),
        ).reset_index()
        table["reached"] = table["reached"].astype(int)
        table = table[list(TABLE_COLUMNS)]

    out = Path(out_path) if out_path else Path(in_dir) / SUMMARY_TABLE_FILE
    table.to_csv(out, index=False)
    logger.info("[Summary] f* = %.6g over %d traces; table written to %s", f_star, len(records), out)
    return table


def parse_thresholds(text: str) -> List[float]:
    values = [float(t) for t in text.split(",") if t.strip()]
    if not values or any(v <= 0 for v in values):
        raise ValueError(f"thresholds must be positive numbers, got '{text}'")
    return values


# ---------------- CLI ----------------
def _parse_args():
    p = argparse.ArgumentParser(description="Summarize a directory of trace CSVs")
    p.add_argument("--in", dest="in_dir", required=True, help="Directory holding trace CSVs")
    p.add_argument("--thresholds", default="1e-2,1e-4", help="Comma-separated grad_norm_sq thresholds")
    p.add_argument("--out", default=None, help=f"Output CSV (default: <in>/{SUMMARY_TABLE_FILE})")
    return p.parse_args()


def main():
    args = _parse_args()
    table = summarize(args.in_dir, parse_thresholds(args.thresholds), args.out)
    print(table.to_string(index=False))


if __name__ == "__main__":
    main()
