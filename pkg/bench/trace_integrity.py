# bench/trace_integrity.py
import argparse
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import pandas as pd

from federated.trace import TRACE_COLUMNS


@dataclass
class TraceCheckConfig:
    columns: Tuple[str, ...] = TRACE_COLUMNS
    monotone_columns: Tuple[str, ...] = ("cum_comm", "cum_local", "n_a", "n_r", "n_d")
    # relative slack for float round-off when cum_comm is read back from text
    tolerance: float = 1e-12
    first_round: Optional[int] = 0


@dataclass
class TraceCheckResult:
    passed: bool
    error_counts: Dict[str, int]
    details: Dict[str, object] = field(default_factory=dict)


class TraceIntegrityChecker:
    def __init__(self, config: Optional[TraceCheckConfig] = None):
        self.cfg = config or TraceCheckConfig()

    def check(self, csv_path: str) -> TraceCheckResult:
        return self.check_frame(pd.read_csv(csv_path))

    def check_frame(self, df: pd.DataFrame) -> TraceCheckResult:
        error_counts = {
            "bad_columns": 0,
            "decreasing_cumulative": 0,
            "round_gap": 0,
        }
        details: Dict[str, object] = {"rows": int(len(df))}

        # --- 1) Exact schema ---
        columns = tuple(df.columns)
        if columns != tuple(self.cfg.columns):
            missing = [c for c in self.cfg.columns if c not in columns]
            extra = [c for c in columns if c not in self.cfg.columns]
            error_counts["bad_columns"] = max(1, len(missing) + len(extra))
            details.update(missing_columns=missing, extra_columns=extra, columns=list(columns))
            # the remaining checks need the declared columns
            return TraceCheckResult(passed=False, error_counts=error_counts, details=details)

        # --- 2) Cumulative columns never decrease ---
        decreasing: List[Tuple[str, int]] = []
        for col in self.cfg.monotone_columns:
            values = df[col].astype(float)
            steps = values.diff().iloc[1:]
            slack = self.cfg.tolerance * values.abs().shift(1).iloc[1:].clip(lower=1.0)
            bad = steps[steps < -slack]
            for idx in bad.index:
                decreasing.append((col, int(df["round"].iloc[idx])))
        error_counts["decreasing_cumulative"] = len(decreasing)

        # --- 3) Rounds are consecutive ---
        rounds = df["round"].astype(int).tolist()
        gaps: List[Tuple[int, int]] = []
        if rounds and self.cfg.first_round is not None and rounds[0] != self.cfg.first_round:
            gaps.append((self.cfg.first_round, rounds[0]))
        for prev, cur in zip(rounds, rounds[1:]):
            if cur != prev + 1:
                gaps.append((prev + 1, cur))
        error_counts["round_gap"] = len(gaps)

        details.update(decreasing_at=decreasing, round_gaps=gaps)
        return TraceCheckResult(
            passed=not any(error_counts.values()),
            error_counts=error_counts,
            details=details,
        )


# ---------------- CLI ----------------
def _parse_args():
    p = argparse.ArgumentParser(description="Check trace CSV integrity")
    p.add_argument("--csv", required=True, help="Path to a trace CSV file")
    p.add_argument("--first-round", type=int, default=TraceCheckConfig.first_round,
                   help="Expected first round index (default: 0)")
    return p.parse_args()


def main():
    args = _parse_args()
    checker = TraceIntegrityChecker(TraceCheckConfig(first_round=args.first_round))
    res = checker.check(args.csv)

    print(f"\n[INFO] Rows: {res.details.get('rows', 0)}")
    print("\n[INFO] Error type counts:")
    for k, v in res.error_counts.items():
        print(f"  {k}: {v}")

    print("\n[PASS] Trace passed all integrity checks." if res.passed
          else "\n[FAIL] One or more checks failed.")
    raise SystemExit(0 if res.passed else 1)


if __name__ == "__main__":
    main()
