import argparse
import datetime
import json
import logging
import os
import sys

from bench.config import load_experiment_config
from bench.experiment import run_experiment
from bench.summarize import parse_thresholds, summarize
from federated.errors import FedSimError
from federated.verification import print_outcome, run_default_suite, write_reports
from utils.resource_path import resource_path
from version import __version__


APP_VERSION = __version__


logger = logging.getLogger("fedsim")
logger.setLevel(logging.INFO)

# library hierarchies that share the application handlers
LIBRARY_LOGGERS = ("federated", "bench")


def _load_app_config() -> dict:
    """Load application config from config/app_config.json. Returns defaults if missing or invalid."""
    defaults = {
        "output_path": None,  # None = use cwd; str = base directory for runs and app-logs
        "workers": 1,
        "diagnostics": True,
        "logLevel": "INFO",
        "defaultSeeds": list(range(10)),
        "thresholds": [1e-2, 1e-4],
    }
    config_path = resource_path("config", "app_config.json")
    if not config_path.exists():
        logger.info("No app_config.json found at %s, using defaults", config_path)
        return defaults
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            loaded = json.load(f)
        out = {**defaults, **{k: v for k, v in loaded.items() if k in defaults}}
        logger.info("Loaded app config from %s: workers=%s, diagnostics=%s",
                    config_path, out.get("workers"), out.get("diagnostics"))
        return out
    except (json.JSONDecodeError, OSError) as e:
        logger.warning("Could not load app config from %s: %s; using defaults", config_path, e)
        return defaults


def _configure_logging(app_config: dict) -> str:
    level = logging.getLevelName(str(app_config.get("logLevel", "INFO")).upper())
    if not isinstance(level, int):
        level = logging.INFO

    formatter = logging.Formatter(
        '%(asctime)s - %(levelname)s - %(name)s - %(message)s'
    )
    # Configure console logging
    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # Configure file logging
    output_base = app_config.get("output_path") or os.getcwd()
    log_dir = os.path.join(output_base, "app-logs")
    os.makedirs(log_dir, exist_ok=True)
    ts = datetime.datetime.now().strftime("%Y%m%d_%H%M%S")
    logfile_path = os.path.join(log_dir, f"fedsim-{ts}.log")

    file_handler = logging.FileHandler(logfile_path, mode='w', encoding='utf-8')
    file_handler.setLevel(level)
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)
    logger.setLevel(level)
    logger.info(f"logging to {logfile_path}")

    for name in LIBRARY_LOGGERS:
        lib_logger = logging.getLogger(name)
        lib_logger.setLevel(level)
        lib_logger.addHandler(console_handler)
        lib_logger.addHandler(file_handler)
        lib_logger.propagate = False  # Don't propagate to root, use our handlers
    return logfile_path


# ---------------- CLI ----------------
def _parse_args(argv=None):
    p = argparse.ArgumentParser(description="Federated nonconvex optimization simulator")
    p.add_argument("--version", action="version", version=APP_VERSION)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run an experiment")
    run.add_argument("--config", default=None, help="Experiment JSON merged over the preset")
    run.add_argument("--preset", default=None, help="Preset name under config/presets")
    run.add_argument("--seeds", default=None, help="Comma-separated seeds, e.g. 0,1,2")
    run.add_argument("--out", default=None, help="Output directory")
    run.add_argument("--workers", type=int, default=None, help="Parallel runs")
    run.add_argument("--no-diagnostics", action="store_true", help="Skip f values and subproblem residuals")

    verify = sub.add_parser("verify", help="Run the estimator and solver oracles")
    verify.add_argument("--report", default=None, help="Write reports to this CSV (or .json) path")
    verify.add_argument("--seed", type=int, default=0, help="Master seed (default: 0)")
    verify.add_argument("--runs", type=int, default=200, help="Runs per variance envelope (default: 200)")
    verify.add_argument("--quick", action="store_true", help="Smaller sample counts")

    summ = sub.add_parser("summarize", help="Threshold table over a trace directory")
    summ.add_argument("--in", dest="in_dir", required=True, help="Directory holding trace CSVs")
    summ.add_argument("--thresholds", default=None, help="Comma-separated grad_norm_sq thresholds")
    summ.add_argument("--out", default=None, help="Output CSV")
    return p.parse_args(argv)


def _cmd_run(args, app_config: dict) -> int:
    if not args.config and not args.preset:
        logger.error("run needs --config or --preset")
        return 2
    defaults = {
        "seeds": app_config["defaultSeeds"],
        "workers": app_config["workers"],
        "diagnostics": app_config["diagnostics"],
        "thresholds": app_config["thresholds"],
    }
    overrides = {
        "seeds": [int(s) for s in args.seeds.split(",") if s.strip()] if args.seeds else None,
        "workers": args.workers,
        "diagnostics": False if args.no_diagnostics else None,
    }
    config = load_experiment_config(args.preset, args.config, overrides, defaults=defaults)
    out_dir = args.out or os.path.join(app_config.get("output_path") or os.getcwd(), config.output_dir, config.name)
    summaries = run_experiment(config, out_dir)
    diverged = sum(s.diverged for s in summaries)
    print(f"[INFO] {len(summaries)} runs written to {out_dir} ({diverged} diverged)")
    return 0


def _cmd_verify(args) -> int:
    reports = run_default_suite(seed=args.seed, runs=args.runs, quick=args.quick)
    if args.report:
        write_reports(reports, args.report)
        logger.info("Wrote %d oracle reports to %s", len(reports), args.report)
    return print_outcome(reports)


def _cmd_summarize(args, app_config: dict) -> int:
    thresholds = parse_thresholds(args.thresholds) if args.thresholds else list(app_config["thresholds"])
    table = summarize(args.in_dir, thresholds, args.out)
    print(table.to_string(index=False))
    return 0


def main(argv=None) -> int:
    args = _parse_args(argv)
    app_config = _load_app_config()
    _configure_logging(app_config)
    logger.info("fedsim %s: %s", APP_VERSION, args.command)
    try:
        if args.command == "run":
            return _cmd_run(args, app_config)
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_summarize(args, app_config)
    except (FedSimError, FileNotFoundError) as e:
        logger.error("%s failed: %s", args.command, e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
