import json
import logging
import zlib

import numpy as np
import pandas as pd
import pytest

import main as fedsim_main
from bench.config import (
    ExperimentConfig, deep_merge, load_experiment_config, load_json, preset_names,
)
from bench.experiment import (
    SUMMARY_FILE, RunSummary, apply_sweep, run_experiment, sweep_label, trace_filename,
)
from bench.summarize import cost_to_reach, load_traces, parse_thresholds, parse_trace_name, summarize
from bench.trace_integrity import TraceCheckConfig, TraceIntegrityChecker
from federated.errors import InvalidConfigError
from federated.trace import TRACE_COLUMNS
from federated.verification import OracleReport
from utils.resource_path import CONFIG_DIR_ENV
from utils.seeding import run_generator, run_key
from version import __version__

TINY = {
    "name": "tiny",
    "problem": {"kind": "quadratic", "seed": 0, "params": {"n": 6, "d": 4, "b": 2}},
    "cost": {"m": 2, "c_a": 1, "c_r": 1},
    "algorithms": [
        {"name": "icgm-rg-saga", "algo": "icgm", "estimator": "rg-saga"},
        {"name": "gd", "algo": "gd"},
    ],
    "seeds": [0, 1],
    "T": 5,
}


def _tiny(**changes):
    return ExperimentConfig.from_dict(deep_merge(TINY, changes))


def _trace_frame(grads, f0=10.0):
    rows = len(grads)
    return pd.DataFrame({
        "round": range(rows),
        "cum_comm": [2.0 * r for r in range(rows)],
        "cum_local": [3 * r for r in range(rows)],
        "grad_norm_sq": grads,
        "f_value": [f0 - r for r in range(rows)],
        "e_t": [float("nan")] * rows,
        "sigma_hat_sq": [float("nan")] * rows,
        "local_steps": [0] + [3] * (rows - 1),
        "n_a": [0] * rows,
        "n_r": list(range(rows)),
        "n_d": list(range(rows)),
    }, columns=list(TRACE_COLUMNS))


# ─── Configuration ─────────────────────────────────────────
@pytest.mark.parametrize("changes", [
    {"colour": "blue"},
    {"problem": {"kind": "cubic"}},
    {"problem": {"kind": "logistic"}},
    {"problem": {"shape": 3}},
    {"algorithms": []},
    {"seeds": []},
    {"seeds": [-1]},
    {"T": 0},
    {"workers": 0},
    {"sweep": {"param": "lam", "values": []}},
])
def test_invalid_experiment_configs(changes):
    with pytest.raises(InvalidConfigError):
        ExperimentConfig.from_dict(deep_merge(TINY, changes))


def test_cost_needs_m():
    with pytest.raises(InvalidConfigError):
        ExperimentConfig.from_dict({**TINY, "cost": {"c_a": 1, "c_r": 1}})


@pytest.mark.parametrize("algorithm", [
    {"name": "x", "algo": "sgd"},
    {"name": "x", "algo": "icgm", "estimator": "sarah"},
    {"name": "x", "algo": "icgm", "params": "guess"},
    {"name": "a__b", "algo": "gd"},
])
def test_invalid_algorithm_specs(algorithm):
    with pytest.raises(InvalidConfigError):
        ExperimentConfig.from_dict({**TINY, "algorithms": [algorithm]})


def test_duplicate_algorithm_names():
    with pytest.raises(InvalidConfigError):
        ExperimentConfig.from_dict({**TINY, "algorithms": [{"name": "gd", "algo": "gd"}] * 2})


def test_deep_merge_recurses_and_replaces_lists():
    base = {"a": {"b": 1, "c": [1, 2]}, "d": 1}
    merged = deep_merge(base, {"a": {"c": [3]}, "e": 2})
    assert merged == {"a": {"b": 1, "c": [3]}, "d": 1, "e": 2}
    assert base["a"]["c"] == [1, 2]


def test_every_preset_loads():
    names = preset_names()
    assert {"fig2", "ablation-CA", "ablation-n", "init-t0", "logreg-mushrooms"} <= set(names)
    for name in names:
        config = load_experiment_config(name)
        assert config.name == name


def test_layering_order(tmp_path):
    path = tmp_path / "mine.json"
    path.write_text(json.dumps({"T": 7, "problem": {"params": {"n": 20}}}), encoding="utf-8")
    config = load_experiment_config("fig2", str(path), overrides={"seeds": None, "workers": 2},
                                    defaults={"seeds": [3], "T": 1})
    assert config.T == 7
    assert config.problem.params == {"alpha": 10.0, "b": 5, "n": 20, "d": 1000}
    assert config.seeds == [3]
    assert config.workers == 2


def test_config_dir_override(tmp_path, monkeypatch):
    presets = tmp_path / "presets"
    presets.mkdir()
    (presets / "custom.json").write_text(json.dumps(TINY), encoding="utf-8")
    monkeypatch.setenv(CONFIG_DIR_ENV, str(tmp_path))
    assert preset_names() == ["custom"]
    assert load_experiment_config("custom").name == "tiny"


def test_load_errors(tmp_path):
    with pytest.raises(InvalidConfigError):
        load_experiment_config("no-such-preset")
    with pytest.raises(FileNotFoundError):
        load_json(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(InvalidConfigError):
        load_json(broken)


def test_apply_sweep():
    config = _tiny(sweep={"param": "cost.c_a", "values": [1, 5]})
    assert apply_sweep(config, 5).cost["c_a"] == 5
    assert config.cost["c_a"] == 1
    assert sweep_label(config, 5) == "cost.c_a-5"
    assert trace_filename("gd", 3, sweep_label(config, 5)) == "gd__seed3__cost.c_a-5.csv"
    assert trace_filename("gd", 3) == "gd__seed3.csv"

    sized = _tiny(sweep={"param": "problem.n", "values": [4]})
    assert apply_sweep(sized, 4).problem.params["n"] == 4
    lam = _tiny(sweep={"param": "lam", "values": [9.0]})
    assert all(a.overrides["lam"] == 9.0 for a in apply_sweep(lam, 9.0).algorithms)


# ─── Runner ────────────────────────────────────────────────
def test_run_experiment_writes_traces_and_summary(tmp_path):
    summaries = run_experiment(_tiny(), str(tmp_path))
    assert [(s.algo, s.seed) for s in summaries] == [
        ("icgm-rg-saga", 0), ("icgm-rg-saga", 1), ("gd", 0), ("gd", 1),
    ]
    assert (tmp_path / "config.json").exists()
    records = json.loads((tmp_path / SUMMARY_FILE).read_text())
    assert set(records[0]) == set(RunSummary.__dataclass_fields__)
    gd = [r for r in records if r["algo"] == "gd"]
    # five full synchronizations of three blocks each
    assert all(r["total_comm"] == 15.0 for r in gd)
    assert not any(r["diverged"] for r in records)

    checker = TraceIntegrityChecker()
    for s in summaries:
        path = tmp_path / trace_filename(s.algo, s.seed)
        assert checker.check(str(path)).passed
        assert len(pd.read_csv(path)) == 6


def test_reruns_are_byte_identical_and_seeds_are_isolated(tmp_path):
    run_experiment(_tiny(), str(tmp_path / "a"))
    run_experiment(_tiny(), str(tmp_path / "b"))
    run_experiment(_tiny(seeds=[1]), str(tmp_path / "c"))
    for name in ("icgm-rg-saga__seed0.csv", "icgm-rg-saga__seed1.csv", "gd__seed1.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "icgm-rg-saga__seed1.csv").read_bytes() == \
        (tmp_path / "c" / "icgm-rg-saga__seed1.csv").read_bytes()
    assert not (tmp_path / "c" / "icgm-rg-saga__seed0.csv").exists()


def test_diverging_run_is_recorded_and_the_batch_continues(tmp_path):
    config = _tiny(T=300, seeds=[0], algorithms=[
        {"name": "gd-hot", "algo": "gd", "overrides": {"step": 10.0}},
        {"name": "gd", "algo": "gd"},
    ])
    with np.errstate(all="ignore"):
        summaries = run_experiment(config, str(tmp_path))
    by_name = {s.algo: s for s in summaries}
    assert by_name["gd-hot"].diverged
    assert not by_name["gd"].diverged
    partial = pd.read_csv(tmp_path / "gd-hot__seed0.csv")
    assert 0 < len(partial) < 301
    assert TraceIntegrityChecker().check_frame(partial).passed


def test_sweep_over_aggregation_cost(tmp_path):
    config = _tiny(seeds=[0], T=8, sweep={"param": "cost.c_a", "values": [1, 5, 20]}, algorithms=[
        {"name": "icgm-rg-saga", "algo": "icgm", "estimator": "rg-saga"},
        {"name": "icgm-rg-svrg", "algo": "icgm", "estimator": "rg-svrg"},
    ])
    summaries = run_experiment(config, str(tmp_path))
    saga = {s.sweep: s.total_comm for s in summaries if s.algo == "icgm-rg-saga"}
    svrg = [s.total_comm for s in summaries if s.algo == "icgm-rg-svrg"]
    # two initial synchronizations of three blocks each
    after_init = {c_a: saga[f"cost.c_a-{c_a}"] - c_a * 6 for c_a in (1, 5, 20)}
    assert len(set(after_init.values())) == 1
    assert svrg == sorted(svrg) and svrg[0] < svrg[-1]
    assert (tmp_path / "icgm-rg-svrg__seed0__cost.c_a-20.csv").exists()


@pytest.mark.slow
def test_parallel_workers_match_serial(tmp_path):
    run_experiment(_tiny(seeds=[0, 1, 2]), str(tmp_path / "serial"))
    run_experiment(_tiny(seeds=[0, 1, 2], workers=2), str(tmp_path / "parallel"))
    for path in sorted((tmp_path / "serial").glob("*__seed*.csv")):
        assert path.read_bytes() == (tmp_path / "parallel" / path.name).read_bytes()


@pytest.mark.slow
def test_rg_saga_reaches_threshold_cheapest_at_desk_scale(tmp_path):
    config = ExperimentConfig.from_dict({
        "name": "fig2-desk",
        "problem": {"kind": "quadratic", "seed": 0, "params": {"alpha": 10.0, "b": 5, "n": 40, "d": 200}},
        "cost": {"m": 4, "c_a": 1, "c_r": 1},
        "algorithms": [
            {"name": "icgm-rg-saga", "algo": "icgm", "estimator": "rg-saga"},
            {"name": "fedavg", "algo": "fedavg", "overrides": {"K": 20, "step": 0.003}},
            {"name": "scaffold", "algo": "scaffold", "overrides": {"K": 20, "step": 0.003}},
            {"name": "gd", "algo": "gd"},
        ],
        "seeds": list(range(10)),
        "T": 600,
        "diagnostics": False,
    })
    run_experiment(config, str(tmp_path))
    costs = {}
    for record in load_traces(tmp_path):
        costs[(record.algo, record.seed)] = cost_to_reach(record.frame, 1e-4)

    def wins(other):
        count = 0
        for seed in config.seeds:
            comm, _, reached = costs[("icgm-rg-saga", seed)]
            other_comm, _, other_reached = costs[(other, seed)]
            count += reached and (not other_reached or comm < other_comm)
        return count

    assert wins("gd") >= 8
    assert wins("fedavg") >= 8
    assert wins("scaffold") >= 8


# ─── Summaries ─────────────────────────────────────────────
def test_cost_to_reach():
    frame = _trace_frame([5.0, 1.0, 0.01])
    assert cost_to_reach(frame, 10.0) == (0.0, 0, True)
    assert cost_to_reach(frame, 0.5) == (4.0, 6, True)
    assert cost_to_reach(frame, 1e-9) == (4.0, 6, False)


def test_summarize_table(tmp_path):
    _trace_frame([1.0, 0.1, 0.001]).to_csv(tmp_path / "a__seed0.csv", index=False)
    _trace_frame([1.0, 0.5, 0.2, 0.05]).to_csv(tmp_path / "a__seed1.csv", index=False)
    broken = _trace_frame([1.0, 0.5])
    broken["round"] = [0, 2]
    broken.to_csv(tmp_path / "b__seed0.csv", index=False)
    (tmp_path / "notes.csv").write_text("x\n1\n", encoding="utf-8")

    table = summarize(tmp_path, [2.0, 0.01])
    assert set(table["algo"]) == {"a"}
    assert (tmp_path / "summary_table.csv").exists()

    easy = table[table["threshold"] == 2.0].iloc[0]
    assert (easy["comm_mean"], easy["reached"], easy["seeds"]) == (0.0, 2, 2)
    hard = table[table["threshold"] == 0.01].iloc[0]
    assert hard["reached"] == 1
    assert (hard["comm_min"], hard["comm_max"], hard["comm_mean"]) == (4.0, 6.0, 5.0)
    assert hard["local_mean"] == pytest.approx(7.5)
    # f* is the smallest objective seen across all traces
    assert hard["initial_gap_mean"] == pytest.approx(3.0)


def test_summary_helpers(tmp_path):
    assert parse_trace_name("icgm-rg-saga__seed3__lam-10.0.csv") == ("icgm-rg-saga", 3, "lam-10.0")
    assert parse_trace_name("gd__seed0.csv") == ("gd", 0, "")
    assert parse_trace_name("summary_table.csv") is None
    assert parse_thresholds("1e-2, 1e-4") == [1e-2, 1e-4]
    with pytest.raises(ValueError):
        parse_thresholds("0.1,-1")
    with pytest.raises(FileNotFoundError):
        load_traces(tmp_path / "missing")


# ─── Trace integrity ───────────────────────────────────────
def test_integrity_checker_flags_each_problem():
    checker = TraceIntegrityChecker()
    assert checker.check_frame(_trace_frame([1.0, 0.5, 0.1])).passed

    decreasing = _trace_frame([1.0, 0.5, 0.1])
    decreasing["cum_comm"] = [0.0, 2.0, 1.0]
    result = checker.check_frame(decreasing)
    assert result.error_counts["decreasing_cumulative"] == 1
    assert result.details["decreasing_at"] == [("cum_comm", 2)]

    gap = _trace_frame([1.0, 0.5, 0.1])
    gap["round"] = [1, 2, 4]
    assert checker.check_frame(gap).error_counts["round_gap"] == 2
    relaxed = TraceIntegrityChecker(TraceCheckConfig(first_round=None))
    assert relaxed.check_frame(gap).error_counts["round_gap"] == 1

    missing = _trace_frame([1.0]).drop(columns=["e_t"])
    result = checker.check_frame(missing)
    assert not result.passed
    assert result.details["missing_columns"] == ["e_t"]


# ─── Seeding ───────────────────────────────────────────────
def test_run_generators_are_keyed():
    a = run_generator(0, "gd").random(4)
    np.testing.assert_array_equal(a, run_generator(0, "gd").random(4))
    assert not np.array_equal(a, run_generator(0, "fedavg").random(4))
    assert not np.array_equal(a, run_generator(1, "gd").random(4))
    assert run_key("gd") == zlib.crc32(b"gd")
    assert run_key(7) == 7
    with pytest.raises(ValueError):
        run_key(-1)
    with pytest.raises(ValueError):
        run_generator(-1)


# ─── Command line ──────────────────────────────────────────
@pytest.fixture
def app_env(tmp_path, monkeypatch):
    """Point the app at a temp config dir and restore the logger state main() changes."""
    config_dir = tmp_path / "cfg"
    config_dir.mkdir()
    base = tmp_path / "base"
    (config_dir / "app_config.json").write_text(json.dumps({"output_path": str(base), "logLevel": "WARNING"}),
                                                encoding="utf-8")
    monkeypatch.setenv(CONFIG_DIR_ENV, str(config_dir))

    names = ("fedsim",) + fedsim_main.LIBRARY_LOGGERS
    saved = {n: (list(logging.getLogger(n).handlers), logging.getLogger(n).propagate, logging.getLogger(n).level)
             for n in names}
    yield base
    for name, (handlers, propagate, level) in saved.items():
        lg = logging.getLogger(name)
        for handler in lg.handlers:
            if handler not in handlers:
                handler.close()
        lg.handlers = handlers
        lg.propagate = propagate
        lg.setLevel(level)


def test_main_run_and_summarize(app_env, tmp_path, capsys):
    config_path = tmp_path / "tiny.json"
    config_path.write_text(json.dumps(TINY), encoding="utf-8")
    out = tmp_path / "out"
    assert fedsim_main.main(["run", "--config", str(config_path), "--out", str(out), "--seeds", "0"]) == 0
    assert (out / SUMMARY_FILE).exists()
    assert (out / "gd__seed0.csv").exists()
    assert not (out / "gd__seed1.csv").exists()
    assert any((app_env / "app-logs").glob("fedsim-*.log"))

    assert fedsim_main.main(["summarize", "--in", str(out), "--thresholds", "0.5"]) == 0
    table = pd.read_csv(out / "summary_table.csv")
    assert set(table["algo"]) == {"gd", "icgm-rg-saga"}
    assert "[INFO] 2 runs written" in capsys.readouterr().out


def test_main_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        fedsim_main.main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_main_default_output_dir(app_env, tmp_path):
    config_path = tmp_path / "tiny.json"
    config_path.write_text(json.dumps({**TINY, "seeds": [0], "T": 2}), encoding="utf-8")
    assert fedsim_main.main(["run", "--config", str(config_path)]) == 0
    assert (app_env / "runs" / "tiny" / SUMMARY_FILE).exists()


def test_main_errors(app_env, tmp_path):
    assert fedsim_main.main(["run"]) == 2
    assert fedsim_main.main(["summarize", "--in", str(tmp_path / "missing")]) == 1
    assert fedsim_main.main(["run", "--preset", "no-such-preset"]) == 1


def test_main_verify_writes_reports(app_env, tmp_path, monkeypatch):
    reports = [OracleReport(name="stub", observed=0.0, reference=0.0, passed=True)]
    monkeypatch.setattr(fedsim_main, "run_default_suite", lambda **kwargs: reports)
    path = tmp_path / "oracles.csv"
    assert fedsim_main.main(["verify", "--report", str(path), "--quick"]) == 0
    assert pd.read_csv(path)["name"].tolist() == ["stub"]
    reports.append(OracleReport(name="bad", observed=1.0, reference=0.0, passed=False))
    assert fedsim_main.main(["verify"]) == 1
