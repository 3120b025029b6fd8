import itertools
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from federated.cost_model import (
    CostConfig, CostLedger, Strategy, as_fraction, full_sync_cost, replay, sample_without_replacement,
)
from federated.errors import AccountingError, InvalidConfigError, InvalidSelectionError
from federated.estimators import full_synchronization


def test_as_fraction_keeps_decimal_floats_exact():
    assert as_fraction(0.1) == Fraction(1, 10)
    assert as_fraction("5/2") == Fraction(5, 2)
    assert as_fraction(3) == Fraction(3)


@pytest.mark.parametrize("kwargs", [
    {"m": 2, "c_a": 1, "c_r": 2},
    {"m": 2, "c_a": 2, "c_r": 0.5},
    {"m": 0},
    {"m": 2, "delegate": ()},
    {"m": 2, "delegate": (1, 1)},
    {"m": 1, "delegate": (0, 1)},
])
def test_cost_config_validation(kwargs):
    with pytest.raises(InvalidConfigError):
        CostConfig(**kwargs)


def test_ledger_rejects_m_above_n_and_foreign_delegate():
    with pytest.raises(InvalidConfigError):
        CostLedger(CostConfig(m=5), n=4)
    with pytest.raises(InvalidConfigError):
        CostLedger(CostConfig(m=2, delegate=(7,)), n=4)


def test_communication_is_weighted_round_count():
    ledger = CostLedger(CostConfig(m=2, c_a=3, c_r=2), n=5)
    rng = np.random.default_rng(0)
    ledger.select_arbitrary([4, 1]).close()
    for _ in range(2):
        _, handle = ledger.select_random(rng)
        handle.close()
    ledger.select_delegate().close()
    assert (ledger.n_a, ledger.n_r, ledger.n_d) == (1, 2, 1)
    assert ledger.totals() == (Fraction(3 + 2 * 2 + 1), 0)


def test_local_complexity_is_sum_of_per_round_maxima():
    ledger = CostLedger(CostConfig(m=3), n=4)
    with ledger.select_arbitrary([0, 2, 3]) as handle:
        handle.record_queries(0, 2)
        handle.record_queries(2, 5)
        handle.record_queries(0, 1)
    with ledger.select_delegate() as handle:
        handle.record_queries(0, 4)
    assert ledger.local_total == 5 + 4
    assert [r.k_r for r in ledger.per_round_log] == [5, 4]
    assert ledger.per_round_log[0].strategy is Strategy.ARBITRARY
    assert ledger.per_round_log[0].clients == (0, 2, 3)


@pytest.mark.parametrize("subset", [[], [0, 1, 2], [1, 1], [0, 9]])
def test_bad_arbitrary_subsets(subset):
    ledger = CostLedger(CostConfig(m=2), n=4)
    with pytest.raises(InvalidSelectionError):
        ledger.select_arbitrary(subset)
    assert ledger.n_a == 0


def test_random_sample_size_bounds():
    ledger = CostLedger(CostConfig(m=2), n=4)
    rng = np.random.default_rng(0)
    with pytest.raises(InvalidSelectionError):
        ledger.select_random(rng, size=3)
    subset, handle = ledger.select_random(rng, size=1)
    handle.close()
    assert len(subset) == 1


def test_accounting_errors():
    ledger = CostLedger(CostConfig(m=2), n=4)
    handle = ledger.select_arbitrary([0, 1])
    with pytest.raises(AccountingError):
        handle.record_queries(3)
    with pytest.raises(AccountingError):
        handle.record_queries(0, -1)
    with pytest.raises(AccountingError):
        ledger.totals()
    handle.close()
    with pytest.raises(AccountingError):
        handle.close()
    with pytest.raises(AccountingError):
        handle.record_queries(0)
    other = CostLedger(CostConfig(m=2), n=4)
    with pytest.raises(AccountingError):
        other.close_round(ledger.select_delegate())


@given(st.integers(min_value=1, max_value=30), st.data())
def test_sample_without_replacement_returns_sorted_distinct(n, data):
    size = data.draw(st.integers(min_value=1, max_value=n))
    seed = data.draw(st.integers(min_value=0, max_value=2**32 - 1))
    subset = sample_without_replacement(np.random.default_rng(seed), n, size)
    assert len(subset) == size
    assert list(subset) == sorted(set(subset))
    assert all(0 <= i < n for i in subset)


@pytest.mark.parametrize("n, m", [(5, 2), (6, 3)])
def test_sample_without_replacement_is_uniform_over_subsets(n, m):
    rng = np.random.default_rng(7)
    draws = 100_000
    counts = Counter(sample_without_replacement(rng, n, m) for _ in range(draws))
    subsets = list(itertools.combinations(range(n), m))
    assert set(counts) == set(subsets)
    _, p_value = stats.chisquare([counts[s] for s in subsets])
    assert p_value > 0.001


def test_empty_ledger_and_max_rule():
    ledger = CostLedger(CostConfig(m=2), n=4)
    assert ledger.totals() == (0, 0)
    subset, handle = ledger.select_random(np.random.default_rng(0))
    with handle:
        handle.record_queries(subset[0], 3)
        handle.record_queries(subset[1], 5)
    assert ledger.totals()[1] == 5


@given(st.lists(st.sampled_from(["ASS", "RSS", "DSS"]), min_size=1, max_size=12), st.data())
def test_swapping_rss_for_ass_never_lowers_communication(codes, data):
    if "RSS" not in codes:
        return
    pos = data.draw(st.sampled_from([i for i, c in enumerate(codes) if c == "RSS"]))
    swapped = codes[:pos] + ["ASS"] + codes[pos + 1:]
    config = CostConfig(m=2, c_a=data.draw(st.integers(2, 9)), c_r=1)
    before = replay(CostLedger(config, n=4), codes)
    after = replay(CostLedger(config, n=4), swapped)
    assert after >= before


def test_totals_ignore_recording_order():
    def run(order):
        ledger = CostLedger(CostConfig(m=3), n=3)
        with ledger.select_arbitrary([0, 1, 2]) as handle:
            for client, k in order:
                handle.record_queries(client, k)
        return ledger.totals()

    order = [(0, 2), (1, 4), (2, 1), (1, 1)]
    assert run(order) == run(list(reversed(order))) == (1, 5)


def test_full_synchronization_cost(small_problem):
    config = CostConfig(m=4, c_a=3)
    ledger = CostLedger(config, small_problem.n)
    grads = full_synchronization(small_problem, np.ones(small_problem.dim), ledger)
    assert grads.shape == (small_problem.n, small_problem.dim)
    assert ledger.n_a == config.sync_rounds(small_problem.n) == 2
    assert ledger.communication == full_sync_cost(config, small_problem.n) == 6
    assert ledger.local_total == 2
    assert config.sync_blocks(6) == [(0, 1, 2, 3), (4, 5)]


def test_replay_charges_one_round_per_code():
    ledger = CostLedger(CostConfig(m=2, c_a=5, c_r=2), n=4)
    assert replay(ledger, ["ASS", "RSS", "DSS", "DSS"]) == 5 + 2 + 1 + 1
    with pytest.raises(ValueError):
        replay(ledger, ["XSS"])
