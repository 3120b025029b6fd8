# federated/cost_model.py
"""
Client-selection strategies and exact communication/local accounting.

Every client contact goes through a round opened on a CostLedger:
  - ASS (arbitrary subset, cost c_a)
  - RSS (uniform random m-subset, cost c_r)
  - DSS (the fixed delegate set, cost 1)

Communication is c_a*N_A + c_r*N_R + N_D in exact rational arithmetic; local
complexity is the sum over rounds of the largest per-client query count.
"""

import logging
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from federated.errors import AccountingError, InvalidConfigError, InvalidSelectionError

logger = logging.getLogger(__name__)

Rational = Union[int, float, str, Fraction]


def as_fraction(value: Rational) -> Fraction:
    """Exact rational; floats go through their decimal repr so 0.1 stays 1/10."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


class Strategy(str, Enum):
    ARBITRARY = "ASS"
    RANDOM = "RSS"
    DELEGATE = "DSS"


@dataclass(frozen=True)
class CostConfig:
    m: int
    c_a: Fraction = Fraction(1)
    c_r: Fraction = Fraction(1)
    delegate: Tuple[int, ...] = (0,)

    def __post_init__(self):
        object.__setattr__(self, "c_a", as_fraction(self.c_a))
        object.__setattr__(self, "c_r", as_fraction(self.c_r))
        object.__setattr__(self, "delegate", tuple(int(i) for i in self.delegate))
        if not 1 <= self.c_r <= self.c_a:
            raise InvalidConfigError(f"costs must satisfy 1 <= c_r <= c_a, got c_r={self.c_r}, c_a={self.c_a}")
        if self.m < 1:
            raise InvalidConfigError(f"m must be at least 1, got {self.m}")
        if not self.delegate or len(set(self.delegate)) != len(self.delegate):
            raise InvalidConfigError("delegate set must be nonempty with distinct members")
        if len(self.delegate) > self.m:
            raise InvalidConfigError("delegate set larger than m")

    def sync_rounds(self, n: int) -> int:
        """Number of ASS rounds for one full synchronization."""
        return math.ceil(n / self.m)

    def sync_blocks(self, n: int) -> List[Tuple[int, ...]]:
        return [tuple(range(start, min(start + self.m, n))) for start in range(0, n, self.m)]


@dataclass(frozen=True)
class RoundRecord:
    strategy: Strategy
    clients: Tuple[int, ...]
    k_r: int


class RoundHandle:
    """An open communication round; per-client query counts are recorded here."""

    def __init__(self, ledger: "CostLedger", strategy: Strategy, clients: Tuple[int, ...]):
        self._ledger = ledger
        self.strategy = strategy
        self.clients = clients
        self._members = frozenset(clients)
        self._counts: Dict[int, int] = {}
        self._lock = threading.Lock()
        self.closed = False

    def record_queries(self, client: int, k: int = 1) -> None:
        if self.closed:
            raise AccountingError("round already closed")
        if client not in self._members:
            raise AccountingError(f"client {client} is not selected in this {self.strategy.value} round")
        if k < 0:
            raise AccountingError(f"query count must be nonnegative, got {k}")
        with self._lock:
            self._counts[client] = self._counts.get(client, 0) + int(k)

    def queries(self, client: int) -> int:
        return self._counts.get(client, 0)

    @property
    def k_r(self) -> int:
        return max(self._counts.values(), default=0)

    def close(self) -> None:
        self._ledger.close_round(self)

    def __enter__(self) -> "RoundHandle":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if not self.closed:
            self.close()


@dataclass
class CostLedger:
    config: CostConfig
    n: int
    keep_log: bool = True
    n_a: int = 0
    n_r: int = 0
    n_d: int = 0
    local_total: int = 0
    per_round_log: List[RoundRecord] = field(default_factory=list)
    _open: Dict[int, RoundHandle] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.config.m <= self.n:
            raise InvalidConfigError(f"m={self.config.m} must lie in [1, n={self.n}]")
        if any(not 0 <= i < self.n for i in self.config.delegate):
            raise InvalidConfigError(f"delegate set {self.config.delegate} outside [0, {self.n})")

    # --------------------------
    # Selection strategies
    # --------------------------
    def select_arbitrary(self, subset: Iterable[int]) -> RoundHandle:
        members = tuple(int(i) for i in subset)
        if not members:
            raise InvalidSelectionError("empty subset")
        if len(members) > self.config.m:
            raise InvalidSelectionError(f"subset of size {len(members)} exceeds m={self.config.m}")
        if len(set(members)) != len(members):
            raise InvalidSelectionError("subset has repeated clients")
        if any(not 0 <= i < self.n for i in members):
            raise InvalidSelectionError(f"subset {members} has indices outside [0, {self.n})")
        self.n_a += 1
        return self._open_round(Strategy.ARBITRARY, tuple(sorted(members)))

    def select_random(self, rng: np.random.Generator,
                      size: Optional[int] = None) -> Tuple[Tuple[int, ...], RoundHandle]:
        size = self.config.m if size is None else int(size)
        if not 1 <= size <= self.config.m:
            raise InvalidSelectionError(f"sample size {size} outside [1, m={self.config.m}]")
        subset = sample_without_replacement(rng, self.n, size)
        self.n_r += 1
        return subset, self._open_round(Strategy.RANDOM, subset)

    def select_delegate(self) -> RoundHandle:
        self.n_d += 1
        return self._open_round(Strategy.DELEGATE, self.config.delegate)

    def _open_round(self, strategy: Strategy, clients: Tuple[int, ...]) -> RoundHandle:
        handle = RoundHandle(self, strategy, clients)
        self._open[id(handle)] = handle
        return handle

    def close_round(self, handle: RoundHandle) -> None:
        if handle.closed or id(handle) not in self._open:
            raise AccountingError("round is not open on this ledger")
        del self._open[id(handle)]
        handle.closed = True
        k_r = handle.k_r
        self.local_total += k_r
        if self.keep_log:
            self.per_round_log.append(RoundRecord(handle.strategy, handle.clients, k_r))

    # --------------------------
    # Totals
    # --------------------------
    @property
    def open_rounds(self) -> int:
        return len(self._open)

    @property
    def communication(self) -> Fraction:
        return self.config.c_a * self.n_a + self.config.c_r * self.n_r + self.n_d

    def totals(self) -> Tuple[Fraction, int]:
        if self._open:
            raise AccountingError(f"{len(self._open)} round(s) still open")
        return self.communication, self.local_total


def sample_without_replacement(rng: np.random.Generator, n: int, size: int) -> Tuple[int, ...]:
    """Uniform size-subset of range(n) by a partial Fisher-Yates shuffle, sorted."""
    pool = list(range(n))
    for k in range(size):
        j = int(rng.integers(k, n))
        pool[k], pool[j] = pool[j], pool[k]
    return tuple(sorted(pool[:size]))


def full_sync_cost(config: CostConfig, n: int) -> Fraction:
    return config.c_a * config.sync_rounds(n)


def replay(ledger: CostLedger, strategies: Sequence[str], rng: Optional[np.random.Generator] = None) -> Fraction:
    """Open and close one empty round per strategy code ("ASS", "RSS", "DSS")."""
    rng = rng or np.random.default_rng(0)
    for code in strategies:
        strategy = Strategy(code)
        if strategy is Strategy.ARBITRARY:
            handle = ledger.select_arbitrary(ledger.config.delegate)
        elif strategy is Strategy.RANDOM:
            _, handle = ledger.select_random(rng)
        else:
            handle = ledger.select_delegate()
        handle.close()
    return ledger.communication
