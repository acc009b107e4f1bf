"""Strategies that pick the examples to train in the next iteration."""

from __future__ import annotations

import enum
import hashlib
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .criterion import compute_weights
from .errors import ConfigError, NotReadyError
from .ledger import CorpusLedger, Group

# iterations that must train the full corpus before delta-based sampling has data
WARMUP_ITERATIONS = 2


class Strategy(str, enum.Enum):
    FULL = "full"
    WS = "ws"
    RM = "rm"
    HARD_REMOVAL = "hard_removal"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class SamplerConfig:
    strategy: Strategy = Strategy.WS
    selection_ratio: float = 0.8
    review_fraction: float = 0.1
    epochs_per_iteration: int = 1
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "strategy", Strategy(self.strategy))
        except ValueError:
            choices = ", ".join(s.value for s in Strategy)
            raise ConfigError("sampler.strategy", f"unknown strategy {self.strategy!r} (choose from {choices})")
        if not 0.0 < self.selection_ratio <= 1.0:
            raise ConfigError("sampler.selection_ratio", f"must lie in (0, 1], got {self.selection_ratio}")
        if not 0.0 <= self.review_fraction < 1.0:
            raise ConfigError("sampler.review_fraction", f"must lie in [0, 1), got {self.review_fraction}")
        if int(self.epochs_per_iteration) != self.epochs_per_iteration or self.epochs_per_iteration < 1:
            raise ConfigError(
                "sampler.epochs_per_iteration", f"must be a positive integer, got {self.epochs_per_iteration}"
            )


@dataclass(frozen=True)
class IterationPlan:
    iteration: int
    strategy: Strategy
    selected: tuple
    from_review: tuple = ()
    # why a delta-based strategy trained everything instead ("warmup", "not_ready")
    fallback: Optional[str] = None

    def __len__(self):
        return len(self.selected)

    def selected_hash(self) -> str:
        payload = ",".join(str(i) for i in self.selected).encode("ascii")
        return hashlib.sha256(payload).hexdigest()[:16]

    def log_line(self) -> str:
        """One plan.log record; iterations are numbered from 1 like metrics rows."""
        return (
            f"iteration={self.iteration + 1} strategy={self.strategy.value} "
            f"selected={len(self.selected)} review={len(self.from_review)} "
            f"fallback={self.fallback or '-'} hash={self.selected_hash()}"
        )


def round_half_away(x: float) -> int:
    # 1e-9 absorbs products like 0.1 * 25 landing a hair under .5
    return int(math.floor(abs(x) + 0.5 + 1e-9)) * (1 if x >= 0 else -1)


def selection_size(ratio: float, pool: int) -> int:
    """Number of examples kept from a pool of ``pool``; at least 1 if the pool is nonempty."""
    if pool <= 0:
        return 0
    return min(pool, max(1, round_half_away(ratio * pool)))


def weighted_choice_without_replacement(weights, k: int, rng: np.random.Generator, size: Optional[int] = None):
    """Draw ``k`` distinct indices with probability proportional to ``weights``.

    Each index gets the key ``u ** (1 / w)`` with ``u`` uniform on (0, 1]
    and the ``k`` largest keys win, which matches drawing one item at a
    time proportionally to the remaining weight. Keys are compared in log
    space (``log(u) / w``) to avoid underflow for small weights. Zero
    weights rank below every positive weight and are ordered among
    themselves uniformly at random.

    Args:
        weights: Non-negative 1-D array.
        k: Number of indices to draw, ``0 <= k <= len(weights)``.
        rng: Generator consumed for the draw.
        size: If given, perform ``size`` independent draws and return an
            array of shape ``(size, k)``.

    Returns:
        Array of indices ordered by decreasing key.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise ValueError("weights must be one-dimensional")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    n = w.shape[0]
    if not 0 <= k <= n:
        raise ValueError(f"cannot draw {k} items from {n}")
    shape = (n,) if size is None else (size, n)
    u = 1.0 - rng.random(shape)
    tiebreak = rng.random(shape)
    positive = w > 0
    with np.errstate(divide="ignore"):
        keys = np.where(positive, np.log(u) / np.where(positive, w, 1.0), -np.inf)
    order = np.lexsort((-tiebreak, -keys), axis=-1)
    return order[..., :k]


def _warn_if_demoted(ledger: CorpusLedger):
    n_demoted = ledger.demoted_count()
    if n_demoted:
        warnings.warn(
            f"full sampling skips {n_demoted} demoted records; they are not resurrected",
            RuntimeWarning,
            stacklevel=3,
        )


def sample_full(ledger: CorpusLedger, fallback: Optional[str] = None, strategy: Strategy = Strategy.FULL) -> IterationPlan:
    _warn_if_demoted(ledger)
    return IterationPlan(ledger.iteration, strategy, tuple(ledger.active_ids), (), fallback)


def sample_ws(ledger: CorpusLedger, config: SamplerConfig) -> IterationPlan:
    if ledger.iteration < WARMUP_ITERATIONS:
        return sample_full(ledger, "warmup", Strategy.WS)
    try:
        weights = compute_weights(ledger)
    except NotReadyError:
        return sample_full(ledger, "not_ready", Strategy.WS)
    ids = np.fromiter(weights.keys(), dtype=np.int64)
    w = np.fromiter(weights.values(), dtype=float)
    k = selection_size(config.selection_ratio, len(ids))
    picked = weighted_choice_without_replacement(w, k, ledger.rng)
    return IterationPlan(ledger.iteration, Strategy.WS, tuple(sorted(int(i) for i in ids[picked])))


def sample_rm(ledger: CorpusLedger, config: SamplerConfig) -> IterationPlan:
    """Keep the top-criterion active records and review a slice of the demoted pool.

    Records that fall out of the kept fraction move to the low-criterion
    group for good. A uniform ``review_fraction`` of the whole low group is
    then drawn and trained alongside the kept records.
    """
    if ledger.iteration < WARMUP_ITERATIONS:
        return sample_full(ledger, "warmup", Strategy.RM)
    active = [r for r in ledger.records if r.group is Group.ACTIVE]
    if any(r.criterion is None for r in active):
        return sample_full(ledger, "not_ready", Strategy.RM)

    ranked = sorted(active, key=lambda r: (-r.criterion, r.id))
    k = selection_size(config.selection_ratio, len(ranked))
    for rec in ranked[k:]:
        rec.group = Group.LOW_CRITERION
    high = [r.id for r in ranked[:k]]

    low = np.asarray(ledger.low_ids, dtype=np.int64)
    n_review = min(len(low), round_half_away(config.review_fraction * len(low)))
    review = ()
    if n_review > 0:
        review = tuple(sorted(int(i) for i in ledger.rng.choice(low, size=n_review, replace=False)))
    return IterationPlan(ledger.iteration, Strategy.RM, tuple(sorted(high + list(review))), review)


def sample_hard_removal(ledger: CorpusLedger, config: SamplerConfig) -> IterationPlan:
    """Baseline: permanently drop the lowest-cost fraction of the active pool."""
    if ledger.iteration < 1:
        return sample_full(ledger, "warmup", Strategy.HARD_REMOVAL)
    active = [r for r in ledger.records if r.group is Group.ACTIVE]
    missing = [r.id for r in active if r.curr_cost is None]
    if missing:
        raise NotReadyError(f"{len(missing)} active records have no recorded cost (first: {missing[0]})")
    ranked = sorted(active, key=lambda r: (-r.curr_cost, r.id))
    k = selection_size(config.selection_ratio, len(ranked))
    for rec in ranked[k:]:
        rec.group = Group.REMOVED
    return IterationPlan(ledger.iteration, Strategy.HARD_REMOVAL, tuple(sorted(r.id for r in ranked[:k])))


def sample_uniform(ledger: CorpusLedger, config: SamplerConfig) -> IterationPlan:
    active = np.asarray(ledger.active_ids, dtype=np.int64)
    k = selection_size(config.selection_ratio, len(active))
    picked = ledger.rng.choice(active, size=k, replace=False)
    return IterationPlan(ledger.iteration, Strategy.UNIFORM, tuple(sorted(int(i) for i in picked)))


def make_plan(ledger: CorpusLedger, config: SamplerConfig) -> IterationPlan:
    """Dispatch to the sampler named by ``config.strategy``."""
    strategy = config.strategy
    if strategy is Strategy.FULL:
        return sample_full(ledger)
    if strategy is Strategy.WS:
        return sample_ws(ledger, config)
    if strategy is Strategy.RM:
        return sample_rm(ledger, config)
    if strategy is Strategy.HARD_REMOVAL:
        return sample_hard_removal(ledger, config)
    return sample_uniform(ledger, config)
