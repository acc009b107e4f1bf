"""Cost-delta criterion and the sampling weights derived from it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import NotReadyError
from .ledger import CorpusLedger, Group, SentenceRecord


@dataclass(frozen=True)
class CriterionReport:
    dif_min: float
    dif_max: float
    eligible_count: int
    degenerate: bool


def compute_dif(record: SentenceRecord) -> Optional[float]:
    """Relative cost decrease between the two most recent measurements.

    Negative when the cost went up. Returns ``None`` when either cost is
    missing or the previous cost is zero; the latter also sets
    ``record.dif_guarded``.
    """
    if record.prev_cost is None or record.curr_cost is None:
        return None
    if record.prev_cost <= 0.0:
        record.dif_guarded = True
        return None
    return (record.prev_cost - record.curr_cost) / record.prev_cost


def _is_fresh(ledger: CorpusLedger, rec: SentenceRecord) -> bool:
    return rec.last_trained_iteration == ledger.iteration


def normalize_criteria(ledger: CorpusLedger):
    """Min-max normalize this iteration's deltas into criteria in [0, 1].

    Extrema are taken over active records trained in the current iteration
    whose delta is computable. Other active records keep their previous
    criterion, or get 1.0 if they never had one. Demoted records that were
    trained (review draws) get their ``dif`` refreshed but their criterion
    is left alone, since it never feeds back into sampling.

    Returns:
        ``(ledger, CriterionReport)``. The ledger is updated in place.

    Raises:
        NotReadyError: no active record has a fresh computable delta.
    """
    eligible = []
    for rec in ledger.records:
        if not _is_fresh(ledger, rec):
            continue
        d = compute_dif(rec)
        if d is None:
            continue
        rec.dif = d
        if rec.group is Group.ACTIVE:
            eligible.append(rec)
    if not eligible:
        raise NotReadyError(
            f"no active record has two cost measurements at iteration {ledger.iteration}"
        )

    lo = min(r.dif for r in eligible)
    hi = max(r.dif for r in eligible)
    span = hi - lo
    degenerate = span == 0.0
    for rec in eligible:
        # x / x == 1.0 exactly in IEEE arithmetic, so the extremes land on 0 and 1
        rec.criterion = 1.0 if degenerate else (rec.dif - lo) / span

    for rec in ledger.records:
        if rec.group is Group.ACTIVE and rec.criterion is None:
            rec.criterion = 1.0

    return ledger, CriterionReport(lo, hi, len(eligible), degenerate)


def compute_weights(ledger: CorpusLedger) -> dict:
    """Criterion-proportional weights over the active pool.

    Falls back to uniform weights when every active criterion is zero.
    """
    active = [r for r in ledger.records if r.group is Group.ACTIVE]
    if not active:
        raise NotReadyError("no active records to weight")
    missing = [r.id for r in active if r.criterion is None]
    if missing:
        raise NotReadyError(f"{len(missing)} active records have no criterion (first: {missing[0]})")
    total = math.fsum(r.criterion for r in active)
    if total <= 0.0:
        u = 1.0 / len(active)
        return {r.id: u for r in active}
    return {r.id: r.criterion / total for r in active}
