"""Per-example training state carried across sampling iterations.

The ledger knows nothing about example content. It keeps, for every example
id, the last two recorded training costs, the derived cost-delta and
criterion, and which pool the example currently belongs to.
"""

from __future__ import annotations

import copy
import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

from .errors import (
    CorruptCheckpointError,
    InvalidCorpusError,
    InvalidCostError,
    UnknownSentenceError,
)

FORMAT_VERSION = "1.0"


class Group(str, enum.Enum):
    ACTIVE = "active"
    # demoted by the review mechanism; reachable again only through review draws
    LOW_CRITERION = "low_criterion"
    # discarded by the hard-removal baseline; never trained again
    REMOVED = "removed"


@dataclass
class SentenceRecord:
    id: int
    prev_cost: Optional[float] = None
    curr_cost: Optional[float] = None
    dif: Optional[float] = None
    criterion: Optional[float] = None
    group: Group = Group.ACTIVE
    last_trained_iteration: Optional[int] = None
    is_noise: bool = False
    # set when a zero previous cost blocked the delta computation
    dif_guarded: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "prev_cost": self.prev_cost,
            "curr_cost": self.curr_cost,
            "dif": self.dif,
            "criterion": self.criterion,
            "group": self.group.value,
            "last_trained_iteration": self.last_trained_iteration,
            "is_noise": self.is_noise,
            "dif_guarded": self.dif_guarded,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SentenceRecord":
        return cls(
            id=int(d["id"]),
            prev_cost=_opt_float(d["prev_cost"]),
            curr_cost=_opt_float(d["curr_cost"]),
            dif=_opt_float(d["dif"]),
            criterion=_opt_float(d["criterion"]),
            group=Group(d["group"]),
            last_trained_iteration=(
                None if d["last_trained_iteration"] is None else int(d["last_trained_iteration"])
            ),
            is_noise=bool(d["is_noise"]),
            dif_guarded=bool(d.get("dif_guarded", False)),
        )


def _opt_float(x):
    return None if x is None else float(x)


@dataclass
class CorpusLedger:
    """All example records plus the iteration counter and sampling RNG.

    ``iteration`` counts *completed* train/record/sample cycles, so the
    iteration currently being trained has index ``iteration``.
    """

    records: list
    iteration: int = 0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def __len__(self):
        return len(self.records)

    def ids_in(self, group: Group) -> list:
        return [r.id for r in self.records if r.group is group]

    @property
    def active_ids(self) -> list:
        return self.ids_in(Group.ACTIVE)

    @property
    def low_ids(self) -> list:
        return self.ids_in(Group.LOW_CRITERION)

    def demoted_count(self) -> int:
        return sum(1 for r in self.records if r.group is not Group.ACTIVE)

    def get(self, sid: int) -> SentenceRecord:
        if not isinstance(sid, (int, np.integer)) or sid < 0 or sid >= len(self.records):
            raise UnknownSentenceError(sid)
        return self.records[sid]

    def advance(self) -> None:
        """Mark the current iteration as complete."""
        self.iteration += 1

    def copy(self) -> "CorpusLedger":
        return copy.deepcopy(self)

    def __eq__(self, other):
        if not isinstance(other, CorpusLedger):
            return NotImplemented
        return (
            self.iteration == other.iteration
            and self.records == other.records
            and self.rng.bit_generator.state == other.rng.bit_generator.state
        )


def new_ledger(n: int, seed, noise_flags=None) -> CorpusLedger:
    """Create a ledger of ``n`` untrained records.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``.
    """
    if n < 1:
        raise InvalidCorpusError(f"corpus must contain at least one example, got n={n}")
    if noise_flags is not None and len(noise_flags) != n:
        raise InvalidCorpusError("noise_flags length does not match n")
    records = [
        SentenceRecord(id=k, is_noise=bool(noise_flags[k]) if noise_flags is not None else False)
        for k in range(n)
    ]
    return CorpusLedger(records=records, iteration=0, rng=np.random.Generator(np.random.PCG64(seed)))


def record_costs(ledger: CorpusLedger, costs: Mapping[int, float]) -> CorpusLedger:
    """Rotate fresh costs into the records named in ``costs``.

    Validation happens before any record is touched, so a bad entry leaves
    the ledger unchanged. Records absent from ``costs`` keep every field.
    """
    checked = []
    for sid, cost in costs.items():
        rec = ledger.get(sid)
        cost = float(cost)
        if not math.isfinite(cost) or cost < 0.0:
            raise InvalidCostError(f"cost for sentence {sid} must be finite and non-negative, got {cost}")
        checked.append((rec, cost))
    for rec, cost in checked:
        rec.prev_cost = rec.curr_cost
        rec.curr_cost = cost
        rec.last_trained_iteration = ledger.iteration
    return ledger


# -- checkpoints -------------------------------------------------------------


def ledger_to_dict(ledger: CorpusLedger) -> dict:
    return {
        "iteration": ledger.iteration,
        "rng_state": ledger.rng.bit_generator.state,
        "records": [r.to_dict() for r in ledger.records],
    }


def ledger_from_dict(doc: Mapping[str, Any]) -> CorpusLedger:
    state = doc["rng_state"]
    bitgen_cls = getattr(np.random, state["bit_generator"])
    bitgen = bitgen_cls()
    bitgen.state = state
    records = [SentenceRecord.from_dict(d) for d in doc["records"]]
    for k, r in enumerate(records):
        if r.id != k:
            raise CorruptCheckpointError(f"record {k} carries id {r.id}")
    if not records:
        raise CorruptCheckpointError("checkpoint holds no records")
    return CorpusLedger(records=records, iteration=int(doc["iteration"]), rng=np.random.Generator(bitgen))


def snapshot(ledger: CorpusLedger, config: Optional[Mapping] = None, extra: Optional[Mapping] = None) -> str:
    """Serialize ``ledger`` to a JSON checkpoint document.

    ``config`` is echoed verbatim; ``extra`` carries caller state (the
    harness stores learner parameters and metrics rows there).
    """
    doc = {"format_version": FORMAT_VERSION, "config": dict(config or {})}
    doc.update(ledger_to_dict(ledger))
    doc["extra"] = dict(extra or {})
    return json.dumps(doc, indent=1, sort_keys=True)


def load_checkpoint(text) -> tuple:
    """Parse a checkpoint, returning ``(ledger, document)``."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptCheckpointError(f"checkpoint is not UTF-8: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptCheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CorruptCheckpointError("checkpoint lacks format_version")
    major = str(doc["format_version"]).split(".")[0]
    if major != FORMAT_VERSION.split(".")[0]:
        raise CorruptCheckpointError(f"unsupported checkpoint format_version {doc['format_version']}")
    try:
        ledger = ledger_from_dict(doc)
    except CorruptCheckpointError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CorruptCheckpointError(f"malformed checkpoint: {exc!r}") from exc
    return ledger, doc


def restore(text) -> CorpusLedger:
    return load_checkpoint(text)[0]
