"""Experiment loop: train, record costs, update criteria, sample the next set.

Output directory layout (fixed, so tooling can rely on it)::

    metrics.csv          one row per iteration, deterministic under a seed
    plan.log             one line per sampling event
    timing.csv           wall-clock seconds per iteration (not deterministic)
    config.ini           echo of the effective configuration
    checkpoint.json      latest checkpoint
    checkpoints/         periodic checkpoints, iter_NNNN.json
    noise_trajectory.csv noise fraction per sampling round (noise mode only)
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import config as config_mod
from .config import ExperimentConfig
from .criterion import normalize_criteria
from .errors import CorruptCheckpointError, InvalidComparisonError, NotReadyError
from .learners import DecaySimLearner, Learner, SoftmaxSeqLearner, make_markov_corpus
from .ledger import CorpusLedger, load_checkpoint, new_ledger, record_costs, snapshot
from .samplers import IterationPlan, Strategy, make_plan

METRICS_COLUMNS = (
    "iteration",
    "cumulative_examples_trained",
    "dev_cost",
    "active_count",
    "dlow_count",
    "selected_count",
    "review_count",
    "noise_fraction_in_selected",
)


@dataclass
class MetricsRow:
    iteration: int
    cumulative_examples_trained: int
    dev_cost: float
    active_count: int
    dlow_count: int
    selected_count: int
    review_count: int
    noise_fraction_in_selected: float
    # true when the plan came from a delta-based sampler rather than a warmup/full pass
    sampled: bool = False
    wall_time: float = 0.0

    def csv_fields(self) -> list:
        return [
            str(self.iteration),
            str(self.cumulative_examples_trained),
            f"{self.dev_cost:.6g}",
            str(self.active_count),
            str(self.dlow_count),
            str(self.selected_count),
            str(self.review_count),
            f"{self.noise_fraction_in_selected:.6g}",
        ]


def metrics_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


def build_learner(cfg: ExperimentConfig) -> Learner:
    """Construct the configured learner; all randomness derives from ``cfg.seed``."""
    data_ss, _, learner_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    lc = cfg.learner
    data_rng = np.random.default_rng(data_ss)
    if lc.kind == "decay":
        return DecaySimLearner.synthetic(
            lc.n_examples,
            data_rng,
            groups=lc.decay_groups(),
            noise_fraction=cfg.noise_fraction,
            initial_cost=(lc.initial_cost_min, lc.initial_cost_max),
            floor=(lc.floor_min, lc.floor_max),
            n_holdout=lc.n_holdout,
        )
    corpus = make_markov_corpus(
        lc.n_examples,
        data_rng,
        vocab_size=lc.vocab_size,
        n_sources=lc.n_sources,
        concentration=lc.concentration,
        length=(lc.length_min, lc.length_max),
        noise_fraction=cfg.noise_fraction,
        n_holdout=lc.n_holdout,
    )
    return SoftmaxSeqLearner.synthetic(
        corpus, lc.vocab_size, learning_rate=lc.learning_rate, rng=np.random.default_rng(learner_ss)
    )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    initial_dev_cost: float
    plan_log: list
    ledger: CorpusLedger
    learner: Learner
    completed: bool

    @property
    def metrics_csv(self) -> str:
        return metrics_csv(self.rows)

    def noise_trajectory(self) -> list:
        """Noise fraction among selected examples per sampling round.

        Round 0 is the last full pass before sampling starts (the corpus
        noise level); round ``r`` is the ``r``-th sampling event.
        """
        traj = []
        last_full = None
        for row in self.rows:
            if not row.sampled:
                last_full = row
                continue
            if not traj and last_full is not None:
                traj.append(last_full.noise_fraction_in_selected)
            traj.append(row.noise_fraction_in_selected)
        return traj


class Experiment:
    """A resumable run of the train/record/sample loop."""

    def __init__(self, cfg: ExperimentConfig):
        self.config = cfg
        self.learner = build_learner(cfg)
        _, sampler_ss, _ = np.random.SeedSequence(cfg.seed).spawn(3)
        self.ledger = new_ledger(self.learner.size, sampler_ss, noise_flags=self.learner.is_noise)
        self.rows: list = []
        self.plan_log: list = []
        self.cumulative = 0
        self.initial_dev_cost = self.learner.dev_cost()

    @property
    def done(self) -> bool:
        return self.ledger.iteration >= self.config.total_iterations

    def step(self) -> Optional[MetricsRow]:
        """Run one iteration. Returns the metrics row, or None when off-cadence."""
        cfg = self.config
        started = time.perf_counter()
        plan: IterationPlan = make_plan(self.ledger, cfg.sampler)
        epochs = cfg.sampler.epochs_per_iteration
        costs = self.learner.train_iteration(plan.selected, epochs, cfg.cost_aggregation)
        if cfg.per_token_costs:
            lengths = self.learner.token_counts(list(costs))
            costs = {i: c / max(int(n), 1) for (i, c), n in zip(costs.items(), lengths)}
        record_costs(self.ledger, costs)
        try:
            normalize_criteria(self.ledger)
        except NotReadyError:
            pass
        self.ledger.advance()
        self.cumulative += len(plan) * epochs
        self.plan_log.append(plan.log_line())

        it = self.ledger.iteration
        if it % cfg.metrics_every and it != cfg.total_iterations:
            return None
        noise = self.learner.is_noise[list(plan.selected)]
        row = MetricsRow(
            iteration=it,
            cumulative_examples_trained=self.cumulative,
            dev_cost=self.learner.dev_cost(),
            active_count=len(self.ledger.active_ids),
            dlow_count=self.ledger.demoted_count(),
            selected_count=len(plan),
            review_count=len(plan.from_review),
            noise_fraction_in_selected=float(noise.mean()) if noise.size else 0.0,
            sampled=plan.fallback is None and plan.strategy is not Strategy.FULL,
            wall_time=time.perf_counter() - started,
        )
        self.rows.append(row)
        return row

    # -- checkpointing ---------------------------------------------------------

    def checkpoint(self) -> str:
        extra = {
            "learner": self.learner.state_dict(),
            "rows": [asdict(r) for r in self.rows],
            "plan_log": list(self.plan_log),
            "cumulative": self.cumulative,
            "initial_dev_cost": self.initial_dev_cost,
        }
        return snapshot(self.ledger, self.config.to_dict(), extra)

    @classmethod
    def from_checkpoint(cls, text) -> "Experiment":
        ledger, doc = load_checkpoint(text)
        try:
            cfg = config_mod.from_dict(doc["config"])
            exp = cls(cfg)
            if len(ledger) != exp.learner.size:
                raise CorruptCheckpointError("record count does not match the configured corpus")
            extra = doc["extra"]
            exp.learner.load_state_dict(extra["learner"])
            exp.rows = [MetricsRow(**r) for r in extra["rows"]]
            exp.plan_log = list(extra["plan_log"])
            exp.cumulative = int(extra["cumulative"])
            exp.initial_dev_cost = float(extra["initial_dev_cost"])
        except CorruptCheckpointError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptCheckpointError(f"checkpoint is missing harness state: {exc!r}") from exc
        exp.ledger = ledger
        return exp

    def result(self) -> ExperimentResult:
        return ExperimentResult(
            self.config, list(self.rows), self.initial_dev_cost, list(self.plan_log), self.ledger, self.learner, self.done
        )

    # -- output ------------------------------------------------------------------

    def write_outputs(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "metrics.csv", metrics_csv(self.rows))
        _write(out / "plan.log", "".join(line + "\n" for line in self.plan_log))
        _write(out / "config.ini", config_mod.dumps(self.config))
        timing = ["iteration,wall_time"] + [f"{r.iteration},{r.wall_time:.6g}" for r in self.rows]
        _write(out / "timing.csv", "\n".join(timing) + "\n")
        if self.config.mode == "noise":
            traj = self.result().noise_trajectory()
            lines = ["round,noise_fraction_in_selected"] + [f"{k},{v:.6g}" for k, v in enumerate(traj)]
            _write(out / "noise_trajectory.csv", "\n".join(lines) + "\n")

    def write_checkpoint(self, out_dir, periodic=False) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        text = self.checkpoint()
        _write(out / "checkpoint.json", text)
        if periodic:
            (out / "checkpoints").mkdir(exist_ok=True)
            _write(out / "checkpoints" / f"iter_{self.ledger.iteration:04d}.json", text)
        return out / "checkpoint.json"

    def run(
        self,
        out_dir=None,
        stop_after: Optional[int] = None,
        on_row: Optional[Callable[[MetricsRow], None]] = None,
    ) -> ExperimentResult:
        """Iterate until ``total_iterations`` (or ``stop_after``) are complete.

        With ``out_dir`` set, outputs are rewritten after every iteration so
        a failure leaves partial metrics behind, and checkpoints are written
        every ``checkpoint_every`` iterations plus at the end.
        """
        limit = self.config.total_iterations if stop_after is None else min(stop_after, self.config.total_iterations)
        every = self.config.checkpoint_every
        try:
            while self.ledger.iteration < limit:
                row = self.step()
                if row is not None and on_row is not None:
                    on_row(row)
                if out_dir is not None:
                    self.write_outputs(out_dir)
                    if every and self.ledger.iteration % every == 0:
                        self.write_checkpoint(out_dir, periodic=True)
        finally:
            if out_dir is not None:
                self.write_outputs(out_dir)
                self.write_checkpoint(out_dir)
        return self.result()


def _write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def run_experiment(cfg: ExperimentConfig, out_dir=None, stop_after=None, on_row=None) -> ExperimentResult:
    return Experiment(cfg).run(out_dir, stop_after, on_row)


def resume_experiment(checkpoint, out_dir=None, stop_after=None, on_row=None) -> ExperimentResult:
    """Continue a run from checkpoint text, bytes, or a path to a checkpoint file."""
    if isinstance(checkpoint, (str, os.PathLike)) and not str(checkpoint).lstrip().startswith("{"):
        checkpoint = Path(checkpoint).read_bytes()
    return Experiment.from_checkpoint(checkpoint).run(out_dir, stop_after, on_row)


def run_noise_experiment(cfg: ExperimentConfig, out_dir=None) -> list:
    """Run ``cfg`` in noise mode and return the per-round noise fractions."""
    if cfg.mode != "noise":
        cfg = cfg.replace(experiment={"mode": "noise"})
    return run_experiment(cfg, out_dir).noise_trajectory()


# -- strategy comparison ---------------------------------------------------------


def examples_to_threshold(initial_dev: float, rows: Sequence[MetricsRow], threshold: float) -> Optional[float]:
    """Cumulative examples at which dev cost first reaches ``threshold``.

    Linearly interpolates between the surrounding metric rows; the run's
    starting point is ``(0, initial_dev)``. None if never reached.
    """
    x0, y0 = 0.0, initial_dev
    if y0 <= threshold:
        return 0.0
    for row in rows:
        x1, y1 = float(row.cumulative_examples_trained), row.dev_cost
        if y1 <= threshold:
            return x0 + (x1 - x0) * (y0 - threshold) / (y0 - y1)
        x0, y0 = x1, y1
    return None


def _summary(res: ExperimentResult, threshold: float) -> dict:
    devs = [r.dev_cost for r in res.rows]
    best_idx = int(np.argmin(devs))
    best = devs[best_idx]
    final = devs[-1]
    return {
        "strategy": res.config.sampler.strategy.value,
        "examples_to_threshold": examples_to_threshold(res.initial_dev_cost, res.rows, threshold),
        "best_dev_cost": best,
        "best_iteration": res.rows[best_idx].iteration,
        "final_dev_cost": final,
        "post_best_regression": (final - best) / best if best > 0 else 0.0,
        "total_examples_trained": res.rows[-1].cumulative_examples_trained,
    }


def _comparable_key(cfg: ExperimentConfig) -> dict:
    doc = cfg.to_dict()
    doc["experiment"].pop("output_dir", None)
    doc["experiment"].pop("checkpoint_every", None)
    doc.pop("sampler")
    return doc


def compare_strategies(configs: Sequence[ExperimentConfig], workers: int = 1, threshold: Optional[float] = None) -> dict:
    """Run configs that differ only in sampling and compare learning curves.

    The dev-cost threshold defaults to the midpoint between the initial dev
    cost and the best dev cost of a full-data calibration run under the
    same seed. A full-data config among ``configs`` doubles as calibration.

    Returns a JSON-serializable report with, per strategy, the examples
    needed to reach the threshold, the best dev cost, and the relative
    regression of the final dev cost from the best.
    """
    if len(configs) < 2:
        raise InvalidComparisonError("need at least two configs to compare")
    key = _comparable_key(configs[0])
    for cfg in configs[1:]:
        if _comparable_key(cfg) != key:
            raise InvalidComparisonError("configs must differ only in their sampler section")

    runs = list(configs)
    full_idx = next((k for k, c in enumerate(runs) if c.sampler.strategy is Strategy.FULL), None)
    if full_idx is None:
        runs.append(configs[0].with_strategy(Strategy.FULL))
        full_idx = len(runs) - 1

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_experiment, runs))
    else:
        results = [run_experiment(c) for c in runs]

    calib = results[full_idx]
    if threshold is None:
        best_full = min(r.dev_cost for r in calib.rows)
        threshold = 0.5 * (calib.initial_dev_cost + best_full)

    summaries = [_summary(r, threshold) for r in results[: len(configs)]]
    full_summary = _summary(calib, threshold)
    full_x = full_summary["examples_to_threshold"]
    for s in summaries:
        x = s["examples_to_threshold"]
        s["savings_vs_full"] = None if (x is None or not full_x) else 1.0 - x / full_x
    return {
        "seed": configs[0].seed,
        "threshold": threshold,
        "initial_dev_cost": calib.initial_dev_cost,
        "calibration": full_summary,
        "runs": summaries,
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
