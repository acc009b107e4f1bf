"""Dynamic training-set sampling driven by per-example cost deltas."""

from .config import ExperimentConfig, LearnerConfig
from .criterion import CriterionReport, compute_dif, compute_weights, normalize_criteria
from .errors import (
    ConfigError,
    CorruptCheckpointError,
    DynSampleError,
    InvalidComparisonError,
    InvalidCorpusError,
    InvalidCostError,
    NotReadyError,
    UnknownSentenceError,
)
from .harness import (
    Experiment,
    MetricsRow,
    compare_strategies,
    resume_experiment,
    run_experiment,
    run_noise_experiment,
)
from .learners import DecaySimLearner, SoftmaxSeqLearner, gradient_check
from .ledger import CorpusLedger, Group, SentenceRecord, new_ledger, record_costs, restore, snapshot
from .samplers import (
    IterationPlan,
    SamplerConfig,
    Strategy,
    make_plan,
    sample_full,
    sample_hard_removal,
    sample_rm,
    sample_uniform,
    sample_ws,
    weighted_choice_without_replacement,
)

__version__ = "0.1.0"
