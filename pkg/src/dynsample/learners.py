"""Trainable stand-ins that report per-example training costs.

Two learners share one interface:

* :class:`DecaySimLearner` -- a closed-form cost model, ``c + a * exp(-b * n)``
  where ``n`` counts how often an example was trained. Deterministic, so
  sampler behaviour can be checked against exact values.
* :class:`SoftmaxSeqLearner` -- a bigram softmax next-token model trained by
  per-example SGD on synthetic Markov sequences. Costs are summed negative
  log-likelihoods, with real (noisy) optimization dynamics.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import UnknownSentenceError


class Learner(abc.ABC):
    """Interface the harness trains against."""

    #: boolean array, True for injected noise examples
    is_noise: np.ndarray

    @property
    def size(self) -> int:
        return len(self.is_noise)

    def _check_ids(self, ids) -> np.ndarray:
        ids = np.asarray(list(ids), dtype=np.int64)
        bad = ids[(ids < 0) | (ids >= self.size)]
        if bad.size:
            raise UnknownSentenceError(int(bad[0]))
        return ids

    @abc.abstractmethod
    def train_iteration(self, ids: Iterable[int], epochs: int = 1, aggregate: str = "last") -> dict:
        """Train on ``ids`` for ``epochs`` epochs and return their costs.

        ``aggregate`` selects which cost is reported: the one measured after
        the final epoch (``"last"``) or the mean over the epochs (``"mean"``).
        """

    @abc.abstractmethod
    def costs(self, ids: Iterable[int]) -> dict:
        """Current costs of ``ids`` without training."""

    @abc.abstractmethod
    def dev_cost(self) -> float:
        """Mean cost over held-out examples."""

    @abc.abstractmethod
    def token_counts(self, ids: Iterable[int]) -> np.ndarray:
        """Number of scored tokens per example, for per-token cost normalization."""

    @abc.abstractmethod
    def state_dict(self) -> dict:
        """JSON-serializable mutable state (not the dataset)."""

    @abc.abstractmethod
    def load_state_dict(self, state: dict) -> None:
        ...

    @abc.abstractmethod
    def dataset_lines(self) -> list:
        """Plain-text dump of the training data, one example per line."""


def _check_aggregate(aggregate):
    if aggregate not in ("last", "mean"):
        raise ValueError(f"aggregate must be 'last' or 'mean', got {aggregate!r}")


# -- closed-form simulator -----------------------------------------------------


@dataclass(frozen=True)
class DecayGroup:
    """Parameter ranges for one learnability class of simulated examples."""

    name: str
    fraction: float
    rate: tuple
    # overrides the corpus-wide initial-cost range when set
    initial_cost: Optional[tuple] = None


# 30% fast (cheap, learned within a couple of passes), 50% medium, 20% slow / plateaued
DEFAULT_DECAY_GROUPS = (
    DecayGroup("fast", 0.3, (1.5, 3.0), (0.5, 1.5)),
    DecayGroup("medium", 0.5, (0.02, 0.05), (2.0, 6.0)),
    DecayGroup("slow", 0.2, (0.0, 0.002), (2.0, 6.0)),
)


class DecaySimLearner(Learner):
    """Examples whose cost decays exponentially with the number of trainings.

    Example ``x`` has cost ``c[x] + a[x] * exp(-b[x] * n[x])``. ``b = 0``
    makes the cost constant, which is how noise is modelled.

    Dev cost tracks a shared skill level, the fraction of learnable initial
    cost already removed across training examples::

        skill = sum(a * (1 - exp(-b * n))) / sum(a)     over b > 0
        dev   = mean(holdout_c) + mean(holdout_a) * (1 - skill)
    """

    def __init__(self, a, b, c, holdout_a, holdout_c, is_noise=None, labels=None):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        if not (self.a.shape == self.b.shape == self.c.shape) or self.a.ndim != 1:
            raise ValueError("a, b, c must be 1-D arrays of equal length")
        if np.any(self.a <= 0) or np.any(self.b < 0) or np.any(self.c < 0):
            raise ValueError("need a > 0, b >= 0, c >= 0")
        self.holdout_a = np.asarray(holdout_a, dtype=float)
        self.holdout_c = np.asarray(holdout_c, dtype=float)
        n = len(self.a)
        self.is_noise = np.zeros(n, bool) if is_noise is None else np.asarray(is_noise, dtype=bool)
        self.labels = list(labels) if labels is not None else ["-"] * n
        self.counts = np.zeros(n, dtype=np.int64)

    @classmethod
    def synthetic(
        cls,
        n: int,
        rng: np.random.Generator,
        groups: Sequence[DecayGroup] = DEFAULT_DECAY_GROUPS,
        noise_fraction: float = 0.0,
        initial_cost: tuple = (2.0, 6.0),
        floor: tuple = (0.2, 1.0),
        n_holdout: int = 200,
    ) -> "DecaySimLearner":
        """Sample a corpus with the given mix of learnability groups.

        Group sizes are rounded and the last group absorbs the remainder.
        Noise examples are a random ``noise_fraction`` subset whose rate is
        forced to 0.
        """
        sizes = [int(round(g.fraction * n)) for g in groups]
        sizes[-1] = n - sum(sizes[:-1])
        if min(sizes) < 0:
            raise ValueError("group fractions exceed 1")
        b = np.concatenate([rng.uniform(*g.rate, size=s) for g, s in zip(groups, sizes)])
        labels = [g.name for g, s in zip(groups, sizes) for _ in range(s)]
        perm = rng.permutation(n)
        b = b[perm]
        labels = [labels[i] for i in perm]
        a = np.concatenate(
            [rng.uniform(*(g.initial_cost or initial_cost), size=s) for g, s in zip(groups, sizes)]
        )[perm]
        c = rng.uniform(*floor, size=n)
        noise = np.zeros(n, bool)
        n_noise = int(round(noise_fraction * n))
        if n_noise:
            noise[rng.choice(n, size=n_noise, replace=False)] = True
            b[noise] = 0.0
            for i in np.flatnonzero(noise):
                labels[i] = "noise"
        ha = rng.uniform(*initial_cost, size=n_holdout)
        hc = rng.uniform(*floor, size=n_holdout)
        return cls(a, b, c, ha, hc, is_noise=noise, labels=labels)

    def _cost_at(self, ids, counts):
        return self.c[ids] + self.a[ids] * np.exp(-self.b[ids] * counts)

    def train_iteration(self, ids, epochs=1, aggregate="last"):
        _check_aggregate(aggregate)
        ids = self._check_ids(ids)
        start = self.counts[ids].copy()
        self.counts[ids] += epochs
        if aggregate == "last":
            out = self._cost_at(ids, self.counts[ids])
        else:
            steps = np.arange(1, epochs + 1)
            out = self._cost_at(ids[:, None], start[:, None] + steps[None, :]).mean(axis=1)
        return {int(i): float(v) for i, v in zip(ids, out)}

    def costs(self, ids):
        ids = self._check_ids(ids)
        return {int(i): float(v) for i, v in zip(ids, self._cost_at(ids, self.counts[ids]))}

    def skill(self) -> float:
        learnable = self.b > 0
        if not learnable.any():
            return 0.0
        a = self.a[learnable]
        gained = a * (1.0 - np.exp(-self.b[learnable] * self.counts[learnable]))
        return float(gained.sum() / a.sum())

    def dev_cost(self):
        return float(self.holdout_c.mean() + self.holdout_a.mean() * (1.0 - self.skill()))

    def token_counts(self, ids):
        return np.ones(len(self._check_ids(ids)), dtype=np.int64)

    def state_dict(self):
        return {"counts": [int(x) for x in self.counts]}

    def load_state_dict(self, state):
        counts = np.asarray(state["counts"], dtype=np.int64)
        if counts.shape != self.counts.shape:
            raise ValueError("count vector does not match corpus size")
        self.counts = counts

    def dataset_lines(self):
        return [
            f"{self.a[i]:.6g} {self.b[i]:.6g} {self.c[i]:.6g}\t{int(self.is_noise[i])}"
            for i in range(self.size)
        ]


# -- softmax sequence model -----------------------------------------------------


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _flatten(sequences):
    """Pack sequences into (context, target, segment) arrays of all transitions."""
    prev, nxt, seg = [], [], []
    for k, s in enumerate(sequences):
        s = np.asarray(s, dtype=np.int64)
        prev.append(s[:-1])
        nxt.append(s[1:])
        seg.append(np.full(len(s) - 1, k, dtype=np.int64))
    return np.concatenate(prev), np.concatenate(nxt), np.concatenate(seg)


def sequence_nll(W: np.ndarray, seq) -> float:
    """Summed next-token negative log-likelihood of one sequence."""
    seq = np.asarray(seq)
    logits = W[seq[:-1]]
    return float(np.sum(logsumexp(logits, axis=1) - logits[np.arange(len(seq) - 1), seq[1:]]))


def sequence_nll_grad(W: np.ndarray, seq) -> np.ndarray:
    """Gradient of :func:`sequence_nll` with respect to ``W``."""
    seq = np.asarray(seq)
    prev, nxt = seq[:-1], seq[1:]
    logits = W[prev]
    probs = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    probs[np.arange(len(prev)), nxt] -= 1.0
    grad = np.zeros_like(W)
    np.add.at(grad, prev, probs)
    return grad


@dataclass
class MarkovCorpus:
    sequences: list
    is_noise: np.ndarray
    sources: np.ndarray
    holdout: list


def make_markov_corpus(
    n: int,
    rng: np.random.Generator,
    vocab_size: int = 32,
    n_sources: int = 4,
    source_weights: Optional[Sequence[float]] = None,
    concentration: float = 0.3,
    length: tuple = (6, 14),
    noise_fraction: float = 0.0,
    n_holdout: int = 200,
) -> MarkovCorpus:
    """Sample token sequences from a mixture of Markov chains.

    Each source owns a disjoint block of the vocabulary and a transition
    matrix with Dirichlet(``concentration``) rows, so low concentration
    gives near-deterministic (easy) chains. Sources are drawn with
    ``source_weights`` (default halves per source: frequent sources are
    learned first, rare ones later). Noise examples keep their lengths but
    their tokens are shuffled across all noise examples, so transitions
    mostly cross source blocks and no clean model explains them.
    Holdout sequences are always clean.
    """
    if vocab_size < n_sources:
        raise ValueError("need at least one token per source")
    if source_weights is None:
        source_weights = [2.0 ** -s for s in range(n_sources)]
    p_src = np.asarray(source_weights, dtype=float)
    p_src = p_src / p_src.sum()
    blocks = np.array_split(np.arange(vocab_size), n_sources)
    trans = [rng.dirichlet(np.full(len(blk), concentration), size=len(blk)) for blk in blocks]

    def draw(count):
        srcs = rng.choice(n_sources, size=count, p=p_src)
        out = []
        for s in srcs:
            blk, T = blocks[s], trans[s]
            L = int(rng.integers(length[0], length[1] + 1))
            state = int(rng.integers(len(blk)))
            toks = [state]
            for _ in range(L - 1):
                state = int(rng.choice(len(blk), p=T[state]))
                toks.append(state)
            out.append(blk[np.asarray(toks)])
        return out, srcs

    sequences, sources = draw(n)
    noise = np.zeros(n, bool)
    n_noise = int(round(noise_fraction * n))
    if n_noise:
        noise[rng.choice(n, size=n_noise, replace=False)] = True
        idx = np.flatnonzero(noise)
        pooled = rng.permutation(np.concatenate([sequences[i] for i in idx]))
        cuts = np.cumsum([len(sequences[i]) for i in idx])[:-1]
        for i, toks in zip(idx, np.split(pooled, cuts)):
            sequences[i] = toks
    holdout, _ = draw(n_holdout)
    return MarkovCorpus(sequences, noise, np.asarray(sources), holdout)


class SoftmaxSeqLearner(Learner):
    """Bigram softmax model, ``P(next | prev) = softmax(W[prev])``.

    Training makes one SGD step on each selected sequence's summed NLL per
    epoch, visiting sequences in a freshly shuffled order every epoch.
    Parameters start at zero, i.e. the uniform distribution.
    """

    def __init__(self, sequences, vocab_size, holdout, is_noise=None, learning_rate=0.05, rng=None):
        self.sequences = [np.asarray(s, dtype=np.int64) for s in sequences]
        self.holdout = [np.asarray(s, dtype=np.int64) for s in holdout]
        for s in self.sequences + self.holdout:
            if len(s) < 2:
                raise ValueError("every sequence needs at least two tokens")
            if s.min() < 0 or s.max() >= vocab_size:
                raise ValueError("token outside vocabulary")
        self.vocab_size = int(vocab_size)
        self.learning_rate = float(learning_rate)
        self.is_noise = (
            np.zeros(len(self.sequences), bool) if is_noise is None else np.asarray(is_noise, dtype=bool)
        )
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.W = np.zeros((self.vocab_size, self.vocab_size))
        self._lengths = np.array([len(s) - 1 for s in self.sequences], dtype=np.int64)
        self._hold = _flatten(self.holdout) if self.holdout else None
        self._hold_tokens = sum(len(s) - 1 for s in self.holdout)

    @classmethod
    def synthetic(cls, corpus: MarkovCorpus, vocab_size: int, learning_rate=0.05, rng=None):
        return cls(corpus.sequences, vocab_size, corpus.holdout, corpus.is_noise, learning_rate, rng)

    def _step(self, seq):
        prev, nxt = seq[:-1], seq[1:]
        probs = np.exp(_log_softmax(self.W[prev]))
        probs[np.arange(len(prev)), nxt] -= 1.0
        np.add.at(self.W, prev, -self.learning_rate * probs)

    def _batch_costs(self, seqs):
        prev, nxt, seg = _flatten(seqs)
        return self._segment_nll(prev, nxt, seg, len(seqs))

    def _segment_nll(self, prev, nxt, seg, count):
        tok = -_log_softmax(self.W[prev])[np.arange(len(prev)), nxt]
        return np.bincount(seg, weights=tok, minlength=count)

    def train_iteration(self, ids, epochs=1, aggregate="last"):
        _check_aggregate(aggregate)
        ids = self._check_ids(ids)
        seqs = [self.sequences[i] for i in ids]
        running = np.zeros(len(ids))
        for _ in range(epochs):
            for j in self.rng.permutation(len(ids)):
                self._step(seqs[j])
            if aggregate == "mean":
                running += self._batch_costs(seqs)
        out = running / epochs if aggregate == "mean" else self._batch_costs(seqs)
        return {int(i): float(v) for i, v in zip(ids, out)}

    def costs(self, ids):
        ids = self._check_ids(ids)
        out = self._batch_costs([self.sequences[i] for i in ids])
        return {int(i): float(v) for i, v in zip(ids, out)}

    def _holdout_costs(self):
        prev, nxt, seg = self._hold
        return self._segment_nll(prev, nxt, seg, len(self.holdout))

    def dev_cost(self):
        return float(self._holdout_costs().mean())

    def dev_cost_per_token(self) -> float:
        return float(self._holdout_costs().sum() / self._hold_tokens)

    def token_counts(self, ids):
        return self._lengths[self._check_ids(ids)]

    def state_dict(self):
        return {"W": self.W.tolist(), "rng_state": self.rng.bit_generator.state}

    def load_state_dict(self, state):
        W = np.asarray(state["W"], dtype=float)
        if W.shape != self.W.shape:
            raise ValueError("parameter matrix shape mismatch")
        self.W = W
        self.rng.bit_generator.state = state["rng_state"]

    def dataset_lines(self):
        return [
            " ".join(str(t) for t in s) + f"\t{int(f)}" for s, f in zip(self.sequences, self.is_noise)
        ]


def gradient_check(learner: SoftmaxSeqLearner, ids=None, h: float = 1e-5, floor: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks every parameter for every sequence in ``ids`` (default: all), so
    keep the instance small. Relative error per entry is
    ``|g - g_fd| / max(|g| + |g_fd|, floor)``. The floor keeps entries whose
    true gradient is zero from turning finite-difference round-off (about
    1e-10 at ``h = 1e-5``) into a relative error near 1.
    """
    ids = range(learner.size) if ids is None else ids
    W = learner.W.copy()
    worst = 0.0
    for i in ids:
        seq = learner.sequences[i]
        analytic = sequence_nll_grad(W, seq)
        numeric = np.zeros_like(W)
        for idx in np.ndindex(*W.shape):
            orig = W[idx]
            W[idx] = orig + h
            fp = sequence_nll(W, seq)
            W[idx] = orig - h
            fm = sequence_nll(W, seq)
            W[idx] = orig
            numeric[idx] = (fp - fm) / (2 * h)
        denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    return worst
