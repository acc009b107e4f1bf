import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynsample.errors import UnknownSentenceError
from dynsample.learners import (
    DecaySimLearner,
    SoftmaxSeqLearner,
    gradient_check,
    make_markov_corpus,
    sequence_nll,
    sequence_nll_grad,
)


def decay(a, b, c, n_holdout=3):
    return DecaySimLearner(a, b, c, holdout_a=[2.0] * n_holdout, holdout_c=[0.5] * n_holdout)


def test_decay_closed_form_step():
    learner = decay([4.0], [math.log(2)], [0.0])
    assert learner.train_iteration([0]) == {0: pytest.approx(2.0, abs=1e-15)}


def test_zero_rate_cost_is_constant():
    learner = decay([3.0], [0.0], [0.4])
    costs = [learner.train_iteration([0])[0] for _ in range(20)]
    assert costs == [3.4] * 20


def test_decay_epochs_and_mean_aggregation():
    learner = decay([4.0, 4.0], [math.log(2)] * 2, [0.0, 0.0])
    assert learner.train_iteration([0], epochs=3)[0] == pytest.approx(0.5)
    # mean over the epochs' end-of-epoch costs: (2 + 1 + 0.5) / 3
    assert learner.train_iteration([1], epochs=3, aggregate="mean")[1] == pytest.approx(3.5 / 3)
    with pytest.raises(ValueError):
        learner.train_iteration([0], aggregate="median")


def test_decay_dev_asymptote():
    learner = DecaySimLearner([1.0, 2.0], [1.0, 0.5], [0.1, 0.2], holdout_a=[3.0, 5.0], holdout_c=[0.2, 0.4])
    assert learner.dev_cost() == pytest.approx(0.3 + 4.0)
    learner.counts[:] = 10_000
    assert learner.dev_cost() == pytest.approx(0.3, abs=1e-12)


@settings(max_examples=200)
@given(
    st.floats(0.1, 10),
    st.floats(0.0, 3.0),
    st.floats(0.0, 5.0),
    st.integers(0, 20),
    st.integers(1, 5),
)
def test_dif_matches_closed_form(a, b, c, n, dn):
    learner = decay([a], [b], [c])
    if n:
        learner.train_iteration([0], epochs=n)
    prev = learner.costs([0])[0]
    curr = learner.train_iteration([0], epochs=dn)[0]
    expected = (1 - math.exp(-b * dn)) * a * math.exp(-b * n) / (c + a * math.exp(-b * n))
    assert (prev - curr) / prev == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_unknown_id():
    with pytest.raises(UnknownSentenceError):
        decay([1.0], [1.0], [0.0]).train_iteration([1])


def test_decay_synthetic_groups_and_noise():
    learner = DecaySimLearner.synthetic(1000, np.random.default_rng(0), noise_fraction=0.2)
    assert learner.size == 1000
    assert learner.is_noise.sum() == 200
    assert np.all(learner.b[learner.is_noise] == 0)
    assert {"fast", "medium", "slow", "noise"} == set(learner.labels)


def test_decay_state_roundtrip():
    learner = DecaySimLearner.synthetic(50, np.random.default_rng(0))
    learner.train_iteration(range(10), epochs=2)
    clone = DecaySimLearner.synthetic(50, np.random.default_rng(0))
    clone.load_state_dict(learner.state_dict())
    assert clone.dev_cost() == learner.dev_cost()


def two_token(seq=(0, 1, 1, 0, 1), lr=0.1):
    return SoftmaxSeqLearner([list(seq)], 2, holdout=[[0, 1, 0]], learning_rate=lr)


def test_two_token_cost_strictly_decreases():
    learner = two_token()
    costs = [learner.train_iteration([0])[0] for _ in range(5)]
    assert all(x > y for x, y in zip(costs, costs[1:]))
    assert all(np.isfinite(costs)) and min(costs) >= 0


def test_uniform_dev_cost_per_token():
    corpus = make_markov_corpus(30, np.random.default_rng(0), vocab_size=7, n_sources=1, n_holdout=20)
    learner = SoftmaxSeqLearner.synthetic(corpus, 7)
    assert learner.dev_cost_per_token() == pytest.approx(math.log(7), rel=1e-12)


def test_full_training_lowers_dev_cost():
    corpus = make_markov_corpus(300, np.random.default_rng(2), n_holdout=50)
    learner = SoftmaxSeqLearner.synthetic(corpus, 32, rng=np.random.default_rng(3))
    devs = [learner.dev_cost()]
    for _ in range(3):
        learner.train_iteration(range(learner.size))
        devs.append(learner.dev_cost())
    assert all(x > y for x, y in zip(devs, devs[1:]))


def test_gradient_check_random_instance():
    rng = np.random.default_rng(1)
    seqs = [list(rng.integers(0, 5, size=6)) for _ in range(3)]
    learner = SoftmaxSeqLearner(seqs, 5, holdout=[[0, 1]])
    learner.W = rng.normal(size=(5, 5))
    assert gradient_check(learner) < 1e-4


def test_gradient_check_at_zero():
    learner = SoftmaxSeqLearner([[0, 1, 2, 0], [3, 3, 4]], 5, holdout=[[0, 1]])
    assert gradient_check(learner) < 1e-4


def test_binary_gradient_is_sigmoid():
    # one transition 0 -> 1 with V = 2: dNLL/dW[0] = softmax(W[0]) - e_1
    W = np.array([[0.3, -0.4], [0.0, 0.0]])
    p1 = 1.0 / (1.0 + math.exp(-(W[0, 1] - W[0, 0])))
    expected = np.array([[1 - p1, p1 - 1], [0.0, 0.0]])
    np.testing.assert_allclose(sequence_nll_grad(W, [0, 1]), expected, atol=1e-12)
    assert sequence_nll(W, [0, 1]) == pytest.approx(-math.log(p1))


def test_sgd_step_follows_gradient():
    rng = np.random.default_rng(0)
    learner = SoftmaxSeqLearner([[0, 2, 1, 2, 3]], 4, holdout=[[0, 1]], learning_rate=0.05)
    learner.W = rng.normal(size=(4, 4))
    before = learner.W.copy()
    learner._step(learner.sequences[0])
    np.testing.assert_allclose(learner.W, before - 0.05 * sequence_nll_grad(before, learner.sequences[0]), atol=1e-14)


def test_costs_match_sequence_nll():
    corpus = make_markov_corpus(20, np.random.default_rng(0), n_holdout=5)
    learner = SoftmaxSeqLearner.synthetic(corpus, 32)
    learner.W = np.random.default_rng(1).normal(size=(32, 32))
    got = learner.costs(range(20))
    for i, seq in enumerate(learner.sequences):
        assert got[i] == pytest.approx(sequence_nll(learner.W, seq), rel=1e-12)


def test_noise_shuffle_conserves_tokens():
    clean = make_markov_corpus(200, np.random.default_rng(4))
    noisy = make_markov_corpus(200, np.random.default_rng(4), noise_fraction=0.2)
    assert noisy.is_noise.sum() == 40
    idx = np.flatnonzero(noisy.is_noise)
    pooled = np.sort(np.concatenate([noisy.sequences[i] for i in idx]))
    lengths = [len(noisy.sequences[i]) for i in idx]
    assert all(n >= 2 for n in lengths)
    # clean examples keep their source's vocabulary block
    block = 32 // 4
    for i in np.flatnonzero(~noisy.is_noise):
        s = noisy.sequences[i]
        assert len(set(s // block)) == 1
    assert len(pooled) == sum(lengths)
    assert len(clean.sequences) == len(noisy.sequences)


def test_softmax_state_roundtrip():
    corpus = make_markov_corpus(40, np.random.default_rng(0), n_holdout=10)
    a = SoftmaxSeqLearner.synthetic(corpus, 32, rng=np.random.default_rng(5))
    a.train_iteration(range(40))
    b = SoftmaxSeqLearner.synthetic(corpus, 32, rng=np.random.default_rng(99))
    b.load_state_dict(a.state_dict())
    assert a.train_iteration(range(40)) == b.train_iteration(range(40))


def test_dataset_lines_format():
    learner = SoftmaxSeqLearner([[0, 1, 2]], 3, holdout=[[0, 1]], is_noise=[True])
    assert learner.dataset_lines() == ["0 1 2\t1"]
    with pytest.raises(ValueError):
        SoftmaxSeqLearner([[0, 5]], 3, holdout=[[0, 1]])
