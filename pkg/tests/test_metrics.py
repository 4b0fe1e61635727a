import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lightconv.errors import DataError
from lightconv.metrics import MetricResult, accuracy, keystroke_savings, micro_f1, perplexity, word_prediction_rate

from stubs import OracleLM, PreferLM, TableLM, UniformLM

VOCAB = ["<unk>", "<s>", "hi", "ho", "hat", "he"]


class BigramLM:
    def __init__(self, start, trans):
        self.start, self.trans = np.log(start), np.log(trans)

    def log_probs(self, sentence):
        rows = [self.start] + [self.trans[w] for w in sentence[:-1]]
        return np.array(rows)


def test_perplexity_uniform_and_oracle():
    assert perplexity(UniformLM(4), [[0, 1, 2, 3]]).value == 4.0
    assert perplexity(OracleLM(9), [[3, 1], [8]]).value == 1.0


def test_perplexity_matches_bigram_entropy():
    start = np.array([0.5, 0.5])
    trans = np.array([[0.5, 0.5], [0.25, 0.75]])
    # pairs in exact proportion to start(a) * trans(a, b), scaled by 8
    corpus = [[0, 0]] * 2 + [[0, 1]] * 2 + [[1, 0]] * 1 + [[1, 1]] * 3
    h = lambda p: -sum(x * math.log(x) for x in p)
    per_token = (h(start) + sum(start[a] * h(trans[a]) for a in range(2))) / 2
    assert perplexity(BigramLM(start, trans), corpus).value == pytest.approx(math.exp(per_token), abs=1e-6)


def test_keystroke_savings_single_word():
    vocab = ["<unk>", "<s>", "hello", "hellos"]
    assert keystroke_savings(OracleLM(4), [["hello"]], vocab, n_special=2).value == 80.0
    assert keystroke_savings(PreferLM(4, 3), [["hello"]], vocab, n_special=2).value == 0.0


def test_keystroke_savings_two_word_hand_trace():
    # "hi": offered before the first key and accepted, 1 of 2 chars saved.
    # "hat": the stub keeps offering "ho" until the prefix "ha" leaves only "hat";
    # accepting then saves nothing. Keystrokes in total: 2 + 3 + 1 separator.
    stub = TableLM(len(VOCAB), [2, 3])
    result = keystroke_savings(stub, [["hi", "hat"]], VOCAB, n_special=2)
    assert result.support == 6
    assert result.value == pytest.approx(100 / 6)


def test_keystroke_savings_out_of_vocabulary_word_saves_nothing():
    assert keystroke_savings(OracleLM(len(VOCAB)), [["zebra"]], VOCAB, n_special=2).value == 0.0


def test_wpr_cases():
    assert word_prediction_rate(OracleLM(6), [[2, 3, 4]]).value == 100.0
    assert word_prediction_rate(UniformLM(4), [[0, 0, 0]]).value == 100.0  # ties go to the lowest id
    assert word_prediction_rate(TableLM(5, [2, 3, 1]), [[2, 0, 1]]).value == pytest.approx(200 / 3)


def test_micro_f1_cases():
    assert micro_f1([1, 2, 3], [1, 2, 3]).value == 1.0
    assert micro_f1([1, 2, 3], [2, 3, 1]).value == 0.0
    preds, golds = [0, 1, 2, 2], [0, 1, 1, 0]
    assert micro_f1(preds, golds).value == 0.5 == accuracy(preds, golds).value


def test_micro_f1_ignoring_a_background_label():
    # "O" excluded: tp=1 (B), fp=1 (pred B on O), fn=1 (gold C predicted O)
    result = micro_f1(["B", "B", "O", "O"], ["B", "O", "C", "O"], ignore=["O"])
    assert result.value == pytest.approx(0.5)


def test_accuracy_cases():
    assert accuracy([1, 1], [1, 1]).value == 1.0
    assert accuracy([1, 0, 1, 0], [1, 1, 1, 1]).value == 0.5
    rng = np.random.default_rng(0)
    p, g = rng.integers(0, 3, 50), rng.integers(0, 3, 50)
    assert accuracy(p.tolist(), g.tolist()).value == sum(int(a == b) for a, b in zip(p, g)) / 50


@given(st.lists(st.lists(st.integers(2, 5), min_size=1, max_size=6), min_size=1, max_size=5))
def test_oracle_never_worse_than_uniform(corpus):
    words = [[VOCAB[i] for i in s] for s in corpus]
    good, flat = OracleLM(len(VOCAB)), UniformLM(len(VOCAB))
    assert perplexity(good, corpus).value <= perplexity(flat, corpus).value
    assert word_prediction_rate(good, corpus).value >= word_prediction_rate(flat, corpus).value
    ks_good = keystroke_savings(good, words, VOCAB, 2).value
    assert ks_good >= keystroke_savings(flat, words, VOCAB, 2).value
    assert 0.0 <= ks_good <= 100.0


def test_metrics_are_deterministic():
    lm = TableLM(6, [2, 3, 4, 5])
    corpus = [[2, 3, 4, 5], [3, 3]]
    assert perplexity(lm, corpus) == perplexity(lm, corpus)
    assert keystroke_savings(lm, [["hi", "ho"]], VOCAB, 2) == keystroke_savings(lm, [["hi", "ho"]], VOCAB, 2)


def test_empty_inputs_are_data_errors():
    for call in (lambda: perplexity(UniformLM(3), []), lambda: word_prediction_rate(UniformLM(3), [[]]),
                 lambda: keystroke_savings(UniformLM(3), [], ["a", "b", "c"]), lambda: accuracy([], []),
                 lambda: micro_f1([1], [1, 2])):
        with pytest.raises(DataError):
            call()


def test_render_shows_percentages_for_fractions():
    assert MetricResult("slot_f1", 0.9312, 10).render() == "slot_f1=93.12 (n=10)"
    assert MetricResult("ppl", 24.5, 10).render() == "ppl=24.50 (n=10)"
