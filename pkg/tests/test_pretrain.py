"""Loss formulas, embedding table, and the pre-training loop."""

import numpy as np
import pytest

from tanlab.autodiff import Tensor, backward
from tanlab.geometry import generate_trace
from tanlab.pretrain import (EmbeddingTable, PretrainConfig, PretrainModel, ccl,
                             load_embeddings, ordering_accuracy, pml, pretrain,
                             trace_batch)

from util import numeric_gradient, relative_error


# -- ccl ----------------------------------------------------------------------

def test_ccl_hand_examples():
    assert ccl([0.25, 0.5, 0.75]).item() == pytest.approx(0.25, abs=1e-12)
    assert ccl([0.5]).item() == pytest.approx(0.5, abs=1e-12)
    # 0.2^2 + (0.2-0.9)^2 + (0.9-1)^2
    assert ccl([0.2, 0.9]).item() == pytest.approx(0.54, abs=1e-12)


def test_ccl_rejects_empty_and_non_vector():
    with pytest.raises(ValueError):
        ccl([])
    with pytest.raises(ValueError):
        ccl(np.ones((2, 2)))


def test_ccl_lower_bound_over_random_vectors():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 11))
        value = ccl(rng.random(n)).item()
        assert value >= 1.0 / (n + 1) - 1e-12


def test_ccl_gradient_descent_reaches_minimum():
    """Free score vectors converge to i/(n+1); minimum value is 1/(n+1)."""
    rng = np.random.default_rng(1)
    for trial in range(10):
        n = int(rng.integers(2, 11))
        s = Tensor(rng.random(n), requires_grad=True)
        # hessian eigenvalues of the quadratic live in (0, 8]; 0.2 is stable
        for _ in range(2500):
            s.grad = None
            loss = ccl(s)
            backward(loss)
            s.data -= 0.2 * s.grad
        expect = np.arange(1, n + 1) / (n + 1)
        assert np.allclose(s.data, expect, atol=1e-3)
        assert ccl(s.data).item() == pytest.approx(1.0 / (n + 1), abs=1e-4)


def test_ccl_gradient_matches_finite_differences():
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(1, 9))
        scores = rng.random(n)
        t = Tensor(scores, requires_grad=True)
        backward(ccl(t))
        numeric = numeric_gradient(lambda x: ccl(x).item(), [scores], 0)
        assert relative_error(t.grad, numeric) < 1e-3


# -- pml ----------------------------------------------------------------------

def test_pml_examples_and_errors():
    v = np.random.default_rng(2).normal(size=50)
    assert pml(v, v).item() == 0.0
    w = v.copy()
    w[7] += 1.0
    assert pml(v, w).item() == pytest.approx(1.0, abs=1e-12)
    a = np.random.default_rng(3).normal(size=50)
    b = np.random.default_rng(4).normal(size=50)
    assert pml(a, b).item() == pytest.approx(np.sum((a - b) ** 2), abs=1e-10)
    with pytest.raises(ValueError):
        pml(np.zeros(50), np.zeros(49))


def test_pml_gradient_matches_finite_differences():
    for seed in range(20):
        rng = np.random.default_rng(200 + seed)
        a = rng.normal(size=(1, 50))
        b = rng.normal(size=(1, 50))
        t = Tensor(a, requires_grad=True)
        backward(pml(t, Tensor(b)))
        numeric = numeric_gradient(lambda x, y: pml(x, y).item(), [a, b], 0)
        assert relative_error(t.grad, numeric) < 1e-3


# -- embeddings ---------------------------------------------------------------

def test_fallback_vectors_are_deterministic_unit_and_recorded():
    t1 = EmbeddingTable()
    t2 = EmbeddingTable()
    v1 = t1.token_vector("swan")
    v2 = t2.token_vector("swan")
    assert np.array_equal(v1, v2)
    assert np.linalg.norm(v1) == pytest.approx(1.0, abs=1e-12)
    assert not np.array_equal(v1, t1.token_vector("cat"))
    assert t1.fallback_tokens == {"swan", "cat"}


def test_phrase_vector_averages_tokens():
    rng = np.random.default_rng(5)
    table = EmbeddingTable({"sail": rng.normal(size=50), "boat": rng.normal(size=50)})
    expect = (table.vectors["sail"] + table.vectors["boat"]) / 2
    assert np.allclose(table.phrase_vector("sail boat"), expect)
    assert table.fallback_tokens == set()
    with pytest.raises(ValueError):
        table.phrase_vector("   ")


def test_embedding_table_checks_dimension():
    with pytest.raises(ValueError):
        EmbeddingTable({"x": np.zeros(49)})


def test_load_embeddings_round_trip_and_errors(tmp_path):
    rng = np.random.default_rng(6)
    vec = rng.normal(size=50)
    good = tmp_path / "emb.txt"
    lines = ["bird " + " ".join(f"{x:.6f}" for x in vec), "",
             "fish " + " ".join("0.5" for _ in range(50))]
    good.write_text("\n".join(lines) + "\n")
    table = load_embeddings(good)
    assert set(table.vectors) == {"bird", "fish"}
    assert np.allclose(table.vectors["bird"], np.round(vec, 6), atol=1e-9)

    short = tmp_path / "short.txt"
    short.write_text("ok " + " ".join("0.1" for _ in range(50)) + "\n"
                     "bad " + " ".join("0.1" for _ in range(49)) + "\n")
    with pytest.raises(ValueError, match=":2"):
        load_embeddings(short)

    garbled = tmp_path / "garbled.txt"
    garbled.write_text("word " + " ".join("0.1" for _ in range(49)) + " ouch\n")
    with pytest.raises(ValueError, match=":1"):
        load_embeddings(garbled)


# -- pretrain loop --------------------------------------------------------------

def make_corpus(n=4, n_steps=4):
    return [generate_trace(seed=10 + i, variant="B" if i % 2 else "A",
                           n_steps=n_steps) for i in range(n)]


def weights_equal(a, b):
    pa, pb = a.named_parameters(), b.named_parameters()
    return all(np.array_equal(pa[k].data, pb[k].data) for k in pa)


def test_zero_epochs_keeps_initialization():
    traces = make_corpus(2)
    model, history = pretrain(traces, EmbeddingTable(), PretrainConfig(epochs=0, seed=7))
    assert history == []
    assert weights_equal(model, PretrainModel(seed=7))


def test_pretrain_is_deterministic_per_seed():
    traces = make_corpus(2, n_steps=3)
    cfg = PretrainConfig(epochs=2, seed=3)
    m1, h1 = pretrain(traces, EmbeddingTable(), cfg)
    m2, h2 = pretrain(traces, EmbeddingTable(), cfg)
    assert weights_equal(m1, m2)
    assert h1 == h2


def test_loss_trend_decreases_and_log_is_written(tmp_path):
    traces = make_corpus(4)
    log = tmp_path / "loss.log"
    _, history = pretrain(traces, EmbeddingTable(),
                          PretrainConfig(epochs=6, seed=0), log_path=log)
    assert history[-1]["total"] < history[0]["total"]
    lines = log.read_text().strip().splitlines()
    assert lines[0].startswith("#")
    assert len(lines) == 7
    cols = lines[1].split("\t")
    assert len(cols) == 4 and cols[0] == "0"


def test_single_trace_ccl_approaches_minimum():
    trace = generate_trace(seed=11, variant="B", n_steps=3)
    _, history = pretrain([trace], EmbeddingTable(),
                          PretrainConfig(epochs=150, lr=0.01, seed=1))
    assert history[-1]["ccl"] == pytest.approx(0.25, abs=1e-2)


def test_pml_variant_toggle_changes_loss_only_for_that_variant():
    traces = make_corpus(2, n_steps=3)  # one A, one B
    cfg_none = PretrainConfig(epochs=1, seed=5, pml_variants=())
    _, hist = pretrain(traces, EmbeddingTable(), cfg_none)
    assert hist[0]["pml"] == 0.0
    cfg_b = PretrainConfig(epochs=1, seed=5, pml_variants=("B",))
    _, hist_b = pretrain(traces, EmbeddingTable(), cfg_b)
    assert hist_b[0]["pml"] > 0.0


def test_pretrain_rejects_unresolvable_name():
    trace = generate_trace(seed=12, variant="B", n_steps=3)
    trace.embedding_key = "  "
    with pytest.raises(ValueError):
        pretrain([trace], EmbeddingTable(), PretrainConfig(epochs=1, seed=0))


# -- ordering accuracy ----------------------------------------------------------

class StubScorer:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def scores(self, image_batch):
        return Tensor(self.values[:image_batch.shape[0]])


def test_ordering_accuracy_extremes():
    trace = generate_trace(seed=13, variant="B", n_steps=4)
    n = len(trace.steps)
    assert ordering_accuracy(StubScorer(np.arange(n)), trace) == 1.0
    assert ordering_accuracy(StubScorer(-np.arange(n)), trace) == 0.0


def test_ordering_accuracy_random_scorer_near_half():
    rng = np.random.default_rng(8)
    traces = [generate_trace(seed=20 + i, variant="B", n_steps=7) for i in range(12)]
    vals = [ordering_accuracy(StubScorer(rng.random(len(t.steps))), t) for t in traces]
    assert abs(np.mean(vals) - 0.5) < 0.12


def test_trace_batch_shape():
    trace = generate_trace(seed=14, variant="A", n_steps=3)
    batch = trace_batch(trace)
    assert batch.shape == (len(trace.steps), 1, 28, 28)
    assert set(np.unique(batch)).issubset({0.0, 1.0})
