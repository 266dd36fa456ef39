"""Pre-training on solving traces.

Two signals shape the feature space. The completeness contrast loss pushes
the scalar score of successive frames apart and anchors the first frame near
0 and the last near 1; for an n-step trace its minimum is 1/(n+1), reached
when frame i scores i/(n+1). The meaning loss pulls the final frame's 50-d
projection toward the puzzle name's embedding. The combined objective puts
0.8 of the weight on the first and 0.2 on the second.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, as_tensor, backward, matmul, mul, reshape, tsum
from .bitmap import stack_images
from .geometry import render_trace
from .network import Adam, CompletenessHead, FeatureExtractor, MeaningHead

EMBED_DIM = 50


def ccl(scores):
    """Completeness contrast loss over a 1-D score vector.

    Built as |A s - b|^2 with a constant (n+1) x n difference matrix, so the
    whole composite differentiates through the ordinary matmul machinery.
    """
    s = as_tensor(scores)
    if s.data.ndim != 1 or s.data.size == 0:
        raise ValueError("ccl expects a nonempty 1-D score vector")
    n = s.data.size
    a = np.zeros((n + 1, n))
    a[0, 0] = 1.0
    for t in range(1, n):
        a[t, t - 1] = 1.0
        a[t, t] = -1.0
    a[n, n - 1] = 1.0
    b = np.zeros((n + 1, 1))
    b[n, 0] = 1.0
    diff = matmul(Tensor(a), reshape(s, (n, 1))) - Tensor(b)
    return tsum(mul(diff, diff))


def pml(pred, target):
    """Squared Euclidean distance between a projection and a name embedding."""
    p, t = as_tensor(pred), as_tensor(target)
    if p.data.shape != t.data.shape:
        raise ValueError(f"pml shape mismatch: {p.data.shape} vs {t.data.shape}")
    diff = p - t
    return tsum(mul(diff, diff))


def _fallback_vector(token):
    # hashlib, not hash(): the latter is salted per process
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.normal(size=EMBED_DIM)
    return v / np.linalg.norm(v)


class EmbeddingTable:
    """Token -> 50-d vector map with a deterministic fallback.

    Tokens absent from the table get a unit vector seeded from a stable hash
    of the token text, so synthetic corpora need no embedding file at all.
    Fallback tokens are recorded in .fallback_tokens for reporting.
    """

    def __init__(self, vectors=None):
        self.vectors = {}
        for token, vec in (vectors or {}).items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (EMBED_DIM,):
                raise ValueError(f"embedding for {token!r} has shape {arr.shape}, "
                                 f"expected ({EMBED_DIM},)")
            self.vectors[token] = arr
        self.fallback_tokens = set()

    def token_vector(self, token):
        if token in self.vectors:
            return self.vectors[token]
        self.fallback_tokens.add(token)
        return _fallback_vector(token)

    def phrase_vector(self, phrase):
        tokens = phrase.lower().split()
        if not tokens:
            raise ValueError(f"cannot embed an empty name: {phrase!r}")
        return np.mean([self.token_vector(t) for t in tokens], axis=0)


def load_embeddings(path):
    """Parse a text table: one token plus 50 floats per line."""
    vectors = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            try:
                values = [float(x) for x in parts[1:]]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric embedding value")
            if len(values) != EMBED_DIM:
                raise ValueError(f"{path}:{lineno}: expected a token and "
                                 f"{EMBED_DIM} floats, got {len(values)} floats")
            vectors[parts[0]] = np.array(values)
    return EmbeddingTable(vectors)


@dataclass
class PretrainConfig:
    epochs: int = 30
    lr: float = 0.001
    ccl_weight: float = 0.8
    pml_weight: float = 0.2
    # which trace variants contribute a meaning loss term
    pml_variants: tuple = ("A", "B")
    seed: int = 0

    def __post_init__(self):
        if abs(self.ccl_weight + self.pml_weight - 1.0) > 1e-12:
            raise ValueError("loss weights must sum to 1")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")


class PretrainModel:
    """Backbone plus both pre-training heads, trained together."""

    def __init__(self, seed=0):
        self.backbone = FeatureExtractor(seed)
        self.completeness = CompletenessHead(seed + 1)
        self.meaning = MeaningHead(seed + 2)

    def named_parameters(self):
        out = {}
        for mod in (self.backbone, self.completeness, self.meaning):
            out.update(mod.named_parameters())
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def scores(self, image_batch):
        """float (N,1,28,28) array -> completeness score Tensor (N,)."""
        return self.completeness(self.backbone(Tensor(image_batch)))


def trace_batch(trace):
    """Rasterize a trace into a float64 (steps, 1, 28, 28) array."""
    return stack_images(render_trace(trace))


def pretrain(traces, embeddings, config, model=None, log_path=None):
    """Train backbone and heads on a trace corpus; returns (model, history).

    One trace is one optimization sample: CCL couples consecutive frames, so
    frames of a trace always travel through the net as a single batch.
    History rows carry per-epoch mean losses; the same rows go to log_path
    as tab-separated text when given.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("pretrain needs at least one trace")
    # resolve every name up front so a bad corpus fails before any training
    targets = [embeddings.phrase_vector(t.embedding_key) for t in traces]
    batches = [trace_batch(t) for t in traces]
    if model is None:
        model = PretrainModel(config.seed)
    optimizer = Adam(model.parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(config.epochs):
        ccl_sum = pml_sum = total_sum = 0.0
        for idx in rng.permutation(len(traces)):
            trace = traces[idx]
            feats = model.backbone(Tensor(batches[idx]))
            loss_c = ccl(model.completeness(feats))
            use_pml = trace.variant in config.pml_variants
            if use_pml:
                # constant selector row picks the final frame differentiably
                last_row = Tensor(np.eye(feats.shape[0])[-1:])
                pred = model.meaning(matmul(last_row, feats))
                loss_p = pml(pred, targets[idx].reshape(1, EMBED_DIM))
            else:
                loss_p = Tensor(0.0)
            total = config.ccl_weight * loss_c + config.pml_weight * loss_p
            ccl_sum += loss_c.item()
            pml_sum += loss_p.item() if use_pml else 0.0
            total_sum += total.item()
            optimizer.zero_grad()
            backward(total)
            optimizer.step()
        n = len(traces)
        history.append({"epoch": epoch, "ccl": ccl_sum / n, "pml": pml_sum / n,
                        "total": total_sum / n})
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("# epoch\tccl\tpml\ttotal\n")
            for row in history:
                fh.write(f"{row['epoch']}\t{row['ccl']:.6f}\t{row['pml']:.6f}"
                         f"\t{row['total']:.6f}\n")
    return model, history


def ordering_accuracy(model, trace):
    """Fraction of frame pairs (i < j) the model scores in trace order."""
    images = trace_batch(trace)
    if images.shape[0] < 2:
        raise ValueError("ordering_accuracy needs a trace with at least 2 steps")
    s = model.scores(images).data
    hits = total = 0
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            hits += s[i] < s[j]
            total += 1
    return hits / total
