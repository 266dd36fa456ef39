"""N-way-K-shot recognition on 28x28 binary glyphs.

Four ways to use a backbone on episodes: a frozen-feature logistic probe,
ANIL (inner loop adapts the head only), first-order MAML (inner loop adapts
everything), and prototypical networks. The synthetic GlyphDataset stands in
for external handwriting corpora; load_image_folder ingests real ones laid
out as class-name directories.
"""

import warnings
from pathlib import Path

import numpy as np

from .autodiff import (Tensor, add, backward, conv2d, cross_entropy, matmul,
                       maxpool2, mul, relu, reshape, transpose, tsum)
from .bitmap import BinaryImage, read_pbm, resize_nearest, stack_images
from .network import Adam, FeatureExtractor, Linear


class ImageDataset:
    """Classes mapped to lists of BinaryImage samples."""

    def __init__(self, by_class):
        if not by_class:
            raise ValueError("dataset needs at least one class")
        self.by_class = {name: list(images) for name, images in by_class.items()}
        self.class_names = sorted(self.by_class)

    @property
    def n_classes(self):
        return len(self.class_names)

    def samples(self, name):
        return self.by_class[name]


def _render_strokes(points, thickness):
    """Pixels within `thickness` of the polyline through `points`."""
    ys, xs = np.mgrid[0:28, 0:28]
    px, py = xs + 0.5, ys + 0.5
    dist = np.full((28, 28), np.inf)
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        dx, dy = x1 - x0, y1 - y0
        len2 = dx * dx + dy * dy
        if len2 < 1e-12:
            d = np.hypot(px - x0, py - y0)
        else:
            t = np.clip(((px - x0) * dx + (py - y0) * dy) / len2, 0.0, 1.0)
            d = np.hypot(px - (x0 + t * dx), py - (y0 + t * dy))
        dist = np.minimum(dist, d)
    return BinaryImage(dist <= thickness)


def _glyph_skeleton(rng):
    count = int(rng.integers(4, 7))
    pts = [rng.uniform(6.0, 22.0, 2)]
    while len(pts) < count:
        step = rng.uniform(6.0, 13.0)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        nxt = pts[-1] + step * np.array([np.cos(angle), np.sin(angle)])
        if 4.0 <= nxt[0] <= 24.0 and 4.0 <= nxt[1] <= 24.0:
            pts.append(nxt)
    return np.array(pts)


class GlyphDataset(ImageDataset):
    """Seeded stroke-polyline glyphs.

    Every class is one skeleton of 4-6 connected strokes centered on the
    image; samples rotate, shift, and jitter the skeleton and vary the
    stroke thickness. Centering keeps absolute position from identifying a
    class, so recognition has to rest on stroke shape. The default
    augmentation strength puts a frozen random backbone with a logistic
    probe near 60% on 5-way-5-shot: hard enough that better features show,
    easy enough that the classes stay learnable.
    """

    def __init__(self, n_classes=30, samples_per_class=20, seed=0,
                 jitter=1.15, max_turn=42.0, max_shift=2.0):
        rng = np.random.default_rng(seed)
        by_class = {}
        base_masks = []
        for c in range(n_classes):
            # resample until the new skeleton is visibly unlike every earlier
            # class, so episode difficulty comes from the augmentation rather
            # than from near-duplicate classes
            for _ in range(200):
                base = _glyph_skeleton(rng)
                base = base - base.mean(axis=0) + np.array([14.0, 14.0])
                mask = _render_strokes(base, 1.5).bits
                if all((mask & m).sum() / max((mask | m).sum(), 1) < 0.45
                       for m in base_masks):
                    break
            base_masks.append(mask)
            thickness = 1.3 + 0.4 * rng.random()
            samples = []
            for _ in range(samples_per_class):
                t = np.radians(rng.uniform(-max_turn, max_turn))
                rot = np.array([[np.cos(t), -np.sin(t)],
                                [np.sin(t), np.cos(t)]])
                pts = (base - 14.0) @ rot.T + 14.0
                pts = pts + rng.uniform(-max_shift, max_shift, 2)
                pts = pts + rng.normal(0.0, jitter, pts.shape)
                samples.append(_render_strokes(
                    pts, thickness + rng.uniform(-0.15, 0.15)))
            by_class[f"glyph_{c:02d}"] = samples
        super().__init__(by_class)
        self.seed = seed


class Episode:
    """An N-way-K-shot task: labeled support and query sets over N classes."""

    def __init__(self, n_way, k_shot, q_queries, support_images, support_labels,
                 query_images, query_labels, class_names=None):
        self.n_way = int(n_way)
        self.k_shot = int(k_shot)
        self.q_queries = int(q_queries)
        self.support_images = list(support_images)
        self.support_labels = np.asarray(support_labels, dtype=np.int64)
        self.query_images = list(query_images)
        self.query_labels = np.asarray(query_labels, dtype=np.int64)
        self.class_names = list(class_names) if class_names else None
        if len(self.support_images) != self.n_way * self.k_shot:
            raise ValueError("support size must be N*K")
        if len(self.query_images) != self.n_way * self.q_queries:
            raise ValueError("query size must be N*Q")
        want = set(range(self.n_way))
        if set(self.support_labels) != want or set(self.query_labels) != want:
            raise ValueError("support and query must cover the same N classes")
        support_ids = {id(img) for img in self.support_images}
        if any(id(img) in support_ids for img in self.query_images):
            raise ValueError("an image appears in both support and query")


def sample_episode(dataset, n_way, k_shot, q_queries, seed):
    """Draw classes and samples uniformly without replacement."""
    need = k_shot + q_queries
    eligible = [name for name in dataset.class_names
                if len(dataset.samples(name)) >= need]
    if len(eligible) < n_way:
        raise ValueError(
            f"need {n_way} classes with >= {need} samples, found {len(eligible)}")
    rng = np.random.default_rng(seed)
    chosen = [eligible[i] for i in rng.choice(len(eligible), n_way, replace=False)]
    support_images, support_labels = [], []
    query_images, query_labels = [], []
    for label, name in enumerate(chosen):
        pool = dataset.samples(name)
        picks = rng.choice(len(pool), need, replace=False)
        for i in picks[:k_shot]:
            support_images.append(pool[i])
            support_labels.append(label)
        for i in picks[k_shot:]:
            query_images.append(pool[i])
            query_labels.append(label)
    return Episode(n_way, k_shot, q_queries, support_images, support_labels,
                   query_images, query_labels, class_names=chosen)


# -- models ---------------------------------------------------------------------

def clone_backbone(backbone):
    """An independent FeatureExtractor carrying the same weights."""
    twin = FeatureExtractor(0)
    source = backbone.named_parameters()
    for name, tensor in twin.named_parameters().items():
        tensor.data = source[name].data.copy()
    return twin


class FewShotModel:
    """Backbone plus an N-way linear head."""

    def __init__(self, backbone, n_way, seed=0):
        self.backbone = backbone
        self.n_way = n_way
        self.head = Linear("head", 64, n_way, np.random.default_rng(seed))

    def named_parameters(self):
        out = dict(self.backbone.named_parameters())
        out.update(self.head.named_parameters())
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def logits(self, batch):
        return self.head(self.backbone(Tensor(batch)))


def _functional_logits(params, batch):
    """model.logits rebuilt from a name -> Tensor mapping (fast weights)."""
    x = Tensor(batch)
    for i in (1, 2, 3, 4):
        x = maxpool2(relu(conv2d(x, params[f"conv{i}.w"], params[f"conv{i}.b"])))
    feats = reshape(x, (x.shape[0], 64))
    return add(matmul(feats, params["head.w"]), params["head.b"])


# -- frozen-feature probe ---------------------------------------------------------

def logistic_probe(backbone, episode, steps=100, lr=0.05):
    """Fit an N-class logistic head on frozen support features.

    The problem is convex, so the head starts at zero and the whole fit is
    deterministic. Returns query accuracy.
    """
    support = backbone(Tensor(stack_images(episode.support_images))).data
    query = backbone(Tensor(stack_images(episode.query_images))).data
    w = Tensor(np.zeros((64, episode.n_way)), requires_grad=True)
    b = Tensor(np.zeros(episode.n_way), requires_grad=True)
    optimizer = Adam([w, b], lr=lr)
    feats = Tensor(support)
    for _ in range(steps):
        loss = cross_entropy(add(matmul(feats, w), b), episode.support_labels)
        optimizer.zero_grad()
        backward(loss)
        optimizer.step()
    predicted = np.argmax(query @ w.data + b.data, axis=1)
    return float(np.mean(predicted == episode.query_labels))


# -- ANIL and first-order MAML -----------------------------------------------------

def adapt_head(model, episode, inner_steps=5, inner_lr=0.01):
    """Task-specific head: gradient steps on detached support features.

    Touches neither the backbone nor the stored head; returns fresh leaf
    tensors (fast weights) so an outer loop can differentiate through the
    query loss first-order.
    """
    feats = Tensor(model.backbone(Tensor(stack_images(episode.support_images))).data)
    fast_w = Tensor(model.head.w.data.copy(), requires_grad=True)
    fast_b = Tensor(model.head.b.data.copy(), requires_grad=True)
    for _ in range(inner_steps):
        loss = cross_entropy(add(matmul(feats, fast_w), fast_b),
                             episode.support_labels)
        backward(loss)
        fast_w = Tensor(fast_w.data - inner_lr * fast_w.grad, requires_grad=True)
        fast_b = Tensor(fast_b.data - inner_lr * fast_b.grad, requires_grad=True)
    return fast_w, fast_b


def adapted_query_accuracy(model, episode, inner_steps=5, inner_lr=0.01):
    """Adapt the head on the support set, then score the queries."""
    fast_w, fast_b = adapt_head(model, episode, inner_steps, inner_lr)
    query = model.backbone(Tensor(stack_images(episode.query_images))).data
    predicted = np.argmax(query @ fast_w.data + fast_b.data, axis=1)
    return float(np.mean(predicted == episode.query_labels))


def _as_dataset_list(datasets):
    return [datasets] if isinstance(datasets, ImageDataset) else list(datasets)


def anil_meta_train(backbone, datasets, episodes, inner_steps=5, inner_lr=0.01,
                    seed=0, n_way=5, k_shot=5, q_queries=5, outer_lr=0.001):
    """Meta-train by adapting only the head per episode.

    The inner loop runs on detached support features, so backbone gradients
    come exclusively from the outer query loss. First-order: the adapted
    head's gradients are applied to the stored head directly.
    """
    datasets = _as_dataset_list(datasets)
    model = FewShotModel(clone_backbone(backbone), n_way, seed)
    params = model.named_parameters()
    optimizer = Adam(list(params.values()), lr=outer_lr)
    rng = np.random.default_rng(seed)
    for _ in range(episodes):
        dataset = datasets[int(rng.integers(len(datasets)))]
        episode = sample_episode(dataset, n_way, k_shot, q_queries,
                                 int(rng.integers(2 ** 31)))
        fast_w, fast_b = adapt_head(model, episode, inner_steps, inner_lr)
        query = model.backbone(Tensor(stack_images(episode.query_images)))
        loss = cross_entropy(add(matmul(query, fast_w), fast_b),
                             episode.query_labels)
        optimizer.zero_grad()
        backward(loss)
        model.head.w.grad = fast_w.grad
        model.head.b.grad = fast_b.grad
        optimizer.step()
    return model


def fomaml_meta_train(backbone, datasets, episodes, inner_steps=5,
                      inner_lr=0.01, seed=0, n_way=5, k_shot=5, q_queries=5,
                      outer_lr=0.001):
    """First-order MAML: the inner loop adapts every parameter.

    With inner_steps=0 this is plain supervised training on query batches.
    """
    datasets = _as_dataset_list(datasets)
    model = FewShotModel(clone_backbone(backbone), n_way, seed)
    params = model.named_parameters()
    optimizer = Adam(list(params.values()), lr=outer_lr)
    rng = np.random.default_rng(seed)
    for _ in range(episodes):
        dataset = datasets[int(rng.integers(len(datasets)))]
        episode = sample_episode(dataset, n_way, k_shot, q_queries,
                                 int(rng.integers(2 ** 31)))
        support = stack_images(episode.support_images)
        query = stack_images(episode.query_images)
        fast = {name: Tensor(p.data.copy(), requires_grad=True)
                for name, p in params.items()}
        for _ in range(inner_steps):
            loss = cross_entropy(_functional_logits(fast, support),
                                 episode.support_labels)
            backward(loss)
            fast = {name: Tensor(t.data - inner_lr * t.grad, requires_grad=True)
                    for name, t in fast.items()}
        loss = cross_entropy(_functional_logits(fast, query),
                             episode.query_labels)
        optimizer.zero_grad()
        backward(loss)
        for name, p in params.items():
            p.grad = fast[name].grad
        optimizer.step()
    return model


def fomaml_query_accuracy(model, episode, inner_steps=5, inner_lr=0.01):
    """Adapt every parameter on the support set, then score the queries."""
    fast = {name: Tensor(p.data.copy(), requires_grad=True)
            for name, p in model.named_parameters().items()}
    support = stack_images(episode.support_images)
    for _ in range(inner_steps):
        loss = cross_entropy(_functional_logits(fast, support),
                             episode.support_labels)
        backward(loss)
        fast = {name: Tensor(t.data - inner_lr * t.grad, requires_grad=True)
                for name, t in fast.items()}
    logits = _functional_logits(fast, stack_images(episode.query_images))
    predicted = np.argmax(logits.data, axis=1)
    return float(np.mean(predicted == episode.query_labels))


# -- prototypical networks ---------------------------------------------------------

def protonet_episode_loss(backbone, episode):
    """(cross-entropy loss Tensor, query accuracy).

    Prototypes are the mean support embedding per class, built with a
    constant averaging matrix so the mean is differentiable; queries are
    classified by softmax over negative squared Euclidean distances.
    """
    support = backbone(Tensor(stack_images(episode.support_images)))
    query = backbone(Tensor(stack_images(episode.query_images)))
    averaging = np.zeros((episode.n_way, len(episode.support_images)))
    for i, label in enumerate(episode.support_labels):
        averaging[label, i] = 1.0 / episode.k_shot
    prototypes = matmul(Tensor(averaging), support)
    q2 = tsum(mul(query, query), axis=1, keepdims=True)
    p2 = transpose(tsum(mul(prototypes, prototypes), axis=1, keepdims=True))
    cross = matmul(query, transpose(prototypes))
    logits = mul(add(add(q2, p2), mul(cross, -2.0)), -1.0)
    loss = cross_entropy(logits, episode.query_labels)
    accuracy = float(np.mean(np.argmax(logits.data, axis=1)
                             == episode.query_labels))
    return loss, accuracy


def protonet_meta_train(backbone, datasets, episodes, seed=0, n_way=5,
                        k_shot=5, q_queries=5, outer_lr=0.001):
    """Episodic training of the backbone under the prototype loss.

    No head to adapt; the returned clone's features are shaped so class
    means separate their own queries.
    """
    datasets = _as_dataset_list(datasets)
    trained = clone_backbone(backbone)
    optimizer = Adam(trained.parameters(), lr=outer_lr)
    rng = np.random.default_rng(seed)
    for _ in range(episodes):
        dataset = datasets[int(rng.integers(len(datasets)))]
        episode = sample_episode(dataset, n_way, k_shot, q_queries,
                                 int(rng.integers(2 ** 31)))
        loss, _ = protonet_episode_loss(trained, episode)
        optimizer.zero_grad()
        backward(loss)
        optimizer.step()
    return trained


# -- external corpora ----------------------------------------------------------------

def _read_image_file(path):
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic in (b"P1", b"P2", b"P4", b"P5"):
        return read_pbm(path)
    rows = [line.strip() for line in
            path.read_text(encoding="ascii").splitlines() if line.strip()]
    return BinaryImage.from_rows(rows)


def load_image_folder(path):
    """Build a dataset from class-name/sample-file directories.

    Accepts netpbm images (P1/P2/P4/P5; graymaps threshold at half of
    maxval) and plain '0'/'1' text grids. Everything lands as 28x28 via
    nearest-neighbor resampling. Classes with fewer than 2 samples load but
    warn, since no episode can split them.
    """
    root = Path(path)
    if not root.is_dir():
        raise ValueError(f"not a directory: {root}")
    by_class = {}
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        images = []
        for file in sorted(p for p in class_dir.iterdir() if p.is_file()):
            try:
                img = _read_image_file(file)
            except Exception as err:
                raise ValueError(f"unreadable image {file}: {err}") from err
            if img.bits.shape != (28, 28):
                img = resize_nearest(img, (28, 28))
            images.append(img)
        if len(images) < 2:
            warnings.warn(f"class {class_dir.name!r} has {len(images)} "
                          "sample(s); episodes need at least 2")
        if images:
            by_class[class_dir.name] = images
    if not by_class:
        raise ValueError(f"no class directories with images under {root}")
    return ImageDataset(by_class)
