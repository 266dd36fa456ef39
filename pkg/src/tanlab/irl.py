"""Aesthetic-score learners: supervised CCL, max-entropy IRL, and GAIL.

All three produce the same artifact, a ScoreModel mapping a 28x28 binary
image to a score in (0,1). They differ in the objective: SL minimizes the
completeness contrast loss along expert trajectories; ME-IRL ascends
mean F(expert) - mean F(sampled); GAIL ascends the discriminator objective
mean log D(expert) + mean log(1 - D(sampled)). Sampled states come from
greedy rollouts of the current model starting where the experts started.
"""

import numpy as np

from .autodiff import Tensor, backward, clip, log, mul, tmean
from .bitmap import BinaryImage, stack_images
from .network import Adam, CompletenessHead, FeatureExtractor, load_into
from .pretrain import ccl


class ScoreModel:
    """Backbone plus a scalar logistic head; output always in (0,1)."""

    def __init__(self, seed=0, backbone_weights=None):
        self.backbone = FeatureExtractor(seed)
        self.head = CompletenessHead(seed + 1)
        if backbone_weights is not None:
            load_into(self.backbone, backbone_weights)

    def named_parameters(self):
        out = {}
        out.update(self.backbone.named_parameters())
        out.update(self.head.named_parameters())
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def score_tensor(self, batch):
        """float64 (N,1,28,28) array -> score Tensor (N,)."""
        return self.head(self.backbone(Tensor(batch)))

    def score_images(self, images):
        return self.score_tensor(stack_images(images)).data


def state_image(state):
    """Accept either a bare image or an environment state."""
    if isinstance(state, BinaryImage):
        return state
    return state.to_image()


def train_sl(trajectories, epochs, seed=0, lr=0.001, backbone_weights=None):
    """Minimize CCL over each expert trajectory; returns (model, history)."""
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("train_sl needs at least one trajectory")
    for i, traj in enumerate(trajectories):
        if len(traj.states) < 2:
            raise ValueError(f"trajectory {i} has fewer than 2 states")
    batches = [stack_images(t.states) for t in trajectories]
    model = ScoreModel(seed, backbone_weights)
    optimizer = Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        total = 0.0
        for idx in rng.permutation(len(batches)):
            loss = ccl(model.score_tensor(batches[idx]))
            total += loss.item()
            optimizer.zero_grad()
            backward(loss)
            optimizer.step()
        history.append({"epoch": epoch, "ccl": total / len(batches)})
    return model, history


class RolloutConfig:
    """Greedy rollout limits.

    horizon: maximum number of actions taken (so at most horizon+1 states
    are visited). stop_when_no_improvement: halt once no successor scores
    strictly above the current state.
    """

    __slots__ = ("horizon", "stop_when_no_improvement")

    def __init__(self, horizon, stop_when_no_improvement=True):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.horizon = int(horizon)
        self.stop_when_no_improvement = bool(stop_when_no_improvement)


def greedy_rollout(model, initial_state, actions, config):
    """Visit states by always taking the best-scoring legal action.

    Ties go to the lowest action index. Returns the list of visited states,
    starting with initial_state. With stop_when_no_improvement unset, a
    start state with no legal action at all is an error.
    """
    states = [initial_state]
    current = initial_state
    current_score = model.score_images([state_image(current)])[0]
    for _ in range(config.horizon):
        successors = []
        for action in actions:
            nxt = action.try_apply(current)
            if nxt is not None:
                successors.append(nxt)
        if not successors:
            if len(states) == 1 and not config.stop_when_no_improvement:
                raise RuntimeError("no legal actions from the initial state")
            break
        scores = model.score_images([state_image(s) for s in successors])
        best = int(np.argmax(scores))  # first maximum = lowest action index
        if config.stop_when_no_improvement and scores[best] <= current_score:
            break
        current = successors[best]
        current_score = scores[best]
        states.append(current)
    return states


def _image_batch(states):
    return stack_images([state_image(s) for s in states])


def meirl_update(model, expert_states, sampled_states, optimizer=None):
    """One ascent step on mean F(expert) - mean F(sampled).

    Backpropagates the negated objective (so p.grad holds its descent
    direction) and applies the optimizer when given; with optimizer=None the
    gradients are left on the parameters for inspection. Returns the
    objective value.
    """
    if not expert_states or not sampled_states:
        raise ValueError("both state sets must be nonempty")
    for p in model.parameters():
        p.grad = None
    expert_scores = model.score_tensor(_image_batch(expert_states))
    sampled_scores = model.score_tensor(_image_batch(sampled_states))
    objective = tmean(expert_scores) - tmean(sampled_scores)
    backward(mul(objective, -1.0))
    if optimizer is not None:
        optimizer.step()
    return objective.item()


def gail_update(model, expert_states, sampled_states, optimizer=None):
    """One ascent step on mean log D(expert) + mean log(1 - D(sampled)).

    Probabilities are clamped to [1e-6, 1 - 1e-6] before the logs so a
    saturated discriminator cannot produce infinities. Same optimizer
    convention as meirl_update. Returns the objective value.
    """
    if not expert_states or not sampled_states:
        raise ValueError("both state sets must be nonempty")
    for p in model.parameters():
        p.grad = None
    lo, hi = 1e-6, 1.0 - 1e-6
    d_expert = clip(model.score_tensor(_image_batch(expert_states)), lo, hi)
    d_sampled = clip(model.score_tensor(_image_batch(sampled_states)), lo, hi)
    objective = tmean(log(d_expert)) + tmean(log(1.0 - d_sampled))
    backward(mul(objective, -1.0))
    if optimizer is not None:
        optimizer.step()
    return objective.item()


_UPDATES = {"meirl": meirl_update, "gail": gail_update}


def train_irl(method, experts, actions, iterations, seed=0, lr=0.001,
              backbone_weights=None, horizon=None,
              stop_when_no_improvement=True, experts_per_iteration=None):
    """Alternate greedy rollouts and objective ascent; returns (model, history).

    Each iteration rolls the current greedy policy out of every expert's
    initial state (or a seeded subsample of experts_per_iteration of them),
    pools the visited states (initial states included), and applies one
    update. horizon defaults to the longest expert trajectory length.
    """
    key = method.lower().replace("-", "").replace("_", "")
    if key not in _UPDATES:
        raise ValueError(f"unknown method {method!r}; use ME-IRL or GAIL")
    update = _UPDATES[key]
    experts = list(experts)
    if not experts:
        raise ValueError("train_irl needs at least one expert trajectory")
    for traj in experts:
        if traj.initial_state is None:
            raise ValueError("expert trajectories must carry initial_state")
    if horizon is None:
        horizon = max(len(t.states) for t in experts)
    config = RolloutConfig(horizon, stop_when_no_improvement)
    model = ScoreModel(seed, backbone_weights)
    optimizer = Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    expert_images = [s for t in experts for s in t.states]
    history = []
    for iteration in range(iterations):
        if experts_per_iteration and experts_per_iteration < len(experts):
            chosen = [experts[i] for i in
                      rng.choice(len(experts), experts_per_iteration, replace=False)]
        else:
            chosen = experts
        sampled = []
        for traj in chosen:
            rollout = greedy_rollout(model, traj.initial_state, actions, config)
            sampled.extend(state_image(s) for s in rollout)
        objective = update(model, expert_images, sampled, optimizer)
        history.append({"iteration": iteration, "objective": objective,
                        "sampled_states": len(sampled)})
    return model, history


def precision_at_k(model, trajectory, k):
    """Overlap between the model's top-K states and the K final expert states.

    Rank ties are broken toward the later expert index, so an earlier state
    never displaces a later one it merely ties with.
    """
    states = getattr(trajectory, "states", trajectory)
    n = len(states)
    if not 1 <= k <= n:
        raise ValueError(f"K must be in [1, {n}], got {k}")
    scores = model.score_images(states)
    order = sorted(range(n), key=lambda i: (scores[i], i), reverse=True)
    top = set(order[:k])
    last = set(range(n - k, n))
    return len(top & last) / k
