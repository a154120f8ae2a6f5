"""Full-batch gradient descent, compression-aware training and cover search.

``train`` is plain full-batch gradient descent with per-step telemetry.
``train_with_compression`` interleaves descent on a three-layer sum net with
pruning passes and finishes once every subnet is settled.
``sequential_cover_search`` grows a polytope-basis cover one polytope at a
time, alternating between positive and negative members.
"""

import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from polynet.compression_extraction import (
    _polytope_from_neurons,
    compress,
    compress_to_fixpoint,
    drop_redundant_faces,
    is_settled,
)
from polynet.errors import SignFlipError, ValidationError
from polynet.geometry import PolytopeBasisCover
from polynet.guided import GuidedDescentConfig, guided_descent, guided_step_bce, guided_step_mse  # noqa: F401
from polynet.networks import (
    LOSSES,
    ConstrainedTwoLayerNet,
    LabeledDataset,
    ThreeLayerSumNet,
    forward_and_gradients,
    init_implicit_bias,
    rebalance,
)

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Gradient-descent settings.  ``lambda0``/``lambda1`` weight the classes
    of the weighted loss; ``record_every`` thins the telemetry."""

    eta: float = 0.1
    iterations: int = 1000
    loss: str = "bce"
    lambda0: float = 1.0
    lambda1: float = 1.0
    record_every: int = 1

    def __post_init__(self):
        if self.eta < 0:
            raise ValidationError("learning rate must be nonnegative")
        if self.iterations < 0:
            raise ValidationError("iteration count must be nonnegative")
        if self.loss not in LOSSES:
            raise ValidationError(f"unknown loss {self.loss!r}")
        if self.record_every < 1:
            raise ValidationError("record_every must be positive")


@dataclass
class TraceRow:
    step: int
    loss: float
    accuracy: float
    active_neurons: int


def _active_neurons(net, X):
    subnets = net.subnets if isinstance(net, ThreeLayerSumNet) else [net]
    return int(sum(np.any(s.preactivations(X) > 0, axis=0).sum() for s in subnets))


def _constrained_parts(net):
    if isinstance(net, ConstrainedTwoLayerNet):
        return [net]
    if isinstance(net, ThreeLayerSumNet):
        return [s for s in net.subnets if isinstance(s, ConstrainedTwoLayerNet)]
    return []


def _check_signs(parts, step):
    for s in parts:
        bad = (s.v >= 0) if s.sign == 1 else (s.v <= 0)
        if np.any(bad):
            raise SignFlipError(f"output weight(s) {np.flatnonzero(bad).tolist()} changed sign at step {step}")


def train(net, data, config=None):
    """Full-batch gradient descent in place; returns ``(net, trace)``.

    The trace holds one :class:`TraceRow` per recorded step (step 0 is the
    initial state).  Sign-constrained nets abort with
    :class:`SignFlipError` if an output weight crosses zero.
    """
    cfg = config or TrainConfig()
    parts = _constrained_parts(net)
    trace = []
    for step in range(cfg.iterations + 1):
        out, value, grads = forward_and_gradients(net, data, cfg.loss, cfg.lambda0, cfg.lambda1)
        if step % cfg.record_every == 0 or step == cfg.iterations:
            acc = float(np.mean((out > 0) == (data.y == 1)))
            trace.append(TraceRow(step, value, acc, _active_neurons(net, data.X)))
        if step == cfg.iterations:
            break
        for p, g in zip(net.param_arrays(), grads):
            p -= cfg.eta * g
        _check_signs(parts, step + 1)
    return net, trace


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "accuracy", "active_neurons"])
        for row in trace:
            writer.writerow([row.step, repr(row.loss), repr(row.accuracy), row.active_neurons])


@dataclass
class CompressionTrainingResult:
    net: ThreeLayerSumNet
    trace: list
    reports: list
    fixpoint_passes: int


def train_with_compression(net, data, epochs=5, steps_per_epoch=1000, eta=0.1, lambda_scale=2.0,
                           max_passes=200, prune=False):
    """Alternate descent on a three-layer sum net with one pruning pass per subnet.

    After the last epoch, pruning passes repeat until every subnet is settled
    (oriented output 0 or ``lam`` on all points) or ``max_passes`` is hit.
    With ``prune=True`` each settled subnet is then pruned until no removable
    neuron is left; the signs of the training outputs do not change.
    """
    if not (isinstance(net, ThreeLayerSumNet) and net.is_constrained):
        raise ValidationError("expected a ThreeLayerSumNet with constrained subnets")
    cfg = TrainConfig(eta=eta, iterations=steps_per_epoch, loss="bce", record_every=max(1, steps_per_epoch // 10))
    trace, reports = [], []
    for epoch in range(epochs):
        net, tr = train(net, data, cfg)
        trace.extend(TraceRow(epoch * steps_per_epoch + r.step, r.loss, r.accuracy, r.active_neurons) for r in tr)
        for j, T in enumerate(net.subnets):
            if T.width:
                net.subnets[j], rep = compress(T, data, lambda_scale)
                reports.append((epoch, j, rep))
    passes = 0
    while passes < max_passes and not all(is_settled(T, data.X) for T in net.subnets if T.width):
        for j, T in enumerate(net.subnets):
            if T.width and not is_settled(T, data.X):
                net.subnets[j], rep = compress(T, data, lambda_scale)
                reports.append((epochs, j, rep))
        passes += 1
    if prune:
        for j, T in enumerate(net.subnets):
            if T.width > 1:
                net.subnets[j], reps = compress_to_fixpoint(T, data, lambda_scale, max_passes, prune=True)
                reports.extend((epochs, j, rep) for rep in reps)
    return CompressionTrainingResult(net, trace, reports, passes)


def init_tangent_sum_net(data, n_subnets=16, width=20, scale=1.0, radius=0.15, lam=5.0, seed=0):
    """Three-layer sum net whose subnets start as small polytopes around data points.

    Even-indexed subnets vote for label 1 and sit around random label-1
    points; odd-indexed ones vote against it.  Each subnet has ``width``
    balanced neurons tangent to a ball of ``radius``.
    """
    rng = np.random.default_rng(seed)
    subnets, a = [], []
    for j in range(n_subnets):
        label = 1 if j % 2 == 0 else 0
        pool = np.flatnonzero(data.y == label)
        if pool.size == 0:
            pool = np.arange(data.n)
        center = data.X[rng.choice(pool)]
        v, W, b = _tangent_neurons(center, radius, width, scale, 1, rng)
        subnets.append(ConstrainedTwoLayerNet(v, W, b, lam=lam, sign=1))
        a.append(1 if label else -1)
    return ThreeLayerSumNet(a, subnets, lam)


@dataclass
class SearchConfig:
    """Settings of the sequential cover search.

    ``lambda_target`` weights the class a polytope must enclose and
    ``lambda_other`` the class it should exclude.
    """

    lam_bias: float = 5.0
    lambda_other: float = 1.0
    lambda_target: float = 10.0
    acc_th: float = 1.0
    init_width: int = 6
    max_width: int = 12
    max_polytopes: int = 12
    eta: float = 0.1
    epochs: int = 2
    steps_per_epoch: int = 2000
    lambda_scale: float = 2.0
    init_scale: float = 2.0
    retries: int = 2
    refine: int = 2
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.acc_th <= 1:
            raise ValidationError("acc_th must lie in (0, 1]")
        if self.init_width < 1 or self.max_width < self.init_width:
            raise ValidationError("need 1 <= init_width <= max_width")
        if self.max_polytopes < 1:
            raise ValidationError("max_polytopes must be positive")
        if self.retries < 0 or self.refine < 0:
            raise ValidationError("retries and refine must be nonnegative")


@dataclass
class PolytopeRound:
    polarity: int
    width: int
    targets: int
    covered: int
    opponents_inside: int
    attempts: int
    seconds: float


@dataclass
class SearchResult:
    cover: PolytopeBasisCover
    subnets: list
    accuracy: float
    incomplete: bool
    rounds: list = field(default_factory=list)

    def summary(self):
        return {
            "accuracy": self.accuracy,
            "incomplete": self.incomplete,
            "n_polytopes": len(self.cover),
            "n_faces": self.cover.n_faces,
            "faces_per_polytope": [p.n_faces for p in self.cover.positives + self.cover.negatives],
            "rounds": [asdict(r) for r in self.rounds],
        }


def _round_sets(votes, y, polarity):
    """Targets and opponents for the next polytope of the given polarity.

    Targets are misclassified points of the class the polytope votes for.
    Opponents are correctly classified points of the other class whose vote
    would flip if the polytope contained them.  Everything else is free.
    """
    if polarity == 1:
        targets = (y == 1) & (votes <= 0)
        opponents = (y == 0) & (votes == 0)
    else:
        targets = (y == 0) & (votes >= 1)
        opponents = (y == 1) & (votes == 1)
    return np.flatnonzero(targets), np.flatnonzero(opponents)


def _train_with_backoff(T, data, train_cfg, max_halvings=12):
    """Train a copy of ``T``; on a sign flip restart from ``T`` with half the step."""
    cfg = train_cfg
    for _ in range(max_halvings):
        try:
            trained, _ = train(T.copy(), data, cfg)
            return trained
        except SignFlipError:
            cfg = TrainConfig(cfg.eta / 2, cfg.iterations, cfg.loss, cfg.lambda0, cfg.lambda1, cfg.record_every)
            logger.debug("sign flip; retrying with eta=%.3g", cfg.eta)
    raise SignFlipError(f"output weights keep changing sign even at eta={cfg.eta:.3g}")


def _seed_ball(X, targets, opponents, rank=0):
    """Center and radius of an opponent-free ball around the ``rank``-th deepest target."""
    P = X[targets]
    if opponents.size == 0:
        center = P.mean(axis=0)
        return center, float(np.max(np.linalg.norm(P - center, axis=1))) + 1e-3
    dist, _ = cKDTree(X[opponents]).query(P)
    i = int(np.argsort(-dist, kind="stable")[min(rank, dist.size - 1)])
    return P[i], max(float(dist[i]), 1e-6)


def _tangent_neurons(center, radius, k, scale, polarity, rng):
    """``k`` balanced neurons whose hyperplanes touch the sphere around ``center``."""
    U = rng.normal(size=(k, center.size))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    s = scale / radius
    W = s * U
    b = -s * (U @ center + radius)
    v = -polarity * (np.sqrt(np.sum(W ** 2, axis=1) + b ** 2) + 0.01 * scale)
    return v, W, b


def _facing_neurons(center, toward, radius, scale, polarity):
    """Balanced neurons whose hyperplanes cut halfway from ``center`` to each row of ``toward``."""
    D = toward - center
    dist = np.linalg.norm(D, axis=1)
    U = D / dist[:, None]
    s = scale / radius
    W = s * U
    b = -s * (U @ center + dist / 2)
    v = -polarity * (np.sqrt(np.sum(W ** 2, axis=1) + b ** 2) + 0.01 * scale)
    return v, W, b


def _seed_neurons(X, center, radius, opponents, k, scale, polarity, rng, facing=True):
    """Faces toward the ``k`` nearest opponents, padded with tangent faces.

    Random tangent faces alone leave every point inside in high dimension,
    where projections onto a random direction are short.
    """
    if not facing:
        return _tangent_neurons(center, radius, k, scale, polarity, rng)
    near = np.zeros((0, X.shape[1]))
    if opponents.size:
        d = np.linalg.norm(X[opponents] - center, axis=1)
        near = X[opponents[np.argsort(d, kind="stable")[:k]]]
    parts = [_facing_neurons(center, near, radius, scale, polarity)] if len(near) else []
    if len(near) < k:
        parts.append(_tangent_neurons(center, radius, k - len(near), scale, polarity, rng))
    return tuple(np.concatenate(a) for a in zip(*parts))


def _fit_polytope(X, targets, opponents, polarity, cfg, rng, rank=0, lambda_target=None):
    """Train one sign-constrained subnet whose polytope encloses targets but not opponents.

    The initial hyperplanes are tangent to an opponent-free ball around a
    seed target, or aimed at its nearest opponents when tangent faces fence
    off too few of them.  Each failed attempt adds one face toward the
    closest opponent still inside, up to ``max_width`` faces.  If the last
    attempt encloses no more targets than opponents, the best earlier one
    (by covered targets minus intruders) is returned instead.
    """
    target_label = 1 if polarity == 1 else 0
    Xr = np.vstack([X[targets], X[opponents]])
    yr = np.concatenate([np.full(targets.size, target_label), np.full(opponents.size, 1 - target_label)])
    data = LabeledDataset(Xr, yr)
    is_target = np.arange(Xr.shape[0]) < targets.size
    lt = cfg.lambda_target if lambda_target is None else lambda_target
    weights = (cfg.lambda_other, lt) if polarity == 1 else (lt, cfg.lambda_other)
    train_cfg = TrainConfig(eta=cfg.eta, iterations=cfg.steps_per_epoch, loss="weighted_bce",
                            lambda0=weights[0], lambda1=weights[1], record_every=cfg.steps_per_epoch)
    center, radius = _seed_ball(X, targets, opponents, rank)
    v, W, b = _tangent_neurons(center, radius, cfg.init_width, cfg.init_scale, polarity, rng)
    # tangent faces that fence off few opponents are replaced by faces aimed at them
    facing = opponents.size > 0 and np.mean(np.all(X[opponents] @ W.T + b <= 0, axis=1)) > 0.5
    if facing:
        v, W, b = _seed_neurons(X, center, radius, opponents, cfg.init_width, cfg.init_scale, polarity, rng)
    T = ConstrainedTwoLayerNet(v, W, b, lam=cfg.lam_bias, sign=polarity, dim=X.shape[1])
    max_attempts = cfg.max_width - cfg.init_width + 1
    attempts = 0
    best = None
    while True:
        attempts += 1
        for _ in range(cfg.epochs):
            T = _train_with_backoff(T, data, train_cfg)
            T, _ = compress(T, data, cfg.lambda_scale)
            rebalance(T)
        T, _ = compress_to_fixpoint(T, data, cfg.lambda_scale, prune=True)
        T = rebalance(drop_redundant_faces(T, Xr))
        inside = np.all(T.preactivations(Xr) <= 0, axis=1)
        covered = int(inside[is_target].sum())
        intruders = int(inside[~is_target].sum())
        # widen while targets are missed, and a few more times while opponents sneak in
        done = covered == targets.size and (intruders == 0 or attempts > cfg.refine)
        # widening can also make things worse; keep the best attempt as a fallback
        if best is None or covered - intruders > best[1] - best[2]:
            best = (T.copy(), covered, intruders)
        if done or attempts >= max_attempts or T.width >= cfg.max_width:
            if covered <= intruders:
                return best + (attempts,)
            return T, covered, intruders, attempts
        intruding = opponents[inside[~is_target]]
        T.add_neuron(*[a[0] for a in _seed_neurons(X, center, radius, intruding, 1, cfg.init_scale, polarity, rng,
                                                 facing)])


def sequential_cover_search(data, config=None):
    """Grow a polytope-basis cover until its accuracy reaches ``acc_th``.

    Polytopes alternate between positive and negative members.  Each new
    polytope is trained on the points it must enclose (misclassified points
    of its class) against the points it must avoid (correct points of the
    other class whose label would flip).  The search stops early with
    ``incomplete = True`` when ``max_polytopes`` is reached or a round
    cannot enclose any target.
    """
    cfg = config or SearchConfig()
    rng = np.random.default_rng(cfg.seed)
    X, y = data.X, data.y
    votes = np.zeros(data.n, dtype=int)
    positives, negatives, subnets, rounds = [], [], [], []
    polarity = 1
    incomplete = False
    idle = 0
    while True:
        acc = float(np.mean((votes > 0) == (y == 1)))
        if acc >= cfg.acc_th:
            break
        if len(subnets) >= cfg.max_polytopes:
            incomplete = True
            break
        targets, opponents = _round_sets(votes, y, polarity)
        if targets.size == 0:
            idle += 1
            if idle > 1:
                incomplete = True
                break
            polarity = -polarity
            continue
        t0 = time.perf_counter()
        for retry in range(cfg.retries + 1):
            # later retries seed from shallower targets and weigh targets less,
            # so isolated targets (label noise) can be left for later rounds
            frac = retry / max(cfg.retries, 1)
            T, covered, intruders, attempts = _fit_polytope(X, targets, opponents, polarity, cfg, rng,
                                                            rank=retry * max(1, targets.size // (cfg.retries + 1)),
                                                            lambda_target=cfg.lambda_target ** (1 - frac))
            if covered > intruders:
                break
        else:
            # no useful polytope of this polarity; give the other class a turn
            idle += 1
            if idle > 1:
                incomplete = True
                break
            polarity = -polarity
            continue
        idle = 0
        poly = _polytope_from_neurons(T.W, T.b)
        inside = poly.contains(X)
        votes += polarity * inside.astype(int)
        (positives if polarity == 1 else negatives).append(poly)
        subnets.append(T)
        rounds.append(PolytopeRound(polarity, T.width, int(targets.size), covered,
                                    int(inside[opponents].sum()), attempts, time.perf_counter() - t0))
        logger.info("polytope %d (%+d): width %d, %d/%d targets, acc %.4f", len(subnets), polarity,
                    T.width, covered, targets.size, float(np.mean((votes > 0) == (y == 1))))
        polarity = -polarity
    cover = PolytopeBasisCover(positives, negatives, dim=data.dim)
    return SearchResult(cover, subnets, cover.accuracy(X, y) if len(cover) else acc, incomplete, rounds)


SequentialSearchConfig = SearchConfig
