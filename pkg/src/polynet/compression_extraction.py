"""Pruning constrained subnetworks and reading polytope covers off trained nets.

For a constrained subnet ``T = lam + sum_k v_k relu(w_k . x + b_k)`` (all
``v_k < 0``) the set ``S = {x : w_k . x + b_k <= 0 for all k}`` is exactly
where ``T = lam``.  A net is *settled* on a dataset when every point has
either ``T <= 0`` or lies in ``S``; then ``relu(T)`` only takes the values 0
and ``lam`` on the data and the trained net is a vote over polytopes.
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from polynet.errors import UnsettledSubnetError, ValidationError
from polynet.geometry import ConvexPolytope, FunctionalPolytope, PolytopeBasisCover
from polynet.networks import ConstrainedTwoLayerNet, ThreeLayerSumNet, TwoLayerNet

logger = logging.getLogger(__name__)

SETTLE_TOL = 1e-6


@dataclass
class CompressionReport:
    """What one compression pass changed."""

    removed: int | None
    scaled: list = field(default_factory=list)
    width_before: int = 0
    width_after: int = 0
    accuracy_before: float | None = None
    accuracy_after: float | None = None

    @property
    def changed(self):
        return self.removed is not None or bool(self.scaled)

    def to_dict(self):
        return asdict(self)


def _oriented(T, X):
    return T.sign * T.forward(X)


def subnet_predictions(T, X):
    """Labels implied by a settled subnet: the polytope side votes for the subnet's class."""
    inside = _oriented(T, X) > T.lam / 2
    return inside.astype(int) if T.sign == 1 else (~inside).astype(int)


def _accuracy(T, data):
    if data.y is None or T.width == 0:
        return None
    return float(np.mean(subnet_predictions(T, data.X) == data.y))


def unsettled_points(T, X, tol=SETTLE_TOL):
    """Indices of points where the oriented output is neither <= tol nor exactly on ``S``."""
    Z = T.preactivations(X)
    g = T.lam + np.maximum(Z, 0.0) @ (T.sign * T.v)
    return np.flatnonzero((g > tol) & np.any(Z > 0, axis=1))


def is_settled(T, X, tol=SETTLE_TOL):
    return unsettled_points(T, X, tol).size == 0


def removable_neurons(T, X, literal=False):
    """Neurons whose data activation pattern is covered by another neuron.

    By default neuron ``l`` is removable when some other neuron ``k`` is
    active on every training point where ``l`` is active (including the case
    where ``l`` is active nowhere).  Removing such an ``l`` never changes which
    data points lie in ``S``.  With ``literal=True`` the roles are swapped and
    the covering neuron ``k`` is flagged instead.
    """
    m = T.width
    if m < 2:
        return np.zeros(0, dtype=int)
    A = (T.preactivations(X) > 0).astype(np.int64)
    # escapes[l, k] = number of points where l is active but k is not
    escapes = A.T @ (1 - A)
    covered = escapes == 0
    np.fill_diagonal(covered, False)
    flagged = covered.any(axis=0) if literal else covered.any(axis=1)
    return np.flatnonzero(flagged)


def drop_redundant_faces(T, X):
    """Greedily remove neurons whose active points are all covered by the others.

    A point lies outside ``S`` as long as at least one neuron is active on
    it, so dropping neuron ``l`` keeps ``S`` unchanged on ``X`` whenever
    every point activating ``l`` also activates some other neuron.  Neurons
    are tried from the smallest ``|v_k| * ||w_k||`` up.  Returns a new net.
    """
    T = T.copy()
    order = np.argsort(np.abs(T.v) * np.linalg.norm(T.W, axis=1), kind="stable")
    keep = np.ones(T.width, dtype=bool)
    A = T.preactivations(X) > 0
    for l in order:
        if keep.sum() < 2:
            break
        keep[l] = False
        others = A[:, keep].any(axis=1)
        if np.any(A[:, l] & ~others):
            keep[l] = True
    for l in sorted(np.flatnonzero(~keep), reverse=True):
        T.remove_neuron(int(l))
    return T


def compress(T, data, lambda_scale=2.0, literal=False):
    """One pruning pass over a constrained subnet.

    Removes the removable neuron with the smallest ``|v_k| * ||w_k||``
    (lowest index on ties), then scales ``(v_k, w_k, b_k)`` by
    ``lambda_scale`` for every neuron active on a point whose oriented output
    lies strictly between 0 and ``lam``.  Returns a new net and a report.
    """
    if not isinstance(T, ConstrainedTwoLayerNet):
        raise ValidationError("compress expects a ConstrainedTwoLayerNet")
    if lambda_scale <= 1:
        raise ValidationError("lambda_scale must exceed 1")
    T = T.copy()
    report = CompressionReport(None, [], T.width, T.width, _accuracy(T, data))
    candidates = removable_neurons(T, data.X, literal)
    if candidates.size:
        size = np.abs(T.v[candidates]) * np.linalg.norm(T.W[candidates], axis=1)
        k = int(candidates[np.argmin(size)])
        T.remove_neuron(k)
        report.removed = k
    if T.width:
        pending = unsettled_points(T, data.X, tol=0.0)
        if pending.size:
            active = np.any(T.preactivations(data.X[pending]) > 0, axis=0)
            for k in np.flatnonzero(active):
                T.scale_neuron(k, lambda_scale)
            report.scaled = [int(k) for k in np.flatnonzero(active)]
    report.width_after = T.width
    report.accuracy_after = _accuracy(T, data)
    return T, report


def compress_to_fixpoint(T, data, lambda_scale=2.0, max_iter=200, prune=False, literal=False):
    """Repeat :func:`compress` until the subnet is settled on ``data``.

    With ``prune=True`` the loop continues until a pass changes nothing, so
    no removable neuron is left either.  Returns ``(net, reports)``.
    """
    reports = []
    for _ in range(max_iter):
        done = not prune and is_settled(T, data.X)
        if done:
            break
        T, rep = compress(T, data, lambda_scale, literal)
        reports.append(rep)
        if prune and not rep.changed:
            break
    else:
        if not is_settled(T, data.X):
            raise UnsettledSubnetError(f"subnet not settled after {max_iter} compression passes")
    return T, reports


def _polytope_from_neurons(W, b):
    norms = np.linalg.norm(W, axis=1)
    rows = np.hstack([W, b[:, None]]) / norms[:, None]
    keep = []
    for i, row in enumerate(rows):
        if not any(np.allclose(row, rows[j], rtol=0.0, atol=1e-12) for j in keep):
            keep.append(i)
    return ConvexPolytope(W[keep], b[keep])


def extract_cover_three_layer(net, data, tol=SETTLE_TOL):
    """Cover whose vote reproduces a settled three-layer sum network.

    Subnet ``j`` contributes ``{x : w_jk . x + b_jk <= 0 for all k}`` to the
    positives when ``a_j = +1`` and to the negatives otherwise.  Raises
    :class:`UnsettledSubnetError` listing every offending (subnet, point)
    pair when some output is not 0 or ``lam`` on the data.
    """
    if not isinstance(net, ThreeLayerSumNet) or not net.is_constrained:
        raise ValidationError("expected a ThreeLayerSumNet with constrained subnets")
    offenders = []
    for j, T in enumerate(net.subnets):
        idx = unsettled_points(T, data.X, tol)
        vals = T.forward(data.X[idx])
        offenders.extend((j, int(i), float(v)) for i, v in zip(idx, vals))
    if offenders:
        raise UnsettledSubnetError(
            f"{len(offenders)} subnet output(s) are neither 0 nor lambda; first: {offenders[:5]}",
            offenders,
        )
    positives, negatives = [], []
    for a, T in zip(net.a, net.subnets):
        if T.width == 0:
            raise ValidationError("a subnet without neurons has no polytope")
        (positives if a > 0 else negatives).append(_polytope_from_neurons(T.W, T.b))
    cover = PolytopeBasisCover(positives, negatives, dim=net.dim)
    agree = cover.classify(data.X) == (net.forward(data.X) > 0)
    if not agree.all():
        raise UnsettledSubnetError(
            "cover vote disagrees with the network sign", [(-1, int(i), 0.0) for i in np.flatnonzero(~agree)]
        )
    return cover


def extract_cover_two_layer(net, data, max_rounds=None):
    """Functional-polytope cover that reproduces a two-layer net's labels.

    The net is split into a convex half ``N+`` and a concave half ``N-``.
    Each round picks the disagreeing point closest to the decision boundary,
    sets ``c = (N+(x) - N-(x)) / 2`` and adds ``{N- > -c}`` to the positives
    and ``{N+ < c}`` to the negatives.  A point's vote only ever moves toward
    the network's label, so at most one round per positively predicted point
    is needed.  Returns ``(cover, rounds)``.
    """
    if not isinstance(net, TwoLayerNet):
        raise ValidationError("expected a TwoLayerNet")
    X = data.X
    plus, minus = net.split()
    n_plus, n_minus = plus.forward(X), minus.forward(X)
    target = (n_plus + n_minus) > 0
    votes = np.zeros(X.shape[0], dtype=int)
    positives, negatives = [], []
    limit = X.shape[0] if max_rounds is None else int(max_rounds)
    rounds = 0
    while True:
        wrong = np.flatnonzero((votes > 0) != target)
        if wrong.size == 0:
            break
        if rounds >= limit:
            raise UnsettledSubnetError(f"cover not exact after {rounds} rounds")
        i = wrong[np.argmin(np.abs(n_plus[wrong] + n_minus[wrong]))]
        c = 0.5 * (n_plus[i] - n_minus[i])
        in_p = n_minus > -c
        in_q = n_plus < c
        if in_p[i] == in_q[i]:
            raise UnsettledSubnetError("a point on the decision boundary cannot be separated", [(-1, int(i), 0.0)])
        positives.append(FunctionalPolytope(minus, -c, ">"))
        negatives.append(FunctionalPolytope(plus, c, "<"))
        votes += in_p.astype(int) - in_q.astype(int)
        rounds += 1
    logger.info("two-layer extraction: %d rounds, %d polytopes", rounds, 2 * rounds)
    return PolytopeBasisCover(positives, negatives, dim=net.dim), rounds
