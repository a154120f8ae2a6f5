"""Explicit ReLU networks that realize polytopes, covers and Lipschitz targets.

The core object is the indicator network of a polytope ``P = {W x + b <= 0}``.
With positive weights ``c`` satisfying ``sum_k c_k w_k = 0``,

    T(x) = 1 + M * (V - sum_k c_k relu(-w_k . x - b_k)),   V = -sum_k c_k b_k,

equals 1 on ``P`` because every ReLU is in its linear regime there and the
normals cancel.  Outside ``P`` some ReLU clips, so ``T < 1``.  ``M`` is chosen
large enough that ``T < 0`` once ``x`` is ``epsilon`` away from ``P``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from polynet.errors import (
    AffineDependenceError,
    BudgetExceededError,
    EpsilonTooLargeError,
    UnboundedPolytopeError,
    ValidationError,
)
from polynet.geometry import balanced_coefficients, facet_measures_2d, simplex_faces
from polynet.networks import ThreeLayerSumNet, TwoLayerNet, relu

logger = logging.getLogger(__name__)


@dataclass
class ConstructionConfig:
    """Knobs of the explicit constructions.

    epsilon: width of the transition shell around each polytope.
    safety: multiplier on the estimated minimal output slope (> 1).
    sample_budget: number of probe directions used to estimate that slope.
    max_cubes: largest cube count the regressor may allocate.
    """

    epsilon: float = 0.05
    safety: float = 10.0
    sample_budget: int = 1000
    seed: int = 0
    max_cubes: int = 200_000

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if not self.safety > 1:
            raise ValidationError("safety factor must exceed 1")
        if self.sample_budget < 100:
            raise ValidationError("sample_budget must be at least 100")


IndicatorBuildConfig = ConstructionConfig


def _probe_directions(P, x0, budget, seed):
    d = P.dim
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        theta = np.linspace(0.0, 2 * np.pi, budget, endpoint=False)
        dirs = [np.column_stack([np.cos(theta), np.sin(theta)])]
        if P.is_bounded():
            toward = P.vertices_2d() - x0
            dirs.append(toward / np.linalg.norm(toward, axis=1, keepdims=True))
        return np.vstack(dirs)
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(budget, d))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def _offset_probes(P, x0, offset, budget, seed):
    """Points just outside ``P`` used to bound the output slope.

    Along every probe ray from the interior point ``x0`` the exit point is
    pushed a further ``offset`` along the ray and, separately, along the
    normal of the exit face.  The deficit is concave and vanishes on ``P``,
    so along each ray it is largest at the nearest point that leaves the
    ``offset``-neighborhood; the along-ray probe lies no farther out than
    that point and therefore gives a conservative (too small) slope.
    """
    U = _probe_directions(P, x0, budget, seed)
    rate = U @ P.W.T
    gap = -(P.W @ x0 + P.b)
    with np.errstate(divide="ignore", invalid="ignore"):
        hit = np.where(rate > 1e-12, gap[None, :] / rate, np.inf)
    t = hit.min(axis=1)
    face = hit.argmin(axis=1)
    ok = np.isfinite(t)
    exit_pts = x0 + t[ok, None] * U[ok]
    along_ray = exit_pts + offset * U[ok]
    along_normal = exit_pts + offset * P.W[face[ok]]
    return np.vstack([along_ray, along_normal])


def _deficit(P, c, X):
    """``-sum_k c_k relu(w_k . x + b_k)``: zero on ``P`` and negative outside."""
    return -relu(P.slack(X)) @ c


def default_coefficients(P):
    """Facet lengths for bounded polygons, balanced weights otherwise."""
    if P.dim == 2 and P.is_bounded():
        return facet_measures_2d(P).measures
    return balanced_coefficients(P)


def indicator_network(P, coeffs=None, config=None):
    """Width-m network with ``T = 1`` on ``P``, ``T < 1`` off ``P`` and
    ``T < 0`` at distance ``epsilon`` or more from ``P``.

    ``coeffs`` must be nonnegative and balanced (``sum_k c_k w_k = 0``); the
    default is :func:`default_coefficients`.
    """
    cfg = config or ConstructionConfig()
    c = default_coefficients(P) if coeffs is None else np.asarray(coeffs, dtype=float)
    if c.shape != (P.n_faces,) or np.any(c < 0):
        raise ValidationError("coefficients must be nonnegative, one per face")
    if np.linalg.norm(c @ P.W) > 1e-6 * max(c.sum(), 1.0):
        raise UnboundedPolytopeError("coefficients do not balance the face normals")
    x0, _ = P.chebyshev_center()
    W_in, b_in = -P.W, -P.b
    V = float(c @ (W_in @ x0 + b_in))
    probes = _offset_probes(P, x0, cfg.epsilon / 2, cfg.sample_budget, cfg.seed)
    worst = _deficit(P, c, probes).max()
    if not worst < 0:
        raise UnboundedPolytopeError("could not bound the indicator slope; polytope may be degenerate")
    M = cfg.safety / -worst
    logger.debug("indicator: m=%d V=%.4g slope bound=%.4g M=%.4g", P.n_faces, V, worst, M)
    return TwoLayerNet(1.0 + M * V, -M * c, W_in, b_in, dim=P.dim)


def _check_opposite_class(cover, net, data):
    """Raise when a transition shell reaches a point of the other class."""
    T = net.subnet_outputs(data.X)
    members = cover.positives + cover.negatives
    offenders = []
    for j, member in enumerate(members):
        rival = 0 if j < len(cover.positives) else 1
        shell = (T[:, j] > 0) & ~member.contains(data.X) & (data.y == rival)
        offenders.extend((j, int(i)) for i in np.flatnonzero(shell))
    if offenders:
        raise EpsilonTooLargeError(
            f"epsilon shell of {len({o[0] for o in offenders})} polytope(s) captures "
            f"{len(offenders)} opposite-class point(s); first: {offenders[:5]}"
        )


def cover_network(cover, config=None, data=None):
    """Three-layer classifier ``sum relu(T_P) - sum relu(T_Q) - 1/2``.

    Returns a :class:`ThreeLayerSumNet` with ``lam = 1`` whose subnets are the
    indicator networks of the cover members, positives first.  When ``data``
    is given, shells that reach opposite-class points raise
    :class:`EpsilonTooLargeError`.
    """
    members = cover.positives + cover.negatives
    if not members:
        raise ValidationError("cannot build a network from an empty cover")
    if any(m.functional for m in members):
        raise ValidationError("functional polytopes have no explicit face list")
    subnets = [indicator_network(m, config=config) for m in members]
    a = [1] * len(cover.positives) + [-1] * len(cover.negatives)
    net = ThreeLayerSumNet(a, subnets, lam=1.0)
    if data is not None:
        _check_opposite_class(cover, net, data)
    return net


def simplex_network(vertices, config=None):
    """Indicator network of a j-simplex in R^d with width ``d + 1``.

    Lower-dimensional simplices are thickened by ``d - j`` auxiliary points
    placed ``epsilon / 2`` from the centroid along random orthogonal
    directions (seeded), so the network is 1 on the simplex and negative at
    distance ``epsilon`` or more from it.
    """
    cfg = config or ConstructionConfig()
    V = np.atleast_2d(np.asarray(vertices, dtype=float))
    n, d = V.shape
    j = n - 1
    if j > d:
        raise AffineDependenceError(f"{n} points in R^{d} cannot be affinely independent")
    edges = V[1:] - V[0]
    if j > 0 and np.linalg.matrix_rank(edges, tol=1e-10) < j:
        raise AffineDependenceError("simplex vertices are affinely dependent")
    if j < d:
        if j > 0:
            _, _, vt = np.linalg.svd(edges, full_matrices=True)
            complement = vt[j:]
        else:
            complement = np.eye(d)
        rng = np.random.default_rng(cfg.seed)
        q, _ = np.linalg.qr(rng.normal(size=(d - j, d - j)))
        aux = V.mean(axis=0) + (cfg.epsilon / 2) * (q @ complement)
        V = np.vstack([V, aux])
    S = simplex_faces(V)
    inner = ConstructionConfig(cfg.epsilon / 2, cfg.safety, cfg.sample_budget, cfg.seed, cfg.max_cubes)
    return indicator_network(S, coeffs=balanced_coefficients(S), config=inner)


class RegressorNetwork:
    """Sum of cube indicators weighted by target values at cube centers.

    ``N(x) = sum_i f(c_i) relu(T_i(x))`` where ``T_i`` is the width-``2 d_x``
    indicator of cube ``i`` with transition margin ``margin``.
    """

    def __init__(self, lower, delta, margin, values, safety):
        self.lower = np.asarray(lower, dtype=float)
        self.delta = float(delta)
        self.margin = float(margin)
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        if self.values.shape[0] != self.lower.shape[0]:
            self.values = self.values.T
        # box deficit sum_j viol_j is at least the distance to the box
        self.slope = 2.0 * safety / self.margin

    @property
    def n_cubes(self):
        return self.lower.shape[0]

    @property
    def dim(self):
        return self.lower.shape[1]

    @property
    def out_dim(self):
        return self.values.shape[1]

    @property
    def architecture(self):
        n, dx, dy = self.n_cubes, self.dim, self.out_dim
        return (dx, 2 * n * dx * dy, n * dy, dy)

    def indicators(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lo = self.lower[None, :, :]
        hi = lo + self.delta
        x = X[:, None, :]
        viol = (relu(lo - x) + relu(x - hi)).sum(axis=2)
        return 1.0 - self.slope * viol

    def forward(self, X):
        return relu(self.indicators(X)) @ self.values

    def lp_error(self, f, p=1, n_grid=2000, seed=0):
        """Empirical ``L^p`` distance to ``f`` on [0,1]^d.

        A uniform grid is used in one dimension and uniform random points
        otherwise.
        """
        if self.dim == 1:
            X = ((np.arange(n_grid) + 0.5) / n_grid)[:, None]
        else:
            X = np.random.default_rng(seed).random((n_grid, self.dim))
        target = np.asarray(f(X), dtype=float).reshape(X.shape[0], -1)
        err = np.linalg.norm(self.forward(X) - target, axis=1)
        return float(np.mean(err ** p) ** (1.0 / p))


def regressor_network(f, dim, lipschitz, epsilon, p=1, config=None):
    """Piecewise-constant ReLU approximation of an L-Lipschitz target.

    The unit cube is split into cubes of side ``delta`` below
    ``epsilon * (1 + (sqrt(dim) * L)^p)^(-1/p)``; the transition margin is
    ``delta^(p+1) / (2 dim (1 + delta^p))``.  ``f`` maps an (n, dim) array
    to n values or an (n, d_y) array.
    """
    cfg = config or ConstructionConfig()
    if epsilon <= 0 or p < 1 or lipschitz < 0:
        raise ValidationError("need epsilon > 0, p >= 1 and L >= 0")
    delta_max = epsilon * (1.0 + (np.sqrt(dim) * lipschitz) ** p) ** (-1.0 / p)
    per_axis = int(np.floor(1.0 / delta_max)) + 1
    n = per_axis ** dim
    if n > cfg.max_cubes:
        raise BudgetExceededError(f"{n} cubes exceed the budget of {cfg.max_cubes}")
    delta = 1.0 / per_axis
    margin = delta ** (p + 1) / (2 * dim * (1 + delta ** p))
    axes = [np.arange(per_axis) * delta] * dim
    lower = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    values = np.asarray(f(lower + delta / 2), dtype=float).reshape(n, -1)
    return RegressorNetwork(lower, delta, margin, values, cfg.safety)
