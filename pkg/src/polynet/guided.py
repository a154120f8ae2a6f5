"""Explicit loss-decreasing parameter path for a two-layer net around a polytope.

The net is ``N(x) = v0 + sum_k v_k relu(w_k . x + b_k)`` with ``w_k`` the
outward unit normal of face ``k`` of a polytope ``C`` that strictly contains
the origin and ``v_k < 0``.  Each neuron is described by

* ``l_k``: distance from the origin to face ``k``,
* ``s_k = -b_k``: distance from the origin to the neuron's hinge,
* ``t_k = -v0 / v_k``: distance from the hinge to the zero crossing.

A guided step moves ``(v0, s_k, t_k)`` so that the slope ``v0 / t_k``
steepens by exactly ``eta`` while the output on face ``k`` stays put.  Points
inside ``C`` then rise towards ``v0`` and points outside sink, so the MSE
(with an output ReLU) and BCE losses decrease at every step.

A point counts as *active* for neuron ``k`` when the neuron fires on it and
the net output there is still positive; once every active set is empty the
bias ``v0`` is raised instead.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from polynet.errors import AssumptionError, ValidationError
from polynet.geometry import ConvexPolytope, box
from polynet.networks import LabeledDataset, TwoLayerNet, relu, softplus

logger = logging.getLogger(__name__)

GUIDED_LOSSES = ("mse", "bce")


@dataclass
class GuidedDescentConfig:
    """Constants of the dataset assumption plus the step size.

    ``delta`` is a lower bound on the distance from any data point to the
    boundary of ``polytope``, ``rho`` bounds the share of near-boundary
    points sitting close to face edges, and ``R`` caps the neuron heights
    ``t_k``.  The constructor rejects step sizes above the convergence cap.
    """

    polytope: ConvexPolytope
    delta: float
    rho: float
    R: float
    eta: float
    loss: str = "mse"

    def __post_init__(self):
        if self.loss not in GUIDED_LOSSES:
            raise ValidationError(f"loss must be one of {GUIDED_LOSSES}")
        if not 0 < self.rho < 1:
            raise ValidationError("rho must lie in (0, 1)")
        if self.delta <= 0 or self.R <= self.delta:
            raise ValidationError("need 0 < delta < R")
        if not np.all(self.polytope.b < 0):
            raise ValidationError("the polytope must strictly contain the origin")
        if not 0 < self.eta < self.eta_cap():
            raise ValidationError(f"eta must lie in (0, {self.eta_cap():.6g}) for loss {self.loss!r}")

    @property
    def m(self):
        return self.polytope.n_faces

    @property
    def l(self):
        return -self.polytope.b.copy()

    def eta_cap(self):
        rho, R, delta = self.rho, self.R, self.delta
        if self.loss == "mse":
            return min(2 / delta, 2 / (self.m * R), 4 * rho * self.m / ((1 - rho) * R))
        return min(1.0, 4 * rho * R / ((1 - rho) * delta ** 2))

    def v0_window(self):
        """Open interval of admissible output biases; empty when ``lo >= hi``."""
        rho, R, delta = self.rho, self.R, self.delta
        if self.loss == "mse":
            return rho / (1 - rho) * 4 * self.m * rho * R ** 2 / delta ** 2, 1.0
        arg = (1 - rho) * delta / (4 * rho * R) - 1
        return 0.0, (math.log(arg) if arg > 0 else -math.inf)


@dataclass
class GuidedState:
    """Output bias and per-neuron hinge/height parameters."""

    v0: float
    s: np.ndarray
    t: np.ndarray
    l: np.ndarray
    normals: np.ndarray

    def copy(self):
        return GuidedState(self.v0, self.s.copy(), self.t.copy(), self.l.copy(), self.normals.copy())

    def to_network(self):
        return TwoLayerNet(self.v0, -self.v0 / self.t, self.normals.copy(), -self.s.copy())

    @classmethod
    def from_network(cls, net, polytope, tol=1e-9):
        """Read ``(v0, s, t)`` off a net whose normals are the polytope's unit normals."""
        if not isinstance(net, TwoLayerNet) or net.width != polytope.n_faces:
            raise ValidationError("need a TwoLayerNet with one neuron per face")
        norms = np.linalg.norm(net.W, axis=1)
        if np.any(np.abs(norms - 1) > tol) or np.any(np.abs(net.W - polytope.W) > tol):
            raise AssumptionError("neuron weights must equal the polytope's outward unit normals")
        if np.any(net.v >= 0) or net.v0 <= 0:
            raise AssumptionError("need v0 > 0 and every v_k < 0")
        return cls(float(net.v0), -net.b.copy(), -net.v0 / net.v, -polytope.b.copy(), polytope.W.copy())

    def outputs(self, X):
        H = X @ self.normals.T - self.s
        return self.v0 - relu(H) @ (self.v0 / self.t)


def initial_state(cfg, v0, s_offset, t):
    """State with ``s_k = l_k - s_offset`` and ``t_k = t`` for every face."""
    l = cfg.l
    m = l.size
    return GuidedState(float(v0), l - s_offset, np.full(m, float(t)), l, cfg.polytope.W.copy())


def check_initialization(state, cfg):
    """Raise :class:`AssumptionError` unless ``l-R < l-t < s < l`` and ``v0`` is in its window."""
    l, s, t = state.l, state.s, state.t
    bad = ~((l - cfg.R < l - t) & (l - t < s) & (s < l))
    if np.any(bad):
        raise AssumptionError(f"neurons {np.flatnonzero(bad).tolist()} start outside the hinge window")
    lo, hi = cfg.v0_window()
    if not lo < state.v0 < hi:
        raise AssumptionError(f"v0={state.v0:.6g} outside the admissible window ({lo:.6g}, {hi:.6g})")


def boundary_distance(polytope, X):
    """Distance from each row of ``X`` to the boundary of a 2D polytope."""
    V = polytope.vertices_2d()
    P = np.asarray(X, dtype=float)
    best = np.full(P.shape[0], np.inf)
    for a, b in zip(V, np.roll(V, -1, axis=0)):
        best = np.minimum(best, _segment_distance(P, a, b))
    return best


def _segment_distance(P, a, b):
    ab = b - a
    u = np.clip(((P - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(P - (a + u[:, None] * ab), axis=1)


def measure_rho(polytope, X, delta, R, n_r=64):
    """Smallest ``rho`` for which the edge-sparsity condition holds on ``X`` (2D).

    For each face ``k`` and radii ``delta < r < R`` the count of points within
    ``2r`` of the face's end points must be at most ``rho`` times the count
    within ``r - delta`` of the face segment.  Returns ``inf`` when some
    radius has edge points but no face points.
    """
    if polytope.dim != 2:
        raise ValidationError("measure_rho is implemented for 2D polytopes")
    V = polytope.vertices_2d()
    P = np.asarray(X, dtype=float)
    radii = np.linspace(delta, R, n_r + 2)[1:-1]
    worst = 0.0
    for k, (a, b) in enumerate(zip(V, np.roll(V, -1, axis=0))):
        to_face = _segment_distance(P, a, b)
        to_edge = np.minimum(np.linalg.norm(P - a, axis=1), np.linalg.norm(P - b, axis=1))
        for r in radii:
            near_edge = int(np.sum(to_edge <= 2 * r))
            near_face = int(np.sum(to_face <= r - delta))
            if near_edge == 0:
                continue
            if near_face == 0:
                return math.inf
            worst = max(worst, near_edge / near_face)
    return worst


def check_dataset(data, cfg):
    """Raise :class:`AssumptionError` if the data break separability, ``delta`` or ``rho``."""
    C = cfg.polytope
    inside = C.contains(data.X)
    if np.any(inside != (data.y == 1)):
        raise AssumptionError("the polytope does not separate the two classes")
    if C.dim == 2:
        d_min = float(boundary_distance(C, data.X).min())
        if d_min < cfg.delta:
            raise AssumptionError(f"a point lies {d_min:.6g} from the boundary, closer than delta={cfg.delta}")
        rho = measure_rho(C, data.X, cfg.delta, cfg.R)
        if rho > cfg.rho:
            raise AssumptionError(f"measured rho={rho:.6g} exceeds configured rho={cfg.rho}")


def active_sets(state, X):
    """Boolean matrix: neuron ``k`` fires on point ``i`` and ``N(x_i) > 0``."""
    H = X @ state.normals.T - state.s
    alive = state.outputs(X) > 0
    return (H > 0) & alive[:, None]


def guided_loss(state, data, loss):
    out = state.outputs(data.X)
    if loss == "mse":
        return float(0.5 * np.mean((relu(out) - data.y) ** 2))
    return float(np.mean(data.y * softplus(-out) + (1 - data.y) * softplus(out)))


def guided_step(state, data, cfg):
    """One guided update of ``(v0, s, t)``; returns a new state."""
    eta = cfg.eta
    A = active_sets(state, data.X)
    hit = A.any(axis=0)
    v0, s, t, l = state.v0, state.s, state.t, state.l
    if hit.any():
        dv0 = 0.0
    elif cfg.loss == "mse":
        dv0 = -0.5 * (v0 - 1) * max(float(t.max()), cfg.delta) * eta
    else:
        dv0 = (1 - 1 / (1 + math.exp(-v0))) * eta
    shrink = eta * t ** 2 / (v0 + eta * t)
    ds = np.where(hit, shrink * (l - s) / (l + t - s), 0.0)
    dt = np.where(hit, ds - shrink, (t * dv0 - eta * t ** 2) / (v0 + eta * t))
    return GuidedState(v0 + dv0, s + ds, t + dt, l.copy(), state.normals.copy())


def _guided_net_step(net, data, cfg, loss):
    if cfg.loss != loss:
        raise ValidationError(f"config is for loss {cfg.loss!r}")
    state = GuidedState.from_network(net, cfg.polytope)
    if np.any(state.s >= state.l) or np.any(state.t <= 0):
        raise AssumptionError("hinges must stay inside the polytope with positive height")
    return guided_step(state, data, cfg).to_network()


def guided_step_mse(net, data, cfg):
    """Apply one guided MSE update to a net and return the updated net."""
    return _guided_net_step(net, data, cfg, "mse")


def guided_step_bce(net, data, cfg):
    """Apply one guided BCE update to a net and return the updated net."""
    return _guided_net_step(net, data, cfg, "bce")


@dataclass
class GuidedTrace:
    losses: list = field(default_factory=list)
    v0: list = field(default_factory=list)
    s: list = field(default_factory=list)
    t: list = field(default_factory=list)
    final: GuidedState | None = None

    @property
    def steps(self):
        return len(self.losses) - 1

    def rows(self):
        for i, (L, v0) in enumerate(zip(self.losses, self.v0)):
            yield {"step": i, "loss": L, "v0": v0, "min_t": float(np.min(self.t[i])),
                   "max_s_gap": float(np.max(self.s[i]))}


def guided_descent(state, data, cfg, max_steps=10000, stop_below=1e-10, validate=True):
    """Run guided steps until the loss drops below ``stop_below`` or ``max_steps``."""
    if validate:
        check_initialization(state, cfg)
        check_dataset(data, cfg)
    trace = GuidedTrace()

    def record(st):
        trace.losses.append(guided_loss(st, data, cfg.loss))
        trace.v0.append(st.v0)
        trace.s.append(st.s.copy())
        trace.t.append(st.t.copy())

    record(state)
    for _ in range(max_steps):
        if trace.losses[-1] < stop_below:
            break
        state = guided_step(state, data, cfg)
        if not np.all(np.isfinite(state.t)) or not math.isfinite(state.v0):
            raise AssumptionError("guided parameters left the finite range")
        record(state)
    trace.final = state
    logger.info("guided %s: %d steps, final loss %.3e", cfg.loss, trace.steps, trace.losses[-1])
    return trace


def square_fixture(half_side=1.0, delta=0.05, depth=0.3, n_per_face=20):
    """Labelled points on the rays through the face centers of a square.

    Each ray carries ``n_per_face`` points inside the square at distances
    ``delta .. depth`` from the face and as many outside.  No point lies
    near a corner, so the edge-sparsity ratio measures zero.
    """
    C = box([-half_side] * 2, [half_side] * 2)
    gaps = np.linspace(delta, depth, n_per_face)
    X, y = [], []
    for n in C.W:
        X.append((half_side - gaps)[:, None] * n)
        y.append(np.ones(n_per_face, dtype=int))
        X.append((half_side + gaps)[:, None] * n)
        y.append(np.zeros(n_per_face, dtype=int))
    return C, LabeledDataset(np.vstack(X), np.concatenate(y))
