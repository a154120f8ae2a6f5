"""Convex polytopes in half-space form and polytope-basis covers.

A polytope is stored as ``W x + b <= 0`` with unit-length rows of ``W``
(outward normals).  A cover is a pair of polytope lists; a point is labelled 1
when it lies in more positive than negative members.
"""

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from polynet.errors import (
    DuplicateFaceError,
    EmptyPolytopeError,
    UnboundedPolytopeError,
    ValidationError,
)

logger = logging.getLogger(__name__)

ABS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """Half-space ``w . x + b <= 0`` with ``||w|| = 1``."""

    w: np.ndarray
    b: float

    @classmethod
    def normalized(cls, w, b):
        w = np.asarray(w, dtype=float)
        norm = np.linalg.norm(w)
        if not np.isfinite(norm) or norm < 1e-300:
            raise ValidationError("hyperplane normal must be a finite nonzero vector")
        return cls(w / norm, float(b) / norm)

    def to_dict(self):
        return {"w": self.w.tolist(), "b": self.b}


class ConvexPolytope:
    """Intersection of half-spaces ``W x + b <= 0``.

    Rows of ``W`` are rescaled to unit length on construction.  Redundant
    faces are kept.  Two faces that describe the same half-space raise
    :class:`DuplicateFaceError`.
    """

    functional = False

    def __init__(self, W, b):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float)).ravel()
        if W.ndim != 2 or W.shape[0] == 0:
            raise ValidationError("a polytope needs at least one face")
        if W.shape[0] != b.shape[0]:
            raise ValidationError(f"{W.shape[0]} normals but {b.shape[0]} offsets")
        norms = np.linalg.norm(W, axis=1)
        if not np.all(np.isfinite(norms)) or np.any(norms < 1e-300) or not np.all(np.isfinite(b)):
            raise ValidationError("face normals must be finite and nonzero")
        self.W = W / norms[:, None]
        self.b = b / norms
        self._check_duplicates()

    def _check_duplicates(self):
        rows = np.hstack([self.W, self.b[:, None]])
        for i, j in itertools.combinations(range(rows.shape[0]), 2):
            if np.allclose(rows[i], rows[j], rtol=0.0, atol=1e-12):
                raise DuplicateFaceError(f"faces {i} and {j} coincide")

    @classmethod
    def from_faces(cls, faces):
        return cls([f.w for f in faces], [f.b for f in faces])

    @classmethod
    def from_vertices(cls, vertices):
        """Convex hull of a full-dimensional point set (dimension >= 2)."""
        hull = ConvexHull(np.asarray(vertices, dtype=float))
        eq = np.unique(np.round(hull.equations, 12), axis=0)
        return cls(eq[:, :-1], eq[:, -1])

    @property
    def dim(self):
        return self.W.shape[1]

    @property
    def n_faces(self):
        return self.W.shape[0]

    @property
    def faces(self):
        return [Hyperplane(w.copy(), float(b)) for w, b in zip(self.W, self.b)]

    def slack(self, X):
        """Signed face values ``W x + b`` with shape ``(n, m)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[-1] != self.dim:
            raise ValidationError(f"points have dimension {X.shape[-1]}, polytope has {self.dim}")
        return X @ self.W.T + self.b

    def contains(self, X, tol=0.0):
        """Non-strict membership; returns a bool for one point, else an array."""
        X = np.asarray(X, dtype=float)
        inside = np.all(self.slack(X) <= tol, axis=1)
        return bool(inside[0]) if X.ndim == 1 else inside

    def chebyshev_center(self):
        """Center and radius of the largest inscribed ball.

        Raises :class:`EmptyPolytopeError` when the interior is empty.  The
        radius is capped at 1e6 so unbounded regions still return a point.
        """
        m, d = self.W.shape
        c = np.zeros(d + 1)
        c[-1] = -1.0
        A = np.hstack([self.W, np.ones((m, 1))])
        bounds = [(None, None)] * d + [(0.0, 1e6)]
        res = linprog(c, A_ub=A, b_ub=-self.b, bounds=bounds, method="highs")
        if res.status != 0 or res.x[-1] <= 1e-12:
            raise EmptyPolytopeError("polytope has empty interior")
        return res.x[:d], float(res.x[-1])

    def is_bounded(self):
        if np.linalg.matrix_rank(self.W) < self.dim:
            return False
        try:
            _max_min_balanced(self.W)
        except UnboundedPolytopeError:
            return False
        return True

    def vertices_2d(self):
        """Vertices of a bounded polygon in counter-clockwise order."""
        if self.dim != 2:
            raise ValidationError("vertices_2d needs a planar polytope")
        if not self.is_bounded():
            raise UnboundedPolytopeError("polygon is unbounded")
        self.chebyshev_center()
        pts = []
        for i, j in itertools.combinations(range(self.n_faces), 2):
            A = self.W[[i, j]]
            if abs(np.linalg.det(A)) < 1e-12:
                continue
            x = np.linalg.solve(A, -self.b[[i, j]])
            if np.all(self.slack(x)[0] <= ABS_TOL * (1.0 + np.abs(x).max())):
                pts.append(x)
        pts = np.array(pts)
        keep = []
        for p in pts:
            if not any(np.linalg.norm(p - q) <= ABS_TOL * (1.0 + np.abs(p).max()) for q in keep):
                keep.append(p)
        V = np.array(keep)
        center = V.mean(axis=0)
        order = np.argsort(np.arctan2(V[:, 1] - center[1], V[:, 0] - center[0]))
        return V[order]

    def to_dict(self):
        return {"faces": [{"w": w.tolist(), "b": float(b)} for w, b in zip(self.W, self.b)]}

    @classmethod
    def from_dict(cls, data):
        faces = data["faces"]
        return cls([f["w"] for f in faces], [f["b"] for f in faces])

    def __repr__(self):
        return f"ConvexPolytope(dim={self.dim}, faces={self.n_faces})"


class FunctionalPolytope:
    """Convex region given by a level set of a convex or concave half network.

    ``relation == "<"`` means ``{x : net(x) < threshold}`` for a convex net;
    ``relation == ">"`` means ``{x : net(x) > threshold}`` for a concave net.
    The number of faces is not known in closed form, so ``n_faces`` is None.
    """

    functional = True
    n_faces = None

    def __init__(self, net, threshold, relation):
        if relation not in ("<", ">"):
            raise ValidationError(f"relation must be '<' or '>', got {relation!r}")
        self.net = net
        self.threshold = float(threshold)
        self.relation = relation

    @property
    def dim(self):
        return self.net.dim

    def contains(self, X):
        X = np.asarray(X, dtype=float)
        vals = self.net.forward(np.atleast_2d(X))
        inside = vals < self.threshold if self.relation == "<" else vals > self.threshold
        return bool(inside[0]) if X.ndim == 1 else inside

    def to_dict(self):
        return {
            "functional": True,
            "relation": self.relation,
            "threshold": self.threshold,
            "network": self.net.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        from polynet.networks import TwoLayerNet

        return cls(TwoLayerNet.from_dict(data["network"]), data["threshold"], data["relation"])

    def __repr__(self):
        return f"FunctionalPolytope({self.relation} {self.threshold:.4g}, width={self.net.width})"


def _member_from_dict(data):
    if data.get("functional"):
        return FunctionalPolytope.from_dict(data)
    return ConvexPolytope.from_dict(data)


class PolytopeBasisCover:
    """Positive and negative polytope lists that vote on a label."""

    def __init__(self, positives=(), negatives=(), dim=None):
        self.positives = list(positives)
        self.negatives = list(negatives)
        dims = {p.dim for p in self.positives + self.negatives}
        if dim is not None:
            dims.add(int(dim))
        if len(dims) > 1:
            raise ValidationError(f"cover members disagree on dimension: {sorted(dims)}")
        self.dim = dims.pop() if dims else None

    def __len__(self):
        return len(self.positives) + len(self.negatives)

    @property
    def n_faces(self):
        """Total face count, or None when a functional member is present."""
        counts = [p.n_faces for p in self.positives + self.negatives]
        if any(c is None for c in counts):
            return None
        return int(sum(counts))

    def votes(self, X):
        """Positive memberships minus negative memberships per point."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        v = np.zeros(X.shape[0], dtype=int)
        for p in self.positives:
            v += p.contains(X)
        for q in self.negatives:
            v -= q.contains(X)
        return v

    def classify(self, X):
        return (self.votes(X) > 0).astype(int)

    def accuracy(self, X, y):
        return float(np.mean(self.classify(X) == np.asarray(y)))

    def misclassified(self, X, y):
        return np.flatnonzero(self.classify(X) != np.asarray(y))

    def to_dict(self):
        return {
            "dim": self.dim,
            "positives": [p.to_dict() for p in self.positives],
            "negatives": [q.to_dict() for q in self.negatives],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            [_member_from_dict(p) for p in data.get("positives", [])],
            [_member_from_dict(q) for q in data.get("negatives", [])],
            dim=data.get("dim"),
        )

    def __repr__(self):
        return f"PolytopeBasisCover(P={len(self.positives)}, Q={len(self.negatives)}, faces={self.n_faces})"


def cover_classify(cover, X):
    """Label points by majority vote of a cover; an empty cover gives 0."""
    return cover.classify(X)


def polytope_contains(P, X, tol=0.0):
    """Membership mask of the rows of ``X`` in polytope ``P``."""
    return P.contains(X, tol) if isinstance(P, ConvexPolytope) else P.contains(X)


@dataclass(frozen=True)
class FacetMeasureSet:
    """Edge lengths and area of a polygon, one measure per face (0 if redundant)."""

    measures: np.ndarray
    volume: float

    def closure_residual(self, W):
        return float(np.linalg.norm(self.measures @ W))


def facet_measures_2d(P):
    """Edge lengths and area of a bounded polygon.

    Vertices come from pairwise face intersections that satisfy every
    constraint; the area uses the shoelace formula.  Faces touching the
    polygon in at most one point get measure 0.
    """
    V = P.vertices_2d()
    measures = np.zeros(P.n_faces)
    scale = 1.0 + np.abs(V).max()
    direction = np.column_stack([-P.W[:, 1], P.W[:, 0]])
    for k in range(P.n_faces):
        on_face = np.abs(V @ P.W[k] + P.b[k]) <= ABS_TOL * scale
        if on_face.sum() >= 2:
            t = V[on_face] @ direction[k]
            measures[k] = t.max() - t.min()
    x, y = V[:, 0], V[:, 1]
    volume = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    fm = FacetMeasureSet(measures, float(volume))
    resid = fm.closure_residual(P.W)
    if resid > 1e-6 * max(measures.sum(), 1.0):
        raise ValidationError(f"facet measures fail to close (residual {resid:.3g})")
    return fm


def _max_min_balanced(W):
    """Solve max t s.t. W^T c = 0, sum(c) = m, c >= t; returns (c, t)."""
    m, d = W.shape
    # variables: c_1..c_m, t ; maximize t
    cost = np.zeros(m + 1)
    cost[-1] = -1.0
    A_eq = np.zeros((d + 1, m + 1))
    A_eq[:d, :m] = W.T
    A_eq[d, :m] = 1.0
    b_eq = np.zeros(d + 1)
    b_eq[d] = m
    A_ub = np.hstack([-np.eye(m), np.ones((m, 1))])
    res = linprog(cost, A_ub=A_ub, b_ub=np.zeros(m), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * m + [(None, None)], method="highs")
    if res.status != 0 or res.x[-1] <= 1e-9:
        raise UnboundedPolytopeError("face normals admit no strictly positive balanced weighting")
    return res.x[:m], float(res.x[-1])


def balanced_coefficients(P):
    """Positive weights ``c`` with ``sum_k c_k w_k = 0`` and ``sum_k c_k = m``.

    Among all such weightings the one maximizing ``min_k c_k`` is returned, so
    every face keeps a strictly positive weight.  The LP answer is then
    projected back onto the affine constraint set to push the residual to
    round-off level.  Raises :class:`UnboundedPolytopeError` when no strictly
    positive weighting exists, which is the case for unbounded polytopes
    whose normals do not positively span their own linear hull.
    """
    W = P.W
    m = W.shape[0]
    c, _ = _max_min_balanced(W)
    A = np.vstack([W.T, np.ones((1, m))])
    target = np.zeros(A.shape[0])
    target[-1] = m
    for _ in range(3):
        correction, *_ = np.linalg.lstsq(A @ A.T, A @ c - target, rcond=None)
        c = c - A.T @ correction
    if np.any(c <= 0):
        raise UnboundedPolytopeError("balanced weighting lost positivity after refinement")
    resid = np.linalg.norm(c @ W)
    if resid > 1e-8 * np.abs(c).sum():
        raise UnboundedPolytopeError(f"balanced weighting residual {resid:.3g} too large")
    return c


def distance_2d(P, X):
    """Euclidean distance from points to a bounded polygon (0 inside)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    V = P.vertices_2d()
    A, B = V, np.roll(V, -1, axis=0)
    AB = B - A
    t = np.einsum("nkd,kd->nk", X[:, None, :] - A[None], AB) / np.einsum("kd,kd->k", AB, AB)
    t = np.clip(t, 0.0, 1.0)
    proj = A[None] + t[..., None] * AB[None]
    dist = np.linalg.norm(X[:, None, :] - proj, axis=2).min(axis=1)
    dist[P.contains(X)] = 0.0
    return dist


def regular_polygon(m, radius=1.0, center=(0.0, 0.0), rotation=0.0):
    """Regular m-gon with the given circumradius."""
    angles = rotation + 2 * np.pi * np.arange(m) / m + np.pi / m
    W = np.column_stack([np.cos(angles), np.sin(angles)])
    apothem = radius * np.cos(np.pi / m)
    b = -(apothem + W @ np.asarray(center, dtype=float))
    return ConvexPolytope(W, b)


def box(lower, upper):
    """Axis-aligned box ``lower <= x <= upper``."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = lower.size
    W = np.vstack([np.eye(d), -np.eye(d)])
    b = np.concatenate([-upper, lower])
    return ConvexPolytope(W, b)


def simplex_faces(vertices):
    """Half-space form of a full-dimensional simplex given ``d + 1`` vertices."""
    V = np.asarray(vertices, dtype=float)
    n, d = V.shape
    if n != d + 1:
        raise ValidationError(f"a {d}-simplex needs {d + 1} vertices, got {n}")
    W, b = [], []
    for i in range(n):
        others = np.delete(V, i, axis=0)
        if d == 1:
            normal = np.array([1.0])
        else:
            # normal spans the null space of the edge vectors of the opposite facet
            _, _, vt = np.linalg.svd(others[1:] - others[0])
            normal = vt[-1]
        offset = -normal @ others[0]
        if normal @ V[i] + offset > 0:
            normal, offset = -normal, -offset
        W.append(normal)
        b.append(offset)
    return ConvexPolytope(W, b)
