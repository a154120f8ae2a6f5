"""Synthetic planar datasets, image-file parsers and one-vs-rest labelling.

All generators are deterministic for a given seed.  Shape datasets
(``two_triangles``, ``hexagon_pentagon``) reject points closer than
``margin`` to a class boundary, so the classes stay separated for any noise.
"""

import gzip
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from polynet.errors import DataFormatError, ValidationError
from polynet.geometry import ConvexPolytope, PolytopeBasisCover, regular_polygon
from polynet.networks import LabeledDataset

logger = logging.getLogger(__name__)

SYNTHETIC_KINDS = ("swiss_roll", "xor", "two_circles", "two_moons", "two_triangles", "hexagon_pentagon")

# noise levels below which 20 seeds at the default size all kept a positive
# class margin; the shape kinds reject near-boundary points for any noise
NOISE_THRESHOLDS = {
    "swiss_roll": 0.03,
    "xor": 0.3,
    "two_circles": 0.08,
    "two_moons": 0.1,
    "two_triangles": float("inf"),
    "hexagon_pentagon": float("inf"),
}

# spiral arm angles; the label-0 arm is the label-1 arm rotated by pi
_ROLL_THETA = (0.5 * np.pi, 3.5 * np.pi)


def _balanced_split(n):
    return n - n // 2, n // 2


def swiss_roll(n=1000, noise=0.0, seed=0):
    """Two interleaved planar spiral arms, one and a half turns each, in [-1, 1]^2.

    Arm points are spread uniformly in arc length.  The arms stay apart for
    ``noise`` well below 0.1.
    """
    rng = np.random.default_rng(seed)
    n1, n0 = _balanced_split(n)
    lo, hi = _ROLL_THETA

    def arm(count, phase):
        # arc length of r = theta grows roughly like theta^2
        u = rng.random(count)
        theta = np.sqrt(lo ** 2 + u * (hi ** 2 - lo ** 2))
        r = theta / (hi + np.pi)
        return np.column_stack([r * np.cos(theta + phase), r * np.sin(theta + phase)])

    X = np.vstack([arm(n1, 0.0), arm(n0, np.pi)])
    X += rng.normal(0.0, noise, X.shape)
    y = np.concatenate([np.ones(n1, int), np.zeros(n0, int)])
    return LabeledDataset(X, y)


def xor(n=400, noise=0.2, seed=0):
    """Gaussian blobs at (+-1, +-1); label 1 on the (1,1)/(-1,-1) diagonal."""
    rng = np.random.default_rng(seed)
    centers = np.array([[1, 1], [-1, -1], [1, -1], [-1, 1]], dtype=float)
    idx = np.arange(n) % 4
    X = centers[idx] + rng.normal(0.0, noise, (n, 2))
    return LabeledDataset(X, (idx < 2).astype(int))


def two_circles(n=400, noise=0.05, seed=0, factor=0.5):
    """Concentric circles of radius ``factor`` (label 1) and 1 (label 0)."""
    rng = np.random.default_rng(seed)
    n1, n0 = _balanced_split(n)
    theta = rng.uniform(0, 2 * np.pi, n)
    r = np.concatenate([np.full(n1, factor), np.ones(n0)]) + rng.normal(0.0, noise, n)
    X = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return LabeledDataset(X, np.concatenate([np.ones(n1, int), np.zeros(n0, int)]))


def two_moons(n=400, noise=0.1, seed=0):
    """Interleaving half circles centered near the origin; label 1 is the upper moon."""
    rng = np.random.default_rng(seed)
    n1, n0 = _balanced_split(n)
    t1 = rng.uniform(0, np.pi, n1)
    t0 = rng.uniform(0, np.pi, n0)
    upper = np.column_stack([np.cos(t1), np.sin(t1)])
    lower = np.column_stack([1 - np.cos(t0), 0.5 - np.sin(t0)])
    X = np.vstack([upper, lower]) - np.array([0.5, 0.25])
    X += rng.normal(0.0, noise, X.shape)
    return LabeledDataset(X, np.concatenate([np.ones(n1, int), np.zeros(n0, int)]))


def _triangles():
    left = ConvexPolytope.from_vertices([[-1.2, -0.8], [-0.2, -0.8], [-0.7, 0.9]])
    right = ConvexPolytope.from_vertices([[0.2, 0.8], [1.2, 0.8], [0.7, -0.9]])
    return left, right


def _hexagon_pentagon():
    return regular_polygon(6, radius=1.0), regular_polygon(5, radius=0.45, rotation=0.3)


def reference_cover(kind):
    """Hand-built cover that classifies the named synthetic dataset exactly."""
    if kind == "two_triangles":
        return PolytopeBasisCover(list(_triangles()), [])
    if kind == "hexagon_pentagon":
        hexagon, pentagon = _hexagon_pentagon()
        return PolytopeBasisCover([hexagon], [pentagon])
    if kind == "swiss_roll":
        return swiss_roll_cover()
    raise ValidationError(f"no reference cover for {kind!r}")


def _shape_dataset(cover, n, noise, seed, margin, extent):
    """Uniform points in a box, jittered by ``noise``, kept away from the cover's boundaries
    and labelled by ``cover``."""
    rng = np.random.default_rng(seed)
    members = cover.positives + cover.negatives
    keep_X = []
    total = 0
    while total < n:
        X = rng.uniform(-extent, extent, (4 * n, 2))
        if noise:
            X = X + rng.normal(0.0, noise, X.shape)
        near = np.zeros(X.shape[0], dtype=bool)
        for p in members:
            s = p.slack(X)
            # close to a face and not clearly outside the polytope
            near |= np.any(np.abs(s) < margin, axis=1) & np.all(s < margin, axis=1)
        X = X[~near]
        keep_X.append(X)
        total += X.shape[0]
    X = np.vstack(keep_X)[:n]
    return LabeledDataset(X, cover.classify(X))


def two_triangles(n=600, noise=0.0, seed=0, margin=0.05):
    return _shape_dataset(reference_cover("two_triangles"), n, noise, seed, margin, 1.5)


def hexagon_pentagon(n=600, noise=0.0, seed=0, margin=0.05):
    """Label 1 inside a hexagon but outside an inner pentagon."""
    return _shape_dataset(reference_cover("hexagon_pentagon"), n, noise, seed, margin, 1.3)


_GENERATORS = {
    "swiss_roll": swiss_roll,
    "xor": xor,
    "two_circles": two_circles,
    "two_moons": two_moons,
    "two_triangles": two_triangles,
    "hexagon_pentagon": hexagon_pentagon,
}


@dataclass(frozen=True)
class SyntheticSpec:
    """Which synthetic set to draw; ``None`` keeps the generator default."""

    kind: str
    n: int | None = None
    noise: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise ValidationError(f"unknown dataset kind {self.kind!r}; choose from {SYNTHETIC_KINDS}")
        if self.n is not None and self.n < 2:
            raise ValidationError("need at least two points")
        if self.noise is not None and self.noise < 0:
            raise ValidationError("noise must be nonnegative")


def gen_synthetic(kind, n=None, noise=None, seed=0):
    """Generate a synthetic set from a :class:`SyntheticSpec` or from its fields.

    Classes keep a positive margin for noise below ``NOISE_THRESHOLDS[kind]``.
    """
    spec = kind if isinstance(kind, SyntheticSpec) else SyntheticSpec(kind, n, noise, seed)
    kwargs = {"seed": spec.seed}
    if spec.n is not None:
        kwargs["n"] = int(spec.n)
    if spec.noise is not None:
        kwargs["noise"] = float(spec.noise)
    return _GENERATORS[spec.kind](**kwargs)


def class_margin(data):
    """Smallest distance between a label-1 point and a label-0 point."""
    pos, neg = data.X[data.y == 1], data.X[data.y == 0]
    if pos.size == 0 or neg.size == 0:
        return float("inf")
    return float(cKDTree(neg).query(pos)[0].min())


def _open(path):
    path = str(path)
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def load_idx(path):
    """Parse an IDX file (big-endian header, unsigned-byte payload).

    Image files (magic 0x803) come back as float arrays scaled to [0, 1];
    label files (magic 0x801) as integer arrays.
    """
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated header at byte offset {len(raw)}")
    if raw[0] != 0 or raw[1] != 0:
        raise DataFormatError(f"{path}: bad IDX magic at byte offset 0: {raw[:4].hex()}")
    dtype_code, ndim = raw[2], raw[3]
    if dtype_code != 0x08:
        raise DataFormatError(f"{path}: bad IDX magic at byte offset 2: type code {dtype_code:#04x}, "
                              "only unsigned bytes are supported")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated header at byte offset {len(raw)}")
    shape = tuple(int(x) for x in np.frombuffer(raw[4:header], dtype=">u4"))
    payload = np.frombuffer(raw[header:], dtype=np.uint8)
    if payload.size != int(np.prod(shape)):
        raise DataFormatError(f"{path}: payload has {payload.size} bytes, header promises {shape}")
    payload = payload.reshape(shape)
    if ndim == 1:
        return payload.astype(np.int64)
    return payload.astype(np.float64) / 255.0


def load_idx_pair(images_path, labels_path):
    """Images (flattened, in [0, 1]) and labels from two IDX files.

    The image file must carry magic 0x803 and the label file 0x801, and
    the two counts must agree.
    """
    images, labels = load_idx(images_path), load_idx(labels_path)
    if images.ndim < 2:
        raise DataFormatError(f"{images_path}: expected an image file (magic 0x803)")
    if labels.ndim != 1:
        raise DataFormatError(f"{labels_path}: expected a label file (magic 0x801)")
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(f"{images_path} has {images.shape[0]} images but {labels_path} has {labels.shape[0]} labels")
    return images.reshape(images.shape[0], -1), labels


def load_cifar_binary(paths):
    """Parse one or more CIFAR-10 binary batches of 3073-byte records (label, 3x32x32 pixels).

    Returns images of shape ``(n, 3, 32, 32)`` in [0, 1] and integer labels.
    """
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    images, labels = [], []
    for path in paths:
        with _open(path) as fh:
            raw = np.frombuffer(fh.read(), dtype=np.uint8)
        if raw.size % 3073:
            raise DataFormatError(f"{path}: size {raw.size} is not a multiple of 3073")
        rec = raw.reshape(-1, 3073)
        bad = np.flatnonzero(rec[:, 0] > 9)
        if bad.size:
            raise DataFormatError(f"{path}: label byte {int(rec[bad[0], 0])} out of range in record {int(bad[0])}")
        images.append(rec[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0)
        labels.append(rec[:, 0].astype(np.int64))
    return np.concatenate(images), np.concatenate(labels)


_MNIST_FILES = (
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
)


def _find(directory, stem):
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        p = Path(directory) / name
        if p.exists():
            return p
    raise FileNotFoundError(f"{stem} not found in {directory}")


def load_mnist_dir(directory):
    """Training and test splits of an MNIST-format directory, concatenated.

    Returns flattened images in [0, 1] and integer labels.
    """
    images, labels = [], []
    for img_stem, lab_stem in _MNIST_FILES:
        img, lab = load_idx_pair(_find(directory, img_stem), _find(directory, lab_stem))
        images.append(img)
        labels.append(lab)
    return np.vstack(images), np.concatenate(labels)


def binarize(X, labels, target_class, complement=False, noise=0.0, seed=0):
    """One-vs-rest labels, optionally with label noise.

    Label 1 goes to ``target_class`` (or to every other class when
    ``complement``).  With ``noise = r`` a fraction ``floor(r * n_c)`` of the
    label-1 members is swapped for randomly drawn label-0 images, so the
    label-1 set keeps its size.
    """
    X = np.asarray(X)
    labels = np.asarray(labels)
    if not 0.0 <= noise < 1.0:
        raise ValidationError("noise must lie in [0, 1)")
    member = labels == target_class
    if not member.any():
        raise ValidationError(f"class {target_class} does not occur in the labels")
    if complement:
        member = ~member
    pos, neg = np.flatnonzero(member), np.flatnonzero(~member)
    k = int(np.floor(noise * pos.size))
    if k > neg.size:
        raise ValidationError("not enough other-class images to swap in")
    y = member.astype(int)
    if k:
        rng = np.random.default_rng(seed)
        y[rng.choice(pos, k, replace=False)] = 0
        y[rng.choice(neg, k, replace=False)] = 1
    return LabeledDataset(X.reshape(X.shape[0], -1), y)


def save_csv(data, path):
    """Write ``x0..x{d-1},label`` rows with a header line."""
    header = ",".join([f"x{i}" for i in range(data.dim)] + ["label"])
    np.savetxt(path, np.column_stack([data.X, data.y]), delimiter=",", header=header, comments="",
               fmt=["%.17g"] * data.dim + ["%d"])


def load_csv(path):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    if arr.shape[1] < 2:
        raise DataFormatError(f"{path}: need at least one feature column and a label column")
    return LabeledDataset(arr[:, :-1], arr[:, -1].astype(int))


# pentagons (first-face angle in degrees, support offsets) of the nested roll cover
_ROLL_PENTAGONS = (
    (0.0, (0.454949, 0.542951, 0.631195, 0.719598, 0.743975)),
    (0.0, (0.459939, 0.323805, 0.411085, 0.498909, 0.58705)),
    (27.0, (0.479841, 0.143744, 0.226955, 0.312955, 0.400133)),
    (0.0, (0.237602, 0.237415, -0.058172, 0.06985, 0.15388)),
)


def swiss_roll_cover():
    """Four nested pentagons P1, Q1, P2, Q2 that label :func:`swiss_roll` data exactly.

    Each pentagon was fitted around the points its layer must enclose; the
    exactness holds for noise-free data from any seed.
    """
    polys = []
    for first, offsets in _ROLL_PENTAGONS:
        ang = np.radians(first) + 2 * np.pi * np.arange(5) / 5
        polys.append(ConvexPolytope(np.column_stack([np.cos(ang), np.sin(ang)]), -np.asarray(offsets)))
    return PolytopeBasisCover([polys[0], polys[2]], [polys[1], polys[3]])
