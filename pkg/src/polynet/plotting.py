"""Decision grids and matplotlib figures for 2D covers, networks and traces.

Grids are plain numpy so they can be exported without a plotting backend;
the render functions use the object-oriented matplotlib API and write
straight to a file.
"""

import numpy as np

from polynet.errors import PolynetError, ValidationError
from polynet.geometry import ConvexPolytope, box


def data_bounds(X, pad=0.1):
    """Bounding box of 2D points padded by ``pad`` times its size on each side."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValidationError("grids need 2D inputs")
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (lo - pad * span).tolist(), (hi + pad * span).tolist()


def decision_grid(score, lower, upper, resolution=200):
    """Evaluate ``score`` on a ``resolution x resolution`` grid.

    Returns ``(xs, ys, Z)`` with ``Z[i, j] = score([xs[j], ys[i]])``.
    """
    if resolution < 2:
        raise ValidationError("resolution must be at least 2")
    xs = np.linspace(lower[0], upper[0], resolution)
    ys = np.linspace(lower[1], upper[1], resolution)
    gx, gy = np.meshgrid(xs, ys)
    Z = np.asarray(score(np.column_stack([gx.ravel(), gy.ravel()])), dtype=float)
    return xs, ys, Z.reshape(resolution, resolution)


def write_grid_csv(path, xs, ys, Z):
    with open(path, "w") as fh:
        fh.write("x,y,value\n")
        for i, y in enumerate(ys):
            for j, x in enumerate(xs):
                fh.write(f"{float(x)!r},{float(y)!r},{float(Z[i, j])!r}\n")


def _clipped_vertices(P, lower, upper):
    frame = box(lower, upper)
    try:
        clipped = ConvexPolytope(np.vstack([P.W, frame.W]), np.concatenate([P.b, frame.b]))
        return clipped.vertices_2d()
    except PolynetError:
        # empty inside the frame, or a face coincides with the frame
        return None


def _new_axes(figsize=(5.0, 4.5)):
    from matplotlib.figure import Figure

    fig = Figure(figsize=figsize)
    return fig, fig.add_subplot(1, 1, 1)


def plot_decision(path, grid=None, data=None, cover=None, title=None):
    """Filled sign map of ``grid`` with data points and cover outlines on top."""
    fig, ax = _new_axes()
    if grid is not None:
        xs, ys, Z = grid
        ax.contourf(xs, ys, Z > 0, levels=[-0.5, 0.5, 1.5], colors=["#dde6f3", "#f6e2cc"])
        ax.contour(xs, ys, Z, levels=[0.0], colors="k", linewidths=0.8)
        lower, upper = (xs[0], ys[0]), (xs[-1], ys[-1])
    elif data is not None:
        lower, upper = data_bounds(data.X)
    else:
        raise ValidationError("need a grid or data to set the frame")
    if data is not None:
        for label, color in ((0, "tab:blue"), (1, "tab:orange")):
            pts = data.X[data.y == label]
            ax.scatter(pts[:, 0], pts[:, 1], s=4, c=color, label=f"class {label}")
    if cover is not None:
        members = [(p, "tab:red") for p in cover.positives] + [(q, "tab:green") for q in cover.negatives]
        for poly, color in members:
            if getattr(poly, "functional", False):
                continue
            V = _clipped_vertices(poly, lower, upper)
            if V is not None:
                V = np.vstack([V, V[:1]])
                ax.plot(V[:, 0], V[:, 1], color=color, linewidth=1.2)
    ax.set_xlim(lower[0], upper[0])
    ax.set_ylim(lower[1], upper[1])
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    if data is not None:
        ax.legend(loc="upper right", fontsize=7, markerscale=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)


def plot_trace(path, steps, values, ylabel="loss", logy=True, title=None):
    """Line plot of a scalar trace, log scale by default."""
    fig, ax = _new_axes((5.0, 3.2))
    values = np.asarray(values, dtype=float)
    if logy and np.all(values > 0):
        ax.semilogy(steps, values, linewidth=1.0)
    else:
        ax.plot(steps, values, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
