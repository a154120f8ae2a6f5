import numpy as np
import pytest

from polynet.data import gen_synthetic, reference_cover
from polynet.errors import ValidationError
from polynet.plotting import data_bounds, decision_grid, plot_decision, plot_trace, write_grid_csv

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def test_data_bounds_pads_each_side():
    lo, hi = data_bounds(np.array([[0.0, 0.0], [10.0, 2.0]]))
    assert lo == [-1.0, -0.2]
    assert hi == [11.0, 2.2]


def test_data_bounds_degenerate_axis():
    lo, hi = data_bounds(np.array([[1.0, 5.0], [3.0, 5.0]]))
    assert hi[1] - lo[1] == pytest.approx(0.2)


def test_data_bounds_rejects_3d():
    with pytest.raises(ValidationError):
        data_bounds(np.zeros((3, 3)))


def test_decision_grid_orientation():
    xs, ys, Z = decision_grid(lambda X: X[:, 0] - 2 * X[:, 1], [0, 0], [1, 2], resolution=5)
    assert Z.shape == (5, 5)
    assert Z[3, 1] == pytest.approx(xs[1] - 2 * ys[3])
    with pytest.raises(ValidationError):
        decision_grid(lambda X: X[:, 0], [0, 0], [1, 1], resolution=1)


def test_grid_csv(tmp_path):
    xs, ys, Z = decision_grid(lambda X: X.sum(axis=1), [0, 0], [1, 1], resolution=3)
    write_grid_csv(tmp_path / "g.csv", xs, ys, Z)
    rows = (tmp_path / "g.csv").read_text().splitlines()
    assert rows[0] == "x,y,value"
    assert len(rows) == 10
    x, y, v = map(float, rows[-1].split(","))
    assert v == x + y == 2.0


def test_decision_figure_with_cover(tmp_path):
    cover = reference_cover("hexagon_pentagon")
    data = gen_synthetic("hexagon_pentagon", 200, seed=0)
    lo, hi = data_bounds(data.X)
    grid = decision_grid(lambda X: cover.votes(X) - 0.5, lo, hi, resolution=40)
    path = tmp_path / "d.png"
    plot_decision(path, grid, data, cover, title="hexagon")
    assert path.read_bytes()[:8] == PNG_MAGIC


def test_decision_figure_needs_a_frame(tmp_path):
    with pytest.raises(ValidationError):
        plot_decision(tmp_path / "x.png")


def test_trace_figure_handles_zero_losses(tmp_path):
    path = tmp_path / "t.png"
    plot_trace(path, [0, 1, 2], [1.0, 0.5, 0.0])
    assert path.read_bytes()[:8] == PNG_MAGIC
    plot_trace(tmp_path / "t.svg", [0, 1], [1.0, 0.1], title="svg")
    assert b"<svg" in (tmp_path / "t.svg").read_bytes()
