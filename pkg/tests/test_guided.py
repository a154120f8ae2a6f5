import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polynet.errors import AssumptionError, ValidationError
from polynet.geometry import box, regular_polygon
from polynet.guided import (
    GuidedDescentConfig,
    GuidedState,
    active_sets,
    boundary_distance,
    check_dataset,
    check_initialization,
    guided_descent,
    guided_loss,
    guided_step,
    guided_step_bce,
    guided_step_mse,
    initial_state,
    measure_rho,
    square_fixture,
)
from polynet.networks import LabeledDataset

RHO, DELTA, R = 0.01, 0.05, 0.1


def config(loss="mse", eta=None, polytope=None):
    C = polytope if polytope is not None else square_fixture()[0]
    if eta is None:
        eta = 1.0 if loss == "mse" else 0.9
    return GuidedDescentConfig(C, DELTA, RHO, R, eta, loss)


def start(cfg):
    lo, hi = cfg.v0_window()
    return initial_state(cfg, min((lo + hi) / 2, lo + 2), 0.8 * R, 0.9 * R)


def test_eta_above_cap_is_rejected():
    cfg = config()
    with pytest.raises(ValidationError):
        config(eta=cfg.eta_cap() * 1.01)
    with pytest.raises(ValidationError):
        config("bce", eta=1.0)


def test_config_validation():
    C = square_fixture()[0]
    with pytest.raises(ValidationError):
        GuidedDescentConfig(C, DELTA, 1.5, R, 0.1)
    with pytest.raises(ValidationError):
        GuidedDescentConfig(C, 0.2, RHO, 0.1, 0.1)
    with pytest.raises(ValidationError):
        GuidedDescentConfig(box([0.5, 0.5], [1, 1]), DELTA, RHO, R, 0.1)
    with pytest.raises(ValidationError):
        GuidedDescentConfig(C, DELTA, RHO, R, 0.1, loss="hinge")


def test_mse_cap_and_window_values():
    cfg = config()
    # four faces: min(2/delta, 2/(4R), 16 rho/((1-rho)R))
    assert cfg.eta_cap() == pytest.approx(min(40.0, 5.0, 16 * RHO / (0.99 * R)))
    lo, hi = cfg.v0_window()
    assert lo == pytest.approx(RHO / 0.99 * 16 * RHO * R ** 2 / DELTA ** 2)
    assert hi == 1.0


def test_bce_window_upper_end():
    lo, hi = config("bce").v0_window()
    assert lo == 0.0
    assert hi == pytest.approx(np.log(0.99 * DELTA / (4 * RHO * R) - 1))


def test_fixture_satisfies_assumptions():
    C, data = square_fixture()
    assert measure_rho(C, data.X, DELTA, R) == 0.0
    assert boundary_distance(C, data.X).min() == pytest.approx(DELTA)
    check_dataset(data, config())


def test_dataset_check_rejects_close_points():
    C, data = square_fixture()
    X = np.vstack([data.X, [[0.99, 0.0]]])
    bad = LabeledDataset(X, np.append(data.y, 1))
    with pytest.raises(AssumptionError, match="delta"):
        check_dataset(bad, config())


def test_dataset_check_rejects_corner_points():
    C, data = square_fixture()
    X = np.vstack([data.X, [[0.9, 0.9]]])
    bad = LabeledDataset(X, np.append(data.y, 1))
    with pytest.raises(AssumptionError, match="rho"):
        check_dataset(bad, config())


def test_dataset_check_rejects_inseparable_labels():
    C, data = square_fixture()
    flipped = LabeledDataset(data.X, 1 - data.y)
    with pytest.raises(AssumptionError):
        check_dataset(flipped, config())


def test_initialization_window():
    cfg = config()
    check_initialization(start(cfg), cfg)
    with pytest.raises(AssumptionError, match="hinge"):
        check_initialization(initial_state(cfg, 0.5, 0.095, 0.09), cfg)
    with pytest.raises(AssumptionError, match="v0"):
        check_initialization(initial_state(cfg, 1.5, 0.08, 0.09), cfg)


@pytest.mark.parametrize("loss", ["mse", "bce"])
def test_slope_steepens_by_eta(loss):
    cfg = config(loss)
    _, data = square_fixture()
    state = start(cfg)
    for _ in range(50):
        new = guided_step(state, data, cfg)
        ds = new.s - state.s
        slope = new.v0 / (new.t - ds)
        assert np.allclose(slope - state.v0 / state.t, cfg.eta)
        state = new


@given(st.integers(3, 9), st.floats(0.01, 0.2), st.integers(0, 10 ** 6))
def test_active_faces_keep_their_output(m, eta_frac, seed):
    rng = np.random.default_rng(seed)
    C = regular_polygon(m, 1.0)
    cfg = GuidedDescentConfig(C, DELTA, 0.3, R, eta_frac * min(2 / DELTA, 2 / (m * R)))
    state = initial_state(cfg, 0.5, 0.08, 0.09)
    # a point just inside every face keeps all neurons active
    X = (state.l - 0.03)[:, None] * C.W
    data = LabeledDataset(X, np.ones(m, dtype=int))
    assert active_sets(state, X).any(axis=0).all()
    new = guided_step(state, data, cfg)
    face_points = state.l[:, None] * C.W + rng.uniform(-0.01, 0.01, (m, 1)) * C.W[:, ::-1] * [1, -1]
    before = state.v0 - (state.v0 / state.t) * (face_points @ C.W.T - state.s).diagonal()
    after = new.v0 - (new.v0 / new.t) * (face_points @ C.W.T - new.s).diagonal()
    assert np.allclose(before, after)


@pytest.mark.parametrize("loss", ["mse", "bce"])
def test_loss_decreases_every_step(loss):
    cfg = config(loss)
    _, data = square_fixture()
    trace = guided_descent(start(cfg), data, cfg, max_steps=2000, stop_below=1e-6)
    assert np.all(np.diff(trace.losses) <= 0)


def test_mse_reaches_tolerance_quickly():
    cfg = config()
    _, data = square_fixture()
    trace = guided_descent(start(cfg), data, cfg, max_steps=10 ** 4, stop_below=1e-6)
    assert trace.losses[-1] < 1e-6
    assert trace.steps < 1000


def test_bias_moves_toward_one_once_active_sets_are_empty():
    cfg = config()
    _, data = square_fixture()
    trace = guided_descent(start(cfg), data, cfg, max_steps=3000, stop_below=0.0)
    v0 = np.array(trace.v0)
    assert np.all(np.diff(v0) >= 0)
    assert v0[-1] <= 1.0
    assert not active_sets(trace.final, data.X).any()


def test_network_roundtrip_and_step_wrappers():
    cfg = config()
    _, data = square_fixture()
    state = start(cfg)
    net = state.to_network()
    back = GuidedState.from_network(net, cfg.polytope)
    assert np.allclose(back.s, state.s) and np.allclose(back.t, state.t)
    assert np.allclose(net.forward(data.X), state.outputs(data.X))
    stepped = guided_step_mse(net, data, cfg)
    assert np.allclose(stepped.forward(data.X), guided_step(state, data, cfg).outputs(data.X))
    with pytest.raises(ValidationError):
        guided_step_bce(net, data, cfg)
    assert guided_loss(state, data, "mse") == pytest.approx(0.5 * np.mean((np.maximum(net.forward(data.X), 0) - data.y) ** 2))


def test_from_network_rejects_foreign_normals():
    cfg = config()
    net = start(cfg).to_network()
    net.W[0] = [0.6, 0.8]
    with pytest.raises(AssumptionError):
        GuidedState.from_network(net, cfg.polytope)
