import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_polygon(rng, m, center=(0.0, 0.0)):
    """Bounded polygon with ``m`` faces tangent to a circle at sorted random angles."""
    while True:
        angles = np.sort(rng.uniform(0, 2 * np.pi, m))
        gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))
        # every gap below pi keeps the polygon bounded; the floor avoids slivers
        if gaps.max() < 0.9 * np.pi and gaps.min() > 0.05:
            break
    W = np.column_stack([np.cos(angles), np.sin(angles)])
    r = rng.uniform(0.3, 1.0)
    return W, -(r + W @ np.asarray(center, dtype=float))


@pytest.fixture(scope="session")
def roll_sum_net():
    """Three-layer sum net trained on a swiss roll with compression, plus its data."""
    from polynet.data import gen_synthetic
    from polynet.training import init_tangent_sum_net, train_with_compression

    data = gen_synthetic("swiss_roll", 2000, seed=0)
    net = init_tangent_sum_net(data, 16, 20, seed=0)
    result = train_with_compression(net, data, epochs=5, steps_per_epoch=1000, eta=0.1)
    return result, data


@pytest.fixture(scope="session")
def roll_two_layer_net():
    from polynet.data import gen_synthetic
    from polynet.networks import TwoLayerNet
    from polynet.training import TrainConfig, train

    data = gen_synthetic("swiss_roll", 2000, seed=0)
    rng = np.random.default_rng(0)
    m = 50
    net = TwoLayerNet(0.0, rng.normal(0, 1, m), rng.normal(0, 2, (m, 2)), rng.normal(0, 1, m))
    net, _ = train(net, data, TrainConfig(eta=0.5, iterations=5000, record_every=500))
    return net, data


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
