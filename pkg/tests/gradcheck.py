"""Central-difference gradient oracle shared by the network and acceptance tests."""

import numpy as np

from polynet.data import gen_synthetic
from polynet.networks import (
    ConstrainedTwoLayerNet,
    LabeledDataset,
    ThreeLayerSumNet,
    TwoLayerNet,
    gradients,
    loss_value,
)

KINK_GAP = 1e-3


def numeric_gradients(net, data, loss, lambda0=1.0, lambda1=1.0, h=1e-5):
    out = []
    for p in net.param_arrays():
        g = np.zeros_like(p)
        for i in range(p.size):
            old = p.flat[i]
            p.flat[i] = old + h
            up = loss_value(net, data, loss, lambda0, lambda1)
            p.flat[i] = old - h
            down = loss_value(net, data, loss, lambda0, lambda1)
            p.flat[i] = old
            g.flat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def relative_error(analytic, numeric):
    """Largest entrywise ``|a - n| / max(|a|, |n|)`` over entries with magnitude above 1e-6."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = np.maximum(np.abs(a), np.abs(n))
        big = scale > 1e-6
        if np.any(big):
            worst = max(worst, float(np.max(np.abs(a - n)[big] / scale[big])))
        # tiny entries must agree in absolute terms
        if np.any(~big):
            assert np.max(np.abs(a - n)[~big]) < 1e-8
    return worst


def _min_gap(net, X):
    nets = net.subnets if isinstance(net, ThreeLayerSumNet) else [net]
    gaps = [np.abs(s.preactivations(X)).min() for s in nets if s.width]
    if isinstance(net, ThreeLayerSumNet):
        gaps.append(np.abs(net.subnet_outputs(X)).min())
    return min(gaps)


def random_case(rng):
    """A random (net, data, loss, lambdas) tuple with no point within KINK_GAP of a kink."""
    kinds = ("two_layer", "constrained", "three_layer")
    losses = ("mse", "bce", "weighted_bce")
    while True:
        kind = kinds[rng.integers(3)]
        loss = losses[rng.integers(3)]
        d = int(rng.integers(1, 4))
        n = int(rng.integers(3, 12))
        X = rng.normal(size=(n, d))
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        data = LabeledDataset(X, y)
        if kind == "two_layer":
            m = int(rng.integers(1, 6))
            net = TwoLayerNet(rng.normal(), rng.normal(size=m), rng.normal(size=(m, d)), rng.normal(size=m))
        elif kind == "constrained":
            m = int(rng.integers(1, 6))
            sign = 1 if rng.random() < 0.5 else -1
            W, b = rng.normal(size=(m, d)), rng.normal(size=m)
            v = -sign * (np.sqrt((W ** 2).sum(1) + b ** 2) + rng.random(m))
            net = ConstrainedTwoLayerNet(v, W, b, lam=float(rng.uniform(0.5, 5)), sign=sign)
        else:
            J = int(rng.integers(1, 4))
            lam = float(rng.uniform(0.5, 3))
            subs = []
            for _ in range(J):
                m = int(rng.integers(1, 4))
                W, b = rng.normal(size=(m, d)), rng.normal(size=m)
                subs.append(ConstrainedTwoLayerNet(-rng.uniform(0.2, 1.5, m), W, b, lam=lam))
            net = ThreeLayerSumNet(rng.choice([-1, 1], J), subs, lam)
        if _min_gap(net, X) < KINK_GAP:
            continue
        if loss == "mse" and np.abs(net.forward(X)).min() < KINK_GAP:
            continue
        lambdas = (float(rng.uniform(0.5, 3)), float(rng.uniform(0.5, 12))) if loss == "weighted_bce" else (1.0, 1.0)
        return net, data, loss, lambdas


def check_case(net, data, loss, lambdas):
    _, analytic = gradients(net, data, loss, *lambdas)
    numeric = numeric_gradients(net, data, loss, *lambdas)
    return relative_error(analytic, numeric)


def gradient_errors(n_cases=100, seed=0):
    rng = np.random.default_rng(seed)
    return [check_case(*random_case(rng)) for _ in range(n_cases)]


def moons_case():
    data = gen_synthetic("two_moons", 40, seed=1)
    rng = np.random.default_rng(2)
    net = TwoLayerNet(0.1, rng.normal(size=6), rng.normal(size=(6, 2)), rng.normal(size=6))
    return net, data
