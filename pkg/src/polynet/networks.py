"""Two- and three-layer ReLU networks with analytic gradients.

Three families are supported:

* :class:`TwoLayerNet` ``v0 + sum_k v_k relu(w_k . x + b_k)``;
* :class:`ConstrainedTwoLayerNet` whose bias is fixed to ``sign * lam`` and
  whose output weights all have sign ``-sign``; for ``sign = +1`` the output
  is concave, equals ``lam`` on a polytope and is below it elsewhere;
* :class:`ThreeLayerSumNet` ``-lam/2 + sum_j a_j relu(T_j(x))``.

Gradients use subgradient 0 at the ReLU kink.  Every trainable parameter is
exposed through ``param_arrays()``; gradients come back as a list with the
same layout so a gradient step is a plain zip.
"""

from dataclasses import dataclass

import numpy as np

from polynet.errors import NumericError, ValidationError

LOSSES = ("mse", "bce", "weighted_bce")


def relu(z):
    return np.maximum(z, 0.0)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    """``log(1 + exp(z))`` without overflow."""
    return np.logaddexp(0.0, z)


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr


@dataclass
class LabeledDataset:
    """Points ``X`` of shape (n, d) with binary labels ``y``."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y).astype(int).ravel()
        if self.X.shape[0] != self.y.shape[0]:
            raise ValidationError("X and y lengths differ")
        if self.X.shape[0] and not np.all(np.isin(self.y, (0, 1))):
            raise ValidationError("labels must be 0 or 1")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    def subset(self, mask):
        return LabeledDataset(self.X[mask], self.y[mask])


def _neurons_to_list(v, W, b):
    return [{"v": float(vk), "w": wk.tolist(), "b": float(bk)} for vk, wk, bk in zip(v, W, b)]


def _neurons_from_list(neurons, dim=None):
    if not neurons:
        if dim is None:
            raise ValidationError("cannot infer the input dimension of an empty layer")
        return np.zeros(0), np.zeros((0, dim)), np.zeros(0)
    v = np.array([n["v"] for n in neurons], dtype=float)
    W = np.array([n["w"] for n in neurons], dtype=float)
    b = np.array([n["b"] for n in neurons], dtype=float)
    return v, W, b


def _hidden_grads(v, W, b, X, g, Z=None):
    """Gradients of ``sum_i g_i * sum_k v_k relu(w_k . x_i + b_k)``."""
    if Z is None:
        Z = X @ W.T + b
    H = relu(Z)
    active = (Z > 0).astype(float)
    gv = H.T @ g
    delta = active * (g[:, None] * v[None, :])
    gW = delta.T @ X
    gb = delta.sum(axis=0)
    return gv, gW, gb


class _HiddenLayer:
    """Shared storage for a single hidden ReLU layer ``(v, W, b)``."""

    def _init_layer(self, v, W, b, dim=None):
        W = np.asarray(W, dtype=float)
        if W.size == 0:
            if dim is None:
                raise ValidationError("dim is required for a network without neurons")
            W = W.reshape(0, int(dim))
        W = np.atleast_2d(W)
        self.v = np.asarray(v, dtype=float).ravel().copy()
        self.W = W.copy()
        self.b = np.asarray(b, dtype=float).ravel().copy()
        if not (self.v.shape[0] == self.W.shape[0] == self.b.shape[0]):
            raise ValidationError("v, W and b disagree on the number of neurons")

    @property
    def dim(self):
        return self.W.shape[1]

    @property
    def width(self):
        return self.W.shape[0]

    @property
    def neurons(self):
        return list(zip(self.v, self.W, self.b))

    def preactivations(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValidationError(f"inputs have dimension {X.shape[1]}, network expects {self.dim}")
        return X @ self.W.T + self.b

    def hidden_sum(self, X):
        return relu(self.preactivations(X)) @ self.v

    def remove_neuron(self, k):
        self.v = np.delete(self.v, k)
        self.W = np.delete(self.W, k, axis=0)
        self.b = np.delete(self.b, k)

    def scale_neuron(self, k, s):
        """Multiply ``(v_k, w_k, b_k)`` by ``s``; the neuron's output scales by ``s**2``."""
        self.v[k] *= s
        self.W[k] *= s
        self.b[k] *= s

    def add_neuron(self, v, w, b):
        self.v = np.append(self.v, float(v))
        self.W = np.vstack([self.W, np.asarray(w, dtype=float)[None, :]])
        self.b = np.append(self.b, float(b))


class TwoLayerNet(_HiddenLayer):
    """``N(x) = v0 + sum_k v_k relu(w_k . x + b_k)``."""

    kind = "two_layer"

    def __init__(self, v0, v, W, b, dim=None):
        self._init_layer(v, W, b, dim)
        self._v0 = np.array([float(v0)])

    @property
    def v0(self):
        return float(self._v0[0])

    @v0.setter
    def v0(self, value):
        self._v0[0] = float(value)

    @property
    def bias(self):
        return self.v0

    @property
    def architecture(self):
        return (self.dim, self.width, 1)

    def forward(self, X):
        return _check_finite(self.v0 + self.hidden_sum(X), "network output")

    def param_arrays(self):
        return [self._v0, self.v, self.W, self.b]

    def output_grads(self, X, g, Z=None):
        gv, gW, gb = _hidden_grads(self.v, self.W, self.b, np.atleast_2d(X), g, Z)
        return [np.array([g.sum()]), gv, gW, gb]

    def copy(self):
        return TwoLayerNet(self.v0, self.v, self.W, self.b, dim=self.dim)

    def split(self):
        """Convex and concave halves ``(N_plus, N_minus)`` that sum to the network.

        Each half keeps ``v0 / 2`` as its bias.
        """
        pos = self.v > 0
        plus = TwoLayerNet(self.v0 / 2, self.v[pos], self.W[pos], self.b[pos], dim=self.dim)
        minus = TwoLayerNet(self.v0 / 2, self.v[~pos], self.W[~pos], self.b[~pos], dim=self.dim)
        return plus, minus

    def to_dict(self):
        return {
            "kind": self.kind,
            "lambda": None,
            "dim": self.dim,
            "subnets": [{"a": 1, "v0_or_lambda": self.v0, "neurons": _neurons_to_list(self.v, self.W, self.b)}],
        }

    @classmethod
    def from_dict(cls, data):
        sub = data["subnets"][0]
        v, W, b = _neurons_from_list(sub["neurons"], data.get("dim"))
        return cls(sub["v0_or_lambda"], v, W, b, dim=data.get("dim"))


class ConstrainedTwoLayerNet(_HiddenLayer):
    """``T(x) = sign * lam + sum_k v_k relu(w_k . x + b_k)`` with fixed ``lam``.

    For ``sign = +1`` all ``v_k < 0``; for ``sign = -1`` all ``v_k > 0``.
    ``lam`` receives no gradient.
    """

    kind = "constrained"

    def __init__(self, v, W, b, lam=5.0, sign=1, dim=None):
        if sign not in (1, -1):
            raise ValidationError("sign must be +1 or -1")
        if lam <= 0:
            raise ValidationError("lambda must be positive")
        self._init_layer(v, W, b, dim)
        self.lam = float(lam)
        self.sign = int(sign)
        self.check_signs()

    def check_signs(self):
        ok = np.all(self.v < 0) if self.sign == 1 else np.all(self.v > 0)
        if not ok:
            raise ValidationError(f"output weights must all have sign {-self.sign:+d}")

    @property
    def bias(self):
        return self.sign * self.lam

    @property
    def architecture(self):
        return (self.dim, self.width, 1)

    def forward(self, X):
        return _check_finite(self.bias + self.hidden_sum(X), "network output")

    def oriented(self, X):
        """``sign * T(x)``: equals ``lam`` on the polytope and is smaller elsewhere."""
        return self.sign * self.forward(X)

    def param_arrays(self):
        return [self.v, self.W, self.b]

    def output_grads(self, X, g, Z=None):
        return list(_hidden_grads(self.v, self.W, self.b, np.atleast_2d(X), g, Z))

    def copy(self):
        return ConstrainedTwoLayerNet(self.v, self.W, self.b, self.lam, self.sign, dim=self.dim)

    def polytope(self):
        """The set where every neuron is inactive, i.e. where ``sign * T = lam``."""
        from polynet.geometry import ConvexPolytope

        return ConvexPolytope(self.W, self.b)

    def to_dict(self):
        return {
            "kind": self.kind,
            "lambda": self.lam,
            "sign": self.sign,
            "dim": self.dim,
            "subnets": [{"a": 1, "v0_or_lambda": self.bias, "neurons": _neurons_to_list(self.v, self.W, self.b)}],
        }

    @classmethod
    def from_dict(cls, data):
        sub = data["subnets"][0]
        v, W, b = _neurons_from_list(sub["neurons"], data.get("dim"))
        return cls(v, W, b, lam=data["lambda"], sign=data.get("sign", 1), dim=data.get("dim"))


class ThreeLayerSumNet:
    """``N(x) = -lam/2 + sum_j a_j relu(T_j(x))`` with ``a_j`` in {+1, -1}.

    Subnets trained by this package are :class:`ConstrainedTwoLayerNet` with
    ``sign = +1`` and the shared ``lam``.  Constructed classifiers use general
    :class:`TwoLayerNet` subnets with ``lam = 1``.
    """

    kind = "three_layer_sum"

    def __init__(self, a, subnets, lam=5.0):
        self.a = np.asarray(a, dtype=float).ravel().copy()
        self.subnets = list(subnets)
        self.lam = float(lam)
        if len(self.subnets) != self.a.shape[0]:
            raise ValidationError("one output sign is needed per subnet")
        if not np.all(np.isin(self.a, (-1.0, 1.0))):
            raise ValidationError("output signs must be +1 or -1")
        if len({s.dim for s in self.subnets}) > 1:
            raise ValidationError("subnets disagree on the input dimension")

    @property
    def dim(self):
        return self.subnets[0].dim

    @property
    def widths(self):
        return [s.width for s in self.subnets]

    @property
    def width(self):
        return sum(self.widths)

    @property
    def is_constrained(self):
        return all(isinstance(s, ConstrainedTwoLayerNet) and s.sign == 1 for s in self.subnets)

    @property
    def architecture(self):
        """Layer sizes; a single positive subnet folds into a two-layer shape."""
        if len(self.subnets) == 1 and self.a[0] > 0:
            return (self.dim, self.width, 1)
        return (self.dim, self.width, len(self.subnets), 1)

    def subnet_outputs(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not self.subnets:
            return np.zeros((X.shape[0], 0))
        return np.column_stack([s.forward(X) for s in self.subnets])

    def forward(self, X):
        return _check_finite(-self.lam / 2 + relu(self.subnet_outputs(X)) @ self.a, "network output")

    def param_arrays(self):
        return [p for s in self.subnets for p in s.param_arrays()]

    def forward_with_cache(self, X):
        """Output plus per-subnet pre-activations and outputs, for reuse in backprop."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not self.subnets:
            return self.forward(X), None
        Zs = [s.preactivations(X) for s in self.subnets]
        T = np.column_stack([s.bias + relu(Z) @ s.v for s, Z in zip(self.subnets, Zs)])
        out = _check_finite(-self.lam / 2 + relu(T) @ self.a, "network output")
        return out, (Zs, T)

    def output_grads(self, X, g, cache=None):
        X = np.atleast_2d(X)
        if cache is None:
            Zs, T = [None] * len(self.subnets), self.subnet_outputs(X)
        else:
            Zs, T = cache
        grads = []
        for j, s in enumerate(self.subnets):
            gj = g * self.a[j] * (T[:, j] > 0)
            grads.extend(s.output_grads(X, gj, Zs[j]))
        return grads

    def layer_matrices(self):
        """Dense weights of the three affine layers.

        The second layer is block-sparse: subnet ``j`` reads only its own
        neurons, so the number of nonzeros equals the first hidden width.
        """
        W1 = np.vstack([s.W for s in self.subnets])
        b1 = np.concatenate([s.b for s in self.subnets])
        W2 = np.zeros((len(self.subnets), W1.shape[0]))
        start = 0
        for j, s in enumerate(self.subnets):
            W2[j, start:start + s.width] = s.v
            start += s.width
        b2 = np.array([s.bias for s in self.subnets])
        return W1, b1, W2, b2, self.a.copy(), -self.lam / 2

    def copy(self):
        return ThreeLayerSumNet(self.a, [s.copy() for s in self.subnets], self.lam)

    def to_dict(self):
        return {
            "kind": self.kind,
            "lambda": self.lam,
            "dim": self.dim,
            "subnets": [
                {
                    "a": int(a),
                    "v0_or_lambda": s.bias,
                    "constrained": isinstance(s, ConstrainedTwoLayerNet),
                    "neurons": _neurons_to_list(s.v, s.W, s.b),
                }
                for a, s in zip(self.a, self.subnets)
            ],
        }

    @classmethod
    def from_dict(cls, data):
        lam = float(data["lambda"])
        a, subnets = [], []
        for sub in data["subnets"]:
            v, W, b = _neurons_from_list(sub["neurons"], data.get("dim"))
            constrained = sub.get("constrained")
            if constrained is None:
                constrained = np.isclose(sub["v0_or_lambda"], lam) and np.all(v < 0)
            if constrained:
                subnets.append(ConstrainedTwoLayerNet(v, W, b, lam=lam, sign=1, dim=W.shape[1]))
            else:
                subnets.append(TwoLayerNet(sub["v0_or_lambda"], v, W, b, dim=W.shape[1]))
            a.append(sub["a"])
        return cls(a, subnets, lam)


_KINDS = {cls.kind: cls for cls in (TwoLayerNet, ConstrainedTwoLayerNet, ThreeLayerSumNet)}


def network_from_dict(data):
    try:
        cls = _KINDS[data["kind"]]
    except KeyError:
        raise ValidationError(f"unknown network kind {data.get('kind')!r}") from None
    return cls.from_dict(data)


def _class_counts(y):
    return int(np.sum(y == 0)), int(np.sum(y == 1))


def loss_and_output_grad(out, y, loss="bce", lambda0=1.0, lambda1=1.0):
    """Loss value and its derivative with respect to the raw network output.

    ``mse``: ``(1/2n) sum (relu(N) - y)^2``.
    ``bce``: mean cross-entropy of ``sigmoid(N)``, computed through softplus.
    ``weighted_bce``: ``lambda0`` times the mean loss over class 0 plus
    ``lambda1`` times the mean loss over class 1.
    """
    out = np.asarray(out, dtype=float)
    y = np.asarray(y, dtype=float)
    n = out.shape[0]
    if loss == "mse":
        r = relu(out)
        value = 0.5 * np.sum((r - y) ** 2) / n
        g = (r - y) * (out > 0) / n
    elif loss == "bce":
        value = np.mean(y * softplus(-out) + (1 - y) * softplus(out))
        g = (sigmoid(out) - y) / n
    elif loss == "weighted_bce":
        n0, n1 = _class_counts(y)
        w = np.where(y == 1, lambda1 / max(n1, 1), lambda0 / max(n0, 1))
        value = np.sum(w * (y * softplus(-out) + (1 - y) * softplus(out)))
        g = w * (sigmoid(out) - y)
    else:
        raise ValidationError(f"unknown loss {loss!r}; expected one of {LOSSES}")
    return float(value), g


def loss_value(net, data, loss="bce", lambda0=1.0, lambda1=1.0):
    return loss_and_output_grad(net.forward(data.X), data.y, loss, lambda0, lambda1)[0]


def forward_and_gradients(net, data, loss="bce", lambda0=1.0, lambda1=1.0):
    """Outputs, loss and gradients aligned with ``net.param_arrays()``.

    Hidden-layer nets reuse the forward pre-activations in the backward pass.
    """
    if isinstance(net, _HiddenLayer):
        cache = net.preactivations(data.X)
        out = _check_finite(net.bias + relu(cache) @ net.v, "network output")
    else:
        out, cache = net.forward_with_cache(data.X)
    value, g = loss_and_output_grad(out, data.y, loss, lambda0, lambda1)
    grads = net.output_grads(data.X, g, cache)
    for gr in grads:
        _check_finite(gr, "gradient")
    return out, value, grads


def gradients(net, data, loss="bce", lambda0=1.0, lambda1=1.0):
    """Loss and per-parameter gradients aligned with ``net.param_arrays()``."""
    _, value, grads = forward_and_gradients(net, data, loss, lambda0, lambda1)
    return value, grads


def init_implicit_bias(m, d, scale=0.1, seed=0, lam=5.0, sign=1):
    """Small random constrained net whose neurons start exactly balanced.

    ``w, b ~ N(0, scale^2)`` and ``|v_k| = sqrt(||w_k||^2 + b_k^2) + 0.01 scale``,
    with sign ``-sign``.
    """
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, scale, size=(m, d))
    b = rng.normal(0.0, scale, size=m)
    mag = np.sqrt(np.sum(W ** 2, axis=1) + b ** 2) + 0.01 * scale
    return ConstrainedTwoLayerNet(-sign * mag, W, b, lam=lam, sign=sign, dim=d)


def forward_two_layer(net, X):
    if not isinstance(net, (TwoLayerNet, ConstrainedTwoLayerNet)):
        raise ValidationError(f"expected a two-layer network, got {type(net).__name__}")
    return net.forward(X)


def forward_three_layer(net, X):
    if not isinstance(net, ThreeLayerSumNet):
        raise ValidationError(f"expected a three-layer sum network, got {type(net).__name__}")
    return net.forward(X)


def rebalance(net):
    """Rescale each neuron to ``|v_k| = ||(w_k, b_k)||`` without changing the function.

    Uses positive homogeneity: ``a v relu((w . x + b) / a) = v relu(w . x + b)``.
    """
    size = np.sqrt(np.sum(net.W ** 2, axis=1) + net.b ** 2)
    alpha = np.sqrt(size / np.abs(net.v))
    net.v *= alpha
    net.W /= alpha[:, None]
    net.b /= alpha
    return net


def balancedness(net):
    """Per-neuron ``v_k^2 - ||w_k||^2 - b_k^2``; conserved by gradient flow."""
    return net.v ** 2 - np.sum(net.W ** 2, axis=1) - net.b ** 2
