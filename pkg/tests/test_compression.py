import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polynet.compression_extraction import (
    compress,
    compress_to_fixpoint,
    drop_redundant_faces,
    extract_cover_three_layer,
    extract_cover_two_layer,
    is_settled,
    removable_neurons,
    subnet_predictions,
    unsettled_points,
)
from polynet.errors import UnsettledSubnetError, ValidationError
from polynet.networks import ConstrainedTwoLayerNet, LabeledDataset, ThreeLayerSumNet, TwoLayerNet


def nested_subnet():
    # neuron 1 fires only where neuron 0 fires, neuron 2 fires elsewhere
    W = np.array([[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
    b = np.array([-1.0, -2.0, -1.0])
    return ConstrainedTwoLayerNet([-1.0, -1.0, -1.0], W, b, lam=2.0)


def line_data():
    X = np.array([[0.0, 0.0], [1.5, 0.0], [3.0, 0.0], [-1.5, 0.0], [0.5, 0.0]])
    return LabeledDataset(X, [1, 0, 0, 0, 1])


def random_subnet(rng, m, d=2, lam=2.0):
    W, b = rng.normal(size=(m, d)), rng.normal(size=m)
    return ConstrainedTwoLayerNet(-rng.uniform(0.1, 2.0, m), W, b, lam=lam)


def in_S(T, X):
    return ~np.any(T.preactivations(X) > 0, axis=1)


def test_subset_rule_flags_the_covered_neuron():
    T, data = nested_subnet(), line_data()
    assert removable_neurons(T, data.X).tolist() == [1]
    assert removable_neurons(T, data.X, literal=True).tolist() == [0]


def test_single_neuron_is_never_removable():
    T = ConstrainedTwoLayerNet([-1.0], [[1.0, 0.0]], [0.0])
    assert removable_neurons(T, np.ones((3, 2))).size == 0


def test_compress_removes_then_scales():
    T, data = nested_subnet(), line_data()
    T2, rep = compress(T, data, lambda_scale=2.0)
    assert rep.removed == 1
    assert T2.width == 2 and T.width == 3
    assert rep.width_before == 3 and rep.width_after == 2
    # x = 1.5 gives T = 2 - 0.5 > 0, so neuron 0 is scaled
    assert 0 in rep.scaled
    assert np.allclose(T2.W[0], [2.0, 0.0])
    assert T2.v[0] == -2.0


def test_compress_rejects_bad_arguments():
    T, data = nested_subnet(), line_data()
    with pytest.raises(ValidationError):
        compress(T, data, lambda_scale=1.0)
    with pytest.raises(ValidationError):
        compress(TwoLayerNet(0.0, [1.0], [[1.0, 0.0]], [0.0]), data)


def test_fixpoint_settles_and_is_stable():
    T, data = nested_subnet(), line_data()
    T2, reports = compress_to_fixpoint(T, data)
    assert is_settled(T2, data.X)
    assert reports
    T3, more = compress_to_fixpoint(T2, data)
    assert more == []
    assert np.array_equal(T3.W, T2.W)


def test_fixpoint_with_pruning_leaves_nothing_removable():
    T, data = nested_subnet(), line_data()
    T2, reports = compress_to_fixpoint(T, data, prune=True)
    assert removable_neurons(T2, data.X).size == 0
    assert not reports[-1].changed


@given(st.integers(0, 10 ** 6), st.integers(2, 8))
def test_compression_keeps_polytope_membership_and_signs(seed, m):
    rng = np.random.default_rng(seed)
    T = random_subnet(rng, m)
    X = rng.normal(size=(60, 2)) * 2
    data = LabeledDataset(X, rng.integers(0, 2, 60))
    before = in_S(T, X)
    for _ in range(5):
        T, _ = compress(T, data)
        assert np.all(T.v < 0)
        assert np.array_equal(in_S(T, X), before)


@given(st.integers(0, 10 ** 6), st.integers(2, 8))
def test_fixpoint_output_is_zero_or_lambda(seed, m):
    rng = np.random.default_rng(seed)
    T = random_subnet(rng, m)
    X = rng.normal(size=(60, 2)) * 2
    data = LabeledDataset(X, rng.integers(0, 2, 60))
    T, _ = compress_to_fixpoint(T, data, max_iter=400)
    out = np.maximum(T.forward(X), 0)
    assert np.all((out == 0) | (np.abs(out - T.lam) <= 1e-9))


@given(st.integers(0, 10 ** 6), st.integers(2, 10))
def test_drop_redundant_faces_keeps_membership(seed, m):
    rng = np.random.default_rng(seed)
    T = random_subnet(rng, m)
    X = rng.normal(size=(80, 2)) * 2
    T2 = drop_redundant_faces(T, X)
    assert T2.width <= T.width
    assert np.array_equal(in_S(T2, X), in_S(T, X))


def test_subnet_predictions_for_negative_sign():
    T = ConstrainedTwoLayerNet([1.0, 1.0], [[1.0, 0.0], [-1.0, 0.0]], [-1.0, -1.0], lam=2.0, sign=-1)
    # inside the strip the oriented output is lam, which votes for label 0
    assert subnet_predictions(T, np.array([[0.0, 0.0], [5.0, 0.0]])).tolist() == [0, 1]


def test_unsettled_points_lists_offenders():
    T, data = nested_subnet(), line_data()
    assert unsettled_points(T, data.X).tolist() == [1, 3]


def test_extraction_reports_every_offender():
    T, data = nested_subnet(), line_data()
    net = ThreeLayerSumNet([1], [T], T.lam)
    with pytest.raises(UnsettledSubnetError) as info:
        extract_cover_three_layer(net, data)
    assert [(j, i) for j, i, _ in info.value.offenders] == [(0, 1), (0, 3)]


def test_extraction_on_a_hand_settled_net():
    T, data = nested_subnet(), line_data()
    T, _ = compress_to_fixpoint(T, data)
    net = ThreeLayerSumNet([1], [T], T.lam)
    cover = extract_cover_three_layer(net, data)
    assert np.array_equal(cover.classify(data.X), (net.forward(data.X) > 0).astype(int))


def test_trained_sum_net_extracts_exactly(roll_sum_net):
    result, data = roll_sum_net
    net = result.net
    assert all(is_settled(T, data.X) for T in net.subnets if T.width)
    cover = extract_cover_three_layer(net, data)
    assert np.array_equal(cover.classify(data.X) == 1, net.forward(data.X) > 0)
    assert len(cover) == sum(1 for T in net.subnets if T.width)


def test_trained_sum_net_never_flipped_signs(roll_sum_net):
    result, _ = roll_sum_net
    for T in result.net.subnets:
        assert np.all(T.v < 0)


def test_two_layer_extraction_is_exact(roll_two_layer_net):
    net, data = roll_two_layer_net
    cover, rounds = extract_cover_two_layer(net, data)
    assert np.array_equal(cover.classify(data.X) == 1, net.forward(data.X) > 0)
    assert rounds <= data.n
    assert len(cover) == 2 * rounds


@given(st.integers(0, 10 ** 6))
def test_two_layer_extraction_on_random_nets(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 8))
    net = TwoLayerNet(rng.normal(), rng.normal(size=m), rng.normal(size=(m, 2)), rng.normal(size=m))
    X = rng.normal(size=(50, 2))
    out = net.forward(X)
    if np.abs(out).min() < 1e-9:
        return
    data = LabeledDataset(X, (out > 0).astype(int))
    cover, rounds = extract_cover_two_layer(net, data)
    assert np.array_equal(cover.classify(X) == 1, out > 0)
    assert rounds <= int((out > 0).sum())


def test_two_layer_extraction_round_limit():
    net = TwoLayerNet(-0.5, [1.0, 1.0], [[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0])
    data = LabeledDataset([[2.0, 0.0], [-2.0, 0.0], [0.0, 0.0]], [1, 1, 0])
    with pytest.raises(UnsettledSubnetError):
        extract_cover_two_layer(net, data, max_rounds=0)


def test_extraction_rejects_wrong_net_type():
    data = line_data()
    with pytest.raises(ValidationError):
        extract_cover_two_layer(nested_subnet(), data)
    with pytest.raises(ValidationError):
        extract_cover_three_layer(TwoLayerNet(0.0, [1.0], [[1.0, 0.0]], [0.0]), data)
