import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polynet.bounds import (
    betti_lower_check,
    betti_width_bound,
    faces_feasibility,
    lower_bound_convex,
    report_from_profile,
    required_width_convex,
    simplicial_width_bound,
)
from polynet.construction import cover_network, indicator_network
from polynet.data import reference_cover
from polynet.errors import ValidationError
from polynet.geometry import ConvexPolytope

from conftest import random_polygon


def simplicial_oracle(d, k):
    """Both width expressions written out term by term."""
    k = list(k) + [0] * (d + 1 - len(k))
    total = sum(k)
    half_low = sum(k[j] for j in range(0, (d - 1) // 2 + 1))
    first = total * (d + 1) - (d - 1) * math.floor(Fraction(half_low, 2))
    inner = Fraction(0)
    for j in range(0, d + 1):
        if 2 * j <= d:
            inner += Fraction(k[j] * (j + 2), d - j) + Fraction(j + 2, j + 1)
        else:
            inner += k[j]
    second = (d + 1) * math.floor(inner)
    return first, second


def betti_lower_oracle(betti, widths):
    lhs = 0
    for i in range(len(widths)):
        p = 1
        for w in widths[i:]:
            p *= w
        lhs += p
    return "infeasible" if lhs < 2 * sum(betti) - 2 else "unknown"


@pytest.mark.parametrize("m", [3, 4, 5, 6])
def test_convex_requirement_is_three_in_the_plane(m):
    assert required_width_convex(2, m) == 3


@pytest.mark.parametrize("m", range(5, 30))
def test_convex_requirement_is_half_the_faces(m):
    assert required_width_convex(2, m) == math.ceil(m / 2)


def test_lower_bound_convex_examples():
    r = lower_bound_convex(2, 6, [3])
    assert (r.values["required"], r.values["capacity"], r.verdict) == (3, 3, "unknown")
    assert r.notes == ["capacity equals the requirement"]
    r = lower_bound_convex(2, 7, [3])
    assert (r.values["required"], r.verdict) == (4, "infeasible")
    r = lower_bound_convex(3, 9, [2, 2])
    assert (r.values["capacity"], r.values["required"], r.verdict) == (10, 6, "unknown")


def test_lower_bound_convex_mid_range():
    # m in {2d-1, 2d} needs 2d-1, fewer faces need d+1
    assert required_width_convex(3, 5) == 5
    assert required_width_convex(3, 6) == 5
    assert required_width_convex(3, 4) == 4


def test_simplicial_two_triangles():
    r = simplicial_width_bound(2, [0, 0, 2])
    assert r.values["pairing_width"] == 6
    assert r.values["lifting_width"] == 15
    assert r.values["first_width"] == 6
    assert r.values["second_width"] == 2


def test_simplicial_single_triangle():
    assert simplicial_width_bound(2, [0, 0, 1]).values["first_width"] == 3


def test_simplicial_four_points_in_r4():
    # the pairing expression is the smaller one here (14 against 30)
    r = simplicial_width_bound(4, [4, 0, 0, 0, 0])
    assert (r.values["pairing_width"], r.values["lifting_width"]) == simplicial_oracle(4, [4]) == (14, 30)
    assert r.values["first_width"] == 14


@given(st.integers(1, 6), st.data())
def test_simplicial_matches_oracle(d, data):
    k = data.draw(st.lists(st.integers(0, 20), min_size=d + 1, max_size=d + 1))
    r = simplicial_width_bound(d, k)
    assert (r.values["pairing_width"], r.values["lifting_width"]) == simplicial_oracle(d, k)


@given(st.integers(1, 6), st.data())
def test_simplicial_monotone_in_every_count(d, data):
    k = data.draw(st.lists(st.integers(0, 20), min_size=d + 1, max_size=d + 1))
    j = data.draw(st.integers(0, d))
    bumped = list(k)
    bumped[j] += 1
    assert simplicial_width_bound(d, bumped).values["first_width"] >= simplicial_width_bound(d, k).values["first_width"]


def test_simplicial_rejects_bad_profile():
    with pytest.raises(ValidationError):
        simplicial_width_bound(2, [0, 0, 0, 1])
    with pytest.raises(ValidationError):
        simplicial_width_bound(2, [-1, 0, 0])


def test_betti_width_examples():
    for m in (3, 7, 12):
        r = betti_width_bound(2, m, [1, 0, 0])
        assert (r.values["first_width"], r.values["second_width"]) == (m, 1)
    r = betti_width_bound(2, 4, [1, 1, 0])
    assert (r.values["first_width"], r.values["second_width"]) == (8, 2)
    r = betti_width_bound(2, 6, [1, 1, 0])
    assert (r.values["first_width"], r.values["second_width"]) == (12, 2)


def test_betti_top_dimension_is_flagged():
    r = betti_width_bound(2, 4, [1, 0, 1])
    # top-dimension term (m + 2) * beta_2 = 6 on top of m = 4
    assert r.values["first_width"] == 10
    assert "first width 4" in r.notes[0]


@given(st.integers(1, 4), st.integers(0, 16), st.data())
def test_betti_width_monotone(d, extra, data):
    # hole costs m - 2(d - k - 1) are nonnegative once m >= 2(d - 2)
    m = max(2 * (d - 2), 1) + extra
    beta = data.draw(st.lists(st.integers(0, 5), min_size=d + 1, max_size=d + 1))
    beta[0] = max(beta[0], 1)
    base = betti_width_bound(d, m, beta).values["first_width"]
    k = data.draw(st.integers(0, d))
    bumped = list(beta)
    bumped[k] += 1
    assert betti_width_bound(d, m, bumped).values["first_width"] >= base
    assert betti_width_bound(d, m + 1, beta).values["first_width"] >= base


def test_betti_lower_examples():
    assert betti_lower_check([1, 5], [4, 2]).verdict == "unknown"
    assert betti_lower_check([1, 5], [4, 2]).values == {"capacity": 10, "required": 10}
    assert betti_lower_check([1, 2], [1, 1]).verdict == "infeasible"
    assert betti_lower_check([1, 0, 0], [1]).verdict == "unknown"


def test_betti_lower_against_oracle_on_random_cases():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        widths = [int(w) for w in rng.integers(1, 6, rng.integers(1, 4))]
        betti = [1] + [int(b) for b in rng.integers(0, 8, rng.integers(1, 4))]
        assert betti_lower_check(betti, widths).verdict == betti_lower_oracle(betti, widths)


def test_faces_feasibility_examples():
    assert faces_feasibility(2, 4, [4, 1]).verdict == "feasible"
    assert faces_feasibility(3, 4, [3, 3, 3]).verdict == "may-fail"
    assert faces_feasibility(2, 4, [2]).verdict == "may-fail"
    assert faces_feasibility(2, 6, [5, 9]).verdict == "unknown"


def test_reports_are_deterministic():
    a = report_from_profile({"kind": "simplicial", "d": 3, "k_profile": [1, 2, 3, 4]})
    b = report_from_profile({"kind": "simplicial", "d": 3, "k_profile": [1, 2, 3, 4]})
    assert a.to_dict() == b.to_dict()


def test_unknown_profile_kind():
    with pytest.raises(ValidationError):
        report_from_profile({"kind": "morse"})


@given(st.integers(3, 12), st.integers(0, 10 ** 6))
def test_indicator_networks_respect_the_convex_lower_bound(m, seed):
    P = ConvexPolytope(*random_polygon(np.random.default_rng(seed), m))
    T = indicator_network(P)
    assert lower_bound_convex(2, m, [T.width]).verdict != "infeasible"


@pytest.mark.parametrize("kind, betti", [
    ("two_triangles", [2, 0, 0]),
    ("hexagon_pentagon", [1, 1, 0]),
    ("swiss_roll", [2, 0, 0]),
])
def test_cover_networks_respect_the_betti_lower_bound(kind, betti):
    net = cover_network(reference_cover(kind))
    widths = list(net.architecture[1:-1])
    assert betti_lower_check(betti, widths).verdict != "infeasible"
