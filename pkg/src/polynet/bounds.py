"""Closed-form width bounds and feasibility checks for polytope-realizing nets.

All arithmetic that involves floors of sums of fractions is done with
:class:`fractions.Fraction` so the results are exact integers.
"""

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from polynet.errors import ValidationError

VERDICTS = ("feasible", "infeasible", "unknown", "may-fail")


@dataclass
class WidthBoundReport:
    """Result of one bound evaluation.

    ``formula`` names the rule, ``inputs`` echoes the arguments, ``values``
    holds the computed quantities and ``verdict`` is one of ``VERDICTS`` or
    None when the formula only produces numbers.
    """

    formula: str
    inputs: dict
    values: dict
    verdict: str | None = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _check_widths(widths):
    widths = [int(w) for w in widths]
    if not widths or any(w < 1 for w in widths):
        raise ValidationError("hidden widths must be a nonempty list of positive integers")
    return widths


def required_width_convex(d, m):
    """Smallest width profile measure needed to realize a convex m-face polytope in R^d."""
    if d < 1 or m < 1:
        raise ValidationError("need d >= 1 and m >= 1")
    if m >= 2 * d + 1:
        return math.ceil(m / 2) + (d - 2)
    if m >= 2 * d - 1:
        return 2 * d - 1
    return d + 1


def lower_bound_convex(d, m, widths):
    """Compare ``d_1 * prod_{j>=2} (2 d_j + 1)`` with the required width.

    The verdict is ``infeasible`` when the capacity falls short; otherwise
    the bound does not decide feasibility and the verdict is ``unknown``.
    """
    widths = _check_widths(widths)
    required = required_width_convex(d, m)
    capacity = widths[0]
    for w in widths[1:]:
        capacity *= 2 * w + 1
    verdict = "infeasible" if capacity < required else "unknown"
    notes = ["capacity equals the requirement"] if capacity == required else []
    return WidthBoundReport(
        "convex_lower",
        {"d": d, "m": m, "widths": widths},
        {"required": required, "capacity": capacity, "slack": capacity - required},
        verdict,
        notes,
    )


def simplicial_width_bound(d, k_profile):
    """Upper bound on the first hidden width for a union of simplices.

    ``k_profile[j]`` is the number of j-simplices (j = 0..d).  Two
    constructions are compared and the smaller width is reported; the second
    hidden width equals the total simplex count.
    """
    k = [int(x) for x in k_profile]
    if d < 1:
        raise ValidationError("need d >= 1")
    if len(k) > d + 1 or any(x < 0 for x in k):
        raise ValidationError(f"profile must have at most {d + 1} nonnegative entries")
    k = k + [0] * (d + 1 - len(k))
    total = sum(k)
    low = sum(k[: (d - 1) // 2 + 1])
    first = total * (d + 1) - (d - 1) * (low // 2)
    acc = Fraction(0)
    for j in range(d // 2 + 1):
        acc += Fraction(k[j] * (j + 2), d - j) + Fraction(j + 2, j + 1)
    acc += sum(k[j] for j in range(d // 2 + 1, d + 1))
    second = (d + 1) * math.floor(acc)
    return WidthBoundReport(
        "simplicial_upper",
        {"d": d, "k_profile": k},
        {
            "pairing_width": first,
            "lifting_width": second,
            "first_width": min(first, second),
            "second_width": total,
        },
    )


def betti_width_bound(d, m, betti):
    """Widths of a three-layer net realizing a region with given Betti numbers.

    Every hole (Betti number ``beta_k``, k >= 1) is carved with at most
    ``m`` faces; connected components are merged pairwise.
    """
    beta = [int(x) for x in betti]
    if len(beta) != d + 1 or any(x < 0 for x in beta):
        raise ValidationError(f"expected {d + 1} nonnegative Betti numbers")
    if beta[0] < 1:
        raise ValidationError("a nonempty region has beta_0 >= 1")
    first = m + 2 * (beta[0] - 1) + sum((m - 2 * (d - kk - 1)) * beta[kk] for kk in range(1, d + 1))
    notes = []
    if beta[d] > 0:
        alt = first - (m + 2) * beta[d]
        notes.append(f"beta_d > 0: summing holes only up to dimension d-1 gives first width {alt}; "
                     "a bounded region in R^d has beta_d = 0, so check the input")
    return WidthBoundReport(
        "betti_upper",
        {"d": d, "m": m, "betti": beta},
        {"first_width": first, "second_width": sum(beta)},
        None,
        notes,
    )


def betti_lower_check(betti, widths):
    """Necessary condition ``sum_i prod_{j>=i} d_j >= 2 * sum(beta) - 2``."""
    widths = _check_widths(widths)
    beta = [int(x) for x in betti]
    capacity = 0
    for i in range(len(widths)):
        capacity += math.prod(widths[i:])
    required = 2 * sum(beta) - 2
    verdict = "infeasible" if capacity < required else "unknown"
    return WidthBoundReport(
        "betti_lower",
        {"betti": beta, "widths": widths},
        {"capacity": capacity, "required": required},
        verdict,
    )


def faces_feasibility(d, m, widths):
    """Whether a net of the given widths can realize every m-face polytope in R^d."""
    widths = _check_widths(widths)
    if widths[0] >= m and (len(widths) == 1 or widths[1] >= 1):
        verdict = "feasible"
    elif max(widths) <= m - 1 or widths[0] <= m - 2:
        verdict = "may-fail"
    else:
        verdict = "unknown"
    return WidthBoundReport("faces_feasibility", {"d": d, "m": m, "widths": widths}, {}, verdict)


def report_from_profile(profile):
    """Dispatch a profile dictionary (as used by the CLI) to a bound function."""
    kind = profile.get("kind")
    if kind == "convex":
        return lower_bound_convex(profile["d"], profile["m"], profile["widths"])
    if kind == "simplicial":
        return simplicial_width_bound(profile["d"], profile["k_profile"])
    if kind == "betti":
        return betti_width_bound(profile["d"], profile["m"], profile["betti"])
    if kind == "betti_lower":
        return betti_lower_check(profile["betti"], profile["widths"])
    if kind == "faces":
        return faces_feasibility(profile["d"], profile["m"], profile["widths"])
    raise ValidationError(f"unknown profile kind {kind!r}")
