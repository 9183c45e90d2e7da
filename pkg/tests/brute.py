"""Linear-scan k-NN oracle with exact rational distances."""

import math
from fractions import Fraction


def brute_neighbors(points, x, k):
    """Indices of every point within the closed k-NN ball of ``x``, and r_k^2."""
    xq = [Fraction(float(v)) for v in x]
    d2 = []
    for p in points:
        d2.append(sum((Fraction(float(a)) - b) ** 2 for a, b in zip(p, xq)))
    r2 = sorted(d2)[k - 1]
    return [i for i, d in enumerate(d2) if d <= r2], r2


def brute_regress(points, values, x, k):
    """(value, radius, count): fsum of member values divided by the count."""
    members, r2 = brute_neighbors(points, x, k)
    vals = [float(values[i]) for i in members]
    return math.fsum(vals) / len(vals), math.sqrt(r2), len(members)


def exact_mean(points, values, x, k):
    members, _ = brute_neighbors(points, x, k)
    return sum(Fraction(float(values[i])) for i in members) / len(members)
