"""Recompute the frozen reference values in tests/oracles.py.

Everything here is independent of the npbandit package: exact rationals,
mpmath at 50 digits, and brute-force loops. Run it and compare against
the constants checked into the tests.
"""

from fractions import Fraction
from itertools import product

import mpmath

mpmath.mp.dps = 50


def default_k_316():
    return int(mpmath.floor(mpmath.mpf(100000) ** (mpmath.mpf(2) / (2 + 2))))


def radius_line():
    pts, q, k = [0, 1, 3], 0, 2
    return sorted(abs(Fraction(p) - q) for p in pts)[k - 1]


def tie_inclusive_mean():
    data, q, k = [(-1, 4), (0, 1), (1, 2)], 0, 2
    d = [abs(Fraction(x) - q) for x, _ in data]
    r = sorted(d)[k - 1]
    vals = [Fraction(y) for (x, y), di in zip(data, d) if di <= r]
    return sum(vals) / len(vals)


def ridge_two_points():
    # Normal equations with the intercept unpenalized:
    # [[alpha + sum x^2, sum x], [sum x, n]] w = [sum xy, sum y]
    xs, ys, alpha = [Fraction(0), Fraction(1)], [Fraction(0), Fraction(1)], Fraction(1)
    a = alpha + sum(x * x for x in xs)
    b = sum(xs)
    c = Fraction(len(xs))
    u, v = sum(x * y for x, y in zip(xs, ys)), sum(ys)
    det = a * c - b * b
    return (c * u - b * v) / det, (a * v - b * u) / det


def ucb_width_example():
    n, K, delta, d = mpmath.mpf(2), 2, mpmath.mpf("0.1"), 2
    return mpmath.sqrt(mpmath.log(n) * mpmath.log(n * K / delta)) * n ** (-mpmath.mpf(1) / (2 + d))


def hausdorff_example():
    A, B = [0, 1], [0, 5]
    directed = lambda P, Q: max(min(abs(p - q) for q in Q) for p in P)
    return max(directed(A, B), directed(B, A))


def clt_bound():
    return 3 * mpmath.mpf("0.5") / mpmath.sqrt(100000)


def bullseye_areas():
    r = [mpmath.mpf(x) / 10 for x in (1, 2, 3, 4)]
    arm1 = mpmath.pi * ((r[1] ** 2 - r[0] ** 2) + (r[3] ** 2 - r[2] ** 2))
    return 1 - arm1, arm1


def smiley_area():
    # Eyes are full discs; the mouth is integrated in polar coordinates about
    # its center: at radius rho the band y <= 0.45 spans an angle of
    # pi - 2 asin(0.1 / rho).
    eyes = 2 * mpmath.pi * mpmath.mpf("0.1") ** 2
    h = mpmath.mpf("0.1")
    mouth = mpmath.quad(lambda rho: rho * (mpmath.pi - 2 * mpmath.asin(h / rho)), [mpmath.mpf("0.35"), mpmath.mpf("0.45")])
    return eyes + mouth


def quintic_area():
    def above(x):
        b = mpmath.mpf("0.5") + mpmath.mpf("28.8") * (x - mpmath.mpf("0.5")) ** 5
        return 1 - min(max(b, 0), 1)

    return mpmath.quad(above, [0, mpmath.mpf("0.5"), 1])


def bullseye_gap():
    r = [Fraction(x, 10) for x in (1, 2, 3, 4)]
    return min(b - a for a, b in zip(r, r[1:]))


def components_two_discs_brute(points, R):
    """Quadratic union-find used as the oracle for the two-disc instance."""
    n = len(points)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    for i, j in product(range(n), range(n)):
        if i < j and sum((p - q) ** 2 for p, q in zip(points[i], points[j])) <= R * R:
            parent[find(i)] = find(j)
    return len({find(i) for i in range(n)})


if __name__ == "__main__":
    print("default_k(100000, 2) =", default_k_316())
    print("radius {0,1,3} q=0 k=2 =", radius_line())
    print("tie-inclusive mean =", tie_inclusive_mean())
    print("ridge slope, intercept =", ridge_two_points())
    print("ucb width =", mpmath.nstr(ucb_width_example(), 20))
    print("hausdorff =", hausdorff_example())
    print("clt bound =", mpmath.nstr(clt_bound(), 20))
    a0, a1 = bullseye_areas()
    print("bullseye areas =", mpmath.nstr(a0, 20), mpmath.nstr(a1, 20))
    print("smiley arm-0 area =", mpmath.nstr(smiley_area(), 20))
    print("quintic arm-0 area =", mpmath.nstr(quintic_area(), 20))
    print("bullseye component gap =", bullseye_gap())
