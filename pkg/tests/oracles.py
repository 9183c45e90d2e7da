"""Reference values frozen from scripts/derive_oracles.py.

They come from exact rationals, 50-digit mpmath and brute-force loops,
never from npbandit itself.
"""

from fractions import Fraction

DEFAULT_K_100000_D2 = 316
RADIUS_LINE_013_K2 = 1
TIE_INCLUSIVE_MEAN = Fraction(7, 3)
RIDGE_TWO_POINTS = (Fraction(1, 3), Fraction(1, 3))  # slope, intercept
UCB_WIDTH_N2 = 1.3446289683717577523
HAUSDORFF_01_05 = 4
CLT_BOUND_100K = 0.004743416490252568998
BULLSEYE_AREAS = (0.68584073464102067615, 0.31415926535897932385)
SMILEY_ARM0_AREA = 0.16827748917581204703
QUINTIC_ARM0_AREA = 0.5
BULLSEYE_GAP = Fraction(1, 10)
