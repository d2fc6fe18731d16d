"""
Mittag-Leffler decay and its envelope
=====================================

E_beta(-x) interpolates between exp(-x) (beta = 1) and a slow algebraic
tail.  The two-sided envelope below is what the moment estimates lean on.
"""

import numpy as np

from fracspde import ml_bounds, ml_neg

xs = np.logspace(-2, 3, 11)

# one row per x, one column block per order
for beta in (0.3, 0.5, 0.9):
    print(f"beta = {beta}")
    print("         x        lower        value        upper")
    for x in xs:
        b = ml_bounds(beta, x)
        print(f"{x:10.3g} {b.lower:12.5g} {ml_neg(beta, x):12.5g} {b.upper:12.5g}")
    print()

# for large x the tail behaves like 1/(Gamma(1-beta) x), not like exp(-x)
x = 1e3
for beta in (0.3, 0.5, 0.9):
    print(beta, ml_neg(beta, x) * x)
