"""
Growth versus boundedness of the second moment
==============================================

Sweep the fractional order beta and the noise level lambda on [0, pi] with
space-time white noise, solving the closed second-moment equation.  For
beta > 1/2 a threshold in lambda separates bounded and growing cells; for
beta < 1/2 growth at small lambda is extremely slow and typically does not
show up on a horizon of 20.
"""

import sys

from fracspde import SimulationConfig, phase_sweep

base = SimulationConfig(T=20.0, J=256, N=16, M=32)
betas = [0.3, 0.45, 0.6, 0.75, 0.9]
lambdas = [0.05, 0.5, 1.0, 2.0, 5.0]

diag = phase_sweep(base, betas, lambdas, route="volterra", workers=2)

# compact table: G growth, B bounded, ? inconclusive
mark = {"growth": "G", "bounded": "B", "inconclusive": "?"}
print("beta \\ lambda " + " ".join(f"{lam:>5g}" for lam in lambdas))
for b in betas:
    print(f"{b:>13g} " + " ".join(f"{mark[c]:>5}" for c in diag.column(b)))

print()
sys.stdout.write(diag.thresholds_csv())
