"""Flux of the p-Laplacian on the unit disk with f = 1.

The exact flux is -x/2 for every p; the script prints the nodal error and
the global W^{1,2} / L^2 ratio (exact value sqrt(5/8)).
"""

import math

import numpy as np

from fluxreg import GridDomain, ScalarField, flux, global_estimate, power_law, solve_dirichlet


def main():
    d = GridDomain.disk(1.0, 1 / 64)
    X, Y = d.mesh()
    f = ScalarField.from_function(d, lambda x, y: 1 + 0 * x)
    print(f"{'p':>5} {'max|V+x/2|':>12} {'ratio':>8}   (exact ratio {math.sqrt(5 / 8):.4f})")
    for p in (1.5, 2.0, 3.0, 4.5):
        sf = power_law(p)
        u, rep = solve_dirichlet(sf, d, f)
        V = flux(sf, u, quiet=True).values
        err = np.hypot(V[0] + X / 2, V[1] + Y / 2)[d.inside].max()
        est = global_estimate(sf, u, f, rep)
        print(f"{p:5.1f} {err:12.2e} {est.ratio_upper:8.4f}")


if __name__ == "__main__":
    main()
