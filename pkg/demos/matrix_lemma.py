"""Numerical minimum of the pointwise functional against min(1, (1 + theta)^2)."""

import numpy as np

from fluxreg import min_constant
from fluxreg.matrix_lemma import envelope


def main():
    seeds = np.random.SeedSequence(0).spawn(6)
    for theta, seed in zip((-1.0, -0.9, -0.5, 0.0, 1.0, 3.0), seeds):
        res = min_constant(theta, 3, starts=100, iterations=2000, samples=100_000, rng=np.random.default_rng(seed))
        print(f"theta={theta:5.2f}  search={res.search_estimate:.6f}  envelope={envelope(theta):.6f}  "
              f"valid={res.valid}")


if __name__ == "__main__":
    main()
