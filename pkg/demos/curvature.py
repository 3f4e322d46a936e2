"""Weak-log norm of the curvature on small arcs: circle against a 1/s spike."""

from fluxreg.rearrangement import circle, curvature_admissibility, spike_curve


def main():
    radii = [0.5, 0.25, 0.125, 0.0625, 0.03125]
    for curve in (circle(1.0), spike_curve(0.25)):
        rep = curvature_admissibility(curve, radii, samples=2**14, centers=128)
        print(curve.name, " ".join(f"{v:.3f}" for v in rep.sup_norm))


if __name__ == "__main__":
    main()
