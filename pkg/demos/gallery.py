"""u = |x_1|^1.4 for p = 6: the flux stays in W^{1,2} while the Hessian of u blows up."""

from fluxreg import gallery_counterexample


def main():
    rep = gallery_counterexample(1.4, 6.0, refine=5)
    print(f"{'h':>10} {'|V|_W12':>10} {'|D2u|_L2':>10}")
    for row in rep.rows:
        print(f"{row['h']:10.5f} {row['norm_V_w12']:10.4f} {row['norm_hess_u_l2']:10.4f}")
    print(f"growth exponent {rep.growth_exponent:.4f} (expected {rep.expected_exponent:.4f})")


if __name__ == "__main__":
    main()
