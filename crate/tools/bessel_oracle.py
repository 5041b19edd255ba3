"""Generate reference values for J0, J1, Y0, Y1, K0, K1 with mpmath.

The output CSV is consumed by the special-function tests; values are
computed at 40 significant digits and printed with 17.
"""
import sys
import mpmath as mp

mp.mp.dps = 40


def main(path):
    n = 200
    lo, hi = mp.mpf("1e-6"), mp.mpf("300")
    xs = [float(lo * (hi / lo) ** (mp.mpf(i) / (n - 1))) for i in range(n)]
    xs += [1e-8, 1.0, 2.0, 10.0, 500.0]
    with open(path, "w") as f:
        f.write("x,j0,j1,y0,y1,k0,k1\n")
        for x in xs:
            xm = mp.mpf(x)
            vals = [
                mp.besselj(0, xm),
                mp.besselj(1, xm),
                mp.bessely(0, xm),
                mp.bessely(1, xm),
                mp.besselk(0, xm),
                mp.besselk(1, xm),
            ]
            f.write(repr(x) + "," + ",".join(mp.nstr(v, 17, min_fixed=0, max_fixed=0) for v in vals) + "\n")


if __name__ == "__main__":
    main(sys.argv[1])
