"""Reference values of E_{a,b}(z) by direct summation in high precision.

Writes tests/data/ml_oracle.csv. Rerun only when the point set changes:

    python3 tests/oracle/ml_oracle.py > tests/data/ml_oracle.csv
"""
import cmath

from mpmath import mp, mpc, mpf, rgamma, nstr

ALPHAS = [0.6, 1.0, 1.2, 1.5, 1.8, 1.9, 2.0]
BETAS = [0.5, 1.0, 1.7, 2.0, 2.6, 3.5]
REAL_X = [-0.5, -3.0, -8.0, -9.0, -10.5, -12.0, -14.5, -30.0, -100.0, -1000.0, 2.5, 9.0]
COMPLEX_Z = [cmath.rect(r, th) for r in (5.0, 12.0, 40.0) for th in (0.7, 2.0, 2.8)]


def ml(a, b, z):
    a, b, z = mpf(a), mpf(b), mpc(z)
    r = abs(z)
    # enough digits to absorb the cancellation of the alternating terms
    mp.dps = 40 + int(float(r) ** (1 / float(a)) / 1.1)
    s, t, k = mpc(0), mpc(1), 0
    while True:
        term = t * rgamma(a * k + b)
        s += term
        if k > 10 and k * float(a) > 2 * float(r) ** (1 / float(a)) and abs(term) < abs(s) * mpf(10) ** (-mp.dps + 5):
            break
        t *= z
        k += 1
    return s


def main():
    print("alpha,beta,re,im,value_re,value_im")
    for a in ALPHAS:
        for b in BETAS:
            pts = [complex(x, 0) for x in REAL_X] + COMPLEX_Z
            for z in pts:
                if a < 1 and abs(z) > 30:
                    continue
                v = ml(a, b, z)
                print(f"{a},{b},{z.real!r},{z.imag!r},{nstr(v.real, 20)},{nstr(v.imag, 20)}")


if __name__ == "__main__":
    main()
