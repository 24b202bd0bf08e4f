"""Arbitrary-precision reference values for the step-size / iteration planners
and the underdamped kernel moments. Regenerate with `python3 planner_oracle.py`.
"""
import json
import random

from mpmath import mp, mpf, exp, sqrt, log

mp.dps = 50


def overdamped(L, m, R, d, eps):
    Rb2 = max(R * R, 8 / m)
    d1 = eps**2 * exp(-L * R * R) / (64 * L * L * Rb2**2 * d)
    d2 = eps * exp(-L * R * R / 2) / (2 * L * L * Rb2 * sqrt(60 * R * R + 6 * d / m))
    n = (L * L
         * max(64 * exp(mpf(5) / 4 * L * R * R) * Rb2**3 * d / eps**2,
               16 * exp(mpf(3) / 4 * L * R * R) * Rb2 * sqrt(R * R + d / m) / eps)
         * log(24 * exp(L * R * R / 4) * sqrt(R * R + d / m) / eps))
    return min(d1, d2), n


def underdamped(L, m, R, d, eps):
    kappa = L / m
    big = max(kappa, L * R * R)
    s = sqrt(R * R + d / m)
    delta = exp(-11 * L * R * R / 4) * eps / (mpf(10)**8 * big * s)
    n = (mpf(10)**18 * exp(11 * L * R * R / 2) * kappa * big**2
         * log(30 * exp(11 * L * R * R / 4) * s / eps) * s / eps)
    return delta, n


def kernel(delta, ckl):
    e2, e4 = exp(-2 * delta), exp(-4 * delta)
    return {
        "delta": float(delta),
        "ckl": float(ckl),
        "var_uu": float((1 - e4) / ckl),
        "var_xx": float((delta - e4 / 4 - mpf(3) / 4 + e2) / ckl),
        "cov_xu": float((1 + e4 - 2 * e2) / (2 * ckl)),
        "mean_u_u": float(e2),
        "mean_u_grad": float(-(1 - e2) / (2 * ckl)),
        "mean_x_u": float((1 - e2) / 2),
        "mean_x_grad": float(-(delta - (1 - e2) / 2) / (2 * ckl)),
    }


def main():
    rng = random.Random(20240611)
    tuples = [(1.0, 1.0, 1.0, 2, 0.1)]
    while len(tuples) < 21:
        m = round(rng.uniform(0.2, 2.0), 6)
        L = round(m * rng.uniform(1.0, 8.0), 6)
        R = round(rng.uniform(0.0, 2.0), 6)
        d = rng.choice([1, 2, 5, 10, 50, 100])
        eps = round(10 ** rng.uniform(-3, -0.5), 8)
        tuples.append((L, m, R, d, eps))
    planner = []
    for (L, m, R, d, eps) in tuples:
        a = [mpf(repr(v)) for v in (L, m, R, d, eps)]
        od_delta, od_n = overdamped(*a)
        ud_delta, ud_n = underdamped(*a)
        planner.append({
            "L": L, "m": m, "R": R, "d": d, "eps": eps,
            "od_delta": mp.nstr(od_delta, 25), "od_n": mp.nstr(od_n, 25),
            "ud_delta": mp.nstr(ud_delta, 25), "ud_n": mp.nstr(ud_n, 25),
        })
    kernels = [kernel(mpf(dl), mpf(ckl)) for dl, ckl in
               [("0.1", 1000), ("0.05", 1000), ("0.001", 1000), ("1e-6", 1000),
                ("0.5", 8000), ("0.3", 40)]]
    with open("planner_reference.json", "w") as fh:
        json.dump({"planner": planner, "kernel": kernels}, fh, indent=1)


if __name__ == "__main__":
    main()
