"""Regenerate the unit-sphere quadrature tables in crates/core/data/spheres.

The two octahedrally symmetric schemes use the classic point structures
(axes, face diagonals, cube vertices, (a,a,b) and (c,d,0) orbits); orbit
parameters and weights are solved from the moment equations of the sphere.
The 225-point scheme is a Gauss-Legendre x uniform-azimuth product rule with
its polar axis along x, so it is symmetric under rotations about e1.

Requires numpy and scipy. Output is deterministic.
"""
import itertools
import os

import numpy as np
from scipy.optimize import least_squares

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data", "spheres")


def dfact(n):
    return 1 if n <= 0 else n * dfact(n - 2)


def moment(a, b, c):
    if a % 2 or b % 2 or c % 2:
        return 0.0
    return dfact(a - 1) * dfact(b - 1) * dfact(c - 1) / dfact(a + b + c + 1)


def expand(v):
    pts = set()
    for p in itertools.permutations(v):
        for s in itertools.product([1, -1], repeat=3):
            pts.add(tuple(round(p[i] * s[i], 15) + 0.0 for i in range(3)))
    return [np.array(q) for q in sorted(pts)]


def orbit(kind, param):
    if kind == "axis":
        return expand((1.0, 0.0, 0.0))
    if kind == "edge":
        return expand((np.sqrt(0.5), np.sqrt(0.5), 0.0))
    if kind == "vert":
        return expand((np.sqrt(1 / 3),) * 3)
    if kind == "aab":
        return expand((param, param, np.sqrt(1 - 2 * param * param)))
    if kind == "cd0":
        return expand((param, np.sqrt(1 - param * param), 0.0))
    raise ValueError(kind)


def build(x, spec):
    pts, ws = [], []
    for kind, wi, pi in spec:
        o = orbit(kind, x[pi] if pi is not None else None)
        pts += o
        ws += [x[wi]] * len(o)
    return np.array(pts), np.array(ws)


def monomials(deg):
    return [(a, b, c) for a in range(0, deg + 1, 2) for b in range(0, deg + 1 - a, 2)
            for c in range(0, deg + 1 - a - b, 2) if a >= b >= c]


def residual(x, spec, deg):
    p, w = build(x, spec)
    return np.array([np.sum(w * p[:, 0] ** a * p[:, 1] ** b * p[:, 2] ** c) - moment(a, b, c)
                     for a, b, c in monomials(deg)])


def solve(spec, nw, x0, deg, lb, ub):
    rng = np.random.default_rng(0)
    best = None
    for t in range(400):
        x = x0 if t == 0 else np.concatenate([rng.uniform(0.001, 0.02, nw), rng.uniform(lb[nw:], ub[nw:])])
        s = least_squares(residual, x, args=(spec, deg), bounds=(lb, ub), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        err = np.max(np.abs(s.fun))
        if best is None or err < best[0]:
            best = (err, s.x)
        if err < 1e-15:
            break
    assert best[0] < 1e-13, best
    return best[1]


def write(name, degree, p, w, note):
    path = os.path.join(OUT, name + ".txt")
    with open(path, "w", newline="\n") as f:
        f.write(f"# {name}: {len(w)} points, exact for spherical polynomials up to degree {degree}\n")
        f.write(f"# {note}\n")
        f.write("# columns: x y z w (weights sum to 1)\n")
        for q, wi in zip(p, w):
            f.write(f"{q[0]: .17e} {q[1]: .17e} {q[2]: .17e} {wi:.17e}\n")


def main():
    spec21 = [("axis", 0, None), ("edge", 1, None), ("aab", 2, 3)]
    x = solve(spec21, 3, np.array([0.013, 0.01, 0.0125, 0.388]), 9,
              np.array([0, 0, 0, 0.05]), np.array([1, 1, 1, 0.7]))
    p, w = build(x, spec21)
    write("BazantOh-2x21", 9, p, w, "octahedral orbits: 6 axes, 12 face diagonals, 24 (a,a,b)")

    spec61 = [("axis", 0, None), ("edge", 1, None), ("vert", 2, None), ("aab", 3, 7), ("aab", 4, 8),
              ("aab", 5, 9), ("cd0", 6, 10)]
    x = solve(spec61, 7, np.array([0.006, 0.006, 0.008, 0.008, 0.008, 0.008, 0.008, 0.2, 0.45, 0.65, 0.4]), 13,
              np.array([0] * 7 + [0.05] * 4), np.array([1] * 7 + [0.7, 0.7, 0.7, 0.999]))
    p, w = build(x, spec61)
    write("BazantOh-61x2", 13, p, w,
          "octahedral orbits: 6 axes, 12 face diagonals, 8 vertices, 3 x 24 (a,a,b), 24 (c,d,0)")

    z, wz = np.polynomial.legendre.leggauss(15)
    pts, ws = [], []
    for zi, wi in zip(z, wz):
        r = np.sqrt(1 - zi * zi)
        for j in range(15):
            phi = 2 * np.pi * (j + 0.5) / 15
            pts.append((zi, r * np.cos(phi), r * np.sin(phi)))
            ws.append(wi / 2 / 15)
    write("SpherialDesign-225", 14, np.array(pts), np.array(ws),
          "product rule: 15 Gauss-Legendre nodes in x times 15 uniform azimuths")


if __name__ == "__main__":
    main()
