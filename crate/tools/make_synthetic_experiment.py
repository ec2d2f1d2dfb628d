#!/usr/bin/env python3
"""Builds scenarios/data/synthetic_experiment.csv from a material-point trace.

Usage:
    rdm run scenarios/yeoh_fit.toml --out /tmp/fit
    python3 tools/make_synthetic_experiment.py /tmp/fit/trace.csv scenarios/data/synthetic_experiment.csv

The stress is the model stress with a deterministic 3 % ripple and a small
offset, sampled every 0.01 strain, so the sample resembles digitized data
without being an exact copy of the model.
"""
import csv
import math
import sys


def main(src, dst):
    with open(src, newline="") as f:
        rows = [(float(r["F"]) - 1.0, float(r["sigma"])) for r in csv.DictReader(f)]
    rows = [(0.0, 0.0)] + rows
    out = []
    for k in range(0, 36):
        eps = 0.01 * k
        # linear interpolation of the trace at eps
        for (e0, s0), (e1, s1) in zip(rows, rows[1:]):
            if e0 <= eps + 1e-12 <= e1 + 1e-12:
                t = 0.0 if e1 == e0 else (eps - e0) / (e1 - e0)
                s = s0 + t * (s1 - s0)
                break
        else:
            raise SystemExit(f"strain {eps} outside trace")
        noisy = s * (1.0 + 0.03 * math.sin(37.0 * eps)) + (0.02 * eps if k else 0.0)
        out.append((eps, noisy))
    with open(dst, "w", newline="") as f:
        f.write("strain,stress\n")
        for e, s in out:
            f.write(f"{e:.4f},{s:.6f}\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
