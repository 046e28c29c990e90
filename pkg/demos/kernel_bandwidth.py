"""Walkthrough: from step-function equipercentile maps to the linear limit.

Discrete score distributions make the raw equipercentile map a staircase.
Gaussian kernel continuization smooths each CDF; as the bandwidth grows
the map straightens out, and in the infinite limit it IS the linear
transform defined by the two means and standard deviations.
"""

import math

import numpy as np

from localeq import ExamineeRecord, equipercentile_family, stratify_quantile


def main():
    rng = np.random.default_rng(11)
    records = [
        ExamineeRecord(form=0, score=int(s), anchor=None, covariates=())
        for s in rng.binomial(30, 0.55, 250)
    ] + [
        ExamineeRecord(form=1, score=int(s), anchor=None, covariates=())
        for s in rng.binomial(30, 0.45, 250)
    ]
    everyone = stratify_quantile(np.full(len(records), 0.5), 1)
    y_sd = np.std([r.score for r in records if r.form == 1])

    bandwidths = [None, 0.8, 3 * y_sd, 1e4 * y_sd, math.inf]
    labels = ["raw steps", "h=0.8", "h=3sd", "h=10000sd", "linear"]
    maps = [
        equipercentile_family(records, everyone, bandwidth=bw).entries[1]
        for bw in bandwidths
    ]

    grid = [8, 11, 14, 17, 20]
    print("equated value of form-Y score y under increasing bandwidth:")
    print("  y   " + "".join(f"{lab:>12s}" for lab in labels))
    for y in grid:
        row = "".join(f"{m(float(y)):12.2f}" for m in maps)
        print(f"  {y:2d} {row}")

    linear = maps[-1]
    huge = maps[-2]
    gap = max(abs(huge(float(y)) - linear(float(y))) for y in range(8, 23))
    print(f"\nmax |h=10000sd - linear| over mid scores: {gap:.2e}")
    print("the kernel family shrinks scores toward the mean before adding "
          "noise, so widening the bandwidth recovers exactly the linear map")


if __name__ == "__main__":
    main()
