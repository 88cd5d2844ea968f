"""H1 quotients of J(m) and the spread of D(t) across resolutions.

    python3 scripts/refinement_study.py [--amp 0.5] [--sizes 32 64 128]
"""

import argparse
import time

import numpy as np

from mfglab import AnalysisConfig, Grid, ProblemSpec, make_model, solve
from mfglab.regularity_analysis import constancy_of_D, h1_space_quotient, h1_time_quotient


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--amp", type=float, default=0.5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    args = ap.parse_args()

    cfg = AnalysisConfig()
    rows = []
    for N in args.sizes:
        g = Grid(1, N, N, 1.0)
        psi = args.amp * np.cos(2 * np.pi * g.coords[0])
        spec = ProblemSpec(g, make_model("quadratic"), psi, np.ones(N), max_iter=20000)
        t0 = time.perf_counter()
        primal, _, rep = solve(spec)
        hs = h1_space_quotient(spec, primal, cfg)
        ht = h1_time_quotient(spec, primal, cfg)
        Ds = constancy_of_D(spec, primal, cfg)
        rows.append((N, max(hs.values()), max(ht.values()), Ds.dispersion, Ds.mean))
        print(f"N={N:4d}  it={rep.iterations:5d}  rel gap {rep.relative_gap:.1e}  {time.perf_counter() - t0:6.1f}s")

    print("\n   N   H1 space   H1 time   D spread   D mean")
    for N, qs, qt, disp, mean in rows:
        print(f"{N:4d}  {qs:9.4f}  {qt:8.4f}  {disp:9.4f}  {mean:8.4f}")
    qs = [r[1] for r in rows]
    print(f"\nspace quotient ratio max/min = {max(qs) / min(qs):.3f}")


if __name__ == "__main__":
    main()
