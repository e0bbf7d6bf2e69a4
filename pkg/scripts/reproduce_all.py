#!/usr/bin/env python3
"""Run the full experiment battery into ./outputs (or a given directory).

Deterministic given the config; re-running reproduces every CSV bitwise.
"""

import sys
from pathlib import Path

from geodesic_lab.cli import main


def run(out_dir="outputs", config=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = ["--config", config] if config else []
    jobs = [
        ["validate", "--support-samples", "100000"],
        ["lyapunov", "--map", "S", "--n-iters", "100000", "--seed", "0",
         "--out", str(out / "lyapunov_S.csv")],
        ["lyapunov", "--map", "Q", "--n-iters", "1000000", "--n-seeds", "5",
         "--seed", "0", "--out", str(out / "lyapunov_Q.csv")],
        ["lyapunov", "--map", "P", "--n-iters", "1000000", "--n-seeds", "3",
         "--seed", "0", "--out", str(out / "lyapunov_P.csv")],
        ["lyapunov", "--map", "f", "--n-iters", "200000", "--seed", "0",
         "--out", str(out / "lyapunov_f.csv")],
        ["prop51", "--n-samples", "100000", "--seed", "0",
         "--out", str(out / "prop51.csv"), "--svg", str(out / "prop51.svg")],
        ["drift", "--z0", "0.25,0.5,0.75", "--out", str(out / "drift.csv")],
        ["holonomy", "--k-grid", "2,4,8", "--out", str(out / "holonomy.csv")],
        ["birkhoff", "--bands", "1,2", "--n-starts", "10",
         "--n-iters", "200000", "--out", str(out / "birkhoff.csv")],
        ["assemble-report", "--out", str(out / "bands.csv")],
    ]
    worst = 0
    for job in jobs:
        print("== geodesic-lab " + " ".join(job))
        rc = main(job + base)
        worst = max(worst, rc)
    return worst


if __name__ == "__main__":
    sys.exit(run(*sys.argv[1:]))
