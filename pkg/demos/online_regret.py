"""Run the online learner against two adversaries and compare with hindsight.

Usage: python demos/online_regret.py [T]
"""

import math
import sys

from persuade.harness import adversary_sequence, generate_instance
from persuade.ogd import alpha_regret, default_regret_bound, run_ogd


def main(T=200):
    inst = generate_instance("coverage", 3, 2, 2, seed=11)
    eta, eps = 1 / math.sqrt(T), 1 / T
    for kind in ("constant", "cycle", "random"):
        seq = adversary_sequence(inst, {"kind": kind}, T, seed=0)
        run = run_ogd(inst, seq, eta, eps)
        regret = alpha_regret(inst, run)
        bound = default_regret_bound(T, len(run.final.E))
        ms = sum(r.proj_ms for r in run.records) / T
        print(f"{kind:>8}: utility {run.total_utility:7.2f}  regret {regret:6.2f}  bound {bound:6.1f}  "
              f"profiles {len(run.final.E)}  {ms:.1f} ms/projection")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 200)
