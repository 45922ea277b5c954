"""Walk through the one-receiver example end to end.

The receiver loses 2 by acting in the bad state and gains 1 in the good
one; both states are equally likely. The sender always wants action.
"""

from persuade.model import SignalingScheme, is_persuasive, persuasiveness_residuals, sender_utility, tiny_instance
from persuade.persuasion_opt import SolverOptions, approx_projection, exact_offline_solve, offline_solve


def main():
    inst = tiny_instance()
    k = (0,)

    naive = SignalingScheme.always(inst, inst.full_profile)
    print("always recommend acting:", sender_utility(inst, naive, k), "persuasive:", is_persuasive(inst, naive))
    print("  obedience residuals:", persuasiveness_residuals(inst, naive))

    scheme, opt = exact_offline_solve(inst, [k], [1.0])
    print("optimal scheme value:", round(opt, 6))
    for th, name in enumerate(inst.states):
        print(f"  {name}: {scheme.state(th)}")

    for label, opts in [("accelerated", SolverOptions()), ("plain ellipsoid", SolverOptions.faithful())]:
        res = offline_solve(inst, [k], [1.0], eps=0.01, options=opts)
        iters = sum(p.iterations for p in res.probes)
        print(f"offline solver ({label}): value {res.value:.4f}, {len(res.probes)} probes, {iters} ellipsoid steps")

    proj = approx_projection(inst, [k], [2.0], eps=1e-3)
    print("projection of y=2 onto achievable rewards:", round(proj.x[k], 6))


if __name__ == "__main__":
    main()
