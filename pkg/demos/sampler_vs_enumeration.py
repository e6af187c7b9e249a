"""Check the trajectory/source sampler against brute-force enumeration.

On instances small enough to list every (trajectory, label) assignment the
exact posterior is available, so the sampler's marginals can be compared
directly.
"""
from hbirl.oracle import sampler_oracle_check

for kind in ("stochastic", "deterministic"):
    for seed in range(3):
        res = sampler_oracle_check(kind, seed, samples=20000, burn_in=2000)
        print(f"{kind:13s} seed {seed}: state-action TV {res['tv_marginals']:.4f}  label TV {res['tv_labels']:.4f}")
