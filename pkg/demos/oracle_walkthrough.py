"""Exact variances on a two-state chain, and what the filter makes of them.

For a small discrete model every quantity in the asymptotic theory can be
computed exactly: the target, the limiting variance under a given resampling
schedule, and the schedule a cv^2 threshold converges to.  We compare them
with a batch of filter runs.

    python3 demos/oracle_walkthrough.py
"""

import numpy as np

from smcvar import oracle
from smcvar.engine import run_filter
from smcvar.experiment import two_state_hmm
from smcvar.resampling import Always, CvThreshold, Never

dhmm = two_state_hmm((0, 1, 1, 0, 1, 1))
psi_T, _ = oracle.exact_posterior(dhmm)
print(f"target psi_T = {psi_T:.6f}")

c = 1.35
tau = oracle.exact_tau_star(dhmm, c)
schedules = {"every stage": None, "never": (), f"cv^2 >= {c}": tau}
for label, schedule in schedules.items():
    print(f"sigma^2 ({label:>12}) = {oracle.exact_sigma2(dhmm, schedule=schedule):.5f}")
print(f"limiting resampling times for c = {c}: {tau}")

# Replicate the filter and compare the spread of sqrt(m)(estimate - psi_T)
# with the exact variance and with the average of the per-run estimates.
m, reps = 5000, 300
model = dhmm.to_model()
for label, policy in (("every stage", Always()), ("never", Never()), (f"cv^2 >= {c}", CvThreshold(c))):
    errs, var_hat = [], []
    for r in range(reps):
        out = run_filter(model, m, policy, seed=np.random.SeedSequence([3, r]), gilks_berzuini=False)
        errs.append(np.sqrt(m) * (out.estimate - psi_T))
        var_hat.append(m * out.se_ancestral**2)
    print(f"{label:>12}: empirical {np.var(errs, ddof=1):.5f}  estimated {np.mean(var_hat):.5f}")
