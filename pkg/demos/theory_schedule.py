"""
Checking the step-size schedule behind the convergence rate
============================================================

The backward recursion for c_t and Gamma_t certifies per-step descent only
if every Gamma_t is positive.  With M = C_m L2 that needs C_m of a few
thousand; the practical C_m = 10 fails the check.
"""

import numpy as np

from cubicvr.objectives import LipschitzEstimates
from cubicvr.theory import corollary_schedule, schedule_constants

lip = LipschitzEstimates(L1=1.0, L2=1.0)

for C_m in (10.0, 2700.0, 3000.0):
    k = schedule_constants(C_m)
    print(f"C_m = {C_m:6g}:  C_l = {k['C_l']:+.3e}  C_u = {k['C_u']:.3e}")

for n in (20, 1000, 10**5):
    tab = corollary_schedule(n, lip)
    print(f"n = {n:6d}  T = {tab.T:3d}  min Gamma = {tab.gamma.min():.4e}"
          f"  c_0 = {tab.c[0]:.4e}  valid = {tab.valid}")

tab = corollary_schedule(1000, lip, C_m=10.0)
print("C_m = 10 at n = 1000: valid =", tab.valid, " negative Gammas:", int(np.sum(tab.gamma <= 0)))
