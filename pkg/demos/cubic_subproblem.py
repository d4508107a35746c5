"""
Solving the cubic sub-problem
=============================

Minimize m(h) = <g, h> + h'Hh/2 + (M/6)||h||^3 for a small indefinite H,
first in the easy case and then in the hard case where g has no
component along the bottom eigenvector.
"""

import numpy as np

from cubicvr.cubic import CubicModel, solve_exact, solve_krylov, verify_kkt

# an indefinite Hessian with a generic gradient
H = np.diag([-1.0, 1.0])
model = CubicModel(np.array([0.3, 1.0]), H, M=1.0)
sol = solve_exact(model)
print("easy case   h =", sol.h, " m(h) =", round(sol.model_value, 6), " hard:", sol.hard_case)

# the global-minimizer certificate: stationarity, curvature, decrease
print(verify_kkt(model, sol.h))

# g orthogonal to the bottom eigenvector: the multiplier sits at -lambda_min
# and the step picks up a null-space component of the right length
hard = CubicModel(np.array([0.0, 1.0]), H, M=1.0)
sol = solve_exact(hard)
print("hard case   h =", sol.h, " ||h|| =", np.linalg.norm(sol.h), " lam =", sol.lam)

# for large d only Hessian-vector products are needed
rng = np.random.default_rng(0)
d = 200
Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
A = (Q * np.linspace(-2, 5, d)) @ Q.T
g = rng.normal(size=d)
big = CubicModel(g, lambda v: A @ v, M=2.0)
kr = solve_krylov(big, max_dim=60, tol=1e-8)
ex = solve_exact(CubicModel(g, A, M=2.0))
print(f"Krylov dim {kr.krylov_dim}: m = {kr.model_value:.10f}, exact m = {ex.model_value:.10f}")
