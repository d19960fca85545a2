"""Partial turnpike: the steady pair depends on where you start.

System 1: X1' = -X1 + u, X2' = 0. The second coordinate cannot be moved,
so each initial value of X2 picks its own steady state (0, X2(0)).

System 2: X1' = -X1 + u with an uncontrolled rotation in (X2, X3). A
rotation never settles, so only states with X2 = X3 = 0 have a turnpike.
"""

import numpy as np

from lcturnpike import (LinearSystem, QuadraticCost, build_spaces, certify,
                        decompose, solve_steady, value_gap_sweep)

# %% System 1: a family of steady states.
sys = LinearSystem([[-1.0, 0.0], [0.0, 0.0]], [[1.0], [0.0]], [0.0, 0.0])
cost = QuadraticCost(np.eye(2), np.eye(1))
dec = decompose(sys)
spaces = build_spaces(dec, sys.b)
print("controllable dimension k =", dec.k)
print("A22 =", dec.A22.ravel(), " kernel dim =", spaces.d2)

steadies = []
for x in ([1.0, 3.0], [1.0, -1.0]):
    x = np.array(x)
    cert = certify(spaces, dec.P2, x)
    st = solve_steady(sys, dec, cost, spaces, cert)
    steadies.append(st.x_star)
    rep = value_gap_sweep(sys, cost, x, st, [20.0, 40.0])
    fit = rep.records[-1].fit_x
    print(f"x = {x}  ->  x* = {np.round(st.x_star, 12)}  V* = {st.v_star:.3f}"
          f"  lambda = {fit.lam:.3f}  {rep.verdict}")
print("distance between steady states:",
      np.linalg.norm(steadies[0] - steadies[1]))

# %% System 2: the rotation block makes feasibility a real restriction.
A = np.array([[-1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
sys3 = LinearSystem(A, [[1.0], [0.0], [0.0]], np.zeros(3))
cost3 = QuadraticCost(np.eye(3), np.eye(1))
dec3 = decompose(sys3)
spaces3 = build_spaces(dec3, sys3.b)
print("\nA22 eigenvalues:", np.linalg.eigvals(dec3.A22))
print("stable dim", spaces3.d1, " kernel dim", spaces3.d2,
      " marginal spectrum", spaces3.marginal)

for x in ([1.0, 0.0, 0.0], [1.0, 1.0, 0.0]):
    x = np.array(x)
    cert = certify(spaces3, dec3.P2, x)
    st = solve_steady(sys3, dec3, cost3, spaces3, cert, allow_infeasible=True)
    rep = value_gap_sweep(sys3, cost3, x, st, [20.0, 40.0],
                          feasible=cert.feasible)
    mids = [f"{r.midpoint_dev_x:.2e}" for r in rep.records]
    print(f"x = {x}  feasible={cert.feasible}  residual {cert.residual:.3f}"
          f"  mid-horizon deviation {mids}  {rep.verdict}")
