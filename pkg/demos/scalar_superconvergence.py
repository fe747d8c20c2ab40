"""Superconvergence of the scalar four-field scheme and its postprocessings.

Solves the sine manufactured problem (u = sin(pi x) sin(pi y) on the unit
square) with the superconvergent degree tuple (k+1, k, k, k+1) on a few
refinement levels, then compares the raw potential u_h with:

* its distance to the L2 projection of u ("superclose"), which decays two
  orders faster than the error itself;
* the local postprocessings s1, s2, s3 (flux fitting in P_{k+2}) and the
  Taylor reconstruction, all of which inherit the faster rate.

Run:  python demos/scalar_superconvergence.py [k]
"""
import sys

import numpy as np

from xgdg import DegreeTuple, PenaltyParams, build_unit_square, postprocess, sine_case, solve_scalar
from xgdg.study import compute_errors

k = int(sys.argv[1]) if len(sys.argv) > 1 else 1
alpha = DegreeTuple.superconvergent(k)
params = PenaltyParams(1.0, gamma=1.0)
case = sine_case()
schemes = ("s1", "s2", "s3", "taylor")
levels = range(2, 6)

print(f"degree tuple {alpha}, gamma = 1, tau = h_e, eta = 1/h_e")
header = ["level", "u_err", "superclose"] + [f"post_{s}" for s in schemes]
print("  ".join(f"{h:>11}" for h in header))

rows = []
for level in levels:
    sol = solve_scalar(build_unit_square(level), alpha, params, case)
    post = {s: postprocess(sol, s) for s in schemes}
    errs = compute_errors(sol, post=post, include_flux=False)
    rows.append([errs[c] for c in header[1:]])
    print(f"{level:>11}  " + "  ".join(f"{v:11.3e}" for v in rows[-1]))

rows = np.array(rows)
rates = np.log2(rows[:-1] / rows[1:])
print(f"{'rate':>11}  " + "  ".join(f"{r:11.2f}" for r in rates[-1]))
print(f"\nexpected: u_err rate {k + 1}, all other columns rate {k + 3} (asymptotically)")
