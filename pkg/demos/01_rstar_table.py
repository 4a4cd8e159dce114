"""Build the r* table for a small tree model and look at a few rows.

Row (2, 1, a) is an edge out of a node one step from the goal with two
units of slack: it succeeds with probability p and improves by 1, so its
rate is p.  Row (3, 2, a) needs a two-step macro-action, and the table's
numbers can be checked against a direct simulation.
"""

from smiri.oracles import mc_estimate_rate
from smiri.rstar import precompute_r_star
from smiri.tree import TreeModelParams, make_tree_problem

p = 0.4
problem = make_tree_problem(TreeModelParams(p, h0=6, C_max=12))
table = precompute_r_star(problem, 12)

for e in [(2, 1, 0), (3, 2, 0), (6, 2, 0), (10, 6, 0)]:
    row = table.row(*e)
    print(f"class {e}: p_s={row.p_s:.4f} t_s={row.t_s:.4f} t_f={row.t_f:.4f} "
          f"delta={row.delta:.4f} r*={row.r_star:.5f}")

print("\nsurviving descendants of (2, 1, a) after failure:", table.row(2, 1, 0).edges_f)

print("\nMonte Carlo check (20 000 simulated macro-actions each):")
for e in [(2, 1, 0), (3, 2, 0), (6, 2, 0)]:
    est = mc_estimate_rate(problem, table, e, 20_000, seed=1)
    print(f"  {e}: table {table.r_star[e]:.5f}  simulated {est.rate:.5f} +- {est.std_error:.5f}")
