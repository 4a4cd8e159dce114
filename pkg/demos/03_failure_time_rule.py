"""Compare the two failure-time rules against simulation.

When a descendant class is reached ``m`` times under the same child, the
success side of the recursion charges its time ``m`` times but the usual
failure-side update adds it once.  For large bounds ``m`` grows and the
"literal" table overstates time in failure outcomes.  This script puts
the two tables next to a Monte Carlo run of the same macro-action.
"""

from smiri.oracles import mc_estimate_rate
from smiri.rstar import precompute_r_star
from smiri.tree import TreeModelParams, make_tree_problem

problem = make_tree_problem(TreeModelParams(0.4, 50, 40))
tables = {rule: precompute_r_star(problem, 40, failure_time=rule) for rule in ("literal", "scaled")}

print(f"{'class':>14} {'rule':>8} {'table t':>9} {'sim t':>9} {'table r*':>9} {'sim rate':>9}")
for e in [(10, 4, 0), (20, 6, 0), (30, 8, 0), (40, 10, 0)]:
    for rule, tb in tables.items():
        row = tb.row(*e)
        est = mc_estimate_rate(problem, tb, e, 4000, seed=3)
        print(f"{str(e):>14} {rule:>8} {row.t_s + row.t_f:9.2f} {est.mean_time:9.2f} "
              f"{row.r_star:9.5f} {est.rate:9.5f}")
