"""Run the five searchers on one shared instance and print their traces.

Every searcher sees exactly the same tree: a child's feature is a pure
function of the seed and the action history, so the order in which nodes
are visited does not matter.
"""

from smiri.dptables import expected_optimal_cost, survival_table
from smiri.rstar import precompute_r_star
from smiri.search import ALL_POLICIES, SearchTables, run_anytime
from smiri.tree import TreeInstance, TreeModelParams, make_tree_problem

params = TreeModelParams(p=0.4, h0=50, C_max=80)
problem = make_tree_problem(params)
S = survival_table(problem, params.C_max)
tables = SearchTables(problem.digest(), precompute_r_star(problem, params.C_max), S)
e_copt, coverage = expected_optimal_cost(S, params.h0)
print(f"E[C_opt] = {e_copt:.3f} (probability of a solution within C_max: {coverage:.6f})\n")

instance = TreeInstance(params, master_seed=7, case_id=5, instance_id=0)
for policy in ALL_POLICIES:
    tr = run_anytime(policy, instance, tables, N=4000)
    events = ", ".join(f"{c}@{s}" for s, c in zip(tr.steps, tr.costs))
    print(f"{policy.value:6s} final {tr.final_cost:3d}   cost@edges: {events}")
