"""A small version of the benchmark: 100 instances of the easiest case.

Writes CSV files and an SVG quality profile under ./mini-bench and prints
the normalized discounted costs.  The full runs use ``python -m smiri run``.
"""

import sys

from smiri import bench

out = sys.argv[1] if len(sys.argv) > 1 else "mini-bench"
case = bench.with_instances(bench.builtin_case(6), 100)
summaries = bench.run_benchmark([case], out_dir=out)
print(bench.format_summary(summaries))
print(f"\nfiles written to {out}/")
