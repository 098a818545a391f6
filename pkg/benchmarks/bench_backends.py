"""Compare kernel backends at a few problem sizes.

    python benchmarks/bench_backends.py
"""

import sys

from ritzsplit import bench

for n in (300, 3000, 30000):
    print(f"# n = {n}", file=sys.stderr)
    bench.run(n=n, n_b=max(100, n // 10), repeats=3)
