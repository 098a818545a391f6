"""Timing comparison of the numba and numpy kernel backends.

Times the hot paths of one training epoch at paper scale: the second-order
jet forward pass, the reverse pass, the two eigenvalue projections and the
nearest-neighbour search of the transport boundary term.  The first call of
each numba kernel (compilation) is excluded.

Run with ``python -m ritzsplit.bench``; prints CSV to stdout.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import constraints, kernels, network
from .tensor_ad import Tape


def _median_time(fn, repeats):
    fn()  # warm-up, includes compilation
    ts = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t)
    return float(np.median(ts))


def cases(n, n_b, rng):
    net = network.init(network.Architecture(network.ICNN, network.DEFAULT_WIDTHS, "softplus"), rng)
    x = rng.random((n, 2))
    A = rng.uniform(-5, 5, (n, 3))
    f = rng.uniform(0.1, 5, n)
    G = rng.random((n_b, 2))
    Y = rng.random((n_b, 2))
    adj = rng.normal(size=(n, 3))

    def forward(be):
        return lambda: Tape(net, x, order=2, backend=be)

    def backward(be):
        tape = Tape(net, x, order=2, backend=be)
        return lambda: tape.backward(adj_hess=adj)

    return {
        "jet_forward": forward,
        "jet_backward": backward,
        "project_ma": lambda be: (lambda: constraints.project_monge_ampere(A, f, backend=be)),
        "project_pucci": lambda be: (lambda: constraints.project_pucci(A, f, 3.0, backend=be)),
        "nearest": lambda be: (lambda: kernels.get(be).nearest(G, Y)),
    }


def run(n=3000, n_b=300, repeats=5, seed=0, out=sys.stdout):
    rng = np.random.default_rng(seed)
    table = cases(n, n_b, rng)
    out.write("kernel,n,numpy_s,numba_s,speedup\n")
    rows = []
    for name, make in table.items():
        t_np = _median_time(make("numpy"), repeats)
        t_nb = _median_time(make("numba"), repeats)
        rows.append((name, t_np, t_nb))
        out.write(f"{name},{n},{t_np:.6f},{t_nb:.6f},{t_np / t_nb:.2f}\n")
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description="numba vs numpy kernel timings")
    p.add_argument("--points", type=int, default=3000)
    p.add_argument("--boundary-points", type=int, default=300)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    run(args.points, args.boundary_points, args.repeats, args.seed)
    return 0


if __name__ == "__main__":
    sys.exit(main())
