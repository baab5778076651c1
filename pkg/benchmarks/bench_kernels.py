"""Benchmark the compiled min-cost-flow kernel against the pure-Python one.

Run:  python benchmarks/bench_kernels.py
"""

import statistics
import time

from relaynet import fixtures, topology
from relaynet._kernels.mcmf_py import solve_mcmf as solve_py

try:
    from relaynet._kernels._mcmf_cy import solve_mcmf as solve_cy
except ImportError:
    solve_cy = None


def layered_instances(n=40):
    out = []
    for seed in range(n):
        k = 1 + seed % 2
        scen = fixtures.random_geometric(seed, n_relays=12, n_sources=2, k=k)
        g = topology.build_model_graph(scen, scen.link_model)
        for src in [s.id for s in scen.sources]:
            lay = topology._build_layered(
                g, src, 6, {r.id: 1 for r in scen.potential_relays}, frozenset(), k, None
            )
            if lay is not None:
                out.append(
                    (
                        lay.super_sink + 1, lay.tails, lay.heads, lay.caps,
                        lay.costs, lay.super_source, lay.super_sink, k,
                    )
                )
    return out


def bench(fn, instances, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for inst in instances:
            fn(*inst)
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def main():
    instances = layered_instances()
    arcs = sum(len(i[1]) for i in instances)
    print(f"{len(instances)} layered design instances, {arcs} arcs total")
    t_py = bench(solve_py, instances)
    print(f"pure python : best {t_py[0] * 1e3:8.1f} ms   median {t_py[1] * 1e3:8.1f} ms")
    if solve_cy is None:
        print("cython      : extension not built (pip install -e . --no-build-isolation)")
        return
    t_cy = bench(solve_cy, instances)
    print(f"cython      : best {t_cy[0] * 1e3:8.1f} ms   median {t_cy[1] * 1e3:8.1f} ms")
    print(f"speedup     : {t_py[0] / t_cy[0]:.1f}x")
    for inst in instances[:10]:
        assert solve_py(*inst) == solve_cy(*inst), "backends disagree"
    print("spot-checked: identical results on 10 instances")


if __name__ == "__main__":
    main()
