"""Compare the compiled and pure-Python interpreter kernels.

    python benchmarks/bench_kernel.py [--repeat N] [--workload NAME ...]

Each workload runs unmanaged (no optimizer) so both kernels execute exactly
the same instructions; the virtual clocks must agree, only wall time differs.
"""
from __future__ import annotations

import argparse
import statistics
import time

from adaptvm import kernel
from adaptvm.system import RunConfig, build_system


# call-free loop: every instruction stays inside the kernel
LOOP = """
module loop
proc main nparams 0 entry
block b0
  s = const 0
  i = const 0
  one = const 1
  n = const 300000
  br head
block head
  c = cmp_lt i n
  br_if c body done
block body
  t = mul i i
  s = add s t
  i = add i one
  br head
block done
  ret s
"""


def time_run(workload: str, impl) -> tuple[float, int, list[str]]:
    source = LOOP if workload == "loop" else None
    s = build_system(RunConfig(workload=workload, phases=(), profilers=()), source=source, kernel_impl=impl)
    calls = [(n, ()) for n, p in s.vm.transport.items() if p.entry]
    t0 = time.perf_counter()
    result = s.manager.run(calls, managed=False)
    return time.perf_counter() - t0, s.vm.clock, s.output(result)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--workload", action="append", default=None)
    ns = ap.parse_args(argv)
    workloads = ns.workload or ["loop", "hotloop", "phaseshift", "deopt_base"]
    impls = kernel.available()
    if kernel.compiled is None:
        print("compiled kernel not built; timing the pure-Python kernel only")
    print(f"{'workload':<12} {'kernel':<8} {'ticks':>10} {'best s':>9} {'Mticks/s':>9}")
    for w in workloads:
        best = {}
        ref = None
        for impl in impls:
            times = []
            for _ in range(ns.repeat):
                dt, clock, out = time_run(w, impl)
                times.append(dt)
                if ref is None:
                    ref = (clock, out)
                elif (clock, out) != ref:
                    raise SystemExit(f"{w}: kernels disagree")
            best[impl.IMPLEMENTATION] = min(times)
            print(f"{w:<12} {impl.IMPLEMENTATION:<8} {clock:>10} {min(times):>9.4f} "
                  f"{clock / min(times) / 1e6:>9.2f}   (median {statistics.median(times):.4f})")
        if len(best) == 2:
            vals = list(best.values())
            print(f"{w:<12} speedup  {vals[1] / vals[0]:.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
