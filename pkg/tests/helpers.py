"""Shared fixtures-by-function for the test suite."""
from __future__ import annotations

import random

from adaptvm.ir import parse_transport
from adaptvm.loader import load_module
from adaptvm.optimizer import OptimizationManager, standard_phases
from adaptvm.profiling import PathProfiler, ProfilingManager, SamplingProfiler
from adaptvm.reference import binop
from adaptvm.replacer import Replacer
from adaptvm.vm import VM, VMTrap


def outcome(vm: VM, name: str, args) -> str:
    """Result or trap of one invocation, as comparable text."""
    try:
        return vm.describe(vm.invoke(name, list(args)))
    except VMTrap as exc:
        return "trap: " + str(exc).split(": ", 1)[1]


def plain_vm(text: str, kernel_impl=None) -> VM:
    vm = VM(kernel_impl=kernel_impl)
    load_module(parse_transport(text), vm)
    return vm


class Rig:
    """VM + profiling + optimizer + replacer without the manager loop."""

    def __init__(self, text: str | None = None, phases=("devirtualize", "inline", "constfold", "cse", "dce"),
                 path: bool = True, sampling: bool = False, kernel_impl=None, sample_period: int = 0):
        self.vm = VM(kernel_impl=kernel_impl, sample_period=sample_period)
        self.profiling = ProfilingManager()
        self.path = None
        if sampling:
            self.profiling.register_component(SamplingProfiler(self.vm))
        if path:
            self.path = PathProfiler(self.vm, auto=True)
            self.profiling.register_component(self.path)
        self.optimizer = OptimizationManager(self.vm, self.profiling)
        self.replacer = Replacer(self.vm, self.optimizer)
        self.optimizer.replacer = self.replacer
        for ph in standard_phases(phases, profiler=self.path):
            self.optimizer.register_phase(ph)
        if text is not None:
            load_module(parse_transport(text), self.vm)

    def optimize_all(self) -> dict:
        out = {}
        for name in sorted(self.vm.transport):
            res = self.optimizer.optimize(name)
            self.replacer.install(name, res.image)
            out[name] = res
        return out


def random_inputs(seed: int, arity: int, lo: int, hi: int, n: int) -> list[list[int]]:
    rng = random.Random(seed)
    return [[rng.randint(lo, hi) for _ in range(arity)] for _ in range(n)]


def block_counts(proc, args, counts: dict[str, int]) -> None:
    """Brute force: walk a call-free, integer-only transport procedure and count block entries."""
    env = dict(zip(proc.params, args))
    blocks = proc.block_map()
    b = proc.blocks[0]
    prev = None
    while True:
        counts[b.label] = counts.get(b.label, 0) + 1
        if b.phis:
            vals = [env[phi.incoming[prev]] for phi in b.phis]
            for phi, v in zip(b.phis, vals):
                env[phi.dest] = v
        for ins in b.instructions:
            if ins.op == "const":
                env[ins.dest] = ins.args[0]
            else:
                env[ins.dest] = binop(ins.op, env[ins.args[0]], env[ins.args[1]])
        t = b.terminator
        if t.op == "ret":
            return
        prev = b.label
        if t.op == "br":
            b = blocks[t.args[0]]
        else:
            b = blocks[t.args[1] if env[t.args[0]] != 0 else t.args[2]]
