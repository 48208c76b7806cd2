"""Direct tree-walking interpreters used as oracles.

They share nothing with the lowering or the VM kernel: transport procedures
run over a variable dictionary, SSA procedures evaluate phis on the taken
edge. Values are plain ints, ``("obj", id)`` or ``("proc", name)``.
"""
from __future__ import annotations

from .ir import BINOPS, ProcedureIR, TransportModule, TransportProcedure, wrap


class RefTrap(Exception):
    pass


class StepLimit(Exception):
    pass


def _is_int(v) -> bool:
    return isinstance(v, int)


def binop(op: str, x, y):
    if op == "cmp_eq":
        return int(x == y)
    if not (_is_int(x) and _is_int(y)):
        raise RefTrap(f"{op} on non-integer")
    if op == "add":
        return wrap(x + y)
    if op == "sub":
        return wrap(x - y)
    if op == "mul":
        return wrap(x * y)
    if op == "cmp_lt":
        return int(x < y)
    if op == "div":
        if y == 0:
            raise RefTrap("division by zero")
        q = abs(x) // abs(y)
        return wrap(q if (x < 0) == (y < 0) else -q)
    raise AssertionError(op)


class RefEnv:
    """Globals, heap and procedures for the reference interpreters."""

    def __init__(self, modules: list[TransportModule] = (), ssa: dict[str, ProcedureIR] | None = None,
                 max_steps: int = 10_000_000):
        self.procs: dict[str, TransportProcedure] = {}
        self.globals: dict[str, object] = {}
        self.heap: list[list] = []
        self.ssa = ssa or {}
        self.steps = 0
        self.max_steps = max_steps
        self.counters: dict[int, int] = {}
        for m in modules:
            self.add_module(m)

    def add_module(self, m: TransportModule) -> None:
        for p in m.procedures:
            self.procs[p.name] = p
        for g in m.globals:
            self.globals[g.name] = ("proc", g.init) if g.is_proc else g.init

    def call(self, name: str, args: list):
        if name in self.ssa:
            return run_ssa(self.ssa[name], args, self)
        return run_transport(self.procs[name], args, self)

    def _tick(self):
        self.steps += 1
        if self.steps > self.max_steps:
            raise StepLimit()

    def exec_simple(self, ins, get):
        """Execute a non-terminator; returns the value for ``ins.dest``."""
        op, a = ins.op, ins.args
        if op == "const":
            return a[0]
        if op in BINOPS:
            return binop(op, get(a[0]), get(a[1]))
        if op == "call":
            return self.call(a[0], [get(x) for x in a[1:]])
        if op == "call_indirect":
            f = get(a[0])
            if not (isinstance(f, tuple) and f[0] == "proc"):
                raise RefTrap("call through non-procedure")
            target = self.procs[f[1]]
            if target.param_count != len(a) - 1:
                raise RefTrap("arity mismatch")
            return self.call(f[1], [get(x) for x in a[1:]])
        if op == "proc_ref":
            return ("proc", a[0])
        if op == "load_global":
            return self.globals[a[0]]
        if op == "store_global":
            self.globals[a[0]] = get(a[1])
            return None
        if op == "new_obj":
            self.heap.append([0] * a[0])
            return ("obj", len(self.heap) - 1)
        if op in ("load_field", "store_field"):
            o = get(a[0])
            if not (isinstance(o, tuple) and o[0] == "obj"):
                raise RefTrap("field access on non-object")
            fields = self.heap[o[1]]
            if not 0 <= a[1] < len(fields):
                raise RefTrap("field index out of range")
            if op == "load_field":
                return fields[a[1]]
            fields[a[1]] = get(a[2])
            return None
        if op == "profile_inc":
            self.counters[a[0]] = self.counters.get(a[0], 0) + 1
            return None
        raise AssertionError(op)


def _branch(term, get):
    if term.op == "br":
        return term.args[0]
    c = get(term.args[0])
    if not _is_int(c):
        raise RefTrap("branch on non-integer")
    return term.args[1] if c != 0 else term.args[2]


def run_transport(p: TransportProcedure, args: list, env: RefEnv | None = None):
    """Interpret a transport procedure; phis (if any) are parallel assignments."""
    env = env or RefEnv()
    blocks = p.block_map()
    vars_ = dict(zip(p.params, args))
    get = vars_.__getitem__
    block = p.blocks[0]
    prev = None
    while True:
        if block.phis:
            vals = [get(phi.incoming[prev]) for phi in block.phis]
            for phi, v in zip(block.phis, vals):
                vars_[phi.dest] = v
        for ins in block.instructions:
            env._tick()
            v = env.exec_simple(ins, get)
            if ins.dest:
                vars_[ins.dest] = v
        env._tick()
        t = block.terminator
        if t.op == "ret":
            return get(t.args[0])
        prev = block.label
        block = blocks[_branch(t, get)]


def run_ssa(ir: ProcedureIR, args: list, env: RefEnv | None = None):
    """Interpret SSA form; asserts single assignment as it goes."""
    env = env or RefEnv()
    blocks = ir.block_map()
    vals = dict(zip(ir.params, args))
    get = vals.__getitem__
    block = ir.blocks[0]
    prev = None
    while True:
        if block.phis:
            new = [get(phi.incoming[prev]) for phi in block.phis]
            for phi, v in zip(block.phis, new):
                vals[phi.dest] = v
        for ins in block.instructions:
            env._tick()
            v = env.exec_simple(ins, get)
            if ins.dest:
                vals[ins.dest] = v
        env._tick()
        t = block.terminator
        if t.op == "ret":
            return get(t.args[0])
        prev = block.label
        block = blocks[_branch(t, get)]
