"""Phase protocol and the shipped IR-to-IR phases."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from ..ir import (BINOPS, BasicBlock, Instr, Phi, ProcedureIR, build_ssa, dom_tree, dominators, predecessors,
                  reverse_postorder, successors)
from ..reference import RefTrap, binop

# -- protocol messages ---------------------------------------------------------


@dataclass
class EstimateMsg:
    proc: str
    ctx: Any
    reply: float = 0.0


@dataclass
class OptimizeMsg:
    proc: str
    ir: ProcedureIR
    ctx: Any
    reply: Any = None  # detail when applied, None when declined


@dataclass
class RecompileMsg:
    proc: str
    ir: ProcedureIR
    ctx: Any
    detail: Any = None
    reply: Any = None


@dataclass
class IdentifyMsg:
    name: str = ""
    placement: tuple[str, ...] = ()
    prior: float = 0.0
    measurement: bool = False


@dataclass
class OptContext:
    """What a phase may consult: the VM, the profiling bus and the history."""

    proc: str
    vm: Any
    profiling: Any
    history: Any
    assumptions: list[tuple[str, str]] = field(default_factory=list)


class OptimizationPhase:
    name = "phase"
    placement: tuple[str, ...] = ("last",)
    prior = 0.0
    measurement = False

    def handle(self, msg):
        if isinstance(msg, IdentifyMsg):
            msg.name, msg.placement, msg.prior, msg.measurement = (
                self.name, tuple(self.placement), self.prior, self.measurement)
        elif isinstance(msg, EstimateMsg):
            msg.reply = self.estimate(msg.proc, msg.ctx)
        elif isinstance(msg, OptimizeMsg):
            msg.reply = self.optimize(msg.ir, msg.ctx)
        elif isinstance(msg, RecompileMsg):
            msg.reply = self.recompile(msg.ir, msg.ctx, msg.detail)
        return msg

    def estimate(self, proc: str, ctx: OptContext) -> float:
        h = ctx.history
        if h.is_applied(proc, self.name) or h.is_non_profitable(proc, self.name):
            return 0.0
        measured = h.measured(self.name)
        return self.prior if measured is None else measured

    def optimize(self, ir: ProcedureIR, ctx: OptContext):
        """Transform ``ir`` in place; return a detail record, or None to decline."""
        raise NotImplementedError

    def recompile(self, ir: ProcedureIR, ctx: OptContext, detail):
        """Re-apply a recorded application without re-evaluating profitability."""
        return self.optimize(ir, ctx)


# -- helpers -------------------------------------------------------------------


def _rename_uses(ir: ProcedureIR, alias: dict[str, str]) -> None:
    if not alias:
        return

    def res(v: str) -> str:
        seen = 0
        while v in alias and seen < 10_000:
            v = alias[v]
            seen += 1
        return v

    for b in ir.blocks:
        for phi in b.phis:
            phi.incoming = {q: res(v) for q, v in phi.incoming.items()}
        for ins in b.instructions:
            ins.map_uses(res)
        b.terminator.map_uses(res)


def _drop_edge(ir: ProcedureIR, src: str, dst: str) -> None:
    for b in ir.blocks:
        if b.label == dst:
            for phi in b.phis:
                phi.incoming.pop(src, None)


def _int_values(ir: ProcedureIR) -> set[str]:
    """Values statically known to be integers."""
    known = set()
    for b in ir.blocks:
        for ins in b.instructions:
            if ins.dest and (ins.op == "const" or ins.op in BINOPS):
                known.add(ins.dest)
    changed = True
    while changed:
        changed = False
        for b in ir.blocks:
            for phi in b.phis:
                if phi.dest not in known and all(v in known or v == phi.dest for v in phi.incoming.values()):
                    known.add(phi.dest)
                    changed = True
    return known


# -- constant folding -------------------------------------------------------------


def fold_constants(ir: ProcedureIR) -> bool:
    changed_any = False
    while True:
        changed = False
        consts: dict[str, int] = {}
        for b in ir.blocks:
            for ins in b.instructions:
                if ins.op == "const":
                    consts[ins.dest] = ins.args[0]
        for b in ir.blocks:
            for ins in b.instructions:
                if ins.op in BINOPS and ins.args[0] in consts and ins.args[1] in consts:
                    try:
                        v = binop(ins.op, consts[ins.args[0]], consts[ins.args[1]])
                    except RefTrap:
                        continue  # keep the trap for run time
                    ins.op, ins.args = "const", (v,)
                    consts[ins.dest] = v
                    changed = True
        alias: dict[str, str] = {}
        for b in ir.blocks:
            keep = []
            for phi in b.phis:
                vals = {v for v in phi.incoming.values() if v != phi.dest}
                if len(vals) == 1:
                    alias[phi.dest] = vals.pop()
                    changed = True
                else:
                    keep.append(phi)
            b.phis = keep
        _rename_uses(ir, alias)
        for b in ir.blocks:
            t = b.terminator
            if t.op == "br_if":
                c, l1, l2 = t.args
                if l1 == l2:
                    b.terminator = Instr("br", None, (l1,))
                    changed = True
                elif c in consts:
                    taken, dropped = (l1, l2) if consts[c] != 0 else (l2, l1)
                    b.terminator = Instr("br", None, (taken,))
                    _drop_edge(ir, b.label, dropped)
                    changed = True
        if ir.remove_unreachable():
            changed = True
        if not changed:
            return changed_any
        changed_any = True


# -- dead code elimination -----------------------------------------------------

_ALWAYS_REMOVABLE = frozenset(("const", "cmp_eq", "proc_ref", "load_global"))
_INT_ARITH = frozenset(("add", "sub", "mul", "cmp_lt"))


def eliminate_dead_code(ir: ProcedureIR) -> bool:
    ints = _int_values(ir)
    consts = {ins.dest: ins.args[0] for b in ir.blocks for ins in b.instructions if ins.op == "const"}

    def removable(ins: Instr) -> bool:
        if ins.op in _ALWAYS_REMOVABLE:
            return True
        if ins.op in _INT_ARITH:
            return ins.args[0] in ints and ins.args[1] in ints
        if ins.op == "div":
            return ins.args[0] in ints and consts.get(ins.args[1], 0) != 0
        return False

    changed_any = False
    while True:
        uses: dict[str, int] = {}
        for b in ir.blocks:
            for phi in b.phis:
                for v in phi.incoming.values():
                    if v != phi.dest:
                        uses[v] = uses.get(v, 0) + 1
            for ins in b.instructions + [b.terminator]:
                for u in ins.uses():
                    uses[u] = uses.get(u, 0) + 1
        changed = False
        for b in ir.blocks:
            n = len(b.phis) + len(b.instructions)
            b.phis = [p for p in b.phis if uses.get(p.dest)]
            b.instructions = [i for i in b.instructions if not (i.dest and not uses.get(i.dest) and removable(i))]
            if len(b.phis) + len(b.instructions) != n:
                changed = True
        if not changed:
            return changed_any
        changed_any = True


# -- common subexpression elimination ------------------------------------------

_CSE_OPS = frozenset(("const", "add", "sub", "mul", "div", "cmp_lt", "cmp_eq"))
_COMMUTATIVE = frozenset(("add", "mul", "cmp_eq"))


def eliminate_common_subexpressions(ir: ProcedureIR) -> int:
    """Dominator-scoped value numbering; returns the number of instructions removed."""
    succ, preds = successors(ir.blocks), predecessors(ir.blocks)
    entry = ir.blocks[0].label
    order = reverse_postorder(entry, succ)
    idom = dominators(entry, succ, preds)
    kids = dom_tree(idom, order)
    bmap = ir.block_map()
    alias: dict[str, str] = {}
    removed = 0

    def res(v):
        return alias.get(v, v)

    scopes: list[dict] = []
    table: dict[tuple, str] = {}
    stack: list[tuple[str, bool]] = [(entry, False)]
    while stack:
        lbl, leaving = stack.pop()
        if leaving:
            for key in scopes.pop():
                del table[key]
            continue
        b = bmap[lbl]
        added: list[tuple] = []
        keep = []
        for ins in b.instructions:
            ins.map_uses(res)
            if ins.op in _CSE_OPS:
                args = tuple(ins.args)
                if ins.op in _COMMUTATIVE:
                    args = tuple(sorted(args))
                key = (ins.op, args)
                if key in table:
                    alias[ins.dest] = table[key]
                    removed += 1
                    continue
                table[key] = ins.dest
                added.append(key)
            keep.append(ins)
        b.instructions = keep
        b.terminator.map_uses(res)
        scopes.append(added)
        stack.append((lbl, True))
        for k in reversed(kids[lbl]):
            stack.append((k, False))
    _rename_uses(ir, alias)
    return removed


# -- inlining --------------------------------------------------------------------


def _unique_tag(ir: ProcedureIR, base: str) -> str:
    names = set(ir.value_table()) | {b.label for b in ir.blocks}
    i = 0
    while True:
        tag = f"{base}.{i}"
        if not any(n.startswith(tag + ".") or n == tag for n in names):
            return tag
        i += 1


def inline_call(ir: ProcedureIR, call: Instr, callee: ProcedureIR) -> None:
    """Replace ``call`` (an instruction of ``ir``) with a copy of ``callee``'s body."""
    host = next(b for b in ir.blocks if any(i is call for i in b.instructions))
    idx = next(k for k, i in enumerate(host.instructions) if i is call)
    tag = _unique_tag(ir, f"inl.{callee.name}")
    vmap = dict(zip(callee.params, call.args[1:]))

    def val(v: str) -> str:
        return vmap.get(v) or vmap.setdefault(v, f"{tag}.{v}")

    def lab(lbl: str) -> str:
        return f"{tag}.{lbl}"

    cont = BasicBlock(lab("cont"), [], host.instructions[idx + 1:], host.terminator)
    for s in successors([host])[host.label]:
        for b in ir.blocks:
            if b.label == s:
                for phi in b.phis:
                    phi.incoming[cont.label] = phi.incoming.pop(host.label)
    host.instructions = host.instructions[:idx]
    host.terminator = Instr("br", None, (lab(callee.blocks[0].label),))

    body: list[BasicBlock] = []
    returns: dict[str, str] = {}
    for cb in callee.blocks:
        phis = [Phi(val(p.dest), {lab(q): val(v) for q, v in p.incoming.items()}) for p in cb.phis]
        instrs = []
        for ins in cb.instructions:
            n = Instr(ins.op, val(ins.dest) if ins.dest else None, ins.args)
            n.map_uses(val)
            instrs.append(n)
        t = cb.terminator
        if t.op == "ret":
            returns[lab(cb.label)] = val(t.args[0])
            term = Instr("br", None, (cont.label,))
        else:
            term = Instr(t.op, None, t.args)
            term.map_uses(val)
            term.map_targets(lab)
        body.append(BasicBlock(lab(cb.label), phis, instrs, term))
    cont.phis = [Phi(call.dest, returns)]
    pos = ir.blocks.index(host) + 1
    ir.blocks[pos:pos] = body + [cont]


def _calls(ir: ProcedureIR, names) -> list[Instr]:
    return [i for b in ir.blocks for i in b.instructions if i.op == "call" and i.args[0] in names]


# -- phases ------------------------------------------------------------------------


class ConstantFolding(OptimizationPhase):
    name = "constfold"
    placement = ("first",)
    prior = 0.10

    def optimize(self, ir, ctx):
        return True if fold_constants(ir) else None


class DeadCodeElimination(OptimizationPhase):
    name = "dce"
    placement = ("last",)
    prior = 0.05

    def optimize(self, ir, ctx):
        return True if eliminate_dead_code(ir) else None


class CommonSubexpressionElimination(OptimizationPhase):
    name = "cse"
    placement = ("last",)
    prior = 0.20

    def optimize(self, ir, ctx):
        return True if eliminate_common_subexpressions(ir) else None


class Inlining(OptimizationPhase):
    """Inline direct calls to small, invocation-hot procedures (one level)."""

    name = "inline"
    placement = ("first",)
    prior = 0.10

    def __init__(self, budget: int = 24, hot_fraction: float = 0.1):
        self.budget = budget
        self.hot_fraction = hot_fraction

    def hot_set(self, vm) -> set[str]:
        ranked = sorted(((st[0], name) for name, st in vm.stats.items() if st[0] > 0),
                        key=lambda t: (-t[0], t[1]))
        n = math.ceil(len(ranked) * self.hot_fraction)
        return {name for _, name in ranked[:n]}

    def _eligible(self, ir, ctx, name: str) -> bool:
        tp = ctx.vm.transport.get(name)
        return tp is not None and name != ir.name and tp.size() <= self.budget

    def _apply(self, ir, ctx, names) -> list[str]:
        done = []
        for call in _calls(ir, names):
            callee = build_ssa(ctx.vm.transport[call.args[0]])
            inline_call(ir, call, callee)
            if call.args[0] not in done:
                done.append(call.args[0])
        return done

    def optimize(self, ir, ctx):
        hot = self.hot_set(ctx.vm)
        names = sorted({i.args[0] for i in _calls(ir, hot) if self._eligible(ir, ctx, i.args[0])})
        done = self._apply(ir, ctx, set(names))
        return tuple(done) or None

    def recompile(self, ir, ctx, detail):
        names = {n for n in (detail or ()) if self._eligible(ir, ctx, n)}
        return tuple(self._apply(ir, ctx, names)) or None


class Devirtualization(OptimizationPhase):
    """Bind ``call_indirect`` through a never-stored global to a direct call."""

    name = "devirtualize"
    placement = ("first",)
    prior = 0.05

    @staticmethod
    def stored_globals(vm, ir) -> set[str]:
        out = set()
        for tp in list(vm.transport.values()) + [ir]:
            for b in tp.blocks:
                for ins in b.instructions:
                    if ins.op == "store_global":
                        out.add(ins.args[0])
        return out

    def _bind(self, ir, ctx, allowed: dict[str, str] | None):
        vm = ctx.vm
        from ..vm import ProcedureHandle
        stored = self.stored_globals(vm, ir)
        defs = ir.value_table()
        bound = []
        for b in ir.blocks:
            for ins in b.instructions:
                if ins.op != "call_indirect":
                    continue
                src = defs.get(ins.args[0])
                if not isinstance(src, Instr) or src.op != "load_global":
                    continue
                g = src.args[0]
                if g in stored or g not in vm.global_index:
                    continue
                cur = vm.get_global(g)
                if not isinstance(cur, ProcedureHandle):
                    continue
                target = cur.proc
                if allowed is not None and allowed.get(g) != target:
                    continue
                tp = vm.transport.get(target)
                if tp is None or tp.param_count != len(ins.args) - 1:
                    continue
                ins.op = "call"
                ins.args = (target,) + tuple(ins.args[1:])
                if (g, target) not in bound:
                    bound.append((g, target))
        for key in bound:
            ctx.assumptions.append(key)
        return tuple(sorted(bound)) or None

    def optimize(self, ir, ctx):
        return self._bind(ir, ctx, None)

    def recompile(self, ir, ctx, detail):
        return self._bind(ir, ctx, dict(detail or ()))


class Instrumentation(OptimizationPhase):
    """Inserts path-profile probes for procedures the path profiler is interested in.

    A measurement phase: it is never estimated, recorded or credited.
    """

    name = "instrument"
    placement = ("first",)
    prior = 0.0
    measurement = True

    def __init__(self, profiler):
        self.profiler = profiler

    def estimate(self, proc, ctx):
        return 0.0

    def armed(self, proc: str) -> bool:
        return self.profiler.wants(proc)

    def optimize(self, ir, ctx):
        if not self.armed(ir.name):
            return None
        return True if self.profiler.instrument(ir) else None

    def recompile(self, ir, ctx, detail):
        return self.optimize(ir, ctx)


BUILTIN = {
    "constfold": ConstantFolding,
    "dce": DeadCodeElimination,
    "cse": CommonSubexpressionElimination,
    "inline": Inlining,
    "devirtualize": Devirtualization,
}
