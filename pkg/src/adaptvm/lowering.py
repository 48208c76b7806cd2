"""Lowering of SSA procedures into flat executable images."""
from __future__ import annotations

from array import array
from dataclasses import dataclass, field

from . import opcodes as oc
from .ir import BINOPS, ProcedureIR, predecessors, successors

# visit accounting; the loader must stay single-pass
LOWER_STATS = {"visits": 0, "instructions": 0}


@dataclass(eq=False)
class ExecImage:
    """Executable form of one procedure, symbolic until linked into a VM."""

    proc_name: str
    code: array
    argpool: array
    register_count: int
    nparams: int
    procs: tuple[str, ...]
    globals: tuple[str, ...]
    pc_block: tuple[str, ...]
    origin: str = "loader"
    schedule_version: int = 0
    phases: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.code) // 4

    def signature(self) -> bytes:
        """Byte image of everything execution depends on."""
        syms = "\0".join(self.procs) + "\1" + "\0".join(self.globals)
        return (self.code.tobytes() + b"|" + self.argpool.tobytes() + b"|" + syms.encode()
                + b"|%d/%d" % (self.register_count, self.nparams))

    def same_code(self, other: "ExecImage") -> bool:
        return self.signature() == other.signature()

    def count_ops(self, name: str) -> int:
        op = oc.BY_NAME[name]
        return sum(1 for i in range(0, len(self.code), 4) if self.code[i] == op)

    def disassemble(self) -> str:
        lines = []
        for pc in range(len(self)):
            op, x, y, z = self.code[4 * pc:4 * pc + 4]
            lines.append(f"{pc:4d} [{self.pc_block[pc]}] {oc.NAMES[op]} {x} {y} {z}")
        return "\n".join(lines)


def sequentialize(copies: list[tuple[int, int]], new_temp) -> list[tuple[int, int]]:
    """Order a parallel copy ``[(dst, src)]`` into moves, breaking cycles with temporaries."""
    pending = {d: s for d, s in copies if d != s}
    out: list[tuple[int, int]] = []
    while pending:
        read = set(pending.values())
        ready = next((d for d in pending if d not in read), None)
        if ready is not None:
            out.append((ready, pending.pop(ready)))
            continue
        d = next(iter(pending))
        t = new_temp()
        out.append((t, d))
        for k, s in pending.items():
            if s == d:
                pending[k] = t
    return out


def lower_image(ir: ProcedureIR, origin: str = "loader", schedule_version: int = 0,
                phases: tuple[str, ...] = ()) -> ExecImage:
    """Phi elimination on edges plus one register per SSA name; no analyses."""
    regs: dict[str, int] = {}
    for a in ir.params:
        regs[a] = len(regs)
    for b in ir.blocks:
        for phi in b.phis:
            regs[phi.dest] = len(regs)
        for ins in b.instructions:
            if ins.dest:
                regs[ins.dest] = len(regs)
    nregs = [len(regs)]

    def temp() -> int:
        nregs[0] += 1
        return nregs[0] - 1

    succ = successors(ir.blocks)
    preds = predecessors(ir.blocks)
    bmap = ir.block_map()

    # per block: moves appended before its terminator, and edge-split blocks
    tail_moves: dict[str, list[tuple[int, int]]] = {b.label: [] for b in ir.blocks}
    splits: list[tuple[str, str, list[tuple[int, int]]]] = []  # (label, target, moves)
    redirect: dict[tuple[str, str], str] = {}
    taken = set(bmap)
    for b in ir.blocks:
        if not b.phis:
            continue
        for p in preds[b.label]:
            copies = [(regs[phi.dest], regs[phi.incoming[p]]) for phi in b.phis]
            LOWER_STATS["visits"] += len(copies)
            moves = sequentialize(copies, temp)
            if len(succ[p]) == 1:
                tail_moves[p].extend(moves)
            else:
                lbl = f"{p}>{b.label}"
                while lbl in taken:
                    lbl += "'"
                taken.add(lbl)
                splits.append((lbl, b.label, moves))
                redirect[(p, b.label)] = lbl

    procs: dict[str, int] = {}
    globs: dict[str, int] = {}
    code: list[int] = []
    argpool: list[int] = []
    pc_block: list[str] = []
    starts: dict[str, int] = {}
    fixups: list[tuple[int, str]] = []  # (code word index, label)

    def emit(op, x=0, y=0, z=0, label=""):
        code.extend((op, x, y, z))
        pc_block.append(label)

    def sym(table: dict, name: str) -> int:
        if name not in table:
            table[name] = len(table)
        return table[name]

    def args_ptr(names) -> int:
        ptr = len(argpool)
        argpool.append(len(names))
        argpool.extend(regs[n] for n in names)
        return ptr

    for b in ir.blocks:
        starts[b.label] = len(pc_block)
        lbl = b.label
        for ins in b.instructions:
            LOWER_STATS["visits"] += 1
            LOWER_STATS["instructions"] += 1
            op, a, d = ins.op, ins.args, ins.dest
            if op == "const":
                emit(oc.CONST, regs[d], a[0], 0, lbl)
            elif op in BINOPS:
                emit(oc.BY_NAME[op], regs[d], regs[a[0]], regs[a[1]], lbl)
            elif op == "call":
                emit(oc.CALL, regs[d], sym(procs, a[0]), args_ptr(a[1:]), lbl)
            elif op == "call_indirect":
                emit(oc.CALLI, regs[d], regs[a[0]], args_ptr(a[1:]), lbl)
            elif op == "proc_ref":
                emit(oc.PROCREF, regs[d], sym(procs, a[0]), 0, lbl)
            elif op == "load_global":
                emit(oc.LOADG, regs[d], sym(globs, a[0]), 0, lbl)
            elif op == "store_global":
                emit(oc.STOREG, sym(globs, a[0]), regs[a[1]], 0, lbl)
            elif op == "new_obj":
                emit(oc.NEWOBJ, regs[d], a[0], 0, lbl)
            elif op == "load_field":
                emit(oc.LOADF, regs[d], regs[a[0]], a[1], lbl)
            elif op == "store_field":
                emit(oc.STOREF, regs[a[0]], a[1], regs[a[2]], lbl)
            elif op == "profile_inc":
                emit(oc.PROF, a[0], 0, 0, lbl)
            else:
                raise ValueError(f"cannot lower {op!r}")
        for dst, src in tail_moves[b.label]:
            emit(oc.MOV, dst, src, 0, lbl)
        t = b.terminator
        LOWER_STATS["visits"] += 1
        LOWER_STATS["instructions"] += 1
        if t.op == "ret":
            emit(oc.RET, regs[t.args[0]], 0, 0, lbl)
        elif t.op == "br":
            fixups.append((len(code) + 1, redirect.get((lbl, t.args[0]), t.args[0])))
            emit(oc.BR, 0, 0, 0, lbl)
        else:
            c, l1, l2 = t.args
            fixups.append((len(code) + 2, redirect.get((lbl, l1), l1)))
            fixups.append((len(code) + 3, redirect.get((lbl, l2), l2)))
            emit(oc.BRIF, regs[c], 0, 0, lbl)
    for lbl, target, moves in splits:
        starts[lbl] = len(pc_block)
        for dst, src in moves:
            emit(oc.MOV, dst, src, 0, lbl)
        fixups.append((len(code) + 1, target))
        emit(oc.BR, 0, 0, 0, lbl)
    for idx, lbl in fixups:
        code[idx] = starts[lbl]

    return ExecImage(
        proc_name=ir.name,
        code=array("q", code),
        argpool=array("q", argpool),
        register_count=nregs[0],
        nparams=ir.param_count,
        procs=tuple(procs),
        globals=tuple(globs),
        pc_block=tuple(pc_block),
        origin=origin,
        schedule_version=schedule_version,
        phases=tuple(phases),
    )
