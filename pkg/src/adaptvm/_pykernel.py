"""Pure-Python interpreter kernel (fallback for the compiled one)."""
from __future__ import annotations

from .opcodes import (ADD, BR, BRIF, CONST, DIV, EQ, K_INT, K_OBJ, K_PROC, LOADF, LOADG, LT, MOV, MUL,
                      P_ADD, P_COMMIT, P_INC, PROCREF, PROF, R_BACKEDGE, R_SAMPLE, R_SLOW, R_TRAP, STOREF,
                      STOREG, SUB, T_DIV0, T_FIELD, T_PROBE, T_TYPE)

IMPLEMENTATION = "python"

_HALF = 1 << 63
_MASK = (1 << 64) - 1


def run_frame(f, vm, sample_at: int, yield_at: int):
    """Execute the top frame until a slow op, sample boundary, yielding back edge, or trap.

    Returns ``(reason, pc, last_pc, clock, prof, pathreg, trap)``; ``pc`` is the
    next instruction to execute (for a slow op: the op itself, not yet run).
    """
    code = f.code
    rk = f.regk
    rv = f.regv
    pc = f.pc
    pathreg = f.pathreg
    gk = vm.gk
    gv = vm.gv
    hk = vm.hk
    hv = vm.hv
    obase = vm.obase
    osize = vm.osize
    slots = vm.slots
    counters = vm.counters
    pkind = vm.pkind
    nprobes = len(pkind)
    clock = vm.clock
    prof = 0
    last = pc
    while True:
        i = pc << 2
        op = code[i]
        x = code[i + 1]
        back = False
        if op == ADD:
            a = code[i + 2]
            b = code[i + 3]
            if rk[a] or rk[b]:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_TYPE
            r = (rv[a] + rv[b] + _HALF) & _MASK
            rk[x] = K_INT
            rv[x] = r - _HALF
            pc += 1
        elif op == BRIF:
            c = x
            if rk[c]:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_TYPE
            t = code[i + 2] if rv[c] else code[i + 3]
            back = t <= pc
            pc = t
        elif op == CONST:
            rk[x] = K_INT
            rv[x] = code[i + 2]
            pc += 1
        elif op == MOV:
            a = code[i + 2]
            rk[x] = rk[a]
            rv[x] = rv[a]
            pc += 1
        elif op == LT:
            a = code[i + 2]
            b = code[i + 3]
            if rk[a] or rk[b]:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_TYPE
            rk[x] = K_INT
            rv[x] = 1 if rv[a] < rv[b] else 0
            pc += 1
        elif op == BR:
            back = x <= pc
            pc = x
        elif op == SUB or op == MUL:
            a = code[i + 2]
            b = code[i + 3]
            if rk[a] or rk[b]:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_TYPE
            r = rv[a] - rv[b] if op == SUB else rv[a] * rv[b]
            rk[x] = K_INT
            rv[x] = ((r + _HALF) & _MASK) - _HALF
            pc += 1
        elif op == EQ:
            a = code[i + 2]
            b = code[i + 3]
            rk[x] = K_INT
            rv[x] = 1 if (rk[a] == rk[b] and rv[a] == rv[b]) else 0
            pc += 1
        elif op == DIV:
            a = code[i + 2]
            b = code[i + 3]
            if rk[a] or rk[b]:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_TYPE
            n = rv[a]
            d = rv[b]
            if d == 0:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_DIV0
            q = abs(n) // abs(d)
            if (n < 0) != (d < 0):
                q = -q
            rk[x] = K_INT
            rv[x] = ((q + _HALF) & _MASK) - _HALF
            pc += 1
        elif op == PROF:
            if 0 <= x < nprobes:
                k = pkind[x]
                if k == P_INC:
                    counters[vm.pctr[x]] += 1
                elif k == P_ADD:
                    pathreg += vm.padd[x]
                elif k == P_COMMIT:
                    idx = vm.pctr[x] + pathreg + vm.padd[x]
                    if not 0 <= idx < len(counters):
                        return R_TRAP, pc, pc, clock, prof, pathreg, T_PROBE
                    counters[idx] += 1
                    pathreg = vm.preset[x]
            prof += 1
            pc += 1
        elif op == LOADG:
            g = code[i + 2]
            rk[x] = gk[g]
            rv[x] = gv[g]
            pc += 1
        elif op == STOREG:
            a = code[i + 2]
            gk[x] = rk[a]
            gv[x] = rv[a]
            pc += 1
        elif op == LOADF:
            o = code[i + 2]
            k = code[i + 3]
            if rk[o] != K_OBJ:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_TYPE
            obj = rv[o]
            if k >= osize[obj]:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_FIELD
            j = obase[obj] + k
            rk[x] = hk[j]
            rv[x] = hv[j]
            pc += 1
        elif op == STOREF:
            k = code[i + 2]
            v = code[i + 3]
            if rk[x] != K_OBJ:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_TYPE
            obj = rv[x]
            if k >= osize[obj]:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_FIELD
            j = obase[obj] + k
            hk[j] = rk[v]
            hv[j] = rv[v]
            pc += 1
        elif op == PROCREF:
            rk[x] = K_PROC
            rv[x] = slots[code[i + 2]]
            pc += 1
        else:
            return R_SLOW, pc, last, clock, prof, pathreg, 0
        last = i >> 2
        clock += 1
        if clock == sample_at:
            reason = R_SAMPLE
            if back and clock >= yield_at:
                reason |= R_BACKEDGE
            return reason, pc, last, clock, prof, pathreg, 0
        if back and clock >= yield_at:
            return R_BACKEDGE, pc, last, clock, prof, pathreg, 0


def sweep(kinds, vals, old: int, new: int) -> int:
    """Rewrite every proc-ref slot holding ``old`` to ``new``; returns the count."""
    n = 0
    for i in range(len(vals)):
        if vals[i] == old and kinds[i] == K_PROC:
            vals[i] = new
            n += 1
    return n


def count_refs(kinds, vals, handle: int) -> int:
    n = 0
    for i in range(len(vals)):
        if vals[i] == handle and kinds[i] == K_PROC:
            n += 1
    return n
