# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled interpreter kernel; same contract as ``_pykernel``."""

from cpython cimport array
ctypedef long long i64
ctypedef unsigned long long u64

IMPLEMENTATION = "cython"

cdef enum:
    CONST = 0
    ADD = 1
    SUB = 2
    MUL = 3
    DIV = 4
    LT = 5
    EQ = 6
    MOV = 7
    PROCREF = 10
    LOADG = 11
    STOREG = 12
    LOADF = 14
    STOREF = 15
    PROF = 16
    BR = 17
    BRIF = 18
    K_INT = 0
    K_OBJ = 1
    K_PROC = 2
    R_SLOW = 1
    R_SAMPLE = 2
    R_BACKEDGE = 4
    R_TRAP = 8
    T_DIV0 = 1
    T_TYPE = 2
    T_FIELD = 3
    T_PROBE = 4
    P_INC = 1
    P_ADD = 2
    P_COMMIT = 3


cdef i64 I64_MIN = -9223372036854775807 - 1


cdef inline i64* _ptr(object a):
    return (<array.array>a).data.as_longlongs


def run_frame(f, vm, i64 sample_at, i64 yield_at):
    cdef i64* code = _ptr(f.code)
    cdef i64* rk = _ptr(f.regk)
    cdef i64* rv = _ptr(f.regv)
    cdef i64 pc = f.pc
    cdef i64 pathreg = f.pathreg
    cdef i64* gk = _ptr(vm.gk)
    cdef i64* gv = _ptr(vm.gv)
    cdef i64* hk = _ptr(vm.hk)
    cdef i64* hv = _ptr(vm.hv)
    cdef i64* obase = _ptr(vm.obase)
    cdef i64* osize = _ptr(vm.osize)
    cdef i64* slots = _ptr(vm.slots)
    cdef i64* counters = _ptr(vm.counters)
    cdef Py_ssize_t ncounters = len(vm.counters)
    cdef i64* pkind = _ptr(vm.pkind)
    cdef i64* pctr = _ptr(vm.pctr)
    cdef i64* padd = _ptr(vm.padd)
    cdef i64* preset = _ptr(vm.preset)
    cdef Py_ssize_t nprobes = len(vm.pkind)
    cdef i64 clock = vm.clock
    cdef i64 prof = 0
    cdef i64 last = pc
    cdef i64 i, op, x, a, b, t, n, d, k, obj, j, idx
    cdef bint back
    cdef int reason
    while True:
        i = pc << 2
        op = code[i]
        x = code[i + 1]
        back = False
        if op == ADD or op == SUB or op == MUL:
            a = code[i + 2]
            b = code[i + 3]
            if rk[a] or rk[b]:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_TYPE
            if op == ADD:
                rv[x] = <i64>(<u64>rv[a] + <u64>rv[b])
            elif op == SUB:
                rv[x] = <i64>(<u64>rv[a] - <u64>rv[b])
            else:
                rv[x] = <i64>(<u64>rv[a] * <u64>rv[b])
            rk[x] = K_INT
            pc += 1
        elif op == BRIF:
            if rk[x]:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_TYPE
            t = code[i + 2] if rv[x] else code[i + 3]
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
            rk[x] = K_INT
            if n == I64_MIN and d == -1:
                rv[x] = I64_MIN
            else:
                rv[x] = n // d  # C truncation under cdivision
            pc += 1
        elif op == PROF:
            if 0 <= x < nprobes:
                k = pkind[x]
                if k == P_INC:
                    counters[pctr[x]] += 1
                elif k == P_ADD:
                    pathreg += padd[x]
                elif k == P_COMMIT:
                    idx = pctr[x] + pathreg + padd[x]
                    if idx < 0 or idx >= ncounters:
                        return R_TRAP, pc, pc, clock, prof, pathreg, T_PROBE
                    counters[idx] += 1
                    pathreg = preset[x]
            prof += 1
            pc += 1
        elif op == LOADG:
            a = code[i + 2]
            rk[x] = gk[a]
            rv[x] = gv[a]
            pc += 1
        elif op == STOREG:
            a = code[i + 2]
            gk[x] = rk[a]
            gv[x] = rv[a]
            pc += 1
        elif op == LOADF:
            a = code[i + 2]
            k = code[i + 3]
            if rk[a] != K_OBJ:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_TYPE
            obj = rv[a]
            if k >= osize[obj]:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_FIELD
            j = obase[obj] + k
            rk[x] = hk[j]
            rv[x] = hv[j]
            pc += 1
        elif op == STOREF:
            k = code[i + 2]
            a = code[i + 3]
            if rk[x] != K_OBJ:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_TYPE
            obj = rv[x]
            if k >= osize[obj]:
                return R_TRAP, pc, pc, clock, prof, pathreg, T_FIELD
            j = obase[obj] + k
            hk[j] = rk[a]
            hv[j] = rv[a]
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


def sweep(kinds, vals, i64 old, i64 new):
    cdef i64* k = _ptr(kinds)
    cdef i64* v = _ptr(vals)
    cdef Py_ssize_t i, size = len(vals)
    cdef i64 n = 0
    for i in range(size):
        if v[i] == old and k[i] == K_PROC:
            v[i] = new
            n += 1
    return n


def count_refs(kinds, vals, i64 handle):
    cdef i64* k = _ptr(kinds)
    cdef i64* v = _ptr(vals)
    cdef Py_ssize_t i, size = len(vals)
    cdef i64 n = 0
    for i in range(size):
        if v[i] == handle and k[i] == K_PROC:
            n += 1
    return n
