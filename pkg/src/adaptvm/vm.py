"""Deterministic register VM with procedure handles, a managed store and safe points."""
from __future__ import annotations

import threading
from array import array
from dataclasses import dataclass

from . import kernel
from . import opcodes as oc
from .lowering import ExecImage


class VMError(Exception):
    pass


class VMTrap(VMError):
    def __init__(self, proc: str, pc: int, block: str, message: str):
        self.proc, self.pc, self.block = proc, pc, block
        super().__init__(f"trap in {proc} at pc {pc} (block {block}): {message}")


@dataclass(frozen=True)
class ProcedureHandle:
    id: int
    proc: str

    def __str__(self) -> str:
        return f"H{self.id}"


@dataclass(frozen=True)
class ObjRef:
    id: int


@dataclass(frozen=True)
class PerfStats:
    proc: str
    invocations: int
    self_cost: int
    inclusive: int

    @property
    def mean_self(self) -> float:
        return self.self_cost / self.invocations if self.invocations else 0.0

    @property
    def mean_inclusive(self) -> float:
        return self.inclusive / self.invocations if self.invocations else 0.0


@dataclass(frozen=True)
class SafepointReport:
    kind: str  # call | return | backedge | done
    proc: str | None
    clock: int
    frames: tuple[tuple[str, int], ...]  # (proc, handle id), outermost first


class Frame:
    __slots__ = ("handle", "proc", "image", "code", "argpool", "regk", "regv", "pc", "pathreg",
                 "ret_reg", "entry_self")

    def __init__(self, handle: int, image: ExecImage, code: array):
        self.handle = handle
        self.proc = image.proc_name
        self.image = image
        self.code = code
        self.argpool = image.argpool
        zeros = bytes(8 * max(image.register_count, 1))
        self.regk = array("q", zeros)
        self.regv = array("q", zeros)
        self.pc = 0
        self.pathreg = 0
        self.ret_reg = -1
        self.entry_self = 0


class Task:
    def __init__(self, proc: str, args: tuple):
        self.proc = proc
        self.args = args
        self.frames: list[Frame] = []
        self.result = None
        self.done = False


def _zeros(n: int = 0) -> array:
    return array("q", bytes(8 * n))


class VM:
    def __init__(self, sample_period: int = 0, sample_offset: int | None = None, trace_samples: bool = True,
                 kernel_impl=None):
        # procedure table: name -> slot, slot -> current handle id
        self.procedure_table: dict[str, int] = {}
        self.slots = _zeros()
        self.images: dict[int, ExecImage] = {}
        self.linked: dict[int, array] = {}
        self._next_handle = 1

        self.global_index: dict[str, int] = {}
        self.global_owner: dict[str, str] = {}
        self.gk = _zeros()
        self.gv = _zeros()

        self.hk = _zeros()
        self.hv = _zeros()
        self.obase = _zeros()
        self.osize = _zeros()

        self.counters = _zeros()
        self.pkind = _zeros()
        self.pctr = _zeros()
        self.padd = _zeros()
        self.preset = _zeros()

        self.clock = 0
        self.selfclock = 0
        self.stats: dict[str, list[int]] = {}
        self.handle_stats: dict[int, list[int]] = {}
        self.trace: list[str] = []
        self.trace_samples = trace_samples

        self.sample_period = 0
        self.next_sample = oc.FAR
        self.sample_listeners: list = []
        if sample_period:
            self.configure_sampling(sample_period, sample_offset)

        self.tasks: list[Task] = []
        self.modules: dict = {}
        self.transport: dict = {}
        self.extension_listeners: list = []
        self.lock = threading.RLock()
        self.kernel = kernel_impl or kernel.active

    # -- tracing -------------------------------------------------------------

    def log(self, event: str, **fields) -> None:
        parts = [f"{self.clock} event={event}"]
        parts += [f"{k}={v}" for k, v in fields.items()]
        self.trace.append(" ".join(parts))

    # -- procedures and handles ---------------------------------------------

    def ensure_slot(self, name: str) -> int:
        slot = self.procedure_table.get(name)
        if slot is None:
            slot = len(self.slots)
            self.procedure_table[name] = slot
            self.slots.append(0)
        return slot

    def link(self, image: ExecImage) -> array:
        code = array("q", image.code)
        pslots = [self.procedure_table[n] for n in image.procs]
        gslots = [self.global_index[n] for n in image.globals]
        for i in range(0, len(code), 4):
            op = code[i]
            if op == oc.CALL or op == oc.PROCREF:
                code[i + 2] = pslots[code[i + 2]]
            elif op == oc.LOADG:
                code[i + 2] = gslots[code[i + 2]]
            elif op == oc.STOREG:
                code[i + 1] = gslots[code[i + 1]]
        return code

    def new_handle(self, image: ExecImage) -> ProcedureHandle:
        """Allocate a handle for ``image`` without binding it in the procedure table."""
        h = self._next_handle
        self._next_handle += 1
        self.linked[h] = self.link(image)
        self.images[h] = image
        self.handle_stats[h] = [0, 0, 0]
        return ProcedureHandle(h, image.proc_name)

    def bind(self, name: str, handle: ProcedureHandle) -> None:
        self.slots[self.ensure_slot(name)] = handle.id
        self.stats.setdefault(name, [0, 0, 0])

    def retire(self, handle: ProcedureHandle | int) -> None:
        h = handle.id if isinstance(handle, ProcedureHandle) else handle
        self.images.pop(h, None)
        self.linked.pop(h, None)

    def handle_of(self, name: str) -> ProcedureHandle:
        if name not in self.procedure_table:
            raise VMError(f"unknown procedure {name!r}")
        return ProcedureHandle(self.slots[self.procedure_table[name]], name)

    def image_of(self, name: str) -> ExecImage:
        return self.images[self.handle_of(name).id]

    def procedures(self) -> list[str]:
        return sorted(self.procedure_table)

    # -- globals, store, counters ---------------------------------------------

    def to_value(self, v) -> tuple[int, int]:
        if isinstance(v, bool) or isinstance(v, int):
            return oc.K_INT, int(v)
        if isinstance(v, ObjRef):
            return oc.K_OBJ, v.id
        if isinstance(v, ProcedureHandle):
            if v.id not in self.images:
                raise VMError(f"stale procedure handle {v}")
            return oc.K_PROC, v.id
        raise TypeError(f"not a VM value: {v!r}")

    def from_value(self, kind: int, payload: int):
        if kind == oc.K_INT:
            return payload
        if kind == oc.K_OBJ:
            return ObjRef(payload)
        proc = self.images[payload].proc_name if payload in self.images else "?"
        return ProcedureHandle(payload, proc)

    def define_global(self, name: str, value, owner: str = "") -> None:
        if name in self.global_index:
            raise VMError(f"global {name!r} already defined")
        self.global_index[name] = len(self.gk)
        self.global_owner[name] = owner
        k, v = self.to_value(value)
        self.gk.append(k)
        self.gv.append(v)

    def set_global(self, name: str, value) -> None:
        slot = self.global_index[name]
        self.gk[slot], self.gv[slot] = self.to_value(value)

    def get_global(self, name: str):
        slot = self.global_index[name]
        return self.from_value(self.gk[slot], self.gv[slot])

    def new_object(self, size: int) -> int:
        oid = len(self.obase)
        self.obase.append(len(self.hk))
        self.osize.append(size)
        self.hk.extend(_zeros(size))
        self.hv.extend(_zeros(size))
        return oid

    def get_field(self, obj: ObjRef, k: int):
        j = self.obase[obj.id] + k
        return self.from_value(self.hk[j], self.hv[j])

    def set_field(self, obj: ObjRef, k: int, value) -> None:
        j = self.obase[obj.id] + k
        self.hk[j], self.hv[j] = self.to_value(value)

    def alloc_counters(self, n: int) -> int:
        base = len(self.counters)
        self.counters.extend(_zeros(n))
        return base

    def alloc_probe(self, kind: int, counter: int = 0, add: int = 0, reset: int = 0) -> int:
        cid = len(self.pkind)
        for arr, v in ((self.pkind, kind), (self.pctr, counter), (self.padd, add), (self.preset, reset)):
            arr.append(v)
        return cid

    def disable_probe(self, cid: int) -> None:
        self.pkind[cid] = oc.P_NOP

    # -- sampling --------------------------------------------------------------

    def configure_sampling(self, period: int, offset: int | None = None) -> None:
        """One sample per ``period`` clock ticks; the first lands at ``clock + offset``."""
        if period <= 0:
            self.sample_period = 0
            self.next_sample = oc.FAR
            return
        self.sample_period = period
        off = period if offset is None else offset
        if not 1 <= off <= period:
            raise ValueError("sample offset must lie in [1, period]")
        self.next_sample = self.clock + off

    def _sample(self, proc: str, block: str) -> None:
        self.next_sample += self.sample_period
        if self.trace_samples:
            self.log("sample", proc=proc, block=block)
        for cb in self.sample_listeners:
            cb(proc, block, self.clock)

    # -- statistics ----------------------------------------------------------

    def snapshot_stats(self, proc: str) -> PerfStats:
        if proc not in self.stats:
            raise VMError(f"unknown procedure {proc!r}")
        inv, s, inc = self.stats[proc]
        return PerfStats(proc, inv, s, inc)

    def handle_snapshot(self, handle: ProcedureHandle | int) -> PerfStats:
        h = handle.id if isinstance(handle, ProcedureHandle) else handle
        inv, s, inc = self.handle_stats[h]
        return PerfStats(str(h), inv, s, inc)

    # -- reference scanning ----------------------------------------------------

    def frames(self):
        for t in self.tasks:
            yield from t.frames

    def active_handles(self) -> set[int]:
        return {f.handle for f in self.frames()}

    def count_refs(self, handle: int) -> dict[str, int]:
        k = self.kernel
        frames = sum(k.count_refs(f.regk, f.regv, handle) for f in self.frames())
        return {"globals": k.count_refs(self.gk, self.gv, handle),
                "store": k.count_refs(self.hk, self.hv, handle),
                "frames": frames}

    def stale_refs(self) -> list[tuple[str, int]]:
        """Every proc-ref value that names a handle missing from the handle table."""
        bad = []

        def scan(region, kinds, vals):
            for i in range(len(vals)):
                if kinds[i] == oc.K_PROC and vals[i] not in self.images:
                    bad.append((region, vals[i]))

        scan("globals", self.gk, self.gv)
        scan("store", self.hk, self.hv)
        for f in self.frames():
            scan(f"frame:{f.proc}", f.regk, f.regv)
        for slot, name in enumerate(self.procedure_table):
            h = self.slots[self.procedure_table[name]]
            if h not in self.images:
                bad.append(("table", h))
        return bad

    # -- execution -----------------------------------------------------------

    def _push(self, task: Task, handle: int, args, ret_reg: int = -1) -> None:
        image = self.images[handle]
        if len(args) != image.nparams:
            raise VMError(f"{image.proc_name} expects {image.nparams} args, got {len(args)}")
        f = Frame(handle, image, self.linked[handle])
        for i, (k, v) in enumerate(args):
            f.regk[i] = k
            f.regv[i] = v
        f.ret_reg = ret_reg
        f.entry_self = self.selfclock
        st = self.stats.setdefault(image.proc_name, [0, 0, 0])
        st[0] += 1
        self.handle_stats[handle][0] += 1
        task.frames.append(f)

    def start(self, proc: str, args=(), check_export: bool = False) -> Task:
        if proc not in self.procedure_table:
            raise VMError(f"unknown procedure {proc!r}")
        if check_export:
            tp = self.transport.get(proc)
            if tp is not None and not (tp.export or tp.entry):
                raise VMError(f"procedure {proc!r} is not exported")
        vals = [self.to_value(a) for a in args]
        task = Task(proc, tuple(args))
        self._push(task, self.slots[self.procedure_table[proc]], vals)
        self.tasks.append(task)
        self.log("invoke", proc=proc, args=",".join(str(a) for a in args))
        return task

    def current_task(self) -> Task | None:
        for t in self.tasks:
            if not t.done:
                return t
        return None

    def _report(self, kind: str, task: Task, proc: str | None) -> SafepointReport:
        frames = tuple((f.proc, f.handle) for f in task.frames)
        return SafepointReport(kind, proc, self.clock, frames)

    def _trap(self, task: Task, f: Frame, pc: int, message: str):
        task.frames.clear()
        task.done = True
        self.tasks.remove(task)
        block = f.image.pc_block[pc] if pc < len(f.image.pc_block) else "?"
        self.log("trap", proc=f.proc, pc=pc, msg=message.replace(" ", "_"))
        raise VMTrap(f.proc, pc, block, message)

    def _charge_slow(self, f: Frame, pc: int) -> None:
        self.clock += 1
        self.selfclock += 1
        self.stats[f.proc][1] += 1
        self.handle_stats[f.handle][1] += 1
        if self.clock == self.next_sample:
            self._sample(f.proc, f.image.pc_block[pc])

    def run_to(self, yield_at: int, task: Task | None = None) -> SafepointReport:
        """Run until the first safe point reached with ``clock >= yield_at``, or task completion."""
        task = task or self.current_task()
        if task is None:
            raise VMError("no runnable task")
        run_frame = self.kernel.run_frame
        frames = task.frames
        with self.lock:
            while True:
                f = frames[-1]
                before = self.clock
                reason, pc, last, clock, prof, pathreg, trap = run_frame(f, self, self.next_sample, yield_at)
                f.pc = pc
                f.pathreg = pathreg
                self.clock = clock
                own = clock - before - prof
                if own:
                    self.selfclock += own
                    self.stats[f.proc][1] += own
                    self.handle_stats[f.handle][1] += own
                if reason & oc.R_TRAP:
                    self._trap(task, f, pc, oc.TRAP_TEXT[trap])
                if reason & oc.R_SAMPLE:
                    self._sample(f.proc, f.image.pc_block[last])
                if reason & oc.R_BACKEDGE:
                    return self._report("backedge", task, f.proc)
                if not reason & oc.R_SLOW:
                    continue
                code = f.code
                i = pc << 2
                op = code[i]
                if op == oc.NEWOBJ:
                    oid = self.new_object(code[i + 2])
                    f.regk[code[i + 1]] = oc.K_OBJ
                    f.regv[code[i + 1]] = oid
                    f.pc = pc + 1
                    self._charge_slow(f, pc)
                    continue
                if op == oc.RET:
                    r = code[i + 1]
                    k, v = f.regk[r], f.regv[r]
                    self._charge_slow(f, pc)
                    frames.pop()
                    incl = self.selfclock - f.entry_self
                    self.stats[f.proc][2] += incl
                    self.handle_stats[f.handle][2] += incl
                    if not frames:
                        task.done = True
                        task.result = self.from_value(k, v)
                        self.tasks.remove(task)
                        self.log("return", proc=task.proc, value=self.format_value(k, v))
                        return self._report("done", task, f.proc)
                    caller = frames[-1]
                    caller.regk[f.ret_reg] = k
                    caller.regv[f.ret_reg] = v
                    caller.pc += 1
                    if self.clock >= yield_at:
                        return self._report("return", task, f.proc)
                    continue
                # CALL / CALLI
                d, target, ap = code[i + 1], code[i + 2], code[i + 3]
                argc = f.argpool[ap]
                args = [(f.regk[r], f.regv[r]) for r in f.argpool[ap + 1:ap + 1 + argc]]
                if op == oc.CALL:
                    h = self.slots[target]
                else:
                    if f.regk[target] != oc.K_PROC:
                        self._trap(task, f, pc, "call through non-procedure value")
                    h = f.regv[target]
                    if self.images[h].nparams != argc:
                        self._trap(task, f, pc, "arity mismatch in indirect call")
                self._charge_slow(f, pc)
                self._push(task, h, args, d)
                if self.clock >= yield_at:
                    return self._report("call", task, frames[-1].proc)

    def run_until_safepoint(self, task: Task | None = None) -> SafepointReport:
        return self.run_to(0, task)

    def finish(self, task: Task):
        while not task.done:
            self.run_to(oc.FAR, task)
        return task.result

    def invoke(self, proc: str, args=(), check_export: bool = False):
        """Run ``proc`` to completion and return its result."""
        return self.finish(self.start(proc, args, check_export))

    def format_value(self, kind: int, payload: int) -> str:
        if kind == oc.K_INT:
            return str(payload)
        if kind == oc.K_OBJ:
            return f"obj#{payload}"
        return "&" + (self.images[payload].proc_name if payload in self.images else "?")

    def describe(self, value) -> str:
        return self.format_value(*self.to_value(value)) if not isinstance(value, ProcedureHandle) \
            else "&" + value.proc
