"""Hot-swapping by reference translation, plus the assumption registry behind de-optimization."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .loader import LoadDeferred
from .lowering import ExecImage
from .vm import VM, ProcedureHandle

log = logging.getLogger(__name__)


class ReplaceRefused(Exception):
    pass


@dataclass(frozen=True)
class TranslationTuple:
    old: ProcedureHandle
    new: ProcedureHandle

    def __post_init__(self):
        if self.old.id == self.new.id:
            raise ValueError("translation tuple must map a handle to a different one")


@dataclass
class SwapReport:
    proc: str
    old: int
    new: int
    globals: int = 0
    store: int = 0
    frames: int = 0
    clock: int = 0

    @property
    def slots(self) -> int:
        return self.globals + self.store + self.frames

    def counts(self) -> dict[str, int]:
        return {"globals": self.globals, "store": self.store, "frames": self.frames}


@dataclass
class PendingSwap:
    proc: str
    image: ExecImage
    on_swap: object = None  # callback(old, new)


@dataclass
class Replacer:
    vm: VM
    optimizer: object = None
    debug: bool = True
    # (global, bound procedure) -> dependent procedures
    registry: dict[tuple[str, str], set[str]] = field(default_factory=dict)
    pending: dict[str, PendingSwap] = field(default_factory=dict)
    swaps: list[SwapReport] = field(default_factory=list)
    invalidations: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.vm.extension_listeners.append(self.on_extension)

    # -- swapping -----------------------------------------------------------------

    def can_replace(self, proc: str) -> bool:
        return self.vm.handle_of(proc).id not in self.vm.active_handles()

    def replace(self, tt: TranslationTuple) -> SwapReport:
        vm = self.vm
        proc = tt.old.proc
        if vm.handle_of(proc).id != tt.old.id:
            raise ReplaceRefused(f"{tt.old} is not the current handle of {proc!r}")
        if tt.new.id not in vm.images:
            raise ReplaceRefused(f"{tt.new} has no image")
        if not self.can_replace(proc):
            raise ReplaceRefused(f"{proc!r} has an active frame")
        with vm.lock:
            k = vm.kernel
            rep = SwapReport(proc, tt.old.id, tt.new.id, clock=vm.clock)
            rep.globals = k.sweep(vm.gk, vm.gv, tt.old.id, tt.new.id)
            rep.store = k.sweep(vm.hk, vm.hv, tt.old.id, tt.new.id)
            for f in vm.frames():
                rep.frames += k.sweep(f.regk, f.regv, tt.old.id, tt.new.id)
            vm.bind(proc, tt.new)
            vm.retire(tt.old)
        vm.log("swap", proc=proc, old=tt.old, new=tt.new, slots=rep.slots)
        self.swaps.append(rep)
        if self.debug:
            stale = vm.stale_refs()
            if stale:
                raise AssertionError(f"stale handles after swap of {proc!r}: {stale[:5]}")
        return rep

    def install(self, proc: str, image: ExecImage, on_swap=None) -> SwapReport | None:
        """Swap ``image`` in now if legal, otherwise keep it pending until frames drain."""
        self.pending[proc] = PendingSwap(proc, image, on_swap)
        return self._try(proc)

    def _try(self, proc: str) -> SwapReport | None:
        ps = self.pending.get(proc)
        if ps is None or not self.can_replace(proc):
            return None
        del self.pending[proc]
        old = self.vm.handle_of(proc)
        new = self.vm.new_handle(ps.image)
        rep = self.replace(TranslationTuple(old, new))
        if ps.on_swap is not None:
            ps.on_swap(old, new)
        return rep

    def retry_pending(self) -> list[SwapReport]:
        out = []
        for proc in sorted(self.pending):
            rep = self._try(proc)
            if rep is not None:
                out.append(rep)
        return out

    # -- assumptions --------------------------------------------------------------

    def register_assumption(self, key: tuple[str, str], proc: str) -> None:
        self.registry.setdefault(tuple(key), set()).add(proc)

    def dependents(self, global_name: str, new_value=None) -> list[tuple[tuple[str, str], set[str]]]:
        """Keys on ``global_name`` that a write of ``new_value`` violates (any key if unknown)."""
        out = []
        for key, deps in sorted(self.registry.items()):
            if key[0] != global_name:
                continue
            if new_value is not None and new_value == key[1]:
                continue
            out.append((key, deps))
        return out

    def invalidate(self, global_name: str, new_value=None, require_all: bool = True) -> list[str]:
        """Undo every binding on ``global_name`` that ``new_value`` contradicts.

        ``new_value`` is a procedure name, an int, or None when unknown. With
        ``require_all`` the call raises ``LoadDeferred`` unless every dependent
        can be swapped right now.
        """
        hits = self.dependents(global_name, new_value)
        if not hits:
            return []
        procs = sorted({p for _, deps in hits for p in deps})
        if require_all and not all(self.can_replace(p) for p in procs):
            raise LoadDeferred(f"dependents of {global_name!r} are active")
        keys = {k for k, _ in hits}
        for p in procs:
            e = self.optimizer.history.entry(p, "devirtualize") if self.optimizer else None
            if e is not None and e.detail:
                left = tuple(b for b in e.detail if b not in keys)
                if left:
                    e.detail = left
                else:
                    self.optimizer.history.remove(p, "devirtualize")
        for k in keys:
            del self.registry[k]
        for p in procs:
            self.pending.pop(p, None)  # a queued image may still rely on the binding
            image = self.optimizer.recompile(p)
            self.install(p, image)
        self.vm.log("deopt", glob=global_name, procs=",".join(procs) or "-")
        self.invalidations.append({"clock": self.vm.clock, "global": global_name, "procs": procs,
                                   "keys": sorted(keys)})
        return procs

    def on_extension(self, module, writes: list[str]) -> None:
        """Loader hook: runs before an extension changes any state."""
        new_values = {}
        for g in module.globals:
            new_values[g.name] = g.init
        stored = set()
        for p in module.procedures:
            for b in p.blocks:
                for ins in b.instructions:
                    if ins.op == "store_global":
                        stored.add(ins.args[0])
        plan = []
        for g in writes:
            value = None if g in stored else new_values.get(g)
            plan.append((g, value))
        procs = sorted({p for g, v in plan for _, deps in self.dependents(g, v) for p in deps})
        if not all(self.can_replace(p) for p in procs):
            raise LoadDeferred("dependents of overwritten globals are active")
        for g, v in plan:
            self.invalidate(g, v)
