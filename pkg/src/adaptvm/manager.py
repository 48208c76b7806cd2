"""System manager: periodic aging, stability checks, and profitability-ordered reoptimization.

Time is the VM's virtual clock. In single-task mode the driver runs the VM up
to the manager's next wake time, stopping at a safe point, and then ticks the
manager; background mode runs ticks on a separate thread under the VM lock.
"""
from __future__ import annotations

import logging
import threading
import time
from dataclasses import asdict, dataclass, field

from . import opcodes as oc
from .loader import LoadDeferred, load_extension
from .vm import VM, VMTrap

log = logging.getLogger(__name__)


@dataclass
class ManagerConfig:
    age_sleep: int = 1_000_000
    sim_sleep: int = 100_000
    gate: float = 0.05
    initial_sleep: int = 1

    def __post_init__(self):
        if self.sim_sleep > self.age_sleep:
            raise ValueError("sim_sleep must not exceed age_sleep")
        if not 0 < self.gate < 1:
            raise ValueError("gate must lie in (0, 1)")
        if self.initial_sleep < 1 or self.age_sleep < 1:
            raise ValueError("sleep times must be positive")


class CandidateQueue:
    """Max-priority queue keyed by estimate; a procedure appears at most once."""

    def __init__(self):
        self._items: dict[str, float] = {}

    def add(self, proc: str, estimate: float) -> None:
        self._items[proc] = estimate

    def pop(self) -> tuple[str, float] | None:
        if not self._items:
            return None
        proc = min(self._items, key=lambda p: (-self._items[p], p))
        return proc, self._items.pop(proc)

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, proc: str) -> bool:
        return proc in self._items


@dataclass
class Extension:
    """An extension module and its trigger: a clock tick, or a global reaching a value."""

    path: str
    module: object
    tick: int | None = None
    when_global: tuple[str, int] | None = None
    loaded: bool = False
    deferrals: int = 0
    loaded_at: int | None = None

    def due(self, vm: VM) -> bool:
        if self.tick is not None:
            return vm.clock >= self.tick
        name, value = self.when_global
        if name not in vm.global_index:
            return False
        v = vm.get_global(name)
        return isinstance(v, int) and v >= value

    @classmethod
    def parse_trigger(cls, text: str) -> dict:
        """``1234`` -> tick; ``NAME>=N`` -> global condition."""
        if ">=" in text:
            name, value = text.split(">=", 1)
            return {"when_global": (name.strip(), int(value))}
        return {"tick": int(text)}


class SystemManager:
    def __init__(self, vm: VM, profiling, optimizer, replacer, config: ManagerConfig | None = None):
        self.vm = vm
        self.profiling = profiling
        self.optimizer = optimizer
        self.replacer = replacer
        self.config = config or ManagerConfig()
        self.sleep = self.config.initial_sleep
        self.old_age = 0
        self.old_sim = 0
        self.next_wake = vm.clock + self.sleep
        self.queue = CandidateQueue()
        self.sleep_history: list[int] = [self.sleep]
        self.ticks = 0
        self.ages = 0
        self.sim_checks = 0
        self.optimizations: list[dict] = []
        self.errors: list[str] = []

    # -- policy loop --------------------------------------------------------------

    def maintenance(self) -> None:
        """Bookkeeping that is not part of the policy loop itself."""
        self.optimizer.measure_pending()
        self.replacer.retry_pending()
        path = self._path_profiler()
        if path is not None and path.pending_recompile:
            for proc in sorted(path.pending_recompile):
                self.replacer.install(proc, self.optimizer.recompile(proc))
            path.pending_recompile.clear()

    def _path_profiler(self):
        if self.profiling is None:
            return None
        for c in self.profiling.components.values():
            if c.name == "path":
                return c
        return None

    def tick(self) -> list[str]:
        vm, cfg = self.vm, self.config
        actions: list[str] = []
        self.ticks += 1
        self.maintenance()
        if vm.clock > self.old_age + cfg.age_sleep:
            if self.profiling is not None:
                self.profiling.age()
            self.old_age = vm.clock
            self.ages += 1
            vm.log("age", n=self.ages)
            actions.append("age")
        if vm.clock > self.old_sim + cfg.sim_sleep:
            self.sim_checks += 1
            for proc in vm.procedures():
                if proc not in vm.transport:
                    continue
                if self.profiling is not None and self.profiling.stable_proc(proc):
                    continue
                est = self.optimizer.estimate(proc)
                if est > cfg.gate:
                    self.queue.add(proc, est)
                    actions.append(f"enqueue {proc}")
            self.old_sim = vm.clock
        nxt = self.queue.pop()
        if nxt is not None:
            proc, est = nxt
            try:
                self._optimize(proc, est)
                actions.append(f"optimize {proc}")
            except Exception as exc:  # keep the loop alive; the candidate is dropped
                msg = f"optimizing {proc!r} failed: {exc}"
                log.warning(msg)
                self.errors.append(msg)
            self.sleep = 1
        else:
            self.sleep = min(self.sleep * 2, cfg.age_sleep)
        self.sleep_history.append(self.sleep)
        self.next_wake = vm.clock + self.sleep
        return actions

    def _optimize(self, proc: str, estimate: float) -> None:
        res = self.optimizer.optimize(proc)
        record = {"clock": self.vm.clock, "proc": proc, "estimate": round(estimate, 6),
                  "applied": list(res.applied), "new": list(res.newly_applied),
                  "declined": list(res.declined), "failed": list(res.failed), "skipped": list(res.skipped),
                  "swapped": False}
        self.optimizations.append(record)
        self.vm.log("optimize", proc=proc, estimate=f"{estimate:.4f}",
                    phases=",".join(res.applied) or "-")

        def on_swap(old, new):
            record["swapped"] = True
            record["swap_clock"] = self.vm.clock
            self.optimizer.note_swap(proc, old, new, res.newly_applied)

        pend = self.replacer.pending.get(proc)
        current = pend.image if pend else self.vm.image_of(proc)
        if current.same_code(res.image):
            record["unchanged"] = True
            return
        self.replacer.install(proc, res.image, on_swap)

    def poll(self) -> None:
        if self.vm.clock >= self.next_wake:
            self.tick()

    # -- driver ------------------------------------------------------------------

    def run(self, calls, extensions: list[Extension] = (), mode: str = "single", managed: bool = True,
            slice_ticks: int = 2000) -> "RunResult":
        """Execute ``calls`` ([(proc, args)]) in order, interleaving manager work."""
        result = RunResult()
        extensions = list(extensions)
        worker = stop = None
        if mode == "background" and managed:
            stop = threading.Event()
            worker = threading.Thread(target=self._background, args=(stop,), daemon=True)
            worker.start()
        elif mode not in ("single", "background"):
            raise ValueError(f"unknown mode {mode!r}")
        try:
            for proc, args in calls:
                task = self.vm.start(proc, args)
                while not task.done:
                    target = self._next_stop(extensions, managed and mode == "single")
                    if mode == "background":
                        target = min(target, self.vm.clock + slice_ticks)
                    self.vm.run_to(target, task)
                    self._load_due(extensions)
                    if mode == "single" and managed:
                        self.poll()
                        if self.replacer.pending:
                            self.replacer.retry_pending()
                    elif mode == "background":
                        time.sleep(0)
                result.outputs.append((proc, tuple(args), task.result))
        except VMTrap as exc:
            result.trap = str(exc)
        finally:
            if stop is not None:
                stop.set()
                worker.join()
        while any(not e.loaded for e in extensions) and result.trap is None:
            # program finished before the trigger; load at the end so the run is well defined
            self._load_due(extensions, force=True)
        return result

    def _next_stop(self, extensions, managed: bool) -> int:
        t = oc.FAR
        if managed:
            t = self.next_wake
            if self.replacer.pending:
                t = self.vm.clock
        for e in extensions:
            if not e.loaded:
                if e.tick is not None and e.deferrals == 0:
                    t = min(t, e.tick)
                else:
                    t = self.vm.clock
        return t

    def _load_due(self, extensions, force: bool = False) -> None:
        for e in extensions:
            if e.loaded or not (force or e.due(self.vm)):
                continue
            with self.vm.lock:
                try:
                    load_extension(e.module, self.vm)
                    e.loaded = True
                    e.loaded_at = self.vm.clock
                except LoadDeferred:
                    e.deferrals += 1
                    if force:
                        raise

    def _background(self, stop: threading.Event) -> None:
        while not stop.is_set():
            with self.vm.lock:
                if self.vm.clock >= self.next_wake:
                    self.tick()
                elif self.replacer.pending:
                    self.replacer.retry_pending()
            time.sleep(0.0002)


@dataclass
class RunResult:
    outputs: list = field(default_factory=list)
    trap: str | None = None


def format_outputs(vm: VM, result: RunResult) -> list[str]:
    """Program output: one line per top-level call, then the final globals."""
    lines = []
    for proc, args, value in result.outputs:
        lines.append(f"{proc}({', '.join(vm.describe(a) for a in args)}) = {vm.describe(value)}")
    if result.trap:
        lines.append(f"trap: {result.trap}")
    for name in vm.global_index:
        lines.append(f"global {name} = {vm.describe(vm.get_global(name))}")
    return lines


def build_report(vm: VM, mgr: SystemManager | None, result: RunResult, config: dict | None = None) -> dict:
    """Structured run report; key order and contents are deterministic."""
    rep: dict = {
        "version": 1,
        "config": config or {},
        "clock": vm.clock,
        "output": format_outputs(vm, result),
        "trap": result.trap,
        "stats": {p: dict(zip(("invocations", "self", "inclusive"), vm.stats[p])) for p in sorted(vm.stats)},
        "swaps": [],
        "optimizations": [],
        "measurements": [],
        "invalidations": [],
        "history": {},
        "manager": {},
        "similarity": {},
        "warnings": [],
    }
    if mgr is not None:
        rep["swaps"] = [dict(proc=s.proc, old=s.old, new=s.new, clock=s.clock, **s.counts())
                        for s in mgr.replacer.swaps]
        rep["optimizations"] = mgr.optimizations
        rep["measurements"] = [e for e in mgr.optimizer.events if e["kind"] == "measure"]
        rep["invalidations"] = mgr.replacer.invalidations
        rep["history"] = {p: [asdict(e) | {"detail": _plain(e.detail)} for e in es]
                          for p, es in sorted(mgr.optimizer.history.entries.items())}
        rep["manager"] = {"ticks": mgr.ticks, "ages": mgr.ages, "similarity_checks": mgr.sim_checks,
                          "final_sleep": mgr.sleep, "errors": mgr.errors}
        if mgr.profiling is not None:
            rep["similarity"] = {p: s for p, s in sorted(mgr.profiling.last_similarity.items())}
        rep["warnings"] = list(mgr.optimizer.warnings)
    return rep


def _plain(detail):
    if isinstance(detail, (tuple, list)):
        return [_plain(d) for d in detail]
    return detail
