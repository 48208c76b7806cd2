"""Optimization manager: phase registry, schedule, estimate/optimize/recompile, attribution."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ..ir import build_ssa, validate_ir
from ..lowering import ExecImage, lower_image
from ..vm import VM, PerfStats, ProcedureHandle
from . import schedule as sched
from .history import HistoryDatabase
from .phases import EstimateMsg, IdentifyMsg, OptContext, OptimizeMsg, RecompileMsg

log = logging.getLogger(__name__)

# counts phase Optimize/Recompile deliveries across all managers
PHASE_CALLS = {"optimize": 0, "recompile": 0}


@dataclass
class OptimizeResult:
    proc: str
    image: ExecImage
    applied: list[str]
    newly_applied: list[str]
    declined: list[str] = field(default_factory=list)
    failed: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    assumptions: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class PendingMeasure:
    proc: str
    phases: list[str]
    old: PerfStats
    handle: int


class OptimizationManager:
    def __init__(self, vm: VM, profiling=None, replacer=None, history: HistoryDatabase | None = None,
                 non_profit_threshold: float = 0.01, min_window: int = 32, ewma_weight: float = 0.3):
        self.vm = vm
        self.profiling = profiling
        self.replacer = replacer
        self.history = history or HistoryDatabase(ewma_weight=ewma_weight)
        self.non_profit_threshold = non_profit_threshold
        self.min_window = min_window
        self.phases: dict[str, object] = {}
        self.anchors: dict[str, tuple[str, ...]] = {}
        self.measurement: set[str] = set()
        self.schedule: list[str] = []
        self.schedule_version = 0
        self.pending: dict[str, PendingMeasure] = {}
        self.warnings: list[str] = []
        self.events: list[dict] = []

    # -- registry -------------------------------------------------------------

    def _identify(self, phase) -> IdentifyMsg:
        return phase.handle(IdentifyMsg())

    def _reschedule(self, phases: dict, anchors: dict) -> list[str]:
        return sched.resolve([(n, anchors[n]) for n in phases])

    def register_phase(self, phase) -> None:
        ident = self._identify(phase)
        if ident.name in self.phases:
            raise sched.ScheduleError(f"phase {ident.name!r} already registered")
        phases = dict(self.phases)
        phases[ident.name] = phase
        anchors = dict(self.anchors)
        anchors[ident.name] = tuple(ident.placement)
        order = self._reschedule(phases, anchors)  # raises before any state changes
        self.phases, self.anchors, self.schedule = phases, anchors, order
        if ident.measurement:
            self.measurement.add(ident.name)
        self.schedule_version += 1

    def remove_phase(self, name: str) -> None:
        if name not in self.phases:
            raise KeyError(name)
        phases = {n: p for n, p in self.phases.items() if n != name}
        anchors = {}
        for n in phases:
            new = []
            for a in self.anchors[n]:
                kind, target = sched.parse_anchor(a)
                if target == name:
                    repl = "first" if kind == "before" else "last"
                    msg = f"phase {n!r}: anchor {a!r} orphaned by removal, now {repl!r}"
                    log.warning(msg)
                    self.warnings.append(msg)
                    new.append(repl)
                else:
                    new.append(a)
            anchors[n] = tuple(new)
        self.schedule = self._reschedule(phases, anchors)
        self.phases, self.anchors = phases, anchors
        self.measurement.discard(name)
        self.schedule_version += 1

    def replace_phase(self, name: str, phase) -> None:
        """``phase`` takes over ``name``'s position and anchors."""
        if name not in self.phases:
            raise KeyError(name)
        ident = self._identify(phase)
        new_name = ident.name
        if new_name != name and new_name in self.phases:
            raise sched.ScheduleError(f"phase {new_name!r} already registered")
        phases, anchors = {}, {}
        for n, p in self.phases.items():
            if n == name:
                phases[new_name] = phase
                anchors[new_name] = self.anchors[name]
            else:
                phases[n] = p
                anchors[n] = tuple(a.replace(f" {name}", f" {new_name}") if sched.parse_anchor(a)[1] == name
                                   else a for a in self.anchors[n])
        self.schedule = self._reschedule(phases, anchors)
        self.phases, self.anchors = phases, anchors
        self.measurement.discard(name)
        if ident.measurement:
            self.measurement.add(new_name)
        self.schedule_version += 1

    def check_schedule(self) -> list[str]:
        return sched.check(self.schedule, [(n, self.anchors[n]) for n in self.phases])

    # -- protocol -------------------------------------------------------------

    def _ctx(self, proc: str) -> OptContext:
        return OptContext(proc, self.vm, self.profiling, self.history)

    def phase_estimates(self, proc: str) -> dict[str, float]:
        ctx = self._ctx(proc)
        out = {}
        for name in self.schedule:
            if name in self.measurement:
                continue
            out[name] = max(0.0, self.phases[name].handle(EstimateMsg(proc, ctx)).reply)
        return out

    def estimate(self, proc: str) -> float:
        """Sum of per-phase speedup estimates; builds no IR."""
        return sum(self.phase_estimates(proc).values())

    def _run_phase(self, name: str, ir, msg_factory):
        """Deliver one message with snapshot/restore isolation. Returns (ir, status, detail)."""
        snapshot = ir.copy()
        phase = self.phases[name]
        try:
            msg = phase.handle(msg_factory(ir))
            bad = validate_ir(ir)
            if bad:
                raise ValueError("; ".join(str(v) for v in bad[:3]))
        except Exception as exc:  # a misbehaving plug-in must not corrupt the pipeline
            self.history.failures[name] = self.history.failures.get(name, 0) + 1
            text = f"phase {name!r} failed on {ir.name!r}: {exc}"
            log.warning(text)
            self.warnings.append(text)
            return snapshot, "failed", None
        if msg.reply is None:
            return snapshot, "declined", None
        return ir, "applied", msg.reply

    def optimize(self, proc: str) -> OptimizeResult:
        """Rebuild ``proc`` from transport form and run the whole schedule over it."""
        ir = build_ssa(self.vm.transport[proc])
        res = OptimizeResult(proc, None, [], [])
        h = self.history
        for name in self.schedule:
            measuring = name in self.measurement
            if not measuring:
                e = h.entry(proc, name)
                if e is not None and e.status == "applied" and e.last_speedup is not None \
                        and e.last_speedup < self.non_profit_threshold:
                    h.mark_non_profitable(proc, name)
                if h.is_non_profitable(proc, name):
                    res.skipped.append(name)
                    continue
            ctx = self._ctx(proc)
            PHASE_CALLS["optimize"] += 1
            ir, status, detail = self._run_phase(name, ir, lambda cur: OptimizeMsg(proc, cur, ctx))
            if status == "failed":
                res.failed.append(name)
            elif status == "declined":
                res.declined.append(name)
            elif measuring:
                res.applied.append(name)
            else:
                for key in ctx.assumptions:
                    if self.replacer is not None:
                        self.replacer.register_assumption(key, proc)
                    res.assumptions.append(key)
                _, fresh = h.record_applied(proc, name, detail)
                res.applied.append(name)
                if fresh:
                    res.newly_applied.append(name)
        res.image = lower_image(ir, origin="optimizer", schedule_version=self.schedule_version,
                                phases=tuple(res.applied))
        self.events.append({"clock": self.vm.clock, "kind": "optimize", "proc": proc,
                            "applied": list(res.applied), "new": list(res.newly_applied)})
        return res

    def recompile(self, proc: str) -> ExecImage:
        """Re-apply exactly the phases the history records as applied, in schedule order."""
        ir = build_ssa(self.vm.transport[proc])
        applied = []
        for e in self.history.for_proc(proc):
            if e.status == "applied" and e.phase not in self.phases:
                text = f"recompile {proc!r}: phase {e.phase!r} no longer registered, skipped"
                log.warning(text)
                self.warnings.append(text)
        for name in self.schedule:
            if name in self.measurement:
                detail = None
            else:
                e = self.history.entry(proc, name)
                if e is None or e.status != "applied":
                    continue
                detail = e.detail
            ctx = self._ctx(proc)
            PHASE_CALLS["recompile"] += 1
            ir, status, _ = self._run_phase(name, ir, lambda cur: RecompileMsg(proc, cur, ctx, detail))
            if status == "applied":
                applied.append(name)
                if self.replacer is not None:
                    for key in ctx.assumptions:
                        self.replacer.register_assumption(key, proc)
        image = lower_image(ir, origin="optimizer", schedule_version=self.schedule_version,
                            phases=tuple(applied))
        self.events.append({"clock": self.vm.clock, "kind": "recompile", "proc": proc, "applied": applied})
        return image

    # -- measurement ------------------------------------------------------------

    def note_swap(self, proc: str, old: ProcedureHandle, new: ProcedureHandle, newly_applied: list[str]) -> None:
        """Start a measurement window for the phases first applied in the image just swapped in."""
        if newly_applied:
            self.pending[proc] = PendingMeasure(proc, list(newly_applied), self.vm.handle_snapshot(old), new.id)
        else:
            self.pending.pop(proc, None)

    def measure_pending(self) -> list[tuple[str, float]]:
        done = []
        for proc in sorted(self.pending):
            pm = self.pending[proc]
            if pm.handle not in self.vm.handle_stats:
                continue
            new = self.vm.handle_snapshot(pm.handle)
            if new.invocations < self.min_window:
                continue
            del self.pending[proc]
            s = self.measure_and_attribute(proc, pm.old, new, pm.phases)
            if s is not None:
                done.append((proc, s))
        return done

    def measure_and_attribute(self, proc: str, old: PerfStats, new: PerfStats, phases: list[str]) -> float | None:
        old_mean, new_mean = old.mean_inclusive, new.mean_inclusive
        if old.invocations == 0 or old_mean == 0 or not phases:
            return None
        s = (old_mean - new_mean) / old_mean
        share = s / len(phases)
        for name in phases:
            self.history.fold(name, share)
            e = self.history.entry(proc, name)
            if e is not None:
                e.last_speedup = share
        self.events.append({"clock": self.vm.clock, "kind": "measure", "proc": proc, "speedup": s,
                            "phases": list(phases), "old_mean": old_mean, "new_mean": new_mean})
        return s
