"""Shipped profiling components: path (instrumenting), sampling and derived block profiler."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .. import opcodes as oc
from ..ir import ProcedureIR
from ..similarity import padded_similarity
from .messages import (REGISTER, QUERY, RELEASE, AgeMsg, BlockCntMsg, EdgeCntMsg, MeasureMsg, PathCntMsg,
                       PathSetMsg, ProcHotnessMsg, SimilarityMsg)
from .paths import DEFAULT_CAP, PathCapExceeded, PathPlan, enumerate_paths, place_before_ret, place_on_edge, probe


def decay(v: int, d: float = 0.5) -> int:
    """Scale by ``d``, rounding half away from zero; anything below 1 drops to 0."""
    x = v * d
    if x < 1:
        return 0
    return int(math.floor(x + 0.5))


class ProfilingComponent:
    """Base class: epoch bookkeeping and the similarity answer.

    Subclasses expose live counters through ``procs``/``read``/``write``.
    Aging keeps the pre-age vector as ``previous`` and the decayed vector as
    ``baseline``; similarity compares the baseline with what has accrued since.
    """

    name = "component"

    def __init__(self, decay_factor: float = 0.5):
        self.decay_factor = decay_factor
        self.previous: dict[str, dict] = {}
        self.baseline: dict[str, dict] = {}
        self.last_s: dict[str, float] = {}
        self.mgr = None

    def attach(self, mgr) -> None:
        self.mgr = mgr

    # counters -------------------------------------------------------------
    def procs(self) -> list[str]:
        return []

    def read(self, proc: str) -> dict:
        return {}

    def write(self, proc: str, values: dict) -> None:
        pass

    def knows(self, proc: str) -> bool:
        return proc in self.procs()

    # protocol ---------------------------------------------------------------
    def receive(self, msg) -> None:
        if isinstance(msg, AgeMsg):
            self.on_age()
            msg.handled = True
        elif isinstance(msg, SimilarityMsg):
            if self.knows(msg.proc):
                msg.values[self.name] = self.similarity(msg.proc)
                msg.handled = True
        elif isinstance(msg, MeasureMsg):
            self.on_measure(msg)

    def on_measure(self, msg: MeasureMsg) -> None:
        pass

    def on_age(self) -> None:
        for proc in self.procs():
            cur = self.read(proc)
            self.previous[proc] = dict(cur)
            new = {k: decay(v, self.decay_factor) for k, v in cur.items()}
            self.write(proc, new)
            self.baseline[proc] = dict(new)

    def vectors(self, proc: str) -> tuple[list[int], list[int]]:
        base = self.baseline.get(proc, {})
        cur = self.read(proc)
        keys = sorted(set(base) | set(cur))
        return [base.get(k, 0) for k in keys], [cur.get(k, 0) for k in keys]

    def similarity(self, proc: str) -> float:
        a, b = self.vectors(proc)
        s = padded_similarity(a, b, self.mgr.params) if a else 1.0
        self.last_s[proc] = s
        return s

    def dump(self) -> list[str]:
        lines = []
        for proc in sorted(self.procs()):
            a, b = self.vectors(proc)
            prev = self.previous.get(proc, {})
            pv = [prev.get(k, 0) for k in sorted(prev)]
            s = self.last_s.get(proc)
            stxt = "-" if s is None else f"{s:.6f}"
            lines.append(f"{self.name} {proc} previous={pv} baseline={a} current={b} S={stxt}")
        return lines

    @staticmethod
    def _answer(msg: MeasureMsg, value) -> None:
        if not msg.handled:
            msg.reply = value
            msg.handled = True


# -- path profiler -------------------------------------------------------------

@dataclass
class _Instrumented:
    plan: PathPlan
    base: int  # first path counter
    edge_base: int  # first back-edge counter
    probes: list[int] = field(default_factory=list)


class PathProfiler(ProfilingComponent):
    """Exact acyclic path counts plus back-edge counts, gathered by instrumentation.

    Interest (request code 1) arms the paired instrumentation phase for the
    procedure; probes appear once the optimizer next processes it. With
    ``auto`` every procedure counts as interesting until released.
    """

    name = "path"

    def __init__(self, vm, cap: int = DEFAULT_CAP, auto: bool = False, decay_factor: float = 0.5):
        super().__init__(decay_factor)
        self.vm = vm
        self.cap = cap
        self.auto = auto
        self.interest: set[str] = set()
        self.released: set[str] = set()
        self.declined: set[str] = set()
        self.state: dict[str, _Instrumented] = {}
        self.pending_recompile: set[str] = set()

    def wants(self, proc: str) -> bool:
        if proc in self.declined:
            return False
        return proc in self.interest or (self.auto and proc not in self.released)

    def procs(self) -> list[str]:
        return list(self.state)

    def read(self, proc: str) -> dict:
        st = self.state.get(proc)
        if st is None:
            return {}
        c = self.vm.counters
        out = {("p", i): c[st.base + i] for i in range(st.plan.num_paths)}
        for j, (u, v) in enumerate(st.plan.back_edges):
            out[("e", u, v)] = c[st.edge_base + j]
        return out

    def write(self, proc: str, values: dict) -> None:
        st = self.state[proc]
        c = self.vm.counters
        for i in range(st.plan.num_paths):
            c[st.base + i] = values.get(("p", i), 0)
        for j, (u, v) in enumerate(st.plan.back_edges):
            c[st.edge_base + j] = values.get(("e", u, v), 0)

    def path_count(self, proc: str, pid: int) -> int:
        st = self.state.get(proc)
        if st is None or not 0 <= pid < st.plan.num_paths:
            return 0
        return self.vm.counters[st.base + pid]

    def edge_count(self, proc: str, edge) -> int:
        st = self.state.get(proc)
        if st is None or tuple(edge) not in st.plan.back_edges:
            return 0
        return self.vm.counters[st.edge_base + st.plan.back_edges.index(tuple(edge))]

    def plan(self, proc: str) -> PathPlan | None:
        st = self.state.get(proc)
        return st.plan if st else None

    def on_measure(self, msg: MeasureMsg) -> None:
        if isinstance(msg, (PathCntMsg, EdgeCntMsg)):
            if msg.request_code == REGISTER:
                self.interest.add(msg.proc)
                self.released.discard(msg.proc)
                msg.handled = True
            elif msg.request_code == RELEASE:
                self.release(msg.proc)
                msg.handled = True
            elif isinstance(msg, PathCntMsg):
                self._answer(msg, self.path_count(msg.proc, msg.target))
            else:
                self._answer(msg, self.edge_count(msg.proc, msg.target))
        elif isinstance(msg, PathSetMsg) and msg.request_code == QUERY:
            st = self.state.get(msg.proc)
            self._answer(msg, st.plan.paths_through(msg.target) if st else [])

    def release(self, proc: str) -> None:
        self.interest.discard(proc)
        self.released.add(proc)
        st = self.state.pop(proc, None)
        if st is not None:
            for cid in st.probes:
                self.vm.disable_probe(cid)
            c = self.vm.counters
            for i in range(st.plan.num_paths + len(st.plan.back_edges)):
                c[st.base + i] = 0
            self.baseline.pop(proc, None)
            self.previous.pop(proc, None)
            self.pending_recompile.add(proc)

    def instrument(self, ir: ProcedureIR) -> bool:
        """Insert probes into ``ir``; False when the path cap is exceeded."""
        try:
            plan = enumerate_paths(ir, self.cap)
        except PathCapExceeded:
            self.declined.add(ir.name)
            return False
        vm = self.vm
        st = self.state.get(ir.name)
        if st is not None and st.plan.signature() == plan.signature():
            cids = iter(st.probes)
            reuse = True
        else:
            if st is not None:
                for cid in st.probes:
                    vm.disable_probe(cid)
            base = vm.alloc_counters(plan.num_paths)
            st = _Instrumented(plan, base, vm.alloc_counters(len(plan.back_edges)))
            self.state[ir.name] = st
            reuse = False

        def get(kind, ctr=0, add=0, reset=0) -> int:
            if reuse:
                return next(cids)
            cid = vm.alloc_probe(kind, ctr, add, reset)
            st.probes.append(cid)
            return cid

        for r in plan.returns:
            place_before_ret(ir, r, [probe(get(oc.P_COMMIT, st.base, plan.ret_value(r), 0))])
        for (src, dst), val in sorted(plan.increments().items()):
            place_on_edge(ir, src, dst, [probe(get(oc.P_ADD, 0, val))])
        for j, be in enumerate(plan.back_edges):
            commit = probe(get(oc.P_COMMIT, st.base, plan.exit_value(be), plan.entry_value(be)))
            count = probe(get(oc.P_INC, st.edge_base + j))
            place_on_edge(ir, be[0], be[1], [commit, count])
        return True


# -- sampling profiler -----------------------------------------------------------

class SamplingProfiler(ProfilingComponent):
    """Per-(procedure, block) sample counts from the VM's periodic sampling hook."""

    name = "sampling"

    def __init__(self, vm, decay_factor: float = 0.5):
        super().__init__(decay_factor)
        self.counts: dict[str, dict[str, int]] = {}
        vm.sample_listeners.append(self.on_sample)

    def on_sample(self, proc: str, block: str, clock: int) -> None:
        per = self.counts.setdefault(proc, {})
        per[block] = per.get(block, 0) + 1

    def procs(self) -> list[str]:
        return list(self.counts)

    def read(self, proc: str) -> dict:
        return dict(self.counts.get(proc, {}))

    def write(self, proc: str, values: dict) -> None:
        self.counts[proc] = dict(values)

    def hotness(self, proc: str) -> int:
        return sum(self.counts.get(proc, {}).values())

    def on_measure(self, msg: MeasureMsg) -> None:
        if isinstance(msg, ProcHotnessMsg):
            if msg.request_code == QUERY:
                self._answer(msg, self.hotness(msg.proc))
            else:
                msg.handled = True  # sampling is always on


# -- block profiler ----------------------------------------------------------------

class BlockProfiler(ProfilingComponent):
    """Block execution counts derived by re-broadcasting path queries."""

    name = "block"

    def on_measure(self, msg: MeasureMsg) -> None:
        if not isinstance(msg, BlockCntMsg):
            return
        bus = self.mgr
        if msg.request_code == QUERY:
            ids = bus.broadcast(PathSetMsg(request_code=QUERY, proc=msg.proc, target=msg.target)).reply or []
            total = 0
            for pid in ids:
                total += bus.broadcast(PathCntMsg(request_code=QUERY, proc=msg.proc, target=pid)).reply or 0
            self._answer(msg, total)
        else:
            bus.broadcast(PathCntMsg(request_code=msg.request_code, proc=msg.proc))
            msg.handled = True
