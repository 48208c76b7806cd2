"""Acyclic path numbering over a procedure's CFG and the probe plan realizing it.

Back edges (found by depth-first search from the entry) are cut. Each back
edge u->v contributes two dummy edges, ENTRY->v and u->EXIT, so that a path
segment may start at a loop header and end at a latch. Edge values are chosen
so that the sum along any ENTRY->EXIT path is a distinct id in 0..N-1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..ir import BasicBlock, Instr, ProcedureIR, successors

EXIT = "<exit>"
DEFAULT_CAP = 4096


class PathCapExceeded(Exception):
    pass


@dataclass(frozen=True)
class DagEdge:
    src: str
    dst: str  # a block label, or EXIT
    kind: str  # "real" | "entry" (ENTRY->header) | "exit" (latch->EXIT) | "ret"
    back: tuple[str, str] | None = None  # the back edge a dummy edge stands for


@dataclass
class PathPlan:
    proc: str
    entry: str
    num_paths: int
    values: dict[DagEdge, int]
    out_edges: dict[str, list[DagEdge]]
    back_edges: list[tuple[str, str]]
    returns: list[str]
    paths: list[tuple[str, ...]] = field(default_factory=list)

    def signature(self) -> tuple:
        return (self.num_paths, tuple(self.back_edges),
                tuple(sorted((e.src, e.dst, e.kind, v) for e, v in self.values.items())))

    def increments(self) -> dict[tuple[str, str], int]:
        """Nonzero register increments on real edges."""
        return {(e.src, e.dst): v for e, v in self.values.items() if e.kind == "real" and v}

    def entry_value(self, back: tuple[str, str]) -> int:
        return self.values[DagEdge(self.entry, back[1], "entry", back)]

    def exit_value(self, back: tuple[str, str]) -> int:
        return self.values[DagEdge(back[0], EXIT, "exit", back)]

    def ret_value(self, block: str) -> int:
        return self.values[DagEdge(block, EXIT, "ret")]

    def decode(self, pid: int) -> tuple[str, ...]:
        """Blocks executed along path ``pid``."""
        if not 0 <= pid < self.num_paths:
            raise ValueError(f"path id {pid} out of range")
        v, r = self.entry, pid
        blocks: list[str] = []
        first = True
        while v != EXIT:
            edges = self.out_edges[v]
            e = max((e for e in edges if self.values[e] <= r), key=lambda e: self.values[e])
            r -= self.values[e]
            if not (first and e.kind == "entry"):
                blocks.append(v)
            first = False
            v = e.dst
        return tuple(blocks)

    def paths_through(self, block: str) -> list[int]:
        return [pid for pid, p in enumerate(self.paths) if block in p]


def find_back_edges(blocks: list[BasicBlock]) -> list[tuple[str, str]]:
    succ = successors(blocks)
    entry = blocks[0].label
    state: dict[str, int] = {}  # 1 = on stack, 2 = done
    back: list[tuple[str, str]] = []
    stack = [(entry, iter(succ[entry]))]
    state[entry] = 1
    while stack:
        node, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            state[node] = 2
            stack.pop()
        elif state.get(nxt) == 1:
            back.append((node, nxt))
        elif nxt not in state:
            state[nxt] = 1
            stack.append((nxt, iter(succ[nxt])))
    return back


def enumerate_paths(ir: ProcedureIR, cap: int = DEFAULT_CAP) -> PathPlan:
    blocks = ir.blocks
    entry = blocks[0].label
    succ = successors(blocks)
    back = find_back_edges(blocks)
    backset = set(back)
    out: dict[str, list[DagEdge]] = {b.label: [] for b in blocks}
    returns = []
    for b in blocks:
        for t in succ[b.label]:
            if (b.label, t) not in backset:
                out[b.label].append(DagEdge(b.label, t, "real"))
        if b.terminator.op == "ret":
            out[b.label].append(DagEdge(b.label, EXIT, "ret"))
            returns.append(b.label)
    for u, v in back:
        out[u].append(DagEdge(u, EXIT, "exit", (u, v)))
        out[entry].append(DagEdge(entry, v, "entry", (u, v)))
    out[EXIT] = []

    # reverse topological order over the DAG via iterative DFS postorder
    order: list[str] = []
    seen = set()
    stack = [(entry, iter(out[entry]))]
    seen.add(entry)
    while stack:
        node, it = stack[-1]
        e = next(it, None)
        if e is None:
            order.append(node)
            stack.pop()
        elif e.dst not in seen:
            seen.add(e.dst)
            stack.append((e.dst, iter(out[e.dst])))
    num: dict[str, int] = {EXIT: 1}
    values: dict[DagEdge, int] = {}
    for v in order:
        if v == EXIT:
            continue
        total = 0
        for e in out[v]:
            values[e] = total
            total += num[e.dst]
        num[v] = total
        if total > cap:
            raise PathCapExceeded(f"{ir.name}: more than {cap} paths")
    plan = PathPlan(ir.name, entry, num[entry], values, out, back, returns)
    plan.paths = [plan.decode(i) for i in range(plan.num_paths)]
    return plan


# -- probe placement ----------------------------------------------------------

def probe(cid: int) -> Instr:
    return Instr("profile_inc", None, (cid,))


def place_on_edge(ir: ProcedureIR, src: str, dst: str, instrs: list[Instr]) -> None:
    """Insert ``instrs`` so they run exactly when control flows ``src -> dst``."""
    if not instrs:
        return
    succ = successors(ir.blocks)
    bmap = ir.block_map()
    if len(succ[src]) == 1:
        bmap[src].instructions.extend(instrs)
        return
    preds = sum(1 for b in ir.blocks if dst in succ[b.label])
    if preds == 1:
        tb = bmap[dst]
        tb.instructions[0:0] = instrs
        return
    lbl = ir.fresh_label(f"{src}.{dst}")
    nb = BasicBlock(lbl, [], list(instrs), Instr("br", None, (dst,)))
    bmap[src].terminator.map_targets(lambda t: lbl if t == dst else t)
    for phi in bmap[dst].phis:
        phi.incoming[lbl] = phi.incoming.pop(src)
    ir.blocks.append(nb)


def place_before_ret(ir: ProcedureIR, block: str, instrs: list[Instr]) -> None:
    ir.block_map()[block].instructions.extend(instrs)
