"""Transport form, SSA form, and their validation.

Transport procedures are register-style: a variable may be assigned more than
once, and every use must be preceded by an assignment on every path.
``build_ssa`` turns them into pruned SSA with phi nodes; the resulting
``ProcedureIR`` is printable in the same line grammar, so SSA text can be fed
back through ``parse_transport``.

Parameters of a procedure with ``nparams K`` are named ``a0 .. a{K-1}``.
"""
from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field

INT_MIN = -(1 << 63)
INT_MAX = (1 << 63) - 1
_MASK = (1 << 64) - 1


def wrap(x: int) -> int:
    """Two's-complement wrap to 64 bits."""
    x &= _MASK
    return x - (1 << 64) if x > INT_MAX else x


BINOPS = ("add", "sub", "mul", "div", "cmp_lt", "cmp_eq")
TERMINATORS = ("br", "br_if", "ret")
OPCODES = (
    ("const",) + BINOPS
    + ("call", "call_indirect", "proc_ref", "load_global", "store_global",
       "new_obj", "load_field", "store_field", "profile_inc")
    + TERMINATORS
)
# ops whose only effect is their result; removable when unused
PURE_OPS = frozenset(("const", "add", "sub", "mul", "cmp_lt", "cmp_eq", "proc_ref", "load_global"))

IDENT = r"[A-Za-z_][A-Za-z0-9_.]*"
_IDENT_RE = re.compile(IDENT + r"\Z")


class TransportError(Exception):
    """Invalid transport text or structure; carries an optional source position."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}:{column}: " if line is not None else ""
        super().__init__(where + message)


class SyntaxErr(TransportError):
    pass


class DuplicateName(TransportError):
    pass


class UnresolvedReference(TransportError):
    def __init__(self, name: str, message: str | None = None, line=None, column=None):
        self.name = name
        super().__init__(message or f"unresolved reference {name!r}", line, column)


class MalformedTerminator(TransportError):
    pass


@dataclass
class Instr:
    """One instruction. ``args`` layout depends on ``op``:

    const (int,) | binop (a, b) | call (proc, *vals) | call_indirect (f, *vals)
    proc_ref (proc,) | load_global (g,) | store_global (g, v) | new_obj (k,)
    load_field (o, k) | store_field (o, k, v) | profile_inc (cid,)
    br (label,) | br_if (c, l1, l2) | ret (v,)
    """

    op: str
    dest: str | None = None
    args: tuple = ()

    def uses(self) -> list[str]:
        op, a = self.op, self.args
        if op in BINOPS:
            return [a[0], a[1]]
        if op == "call":
            return list(a[1:])
        if op == "call_indirect":
            return list(a)
        if op == "store_global":
            return [a[1]]
        if op == "load_field":
            return [a[0]]
        if op == "store_field":
            return [a[0], a[2]]
        if op == "br_if":
            return [a[0]]
        if op == "ret":
            return [a[0]]
        return []

    def map_uses(self, fn) -> None:
        op, a = self.op, self.args
        if op in BINOPS:
            self.args = (fn(a[0]), fn(a[1]))
        elif op == "call":
            self.args = (a[0],) + tuple(fn(x) for x in a[1:])
        elif op == "call_indirect":
            self.args = tuple(fn(x) for x in a)
        elif op == "store_global":
            self.args = (a[0], fn(a[1]))
        elif op == "load_field":
            self.args = (fn(a[0]), a[1])
        elif op == "store_field":
            self.args = (fn(a[0]), a[1], fn(a[2]))
        elif op in ("br_if", "ret"):
            self.args = (fn(a[0]),) + a[1:]

    def targets(self) -> list[str]:
        if self.op == "br":
            return [self.args[0]]
        if self.op == "br_if":
            # both arms to the same label is one CFG edge
            return list(dict.fromkeys(self.args[1:]))
        return []

    def map_targets(self, fn) -> None:
        if self.op == "br":
            self.args = (fn(self.args[0]),)
        elif self.op == "br_if":
            self.args = (self.args[0], fn(self.args[1]), fn(self.args[2]))


@dataclass
class Phi:
    dest: str
    incoming: dict[str, str]  # predecessor label -> value name


@dataclass
class BasicBlock:
    label: str
    phis: list[Phi] = field(default_factory=list)
    instructions: list[Instr] = field(default_factory=list)
    terminator: Instr | None = None


@dataclass
class TransportProcedure:
    name: str
    param_count: int
    blocks: list[BasicBlock]
    entry: bool = False
    export: bool = False

    @property
    def params(self) -> list[str]:
        return [f"a{i}" for i in range(self.param_count)]

    def block_map(self) -> dict[str, BasicBlock]:
        return {b.label: b for b in self.blocks}

    def size(self) -> int:
        """Static instruction count (phis excluded, terminators included)."""
        return sum(len(b.instructions) + 1 for b in self.blocks)


@dataclass
class GlobalDecl:
    name: str
    init: int | str  # int literal, or procedure name for ``&proc``

    @property
    def is_proc(self) -> bool:
        return isinstance(self.init, str)


@dataclass
class TransportModule:
    name: str
    globals: list[GlobalDecl] = field(default_factory=list)
    procedures: list[TransportProcedure] = field(default_factory=list)
    imports: list[str] = field(default_factory=list)

    @property
    def exports(self) -> list[str]:
        return [p.name for p in self.procedures if p.export or p.entry]

    @property
    def entry(self) -> TransportProcedure | None:
        for p in self.procedures:
            if p.entry:
                return p
        return None

    def procedure(self, name: str) -> TransportProcedure:
        for p in self.procedures:
            if p.name == name:
                return p
        raise KeyError(name)


# ---------------------------------------------------------------------------
# parsing

_INT = r"-?\d+"
_LINE_PATTERNS = [
    ("module", re.compile(rf"module\s+({IDENT})\Z")),
    ("import", re.compile(rf"import\s+({IDENT})\Z")),
    ("global", re.compile(rf"global\s+({IDENT})\s*=\s*(?:({_INT})|&({IDENT}))\Z")),
    ("proc", re.compile(rf"proc\s+({IDENT})\s+nparams\s+(\d+)((?:\s+(?:entry|export))*)\Z")),
    ("block", re.compile(rf"block\s+({IDENT})\Z")),
    ("const", re.compile(rf"({IDENT})\s*=\s*const\s+({_INT})\Z")),
    ("binop", re.compile(rf"({IDENT})\s*=\s*(add|sub|mul|div|cmp_lt|cmp_eq)\s+({IDENT})\s+({IDENT})\Z")),
    ("phi", re.compile(rf"({IDENT})\s*=\s*phi\s*\[(.*)\]\Z")),
    ("call", re.compile(rf"({IDENT})\s*=\s*call\s+({IDENT})\s*\((.*)\)\Z")),
    ("call_indirect", re.compile(rf"({IDENT})\s*=\s*call_indirect\s+({IDENT})\s*\((.*)\)\Z")),
    ("proc_ref", re.compile(rf"({IDENT})\s*=\s*proc_ref\s+({IDENT})\Z")),
    ("load_global", re.compile(rf"({IDENT})\s*=\s*load_global\s+({IDENT})\Z")),
    ("store_global", re.compile(rf"store_global\s+({IDENT})\s+({IDENT})\Z")),
    ("new_obj", re.compile(rf"({IDENT})\s*=\s*new_obj\s+(\d+)\Z")),
    ("load_field", re.compile(rf"({IDENT})\s*=\s*load_field\s+({IDENT})\s+(\d+)\Z")),
    ("store_field", re.compile(rf"store_field\s+({IDENT})\s+(\d+)\s+({IDENT})\Z")),
    ("profile_inc", re.compile(r"profile_inc\s+(\d+)\Z")),
    ("br", re.compile(rf"br\s+({IDENT})\Z")),
    ("br_if", re.compile(rf"br_if\s+({IDENT})\s+({IDENT})\s+({IDENT})\Z")),
    ("ret", re.compile(rf"ret\s+({IDENT})\Z")),
]
_PHI_ARG = re.compile(rf"\s*({IDENT})\s*:\s*({IDENT})\s*\Z")


def _split_args(text: str, lineno: int, col: int) -> tuple[str, ...]:
    text = text.strip()
    if not text:
        return ()
    out = []
    for part in text.replace(",", " ").split():
        if not _IDENT_RE.match(part):
            raise SyntaxErr(f"bad argument {part!r}", lineno, col)
        out.append(part)
    return tuple(out)


def _parse_line(kind: str, m: re.Match, lineno: int, col: int):
    g = m.groups()
    if kind == "const":
        return Instr("const", g[0], (wrap(int(g[1])),))
    if kind == "binop":
        return Instr(g[1], g[0], (g[2], g[3]))
    if kind == "phi":
        incoming: dict[str, str] = {}
        body = g[1].strip()
        if body:
            for part in body.split(","):
                pm = _PHI_ARG.match(part)
                if not pm:
                    raise SyntaxErr(f"bad phi operand {part.strip()!r}", lineno, col)
                if pm.group(1) in incoming:
                    raise SyntaxErr(f"phi lists predecessor {pm.group(1)!r} twice", lineno, col)
                incoming[pm.group(1)] = pm.group(2)
        return Phi(g[0], incoming)
    if kind == "call":
        return Instr("call", g[0], (g[1],) + _split_args(g[2], lineno, col))
    if kind == "call_indirect":
        return Instr("call_indirect", g[0], (g[1],) + _split_args(g[2], lineno, col))
    if kind in ("proc_ref", "load_global"):
        return Instr(kind, g[0], (g[1],))
    if kind == "store_global":
        return Instr(kind, None, (g[0], g[1]))
    if kind == "new_obj":
        return Instr(kind, g[0], (int(g[1]),))
    if kind == "load_field":
        return Instr(kind, g[0], (g[1], int(g[2])))
    if kind == "store_field":
        return Instr(kind, None, (g[0], int(g[1]), g[2]))
    if kind == "profile_inc":
        return Instr(kind, None, (int(g[0]),))
    if kind == "br":
        return Instr("br", None, (g[0],))
    if kind == "br_if":
        return Instr("br_if", None, (g[0], g[1], g[2]))
    if kind == "ret":
        return Instr("ret", None, (g[0],))
    raise AssertionError(kind)


def parse_transport(text: str, *, check: bool = True) -> TransportModule:
    """Parse transport text into a module and (by default) validate it."""
    module: TransportModule | None = None
    proc: TransportProcedure | None = None
    block: BasicBlock | None = None
    positions: dict[int, tuple[int, int]] = {}

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        stripped = line.strip()
        if not stripped:
            continue
        col = len(line) - len(line.lstrip()) + 1
        for kind, rx in _LINE_PATTERNS:
            m = rx.match(stripped)
            if m:
                break
        else:
            raise SyntaxErr(f"cannot parse {stripped!r}", lineno, col)

        if kind == "module":
            if module is not None:
                raise SyntaxErr("second module header", lineno, col)
            module = TransportModule(m.group(1))
            continue
        if module is None:
            raise SyntaxErr("expected 'module NAME' first", lineno, col)
        if kind == "import":
            module.imports.append(m.group(1))
            continue
        if kind == "global":
            name, lit, ref = m.groups()
            module.globals.append(GlobalDecl(name, wrap(int(lit)) if lit is not None else ref))
            positions[id(module.globals[-1])] = (lineno, col)
            continue
        if kind == "proc":
            flags = m.group(3).split()
            proc = TransportProcedure(m.group(1), int(m.group(2)), [], "entry" in flags, "export" in flags)
            module.procedures.append(proc)
            positions[id(proc)] = (lineno, col)
            block = None
            continue
        if proc is None:
            raise SyntaxErr("instruction outside a procedure", lineno, col)
        if kind == "block":
            if block is not None and block.terminator is None:
                raise MalformedTerminator(f"block {block.label!r} has no terminator", lineno, col)
            block = BasicBlock(m.group(1))
            proc.blocks.append(block)
            positions[id(block)] = (lineno, col)
            continue
        if block is None:
            raise SyntaxErr("instruction before first block", lineno, col)
        if block.terminator is not None:
            raise MalformedTerminator(f"instruction after terminator in block {block.label!r}", lineno, col)
        item = _parse_line(kind, m, lineno, col)
        positions[id(item)] = (lineno, col)
        if isinstance(item, Phi):
            if block.instructions:
                raise SyntaxErr("phi after non-phi instruction", lineno, col)
            block.phis.append(item)
        elif item.op in TERMINATORS:
            block.terminator = item
        else:
            block.instructions.append(item)

    if module is None:
        raise SyntaxErr("empty module")
    for p in module.procedures:
        if p.blocks and p.blocks[-1].terminator is None:
            line, col = positions.get(id(p.blocks[-1]), (None, None))
            raise MalformedTerminator(f"block {p.blocks[-1].label!r} has no terminator", line, col)
    if check:
        validate_module(module, positions)
    return module


# ---------------------------------------------------------------------------
# printing


def format_instr(ins: Instr) -> str:
    op, d, a = ins.op, ins.dest, ins.args
    if op == "const":
        return f"{d} = const {a[0]}"
    if op in BINOPS:
        return f"{d} = {op} {a[0]} {a[1]}"
    if op in ("call", "call_indirect"):
        return f"{d} = {op} {a[0]} ({', '.join(a[1:])})"
    if op in ("proc_ref", "load_global", "new_obj"):
        return f"{d} = {op} {a[0]}"
    if op == "load_field":
        return f"{d} = load_field {a[0]} {a[1]}"
    if op in ("store_global", "br"):
        return f"{op} " + " ".join(str(x) for x in a)
    if op == "store_field":
        return f"store_field {a[0]} {a[1]} {a[2]}"
    return f"{op} " + " ".join(str(x) for x in a)


def format_phi(phi: Phi) -> str:
    inc = ", ".join(f"{lbl}:{v}" for lbl, v in phi.incoming.items())
    return f"{phi.dest} = phi [{inc}]"


def format_procedure(p) -> list[str]:
    flags = (" entry" if p.entry else "") + (" export" if p.export else "")
    lines = [f"proc {p.name} nparams {p.param_count}{flags}"]
    for b in p.blocks:
        lines.append(f"block {b.label}")
        lines += ["  " + format_phi(phi) for phi in b.phis]
        lines += ["  " + format_instr(i) for i in b.instructions]
        lines.append("  " + format_instr(b.terminator))
    return lines


def print_module(m: TransportModule) -> str:
    lines = [f"module {m.name}"]
    lines += [f"import {x}" for x in m.imports]
    for g in m.globals:
        lines.append(f"global {g.name} = " + (f"&{g.init}" if g.is_proc else str(g.init)))
    for p in m.procedures:
        lines += format_procedure(p)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# CFG utilities (shared by transport and SSA forms)


def successors(blocks: list[BasicBlock]) -> dict[str, list[str]]:
    return {b.label: b.terminator.targets() for b in blocks}


def predecessors(blocks: list[BasicBlock]) -> dict[str, list[str]]:
    preds: dict[str, list[str]] = {b.label: [] for b in blocks}
    for b in blocks:
        for t in b.terminator.targets():
            if t in preds:
                preds[t].append(b.label)
    return preds


def reverse_postorder(entry: str, succ: dict[str, list[str]]) -> list[str]:
    seen = {entry}
    order: list[str] = []
    stack = [(entry, iter(succ[entry]))]
    while stack:
        node, it = stack[-1]
        for nxt in it:
            if nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, iter(succ[nxt])))
                break
        else:
            stack.pop()
            order.append(node)
    order.reverse()
    return order


def dominators(entry: str, succ, preds) -> dict[str, str]:
    """Immediate dominators (Cooper-Harvey-Kennedy). Entry maps to itself."""
    rpo = reverse_postorder(entry, succ)
    index = {b: i for i, b in enumerate(rpo)}
    idom = {entry: entry}

    def intersect(a, b):
        while a != b:
            while index[a] > index[b]:
                a = idom[a]
            while index[b] > index[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for b in rpo[1:]:
            done = [p for p in preds[b] if p in idom]
            if not done:
                continue
            new = done[0]
            for p in done[1:]:
                new = intersect(p, new)
            if idom.get(b) != new:
                idom[b] = new
                changed = True
    return idom


def dominates(idom: dict[str, str], a: str, b: str) -> bool:
    while True:
        if a == b:
            return True
        nxt = idom.get(b)
        if nxt is None or nxt == b:
            return False
        b = nxt


def dominance_frontiers(idom, preds) -> dict[str, set[str]]:
    df: dict[str, set[str]] = {b: set() for b in idom}
    for b in idom:
        ps = [p for p in preds[b] if p in idom]
        if len(ps) >= 2:
            for p in ps:
                runner = p
                while runner != idom[b]:
                    df[runner].add(b)
                    runner = idom[runner]
    return df


def dom_tree(idom: dict[str, str], order: list[str]) -> dict[str, list[str]]:
    kids: dict[str, list[str]] = {b: [] for b in idom}
    for b in order:
        if b in idom and idom[b] != b:
            kids[idom[b]].append(b)
    return kids


# ---------------------------------------------------------------------------
# module validation


def _check_procedure(p: TransportProcedure, module_procs: dict, module_globals: set,
                     has_imports: bool, positions: dict) -> None:
    def pos(obj):
        return positions.get(id(obj), (None, None))

    if not p.blocks:
        raise MalformedTerminator(f"procedure {p.name!r} has no blocks", *pos(p))
    labels: dict[str, BasicBlock] = {}
    for b in p.blocks:
        if b.label in labels:
            raise DuplicateName(f"duplicate block label {b.label!r} in {p.name!r}", *pos(b))
        labels[b.label] = b
    for b in p.blocks:
        if b.terminator is None or b.terminator.op not in TERMINATORS:
            raise MalformedTerminator(f"block {b.label!r} lacks a terminator", *pos(b))
        for t in b.terminator.targets():
            if t not in labels:
                raise UnresolvedReference(t, f"branch to undeclared block {t!r}", *pos(b.terminator))

    for b in p.blocks:
        for ins in b.instructions:
            if ins.op in ("call", "proc_ref"):
                target = ins.args[0]
                if target in module_procs:
                    if ins.op == "call" and module_procs[target].param_count != len(ins.args) - 1:
                        raise TransportError(
                            f"call to {target!r} with {len(ins.args) - 1} args, expects "
                            f"{module_procs[target].param_count}", *pos(ins))
                elif not has_imports:
                    raise UnresolvedReference(target, None, *pos(ins))
            elif ins.op in ("load_global", "store_global"):
                if ins.args[0] not in module_globals and not has_imports:
                    raise UnresolvedReference(ins.args[0], None, *pos(ins))
            elif ins.op == "new_obj" and ins.args[0] < 0:
                raise TransportError("negative object size", *pos(ins))

    # every SSA/variable use must be assigned on all paths (definite assignment)
    succ = successors(p.blocks)
    preds = predecessors(p.blocks)
    entry = p.blocks[0].label
    reach = set(reverse_postorder(entry, succ))
    for b in p.blocks:
        if b.label not in reach:
            raise TransportError(f"block {b.label!r} unreachable from entry", *pos(b))
    defined_anywhere = set(p.params)
    for b in p.blocks:
        for phi in b.phis:
            defined_anywhere.add(phi.dest)
        for ins in b.instructions:
            if ins.dest:
                defined_anywhere.add(ins.dest)
    for b in p.blocks:
        for phi in b.phis:
            for lbl, v in phi.incoming.items():
                if v not in defined_anywhere:
                    raise UnresolvedReference(v, None, *pos(phi))
            if set(phi.incoming) != set(preds[b.label]):
                raise TransportError(
                    f"phi {phi.dest!r} operand labels {sorted(phi.incoming)} do not match "
                    f"predecessors {sorted(preds[b.label])}", *pos(phi))
        for ins in b.instructions + [b.terminator]:
            for u in ins.uses():
                if u not in defined_anywhere:
                    raise UnresolvedReference(u, None, *pos(ins))

    universe = frozenset(defined_anywhere)
    out_sets: dict[str, frozenset] = {}
    order = reverse_postorder(entry, succ)
    changed = True
    while changed:
        changed = False
        for lbl in order:
            blk = labels[lbl]
            if lbl == entry:
                cur = set(p.params)
            else:
                ins_ = [out_sets.get(q, universe) for q in preds[lbl]]
                cur = set(frozenset.intersection(*ins_)) if ins_ else set()
            for phi in blk.phis:
                cur.add(phi.dest)
            for ins in blk.instructions:
                if ins.dest:
                    cur.add(ins.dest)
            fz = frozenset(cur)
            if out_sets.get(lbl) != fz:
                out_sets[lbl] = fz
                changed = True
    for lbl in order:
        blk = labels[lbl]
        if lbl == entry:
            cur = set(p.params)
        else:
            cur = set(frozenset.intersection(*[out_sets[q] for q in preds[lbl]]))
        for phi in blk.phis:
            for q, v in phi.incoming.items():
                if v not in out_sets[q]:
                    raise UnresolvedReference(v, f"{v!r} may be unassigned on edge {q}->{lbl}", *pos(phi))
        for phi in blk.phis:
            cur.add(phi.dest)
        for ins in blk.instructions + [blk.terminator]:
            for u in ins.uses():
                if u not in cur:
                    raise UnresolvedReference(u, f"{u!r} may be used before assignment in block {lbl!r}",
                                              *pos(ins))
            if ins.dest:
                cur.add(ins.dest)


def validate_module(m: TransportModule, positions: dict | None = None) -> None:
    positions = positions or {}
    procs: dict[str, TransportProcedure] = {}
    for p in m.procedures:
        if p.name in procs:
            raise DuplicateName(f"duplicate procedure {p.name!r}", *positions.get(id(p), (None, None)))
        procs[p.name] = p
    gnames: set[str] = set()
    for g in m.globals:
        if g.name in gnames:
            raise DuplicateName(f"duplicate global {g.name!r}", *positions.get(id(g), (None, None)))
        gnames.add(g.name)
        if g.is_proc and g.init not in procs and not m.imports:
            raise UnresolvedReference(g.init, None, *positions.get(id(g), (None, None)))
    if sum(1 for p in m.procedures if p.entry) > 1:
        raise TransportError("more than one entry procedure")
    for p in m.procedures:
        _check_procedure(p, procs, gnames, bool(m.imports), positions)


# ---------------------------------------------------------------------------
# SSA form

BUILD_COUNTER = {"builds": 0}


@dataclass
class ProcedureIR:
    """SSA form of one procedure. Phases mutate it in place."""

    name: str
    param_count: int
    blocks: list[BasicBlock]
    entry: bool = False
    export: bool = False

    @property
    def params(self) -> list[str]:
        return [f"a{i}" for i in range(self.param_count)]

    def block_map(self) -> dict[str, BasicBlock]:
        return {b.label: b for b in self.blocks}

    @property
    def cfg(self) -> tuple[dict, dict]:
        return successors(self.blocks), predecessors(self.blocks)

    def value_table(self) -> dict[str, Instr | Phi | None]:
        table: dict[str, Instr | Phi | None] = {a: None for a in self.params}
        for b in self.blocks:
            for phi in b.phis:
                table[phi.dest] = phi
            for ins in b.instructions:
                if ins.dest:
                    table[ins.dest] = ins
        return table

    def copy(self) -> "ProcedureIR":
        return copy.deepcopy(self)

    def fresh_name(self, base: str) -> str:
        taken = set(self.value_table())
        i = 0
        while f"{base}.{i}" in taken:
            i += 1
        return f"{base}.{i}"

    def fresh_label(self, base: str) -> str:
        taken = {b.label for b in self.blocks}
        i = 0
        while f"{base}.{i}" in taken:
            i += 1
        return f"{base}.{i}"

    def size(self) -> int:
        return sum(len(b.instructions) + 1 for b in self.blocks)

    def remove_unreachable(self) -> bool:
        succ = successors(self.blocks)
        live = set(reverse_postorder(self.blocks[0].label, succ))
        if len(live) == len(self.blocks):
            return False
        self.blocks = [b for b in self.blocks if b.label in live]
        for b in self.blocks:
            for phi in b.phis:
                for lbl in [lbl for lbl in phi.incoming if lbl not in live]:
                    del phi.incoming[lbl]
        return True

    def to_transport(self) -> TransportProcedure:
        return TransportProcedure(self.name, self.param_count, copy.deepcopy(self.blocks),
                                  self.entry, self.export)

    def text(self) -> str:
        return "\n".join(format_procedure(self)) + "\n"


def _liveness(blocks: list[BasicBlock], succ, preds) -> dict[str, set[str]]:
    """Live-in variable sets of a (non-SSA) transport procedure."""
    use: dict[str, set] = {}
    defs: dict[str, set] = {}
    for b in blocks:
        u, d = set(), set()
        for phi in b.phis:
            d.add(phi.dest)
        for ins in b.instructions + [b.terminator]:
            for x in ins.uses():
                if x not in d:
                    u.add(x)
            if ins.dest:
                d.add(ins.dest)
        use[b.label], defs[b.label] = u, d
    # phi operands are live-out of the corresponding predecessor
    phi_out: dict[str, set] = {b.label: set() for b in blocks}
    for b in blocks:
        for phi in b.phis:
            for q, v in phi.incoming.items():
                phi_out[q].add(v)
    live_in = {b.label: set() for b in blocks}
    changed = True
    order = list(reversed([b.label for b in blocks]))
    while changed:
        changed = False
        for lbl in order:
            out = set(phi_out[lbl])
            for s in succ[lbl]:
                out |= live_in[s]
            new = use[lbl] | (out - defs[lbl])
            if new != live_in[lbl]:
                live_in[lbl] = new
                changed = True
    return live_in


def build_ssa(p: TransportProcedure) -> ProcedureIR:
    """Pruned SSA construction (dominance frontiers + liveness, then renaming)."""
    BUILD_COUNTER["builds"] += 1
    blocks = copy.deepcopy(p.blocks)
    preds = predecessors(blocks)
    if preds[blocks[0].label]:
        taken = {b.label for b in blocks}
        lbl, i = "entry.pre", 0
        while lbl in taken:
            i += 1
            lbl = f"entry.pre{i}"
        blocks.insert(0, BasicBlock(lbl, [], [], Instr("br", None, (blocks[0].label,))))
        preds = predecessors(blocks)
    succ = successors(blocks)
    entry = blocks[0].label
    order = reverse_postorder(entry, succ)
    bmap = {b.label: b for b in blocks}
    blocks = [bmap[lbl] for lbl in order]

    idom = dominators(entry, succ, preds)
    df = dominance_frontiers(idom, preds)
    live_in = _liveness(blocks, succ, preds)

    def_sites: dict[str, set[str]] = {}
    for b in blocks:
        for phi in b.phis:
            def_sites.setdefault(phi.dest, set()).add(b.label)
        for ins in b.instructions:
            if ins.dest:
                def_sites.setdefault(ins.dest, set()).add(b.label)
    for a in p.params:
        def_sites.setdefault(a, set()).add(entry)

    existing_phi = {b.label: {phi.dest for phi in b.phis} for b in blocks}
    new_phis: dict[str, list[Phi]] = {b.label: [] for b in blocks}
    for var in sorted(def_sites):
        work = sorted(def_sites[var])
        placed: set[str] = set()
        while work:
            x = work.pop()
            for y in sorted(df[x]):
                if y in placed or var in existing_phi[y] or var not in live_in[y]:
                    continue
                placed.add(y)
                new_phis[y].append(Phi(var, {q: var for q in preds[y]}))
                if y not in def_sites[var]:
                    work.append(y)
    for b in blocks:
        b.phis = new_phis[b.label] + b.phis

    counters: dict[str, int] = {}
    stacks: dict[str, list[str]] = {}
    used_names = set(p.params)

    def fresh(var: str) -> str:
        n = counters.get(var, 0)
        while True:
            name = f"{var}.{n}"
            n += 1
            if name not in used_names:
                break
        counters[var] = n
        used_names.add(name)
        stacks.setdefault(var, []).append(name)
        return name

    for a in p.params:
        stacks[a] = [a]
    # collect original names so generated names never collide with them
    for b in blocks:
        for phi in b.phis:
            used_names.add(phi.dest)
        for ins in b.instructions:
            if ins.dest:
                used_names.add(ins.dest)

    kids = dom_tree(idom, order)

    def top(var: str) -> str:
        st = stacks.get(var)
        if not st:
            raise UnresolvedReference(var, f"{var!r} has no reaching definition")
        return st[-1]

    # iterative dominator-tree walk
    stack: list[tuple[str, int, list | None]] = [(entry, 0, None)]
    while stack:
        lbl, state, pushed = stack.pop()
        if state == 1:
            for var in pushed:
                stacks[var].pop()
            continue
        b = bmap[lbl]
        pushed = []
        for phi in b.phis:
            old = phi.dest
            phi.dest = fresh(old)
            pushed.append(old)
        for ins in b.instructions:
            ins.map_uses(top)
            if ins.dest:
                old = ins.dest
                ins.dest = fresh(old)
                pushed.append(old)
        b.terminator.map_uses(top)
        for s in succ[lbl]:
            for phi in bmap[s].phis:
                if lbl in phi.incoming:
                    phi.incoming[lbl] = top(phi.incoming[lbl])
        stack.append((lbl, 1, pushed))
        for k in reversed(kids[lbl]):
            stack.append((k, 0, None))

    # phis are keyed by the original destination until renamed; ensure order
    for b in blocks:
        for phi in b.phis:
            phi.incoming = {q: phi.incoming[q] for q in preds[b.label]}
    return ProcedureIR(p.name, p.param_count, blocks, p.entry, p.export)


# ---------------------------------------------------------------------------
# IR validation


@dataclass(frozen=True)
class Violation:
    kind: str
    block: str | None
    value: str | None
    message: str

    def __str__(self) -> str:
        return self.message


def validate_ir(ir: ProcedureIR) -> list[Violation]:
    """Check SSA invariants; the empty list means the IR is valid."""
    out: list[Violation] = []
    if not ir.blocks:
        return [Violation("empty", None, None, f"{ir.name}: no blocks")]
    labels: dict[str, BasicBlock] = {}
    for b in ir.blocks:
        if b.label in labels:
            out.append(Violation("duplicate-label", b.label, None, f"duplicate block {b.label!r}"))
        labels[b.label] = b
    for b in ir.blocks:
        t = b.terminator
        if t is None or t.op not in TERMINATORS:
            out.append(Violation("terminator", b.label, None, f"block {b.label!r} lacks a terminator"))
            return out
        for ins in b.instructions:
            if ins.op in TERMINATORS:
                out.append(Violation("terminator", b.label, None,
                                     f"terminator {ins.op} inside block {b.label!r}"))
            if ins.op not in OPCODES:
                out.append(Violation("opcode", b.label, ins.dest, f"unknown opcode {ins.op!r}"))
            if ins.op == "profile_inc" and len(ins.args) != 1:
                out.append(Violation("profile", b.label, None, "profile_inc needs one counter id"))
            if ins.op in BINOPS and len(ins.args) != 2:
                out.append(Violation("arity", b.label, ins.dest, f"{ins.op} needs two operands"))
        for tgt in t.targets():
            if tgt not in labels:
                out.append(Violation("branch", b.label, None, f"branch from {b.label!r} to unknown {tgt!r}"))
    if out:
        return out

    succ, preds = successors(ir.blocks), predecessors(ir.blocks)
    entry = ir.blocks[0].label
    if preds[entry]:
        out.append(Violation("entry", entry, None, f"entry block {entry!r} has predecessors"))
    reach = set(reverse_postorder(entry, succ))
    for b in ir.blocks:
        if b.label not in reach:
            out.append(Violation("unreachable", b.label, None, f"block {b.label!r} unreachable"))
    if out:
        return out

    def_block: dict[str, str] = {}
    def_index: dict[str, int] = {}
    for a in ir.params:
        def_block[a] = entry
        def_index[a] = -1
    for b in ir.blocks:
        for phi in b.phis:
            if phi.dest in def_block:
                out.append(Violation("redefinition", b.label, phi.dest, f"{phi.dest!r} defined twice"))
            def_block[phi.dest] = b.label
            def_index[phi.dest] = -1
        for i, ins in enumerate(b.instructions):
            if ins.dest:
                if ins.dest in def_block:
                    out.append(Violation("redefinition", b.label, ins.dest, f"{ins.dest!r} defined twice"))
                def_block[ins.dest] = b.label
                def_index[ins.dest] = i
            elif ins.op not in ("store_global", "store_field", "profile_inc"):
                out.append(Violation("dest", b.label, None, f"{ins.op} without destination"))

    idom = dominators(entry, succ, preds)
    for b in ir.blocks:
        for phi in b.phis:
            if set(phi.incoming) != set(preds[b.label]):
                out.append(Violation("phi", b.label, phi.dest,
                                     f"phi {phi.dest!r} in {b.label!r}: labels {sorted(phi.incoming)} "
                                     f"!= predecessors {sorted(preds[b.label])}"))
                continue
            for q, v in phi.incoming.items():
                if v not in def_block:
                    out.append(Violation("undefined", b.label, v, f"{v!r} used in phi {phi.dest!r} is undefined"))
                elif not dominates(idom, def_block[v], q):
                    out.append(Violation("dominance", b.label, v,
                                         f"{v!r} in phi {phi.dest!r} does not dominate edge {q}->{b.label}"))
        for i, ins in enumerate(b.instructions + [b.terminator]):
            for u in ins.uses():
                if u not in def_block:
                    out.append(Violation("undefined", b.label, u, f"{u!r} used in block {b.label!r} is undefined"))
                    continue
                db = def_block[u]
                if db == b.label:
                    if def_index[u] >= i:
                        out.append(Violation("dominance", b.label, u,
                                             f"{u!r} used before definition in block {b.label!r}"))
                elif not dominates(idom, db, b.label):
                    out.append(Violation("dominance", b.label, u,
                                         f"definition of {u!r} does not dominate its use in block {b.label!r}"))
    return out
