"""Code-generating loader: transport form straight to linked executable images.

The loader does no optimization. Each procedure goes through ``build_ssa`` and
``lower_image`` once; images are linked into the VM's procedure and global
tables and bound to fresh handles.
"""
from __future__ import annotations

from .ir import (DuplicateName, TransportError, TransportModule, UnresolvedReference, build_ssa,
                 parse_transport, validate_module)
from .lowering import LOWER_STATS, ExecImage, lower_image, sequentialize  # noqa: F401
from .vm import VM, ProcedureHandle


class LoadDeferred(Exception):
    """Raised by an extension listener when the load must wait for frames to drain."""


def _resolve(m: TransportModule, vm: VM) -> tuple[dict, set]:
    """Check every external name of ``m`` against itself and its imports."""
    for imp in m.imports:
        if imp not in vm.modules:
            raise UnresolvedReference(imp, f"unknown module {imp!r}")
    procs = {p.name: p.param_count for p in m.procedures}
    globs = {g.name for g in m.globals}
    imported_globals: set[str] = set()
    for imp in m.imports:
        dep = vm.modules[imp]
        for p in dep.procedures:
            procs.setdefault(p.name, p.param_count)
        imported_globals.update(g.name for g in dep.globals)
    globs |= imported_globals
    for g in m.globals:
        if g.is_proc and g.init not in procs:
            raise UnresolvedReference(g.init)
    for p in m.procedures:
        for b in p.blocks:
            for ins in b.instructions:
                if ins.op in ("call", "proc_ref"):
                    if ins.args[0] not in procs:
                        raise UnresolvedReference(ins.args[0])
                    if ins.op == "call" and procs[ins.args[0]] != len(ins.args) - 1:
                        raise TransportError(f"call to {ins.args[0]!r} with wrong arity")
                elif ins.op in ("load_global", "store_global") and ins.args[0] not in globs:
                    raise UnresolvedReference(ins.args[0])
    return procs, imported_globals


def global_writes(m: TransportModule, vm: VM) -> list[str]:
    """Existing globals that ``m`` overwrites at init or may store to from its code."""
    out: list[str] = []
    for g in m.globals:
        if g.name in vm.global_index:
            out.append(g.name)
    for p in m.procedures:
        for b in p.blocks:
            for ins in b.instructions:
                if ins.op == "store_global" and ins.args[0] in vm.global_index and ins.args[0] not in out:
                    out.append(ins.args[0])
    return out


def _load(m: TransportModule, vm: VM, extension: bool) -> list[ProcedureHandle]:
    validate_module(m)
    if m.name in vm.modules:
        raise DuplicateName(f"module {m.name!r} already loaded")
    _, imported_globals = _resolve(m, vm)
    for p in m.procedures:
        if p.name in vm.procedure_table:
            raise DuplicateName(f"procedure {p.name!r} already loaded")
    overwrites = []
    for g in m.globals:
        if g.name in vm.global_index:
            if not (extension and g.name in imported_globals):
                raise DuplicateName(f"global {g.name!r} already defined")
            overwrites.append(g)

    if extension:
        writes = global_writes(m, vm)
        for listener in list(vm.extension_listeners):
            listener(m, writes)  # may raise LoadDeferred before anything changes

    for p in m.procedures:
        vm.ensure_slot(p.name)
    for g in m.globals:
        if g not in overwrites:
            vm.define_global(g.name, 0, owner=m.name)
    handles = []
    for p in m.procedures:
        image = lower_image(build_ssa(p), origin="loader")
        h = vm.new_handle(image)
        vm.bind(p.name, h)
        vm.transport[p.name] = p
        handles.append(h)
    for g in m.globals:
        if g.is_proc:
            vm.set_global(g.name, vm.handle_of(g.init))
        else:
            vm.set_global(g.name, g.init)
    vm.modules[m.name] = m
    vm.log("load", module=m.name, procs=len(handles), extension=int(extension))
    return handles


def load_module(m: TransportModule | str, vm: VM) -> list[ProcedureHandle]:
    """Lower and link every procedure of ``m``; initialize its globals."""
    if isinstance(m, str):
        m = parse_transport(m)
    return _load(m, vm, extension=False)


def load_extension(m: TransportModule | str, vm: VM) -> list[ProcedureHandle]:
    """Load ``m`` into a running VM.

    Globals of imported modules that ``m`` overwrites, and globals its code may
    store to, are reported to ``vm.extension_listeners`` before any state
    changes; a listener raising ``LoadDeferred`` aborts the load untouched.
    """
    if isinstance(m, str):
        m = parse_transport(m)
    return _load(m, vm, extension=True)


__all__ = ["ExecImage", "LoadDeferred", "load_module", "load_extension", "lower_image", "global_writes"]
